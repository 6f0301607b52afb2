#include "unicon/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace unicon::ckpt {

namespace {
constexpr char kMagic[4] = {'U', 'N', 'C', 'N'};
constexpr std::uint32_t kVersion = 1;

const char* encoder_kind_name(model::EncoderKind k) {
    return k == model::EncoderKind::cnn_res2 ? "res2" : "unet";
}
const char* skip_mode_name(model::SkipMode m) {
    return m == model::SkipMode::sum ? "sum" : "concat";
}
const char* hdsc_name(model::HdscPlacement p) {
    switch (p) {
        case model::HdscPlacement::none: return "none";
        case model::HdscPlacement::decoder: return "decoder";
        case model::HdscPlacement::encoder: return "encoder";
        case model::HdscPlacement::encoder_decoder: return "encoder+decoder";
    }
    return "none";
}
const char* family_name(model::CondFamily f) {
    switch (f) {
        case model::CondFamily::none: return "none";
        case model::CondFamily::consa: return "consa";
        case model::CondFamily::film: return "film";
    }
    return "none";
}
}  // namespace

json backbone_to_json(const model::BackboneSpec& spec) {
    return {{"encoder", encoder_kind_name(spec.encoder_kind)},
            {"stage_channels", spec.stage_channels},
            {"skip_mode", skip_mode_name(spec.skip_mode)},
            {"dropout", spec.dropout}};
}

model::BackboneSpec backbone_from_json(const json& j) {
    model::BackboneSpec spec;
    const std::string enc = j.at("encoder").get<std::string>();
    if (enc == "res2")
        spec.encoder_kind = model::EncoderKind::cnn_res2;
    else if (enc == "unet")
        spec.encoder_kind = model::EncoderKind::cnn_plain;
    else
        throw Error(ErrorCode::BadConfig, "unknown encoder kind " + enc);
    spec.stage_channels = j.at("stage_channels").get<std::vector<int>>();
    spec.skip_mode = j.at("skip_mode").get<std::string>() == "sum" ? model::SkipMode::sum
                                                                   : model::SkipMode::concat;
    spec.dropout = j.at("dropout").get<double>();
    return spec;
}

json conditioning_to_json(const model::ConditioningSpec& spec) {
    return {{"family", family_name(spec.family)},
            {"use_age", spec.use_age},
            {"use_loc", spec.use_loc},
            {"hdsc", hdsc_name(spec.hdsc)},
            {"consa_residual", spec.consa_residual},
            {"hid_dim", spec.hid_dim},
            {"heads", spec.heads},
            {"num_ages", spec.num_ages},
            {"dropout", spec.dropout}};
}

model::ConditioningSpec conditioning_from_json(const json& j) {
    model::ConditioningSpec spec;
    const std::string fam = j.at("family").get<std::string>();
    spec.family = fam == "consa" ? model::CondFamily::consa
                                 : (fam == "film" ? model::CondFamily::film
                                                  : model::CondFamily::none);
    spec.use_age = j.at("use_age").get<bool>();
    spec.use_loc = j.at("use_loc").get<bool>();
    const std::string hd = j.at("hdsc").get<std::string>();
    spec.hdsc = hd == "decoder"
                    ? model::HdscPlacement::decoder
                    : (hd == "encoder" ? model::HdscPlacement::encoder
                                       : (hd == "encoder+decoder"
                                              ? model::HdscPlacement::encoder_decoder
                                              : model::HdscPlacement::none));
    spec.consa_residual = j.at("consa_residual").get<bool>();
    spec.hid_dim = j.at("hid_dim").get<int>();
    spec.heads = j.at("heads").get<int>();
    spec.num_ages = j.at("num_ages").get<int>();
    spec.dropout = j.at("dropout").get<double>();
    return spec;
}

void save_checkpoint(const std::string& path, model::SegModel& model, optim::AdamW* opt,
                     const json& meta) {
    json header = meta;
    header["backbone"] = backbone_to_json(model.backbone_spec());
    header["conditioning"] = conditioning_to_json(model.conditioning());
    header["build_seed"] = model.build_seed();
    header["has_optimizer"] = opt != nullptr;
    if (opt) header["adam_steps"] = opt->steps_taken();
    json params = json::array();
    for (nn::Param* p : model.parameters())
        params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    header["params"] = std::move(params);

    const std::string head = header.dump();
    const auto dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
    out.write(kMagic, 4);
    const std::uint32_t ver = kVersion;
    out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const std::uint64_t hlen = head.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));

    auto write_tensor = [&out](const Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    };
    for (nn::Param* p : model.parameters()) write_tensor(p->value);
    if (opt) {
        for (const Tensor& t : opt->moment1()) write_tensor(t);
        for (const Tensor& t : opt->moment2()) write_tensor(t);
    }
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path);
    char magic[4];
    std::uint32_t ver = 0;
    std::uint64_t hlen = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (!in || std::memcmp(magic, kMagic, 4) != 0 || ver != kVersion)
        throw Error(ErrorCode::DecodeError, "not a checkpoint: " + path);
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string head(hlen, '\0');
    in.read(head.data(), static_cast<std::streamsize>(hlen));
    json header;
    try {
        header = json::parse(head);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::DecodeError, std::string("bad checkpoint header: ") + e.what());
    }

    LoadedCheckpoint loaded;
    loaded.model = std::make_unique<model::SegModel>(
        backbone_from_json(header.at("backbone")),
        conditioning_from_json(header.at("conditioning")),
        header.at("build_seed").get<std::uint64_t>());
    loaded.meta = header;
    loaded.has_optimizer = header.value("has_optimizer", false);
    loaded.adam_steps = header.value("adam_steps", static_cast<std::int64_t>(0));

    auto params = loaded.model->parameters();
    const auto& jp = header.at("params");
    if (jp.size() != params.size())
        throw Error(ErrorCode::DecodeError, "checkpoint parameter list mismatch");
    auto read_tensor = [&in, &path](Tensor& t) {
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw Error(ErrorCode::DecodeError, "truncated checkpoint: " + path);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (jp[i].at("name").get<std::string>() != params[i]->name)
            throw Error(ErrorCode::DecodeError,
                        "checkpoint parameter order mismatch at " + params[i]->name);
        read_tensor(params[i]->value);
    }
    if (loaded.has_optimizer) {
        loaded.moment1.reserve(params.size());
        loaded.moment2.reserve(params.size());
        for (auto* p : params) {
            loaded.moment1.emplace_back(p->value.shape());
            read_tensor(loaded.moment1.back());
        }
        for (auto* p : params) {
            loaded.moment2.emplace_back(p->value.shape());
            read_tensor(loaded.moment2.back());
        }
    }
    return loaded;
}

}  // namespace unicon::ckpt

#include "unicon/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace unicon::config {

namespace {

struct KeyDoc {
    const char* key;
    const char* def;
    const char* doc;
};

// Every documented key, its default, and a one-liner for the README table.
const KeyDoc kKeys[] = {
    {"data.train_manifest", "", "path to the training manifest JSON"},
    {"data.test_manifest", "", "path to the evaluation manifest JSON"},
    {"data.checkpoint", "", "checkpoint path for eval/zero-shot/predict"},
    {"crop_h", "256", "crop height in pixels"},
    {"crop_w", "256", "crop width in pixels"},
    {"jitter_max", "0.2", "upper bound of the uniform center jitter"},
    {"jitter_symmetric", "false", "draw jitter from [-max,max] instead of [0,max]"},
    {"tile_overlap", "0.25", "fractional overlap of inference tiles"},
    {"hid_dim", "64", "condition embedding width"},
    {"heads", "4", "attention heads in the ConSA block"},
    {"consa_residual", "false", "residual connection around the ConSA block"},
    {"num_ages", "4", "number of discrete age groups"},
    {"hdsc_placement", "decoder", "decoder | encoder | encoder+decoder | none"},
    {"backbone", "res2", "res2 | unet"},
    {"mode", "none", "conditioning mode (none, consa, consa+hdsc, film, ...)"},
    {"stage_channels", "32,64,128,256,512", "channels per encoder stage"},
    {"dropout", "0.1", "dropout rate in blocks and attention"},
    {"alpha", "0.5", "Dice weight in the compound loss"},
    {"dice_smooth", "1e-5", "additive smoothing in the Dice loss"},
    {"ce_literal", "false", "restrict CE to foreground pixels, as printed"},
    {"train.epochs", "700", "training epochs"},
    {"train.steps_per_epoch", "10", "optimizer steps per epoch"},
    {"train.batch_size", "8", "crops per optimizer step"},
    {"train.lr", "1e-3", "peak learning rate (cosine-annealed to ~0)"},
    {"train.weight_decay", "0.001", "decoupled weight decay"},
    {"train.seed", "1", "training seed (init, sampling, dropout)"},
    {"train.age_sampling", "uniform_age", "uniform_age | uniform_volume"},
    {"train.val_fraction", "0.1", "annotated slices held out for best-checkpoint"},
    {"train.eval_every", "100", "steps between validation passes"},
    {"train.workers", "2", "parallel forward/backward workers"},
    {"phantom.volumes_per_age", "2", "volumes per age and split"},
    {"phantom.seed", "7", "phantom generator seed"},
    {"phantom.z", "64", "phantom slice count"},
    {"phantom.h", "96", "phantom slice height"},
    {"phantom.w", "96", "phantom slice width"},
    {"phantom.noise_sigma", "0.05", "phantom additive noise"},
    {"phantom.annotated_fraction", "0.026", "fraction of annotated slices"},
    {"phantom.mutations", "true", "also emit the mutation cohorts"},
    {"ablate.modes", "none,film,consa_age,consa_age_loc,hdsc_decoder,consa+hdsc",
     "comma-separated conditioning modes"},
    {"predict.slices", "annotated", "annotated | all"},
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

const std::map<std::string, std::string>& Config::defaults() {
    static const std::map<std::string, std::string> map = [] {
        std::map<std::string, std::string> m;
        for (const auto& k : kKeys) m[k.key] = k.def;
        return m;
    }();
    return map;
}

const std::map<std::string, std::string>& Config::docs() {
    static const std::map<std::string, std::string> map = [] {
        std::map<std::string, std::string> m;
        for (const auto& k : kKeys) m[k.key] = k.doc;
        return m;
    }();
    return map;
}

Config::Config() : values_(defaults()) {}

void Config::set(const std::string& key, const std::string& value) {
    if (defaults().find(key) == defaults().end())
        throw Error(ErrorCode::BadConfig, "unknown config key '" + key + "'");
    values_[key] = value;
}

void Config::load_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path);
    std::ifstream in(path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::BadConfig,
                        path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        set(key, trim(line.substr(eq + 1)));
    }
}

void Config::apply_overrides(const std::vector<std::string>& kvs) {
    for (const auto& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::BadConfig, "override '" + kv + "' is not key=value");
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
}

bool Config::has(const std::string& key) const {
    auto it = values_.find(key);
    return it != values_.end() && !it->second.empty();
}

std::string Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        throw Error(ErrorCode::BadConfig, "unknown config key '" + key + "'");
    return it->second;
}

int Config::get_int(const std::string& key) const {
    return static_cast<int>(get_i64(key));
}

std::int64_t Config::get_i64(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::exception&) {
        throw Error(ErrorCode::BadConfig, key + " is not an integer: " + get(key));
    }
}

double Config::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::exception&) {
        throw Error(ErrorCode::BadConfig, key + " is not a number: " + get(key));
    }
}

bool Config::get_bool(const std::string& key) const {
    std::string v = get(key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(ErrorCode::BadConfig, key + " is not a boolean: " + get(key));
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw Error(ErrorCode::BadConfig, key + " has a non-integer entry: " + tok);
        }
    }
    return out;
}

std::map<std::string, std::string> Config::resolved() const { return values_; }

void Config::write_resolved(const std::string& path) const {
    const auto dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
}

}  // namespace unicon::config

#include "unicon/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "unicon/config.hpp"
#include "unicon/phantom.hpp"
#include "unicon/train.hpp"

namespace fs = std::filesystem;

namespace unicon::cli {

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

model::BackboneSpec backbone_from(const config::Config& c) {
    model::BackboneSpec spec;
    const std::string kind = c.get("backbone");
    if (kind == "res2") {
        spec.encoder_kind = model::EncoderKind::cnn_res2;
        spec.skip_mode = model::SkipMode::sum;
    } else if (kind == "unet") {
        spec.encoder_kind = model::EncoderKind::cnn_plain;
        spec.skip_mode = model::SkipMode::concat;
    } else {
        throw Error(ErrorCode::BadConfig, "backbone must be res2 or unet, got " + kind);
    }
    spec.stage_channels = c.get_int_list("stage_channels");
    spec.dropout = c.get_double("dropout");
    return spec;
}

model::HdscPlacement placement_from(const std::string& s) {
    if (s == "decoder") return model::HdscPlacement::decoder;
    if (s == "encoder") return model::HdscPlacement::encoder;
    if (s == "encoder+decoder") return model::HdscPlacement::encoder_decoder;
    if (s == "none") return model::HdscPlacement::none;
    throw Error(ErrorCode::BadConfig, "bad hdsc_placement '" + s + "'");
}

model::ConditioningSpec cond_template_from(const config::Config& c) {
    model::ConditioningSpec t;
    t.hid_dim = c.get_int("hid_dim");
    t.heads = c.get_int("heads");
    t.num_ages = c.get_int("num_ages");
    t.dropout = c.get_double("dropout");
    t.consa_residual = c.get_bool("consa_residual");
    t.hdsc = placement_from(c.get("hdsc_placement"));
    return t;
}

model::ConditioningSpec cond_from(const config::Config& c) {
    const model::ConditioningSpec t = cond_template_from(c);
    model::ConditioningSpec spec = model::parse_mode(
        c.get("mode"), t.hdsc == model::HdscPlacement::none ? model::HdscPlacement::decoder
                                                            : t.hdsc);
    spec.hid_dim = t.hid_dim;
    spec.heads = t.heads;
    spec.num_ages = t.num_ages;
    spec.dropout = t.dropout;
    spec.consa_residual = t.consa_residual;
    return spec;
}

train::TrainConfig train_config_from(const config::Config& c) {
    train::TrainConfig t;
    t.epochs = c.get_i64("train.epochs");
    t.steps_per_epoch = c.get_i64("train.steps_per_epoch");
    t.batch_size = c.get_int("train.batch_size");
    t.lr = c.get_double("train.lr");
    t.weight_decay = c.get_double("train.weight_decay");
    t.seed = static_cast<std::uint64_t>(c.get_i64("train.seed"));
    const std::string sampling = c.get("train.age_sampling");
    if (sampling == "uniform_age")
        t.age_sampling = train::AgeSampling::uniform_age;
    else if (sampling == "uniform_volume")
        t.age_sampling = train::AgeSampling::uniform_volume;
    else
        throw Error(ErrorCode::BadConfig, "bad train.age_sampling '" + sampling + "'");
    t.crop_h = c.get_int("crop_h");
    t.crop_w = c.get_int("crop_w");
    t.jitter_max = c.get_double("jitter_max");
    t.jitter_symmetric = c.get_bool("jitter_symmetric");
    t.loss.alpha = c.get_double("alpha");
    t.loss.dice_smooth = c.get_double("dice_smooth");
    t.loss.ce_literal = c.get_bool("ce_literal");
    t.val_fraction = c.get_double("train.val_fraction");
    t.eval_every = c.get_i64("train.eval_every");
    t.tile_overlap = c.get_double("tile_overlap");
    t.workers = c.get_int("train.workers");
    return t;
}

phantom::CohortConfig phantom_config_from(const config::Config& c) {
    phantom::CohortConfig p;
    p.volumes_per_age = c.get_int("phantom.volumes_per_age");
    p.seed = static_cast<std::uint64_t>(c.get_i64("phantom.seed"));
    p.Z = c.get_int("phantom.z");
    p.H = c.get_int("phantom.h");
    p.W = c.get_int("phantom.w");
    p.noise_sigma = c.get_double("phantom.noise_sigma");
    p.annotated_fraction = c.get_double("phantom.annotated_fraction");
    return p;
}

data::DatasetManifest load_manifests_csv(const std::string& paths) {
    data::DatasetManifest merged;
    bool first = true;
    for (const auto& path : split_csv(paths)) {
        data::DatasetManifest m = data::load_manifest(path);
        if (first) {
            merged = m;
            first = false;
        } else {
            for (auto& v : m.volumes) merged.volumes.push_back(std::move(v));
        }
    }
    if (first) throw Error(ErrorCode::BadConfig, "no manifest paths given");
    return merged;
}

report::Table single_row_table(const std::string& label, double params_m,
                               const train::EvalReport& rep) {
    report::Table table;
    table.columns = report::kAgeColumns;
    report::Table::Row row;
    row.model = label;
    row.params_m = params_m;
    row.scores = rep.by_age.per_age;
    row.avg = rep.by_age.avg;
    table.rows.push_back(std::move(row));
    return table;
}

int run_checked(int argc, const char* const* argv) {
    CLI::App app{"UniCoN conditional segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--out", out_dir, "output directory (default $UNICON_OUTPUT_DIR or .)");
    app.add_option("--set", overrides, "config override key=value (repeatable)");

    // convenience flags that map onto config keys
    std::string opt_seed, opt_manifest, opt_ckpt, opt_modes;
    app.add_option("--seed", opt_seed, "seed shortcut (train.seed and phantom.seed)");
    app.add_option("--manifest", opt_manifest,
                   "manifest shortcut (train/ablate: data.train_manifest, "
                   "otherwise data.test_manifest; comma-separated for zero-shot)");
    app.add_option("--ckpt", opt_ckpt, "checkpoint shortcut (data.checkpoint)");
    app.add_option("--modes", opt_modes, "comma-separated modes (ablate.modes)");
    app.fallthrough();

    auto* gen = app.add_subcommand("gen-phantom", "generate the synthetic multi-age cohort");
    auto* tr = app.add_subcommand("train", "train a model on a manifest");
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint per age");
    auto* zs = app.add_subcommand("zero-shot", "evaluate a checkpoint on unseen cohorts");
    auto* ab = app.add_subcommand("ablate", "train and compare conditioning modes");
    auto* pr = app.add_subcommand("predict", "export predictions for a manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    config::Config cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.apply_overrides(overrides);
    if (!opt_seed.empty()) {
        cfg.set("train.seed", opt_seed);
        cfg.set("phantom.seed", opt_seed);
    }
    if (!opt_ckpt.empty()) cfg.set("data.checkpoint", opt_ckpt);
    if (!opt_modes.empty()) cfg.set("ablate.modes", opt_modes);
    if (!opt_manifest.empty()) {
        if (tr->parsed() || ab->parsed())
            cfg.set("data.train_manifest", opt_manifest);
        else
            cfg.set("data.test_manifest", opt_manifest);
    }

    if (out_dir.empty()) {
        const char* env = std::getenv("UNICON_OUTPUT_DIR");
        out_dir = env && *env ? env : ".";
    }
    fs::create_directories(out_dir);
    cfg.write_resolved((fs::path(out_dir) / "resolved_config.cfg").string());
    const auto snapshot = cfg.resolved();

    if (gen->parsed()) {
        const auto pcfg = phantom_config_from(cfg);
        const std::string data_dir = (fs::path(out_dir) / "phantom").string();
        auto [train_m, test_m] = phantom::generate_cohort(pcfg, data_dir);
        std::cout << "wrote " << train_m.volumes.size() << " train / "
                  << test_m.volumes.size() << " test volumes under " << data_dir << "\n";
        if (cfg.get_bool("phantom.mutations"))
            for (char kind : {'A', 'B', 'C'}) {
                auto m = phantom::generate_mutation(pcfg, kind, data_dir);
                std::cout << "wrote mutation " << kind << " (" << m.volumes.size()
                          << " volumes)\n";
            }
        return 0;
    }

    if (tr->parsed()) {
        if (!cfg.has("data.train_manifest"))
            throw Error(ErrorCode::BadConfig, "train needs data.train_manifest");
        const auto manifest = data::load_manifest(cfg.get("data.train_manifest"));
        const auto tcfg = train_config_from(cfg);
        model::SegModel m(backbone_from(cfg), cond_from(cfg), tcfg.seed);
        const auto result = train::train(manifest, m, tcfg, out_dir, &snapshot);
        std::cout << "final checkpoint: " << result.final_checkpoint << "\n"
                  << "best checkpoint:  " << result.best_checkpoint << " (val dice "
                  << result.best_val << ")\n"
                  << "metric log:       " << result.metric_log << "\n";
        if (cfg.has("data.test_manifest")) {
            const auto test_m = data::load_manifest(cfg.get("data.test_manifest"));
            const auto rep =
                train::evaluate(test_m, m, tcfg.crop_h, tcfg.crop_w, tcfg.tile_overlap);
            const std::string label =
                cfg.get("backbone") + "+" + model::mode_name(m.conditioning());
            report::write_table(
                single_row_table(label, static_cast<double>(m.param_count()) / 1e6, rep),
                out_dir, "results");
            std::cout << "test avg dice:    " << rep.by_age.avg << "\n";
        }
        return 0;
    }

    if (ev->parsed()) {
        if (!cfg.has("data.checkpoint") || !cfg.has("data.test_manifest"))
            throw Error(ErrorCode::BadConfig, "eval needs data.checkpoint and data.test_manifest");
        auto loaded = ckpt::load_checkpoint(cfg.get("data.checkpoint"));
        const auto manifest = data::load_manifest(cfg.get("data.test_manifest"));
        const auto rep = train::evaluate(manifest, *loaded.model, cfg.get_int("crop_h"),
                                         cfg.get_int("crop_w"),
                                         cfg.get_double("tile_overlap"));
        const std::string label = model::mode_name(loaded.model->conditioning());
        report::write_table(
            single_row_table(label,
                             static_cast<double>(loaded.model->param_count()) / 1e6, rep),
            out_dir, "report");
        for (int a = 0; a < 4; ++a)
            std::cout << report::kAgeColumns[static_cast<std::size_t>(a)] << ": "
                      << rep.by_age.per_age[static_cast<std::size_t>(a)] << "\n";
        std::cout << "Avg: " << rep.by_age.avg << "\n";
        return 0;
    }

    if (zs->parsed()) {
        if (!cfg.has("data.checkpoint") || !cfg.has("data.test_manifest"))
            throw Error(ErrorCode::BadConfig,
                        "zero-shot needs data.checkpoint and data.test_manifest");
        const auto merged = load_manifests_csv(cfg.get("data.test_manifest"));
        const auto rep = train::zero_shot_eval(cfg.get("data.checkpoint"), merged,
                                               cfg.get_int("crop_h"), cfg.get_int("crop_w"),
                                               cfg.get_double("tile_overlap"));
        report::Table table;
        report::Table::Row row;
        auto loaded = ckpt::load_checkpoint(cfg.get("data.checkpoint"));
        row.model = model::mode_name(loaded.model->conditioning());
        row.params_m = static_cast<double>(loaded.model->param_count()) / 1e6;
        for (const auto& [cohort, age, dice] : rep.entries) {
            table.columns.push_back(cohort + " " +
                                    report::kAgeColumns[static_cast<std::size_t>(age)]);
            row.scores.push_back(dice);
        }
        row.avg = rep.avg;
        table.rows.push_back(std::move(row));
        report::write_table(table, out_dir, "zero_shot");
        std::cout << "zero-shot avg dice: " << rep.avg << "\n";
        return 0;
    }

    if (ab->parsed()) {
        if (!cfg.has("data.train_manifest") || !cfg.has("data.test_manifest"))
            throw Error(ErrorCode::BadConfig,
                        "ablate needs data.train_manifest and data.test_manifest");
        const auto train_m = data::load_manifest(cfg.get("data.train_manifest"));
        const auto test_m = data::load_manifest(cfg.get("data.test_manifest"));
        const auto modes = split_csv(cfg.get("ablate.modes"));
        if (modes.empty()) throw Error(ErrorCode::BadConfig, "ablate.modes is empty");
        const auto table = train::ablate(train_m, test_m, backbone_from(cfg),
                                         cond_template_from(cfg), modes,
                                         train_config_from(cfg), out_dir);
        std::cout << "ablation rows: " << table.rows.size() << " -> " << out_dir
                  << "/ablation.csv\n";
        return 0;
    }

    if (pr->parsed()) {
        if (!cfg.has("data.checkpoint") || !cfg.has("data.test_manifest"))
            throw Error(ErrorCode::BadConfig,
                        "predict needs data.checkpoint and data.test_manifest");
        auto loaded = ckpt::load_checkpoint(cfg.get("data.checkpoint"));
        const auto manifest = data::load_manifest(cfg.get("data.test_manifest"));
        const std::string pred_dir = (fs::path(out_dir) / "predictions").string();
        const bool all = cfg.get("predict.slices") == "all";
        int written = 0;
        for (const auto& rec : manifest.volumes) {
            if (all) {
                for (int z = 0; z < rec.Z; ++z) {
                    const Tensor pred = train::predict_slice(
                        rec, z, *loaded.model, cfg.get_int("crop_h"), cfg.get_int("crop_w"),
                        cfg.get_double("tile_overlap"));
                    data::save_prediction(rec.volume_id, z, pred, pred_dir);
                    ++written;
                }
            } else {
                for (const auto& ann : rec.annotations) {
                    const Tensor pred = train::predict_slice(
                        rec, ann.z, *loaded.model, cfg.get_int("crop_h"),
                        cfg.get_int("crop_w"), cfg.get_double("tile_overlap"));
                    data::save_prediction(rec.volume_id, ann.z, pred, pred_dir);
                    ++written;
                }
            }
        }
        std::cout << "wrote " << written << " prediction masks to " << pred_dir << "\n";
        return 0;
    }

    return 2;
}

}  // namespace

int run(int argc, const char* const* argv) {
    try {
        return run_checked(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::UsageError || e.code() == ErrorCode::BadConfig ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace unicon::cli

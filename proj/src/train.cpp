#include "unicon/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "unicon/optim.hpp"
#include "unicon/sampling.hpp"

namespace fs = std::filesystem;

namespace unicon::train {

namespace {

struct BatchItem {
    sampling::CropSample sample;
    Rng rng;  // continues the sample's stream; used for dropout
    BatchItem(sampling::CropSample s, Rng r) : sample(std::move(s)), rng(r) {}
};

struct ValSlice {
    std::size_t volume;
    int z;
};

// Deterministic batch for (seed, step): age/volume choice, crop, augmentation.
std::vector<BatchItem> make_batch(const std::vector<data::VolumeRecord>& records,
                                  const std::vector<std::vector<std::size_t>>& by_age,
                                  const std::vector<int>& ages_present,
                                  const TrainConfig& cfg, std::int64_t step) {
    const Rng root(cfg.seed);
    sampling::SampleOptions opts;
    opts.crop_h = cfg.crop_h;
    opts.crop_w = cfg.crop_w;
    opts.jitter_max = cfg.jitter_max;
    opts.jitter_symmetric = cfg.jitter_symmetric;
    opts.training = true;
    opts.augment = true;

    std::vector<BatchItem> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i) {
        Rng rng = root.spawn(static_cast<std::uint64_t>(step) * 4096 +
                             static_cast<std::uint64_t>(i) + 1);
        std::size_t vol_idx;
        if (cfg.age_sampling == AgeSampling::uniform_age) {
            const int age = ages_present[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(ages_present.size()) - 1))];
            const auto& vols = by_age[static_cast<std::size_t>(age)];
            vol_idx = vols[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(vols.size()) - 1))];
        } else {
            vol_idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(records.size()) - 1));
        }
        sampling::CropSample s = sampling::sample_crop(records[vol_idx], opts, rng);
        batch.emplace_back(std::move(s), rng);
    }
    return batch;
}

// Tiled inference for one slice: exact per-tile coordinates, logit averaging,
// 0.5 threshold on the foreground probability.
Tensor tiled_predict(const data::VolumeRecord& rec, int z, model::SegModel& m, int crop_h,
                     int crop_w, double overlap) {
    const int ch = std::min(crop_h, rec.H), cw = std::min(crop_w, rec.W);
    const Tensor slice = data::load_slice(rec, z);
    const auto plan = sampling::tile_plan(rec, z, ch, cw, overlap);
    Tensor logit_sum({2, rec.H, rec.W});
    for (const auto& box : plan) {
        sampling::CropSample s = sampling::extract_crop(slice, std::nullopt, rec, box);
        const Tensor logits = m.forward(s, false, nullptr);
        for (int y = box.t; y < box.b; ++y)
            for (int x = box.l; x < box.r; ++x) {
                logit_sum.at(0, y, x) += logits.at(0, y - box.t, x - box.l);
                logit_sum.at(1, y, x) += logits.at(1, y - box.t, x - box.l);
            }
    }
    Tensor pred({rec.H, rec.W});
    for (int y = 0; y < rec.H; ++y)
        for (int x = 0; x < rec.W; ++x)
            pred.at(y, x) = logit_sum.at(1, y, x) >= logit_sum.at(0, y, x) ? 1.0 : 0.0;
    return pred;
}

double validation_dice(const std::vector<data::VolumeRecord>& records,
                       const std::vector<ValSlice>& val_slices, model::SegModel& m,
                       const TrainConfig& cfg) {
    if (val_slices.empty()) return -1.0;
    double acc = 0.0;
    for (const auto& vs : val_slices) {
        const auto& rec = records[vs.volume];
        const Tensor pred =
            tiled_predict(rec, vs.z, m, cfg.crop_h, cfg.crop_w, cfg.tile_overlap);
        acc += loss::dice_score(pred, data::load_mask(rec, vs.z));
    }
    return acc / static_cast<double>(val_slices.size());
}

}  // namespace

TrainResult train(const data::DatasetManifest& manifest, model::SegModel& m,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::map<std::string, std::string>* config_snapshot,
                  const std::string& resume_from) {
    if (manifest.volumes.empty())
        throw Error(ErrorCode::NoAnnotatedSlices, "empty manifest");
    for (const auto& v : manifest.volumes)
        if (v.annotations.empty()) throw Error(ErrorCode::NoAnnotatedSlices, v.volume_id);

    fs::create_directories(out_dir);

    // Hold out ~val_fraction of annotated slices for best-checkpoint
    // selection; every volume keeps at least one training slice.
    std::vector<data::VolumeRecord> records = manifest.volumes;
    std::vector<ValSlice> val_slices;
    {
        std::vector<ValSlice> all;
        for (std::size_t vi = 0; vi < records.size(); ++vi)
            for (const auto& a : records[vi].annotations) all.push_back({vi, a.z});
        Rng shuffle_rng = Rng(cfg.seed).spawn(0xA11);
        for (std::size_t i = all.size(); i > 1; --i)
            std::swap(all[i - 1], all[static_cast<std::size_t>(shuffle_rng.uniform_int(
                                      0, static_cast<std::int64_t>(i) - 1))]);
        const auto quota = static_cast<std::size_t>(
            std::lround(cfg.val_fraction * static_cast<double>(all.size())));
        std::vector<std::size_t> train_count(records.size());
        for (std::size_t vi = 0; vi < records.size(); ++vi)
            train_count[vi] = records[vi].annotations.size();
        for (const auto& cand : all) {
            if (val_slices.size() >= quota) break;
            if (train_count[cand.volume] <= 1) continue;
            val_slices.push_back(cand);
            --train_count[cand.volume];
        }
        for (const auto& vs : val_slices) {
            auto& ann = records[vs.volume].annotations;
            ann.erase(std::remove_if(ann.begin(), ann.end(),
                                     [&](const data::Annotation& a) { return a.z == vs.z; }),
                      ann.end());
        }
    }

    std::vector<std::vector<std::size_t>> by_age(data::kNumAges);
    for (std::size_t vi = 0; vi < records.size(); ++vi)
        by_age[static_cast<std::size_t>(records[vi].age_index)].push_back(vi);
    std::vector<int> ages_present;
    for (int a = 0; a < data::kNumAges; ++a)
        if (!by_age[static_cast<std::size_t>(a)].empty()) ages_present.push_back(a);

    optim::AdamWConfig ocfg;
    ocfg.weight_decay = cfg.weight_decay;
    optim::AdamW opt(m.parameters(), ocfg);

    std::int64_t start_step = 0;
    double best_val = -1.0;
    if (!resume_from.empty()) {
        ckpt::LoadedCheckpoint loaded = ckpt::load_checkpoint(resume_from);
        m.copy_params_from(*loaded.model);
        if (!loaded.has_optimizer)
            throw Error(ErrorCode::DecodeError, "checkpoint lacks optimizer state");
        opt.moment1() = std::move(loaded.moment1);
        opt.moment2() = std::move(loaded.moment2);
        opt.set_steps_taken(loaded.adam_steps);
        start_step = loaded.meta.at("step").get<std::int64_t>();
        best_val = loaded.meta.value("best_val", -1.0);
    }

    // data-parallel replicas; the caller's model is replica 0
    const int workers = std::max(1, std::min(cfg.workers, cfg.batch_size));
    std::vector<std::unique_ptr<model::SegModel>> extra;
    std::vector<model::SegModel*> replicas{&m};
    for (int w = 1; w < workers; ++w) {
        extra.push_back(std::make_unique<model::SegModel>(m.backbone_spec(), m.conditioning(),
                                                          m.build_seed()));
        extra.back()->copy_params_from(m);
        replicas.push_back(extra.back().get());
    }

    const std::string metric_path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream metrics(metric_path, start_step == 0 ? std::ios::trunc : std::ios::app);
    if (start_step == 0) metrics << "step,lr,loss,dice_val\n";

    ckpt::json snapshot_json;
    if (config_snapshot)
        for (const auto& [k, v] : *config_snapshot) snapshot_json[k] = v;

    auto save = [&](const std::string& name, std::int64_t step, double bv) {
        ckpt::json meta;
        meta["step"] = step;
        meta["epoch"] = cfg.steps_per_epoch > 0 ? step / cfg.steps_per_epoch : 0;
        meta["seed"] = cfg.seed;
        meta["total_steps"] = cfg.total_steps();
        meta["best_val"] = bv;
        meta["rng_state"] = {{"seed", cfg.seed}, {"next_step", step}};
        if (config_snapshot) meta["config"] = snapshot_json;
        const std::string path = (fs::path(out_dir) / name).string();
        ckpt::save_checkpoint(path, m, &opt, meta);
        return path;
    };

    TrainResult result;
    result.metric_log = metric_path;
    const std::int64_t total = cfg.total_steps();
    const std::int64_t stop =
        cfg.limit_steps > 0 ? std::min(total, cfg.limit_steps) : total;

    for (std::int64_t step = start_step; step < stop; ++step) {
        std::vector<BatchItem> batch = make_batch(records, by_age, ages_present, cfg, step);

        for (auto* r : replicas) r->zero_grad();
        std::vector<double> losses(batch.size(), 0.0);
        std::vector<std::exception_ptr> worker_error(static_cast<std::size_t>(workers));

        auto run_worker = [&](int w) {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < batch.size();
                     i += static_cast<std::size_t>(workers)) {
                    auto& item = batch[i];
                    const Tensor logits = replicas[static_cast<std::size_t>(w)]->forward(
                        item.sample, true, &item.rng);
                    Tensor glog;
                    losses[i] = loss::segmentation_loss_logits(logits, *item.sample.mask,
                                                               cfg.loss, &glog);
                    glog.scale_(1.0 / static_cast<double>(batch.size()));
                    replicas[static_cast<std::size_t>(w)]->backward(glog);
                }
            } catch (...) {
                worker_error[static_cast<std::size_t>(w)] = std::current_exception();
            }
        };
        if (workers == 1) {
            run_worker(0);
        } else {
            std::vector<std::thread> threads;
            threads.reserve(static_cast<std::size_t>(workers));
            for (int w = 0; w < workers; ++w) threads.emplace_back(run_worker, w);
            for (auto& t : threads) t.join();
        }
        for (const auto& err : worker_error)
            if (err) std::rethrow_exception(err);

        double loss_mean = 0.0;
        for (double l : losses) loss_mean += l;
        loss_mean /= static_cast<double>(batch.size());
        if (!std::isfinite(loss_mean))
            throw Error(ErrorCode::NaNLoss,
                        "non-finite loss at step " + std::to_string(step) + " (seed " +
                            std::to_string(cfg.seed) + ")");

        for (std::size_t w = 1; w < replicas.size(); ++w) m.add_grads_from(*replicas[w]);

        const double lr = optim::cosine_lr(cfg.lr, step, total);
        opt.step(lr);
        for (std::size_t w = 1; w < replicas.size(); ++w) replicas[w]->copy_params_from(m);

        result.step_losses.push_back(loss_mean);

        std::string val_field;
        const bool do_eval =
            !val_slices.empty() &&
            ((step + 1) % std::max<std::int64_t>(1, cfg.eval_every) == 0 ||
             step + 1 == total);
        if (do_eval) {
            const double vd = validation_dice(manifest.volumes, val_slices, m, cfg);
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", vd);
            val_field = buf;
            if (vd > best_val) {
                best_val = vd;
                result.best_checkpoint = save("best.ckpt", step + 1, best_val);
            }
        }
        char lbuf[64];
        std::snprintf(lbuf, sizeof(lbuf), "%.8f,%.8f", lr, loss_mean);
        metrics << (step + 1) << "," << lbuf << "," << val_field << "\n";
    }
    metrics.close();

    result.best_val = best_val;
    result.final_checkpoint = save("final.ckpt", stop, best_val);
    if (result.best_checkpoint.empty()) result.best_checkpoint = result.final_checkpoint;
    return result;
}

Tensor predict_slice(const data::VolumeRecord& record, int z, model::SegModel& m,
                     int crop_h, int crop_w, double tile_overlap) {
    return tiled_predict(record, z, m, crop_h, crop_w, tile_overlap);
}

EvalReport evaluate(const data::DatasetManifest& manifest, model::SegModel& m, int crop_h,
                    int crop_w, double tile_overlap, int num_ages) {
    EvalReport report;
    std::vector<std::pair<int, double>> scored;
    for (const auto& rec : manifest.volumes) {
        for (const auto& ann : rec.annotations) {
            const Tensor pred = tiled_predict(rec, ann.z, m, crop_h, crop_w, tile_overlap);
            const double d = loss::dice_score(pred, data::load_mask(rec, ann.z));
            report.slices.push_back({rec.volume_id, rec.cohort_tag, rec.age_index, ann.z, d});
            scored.emplace_back(rec.age_index, d);
        }
    }
    report.by_age = loss::aggregate_by_age(scored, num_ages);
    return report;
}

EvalReport evaluate_and_save(const data::DatasetManifest& manifest, model::SegModel& m,
                             int crop_h, int crop_w, double tile_overlap,
                             const std::string& pred_dir) {
    EvalReport report;
    std::vector<std::pair<int, double>> scored;
    for (const auto& rec : manifest.volumes) {
        for (const auto& ann : rec.annotations) {
            const Tensor pred = tiled_predict(rec, ann.z, m, crop_h, crop_w, tile_overlap);
            data::save_prediction(rec.volume_id, ann.z, pred, pred_dir);
            const double d = loss::dice_score(pred, data::load_mask(rec, ann.z));
            report.slices.push_back({rec.volume_id, rec.cohort_tag, rec.age_index, ann.z, d});
            scored.emplace_back(rec.age_index, d);
        }
    }
    report.by_age = loss::aggregate_by_age(scored, 4);
    return report;
}

CohortReport zero_shot_eval(const std::string& checkpoint_path,
                            const data::DatasetManifest& unseen, int crop_h, int crop_w,
                            double tile_overlap) {
    ckpt::LoadedCheckpoint loaded = ckpt::load_checkpoint(checkpoint_path);
    model::SegModel& m = *loaded.model;

    const int trained_ages =
        m.conditioning().needs_context() ? m.conditioning().num_ages : data::kNumAges;
    for (const auto& v : unseen.volumes)
        if (v.age_index < 0 || v.age_index >= trained_ages)
            throw Error(ErrorCode::UnknownAge,
                        v.volume_id + " has age outside the trained set");

    CohortReport report;
    std::map<std::pair<std::string, int>, std::pair<double, int>> groups;
    for (const auto& rec : unseen.volumes) {
        for (const auto& ann : rec.annotations) {
            const Tensor pred = tiled_predict(rec, ann.z, m, crop_h, crop_w, tile_overlap);
            const double d = loss::dice_score(pred, data::load_mask(rec, ann.z));
            report.slices.push_back({rec.volume_id, rec.cohort_tag, rec.age_index, ann.z, d});
            auto& g = groups[{rec.cohort_tag, rec.age_index}];
            g.first += d;
            g.second += 1;
        }
    }
    for (const auto& [key, val] : groups) {
        const double mean = val.first / val.second;
        report.entries.emplace_back(key.first, key.second, mean);
        report.avg += mean;
    }
    if (!report.entries.empty()) report.avg /= static_cast<double>(report.entries.size());
    return report;
}

report::Table ablate(const data::DatasetManifest& train_manifest,
                     const data::DatasetManifest& test_manifest,
                     const model::BackboneSpec& backbone,
                     const model::ConditioningSpec& cond_template,
                     const std::vector<std::string>& modes, const TrainConfig& cfg,
                     const std::string& out_dir) {
    report::Table table;
    table.columns = report::kAgeColumns;
    const model::HdscPlacement placement = cond_template.hdsc == model::HdscPlacement::none
                                               ? model::HdscPlacement::decoder
                                               : cond_template.hdsc;
    for (const auto& mode : modes) {
        model::ConditioningSpec cond = model::parse_mode(mode, placement);
        cond.hid_dim = cond_template.hid_dim;
        cond.heads = cond_template.heads;
        cond.num_ages = cond_template.num_ages;
        cond.dropout = cond_template.dropout;
        cond.consa_residual = cond_template.consa_residual;

        model::SegModel m(backbone, cond, cfg.seed);
        train(train_manifest, m, cfg, (fs::path(out_dir) / ("run_" + mode)).string());
        const EvalReport rep =
            evaluate(test_manifest, m, cfg.crop_h, cfg.crop_w, cfg.tile_overlap);

        report::Table::Row row;
        row.model = mode;
        row.params_m = static_cast<double>(m.param_count()) / 1e6;
        row.scores = rep.by_age.per_age;
        row.avg = rep.by_age.avg;
        table.rows.push_back(std::move(row));
    }
    report::write_table(table, out_dir, "ablation");
    return table;
}

}  // namespace unicon::train

#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "unicon/backbones.hpp"
#include "unicon/checkpoint.hpp"
#include "unicon/data_model.hpp"
#include "unicon/losses.hpp"
#include "unicon/report.hpp"

namespace unicon::train {

enum class AgeSampling { uniform_age, uniform_volume };

struct TrainConfig {
    std::int64_t epochs = 700;
    std::int64_t steps_per_epoch = 10;
    int batch_size = 8;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::uint64_t seed = 1;
    AgeSampling age_sampling = AgeSampling::uniform_age;
    int crop_h = 256, crop_w = 256;
    double jitter_max = 0.2;
    bool jitter_symmetric = false;
    loss::LossConfig loss;
    double val_fraction = 0.1;
    std::int64_t eval_every = 100;
    double tile_overlap = 0.25;
    int workers = 2;
    // Stop after this many steps while keeping the full cosine horizon;
    // 0 runs to completion. Used to emulate interruption before a resume.
    std::int64_t limit_steps = 0;

    std::int64_t total_steps() const { return epochs * steps_per_epoch; }
};

struct TrainResult {
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::string metric_log;
    std::vector<double> step_losses;
    double best_val = -1.0;
};

/// Joint multi-age training: every step draws a batch of augmented crops from
/// annotated slices (age mix per cfg.age_sampling), runs AdamW with cosine
/// annealing, and logs (step, lr, loss, dice_val). Batches are a pure
/// function of (seed, step), so reruns and checkpoint resumes reproduce the
/// trajectory. `resume_from` restarts from a checkpoint written by this
/// function.
TrainResult train(const data::DatasetManifest& manifest, model::SegModel& model,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::map<std::string, std::string>* config_snapshot = nullptr,
                  const std::string& resume_from = "");

struct SliceScore {
    std::string volume_id;
    std::string cohort;
    int age = 0;
    int z = 0;
    double dice = 0.0;
};

struct EvalReport {
    std::vector<SliceScore> slices;
    loss::AgeAggregate by_age;
};

/// Tiled inference over every annotated slice: each tile carries its exact
/// relative center (no jitter), overlapping logits are averaged, the
/// foreground probability is thresholded at 0.5, and Dice is aggregated per
/// age.
EvalReport evaluate(const data::DatasetManifest& manifest, model::SegModel& model,
                    int crop_h, int crop_w, double tile_overlap, int num_ages = 4);

/// Optionally writes predictions next to the report.
EvalReport evaluate_and_save(const data::DatasetManifest& manifest, model::SegModel& model,
                             int crop_h, int crop_w, double tile_overlap,
                             const std::string& pred_dir);

/// Tiled prediction for a single slice (the primitive behind evaluate()).
Tensor predict_slice(const data::VolumeRecord& record, int z, model::SegModel& model,
                     int crop_h, int crop_w, double tile_overlap);

struct CohortReport {
    // (cohort_tag, age, mean dice) in deterministic order
    std::vector<std::tuple<std::string, int, double>> entries;
    double avg = 0.0;
    std::vector<SliceScore> slices;
};

/// Zero-shot transfer: evaluation of a trained checkpoint on unseen cohorts,
/// no parameter updates. Throws UnknownAge when the unseen data carries ages
/// outside the trained set.
CohortReport zero_shot_eval(const std::string& checkpoint_path,
                            const data::DatasetManifest& unseen, int crop_h, int crop_w,
                            double tile_overlap);

/// Trains one model per conditioning mode (shared seed) and emits a
/// Dice-per-age comparison table.
report::Table ablate(const data::DatasetManifest& train_manifest,
                     const data::DatasetManifest& test_manifest,
                     const model::BackboneSpec& backbone,
                     const model::ConditioningSpec& cond_template,
                     const std::vector<std::string>& modes, const TrainConfig& cfg,
                     const std::string& out_dir);

}  // namespace unicon::train

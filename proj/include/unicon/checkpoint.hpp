#pragma once

#include <json.hpp>

#include <memory>
#include <string>

#include "unicon/backbones.hpp"
#include "unicon/optim.hpp"

namespace unicon::ckpt {

using nlohmann::json;

json backbone_to_json(const model::BackboneSpec& spec);
model::BackboneSpec backbone_from_json(const json& j);
json conditioning_to_json(const model::ConditioningSpec& spec);
model::ConditioningSpec conditioning_from_json(const json& j);

/// Single-file archive: JSON header (architecture, training state, resolved
/// config snapshot) followed by raw little-endian doubles for parameters and
/// the optimizer moments.
void save_checkpoint(const std::string& path, model::SegModel& model, optim::AdamW* opt,
                     const json& meta);

struct LoadedCheckpoint {
    std::unique_ptr<model::SegModel> model;
    json meta;
    // optimizer state, aligned with model->parameters(); empty when the
    // checkpoint was saved without an optimizer
    std::vector<Tensor> moment1, moment2;
    std::int64_t adam_steps = 0;
    bool has_optimizer = false;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace unicon::ckpt

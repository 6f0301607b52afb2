#pragma once

#include <array>
#include <optional>

#include "unicon/nn.hpp"

namespace unicon::cond {

/// Age and location vectors for one sample. Vectors are empty when the
/// corresponding input is not used by the active conditioning mode.
struct ConditionContext {
    Tensor age_vec;  // [hid_dim] or empty
    Tensor loc_vec;  // [hid_dim] or empty
    int age_index = -1;
    std::array<double, 3> rel_center{};
};

struct ConSAConfig {
    int hid_dim = 64;
    int heads = 4;
    int in_channels = 0;
    double dropout = 0.1;
    bool residual = false;  // residual around the whole block, default off
    bool use_age = true;
    bool use_loc = true;
};

struct FiLMParams {
    Tensor gamma;  // [C]
    Tensor beta;   // [C]
};

/// Maps the discrete age index and the relative central coordinates to
/// hid_dim vectors via two small MLPs (lookup -> linear -> GELU -> linear
/// for age; linear -> GELU -> linear for location).
class ConditionEncoder : public nn::Module {
public:
    /// Only the requested paths are materialized; an age-only model carries
    /// no location parameters and vice versa.
    ConditionEncoder(std::string name, int num_ages, int hid_dim, std::uint64_t seed,
                     bool use_age = true, bool use_loc = true);

    Tensor embed_age(int age_index);
    Tensor embed_location(const std::array<double, 3>& rel_center);

    /// Accumulates parameter grads; location backward returns the gradient
    /// with respect to the three coordinates.
    void backward_age(const Tensor& g_vec);
    std::array<double, 3> backward_location(const Tensor& g_vec);

    ConditionContext encode(int age_index, const std::array<double, 3>& rel_center,
                            bool use_age, bool use_loc);

    void collect_params(std::vector<nn::Param*>& out) override;

    int num_ages() const { return num_ages_; }
    int hid_dim() const { return hid_; }

private:
    int num_ages_, hid_;
    std::unique_ptr<nn::Embedding> age_table_;
    std::unique_ptr<nn::Linear> age_l1_, age_l2_;
    nn::Gelu age_act_;
    std::unique_ptr<nn::Linear> loc_l1_, loc_l2_;
    nn::Gelu loc_act_;
};

/// Conditioned self-attention at the bottleneck: 1x1 conv c->hid, flatten to
/// tokens, prepend the condition vectors, multi-head self-attention, drop the
/// condition tokens, reshape, 1x1 conv hid->c.
class ConSABlock : public nn::Module {
public:
    ConSABlock(std::string name, const ConSAConfig& cfg, std::uint64_t seed);

    Tensor forward(const Tensor& features, const ConditionContext& ctx, bool train,
                   Rng* rng);
    /// Returns grad w.r.t. features; condition-token grads are written to the
    /// optional outputs (shape [hid_dim]).
    Tensor backward(const Tensor& gy, Tensor* g_age_vec, Tensor* g_loc_vec);

    void collect_params(std::vector<nn::Param*>& out) override;

    const ConSAConfig& config() const { return cfg_; }
    nn::TokenAttention& attention() { return attn_; }

private:
    ConSAConfig cfg_;
    int n_cond_;
    nn::Conv2d in_proj_;
    nn::TokenAttention attn_;
    nn::Conv2d out_proj_;
    int h_ = 0, w_ = 0;
    bool had_input_ = false;
};

/// Per-stage FiLM parameter head: one MLP over the concatenated condition
/// vectors emitting [gamma; beta] for the stage's channel count.
class FiLMGenerator : public nn::Module {
public:
    FiLMGenerator(std::string name, int hid_dim, int stage_channels, bool use_age,
                  bool use_loc, std::uint64_t seed);

    FiLMParams forward(const ConditionContext& ctx);
    void backward(const Tensor& g_gamma, const Tensor& g_beta, Tensor* g_age_vec,
                  Tensor* g_loc_vec);

    void collect_params(std::vector<nn::Param*>& out) override;

    int stage_channels() const { return channels_; }

private:
    int hid_, channels_;
    bool use_age_, use_loc_;
    nn::Linear l1_, l2_;
    nn::Gelu act_;
};

/// out[c] = gamma[c] * features[c] + beta[c].
Tensor film_apply(const Tensor& features, const FiLMParams& p);

/// Backward of film_apply: fills gradients for features, gamma and beta.
Tensor film_apply_backward(const Tensor& gy, const Tensor& features, const FiLMParams& p,
                           Tensor* g_gamma, Tensor* g_beta);

}  // namespace unicon::cond

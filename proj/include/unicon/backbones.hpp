#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unicon/conditioning.hpp"
#include "unicon/hdsc.hpp"
#include "unicon/nn.hpp"
#include "unicon/sampling.hpp"

namespace unicon::model {

enum class EncoderKind { cnn_res2, cnn_plain };
enum class SkipMode { sum, concat };
enum class HdscPlacement { none, decoder, encoder, encoder_decoder };
enum class CondFamily { none, consa, film };

struct BackboneSpec {
    EncoderKind encoder_kind = EncoderKind::cnn_res2;
    std::vector<int> stage_channels = {32, 64, 128, 256, 512};
    SkipMode skip_mode = SkipMode::sum;
    double dropout = 0.1;

    int depth() const { return static_cast<int>(stage_channels.size()); }
};

struct ConditioningSpec {
    CondFamily family = CondFamily::none;
    bool use_age = true;
    bool use_loc = true;
    HdscPlacement hdsc = HdscPlacement::none;
    bool consa_residual = false;
    int hid_dim = 64;
    int heads = 4;
    int num_ages = 4;
    double dropout = 0.1;

    bool is_none() const { return family == CondFamily::none && hdsc == HdscPlacement::none; }
    bool needs_context() const { return family != CondFamily::none; }
};

/// Mode strings accepted by the CLI and the ablation harness.
ConditioningSpec parse_mode(const std::string& mode,
                            HdscPlacement default_placement = HdscPlacement::decoder);
std::string mode_name(const ConditioningSpec& spec);

/// Plain double-conv block with GroupNorm and GELU; the optional FiLM slot
/// modulates the output of the last conv+norm, before the final activation.
class ConvBlock : public nn::Module {
public:
    ConvBlock(std::string name, int in_ch, int out_ch, double dropout, std::uint64_t seed);

    Tensor forward(const Tensor& x, bool train, Rng* rng,
                   const cond::FiLMParams* film = nullptr);
    Tensor backward(const Tensor& gy, Tensor* g_gamma = nullptr, Tensor* g_beta = nullptr);
    void collect_params(std::vector<nn::Param*>& out) override;

private:
    nn::Conv2d c1_;
    nn::GroupNorm n1_;
    nn::Gelu a1_;
    nn::Conv2d c2_;
    nn::GroupNorm n2_;
    nn::Gelu a2_;
    nn::Dropout drop_;
    bool film_active_ = false;
    Tensor pre_film_;
    cond::FiLMParams film_cache_;
};

/// Residual multi-scale block: 1x1 entry conv, hierarchical 3x3 convs over
/// four channel groups, 1x1 fuse, summed shortcut.
class Res2Block : public nn::Module {
public:
    Res2Block(std::string name, int in_ch, int out_ch, double dropout, std::uint64_t seed);

    Tensor forward(const Tensor& x, bool train, Rng* rng);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<nn::Param*>& out) override;

private:
    int in_ch_, out_ch_, gch_;
    nn::Conv2d entry_;
    nn::GroupNorm entry_n_;
    nn::Gelu entry_a_;
    std::vector<std::unique_ptr<nn::Conv2d>> scale_convs_;   // 3 convs on groups 2..4
    std::vector<std::unique_ptr<nn::GroupNorm>> scale_norms_;
    std::vector<std::unique_ptr<nn::Gelu>> scale_acts_;
    nn::Conv2d fuse_;
    nn::GroupNorm fuse_n_;
    std::unique_ptr<nn::Conv2d> shortcut_;  // 1x1 when in_ch != out_ch
    nn::Gelu out_a_;
    nn::Dropout drop_;
    Tensor x_in_;
};

struct DecoderStageConfig {
    int in_ch = 0;       // channels arriving from the deeper stage
    int out_ch = 0;      // this stage's channel count
    SkipMode skip = SkipMode::sum;
    bool hdsc = false;
    bool film = false;
    double dropout = 0.1;
};

/// Upsample + conv, skip merge, optional coordinate concat, conv block with
/// optional FiLM. Standalone so the gradient suite can exercise one stage.
class DecoderStage : public nn::Module {
public:
    DecoderStage(std::string name, const DecoderStageConfig& cfg, int hid_dim, bool film_age,
                 bool film_loc, std::uint64_t seed);

    Tensor forward(const Tensor& x, const Tensor& skip, const hdsc::CoordinateGrid* grid,
                   const cond::ConditionContext* ctx, bool train, Rng* rng);
    /// Returns grad w.r.t. x; writes grad w.r.t. the skip tensor, and
    /// accumulates condition-vector grads when FiLM is active.
    Tensor backward(const Tensor& gy, Tensor* g_skip, Tensor* g_age_vec, Tensor* g_loc_vec);

    void collect_params(std::vector<nn::Param*>& out) override;
    const DecoderStageConfig& config() const { return cfg_; }

    /// Capture hook for the post-skip stage input (before coordinate concat).
    void set_capture(bool on) { capture_ = on; }
    const Tensor& captured_input() const { return captured_; }

private:
    DecoderStageConfig cfg_;
    nn::UpsampleNearest2x up_;
    nn::Conv2d up_conv_;
    ConvBlock block_;
    std::unique_ptr<cond::FiLMGenerator> film_gen_;
    int merged_ch_ = 0;
    bool capture_ = false;
    Tensor captured_;
};

/// U-Net-shaped segmentation model with the conditioning hook points:
/// the bottleneck tensor (ConSA) and each decoder-stage post-skip input
/// (HDSC / FiLM). Input [1,h,w] with h,w divisible by 2^(depth-1);
/// output logits [2,h,w].
class SegModel : public nn::Module {
public:
    SegModel(const BackboneSpec& spec, const ConditioningSpec& cond, std::uint64_t seed);

    Tensor forward(const sampling::CropSample& sample, bool train = false,
                   Rng* rng = nullptr);
    /// Backward from logits gradient; accumulates into parameter grads.
    void backward(const Tensor& g_logits);

    void collect_params(std::vector<nn::Param*>& out) override;

    const BackboneSpec& backbone_spec() const { return spec_; }
    const ConditioningSpec& conditioning() const { return cond_; }
    std::uint64_t build_seed() const { return seed_; }

    /// Copies parameter values from a same-architecture model (by position;
    /// names are asserted equal).
    void copy_params_from(SegModel& other);
    /// Adds the other model's parameter grads into this one.
    void add_grads_from(SegModel& other);

    /// Hook contract: per-stage encoder features, the bottleneck tensor
    /// (where ConSA sits), and each decoder stage's post-skip input (where
    /// HDSC concatenates). Capture is off by default to keep training lean.
    void set_capture_intermediates(bool on) { capture_ = on; }
    const std::vector<Tensor>& encoder_features() const { return enc_feats_; }
    const Tensor& bottleneck() const { return bottleneck_; }
    const std::vector<Tensor>& decoder_inputs() const { return dec_inputs_; }

    /// Test hook: observe the (age_index, rel_center) pairs consumed by
    /// conditioning during forward passes.
    void set_condition_probe(std::function<void(int, std::array<double, 3>)> probe) {
        probe_ = std::move(probe);
    }

    cond::ConSABlock* consa() { return consa_.get(); }

private:
    BackboneSpec spec_;
    ConditioningSpec cond_;
    std::uint64_t seed_;

    std::unique_ptr<nn::Conv2d> stem_;
    std::vector<std::unique_ptr<ConvBlock>> plain_blocks_;
    std::vector<std::unique_ptr<Res2Block>> res2_blocks_;
    std::vector<std::unique_ptr<nn::Conv2d>> down_convs_;
    std::unique_ptr<cond::ConditionEncoder> cond_enc_;
    std::unique_ptr<cond::ConSABlock> consa_;
    std::vector<std::unique_ptr<DecoderStage>> dec_stages_;  // coarse to fine
    std::unique_ptr<nn::Conv2d> head_;

    // per-forward state
    int in_h_ = 0, in_w_ = 0;
    cond::ConditionContext ctx_;
    std::vector<Tensor> skips_;
    std::vector<hdsc::CoordinateGrid> enc_grids_, dec_grids_;
    bool capture_ = false;
    std::vector<Tensor> enc_feats_, dec_inputs_;
    Tensor bottleneck_;
    std::function<void(int, std::array<double, 3>)> probe_;

    Tensor encoder_block_forward(int stage, const Tensor& x, bool train, Rng* rng);
    Tensor encoder_block_backward(int stage, const Tensor& gy);
};

/// Builds an unconditioned backbone. Throws BadSpec for invalid shapes.
std::unique_ptr<SegModel> build_backbone(const BackboneSpec& spec, std::uint64_t seed);

/// Returns a model with the requested conditioning attached, rebuilt from the
/// same seed so shared layers initialize identically. Throws
/// AlreadyConditioned when the input model is not bare.
std::unique_ptr<SegModel> attach_conditioning(const SegModel& base,
                                              const ConditioningSpec& cond);
std::unique_ptr<SegModel> attach_conditioning(const SegModel& base, const std::string& mode);

}  // namespace unicon::model

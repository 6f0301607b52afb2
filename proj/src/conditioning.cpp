#include "unicon/conditioning.hpp"

#include <cmath>

namespace unicon::cond {

namespace {
Rng seeded(std::uint64_t seed, const std::string& name) { return nn::layer_rng(seed, name); }
}  // namespace

// ---------------------------------------------------------------------------
// ConditionEncoder

ConditionEncoder::ConditionEncoder(std::string name, int num_ages, int hid_dim,
                                   std::uint64_t seed, bool use_age, bool use_loc)
    : num_ages_(num_ages), hid_(hid_dim) {
    if (use_age) {
        age_table_ = std::make_unique<nn::Embedding>(
            name + ".age.table", num_ages, hid_dim, seeded(seed, name + ".age.table"));
        age_l1_ = std::make_unique<nn::Linear>(name + ".age.l1", hid_dim, hid_dim,
                                               seeded(seed, name + ".age.l1"));
        age_l2_ = std::make_unique<nn::Linear>(name + ".age.l2", hid_dim, hid_dim,
                                               seeded(seed, name + ".age.l2"));
    }
    if (use_loc) {
        loc_l1_ = std::make_unique<nn::Linear>(name + ".loc.l1", 3, hid_dim,
                                               seeded(seed, name + ".loc.l1"));
        loc_l2_ = std::make_unique<nn::Linear>(name + ".loc.l2", hid_dim, hid_dim,
                                               seeded(seed, name + ".loc.l2"));
    }
    if (!use_age && !use_loc)
        throw Error(ErrorCode::BadSpec, "condition encoder without any inputs");
}

Tensor ConditionEncoder::embed_age(int age_index) {
    if (!age_table_)
        throw Error(ErrorCode::BadSpec, "encoder built without the age path");
    if (age_index < 0 || age_index >= num_ages_)
        throw Error(ErrorCode::UnknownAge,
                    "age index " + std::to_string(age_index) + " outside trained set");
    const Tensor row = age_table_->forward(age_index).reshaped({1, hid_});
    const Tensor h = age_act_.forward(age_l1_->forward(row));
    return age_l2_->forward(h).reshaped({hid_});
}

Tensor ConditionEncoder::embed_location(const std::array<double, 3>& rel_center) {
    if (!loc_l1_)
        throw Error(ErrorCode::BadSpec, "encoder built without the location path");
    for (double c : rel_center)
        if (!(c >= 0.0 && c <= 1.0))
            throw Error(ErrorCode::CoordOutOfRange,
                        "relative coordinate " + std::to_string(c) + " outside [0,1]");
    Tensor in({1, 3});
    in[0] = rel_center[0];
    in[1] = rel_center[1];
    in[2] = rel_center[2];
    const Tensor h = loc_act_.forward(loc_l1_->forward(in));
    return loc_l2_->forward(h).reshaped({hid_});
}

void ConditionEncoder::backward_age(const Tensor& g_vec) {
    Tensor g = age_l2_->backward(g_vec.reshaped({1, hid_}));
    g = age_act_.backward(g);
    g = age_l1_->backward(g);
    age_table_->backward(g.reshaped({hid_}));
}

std::array<double, 3> ConditionEncoder::backward_location(const Tensor& g_vec) {
    Tensor g = loc_l2_->backward(g_vec.reshaped({1, hid_}));
    g = loc_act_.backward(g);
    g = loc_l1_->backward(g);
    return {g[0], g[1], g[2]};
}

ConditionContext ConditionEncoder::encode(int age_index,
                                          const std::array<double, 3>& rel_center,
                                          bool use_age, bool use_loc) {
    ConditionContext ctx;
    ctx.age_index = age_index;
    ctx.rel_center = rel_center;
    if (use_age) ctx.age_vec = embed_age(age_index);
    if (use_loc) ctx.loc_vec = embed_location(rel_center);
    return ctx;
}

void ConditionEncoder::collect_params(std::vector<nn::Param*>& out) {
    if (age_table_) {
        age_table_->collect_params(out);
        age_l1_->collect_params(out);
        age_l2_->collect_params(out);
    }
    if (loc_l1_) {
        loc_l1_->collect_params(out);
        loc_l2_->collect_params(out);
    }
}

// ---------------------------------------------------------------------------
// ConSABlock

ConSABlock::ConSABlock(std::string name, const ConSAConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      n_cond_((cfg.use_age ? 1 : 0) + (cfg.use_loc ? 1 : 0)),
      in_proj_(name + ".in", cfg.in_channels, cfg.hid_dim, 1, 1,
               seeded(seed, name + ".in")),
      attn_(name + ".attn", cfg.hid_dim, cfg.heads, cfg.dropout,
            seeded(seed, name + ".attn")),
      out_proj_(name + ".out", cfg.hid_dim, cfg.in_channels, 1, 1,
                seeded(seed, name + ".out")) {
    if (cfg.hid_dim % cfg.heads != 0)
        throw Error(ErrorCode::BadSpec, "hid_dim must be divisible by heads");
    if (n_cond_ == 0)
        throw Error(ErrorCode::BadSpec, "ConSA needs at least one condition vector");
}

Tensor ConSABlock::forward(const Tensor& features, const ConditionContext& ctx, bool train,
                           Rng* rng) {
    if (features.ndim() != 3 || features.dim(0) != cfg_.in_channels)
        throw Error(ErrorCode::ShapeError, "ConSA input channels mismatch");
    if (cfg_.use_age && ctx.age_vec.numel() != cfg_.hid_dim)
        throw Error(ErrorCode::ShapeError, "age vector missing or wrong length");
    if (cfg_.use_loc && ctx.loc_vec.numel() != cfg_.hid_dim)
        throw Error(ErrorCode::ShapeError, "location vector missing or wrong length");

    h_ = features.dim(1);
    w_ = features.dim(2);
    const int hw = h_ * w_;
    const int hid = cfg_.hid_dim;

    const Tensor z = in_proj_.forward(features);  // [hid, h, w]

    Tensor tokens({hw + n_cond_, hid});
    int row = 0;
    if (cfg_.use_age) {
        for (int d = 0; d < hid; ++d) tokens.at(row, d) = ctx.age_vec[d];
        ++row;
    }
    if (cfg_.use_loc) {
        for (int d = 0; d < hid; ++d) tokens.at(row, d) = ctx.loc_vec[d];
        ++row;
    }
    for (int p = 0; p < hw; ++p)
        for (int d = 0; d < hid; ++d)
            tokens.at(n_cond_ + p, d) = z[static_cast<std::int64_t>(d) * hw + p];

    const Tensor mixed = attn_.forward(tokens, train, rng);

    Tensor patch({hid, h_, w_});
    for (int p = 0; p < hw; ++p)
        for (int d = 0; d < hid; ++d)
            patch[static_cast<std::int64_t>(d) * hw + p] = mixed.at(n_cond_ + p, d);

    Tensor out = out_proj_.forward(patch);
    if (cfg_.residual) out.add_(features);
    had_input_ = true;
    return out;
}

Tensor ConSABlock::backward(const Tensor& gy, Tensor* g_age_vec, Tensor* g_loc_vec) {
    const int hw = h_ * w_;
    const int hid = cfg_.hid_dim;

    Tensor gpatch = out_proj_.backward(gy);

    Tensor gmixed({hw + n_cond_, hid});
    for (int p = 0; p < hw; ++p)
        for (int d = 0; d < hid; ++d)
            gmixed.at(n_cond_ + p, d) = gpatch[static_cast<std::int64_t>(d) * hw + p];
    // condition-token rows of gmixed stay zero: those outputs are discarded

    const Tensor gtokens = attn_.backward(gmixed);

    int row = 0;
    if (cfg_.use_age) {
        if (g_age_vec) {
            *g_age_vec = Tensor({hid});
            for (int d = 0; d < hid; ++d) (*g_age_vec)[d] = gtokens.at(row, d);
        }
        ++row;
    }
    if (cfg_.use_loc) {
        if (g_loc_vec) {
            *g_loc_vec = Tensor({hid});
            for (int d = 0; d < hid; ++d) (*g_loc_vec)[d] = gtokens.at(row, d);
        }
        ++row;
    }

    Tensor gz({hid, h_, w_});
    for (int p = 0; p < hw; ++p)
        for (int d = 0; d < hid; ++d)
            gz[static_cast<std::int64_t>(d) * hw + p] = gtokens.at(n_cond_ + p, d);

    Tensor gfeat = in_proj_.backward(gz);
    if (cfg_.residual) gfeat.add_(gy);
    return gfeat;
}

void ConSABlock::collect_params(std::vector<nn::Param*>& out) {
    in_proj_.collect_params(out);
    attn_.collect_params(out);
    out_proj_.collect_params(out);
}

// ---------------------------------------------------------------------------
// FiLM

FiLMGenerator::FiLMGenerator(std::string name, int hid_dim, int stage_channels, bool use_age,
                             bool use_loc, std::uint64_t seed)
    : hid_(hid_dim),
      channels_(stage_channels),
      use_age_(use_age),
      use_loc_(use_loc),
      l1_(name + ".l1", hid_dim * ((use_age ? 1 : 0) + (use_loc ? 1 : 0)), hid_dim,
          seeded(seed, name + ".l1")),
      l2_(name + ".l2", hid_dim, 2 * stage_channels,
          seeded(seed, name + ".l2")) {
    if (!use_age && !use_loc)
        throw Error(ErrorCode::BadSpec, "FiLM needs at least one condition vector");
    // Start near the identity modulation: small weights, bias (1,0).
    l2_.weight().value.scale_(0.01);
    for (int c = 0; c < channels_; ++c) l2_.bias().value[c] = 1.0;
}

FiLMParams FiLMGenerator::forward(const ConditionContext& ctx) {
    const int k = (use_age_ ? 1 : 0) + (use_loc_ ? 1 : 0);
    Tensor in({1, k * hid_});
    int off = 0;
    if (use_age_) {
        if (ctx.age_vec.numel() != hid_)
            throw Error(ErrorCode::ShapeError, "age vector missing for FiLM");
        for (int d = 0; d < hid_; ++d) in[off + d] = ctx.age_vec[d];
        off += hid_;
    }
    if (use_loc_) {
        if (ctx.loc_vec.numel() != hid_)
            throw Error(ErrorCode::ShapeError, "location vector missing for FiLM");
        for (int d = 0; d < hid_; ++d) in[off + d] = ctx.loc_vec[d];
    }
    const Tensor out = l2_.forward(act_.forward(l1_.forward(in)));
    FiLMParams p;
    p.gamma = Tensor({channels_});
    p.beta = Tensor({channels_});
    for (int c = 0; c < channels_; ++c) {
        p.gamma[c] = out[c];
        p.beta[c] = out[channels_ + c];
    }
    return p;
}

void FiLMGenerator::backward(const Tensor& g_gamma, const Tensor& g_beta, Tensor* g_age_vec,
                             Tensor* g_loc_vec) {
    Tensor gout({1, 2 * channels_});
    for (int c = 0; c < channels_; ++c) {
        gout[c] = g_gamma[c];
        gout[channels_ + c] = g_beta[c];
    }
    Tensor g = l1_.backward(act_.backward(l2_.backward(gout)));
    int off = 0;
    if (use_age_) {
        if (g_age_vec) {
            *g_age_vec = Tensor({hid_});
            for (int d = 0; d < hid_; ++d) (*g_age_vec)[d] = g[off + d];
        }
        off += hid_;
    }
    if (use_loc_ && g_loc_vec) {
        *g_loc_vec = Tensor({hid_});
        for (int d = 0; d < hid_; ++d) (*g_loc_vec)[d] = g[off + d];
    }
}

void FiLMGenerator::collect_params(std::vector<nn::Param*>& out) {
    l1_.collect_params(out);
    l2_.collect_params(out);
}

Tensor film_apply(const Tensor& features, const FiLMParams& p) {
    if (features.ndim() != 3 || features.dim(0) != p.gamma.numel() ||
        !p.gamma.same_shape(p.beta))
        throw Error(ErrorCode::ShapeError, "FiLM channel count mismatch");
    const int c = features.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(features.dim(1)) * features.dim(2);
    Tensor out(features.shape());
    for (int ch = 0; ch < c; ++ch) {
        const double g = p.gamma[ch], b = p.beta[ch];
        const double* src = features.data() + ch * hw;
        double* dst = out.data() + ch * hw;
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = g * src[i] + b;
    }
    return out;
}

Tensor film_apply_backward(const Tensor& gy, const Tensor& features, const FiLMParams& p,
                           Tensor* g_gamma, Tensor* g_beta) {
    const int c = features.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(features.dim(1)) * features.dim(2);
    if (g_gamma) *g_gamma = Tensor({c});
    if (g_beta) *g_beta = Tensor({c});
    Tensor gx(features.shape());
    for (int ch = 0; ch < c; ++ch) {
        const double g = p.gamma[ch];
        const double* gys = gy.data() + ch * hw;
        const double* xs = features.data() + ch * hw;
        double* gxs = gx.data() + ch * hw;
        double acc_g = 0.0, acc_b = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) {
            gxs[i] = gys[i] * g;
            acc_g += gys[i] * xs[i];
            acc_b += gys[i];
        }
        if (g_gamma) (*g_gamma)[ch] = acc_g;
        if (g_beta) (*g_beta)[ch] = acc_b;
    }
    return gx;
}

}  // namespace unicon::cond

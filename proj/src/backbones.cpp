#include "unicon/backbones.hpp"

#include <algorithm>
#include <cmath>

namespace unicon::model {

namespace {

Tensor slice_channels(const Tensor& x, int c0, int c1) {
    const int h = x.dim(1), w = x.dim(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({c1 - c0, h, w});
    std::copy(x.data() + c0 * hw, x.data() + c1 * hw, out.data());
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const int h = a.dim(1), w = a.dim(2);
    Tensor out({a.dim(0) + b.dim(0), h, w});
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// mode strings

ConditioningSpec parse_mode(const std::string& mode, HdscPlacement default_placement) {
    ConditioningSpec s;
    if (mode == "none") return s;
    if (mode == "consa" || mode == "consa_age_loc") {
        s.family = CondFamily::consa;
    } else if (mode == "consa_age") {
        s.family = CondFamily::consa;
        s.use_loc = false;
    } else if (mode == "consa_loc") {
        s.family = CondFamily::consa;
        s.use_age = false;
    } else if (mode == "consa+hdsc") {
        s.family = CondFamily::consa;
        s.hdsc = default_placement;
    } else if (mode == "film" || mode == "film_age_loc") {
        s.family = CondFamily::film;
    } else if (mode == "film_age") {
        s.family = CondFamily::film;
        s.use_loc = false;
    } else if (mode == "film+hdsc") {
        s.family = CondFamily::film;
        s.hdsc = default_placement;
    } else if (mode == "hdsc" || mode == "hdsc_decoder") {
        s.hdsc = HdscPlacement::decoder;
    } else if (mode == "hdsc_encoder") {
        s.hdsc = HdscPlacement::encoder;
    } else if (mode == "hdsc_enc_dec") {
        s.hdsc = HdscPlacement::encoder_decoder;
    } else {
        throw Error(ErrorCode::BadConfig, "unknown conditioning mode '" + mode + "'");
    }
    return s;
}

std::string mode_name(const ConditioningSpec& s) {
    if (s.is_none()) return "none";
    std::string name;
    if (s.family == CondFamily::consa) name = s.use_loc ? (s.use_age ? "consa" : "consa_loc") : "consa_age";
    if (s.family == CondFamily::film) name = s.use_loc ? (s.use_age ? "film" : "film_loc") : "film_age";
    if (s.hdsc != HdscPlacement::none) {
        const char* suffix = s.hdsc == HdscPlacement::decoder
                                 ? "hdsc"
                                 : (s.hdsc == HdscPlacement::encoder ? "hdsc_encoder"
                                                                     : "hdsc_enc_dec");
        name = name.empty() ? suffix : name + "+" + suffix;
    }
    return name;
}

// ---------------------------------------------------------------------------
// ConvBlock

ConvBlock::ConvBlock(std::string name, int in_ch, int out_ch, double dropout,
                     std::uint64_t seed)
    : c1_(name + ".c1", in_ch, out_ch, 3, 1, nn::layer_rng(seed, name + ".c1")),
      n1_(name + ".n1", out_ch),
      c2_(name + ".c2", out_ch, out_ch, 3, 1, nn::layer_rng(seed, name + ".c2")),
      n2_(name + ".n2", out_ch),
      drop_(dropout) {}

Tensor ConvBlock::forward(const Tensor& x, bool train, Rng* rng,
                          const cond::FiLMParams* film) {
    Tensor h = a1_.forward(n1_.forward(c1_.forward(x)));
    Tensor w = n2_.forward(c2_.forward(h));
    film_active_ = film != nullptr;
    if (film_active_) {
        pre_film_ = w;
        film_cache_ = *film;
        w = cond::film_apply(w, *film);
    }
    return drop_.forward(a2_.forward(w), train, rng);
}

Tensor ConvBlock::backward(const Tensor& gy, Tensor* g_gamma, Tensor* g_beta) {
    Tensor g = a2_.backward(drop_.backward(gy));
    if (film_active_)
        g = cond::film_apply_backward(g, pre_film_, film_cache_, g_gamma, g_beta);
    g = c2_.backward(n2_.backward(g));
    return c1_.backward(n1_.backward(a1_.backward(g)));
}

void ConvBlock::collect_params(std::vector<nn::Param*>& out) {
    c1_.collect_params(out);
    n1_.collect_params(out);
    c2_.collect_params(out);
    n2_.collect_params(out);
}

// ---------------------------------------------------------------------------
// Res2Block

Res2Block::Res2Block(std::string name, int in_ch, int out_ch, double dropout,
                     std::uint64_t seed)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      gch_(out_ch / 4),
      entry_(name + ".in", in_ch, out_ch, 1, 1, nn::layer_rng(seed, name + ".in")),
      entry_n_(name + ".inn", out_ch),
      fuse_(name + ".fuse", out_ch, out_ch, 1, 1, nn::layer_rng(seed, name + ".fuse")),
      fuse_n_(name + ".fusen", out_ch),
      drop_(dropout) {
    if (out_ch % 4 != 0)
        throw Error(ErrorCode::BadSpec, "res2 block channels must be divisible by 4");
    for (int i = 0; i < 3; ++i) {
        const std::string cn = name + ".s" + std::to_string(i + 2);
        scale_convs_.push_back(
            std::make_unique<nn::Conv2d>(cn, gch_, gch_, 3, 1, nn::layer_rng(seed, cn)));
        scale_norms_.push_back(std::make_unique<nn::GroupNorm>(cn + "n", gch_));
        scale_acts_.push_back(std::make_unique<nn::Gelu>());
    }
    if (in_ch != out_ch) {
        const std::string sn = name + ".sc";
        shortcut_ =
            std::make_unique<nn::Conv2d>(sn, in_ch, out_ch, 1, 1, nn::layer_rng(seed, sn));
    }
}

Tensor Res2Block::forward(const Tensor& x, bool train, Rng* rng) {
    x_in_ = x;
    const Tensor e = entry_a_.forward(entry_n_.forward(entry_.forward(x)));

    std::vector<Tensor> z(4);
    z[0] = slice_channels(e, 0, gch_);
    Tensor carry = z[0];
    for (int i = 1; i < 4; ++i) {
        Tensor gi = slice_channels(e, i * gch_, (i + 1) * gch_);
        if (i > 1) gi.add_(z[static_cast<std::size_t>(i - 1)]);
        z[static_cast<std::size_t>(i)] = scale_acts_[static_cast<std::size_t>(i - 1)]->forward(
            scale_norms_[static_cast<std::size_t>(i - 1)]->forward(
                scale_convs_[static_cast<std::size_t>(i - 1)]->forward(gi)));
    }
    Tensor zcat = concat_channels(concat_channels(z[0], z[1]), concat_channels(z[2], z[3]));
    Tensor f = fuse_n_.forward(fuse_.forward(zcat));
    Tensor s = shortcut_ ? shortcut_->forward(x) : x;
    f.add_(s);
    return drop_.forward(out_a_.forward(f), train, rng);
}

Tensor Res2Block::backward(const Tensor& gy) {
    Tensor g = out_a_.backward(drop_.backward(gy));
    Tensor gshort = g;  // shortcut branch
    Tensor gzcat = fuse_.backward(fuse_n_.backward(g));

    Tensor ge({out_ch_, gzcat.dim(1), gzcat.dim(2)});
    const std::int64_t hw = static_cast<std::int64_t>(gzcat.dim(1)) * gzcat.dim(2);
    Tensor carry_grad;  // grad flowing from z[i] into the i-1 chain
    for (int i = 3; i >= 1; --i) {
        Tensor gz = slice_channels(gzcat, i * gch_, (i + 1) * gch_);
        if (carry_grad.numel()) gz.add_(carry_grad);
        Tensor gi = scale_convs_[static_cast<std::size_t>(i - 1)]->backward(
            scale_norms_[static_cast<std::size_t>(i - 1)]->backward(
                scale_acts_[static_cast<std::size_t>(i - 1)]->backward(gz)));
        std::copy(gi.data(), gi.data() + gi.numel(), ge.data() + i * gch_ * hw);
        carry_grad = (i > 1) ? gi : Tensor();
    }
    {
        Tensor gz0 = slice_channels(gzcat, 0, gch_);
        if (carry_grad.numel()) gz0.add_(carry_grad);
        std::copy(gz0.data(), gz0.data() + gz0.numel(), ge.data());
    }

    Tensor gx = entry_.backward(entry_n_.backward(entry_a_.backward(ge)));
    if (shortcut_)
        gx.add_(shortcut_->backward(gshort));
    else
        gx.add_(gshort);
    return gx;
}

void Res2Block::collect_params(std::vector<nn::Param*>& out) {
    entry_.collect_params(out);
    entry_n_.collect_params(out);
    for (int i = 0; i < 3; ++i) {
        scale_convs_[static_cast<std::size_t>(i)]->collect_params(out);
        scale_norms_[static_cast<std::size_t>(i)]->collect_params(out);
    }
    fuse_.collect_params(out);
    fuse_n_.collect_params(out);
    if (shortcut_) shortcut_->collect_params(out);
}

// ---------------------------------------------------------------------------
// DecoderStage

DecoderStage::DecoderStage(std::string name, const DecoderStageConfig& cfg, int hid_dim,
                           bool film_age, bool film_loc, std::uint64_t seed)
    : cfg_(cfg),
      up_conv_(name + ".up", cfg.in_ch, cfg.out_ch, 3, 1, nn::layer_rng(seed, name + ".up")),
      block_(name + ".block",
             (cfg.skip == SkipMode::concat ? 2 * cfg.out_ch : cfg.out_ch) + (cfg.hdsc ? 3 : 0),
             cfg.out_ch, cfg.dropout, seed) {
    merged_ch_ = cfg.skip == SkipMode::concat ? 2 * cfg.out_ch : cfg.out_ch;
    if (cfg.film)
        film_gen_ = std::make_unique<cond::FiLMGenerator>(name + ".film", hid_dim, cfg.out_ch,
                                                          film_age, film_loc, seed);
}

Tensor DecoderStage::forward(const Tensor& x, const Tensor& skip,
                             const hdsc::CoordinateGrid* grid,
                             const cond::ConditionContext* ctx, bool train, Rng* rng) {
    Tensor u = up_conv_.forward(up_.forward(x));
    if (u.dim(1) != skip.dim(1) || u.dim(2) != skip.dim(2) || skip.dim(0) != cfg_.out_ch)
        throw Error(ErrorCode::ShapeError, "skip tensor does not match decoder stage");

    Tensor merged;
    if (cfg_.skip == SkipMode::sum) {
        merged = u;
        merged.add_(skip);
    } else {
        merged = concat_channels(u, skip);
    }
    if (capture_) captured_ = merged;
    if (cfg_.hdsc) {
        if (!grid) throw Error(ErrorCode::ShapeError, "decoder stage expects a grid");
        merged = hdsc::concat_coords(merged, *grid);
    }

    if (cfg_.film) {
        if (!ctx) throw Error(ErrorCode::ShapeError, "decoder stage expects a context");
        const cond::FiLMParams p = film_gen_->forward(*ctx);
        return block_.forward(merged, train, rng, &p);
    }
    return block_.forward(merged, train, rng);
}

Tensor DecoderStage::backward(const Tensor& gy, Tensor* g_skip, Tensor* g_age_vec,
                              Tensor* g_loc_vec) {
    Tensor gmerged;
    if (cfg_.film) {
        Tensor gg, gb;
        gmerged = block_.backward(gy, &gg, &gb);
        Tensor ga, gl;
        film_gen_->backward(gg, gb, g_age_vec ? &ga : nullptr, g_loc_vec ? &gl : nullptr);
        if (g_age_vec && ga.numel()) g_age_vec->add_(ga);
        if (g_loc_vec && gl.numel()) g_loc_vec->add_(gl);
    } else {
        gmerged = block_.backward(gy);
    }
    if (cfg_.hdsc) gmerged = slice_channels(gmerged, 0, merged_ch_);

    Tensor gu;
    if (cfg_.skip == SkipMode::sum) {
        if (g_skip) *g_skip = gmerged;
        gu = gmerged;
    } else {
        if (g_skip) *g_skip = slice_channels(gmerged, cfg_.out_ch, 2 * cfg_.out_ch);
        gu = slice_channels(gmerged, 0, cfg_.out_ch);
    }
    return up_.backward(up_conv_.backward(gu));
}

void DecoderStage::collect_params(std::vector<nn::Param*>& out) {
    up_conv_.collect_params(out);
    block_.collect_params(out);
    if (film_gen_) film_gen_->collect_params(out);
}

// ---------------------------------------------------------------------------
// SegModel

SegModel::SegModel(const BackboneSpec& spec, const ConditioningSpec& cond, std::uint64_t seed)
    : spec_(spec), cond_(cond), seed_(seed) {
    const int depth = spec.depth();
    if (depth < 2) throw Error(ErrorCode::BadSpec, "depth must be at least 2");
    for (int c : spec.stage_channels)
        if (c <= 0) throw Error(ErrorCode::BadSpec, "stage channels must be positive");
    if (spec.encoder_kind == EncoderKind::cnn_res2)
        for (int c : spec.stage_channels)
            if (c % 4 != 0)
                throw Error(ErrorCode::BadSpec, "res2 stage channels must be divisible by 4");
    if (cond.family == CondFamily::consa && !cond.use_age && !cond.use_loc)
        throw Error(ErrorCode::BadSpec, "ConSA requires age and/or location conditioning");

    const auto& ch = spec.stage_channels;
    const bool enc_hdsc =
        cond.hdsc == HdscPlacement::encoder || cond.hdsc == HdscPlacement::encoder_decoder;
    const bool dec_hdsc =
        cond.hdsc == HdscPlacement::decoder || cond.hdsc == HdscPlacement::encoder_decoder;

    stem_ = std::make_unique<nn::Conv2d>("stem", 1, ch[0], 3, 1, nn::layer_rng(seed, "stem"));
    for (int i = 0; i < depth; ++i) {
        const std::string name = "enc" + std::to_string(i);
        const int in_ch = ch[static_cast<std::size_t>(i)] + (enc_hdsc ? 3 : 0);
        const int out_ch = ch[static_cast<std::size_t>(i)];
        if (spec.encoder_kind == EncoderKind::cnn_res2)
            res2_blocks_.push_back(
                std::make_unique<Res2Block>(name, in_ch, out_ch, spec.dropout, seed));
        else
            plain_blocks_.push_back(
                std::make_unique<ConvBlock>(name, in_ch, out_ch, spec.dropout, seed));
        if (i + 1 < depth) {
            const std::string dn = "down" + std::to_string(i);
            down_convs_.push_back(std::make_unique<nn::Conv2d>(
                dn, out_ch, ch[static_cast<std::size_t>(i + 1)], 3, 2,
                nn::layer_rng(seed, dn)));
        }
    }

    if (cond.needs_context())
        cond_enc_ = std::make_unique<cond::ConditionEncoder>(
            "cond", cond.num_ages, cond.hid_dim, seed, cond.use_age, cond.use_loc);
    if (cond.family == CondFamily::consa) {
        cond::ConSAConfig cc;
        cc.hid_dim = cond.hid_dim;
        cc.heads = cond.heads;
        cc.in_channels = ch.back();
        cc.dropout = cond.dropout;
        cc.residual = cond.consa_residual;
        cc.use_age = cond.use_age;
        cc.use_loc = cond.use_loc;
        consa_ = std::make_unique<cond::ConSABlock>("consa", cc, seed);
    }

    for (int s = depth - 2; s >= 0; --s) {
        DecoderStageConfig dc;
        dc.in_ch = ch[static_cast<std::size_t>(s + 1)];
        dc.out_ch = ch[static_cast<std::size_t>(s)];
        dc.skip = spec.skip_mode;
        dc.hdsc = dec_hdsc;
        dc.film = cond.family == CondFamily::film;
        dc.dropout = spec.dropout;
        dec_stages_.push_back(std::make_unique<DecoderStage>(
            "dec" + std::to_string(s), dc, cond.hid_dim, cond.use_age, cond.use_loc, seed));
    }

    head_ = std::make_unique<nn::Conv2d>("head", ch[0], 2, 1, 1, nn::layer_rng(seed, "head"));
}

Tensor SegModel::encoder_block_forward(int stage, const Tensor& x, bool train, Rng* rng) {
    if (spec_.encoder_kind == EncoderKind::cnn_res2)
        return res2_blocks_[static_cast<std::size_t>(stage)]->forward(x, train, rng);
    return plain_blocks_[static_cast<std::size_t>(stage)]->forward(x, train, rng);
}

Tensor SegModel::encoder_block_backward(int stage, const Tensor& gy) {
    if (spec_.encoder_kind == EncoderKind::cnn_res2)
        return res2_blocks_[static_cast<std::size_t>(stage)]->backward(gy);
    return plain_blocks_[static_cast<std::size_t>(stage)]->backward(gy);
}

Tensor SegModel::forward(const sampling::CropSample& sample, bool train, Rng* rng) {
    const int depth = spec_.depth();
    if (sample.image.ndim() != 2)
        throw Error(ErrorCode::ShapeError, "sample image must be 2-D");
    in_h_ = sample.image.dim(0);
    in_w_ = sample.image.dim(1);
    const int div = 1 << (depth - 1);
    if (in_h_ % div != 0 || in_w_ % div != 0 || in_h_ < div || in_w_ < div)
        throw Error(ErrorCode::ShapeError,
                    "input size must be divisible by " + std::to_string(div));

    if (!cond_.is_none() && probe_) probe_(sample.age_index, sample.rel_center);
    if (cond_.needs_context())
        ctx_ = cond_enc_->encode(sample.age_index, sample.rel_center, cond_.use_age,
                                 cond_.use_loc);

    const bool enc_hdsc =
        cond_.hdsc == HdscPlacement::encoder || cond_.hdsc == HdscPlacement::encoder_decoder;
    const bool dec_hdsc =
        cond_.hdsc == HdscPlacement::decoder || cond_.hdsc == HdscPlacement::encoder_decoder;

    enc_grids_.clear();
    dec_grids_.clear();
    if (enc_hdsc || dec_hdsc) {
        if (sample.vol_h <= 0 || sample.vol_w <= 0 || sample.vol_z <= 0)
            throw Error(ErrorCode::ShapeError,
                        "HDSC needs the sample's volume dims (vol_h/vol_w/vol_z)");
        if (enc_hdsc)
            for (int i = 0; i < depth; ++i)
                enc_grids_.push_back(hdsc::dense_coords(sample.box, sample.vol_h,
                                                        sample.vol_w, sample.vol_z,
                                                        in_h_ >> i, in_w_ >> i));
        if (dec_hdsc)
            for (int s = depth - 2; s >= 0; --s)
                dec_grids_.push_back(hdsc::dense_coords(sample.box, sample.vol_h,
                                                        sample.vol_w, sample.vol_z,
                                                        in_h_ >> s, in_w_ >> s));
    }

    if (capture_) {
        enc_feats_.clear();
        dec_inputs_.clear();
    }

    Tensor x = stem_->forward(sample.image.reshaped({1, in_h_, in_w_}));
    skips_.assign(static_cast<std::size_t>(depth - 1), Tensor());
    for (int i = 0; i < depth; ++i) {
        if (i > 0) x = down_convs_[static_cast<std::size_t>(i - 1)]->forward(x);
        if (enc_hdsc) x = hdsc::concat_coords(x, enc_grids_[static_cast<std::size_t>(i)]);
        x = encoder_block_forward(i, x, train, rng);
        if (i + 1 < depth) skips_[static_cast<std::size_t>(i)] = x;
        if (capture_) enc_feats_.push_back(x);
    }
    bottleneck_ = x;

    if (consa_) x = consa_->forward(x, ctx_, train, rng);

    for (std::size_t jj = 0; jj < dec_stages_.size(); ++jj) {
        const int s = depth - 2 - static_cast<int>(jj);
        const hdsc::CoordinateGrid* grid =
            dec_hdsc ? &dec_grids_[jj] : nullptr;
        dec_stages_[jj]->set_capture(capture_);
        x = dec_stages_[jj]->forward(x, skips_[static_cast<std::size_t>(s)], grid,
                                     cond_.needs_context() ? &ctx_ : nullptr, train, rng);
        if (capture_) dec_inputs_.push_back(dec_stages_[jj]->captured_input());
    }
    return head_->forward(x);
}

void SegModel::backward(const Tensor& g_logits) {
    const int depth = spec_.depth();
    const bool enc_hdsc =
        cond_.hdsc == HdscPlacement::encoder || cond_.hdsc == HdscPlacement::encoder_decoder;

    Tensor g_age, g_loc;
    if (cond_.needs_context()) {
        if (cond_.use_age) g_age = Tensor({cond_.hid_dim});
        if (cond_.use_loc) g_loc = Tensor({cond_.hid_dim});
    }

    Tensor g = head_->backward(g_logits);
    std::vector<Tensor> gskips(static_cast<std::size_t>(depth - 1));
    for (int jj = static_cast<int>(dec_stages_.size()) - 1; jj >= 0; --jj) {
        const int s = depth - 2 - jj;
        g = dec_stages_[static_cast<std::size_t>(jj)]->backward(
            g, &gskips[static_cast<std::size_t>(s)], cond_.use_age ? &g_age : nullptr,
            cond_.use_loc ? &g_loc : nullptr);
    }

    if (consa_) {
        Tensor ga, gl;
        g = consa_->backward(g, cond_.use_age ? &ga : nullptr, cond_.use_loc ? &gl : nullptr);
        if (ga.numel()) g_age.add_(ga);
        if (gl.numel()) g_loc.add_(gl);
    }

    for (int i = depth - 1; i >= 0; --i) {
        g = encoder_block_backward(i, g);
        if (enc_hdsc) g = slice_channels(g, 0, g.dim(0) - 3);
        if (i > 0) {
            g = down_convs_[static_cast<std::size_t>(i - 1)]->backward(g);
            g.add_(gskips[static_cast<std::size_t>(i - 1)]);
        }
    }
    stem_->backward(g);

    if (cond_.needs_context()) {
        if (cond_.use_age) cond_enc_->backward_age(g_age);
        if (cond_.use_loc) cond_enc_->backward_location(g_loc);
    }
}

void SegModel::collect_params(std::vector<nn::Param*>& out) {
    stem_->collect_params(out);
    for (auto& b : plain_blocks_) b->collect_params(out);
    for (auto& b : res2_blocks_) b->collect_params(out);
    for (auto& d : down_convs_) d->collect_params(out);
    if (cond_enc_) cond_enc_->collect_params(out);
    if (consa_) consa_->collect_params(out);
    for (auto& d : dec_stages_) d->collect_params(out);
    head_->collect_params(out);
}

void SegModel::copy_params_from(SegModel& other) {
    auto dst = parameters();
    auto src = other.parameters();
    if (dst.size() != src.size())
        throw Error(ErrorCode::ShapeError, "model parameter sets differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i]->name != src[i]->name || !dst[i]->value.same_shape(src[i]->value))
            throw Error(ErrorCode::ShapeError, "parameter mismatch at " + dst[i]->name);
        dst[i]->value = src[i]->value;
    }
}

void SegModel::add_grads_from(SegModel& other) {
    auto dst = parameters();
    auto src = other.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i]->grad.add_(src[i]->grad);
}

std::unique_ptr<SegModel> build_backbone(const BackboneSpec& spec, std::uint64_t seed) {
    return std::make_unique<SegModel>(spec, ConditioningSpec{}, seed);
}

std::unique_ptr<SegModel> attach_conditioning(const SegModel& base,
                                              const ConditioningSpec& cond) {
    if (!base.conditioning().is_none())
        throw Error(ErrorCode::AlreadyConditioned, "model already carries conditioning");
    return std::make_unique<SegModel>(base.backbone_spec(), cond, base.build_seed());
}

std::unique_ptr<SegModel> attach_conditioning(const SegModel& base, const std::string& mode) {
    return attach_conditioning(base, parse_mode(mode));
}

}  // namespace unicon::model

#include "unicon/nn.hpp"

#include <Eigen/Core>

#include <cmath>

namespace unicon::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::vector<Param*> Module::parameters() {
    std::vector<Param*> out;
    collect_params(out);
    return out;
}

void Module::zero_grad() {
    for (Param* p : parameters()) p->grad.zero();
}

std::int64_t Module::param_count() {
    std::int64_t n = 0;
    for (Param* p : parameters()) n += p->value.numel();
    return n;
}

Rng layer_rng(std::uint64_t seed, const std::string& name) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return Rng(Rng::mix(seed ^ h));
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int in, int out, Rng rng)
    : in_(in), out_(out), w_(name + ".w", {out, in}), b_(name + ".b", {out}) {
    const double std = std::sqrt(1.0 / in);
    for (std::int64_t i = 0; i < w_.value.numel(); ++i) w_.value[i] = rng.normal(0.0, std);
}

Tensor Linear::forward(const Tensor& x) {
    if (x.ndim() != 2 || x.dim(1) != in_)
        throw Error(ErrorCode::ShapeError, w_.name + ": bad input to linear");
    x_ = x;
    const int t = x.dim(0);
    Tensor y({t, out_});
    CMapMat xm(x.data(), t, in_);
    CMapMat wm(w_.value.data(), out_, in_);
    MapMat ym(y.data(), t, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < out_; ++j) y.at(i, j) += b_.value[j];
    return y;
}

Tensor Linear::backward(const Tensor& gy) {
    const int t = x_.dim(0);
    CMapMat gym(gy.data(), t, out_);
    CMapMat xm(x_.data(), t, in_);
    MapMat gwm(w_.grad.data(), out_, in_);
    gwm.noalias() += gym.transpose() * xm;
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < out_; ++j) b_.grad[j] += gy.at(i, j);
    Tensor gx({t, in_});
    MapMat gxm(gx.data(), t, in_);
    CMapMat wm(w_.value.data(), out_, in_);
    gxm.noalias() = gym * wm;
    return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, Rng rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      k_(kernel),
      stride_(stride),
      pad_(kernel / 2),
      w_(name + ".w", {out_ch, in_ch * kernel * kernel}),
      b_(name + ".b", {out_ch}) {
    const double std = std::sqrt(2.0 / (in_ch * kernel * kernel));
    for (std::int64_t i = 0; i < w_.value.numel(); ++i) w_.value[i] = rng.normal(0.0, std);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.ndim() != 3 || x.dim(0) != in_ch_)
        throw Error(ErrorCode::ShapeError, w_.name + ": bad input to conv");
    ih_ = x.dim(1);
    iw_ = x.dim(2);
    oh_ = (ih_ + 2 * pad_ - k_) / stride_ + 1;
    ow_ = (iw_ + 2 * pad_ - k_) / stride_ + 1;
    const int kk = in_ch_ * k_ * k_;
    const int n = oh_ * ow_;

    col_ = Tensor({kk, n});
    double* col = col_.data();
    for (int c = 0; c < in_ch_; ++c) {
        for (int ki = 0; ki < k_; ++ki) {
            for (int kj = 0; kj < k_; ++kj) {
                double* dst = col + (static_cast<std::int64_t>((c * k_ + ki) * k_ + kj)) * n;
                for (int oy = 0; oy < oh_; ++oy) {
                    const int sy = oy * stride_ - pad_ + ki;
                    if (sy < 0 || sy >= ih_) {
                        for (int ox = 0; ox < ow_; ++ox) dst[oy * ow_ + ox] = 0.0;
                        continue;
                    }
                    const double* src = x.data() + (static_cast<std::int64_t>(c) * ih_ + sy) * iw_;
                    for (int ox = 0; ox < ow_; ++ox) {
                        const int sx = ox * stride_ - pad_ + kj;
                        dst[oy * ow_ + ox] = (sx < 0 || sx >= iw_) ? 0.0 : src[sx];
                    }
                }
            }
        }
    }

    Tensor y({out_ch_, oh_, ow_});
    CMapMat wm(w_.value.data(), out_ch_, kk);
    CMapMat cm(col, kk, n);
    MapMat ym(y.data(), out_ch_, n);
    ym.noalias() = wm * cm;
    for (int o = 0; o < out_ch_; ++o) {
        double* row = y.data() + static_cast<std::int64_t>(o) * n;
        for (int i = 0; i < n; ++i) row[i] += b_.value[o];
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
    const int kk = in_ch_ * k_ * k_;
    const int n = oh_ * ow_;
    CMapMat gym(gy.data(), out_ch_, n);
    CMapMat cm(col_.data(), kk, n);
    MapMat gwm(w_.grad.data(), out_ch_, kk);
    gwm.noalias() += gym * cm.transpose();
    for (int o = 0; o < out_ch_; ++o) {
        const double* row = gy.data() + static_cast<std::int64_t>(o) * n;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += row[i];
        b_.grad[o] += acc;
    }

    Tensor gcol({kk, n});
    MapMat gcm(gcol.data(), kk, n);
    CMapMat wm(w_.value.data(), out_ch_, kk);
    gcm.noalias() = wm.transpose() * gym;

    Tensor gx({in_ch_, ih_, iw_});
    const double* gcol_p = gcol.data();
    for (int c = 0; c < in_ch_; ++c) {
        for (int ki = 0; ki < k_; ++ki) {
            for (int kj = 0; kj < k_; ++kj) {
                const double* src =
                    gcol_p + (static_cast<std::int64_t>((c * k_ + ki) * k_ + kj)) * n;
                for (int oy = 0; oy < oh_; ++oy) {
                    const int sy = oy * stride_ - pad_ + ki;
                    if (sy < 0 || sy >= ih_) continue;
                    double* dst = gx.data() + (static_cast<std::int64_t>(c) * ih_ + sy) * iw_;
                    for (int ox = 0; ox < ow_; ++ox) {
                        const int sx = ox * stride_ - pad_ + kj;
                        if (sx >= 0 && sx < iw_) dst[sx] += src[oy * ow_ + ox];
                    }
                }
            }
        }
    }
    return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
}

// ---------------------------------------------------------------------------
// GroupNorm

namespace {
int pick_groups(int channels) {
    for (int g : {8, 4, 2})
        if (channels >= g && channels % g == 0) return g;
    return 1;
}
}  // namespace

GroupNorm::GroupNorm(std::string name, int channels)
    : ch_(channels),
      groups_(pick_groups(channels)),
      gamma_(name + ".g", {channels}),
      beta_(name + ".b", {channels}) {
    gamma_.value.fill(1.0);
}

Tensor GroupNorm::forward(const Tensor& x) {
    if (x.ndim() != 3 || x.dim(0) != ch_)
        throw Error(ErrorCode::ShapeError, gamma_.name + ": bad input to group norm");
    const int h = x.dim(1), w = x.dim(2);
    const int cpg = ch_ / groups_;
    const std::int64_t gsize = static_cast<std::int64_t>(cpg) * h * w;

    xhat_ = Tensor({ch_, h, w});
    inv_std_.assign(static_cast<std::size_t>(groups_), 0.0);
    Tensor y({ch_, h, w});
    for (int g = 0; g < groups_; ++g) {
        const double* xs = x.data() + static_cast<std::int64_t>(g) * gsize;
        double mean = 0.0;
        for (std::int64_t i = 0; i < gsize; ++i) mean += xs[i];
        mean /= static_cast<double>(gsize);
        double var = 0.0;
        for (std::int64_t i = 0; i < gsize; ++i) {
            const double d = xs[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        const double istd = 1.0 / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(g)] = istd;

        double* xh = xhat_.data() + static_cast<std::int64_t>(g) * gsize;
        double* ys = y.data() + static_cast<std::int64_t>(g) * gsize;
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            const double ga = gamma_.value[c], be = beta_.value[c];
            for (std::int64_t i = static_cast<std::int64_t>(cc) * h * w;
                 i < static_cast<std::int64_t>(cc + 1) * h * w; ++i) {
                xh[i] = (xs[i] - mean) * istd;
                ys[i] = ga * xh[i] + be;
            }
        }
    }
    return y;
}

Tensor GroupNorm::backward(const Tensor& gy) {
    const int h = xhat_.dim(1), w = xhat_.dim(2);
    const int cpg = ch_ / groups_;
    const std::int64_t gsize = static_cast<std::int64_t>(cpg) * h * w;

    Tensor gx({ch_, h, w});
    for (int g = 0; g < groups_; ++g) {
        const double* xh = xhat_.data() + static_cast<std::int64_t>(g) * gsize;
        const double* gys = gy.data() + static_cast<std::int64_t>(g) * gsize;
        double* gxs = gx.data() + static_cast<std::int64_t>(g) * gsize;

        double sum_gxh = 0.0, sum_gxh_xh = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            const double ga = gamma_.value[c];
            double gga = 0.0, gbe = 0.0;
            for (std::int64_t i = static_cast<std::int64_t>(cc) * h * w;
                 i < static_cast<std::int64_t>(cc + 1) * h * w; ++i) {
                gga += gys[i] * xh[i];
                gbe += gys[i];
                const double gxh = gys[i] * ga;
                sum_gxh += gxh;
                sum_gxh_xh += gxh * xh[i];
            }
            gamma_.grad[c] += gga;
            beta_.grad[c] += gbe;
        }
        const double istd = inv_std_[static_cast<std::size_t>(g)];
        const double m = static_cast<double>(gsize);
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            const double ga = gamma_.value[c];
            for (std::int64_t i = static_cast<std::int64_t>(cc) * h * w;
                 i < static_cast<std::int64_t>(cc + 1) * h * w; ++i) {
                const double gxh = gys[i] * ga;
                gxs[i] = istd * (gxh - sum_gxh / m - xh[i] * (sum_gxh_xh / m));
            }
        }
    }
    return gx;
}

void GroupNorm::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// LayerNorm

LayerNorm::LayerNorm(std::string name, int dim)
    : dim_(dim), gamma_(name + ".g", {dim}), beta_(name + ".b", {dim}) {
    gamma_.value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x) {
    if (x.ndim() != 2 || x.dim(1) != dim_)
        throw Error(ErrorCode::ShapeError, gamma_.name + ": bad input to layer norm");
    const int t = x.dim(0);
    xhat_ = Tensor({t, dim_});
    inv_std_.assign(static_cast<std::size_t>(t), 0.0);
    Tensor y({t, dim_});
    for (int i = 0; i < t; ++i) {
        const double* xs = x.data() + static_cast<std::int64_t>(i) * dim_;
        double mean = 0.0;
        for (int j = 0; j < dim_; ++j) mean += xs[j];
        mean /= dim_;
        double var = 0.0;
        for (int j = 0; j < dim_; ++j) {
            const double d = xs[j] - mean;
            var += d * d;
        }
        var /= dim_;
        const double istd = 1.0 / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(i)] = istd;
        for (int j = 0; j < dim_; ++j) {
            xhat_.at(i, j) = (xs[j] - mean) * istd;
            y.at(i, j) = gamma_.value[j] * xhat_.at(i, j) + beta_.value[j];
        }
    }
    return y;
}

Tensor LayerNorm::backward(const Tensor& gy) {
    const int t = xhat_.dim(0);
    Tensor gx({t, dim_});
    for (int i = 0; i < t; ++i) {
        double sum_gxh = 0.0, sum_gxh_xh = 0.0;
        for (int j = 0; j < dim_; ++j) {
            const double gxh = gy.at(i, j) * gamma_.value[j];
            sum_gxh += gxh;
            sum_gxh_xh += gxh * xhat_.at(i, j);
            gamma_.grad[j] += gy.at(i, j) * xhat_.at(i, j);
            beta_.grad[j] += gy.at(i, j);
        }
        const double istd = inv_std_[static_cast<std::size_t>(i)];
        for (int j = 0; j < dim_; ++j) {
            const double gxh = gy.at(i, j) * gamma_.value[j];
            gx.at(i, j) = istd * (gxh - sum_gxh / dim_ - xhat_.at(i, j) * (sum_gxh_xh / dim_));
        }
    }
    return gx;
}

void LayerNorm::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// Gelu / Dropout / Embedding

Tensor Gelu::forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * M_SQRT1_2));
    return y;
}

Tensor Gelu::backward(const Tensor& gy) {
    Tensor gx(x_.shape());
    constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
    for (std::int64_t i = 0; i < x_.numel(); ++i) {
        const double x = x_[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        gx[i] = gy[i] * (cdf + x * pdf);
    }
    return gx;
}

Tensor Dropout::forward(const Tensor& x, bool train, Rng* rng) {
    active_ = train && p_ > 0.0 && rng != nullptr;
    if (!active_) return x;
    mask_ = Tensor(x.shape());
    Tensor y(x.shape());
    const double scale = 1.0 / (1.0 - p_);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double keep = rng->bernoulli(1.0 - p_) ? scale : 0.0;
        mask_[i] = keep;
        y[i] = x[i] * keep;
    }
    return y;
}

Tensor Dropout::backward(const Tensor& gy) {
    if (!active_) return gy;
    Tensor gx(gy.shape());
    for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * mask_[i];
    return gx;
}

Embedding::Embedding(std::string name, int n, int dim, Rng rng)
    : n_(n), dim_(dim), table_(name + ".w", {n, dim}) {
    const double std = std::sqrt(1.0 / dim);
    for (std::int64_t i = 0; i < table_.value.numel(); ++i)
        table_.value[i] = rng.normal(0.0, std);
}

Tensor Embedding::forward(int index) {
    if (index < 0 || index >= n_)
        throw Error(ErrorCode::UnknownAge, "embedding index " + std::to_string(index) +
                                               " outside [0," + std::to_string(n_) + ")");
    last_index_ = index;
    Tensor y({dim_});
    for (int j = 0; j < dim_; ++j) y[j] = table_.value.at(index, j);
    return y;
}

void Embedding::backward(const Tensor& gy) {
    for (int j = 0; j < dim_; ++j) table_.grad.at(last_index_, j) += gy[j];
}

void Embedding::collect_params(std::vector<Param*>& out) { out.push_back(&table_); }

// ---------------------------------------------------------------------------
// TokenAttention

TokenAttention::TokenAttention(std::string name, int dim, int heads, double dropout, Rng rng)
    : dim_(dim),
      heads_(heads),
      head_dim_(dim / heads),
      ln_(name + ".ln", dim),
      wq_(name + ".q", dim, dim, rng),
      wk_(name + ".k", dim, dim, rng),
      wv_(name + ".v", dim, dim, rng),
      wo_(name + ".o", dim, dim, rng),
      attn_drop_(dropout) {
    if (dim % heads != 0)
        throw Error(ErrorCode::BadSpec, "hid_dim must be divisible by heads");
}

Tensor TokenAttention::forward(const Tensor& tokens, bool train, Rng* rng) {
    const int t = tokens.dim(0);
    const Tensor xn = ln_.forward(tokens);
    q_ = wq_.forward(xn);
    k_ = wk_.forward(xn);
    v_ = wv_.forward(xn);

    attn_ = Tensor({heads_, t, t});
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    for (int h = 0; h < heads_; ++h) {
        const int off = h * head_dim_;
        for (int i = 0; i < t; ++i) {
            double* row = attn_.data() + (static_cast<std::int64_t>(h) * t + i) * t;
            if (identity_attention_) {
                for (int j = 0; j < t; ++j) row[j] = (i == j) ? 1.0 : 0.0;
                continue;
            }
            double mx = -1e300;
            for (int j = 0; j < t; ++j) {
                double dot = 0.0;
                for (int d = 0; d < head_dim_; ++d)
                    dot += q_.at(i, off + d) * k_.at(j, off + d);
                row[j] = dot * scale;
                mx = std::max(mx, row[j]);
            }
            double denom = 0.0;
            for (int j = 0; j < t; ++j) {
                row[j] = std::exp(row[j] - mx);
                denom += row[j];
            }
            for (int j = 0; j < t; ++j) row[j] /= denom;
        }
    }

    attn_used_ = attn_drop_.forward(attn_, train, rng);

    Tensor o({t, dim_});
    for (int h = 0; h < heads_; ++h) {
        const int off = h * head_dim_;
        for (int i = 0; i < t; ++i) {
            const double* row = attn_used_.data() + (static_cast<std::int64_t>(h) * t + i) * t;
            for (int d = 0; d < head_dim_; ++d) {
                double acc = 0.0;
                for (int j = 0; j < t; ++j) acc += row[j] * v_.at(j, off + d);
                o.at(i, off + d) = acc;
            }
        }
    }

    Tensor out = wo_.forward(o);
    Tensor y = tokens;
    y.add_(out);
    return y;
}

Tensor TokenAttention::backward(const Tensor& gy) {
    const int t = gy.dim(0);
    const Tensor go = wo_.backward(gy);

    Tensor gq({t, dim_}), gk({t, dim_}), gv({t, dim_});
    Tensor gattn_used({heads_, t, t});
    for (int h = 0; h < heads_; ++h) {
        const int off = h * head_dim_;
        for (int i = 0; i < t; ++i) {
            const double* arow = attn_used_.data() + (static_cast<std::int64_t>(h) * t + i) * t;
            double* garow = gattn_used.data() + (static_cast<std::int64_t>(h) * t + i) * t;
            for (int j = 0; j < t; ++j) {
                double acc = 0.0;
                for (int d = 0; d < head_dim_; ++d) acc += go.at(i, off + d) * v_.at(j, off + d);
                garow[j] = acc;
            }
            for (int j = 0; j < t; ++j)
                for (int d = 0; d < head_dim_; ++d)
                    gv.at(j, off + d) += arow[j] * go.at(i, off + d);
        }
    }

    const Tensor gattn = attn_drop_.backward(gattn_used);

    if (!identity_attention_) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
        for (int h = 0; h < heads_; ++h) {
            const int off = h * head_dim_;
            for (int i = 0; i < t; ++i) {
                const double* arow = attn_.data() + (static_cast<std::int64_t>(h) * t + i) * t;
                const double* garow = gattn.data() + (static_cast<std::int64_t>(h) * t + i) * t;
                double dot = 0.0;
                for (int j = 0; j < t; ++j) dot += garow[j] * arow[j];
                for (int j = 0; j < t; ++j) {
                    const double gl = arow[j] * (garow[j] - dot) * scale;
                    for (int d = 0; d < head_dim_; ++d) {
                        gq.at(i, off + d) += gl * k_.at(j, off + d);
                        gk.at(j, off + d) += gl * q_.at(i, off + d);
                    }
                }
            }
        }
    }

    Tensor gxn = wq_.backward(gq);
    gxn.add_(wk_.backward(gk));
    gxn.add_(wv_.backward(gv));
    Tensor gtokens = ln_.backward(gxn);
    gtokens.add_(gy);  // residual path
    return gtokens;
}

void TokenAttention::collect_params(std::vector<Param*>& out) {
    ln_.collect_params(out);
    wq_.collect_params(out);
    wk_.collect_params(out);
    wv_.collect_params(out);
    wo_.collect_params(out);
}

// ---------------------------------------------------------------------------
// UpsampleNearest2x

Tensor UpsampleNearest2x::forward(const Tensor& x) {
    ch_ = x.dim(0);
    ih_ = x.dim(1);
    iw_ = x.dim(2);
    Tensor y({ch_, 2 * ih_, 2 * iw_});
    for (int c = 0; c < ch_; ++c)
        for (int yy = 0; yy < 2 * ih_; ++yy)
            for (int xx = 0; xx < 2 * iw_; ++xx)
                y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

Tensor UpsampleNearest2x::backward(const Tensor& gy) {
    Tensor gx({ch_, ih_, iw_});
    for (int c = 0; c < ch_; ++c)
        for (int yy = 0; yy < 2 * ih_; ++yy)
            for (int xx = 0; xx < 2 * iw_; ++xx)
                gx.at(c, yy / 2, xx / 2) += gy.at(c, yy, xx);
    return gx;
}

}  // namespace unicon::nn

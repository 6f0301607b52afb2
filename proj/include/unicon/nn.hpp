#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "unicon/rng.hpp"
#include "unicon/tensor.hpp"

namespace unicon::nn {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(shape) {}
};

/// Layers cache whatever the matching backward pass needs, so a module
/// instance serves one forward/backward pair at a time. Parameters are
/// owned by the layer; replicas for data-parallel workers copy values by
/// name (see SegModel::copy_params_from).
class Module {
public:
    virtual ~Module() = default;
    virtual void collect_params(std::vector<Param*>& out) = 0;

    std::vector<Param*> parameters();
    void zero_grad();
    std::int64_t param_count();
};

/// y = x W^T + b for token matrices x of shape [T,in].
class Linear : public Module {
public:
    Linear(std::string name, int in, int out, Rng rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>& out) override;

    Param& weight() { return w_; }
    Param& bias() { return b_; }
    int in_features() const { return in_; }
    int out_features() const { return out_; }

private:
    int in_, out_;
    Param w_, b_;
    Tensor x_;
};

/// Single-sample 2-D convolution on [C,H,W] tensors, stride 1 or 2 with
/// "same" padding for stride 1. im2col + GEMM.
class Conv2d : public Module {
public:
    Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, Rng rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>& out) override;

    Param& weight() { return w_; }
    Param& bias() { return b_; }
    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    Param w_;  // [out, in*k*k]
    Param b_;  // [out]
    Tensor col_;
    int ih_ = 0, iw_ = 0, oh_ = 0, ow_ = 0;
};

/// Per-group normalization over [C,H,W] with per-channel affine.
class GroupNorm : public Module {
public:
    GroupNorm(std::string name, int channels);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>& out) override;

    int groups() const { return groups_; }

private:
    int ch_, groups_;
    double eps_ = 1e-5;
    Param gamma_, beta_;
    Tensor xhat_;
    std::vector<double> inv_std_;
};

/// Row-wise layer norm over [T,D].
class LayerNorm : public Module {
public:
    LayerNorm(std::string name, int dim);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>& out) override;

private:
    int dim_;
    double eps_ = 1e-5;
    Param gamma_, beta_;
    Tensor xhat_;
    std::vector<double> inv_std_;
};

/// Exact (erf-based) GELU; smooth everywhere, which keeps the
/// finite-difference suite honest.
class Gelu : public Module {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>&) override {}

private:
    Tensor x_;
};

class Dropout : public Module {
public:
    explicit Dropout(double p) : p_(p) {}

    Tensor forward(const Tensor& x, bool train, Rng* rng);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>&) override {}

    double rate() const { return p_; }

private:
    double p_;
    bool active_ = false;
    Tensor mask_;
};

/// Learned lookup table [n, dim].
class Embedding : public Module {
public:
    Embedding(std::string name, int n, int dim, Rng rng);

    Tensor forward(int index);
    void backward(const Tensor& gy);
    void collect_params(std::vector<Param*>& out) override;

    int size() const { return n_; }

private:
    int n_, dim_;
    Param table_;
    int last_index_ = -1;
};

/// Pre-norm multi-head self-attention block over tokens [T,D]:
///     y = tokens + W_o(softmax(QK^T/sqrt(d_h)) V)
/// with dropout on the attention probabilities during training.
class TokenAttention : public Module {
public:
    TokenAttention(std::string name, int dim, int heads, double dropout, Rng rng);

    Tensor forward(const Tensor& tokens, bool train, Rng* rng);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>& out) override;

    /// Post-softmax attention from the last forward, shape [heads, T, T].
    const Tensor& last_attention() const { return attn_; }

    /// Test hook: replaces the attention matrix with the identity.
    void set_identity_attention(bool on) { identity_attention_ = on; }

private:
    int dim_, heads_, head_dim_;
    LayerNorm ln_;
    Linear wq_, wk_, wv_, wo_;
    Dropout attn_drop_;
    bool identity_attention_ = false;

    Tensor q_, k_, v_;
    Tensor attn_;       // [heads, T, T], post-softmax
    Tensor attn_used_;  // after dropout, what multiplied V
};

/// Nearest-neighbour 2x upsampling of [C,H,W].
class UpsampleNearest2x : public Module {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<Param*>&) override {}

private:
    int ih_ = 0, iw_ = 0, ch_ = 0;
};

/// Deterministic init stream for a named layer inside a model built from
/// `seed`; layer identity, not construction order, decides the draw.
Rng layer_rng(std::uint64_t seed, const std::string& name);

}  // namespace unicon::nn

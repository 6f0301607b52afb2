#pragma once

#include <cstdint>
#include <vector>

#include "unicon/nn.hpp"

namespace unicon::optim {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

/// Adam with decoupled weight decay: the decay multiplies the raw weight by
/// (1 - lr*wd) independently of the moment update.
class AdamW {
public:
    AdamW(std::vector<nn::Param*> params, AdamWConfig cfg);

    void step(double lr);

    std::int64_t steps_taken() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

    // checkpoint access
    std::vector<Tensor>& moment1() { return m_; }
    std::vector<Tensor>& moment2() { return v_; }
    void set_steps_taken(std::int64_t t) { t_ = t; }
    const std::vector<nn::Param*>& params() const { return params_; }

private:
    std::vector<nn::Param*> params_;
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

/// Cosine annealing from lr_max at step 0 toward 0; lr(t) =
/// 0.5*lr_max*(1+cos(pi*t/total)).
double cosine_lr(double lr_max, std::int64_t step, std::int64_t total_steps);

}  // namespace unicon::optim

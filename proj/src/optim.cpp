#include "unicon/optim.hpp"

#include <cmath>

namespace unicon::optim {

AdamW::AdamW(std::vector<nn::Param*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (nn::Param* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        nn::Param& p = *params_[pi];
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (std::int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            p.value[i] -= lr * cfg_.weight_decay * p.value[i];
        }
    }
}

double cosine_lr(double lr_max, std::int64_t step, std::int64_t total_steps) {
    if (total_steps <= 1) return lr_max;
    const double pi = 3.14159265358979323846;
    return 0.5 * lr_max *
           (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

}  // namespace unicon::optim

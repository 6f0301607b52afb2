#pragma once

#include <map>
#include <utility>
#include <vector>

#include "unicon/tensor.hpp"

namespace unicon::loss {

struct LossConfig {
    double alpha = 0.5;        // Dice weight; CE gets 1-alpha
    double dice_smooth = 1e-5;
    bool ce_literal = false;   // sum only over foreground pixels, as printed
};

/// 1 - (2*sum(p*g) + s) / (sum(p^2) + sum(g^2) + s) over flat foreground
/// probabilities. Optional gradient w.r.t. probs.
double dice_loss(const Tensor& probs, const Tensor& truth, double smooth,
                 Tensor* g_probs = nullptr);

/// Mean over pixels of -log p(true class) with probabilities clamped to
/// [eps, 1-eps], eps = 1e-7. probs has shape [N,2] (background, foreground);
/// in literal mode only foreground pixels contribute (mean over them).
double ce_loss(const Tensor& probs, const Tensor& truth, bool literal = false,
               Tensor* g_probs = nullptr);

/// alpha * Dice + (1-alpha) * CE on [N,2] class probabilities.
double segmentation_loss(const Tensor& probs, const Tensor& truth, const LossConfig& cfg,
                         Tensor* g_probs = nullptr);

/// Loss on raw logits [2,h,w] (or [2,N]); applies softmax internally and
/// returns the gradient w.r.t. the logits. This is the training entry point.
double segmentation_loss_logits(const Tensor& logits, const Tensor& truth,
                                const LossConfig& cfg, Tensor* g_logits = nullptr);

/// Row-wise softmax of logits [2,N] layout -> probs [N,2].
Tensor softmax2(const Tensor& logits);

/// 2|P.G|/(|P|+|G|) on binary masks; 1 when both masks are empty.
double dice_score(const Tensor& pred_mask, const Tensor& truth_mask);

struct AgeAggregate {
    std::vector<double> per_age;  // mean per age index
    double avg = 0.0;             // mean of the per-age means
};

/// Unweighted mean within each age; throws EmptyAgeGroup if any age in
/// [0, num_ages) has no scores.
AgeAggregate aggregate_by_age(const std::vector<std::pair<int, double>>& per_slice_scores,
                              int num_ages = 4);

}  // namespace unicon::loss

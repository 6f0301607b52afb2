#include "unicon/losses.hpp"

#include <cmath>

namespace unicon::loss {

namespace {
constexpr double kEps = 1e-7;
}

double dice_loss(const Tensor& probs, const Tensor& truth, double smooth, Tensor* g_probs) {
    if (!probs.same_shape(truth))
        throw Error(ErrorCode::ShapeError, "dice_loss shape mismatch");
    const std::int64_t n = probs.numel();
    double inter = 0.0, pp = 0.0, gg = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        inter += probs[i] * truth[i];
        pp += probs[i] * probs[i];
        gg += truth[i] * truth[i];
    }
    const double num = 2.0 * inter + smooth;
    const double den = pp + gg + smooth;
    if (g_probs) {
        *g_probs = Tensor(probs.shape());
        for (std::int64_t i = 0; i < n; ++i)
            (*g_probs)[i] = (2.0 * probs[i] * num - 2.0 * truth[i] * den) / (den * den);
    }
    return 1.0 - num / den;
}

double ce_loss(const Tensor& probs, const Tensor& truth, bool literal, Tensor* g_probs) {
    if (probs.ndim() != 2 || probs.dim(1) != 2 || truth.numel() != probs.dim(0))
        throw Error(ErrorCode::ShapeError, "ce_loss expects [N,2] probs and [N] truth");
    const int n = probs.dim(0);
    if (g_probs) *g_probs = Tensor(probs.shape());

    double acc = 0.0;
    std::int64_t count = 0;
    for (int i = 0; i < n; ++i) {
        const int cls = truth[i] != 0.0 ? 1 : 0;
        if (literal && cls == 0) continue;
        const double p = probs.at(i, cls);
        const double pc = p < kEps ? kEps : (p > 1.0 - kEps ? 1.0 - kEps : p);
        acc += -std::log(pc);
        ++count;
        if (g_probs && p > kEps && p < 1.0 - kEps) (*g_probs).at(i, cls) = -1.0 / pc;
    }
    if (count == 0) return 0.0;
    if (g_probs) g_probs->scale_(1.0 / static_cast<double>(count));
    return acc / static_cast<double>(count);
}

double segmentation_loss(const Tensor& probs, const Tensor& truth, const LossConfig& cfg,
                         Tensor* g_probs) {
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0)
        throw Error(ErrorCode::BadConfig, "alpha must be in [0,1]");
    const int n = probs.dim(0);
    Tensor fg({n});
    for (int i = 0; i < n; ++i) fg[i] = probs.at(i, 1);

    Tensor g_dice, g_ce;
    const double ld = dice_loss(fg, truth, cfg.dice_smooth, g_probs ? &g_dice : nullptr);
    const double lc = ce_loss(probs, truth, cfg.ce_literal, g_probs ? &g_ce : nullptr);
    if (g_probs) {
        *g_probs = Tensor(probs.shape());
        for (int i = 0; i < n; ++i) {
            (*g_probs).at(i, 0) = (1.0 - cfg.alpha) * g_ce.at(i, 0);
            (*g_probs).at(i, 1) = cfg.alpha * g_dice[i] + (1.0 - cfg.alpha) * g_ce.at(i, 1);
        }
    }
    return cfg.alpha * ld + (1.0 - cfg.alpha) * lc;
}

Tensor softmax2(const Tensor& logits) {
    if (logits.ndim() < 1 || logits.dim(0) != 2)
        throw Error(ErrorCode::ShapeError, "expected 2 logit channels");
    const std::int64_t n = logits.numel() / 2;
    Tensor probs({static_cast<int>(n), 2});
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = logits[i], b = logits[n + i];
        const double m = a > b ? a : b;
        const double ea = std::exp(a - m), eb = std::exp(b - m);
        probs.at(static_cast<int>(i), 0) = ea / (ea + eb);
        probs.at(static_cast<int>(i), 1) = eb / (ea + eb);
    }
    return probs;
}

double segmentation_loss_logits(const Tensor& logits, const Tensor& truth,
                                const LossConfig& cfg, Tensor* g_logits) {
    const std::int64_t n = logits.numel() / 2;
    if (truth.numel() != n)
        throw Error(ErrorCode::ShapeError, "truth does not match logit pixels");
    const Tensor probs = softmax2(logits);
    const Tensor flat_truth = truth.reshaped({static_cast<int>(n)});

    Tensor g_probs;
    const double l =
        segmentation_loss(probs, flat_truth, cfg, g_logits ? &g_probs : nullptr);
    if (g_logits) {
        *g_logits = Tensor(logits.shape());
        for (std::int64_t i = 0; i < n; ++i) {
            const double p0 = probs.at(static_cast<int>(i), 0);
            const double p1 = probs.at(static_cast<int>(i), 1);
            const double s =
                g_probs.at(static_cast<int>(i), 0) * p0 + g_probs.at(static_cast<int>(i), 1) * p1;
            (*g_logits)[i] = p0 * (g_probs.at(static_cast<int>(i), 0) - s);
            (*g_logits)[n + i] = p1 * (g_probs.at(static_cast<int>(i), 1) - s);
        }
    }
    return l;
}

double dice_score(const Tensor& pred_mask, const Tensor& truth_mask) {
    if (!pred_mask.same_shape(truth_mask))
        throw Error(ErrorCode::ShapeError, "dice_score shape mismatch");
    double inter = 0.0, psum = 0.0, gsum = 0.0;
    for (std::int64_t i = 0; i < pred_mask.numel(); ++i) {
        const double p = pred_mask[i], g = truth_mask[i];
        if ((p != 0.0 && p != 1.0) || (g != 0.0 && g != 1.0))
            throw Error(ErrorCode::ShapeError, "dice_score expects binary masks");
        inter += p * g;
        psum += p;
        gsum += g;
    }
    if (psum + gsum == 0.0) return 1.0;
    return 2.0 * inter / (psum + gsum);
}

AgeAggregate aggregate_by_age(const std::vector<std::pair<int, double>>& per_slice_scores,
                              int num_ages) {
    std::vector<double> sums(static_cast<std::size_t>(num_ages), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(num_ages), 0);
    for (const auto& [age, score] : per_slice_scores) {
        if (age < 0 || age >= num_ages)
            throw Error(ErrorCode::BadAgeIndex, "score with age " + std::to_string(age));
        sums[static_cast<std::size_t>(age)] += score;
        counts[static_cast<std::size_t>(age)] += 1;
    }
    AgeAggregate out;
    out.per_age.resize(static_cast<std::size_t>(num_ages));
    for (int a = 0; a < num_ages; ++a) {
        if (counts[static_cast<std::size_t>(a)] == 0)
            throw Error(ErrorCode::EmptyAgeGroup, "no scores for age " + std::to_string(a));
        out.per_age[static_cast<std::size_t>(a)] =
            sums[static_cast<std::size_t>(a)] / counts[static_cast<std::size_t>(a)];
        out.avg += out.per_age[static_cast<std::size_t>(a)];
    }
    out.avg /= num_ages;
    return out;
}

}  // namespace unicon::loss

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "obidet/roi_align.hpp"

namespace obidet {

struct Temperature {
    double tau = 0.1;
    bool valid() const { return tau > 0.0; }
};

/// Which terms the contrastive softmax denominator carries. InfoNce adds
/// the positive term to the negative-center sum, making the per-sample loss
/// a proper cross-entropy (always positive); NegativesOnly keeps the
/// literal negative-centers-only sum for comparison.
enum class DenominatorMode : std::uint8_t { InfoNce, NegativesOnly };

struct ClusLossResult {
    double loss = 0.0;
    std::vector<std::vector<double>> d_samples;  // d(loss)/d(sample), mean-reduced
    bool skipped = false;
};

/// Per-sample cluster-contrastive loss
///   l(p) = -log( exp(p.c_mean/tau) / sum exp(p.c_j/tau) )
/// mean-reduced over samples, with the denominator per `mode`. Centers are
/// constants: gradients flow to the samples only. Log-sum-exp uses
/// max-subtraction.
ClusLossResult clus_loss(const std::vector<FeatureVector>& samples,
                         const std::vector<double>& pos_mean,
                         const std::vector<double>& neg_centers, int n_neg, Temperature tau,
                         DenominatorMode mode = DenominatorMode::InfoNce);

struct BceLossResult {
    double loss = 0.0;
    std::vector<double> d_logits;
    bool skipped = false;
};

/// Mean binary cross-entropy over labeled anchors, stable logit form.
BceLossResult class_loss(const std::vector<double>& logits, const std::vector<int>& targets);

struct BoxLossResult {
    double loss = 0.0;
    std::vector<std::array<double, 4>> d_pred;
    bool skipped = false;
};

/// Smooth-L1 (0.5x^2 below |x|=1, |x|-0.5 above) summed over the four
/// delta coordinates and averaged over positive anchors.
BoxLossResult box_loss(const std::vector<std::array<double, 4>>& pred,
                       const std::vector<std::array<double, 4>>& target);

struct LossReport {
    double l_clus = 0.0, l_class = 0.0, l_box = 0.0, total = 0.0;
    std::array<double, 3> lambdas{1.0, 1.0, 1.0};
    double tau = 0.1;
    int n_samples = 0, n_pos_centers = 0, n_neg_centers = 0;
    int n_pos_anchors = 0, n_neg_anchors = 0;
    bool clus_skipped = false, class_skipped = false, box_skipped = false;
    bool clusters_clamped = false;
};

/// Weighted total per lambda; component values and counts are carried
/// through untouched.
LossReport total_loss(double l_clus, double l_class, double l_box,
                      const std::array<double, 3>& lambdas);

}  // namespace obidet

#pragma once

#include <vector>

#include "obidet/geometry.hpp"
#include "obidet/tensor.hpp"

namespace obidet {

inline constexpr int kRoiOutSize = 4;
inline constexpr int kRoiSamples = 2;  // per bin axis

/// Flattened pooled descriptor, channel-major:
/// values[c * out^2 + by * out + bx].
struct FeatureVector {
    std::vector<double> values;
    bool normalized = false;
    bool degenerate = false;
};

/// RoI Align: the box is mapped into feature-map coordinates as x/stride
/// (no half-pixel offset), split into out_size^2 bins; each bin averages a
/// 2x2 grid of interior bilinear samples. Out-of-bounds samples read 0.
FeatureVector roi_align(const Tensor& feature_map, int stride, const Box& box,
                        int out_size = kRoiOutSize);

/// Scatters d(loss)/d(pooled values) back onto the feature map. Exact
/// adjoint of roi_align for the same (box, stride, out_size).
void roi_align_backward(int stride, const Box& box, const std::vector<double>& d_values,
                        Tensor& d_feature_map, int out_size = kRoiOutSize);

/// Unit-norm copy; inputs with norm below 1e-12 come back zero and flagged
/// degenerate.
FeatureVector l2_normalize(const FeatureVector& v);

/// Pullback of l2_normalize at the original (pre-normalization) vector.
std::vector<double> l2_normalize_backward(const std::vector<double>& original,
                                          const std::vector<double>& d_normalized);

}  // namespace obidet

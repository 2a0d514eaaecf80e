#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "obidet/roi_align.hpp"

namespace obidet {

enum class FeatureRole : std::uint8_t { Sample, Positive, Negative };

std::string role_name(FeatureRole role);
FeatureRole role_from_name(const std::string& name);

struct EmbeddedPoint {
    FeatureRole role;
    double x = 0.0;
    double y = 0.0;
};

struct Embedding {
    std::vector<EmbeddedPoint> points;
    std::array<double, 2> explained_variance{0.0, 0.0};
    bool degenerate = false;  // rank-0 input, everything at the origin
};

/// Mean-centered projection onto the top two principal directions, found by
/// power iteration with deflation (tol 1e-9). Sign convention: the
/// largest-magnitude coordinate of each direction is positive.
Embedding embed_2d(const std::vector<std::pair<FeatureRole, FeatureVector>>& features);

}  // namespace obidet

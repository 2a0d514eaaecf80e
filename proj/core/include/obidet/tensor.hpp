#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "obidet/errors.hpp"

namespace obidet {

/// Dense row-major array of doubles. Shape is carried alongside the data;
/// hot loops index the flat buffer directly.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> s) {
        std::int64_t n = 1;
        for (int v : s) n *= v;
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    // (c, y, x) accessors for the C x H x W tensors used throughout.
    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

}  // namespace obidet

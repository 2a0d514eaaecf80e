#include "obidet/roi_align.hpp"

#include <cmath>

#include "obidet/errors.hpp"

namespace obidet {

namespace {

struct BilinearTaps {
    int idx[4];
    double w[4];
    int count = 0;
};

// Bilinear interpolation with cell centers at integer coordinates; taps
// outside [0,W)x[0,H) contribute zero.
BilinearTaps bilinear_taps(double x, double y, int h, int w) {
    BilinearTaps t;
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const double ww[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
        if (xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h || ww[k] == 0.0) continue;
        t.idx[t.count] = ys[k] * w + xs[k];
        t.w[t.count] = ww[k];
        ++t.count;
    }
    return t;
}

}  // namespace

FeatureVector roi_align(const Tensor& feature_map, int stride, const Box& box, int out_size) {
    if (!box.valid()) throw InputError("roi_align: degenerate box");
    if (feature_map.shape.size() != 3) throw InputError("roi_align: feature map must be CxHxW");
    const int c = feature_map.dim(0), h = feature_map.dim(1), w = feature_map.dim(2);

    const double fx1 = box.x1 / stride, fy1 = box.y1 / stride;
    const double bw = (box.x2 - box.x1) / stride / out_size;
    const double bh = (box.y2 - box.y1) / stride / out_size;

    FeatureVector out;
    out.values.assign(static_cast<std::size_t>(c) * out_size * out_size, 0.0);
    out.degenerate = box.x2 / stride <= 0.0 || fx1 >= w || box.y2 / stride <= 0.0 || fy1 >= h;

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int nbins = out_size * out_size;
    std::vector<BilinearTaps> taps(static_cast<std::size_t>(nbins) * 4);
    for (int by = 0; by < out_size; ++by) {
        for (int bx = 0; bx < out_size; ++bx) {
            for (int sy = 0; sy < kRoiSamples; ++sy) {
                for (int sx = 0; sx < kRoiSamples; ++sx) {
                    const double px = fx1 + (bx + (sx + 0.5) / kRoiSamples) * bw;
                    const double py = fy1 + (by + (sy + 0.5) / kRoiSamples) * bh;
                    taps[(by * out_size + bx) * 4 + sy * kRoiSamples + sx] = bilinear_taps(px, py, h, w);
                }
            }
        }
    }
    for (int ch = 0; ch < c; ++ch) {
        const double* fp = feature_map.data.data() + ch * plane;
        double* op = out.values.data() + static_cast<std::size_t>(ch) * nbins;
        for (int b = 0; b < nbins; ++b) {
            double acc = 0.0;
            for (int s = 0; s < 4; ++s) {
                const BilinearTaps& t = taps[b * 4 + s];
                for (int k = 0; k < t.count; ++k) acc += t.w[k] * fp[t.idx[k]];
            }
            op[b] = acc * 0.25;
        }
    }
    return out;
}

void roi_align_backward(int stride, const Box& box, const std::vector<double>& d_values,
                        Tensor& d_feature_map, int out_size) {
    if (!box.valid()) throw InputError("roi_align_backward: degenerate box");
    const int c = d_feature_map.dim(0), h = d_feature_map.dim(1), w = d_feature_map.dim(2);
    const int nbins = out_size * out_size;
    if (d_values.size() != static_cast<std::size_t>(c) * nbins)
        throw InputError("roi_align_backward: gradient size mismatch");

    const double fx1 = box.x1 / stride, fy1 = box.y1 / stride;
    const double bw = (box.x2 - box.x1) / stride / out_size;
    const double bh = (box.y2 - box.y1) / stride / out_size;
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    for (int by = 0; by < out_size; ++by) {
        for (int bx = 0; bx < out_size; ++bx) {
            for (int sy = 0; sy < kRoiSamples; ++sy) {
                for (int sx = 0; sx < kRoiSamples; ++sx) {
                    const double px = fx1 + (bx + (sx + 0.5) / kRoiSamples) * bw;
                    const double py = fy1 + (by + (sy + 0.5) / kRoiSamples) * bh;
                    const BilinearTaps t = bilinear_taps(px, py, h, w);
                    for (int ch = 0; ch < c; ++ch) {
                        const double g = 0.25 * d_values[static_cast<std::size_t>(ch) * nbins + by * out_size + bx];
                        double* dp = d_feature_map.data.data() + ch * plane;
                        for (int k = 0; k < t.count; ++k) dp[t.idx[k]] += g * t.w[k];
                    }
                }
            }
        }
    }
}

FeatureVector l2_normalize(const FeatureVector& v) {
    double sq = 0.0;
    for (double x : v.values) sq += x * x;
    const double norm = std::sqrt(sq);
    FeatureVector out;
    out.values.assign(v.values.size(), 0.0);
    if (norm < 1e-12) {
        out.degenerate = true;
        return out;
    }
    const double inv = 1.0 / norm;
    for (std::size_t i = 0; i < v.values.size(); ++i) out.values[i] = v.values[i] * inv;
    out.normalized = true;
    out.degenerate = v.degenerate;
    return out;
}

std::vector<double> l2_normalize_backward(const std::vector<double>& original,
                                          const std::vector<double>& d_normalized) {
    if (original.size() != d_normalized.size())
        throw InputError("l2_normalize_backward: size mismatch");
    double sq = 0.0;
    for (double x : original) sq += x * x;
    const double norm = std::sqrt(sq);
    std::vector<double> out(original.size(), 0.0);
    if (norm < 1e-12) return out;  // normalize emitted a constant zero vector
    const double inv = 1.0 / norm;
    double dot = 0.0;
    for (std::size_t i = 0; i < original.size(); ++i) dot += original[i] * inv * d_normalized[i];
    for (std::size_t i = 0; i < original.size(); ++i)
        out[i] = (d_normalized[i] - original[i] * inv * dot) * inv;
    return out;
}

}  // namespace obidet

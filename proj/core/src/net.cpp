#include "obidet/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "obidet/errors.hpp"
#include "obidet/rng.hpp"

namespace obidet {

namespace {

// One pass over the plane per (out channel, in channel): each output row
// accumulates all nine taps at once. Out-of-range rows read a shared zero
// row, so there are no branches in the inner loop and every input row is
// touched once instead of nine times.
void accumulate_taps(const double* src, double* dst, const double wk[9], int h, int wd,
                     const double* zero_row) {
    for (int y = 0; y < h; ++y) {
        const double* r0 = y > 0 ? src + static_cast<std::size_t>(y - 1) * wd : zero_row;
        const double* r1 = src + static_cast<std::size_t>(y) * wd;
        const double* r2 = y + 1 < h ? src + static_cast<std::size_t>(y + 1) * wd : zero_row;
        double* orow = dst + static_cast<std::size_t>(y) * wd;
        orow[0] += wk[1] * r0[0] + wk[2] * r0[1] + wk[4] * r1[0] + wk[5] * r1[1] +
                   wk[7] * r2[0] + wk[8] * r2[1];
        for (int x = 1; x < wd - 1; ++x) {
            orow[x] += wk[0] * r0[x - 1] + wk[1] * r0[x] + wk[2] * r0[x + 1] +
                       wk[3] * r1[x - 1] + wk[4] * r1[x] + wk[5] * r1[x + 1] +
                       wk[6] * r2[x - 1] + wk[7] * r2[x] + wk[8] * r2[x + 1];
        }
        const int x = wd - 1;
        orow[x] += wk[0] * r0[x - 1] + wk[1] * r0[x] + wk[3] * r1[x - 1] + wk[4] * r1[x] +
                   wk[6] * r2[x - 1] + wk[7] * r2[x];
    }
}

void conv3x3(const double* in, int cin, const double* w, double* out, int cout, int h, int wd) {
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const std::vector<double> zero_row(static_cast<std::size_t>(wd), 0.0);
    for (int co = 0; co < cout; ++co) {
        double* outp = out + co * plane;
        for (int ci = 0; ci < cin; ++ci)
            accumulate_taps(in + ci * plane, outp,
                            w + (static_cast<std::size_t>(co) * cin + ci) * 9, h, wd,
                            zero_row.data());
    }
}

// d_in += w (*) d_out: the adjoint is the same nine-tap sweep with the
// kernel rotated 180 degrees.
void conv3x3_backward_input(double* d_in, int cin, const double* w, const double* d_out, int cout,
                            int h, int wd) {
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const std::vector<double> zero_row(static_cast<std::size_t>(wd), 0.0);
    for (int ci = 0; ci < cin; ++ci) {
        double* dip = d_in + ci * plane;
        for (int co = 0; co < cout; ++co) {
            const double* wk = w + (static_cast<std::size_t>(co) * cin + ci) * 9;
            const double flipped[9] = {wk[8], wk[7], wk[6], wk[5], wk[4], wk[3], wk[2], wk[1], wk[0]};
            accumulate_taps(d_out + co * plane, dip, flipped, h, wd, zero_row.data());
        }
    }
}

// dw[co][ci][ky][kx] += sum_{y,x} d_out[co][y][x] * in[ci][y+dy][x+dx];
// db[co] += sum d_out[co]. Four explicit accumulators pin the reduction
// order while letting the compiler keep several chains in flight.
double row_dot(const double* a, const double* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int x = 0;
    for (; x + 4 <= n; x += 4) {
        s0 += a[x] * b[x];
        s1 += a[x + 1] * b[x + 1];
        s2 += a[x + 2] * b[x + 2];
        s3 += a[x + 3] * b[x + 3];
    }
    for (; x < n; ++x) s0 += a[x] * b[x];
    return ((s0 + s1) + (s2 + s3));
}

// dw[t] accumulates sum_{y,x} d_out[y][x] * in[y+dy][x+dx]: nine running
// sums gathered in a single sweep over the plane.
void conv3x3_backward_params(const double* in, int cin, const double* d_out, int cout, int h,
                             int wd, double* dw, double* db) {
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    const std::vector<double> zero_row(static_cast<std::size_t>(wd), 0.0);
    for (int co = 0; co < cout; ++co) {
        const double* dop = d_out + co * plane;
        double bsum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) bsum += dop[i];
        db[co] += bsum;
        for (int ci = 0; ci < cin; ++ci) {
            const double* inp = in + ci * plane;
            double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
            for (int y = 0; y < h; ++y) {
                const double* r0 = y > 0 ? inp + static_cast<std::size_t>(y - 1) * wd : zero_row.data();
                const double* r1 = inp + static_cast<std::size_t>(y) * wd;
                const double* r2 = y + 1 < h ? inp + static_cast<std::size_t>(y + 1) * wd : zero_row.data();
                const double* drow = dop + static_cast<std::size_t>(y) * wd;
                {
                    const double d = drow[0];
                    acc[1] += d * r0[0];
                    acc[2] += d * r0[1];
                    acc[4] += d * r1[0];
                    acc[5] += d * r1[1];
                    acc[7] += d * r2[0];
                    acc[8] += d * r2[1];
                }
                for (int x = 1; x < wd - 1; ++x) {
                    const double d = drow[x];
                    acc[0] += d * r0[x - 1];
                    acc[1] += d * r0[x];
                    acc[2] += d * r0[x + 1];
                    acc[3] += d * r1[x - 1];
                    acc[4] += d * r1[x];
                    acc[5] += d * r1[x + 1];
                    acc[6] += d * r2[x - 1];
                    acc[7] += d * r2[x];
                    acc[8] += d * r2[x + 1];
                }
                {
                    const int x = wd - 1;
                    const double d = drow[x];
                    acc[0] += d * r0[x - 1];
                    acc[1] += d * r0[x];
                    acc[3] += d * r1[x - 1];
                    acc[4] += d * r1[x];
                    acc[6] += d * r2[x - 1];
                    acc[7] += d * r2[x];
                }
            }
            double* wk = dw + (static_cast<std::size_t>(co) * cin + ci) * 9;
            for (int t = 0; t < 9; ++t) wk[t] += acc[t];
        }
    }
}

void conv1x1(const double* in, int cin, const double* w, const double* b, double* out, int cout,
             std::size_t plane) {
    for (int co = 0; co < cout; ++co) {
        double* outp = out + co * plane;
        const double bias = b[co];
        for (std::size_t i = 0; i < plane; ++i) outp[i] = bias;
        for (int ci = 0; ci < cin; ++ci) {
            const double wv = w[static_cast<std::size_t>(co) * cin + ci];
            const double* inp = in + ci * plane;
            for (std::size_t i = 0; i < plane; ++i) outp[i] += wv * inp[i];
        }
    }
}

void relu_inplace(double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

// 2x2 stride-2 max pool; argmax stores the flat input index of the winner,
// first element in row-major order on ties.
void maxpool2x2(const double* in, int c, int h, int wd, double* out, std::int32_t* argmax) {
    const int oh = h / 2, ow = wd / 2;
    for (int ch = 0; ch < c; ++ch) {
        const double* inp = in + static_cast<std::size_t>(ch) * h * wd;
        double* outp = out + static_cast<std::size_t>(ch) * oh * ow;
        std::int32_t* arg = argmax + static_cast<std::size_t>(ch) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const int base = 2 * y * wd + 2 * x;
                int best = base;
                double bv = inp[base];
                const int cand[3] = {base + 1, base + wd, base + wd + 1};
                for (int k = 0; k < 3; ++k) {
                    if (inp[cand[k]] > bv) {
                        bv = inp[cand[k]];
                        best = cand[k];
                    }
                }
                outp[y * ow + x] = bv;
                arg[y * ow + x] = best;
            }
        }
    }
}

void maxpool2x2_backward(const double* d_out, int c, int oh, int ow, const std::int32_t* argmax,
                         double* d_in, int h, int wd) {
    for (int ch = 0; ch < c; ++ch) {
        const double* dop = d_out + static_cast<std::size_t>(ch) * oh * ow;
        const std::int32_t* arg = argmax + static_cast<std::size_t>(ch) * oh * ow;
        double* dip = d_in + static_cast<std::size_t>(ch) * h * wd;
        for (int i = 0; i < oh * ow; ++i) dip[arg[i]] += dop[i];
    }
}

void fill_bias(double* out, const double* b, int c, std::size_t plane) {
    for (int ch = 0; ch < c; ++ch) {
        const double bias = b[ch];
        double* p = out + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = bias;
    }
}

}  // namespace

ParamLayout::ParamLayout(int a) : num_sizes(a) {
    if (a < 1) throw InputError("ParamLayout: need at least one anchor size");
    const int hc = 5 * a;
    conv1_w = 0;
    conv1_b = conv1_w + static_cast<std::size_t>(kC1) * 1 * 9;
    conv2_w = conv1_b + kC1;
    conv2_b = conv2_w + static_cast<std::size_t>(kC2) * kC1 * 9;
    conv3_w = conv2_b + kC2;
    conv3_b = conv3_w + static_cast<std::size_t>(kC3) * kC2 * 9;
    head_w = conv3_b + kC3;
    head_b = head_w + static_cast<std::size_t>(hc) * kC3;
    total = head_b + hc;
}

ExtractorParams::ExtractorParams(int num_sizes) : layout(num_sizes), flat(layout.total, 0.0) {}

ExtractorParams ExtractorParams::init(int num_sizes, std::uint64_t seed) {
    ExtractorParams p(num_sizes);
    Rng rng(derive_seed(seed, 0x70617261));  // params stream
    auto fill = [&](std::size_t off, std::size_t count, int fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (std::size_t i = 0; i < count; ++i) p.flat[off + i] = rng.uniform(-bound, bound);
    };
    const ParamLayout& L = p.layout;
    fill(L.conv1_w, L.conv1_b - L.conv1_w, 1 * 9);
    fill(L.conv2_w, L.conv2_b - L.conv2_w, kC1 * 9);
    fill(L.conv3_w, L.conv3_b - L.conv3_w, kC2 * 9);
    fill(L.head_w, L.head_b - L.head_w, kC3);
    // biases stay zero
    return p;
}

Tensor pad_to_stride(const Tensor& image) {
    const int h = image.dim(1), w = image.dim(2);
    const int ph = (h + kStride - 1) / kStride * kStride;
    const int pw = (w + kStride - 1) / kStride * kStride;
    if (ph == h && pw == w) return image;
    Tensor out = Tensor::zeros({image.dim(0), ph, pw});
    for (int c = 0; c < image.dim(0); ++c)
        for (int y = 0; y < h; ++y)
            std::memcpy(out.data.data() + (static_cast<std::size_t>(c) * ph + y) * pw,
                        image.data.data() + (static_cast<std::size_t>(c) * h + y) * w,
                        sizeof(double) * w);
    return out;
}

ForwardResult forward_cached(const ExtractorParams& params, const Tensor& image,
                             ForwardCache& cache) {
    if (image.shape.size() != 3 || image.dim(0) != 1) throw InputError("forward: image must be 1xHxW");
    const int h = image.dim(1), w = image.dim(2);
    if (h % kStride != 0 || w % kStride != 0 || h == 0 || w == 0)
        throw InputError("forward: image dims must be positive multiples of 8");

    const ParamLayout& L = params.layout;
    const double* P = params.flat.data();

    cache.input = image;
    cache.r1 = Tensor::zeros({kC1, h, w});
    fill_bias(cache.r1.data.data(), P + L.conv1_b, kC1, static_cast<std::size_t>(h) * w);
    conv3x3(image.data.data(), 1, P + L.conv1_w, cache.r1.data.data(), kC1, h, w);
    relu_inplace(cache.r1.data.data(), cache.r1.data.size());
    const int h2 = h / 2, w2 = w / 2;
    cache.p1 = Tensor::zeros({kC1, h2, w2});
    cache.argmax1.resize(cache.p1.data.size());
    maxpool2x2(cache.r1.data.data(), kC1, h, w, cache.p1.data.data(), cache.argmax1.data());

    cache.r2 = Tensor::zeros({kC2, h2, w2});
    fill_bias(cache.r2.data.data(), P + L.conv2_b, kC2, static_cast<std::size_t>(h2) * w2);
    conv3x3(cache.p1.data.data(), kC1, P + L.conv2_w, cache.r2.data.data(), kC2, h2, w2);
    relu_inplace(cache.r2.data.data(), cache.r2.data.size());
    const int h4 = h2 / 2, w4 = w2 / 2;
    cache.p2 = Tensor::zeros({kC2, h4, w4});
    cache.argmax2.resize(cache.p2.data.size());
    maxpool2x2(cache.r2.data.data(), kC2, h2, w2, cache.p2.data.data(), cache.argmax2.data());

    cache.r3 = Tensor::zeros({kC3, h4, w4});
    fill_bias(cache.r3.data.data(), P + L.conv3_b, kC3, static_cast<std::size_t>(h4) * w4);
    conv3x3(cache.p2.data.data(), kC2, P + L.conv3_w, cache.r3.data.data(), kC3, h4, w4);
    relu_inplace(cache.r3.data.data(), cache.r3.data.size());
    const int h8 = h4 / 2, w8 = w4 / 2;
    cache.p3 = Tensor::zeros({kC3, h8, w8});
    cache.argmax3.resize(cache.p3.data.size());
    maxpool2x2(cache.r3.data.data(), kC3, h4, w4, cache.p3.data.data(), cache.argmax3.data());

    const int a = L.num_sizes;
    const std::size_t plane = static_cast<std::size_t>(h8) * w8;
    Tensor head = Tensor::zeros({5 * a, h8, w8});
    conv1x1(cache.p3.data.data(), kC3, P + L.head_w, P + L.head_b, head.data.data(), 5 * a, plane);

    ForwardResult out;
    out.feature_map = cache.p3;
    out.objectness = Tensor::zeros({a, h8, w8});
    out.deltas = Tensor::zeros({4 * a, h8, w8});
    std::memcpy(out.objectness.data.data(), head.data.data(), sizeof(double) * plane * a);
    std::memcpy(out.deltas.data.data(), head.data.data() + plane * a, sizeof(double) * plane * 4 * a);
    if (!out.feature_map.all_finite() || !out.objectness.all_finite() || !out.deltas.all_finite())
        throw NumericError("forward: non-finite output");
    return out;
}

ForwardResult forward(const ExtractorParams& params, const Tensor& image) {
    ForwardCache cache;
    return forward_cached(params, image, cache);
}

void backward(const ExtractorParams& params, const ForwardCache& cache, const Tensor& d_feature_map,
              const Tensor& d_objectness, const Tensor& d_deltas, ExtractorGrads& grads) {
    const ParamLayout& L = params.layout;
    if (grads.flat.size() != L.total) throw InputError("backward: gradient layout mismatch");
    const double* P = params.flat.data();
    double* G = grads.flat.data();

    const int h8 = cache.p3.dim(1), w8 = cache.p3.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h8) * w8;
    const int a = L.num_sizes;
    const int hc = 5 * a;

    auto check = [&](const Tensor& t, int c) {
        if (t.numel() == 0) return false;
        if (t.dim(0) != c || t.dim(1) != h8 || t.dim(2) != w8)
            throw InputError("backward: upstream gradient shape mismatch");
        return true;
    };

    // Head: d_p3 += W^T d_head; dW += d_head x p3; db += sum d_head.
    Tensor d_p3 = Tensor::zeros({kC3, h8, w8});
    if (check(d_feature_map, kC3)) d_p3.data = d_feature_map.data;

    std::vector<double> d_head(plane * hc, 0.0);
    if (check(d_objectness, a))
        std::memcpy(d_head.data(), d_objectness.data.data(), sizeof(double) * plane * a);
    if (check(d_deltas, 4 * a))
        std::memcpy(d_head.data() + plane * a, d_deltas.data.data(), sizeof(double) * plane * 4 * a);

    for (int co = 0; co < hc; ++co) {
        const double* dop = d_head.data() + co * plane;
        double bsum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) bsum += dop[i];
        G[L.head_b + co] += bsum;
        for (int ci = 0; ci < kC3; ++ci) {
            const double* inp = cache.p3.data.data() + ci * plane;
            G[L.head_w + static_cast<std::size_t>(co) * kC3 + ci] += row_dot(dop, inp, static_cast<int>(plane));
            const double wv = P[L.head_w + static_cast<std::size_t>(co) * kC3 + ci];
            double* dip = d_p3.data.data() + ci * plane;
            for (std::size_t i = 0; i < plane; ++i) dip[i] += wv * dop[i];
        }
    }

    const int h4 = cache.r3.dim(1), w4 = cache.r3.dim(2);
    Tensor d_r3 = Tensor::zeros({kC3, h4, w4});
    maxpool2x2_backward(d_p3.data.data(), kC3, h8, w8, cache.argmax3.data(), d_r3.data.data(), h4, w4);
    for (std::size_t i = 0; i < d_r3.data.size(); ++i)
        if (cache.r3.data[i] <= 0.0) d_r3.data[i] = 0.0;

    Tensor d_p2 = Tensor::zeros({kC2, h4, w4});
    conv3x3_backward_params(cache.p2.data.data(), kC2, d_r3.data.data(), kC3, h4, w4,
                            G + L.conv3_w, G + L.conv3_b);
    conv3x3_backward_input(d_p2.data.data(), kC2, P + L.conv3_w, d_r3.data.data(), kC3, h4, w4);

    const int h2 = cache.r2.dim(1), w2 = cache.r2.dim(2);
    Tensor d_r2 = Tensor::zeros({kC2, h2, w2});
    maxpool2x2_backward(d_p2.data.data(), kC2, h4, w4, cache.argmax2.data(), d_r2.data.data(), h2, w2);
    for (std::size_t i = 0; i < d_r2.data.size(); ++i)
        if (cache.r2.data[i] <= 0.0) d_r2.data[i] = 0.0;

    Tensor d_p1 = Tensor::zeros({kC1, h2, w2});
    conv3x3_backward_params(cache.p1.data.data(), kC1, d_r2.data.data(), kC2, h2, w2,
                            G + L.conv2_w, G + L.conv2_b);
    conv3x3_backward_input(d_p1.data.data(), kC1, P + L.conv2_w, d_r2.data.data(), kC2, h2, w2);

    const int h = cache.r1.dim(1), w = cache.r1.dim(2);
    Tensor d_r1 = Tensor::zeros({kC1, h, w});
    maxpool2x2_backward(d_p1.data.data(), kC1, h2, w2, cache.argmax1.data(), d_r1.data.data(), h, w);
    for (std::size_t i = 0; i < d_r1.data.size(); ++i)
        if (cache.r1.data[i] <= 0.0) d_r1.data[i] = 0.0;

    // Input gradient is never consumed, so conv1 only needs parameter grads.
    conv3x3_backward_params(cache.input.data.data(), 1, d_r1.data.data(), kC1, h, w,
                            G + L.conv1_w, G + L.conv1_b);
}

SgdOptimizer::SgdOptimizer(double lr, double momentum, double weight_decay,
                           const ParamLayout& layout)
    : lr_(lr), momentum_(momentum), weight_decay_(weight_decay), velocity_(layout.total, 0.0) {
    if (lr <= 0.0) throw InputError("SgdOptimizer: lr must be positive");
}

void SgdOptimizer::step(ExtractorParams& params, const ExtractorGrads& grads) {
    if (grads.flat.size() != velocity_.size() || params.flat.size() != velocity_.size())
        throw InputError("SgdOptimizer: size mismatch");
    for (std::size_t i = 0; i < velocity_.size(); ++i) {
        velocity_[i] = momentum_ * velocity_[i] + grads.flat[i] + weight_decay_ * params.flat[i];
        params.flat[i] -= lr_ * velocity_[i];
        if (!std::isfinite(params.flat[i])) throw NumericError("SgdOptimizer: non-finite update");
    }
}

}  // namespace obidet

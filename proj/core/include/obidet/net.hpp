#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "obidet/tensor.hpp"

namespace obidet {

// Fixed tiny backbone: three conv(3x3, pad 1) -> ReLU -> maxpool(2x2) blocks
// (1 -> 16 -> 32 -> 64 channels, total stride 8) and a 1x1 detection head
// producing 5 channels per anchor size: A objectness logits first, then the
// 4A box deltas (anchor a, coordinate c at channel A + 4a + c).
inline constexpr int kC1 = 16;
inline constexpr int kC2 = 32;
inline constexpr int kC3 = 64;
inline constexpr int kStride = 8;
inline constexpr int kFeatureChannels = kC3;

struct ParamLayout {
    int num_sizes = 0;  // A
    std::size_t conv1_w = 0, conv1_b = 0, conv2_w = 0, conv2_b = 0;
    std::size_t conv3_w = 0, conv3_b = 0, head_w = 0, head_b = 0;
    std::size_t total = 0;

    explicit ParamLayout(int a);
    int head_channels() const { return 5 * num_sizes; }
};

/// All weights in one flat buffer, declared checkpoint order:
/// conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, head.w, head.b.
struct ExtractorParams {
    ParamLayout layout;
    std::vector<double> flat;

    explicit ExtractorParams(int num_sizes);

    /// He-style fan-in scaled uniform weights, zero biases, from `seed`.
    static ExtractorParams init(int num_sizes, std::uint64_t seed);

    std::span<double> block_w1() { return {flat.data() + layout.conv1_w, layout.conv1_b - layout.conv1_w}; }
    int num_sizes() const { return layout.num_sizes; }
};

/// Parameter-shaped gradient accumulator.
struct ExtractorGrads {
    std::vector<double> flat;
    explicit ExtractorGrads(const ParamLayout& layout) : flat(layout.total, 0.0) {}
    void zero() { std::fill(flat.begin(), flat.end(), 0.0); }
};

struct ForwardResult {
    Tensor feature_map;  // kC3 x H/8 x W/8, stride 8
    Tensor objectness;   // A x H/8 x W/8
    Tensor deltas;       // 4A x H/8 x W/8
};

/// Post-ReLU and pooled activations retained for the backward pass.
/// Pool argmax holds the flat index of the winning element (row-major
/// first-wins on ties).
struct ForwardCache {
    Tensor input;
    Tensor r1, p1, r2, p2, r3, p3;
    std::vector<std::int32_t> argmax1, argmax2, argmax3;
};

ForwardResult forward(const ExtractorParams& params, const Tensor& image);
ForwardResult forward_cached(const ExtractorParams& params, const Tensor& image, ForwardCache& cache);

/// Exact reverse-mode gradient of forward_cached. Upstream gradients may be
/// zero-sized tensors to mean "all zeros". Accumulates into `grads`.
void backward(const ExtractorParams& params, const ForwardCache& cache, const Tensor& d_feature_map,
              const Tensor& d_objectness, const Tensor& d_deltas, ExtractorGrads& grads);

/// Plain SGD with momentum and decoupled-from-nothing L2 weight decay:
/// v <- momentum*v + g + wd*w; w <- w - lr*v. Velocity persists across calls.
class SgdOptimizer {
public:
    SgdOptimizer(double lr, double momentum, double weight_decay, const ParamLayout& layout);
    void step(ExtractorParams& params, const ExtractorGrads& grads);

    double lr() const { return lr_; }

private:
    double lr_, momentum_, weight_decay_;
    std::vector<double> velocity_;
};

/// Pads the bottom/right edge with zeros so both dims divide kStride.
Tensor pad_to_stride(const Tensor& image);

// Checkpoint file: 16-byte header (8-byte magic, u32 version, u32 anchor
// size count), then the flat parameter vector as little-endian f64.
void save_checkpoint(const ExtractorParams& params, const std::filesystem::path& path);
ExtractorParams load_checkpoint(const std::filesystem::path& path);

}  // namespace obidet

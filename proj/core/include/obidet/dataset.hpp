#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "obidet/geometry.hpp"
#include "obidet/tensor.hpp"

namespace obidet {

enum class SampleSource : std::uint8_t { Rubbing, FontLibrary };

/// One grayscale image with its ground-truth boxes, pixel values in [0,1].
struct ImageSample {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // row-major h x w
    std::vector<Box> boxes;
    SampleSource source = SampleSource::Rubbing;

    double pixel(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    Tensor to_tensor() const;
};

struct GenSpec {
    int image_size = 128;  // square, divisible by 8
    int glyphs_min = 2;
    int glyphs_max = 5;
    int cracks_min = 1;
    int cracks_max = 3;
    double noise_density = 0.02;
    std::uint64_t seed = 0;
};

/// Noisy detection image: textured dark background, bright stroke glyphs in
/// non-overlapping labeled boxes, unlabeled bright cracks, salt-and-pepper
/// noise. Fully determined by (spec.seed, index).
ImageSample gen_rubbing(const GenSpec& spec, int index);

/// Clean exemplar: white background, one dark glyph, tight box annotation.
ImageSample gen_font(const GenSpec& spec, int index);

/// Images as binary 8-bit PGM plus one annotations.json:
/// {"images":[{"file":"<name>.pgm","boxes":[[x1,y1,x2,y2],...]}]}.
void save_dataset(const std::vector<ImageSample>& samples, const std::filesystem::path& dir);

/// Inverse of save_dataset up to 8-bit pixel quantization. A directory with
/// no annotations.json loads as an empty dataset. `source` tags the loaded
/// samples (the annotation schema does not carry it).
std::vector<ImageSample> load_dataset(const std::filesystem::path& dir,
                                      SampleSource source = SampleSource::Rubbing);

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<double>& pixels);
ImageSample read_pgm(const std::filesystem::path& path);

}  // namespace obidet

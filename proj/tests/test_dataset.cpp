#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "obidet/dataset.hpp"
#include "obidet/errors.hpp"

using namespace obidet;
namespace fs = std::filesystem;

TEST_SUITE("dataset") {

TEST_CASE("rubbing generation is deterministic in (seed, index)") {
    GenSpec spec;
    const ImageSample a = gen_rubbing(spec, 17);
    const ImageSample b = gen_rubbing(spec, 17);
    CHECK(a.pixels == b.pixels);
    CHECK(a.boxes.size() == b.boxes.size());
    for (std::size_t i = 0; i < a.boxes.size(); ++i) {
        CHECK(a.boxes[i].x1 == b.boxes[i].x1);
        CHECK(a.boxes[i].y2 == b.boxes[i].y2);
    }
    const ImageSample c = gen_rubbing(spec, 18);
    CHECK(a.pixels != c.pixels);
}

TEST_CASE("clean single-glyph image without noise or cracks") {
    GenSpec spec;
    spec.glyphs_min = 1;
    spec.glyphs_max = 1;
    spec.cracks_min = 0;
    spec.cracks_max = 0;
    spec.noise_density = 0.0;
    const ImageSample s = gen_rubbing(spec, 3);
    REQUIRE(s.boxes.size() == 1);
    // exactly one bright region, inside the labeled box
    int bright_outside = 0, bright_inside = 0;
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            if (s.pixel(y, x) < 0.5) continue;
            const bool inside = x >= s.boxes[0].x1 && x < s.boxes[0].x2 && y >= s.boxes[0].y1 &&
                                y < s.boxes[0].y2;
            (inside ? bright_inside : bright_outside) += 1;
        }
    CHECK(bright_inside > 0);
    CHECK(bright_outside == 0);
}

TEST_CASE("generator property sweep over 200 rubbings") {
    GenSpec spec;
    spec.seed = 5;
    for (int i = 0; i < 200; ++i) {
        const ImageSample s = gen_rubbing(spec, i);
        CHECK(!s.boxes.empty());
        for (const Box& b : s.boxes) {
            CHECK(b.valid());
            CHECK(b.x1 >= 0.0);
            CHECK(b.y1 >= 0.0);
            CHECK(b.x2 <= s.width);
            CHECK(b.y2 <= s.height);
            CHECK(b.area() >= 64.0);
            // label soundness: at least one glyph-bright pixel inside
            int bright = 0;
            for (int y = static_cast<int>(b.y1); y < static_cast<int>(b.y2); ++y)
                for (int x = static_cast<int>(b.x1); x < static_cast<int>(b.x2); ++x)
                    bright += s.pixel(y, x) > 0.6;
            CHECK(bright >= 1);
        }
        for (double p : s.pixels) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
}

TEST_CASE("font images are clean single-box exemplars") {
    GenSpec spec;
    spec.seed = 9;
    for (int i = 0; i < 50; ++i) {
        const ImageSample s = gen_font(spec, i);
        REQUIRE(s.boxes.size() == 1);
        CHECK(s.source == SampleSource::FontLibrary);
        const Box& b = s.boxes[0];
        CHECK(b.area() >= 64.0);
        // nothing outside the box rises above the white background
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x) {
                const bool inside = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
                if (!inside) CHECK(s.pixel(y, x) == 1.0);
            }
    }
    const ImageSample a = gen_font(spec, 1);
    const ImageSample b = gen_font(spec, 1);
    CHECK(a.pixels == b.pixels);
}

TEST_CASE("rubbing and font draws differ for the same (seed, index)") {
    GenSpec spec;
    const ImageSample r = gen_rubbing(spec, 0);
    const ImageSample f = gen_font(spec, 0);
    CHECK(r.pixels != f.pixels);
}

TEST_CASE("save and load round-trip") {
    const fs::path dir = fs::temp_directory_path() / "obidet_dataset_test";
    fs::remove_all(dir);
    GenSpec spec;
    spec.seed = 21;
    std::vector<ImageSample> samples;
    for (int i = 0; i < 4; ++i) samples.push_back(gen_rubbing(spec, i));
    samples.push_back(gen_font(spec, 0));
    save_dataset(samples, dir);

    const std::vector<ImageSample> loaded = load_dataset(dir);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].width == samples[i].width);
        REQUIRE(loaded[i].boxes.size() == samples[i].boxes.size());
        for (std::size_t b = 0; b < samples[i].boxes.size(); ++b) {
            CHECK(loaded[i].boxes[b].x1 == samples[i].boxes[b].x1);  // exact through JSON
            CHECK(loaded[i].boxes[b].y2 == samples[i].boxes[b].y2);
        }
        double max_err = 0.0;
        for (std::size_t p = 0; p < samples[i].pixels.size(); ++p)
            max_err = std::max(max_err, std::abs(loaded[i].pixels[p] - samples[i].pixels[p]));
        CHECK(max_err <= 1.0 / 255.0);
    }
    fs::remove_all(dir);
}

TEST_CASE("empty directory loads as an empty dataset") {
    const fs::path dir = fs::temp_directory_path() / "obidet_empty_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    CHECK(load_dataset(dir).empty());
    fs::remove_all(dir);
}

TEST_CASE("truncated pgm raises a format error naming the file") {
    const fs::path dir = fs::temp_directory_path() / "obidet_trunc_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream pgm(dir / "bad.pgm", std::ios::binary);
        pgm << "P5\n16 16\n255\n";
        pgm << "only a few bytes";
    }
    try {
        read_pgm(dir / "bad.pgm");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.file().find("bad.pgm") != std::string::npos);
        CHECK(e.byte_offset() > 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("pgm parser handles comments and rejects bad headers") {
    const fs::path dir = fs::temp_directory_path() / "obidet_pgm_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream pgm(dir / "comment.pgm", std::ios::binary);
        pgm << "P5\n# a comment line\n2 2\n255\n";
        pgm.put(0);
        pgm.put(64);
        pgm.put(static_cast<char>(128));
        pgm.put(static_cast<char>(255));
    }
    const ImageSample s = read_pgm(dir / "comment.pgm");
    CHECK(s.width == 2);
    CHECK(s.pixels[3] == doctest::Approx(1.0));

    {
        std::ofstream pgm(dir / "ascii.pgm", std::ios::binary);
        pgm << "P2\n2 2\n255\n0 1 2 3\n";
    }
    CHECK_THROWS_AS(read_pgm(dir / "ascii.pgm"), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("pixel quantization round-trips through write_pgm") {
    const fs::path dir = fs::temp_directory_path() / "obidet_quant_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::vector<double> px{0.0, 0.5, 1.0, 0.123};
    write_pgm(dir / "q.pgm", 2, 2, px);
    const ImageSample s = read_pgm(dir / "q.pgm");
    for (int i = 0; i < 4; ++i) CHECK(std::abs(s.pixels[i] - px[i]) <= 1.0 / 255.0);
    fs::remove_all(dir);
}

}  // TEST_SUITE

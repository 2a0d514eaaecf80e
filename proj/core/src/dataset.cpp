#include "obidet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "obidet/errors.hpp"
#include "obidet/rng.hpp"

namespace obidet {

namespace {

constexpr std::uint64_t kRubbingStream = 0x72756262;
constexpr std::uint64_t kFontStream = 0x666f6e74;

struct Canvas {
    int size;
    std::vector<double>& px;
    void stamp(double x, double y, double radius, double value) {
        const int x0 = std::max(0, static_cast<int>(std::floor(x - radius)));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(x + radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(y - radius)));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(y + radius)));
        for (int yy = y0; yy <= y1; ++yy)
            for (int xx = x0; xx <= x1; ++xx) {
                const double dx = xx - x, dy = yy - y;
                if (dx * dx + dy * dy <= radius * radius)
                    px[static_cast<std::size_t>(yy) * size + xx] =
                        std::max(px[static_cast<std::size_t>(yy) * size + xx], value);
            }
    }
    void line(double ax, double ay, double bx, double by, double radius, double value) {
        const double len = std::hypot(bx - ax, by - ay);
        const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            stamp(ax + t * (bx - ax), ay + t * (by - ay), radius, value);
        }
    }
};

// Polyline glyph: vertices sampled in the unit square, affine-mapped so the
// polyline spans the whole target rect, then drawn as thick capsules.
// Returns the tight pixel box of what was drawn.
Box draw_glyph(Canvas& canvas, Rng& rng, double rx1, double ry1, double rx2, double ry2,
               double intensity, bool dark_on_light) {
    const int nseg = static_cast<int>(rng.uniform_int(3, 6));
    std::vector<double> vx(nseg + 1), vy(nseg + 1);
    for (int i = 0; i <= nseg; ++i) {
        vx[i] = rng.uniform();
        vy[i] = rng.uniform();
    }
    double mnx = vx[0], mxx = vx[0], mny = vy[0], mxy = vy[0];
    for (int i = 1; i <= nseg; ++i) {
        mnx = std::min(mnx, vx[i]);
        mxx = std::max(mxx, vx[i]);
        mny = std::min(mny, vy[i]);
        mxy = std::max(mxy, vy[i]);
    }
    const double sx = mxx > mnx ? (rx2 - rx1) / (mxx - mnx) : 0.0;
    const double sy = mxy > mny ? (ry2 - ry1) / (mxy - mny) : 0.0;
    for (int i = 0; i <= nseg; ++i) {
        vx[i] = rx1 + (vx[i] - mnx) * sx;
        vy[i] = ry1 + (vy[i] - mny) * sy;
    }
    const double radius = rng.uniform(0.7, 1.2);

    // Track painted extent by drawing into a scratch layer.
    std::vector<double> scratch(canvas.px.size(), 0.0);
    Canvas layer{canvas.size, scratch};
    for (int i = 0; i < nseg; ++i) layer.line(vx[i], vy[i], vx[i + 1], vy[i + 1], radius, 1.0);

    int px0 = canvas.size, px1 = -1, py0 = canvas.size, py1 = -1;
    for (int y = 0; y < canvas.size; ++y)
        for (int x = 0; x < canvas.size; ++x)
            if (scratch[static_cast<std::size_t>(y) * canvas.size + x] > 0.0) {
                px0 = std::min(px0, x);
                px1 = std::max(px1, x);
                py0 = std::min(py0, y);
                py1 = std::max(py1, y);
                auto& dst = canvas.px[static_cast<std::size_t>(y) * canvas.size + x];
                dst = dark_on_light ? std::min(dst, intensity) : std::max(dst, intensity);
            }
    return Box{static_cast<double>(px0), static_cast<double>(py0), static_cast<double>(px1 + 1),
               static_cast<double>(py1 + 1)};
}

bool boxes_overlap(const Box& a, const Box& b, double margin) {
    return a.x1 - margin < b.x2 && b.x1 - margin < a.x2 && a.y1 - margin < b.y2 &&
           b.y1 - margin < a.y2;
}

void validate_spec(const GenSpec& spec) {
    if (spec.image_size < 16 || spec.image_size % 8 != 0)
        throw InputError("GenSpec: image_size must be a multiple of 8, >= 16");
    if (spec.glyphs_min < 1 || spec.glyphs_max < spec.glyphs_min)
        throw InputError("GenSpec: bad glyph count range");
    if (spec.cracks_min < 0 || spec.cracks_max < spec.cracks_min)
        throw InputError("GenSpec: bad crack count range");
    if (spec.noise_density < 0.0 || spec.noise_density > 1.0)
        throw InputError("GenSpec: noise_density outside [0,1]");
}

std::string sample_filename(SampleSource source, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%05d.pgm",
                  source == SampleSource::Rubbing ? "rubbing" : "font", index);
    return buf;
}

}  // namespace

Tensor ImageSample::to_tensor() const {
    return Tensor({1, height, width}, pixels);
}

ImageSample gen_rubbing(const GenSpec& spec, int index) {
    validate_spec(spec);
    const int size = spec.image_size;
    Rng rng(derive_seed(mix64(spec.seed) ^ kRubbingStream, static_cast<std::uint64_t>(index)));

    ImageSample out;
    out.width = size;
    out.height = size;
    out.source = SampleSource::Rubbing;
    out.pixels.resize(static_cast<std::size_t>(size) * size);
    for (double& p : out.pixels) p = 0.08 + 0.10 * rng.uniform();
    Canvas canvas{size, out.pixels};

    // Glyphs in non-overlapping boxes; a crowded image just gets fewer.
    const int want = static_cast<int>(rng.uniform_int(spec.glyphs_min, spec.glyphs_max));
    const int max_side = std::max(8, std::min(40, size / 3));
    const int min_side = std::min(16, max_side);
    for (int g = 0; g < want; ++g) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            const int w = static_cast<int>(rng.uniform_int(min_side, max_side));
            const int h = static_cast<int>(rng.uniform_int(min_side, max_side));
            const int x1 = static_cast<int>(rng.uniform_int(2, size - 2 - w));
            const int y1 = static_cast<int>(rng.uniform_int(2, size - 2 - h));
            const Box place{static_cast<double>(x1), static_cast<double>(y1),
                            static_cast<double>(x1 + w), static_cast<double>(y1 + h)};
            bool clear = true;
            for (const Box& b : out.boxes)
                if (boxes_overlap(place, b, 3.0)) {
                    clear = false;
                    break;
                }
            if (!clear) continue;
            const double intensity = 0.75 + 0.20 * rng.uniform();
            out.boxes.push_back(draw_glyph(canvas, rng, place.x1 + 1, place.y1 + 1, place.x2 - 1,
                                           place.y2 - 1, intensity, false));
            break;
        }
    }

    // Cracks: long thin random walks at glyph-like intensity, unlabeled.
    const int cracks = static_cast<int>(rng.uniform_int(spec.cracks_min, spec.cracks_max));
    for (int c = 0; c < cracks; ++c) {
        const int edge = static_cast<int>(rng.uniform_int(0, 3));
        double x, y, angle;
        const double t = rng.uniform(0.1, 0.9) * size;
        switch (edge) {
            case 0: x = t; y = 0; angle = rng.uniform(0.25, 0.75) * M_PI; break;
            case 1: x = t; y = size - 1; angle = -rng.uniform(0.25, 0.75) * M_PI; break;
            case 2: x = 0; y = t; angle = rng.uniform(-0.25, 0.25) * M_PI; break;
            default: x = size - 1; y = t; angle = M_PI + rng.uniform(-0.25, 0.25) * M_PI; break;
        }
        const double intensity = 0.75 + 0.20 * rng.uniform();
        const double radius = rng.uniform(0.5, 0.9);
        for (int step = 0; step < 3 * size; ++step) {
            canvas.stamp(x, y, radius, intensity);
            angle += rng.uniform(-0.35, 0.35);
            x += std::cos(angle);
            y += std::sin(angle);
            if (x < 0 || x >= size || y < 0 || y >= size) break;
        }
    }

    if (spec.noise_density > 0.0) {
        for (double& p : out.pixels)
            if (rng.uniform() < spec.noise_density) p = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
    return out;
}

ImageSample gen_font(const GenSpec& spec, int index) {
    validate_spec(spec);
    const int size = spec.image_size;
    Rng rng(derive_seed(mix64(spec.seed) ^ kFontStream, static_cast<std::uint64_t>(index)));

    ImageSample out;
    out.width = size;
    out.height = size;
    out.source = SampleSource::FontLibrary;
    out.pixels.assign(static_cast<std::size_t>(size) * size, 1.0);
    Canvas canvas{size, out.pixels};

    const int side_lo = std::max(16, size / 3), side_hi = 2 * size / 3;
    const int w = static_cast<int>(rng.uniform_int(side_lo, side_hi));
    const int h = static_cast<int>(rng.uniform_int(side_lo, side_hi));
    const int x1 = static_cast<int>(rng.uniform_int(4, size - 4 - w));
    const int y1 = static_cast<int>(rng.uniform_int(4, size - 4 - h));
    const double intensity = 0.05 + 0.15 * rng.uniform();
    out.boxes.push_back(draw_glyph(canvas, rng, x1, y1, x1 + w, y1 + h, intensity, true));
    return out;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<double>& pixels) {
    if (static_cast<std::size_t>(width) * height != pixels.size())
        throw InputError("write_pgm: pixel count mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("write_pgm: cannot open " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> bytes(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = std::clamp(pixels[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write_pgm: write failed for " + path.string());
}

ImageSample read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("read_pgm: cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = path.string();

    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < content.size()) {
            if (std::isspace(static_cast<unsigned char>(content[pos]))) {
                ++pos;
            } else if (content[pos] == '#') {
                while (pos < content.size() && content[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) {
        skip_space();
        const std::size_t start = pos;
        long v = 0;
        while (pos < content.size() && std::isdigit(static_cast<unsigned char>(content[pos]))) {
            v = v * 10 + (content[pos] - '0');
            ++pos;
        }
        if (pos == start) throw FormatError(name, start, std::string("expected ") + what);
        return v;
    };

    if (content.size() < 2 || content[0] != 'P' || content[1] != '5')
        throw FormatError(name, 0, "not a binary PGM (P5)");
    pos = 2;
    const long w = read_int("width");
    const long h = read_int("height");
    const long maxval = read_int("maxval");
    if (w < 1 || h < 1) throw FormatError(name, pos, "non-positive dimensions");
    if (maxval != 255) throw FormatError(name, pos, "unsupported maxval (need 255)");
    if (pos >= content.size() || !std::isspace(static_cast<unsigned char>(content[pos])))
        throw FormatError(name, pos, "missing whitespace after maxval");
    ++pos;

    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (content.size() - pos < need)
        throw FormatError(name, content.size(), "truncated pixel data");

    ImageSample out;
    out.width = static_cast<int>(w);
    out.height = static_cast<int>(h);
    out.pixels.resize(need);
    for (std::size_t i = 0; i < need; ++i)
        out.pixels[i] = static_cast<unsigned char>(content[pos + i]) / 255.0;
    return out;
}

void save_dataset(const std::vector<ImageSample>& samples, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json images = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string file = sample_filename(samples[i].source, static_cast<int>(i));
        write_pgm(dir / file, samples[i].width, samples[i].height, samples[i].pixels);
        nlohmann::json boxes = nlohmann::json::array();
        for (const Box& b : samples[i].boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
        images.push_back({{"file", file}, {"boxes", boxes}});
    }
    nlohmann::json root{{"images", images}};
    std::ofstream out(dir / "annotations.json", std::ios::trunc);
    if (!out) throw InputError("save_dataset: cannot write annotations.json in " + dir.string());
    out << root.dump(2) << "\n";
}

std::vector<ImageSample> load_dataset(const std::filesystem::path& dir, SampleSource source) {
    const std::filesystem::path ann = dir / "annotations.json";
    if (!std::filesystem::exists(ann)) return {};
    std::ifstream in(ann);
    if (!in) throw InputError("load_dataset: cannot open " + ann.string());
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(ann.string(), e.byte, e.what());
    }
    std::vector<ImageSample> out;
    if (!root.contains("images")) return out;
    for (const auto& entry : root["images"]) {
        ImageSample s = read_pgm(dir / entry.at("file").get<std::string>());
        s.source = source;
        for (const auto& b : entry.at("boxes")) {
            Box box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                    b.at(3).get<double>()};
            if (!box.valid()) throw FormatError(ann.string(), 0, "degenerate box for " +
                                                entry.at("file").get<std::string>());
            s.boxes.push_back(box);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace obidet

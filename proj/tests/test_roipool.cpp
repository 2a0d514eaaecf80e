#include <doctest.h>

#include <cmath>

#include "obidet/errors.hpp"
#include "obidet/rng.hpp"
#include "obidet/roi_align.hpp"
#include "oracles.hpp"

using namespace obidet;

namespace {

Tensor random_map(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({c, h, w});
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

Box random_roi(Rng& rng, int stride, int h, int w) {
    // anywhere from slightly outside to well inside the map
    const double x1 = rng.uniform(-stride * 2.0, (w - 1.0) * stride);
    const double y1 = rng.uniform(-stride * 2.0, (h - 1.0) * stride);
    return {x1, y1, x1 + rng.uniform(4.0, 6.0 * stride), y1 + rng.uniform(4.0, 6.0 * stride)};
}

}  // namespace

TEST_SUITE("roipool") {

TEST_CASE("constant feature map pools to the constant") {
    Tensor map = Tensor::zeros({3, 8, 8});
    map.data.assign(map.data.size(), 0.625);
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        // keep the box strictly inside so no zero taps mix in
        const double x1 = rng.uniform(8.0, 30.0), y1 = rng.uniform(8.0, 30.0);
        const Box box{x1, y1, x1 + rng.uniform(4.0, 24.0), y1 + rng.uniform(4.0, 24.0)};
        const FeatureVector out = roi_align(map, 8, box);
        REQUIRE(out.values.size() == 3u * 16);
        for (double v : out.values) CHECK(v == doctest::Approx(0.625).epsilon(1e-12));
    }
}

TEST_CASE("single nonzero cell pools only from that cell") {
    Tensor map = Tensor::zeros({1, 8, 8});
    map.at(0, 3, 4) = 2.0;
    // box covering exactly cell (3,4) in feature coords: x in [4,5)*8, y in [3,4)*8
    const Box box{32.0, 24.0, 40.0, 32.0};
    const FeatureVector out = roi_align(map, 8, box);
    const std::vector<double> ref = oracles::naive_roi_align(map, 8, box, kRoiOutSize);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        CHECK(out.values[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    double sum = 0.0;
    for (double v : out.values) sum += v;
    CHECK(sum > 0.0);
}

TEST_CASE("matches the per-sample-point bilinear oracle on 1000 random pairs") {
    Rng rng(7);
    double max_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Tensor map = random_map(2, 8, 8, 100 + trial);
        const Box box = random_roi(rng, 8, 8, 8);
        const FeatureVector out = roi_align(map, 8, box);
        const std::vector<double> ref = oracles::naive_roi_align(map, 8, box, kRoiOutSize);
        for (std::size_t i = 0; i < ref.size(); ++i)
            max_err = std::max(max_err, std::abs(ref[i] - out.values[i]));
    }
    CHECK(max_err <= 1e-6);
}

TEST_CASE("box entirely outside the map is flagged degenerate and zero") {
    const Tensor map = random_map(2, 8, 8, 3);
    const FeatureVector out = roi_align(map, 8, Box{-100.0, -100.0, -40.0, -40.0});
    CHECK(out.degenerate);
    for (double v : out.values) CHECK(v == 0.0);
}

TEST_CASE("pooled gradient matches finite differences") {
    Tensor map = random_map(2, 8, 8, 11);
    const Box box{10.0, 6.0, 50.0, 44.0};
    Rng rng(12);
    std::vector<double> upstream(2 * kRoiOutSize * kRoiOutSize);
    for (double& v : upstream) v = rng.uniform(-1.0, 1.0);

    Tensor d_map = Tensor::zeros(map.shape);
    roi_align_backward(8, box, upstream, d_map);

    auto project = [&](const Tensor& m) {
        const FeatureVector f = roi_align(m, 8, box);
        double s = 0.0;
        for (std::size_t i = 0; i < f.values.size(); ++i) s += upstream[i] * f.values[i];
        return s;
    };
    const double h = 1e-3;
    double worst = 0.0;
    for (int probe = 0; probe < 40; ++probe) {
        const std::size_t idx =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(map.data.size()) - 1));
        const double orig = map.data[idx];
        map.data[idx] = orig + h;
        const double fp = project(map);
        map.data[idx] = orig - h;
        const double fm = project(map);
        map.data[idx] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({1e-9, std::abs(fd), std::abs(d_map.data[idx])});
        worst = std::max(worst, std::abs(fd - d_map.data[idx]) / denom);
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("l2 normalization contract") {
    SUBCASE("3-4-5 vector") {
        FeatureVector v;
        v.values = {3.0, 4.0, 0.0, 0.0};
        const FeatureVector n = l2_normalize(v);
        CHECK(n.values[0] == doctest::Approx(0.6));
        CHECK(n.values[1] == doctest::Approx(0.8));
        CHECK(n.normalized);
    }
    SUBCASE("idempotent on unit vectors") {
        FeatureVector v;
        v.values = {1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)};
        const FeatureVector n = l2_normalize(v);
        CHECK(std::abs(n.values[0] - v.values[0]) <= 1e-12);
        CHECK(std::abs(n.values[1] - v.values[1]) <= 1e-12);
    }
    SUBCASE("zero vector is flagged, not divided") {
        FeatureVector v;
        v.values = {0.0, 0.0, 0.0};
        const FeatureVector n = l2_normalize(v);
        CHECK(n.degenerate);
        for (double x : n.values) CHECK(x == 0.0);
    }
    SUBCASE("random vectors come out unit length") {
        Rng rng(5);
        for (int i = 0; i < 200; ++i) {
            FeatureVector v;
            v.values.resize(32);
            for (double& x : v.values) x = rng.uniform(-2.0, 2.0);
            const FeatureVector n = l2_normalize(v);
            double sq = 0.0;
            for (double x : n.values) sq += x * x;
            CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("normalization pullback matches finite differences") {
    Rng rng(31);
    std::vector<double> v(16), upstream(16);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    for (double& x : upstream) x = rng.uniform(-1.0, 1.0);

    const std::vector<double> grad = l2_normalize_backward(v, upstream);
    auto project = [&](const std::vector<double>& inp) {
        FeatureVector f;
        f.values = inp;
        const FeatureVector n = l2_normalize(f);
        double s = 0.0;
        for (std::size_t i = 0; i < n.values.size(); ++i) s += upstream[i] * n.values[i];
        return s;
    };
    const double h = 1e-4;
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::vector<double> vp = v, vm = v;
        vp[i] += h;
        vm[i] -= h;
        const double fd = (project(vp) - project(vm)) / (2.0 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

}  // TEST_SUITE

#include <benchmark/benchmark.h>

#include "obidet/clustering.hpp"
#include "obidet/dataset.hpp"
#include "obidet/eval.hpp"
#include "obidet/net.hpp"
#include "obidet/rng.hpp"
#include "obidet/roi_align.hpp"
#include "obidet/trainer.hpp"

namespace {

using namespace obidet;

Tensor random_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({1, size, size});
    for (double& v : t.data) v = rng.uniform();
    return t;
}

void BM_forward_128(benchmark::State& state) {
    const ExtractorParams params = ExtractorParams::init(3, 1);
    const Tensor img = random_image(128, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward(params, img));
}
BENCHMARK(BM_forward_128);

void BM_forward_backward_128(benchmark::State& state) {
    const ExtractorParams params = ExtractorParams::init(3, 1);
    const Tensor img = random_image(128, 2);
    for (auto _ : state) {
        ForwardCache cache;
        ForwardResult out = forward_cached(params, img, cache);
        ExtractorGrads grads(params.layout);
        Tensor d_obj = Tensor::zeros(out.objectness.shape);
        d_obj.data.assign(d_obj.data.size(), 1e-3);
        backward(params, cache, Tensor{}, d_obj, Tensor{}, grads);
        benchmark::DoNotOptimize(grads.flat.data());
    }
}
BENCHMARK(BM_forward_backward_128);

void BM_roi_align(benchmark::State& state) {
    Tensor wide = Tensor::zeros({64, 16, 16});
    Rng rng(4);
    for (double& v : wide.data) v = rng.uniform();
    const Box box{10.0, 12.0, 90.0, 100.0};
    for (auto _ : state) benchmark::DoNotOptimize(roi_align(wide, 8, box));
}
BENCHMARK(BM_roi_align);

void BM_kmeans_512x63(benchmark::State& state) {
    Rng rng(5);
    std::vector<FeatureVector> points(512);
    for (auto& p : points) {
        p.values.resize(1024);
        for (double& v : p.values) v = rng.uniform(-1.0, 1.0);
        p = l2_normalize(p);
    }
    ClusterSpec spec;
    spec.k = 63;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        spec.seed = seed++;
        benchmark::DoNotOptimize(kmeans_fit(points, spec));
    }
}
BENCHMARK(BM_kmeans_512x63);

void BM_train_step(benchmark::State& state) {
    GenSpec gspec;
    std::vector<ImageSample> rubbing, font;
    for (int i = 0; i < 4; ++i) rubbing.push_back(gen_rubbing(gspec, i));
    for (int i = 0; i < 12; ++i) font.push_back(gen_font(gspec, i));
    TrainConfig cfg;
    cfg.iterations = 1;
    TrainState ts(cfg);
    int it = 0;
    for (auto _ : state) {
        std::vector<const ImageSample*> batch{&rubbing[it % 4], &rubbing[(it + 1) % 4]};
        std::vector<const ImageSample*> fonts;
        for (int idx : font_draws_for_iteration(cfg, static_cast<int>(font.size()), it))
            fonts.push_back(&font[idx]);
        benchmark::DoNotOptimize(train_step(ts, batch, fonts, cfg, it));
        ++it;
    }
}
BENCHMARK(BM_train_step);

void BM_nms_500(benchmark::State& state) {
    Rng rng(6);
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < 500; ++i) {
        const double x = rng.uniform(0.0, 100.0), y = rng.uniform(0.0, 100.0);
        boxes.push_back({x, y, x + rng.uniform(5.0, 30.0), y + rng.uniform(5.0, 30.0)});
        scores.push_back(rng.uniform());
    }
    for (auto _ : state) benchmark::DoNotOptimize(nms(boxes, scores, 0.5));
}
BENCHMARK(BM_nms_500);

}  // namespace

BENCHMARK_MAIN();

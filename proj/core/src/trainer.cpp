#include "obidet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "obidet/errors.hpp"
#include "obidet/format.hpp"
#include "obidet/rng.hpp"
#include "obidet/roi_align.hpp"

namespace obidet {

namespace {

constexpr int kNegSubsampleCap = 256;  // negatives kept per image, lowest IoU first
constexpr std::uint64_t kFontDrawStream = 0x64726177;
constexpr std::uint64_t kNegClusterStream = 0x6e656763;
constexpr std::uint64_t kPosClusterStream = 0x706f7363;

struct AnchorAddress {
    int size_idx, cell_y, cell_x;
};

AnchorAddress anchor_address(int anchor_idx, int num_sizes, int map_w) {
    const int cell = anchor_idx / num_sizes;
    return {anchor_idx % num_sizes, cell / map_w, cell % map_w};
}

FeatureVector pooled_feature(const Tensor& fmap, const Box& box, bool normalize) {
    FeatureVector raw = roi_align(fmap, kStride, box);
    return normalize ? l2_normalize(raw) : raw;
}

// Negative anchors ordered by ascending max-IoU (stable on ties), capped.
std::vector<int> select_negative_anchors(const AnchorMatch& match, int cap) {
    std::vector<int> negs;
    for (int i = 0; i < static_cast<int>(match.labels.size()); ++i)
        if (match.labels[i] == AnchorLabel::Negative) negs.push_back(i);
    std::stable_sort(negs.begin(), negs.end(),
                     [&](int a, int b) { return match.max_iou[a] < match.max_iou[b]; });
    if (static_cast<int>(negs.size()) > cap) negs.resize(cap);
    return negs;
}

ClusterModel cluster_features(const std::vector<FeatureVector>& feats, const TrainConfig& cfg,
                              int requested_k, std::uint64_t seed, bool* clamped) {
    ClusterSpec spec = cfg.cluster_method;
    spec.seed = seed;
    if (spec.method == ClusterMethod::KMeans) {
        spec.k = std::min<int>(requested_k, static_cast<int>(feats.size()));
        if (spec.k < requested_k) *clamped = true;
        return kmeans_fit(feats, spec);
    }
    return dbscan_fit(feats, spec);
}

}  // namespace

void TrainConfig::validate() const {
    if (lr <= 0.0) throw InputError("config: lr must be positive");
    if (momentum < 0.0 || weight_decay < 0.0) throw InputError("config: negative optimizer term");
    for (double l : lambdas)
        if (l < 0.0) throw InputError("config: lambdas must be non-negative");
    if (tau <= 0.0) throw InputError("config: tau must be positive");
    if (n_neg_clusters < 1 || m_pos_clusters < 1) throw InputError("config: cluster counts must be >= 1");
    if (obc_count < 1) throw InputError("config: obc_count must be >= 1");
    if (contrastive_enabled() && obc_count < m_pos_clusters)
        throw InputError("config: obc_count must be >= m_pos_clusters");
    if (!match_policy.valid()) throw InputError("config: invalid match policy");
    if (batch_size < 1) throw InputError("config: batch_size must be >= 1");
    if (iterations < 0) throw InputError("config: iterations must be >= 0");
    if (anchor_sizes.empty()) throw InputError("config: need at least one anchor size");
    for (int s : anchor_sizes)
        if (s < 1) throw InputError("config: anchor sizes must be positive");
    if (cluster_method.max_iters < 1 || cluster_method.tol <= 0.0)
        throw InputError("config: bad clustering termination settings");
    if (cluster_method.method == ClusterMethod::DBSCAN &&
        (cluster_method.eps <= 0.0 || cluster_method.min_samples < 1))
        throw InputError("config: bad DBSCAN settings");
}

std::vector<int> font_draws_for_iteration(const TrainConfig& cfg, int font_count, int iteration) {
    if (!cfg.contrastive_enabled()) return {};
    if (font_count < 1) throw InputError("font_draws_for_iteration: empty font dataset");
    Rng rng(derive_seed(mix64(cfg.seed) ^ kFontDrawStream, static_cast<std::uint64_t>(iteration)));
    std::vector<int> picks(cfg.obc_count);
    for (int& p : picks) p = static_cast<int>(rng.uniform_int(0, font_count - 1));
    return picks;
}

StepPlan make_step_plan(const ExtractorParams& params,
                        const std::vector<const ImageSample*>& rubbing_batch,
                        const std::vector<const ImageSample*>& font_batch, const TrainConfig& cfg,
                        int iteration, StepContext* ctx) {
    if (rubbing_batch.empty()) throw InputError("make_step_plan: empty rubbing batch");
    const int num_sizes = static_cast<int>(cfg.anchor_sizes.size());
    if (params.layout.num_sizes != num_sizes)
        throw InputError("make_step_plan: params/anchor_sizes mismatch");

    StepPlan plan;
    plan.contrastive = cfg.contrastive_enabled();

    // Anchor grids prebuilt sequentially; the parallel loops below only read.
    std::map<std::pair<int, int>, std::vector<Box>> anchor_cache;
    auto padded_dims = [](const ImageSample& img) {
        auto round_up = [](int v) { return (v + kStride - 1) / kStride * kStride; };
        return std::make_pair(round_up(img.height), round_up(img.width));
    };
    for (const ImageSample* img : rubbing_batch) anchor_cache[padded_dims(*img)];
    if (plan.contrastive)
        for (const ImageSample* img : font_batch) anchor_cache[padded_dims(*img)];
    for (auto& [dims, anchors] : anchor_cache)
        anchors = generate_anchors(dims.first / kStride, dims.second / kStride, kStride,
                                   cfg.anchor_sizes);
    auto anchors_for = [&](int h, int w) -> const std::vector<Box>& {
        return anchor_cache.at(std::make_pair(h, w));
    };

    if (ctx) {
        ctx->caches.resize(rubbing_batch.size());
        ctx->outs.resize(rubbing_batch.size());
    }

    std::vector<FeatureVector> neg_feats;
    const int nb = static_cast<int>(rubbing_batch.size());
    std::vector<std::vector<FeatureVector>> neg_per_image(nb);
    std::vector<StepPlan::RubbingPlan> rplans(nb);

#pragma omp parallel for schedule(dynamic)
    for (int bi = 0; bi < nb; ++bi) {
        const ImageSample& img = *rubbing_batch[bi];
        const Tensor input = pad_to_stride(img.to_tensor());
        ForwardCache local_cache;
        ForwardCache& cache = ctx ? ctx->caches[bi] : local_cache;
        ForwardResult out = forward_cached(params, input, cache);

        StepPlan::RubbingPlan rp;
        rp.image = &img;
        rp.anchors = anchors_for(input.dim(1), input.dim(2));
        const AnchorMatch match = match_anchors_detailed(rp.anchors, img.boxes, cfg.match_policy);

        for (int i = 0; i < static_cast<int>(match.labels.size()); ++i) {
            if (match.labels[i] == AnchorLabel::Positive) {
                rp.labeled_anchors.push_back(i);
                rp.class_targets.push_back(1);
                rp.positive_anchors.push_back(i);
                rp.box_targets.push_back(encode_box(rp.anchors[i], img.boxes[match.matched_gt[i]]));
            } else if (match.labels[i] == AnchorLabel::Negative) {
                rp.labeled_anchors.push_back(i);
                rp.class_targets.push_back(0);
            }
        }

        if (plan.contrastive) {
            for (int i : select_negative_anchors(match, kNegSubsampleCap))
                neg_per_image[bi].push_back(
                    pooled_feature(out.feature_map, rp.anchors[i], cfg.normalize_features));
        }
        rplans[bi] = std::move(rp);
        if (ctx) ctx->outs[bi] = std::move(out);
    }
    plan.rubbing = std::move(rplans);
    for (auto& per : neg_per_image)
        for (auto& f : per) neg_feats.push_back(std::move(f));

    if (!plan.contrastive) return plan;

    // Positive features from the clean exemplars; forward passes are not
    // cached, the contrastive centers are constants.
    std::vector<FeatureVector> pos_feats;
    const int nf = static_cast<int>(font_batch.size());
    std::vector<std::vector<FeatureVector>> pos_per_image(nf);
#pragma omp parallel for schedule(dynamic)
    for (int fi = 0; fi < nf; ++fi) {
        const ImageSample& img = *font_batch[fi];
        const Tensor input = pad_to_stride(img.to_tensor());
        const ForwardResult out = forward(params, input);
        const std::vector<Box>& anchors = anchors_for(input.dim(1), input.dim(2));
        const AnchorMatch match = match_anchors_detailed(anchors, img.boxes, cfg.match_policy);
        for (int i = 0; i < static_cast<int>(match.labels.size()); ++i)
            if (match.labels[i] == AnchorLabel::Positive)
                pos_per_image[fi].push_back(
                    pooled_feature(out.feature_map, anchors[i], cfg.normalize_features));
    }
    for (auto& per : pos_per_image)
        for (auto& f : per) pos_feats.push_back(std::move(f));

    plan.n_neg_feats = static_cast<int>(neg_feats.size());
    plan.n_pos_feats = static_cast<int>(pos_feats.size());

    if (!neg_feats.empty()) {
        const ClusterModel neg = cluster_features(
            neg_feats, cfg, cfg.n_neg_clusters,
            derive_seed(mix64(cfg.seed) ^ kNegClusterStream, static_cast<std::uint64_t>(iteration)),
            &plan.clusters_clamped);
        plan.neg_centers = neg.centers;
        plan.n_neg_centers = neg.k;
        plan.neg_inertia = neg.inertia;
    }
    if (!pos_feats.empty()) {
        bool pos_clamped = false;
        const ClusterModel pos = cluster_features(
            pos_feats, cfg, cfg.m_pos_clusters,
            derive_seed(mix64(cfg.seed) ^ kPosClusterStream, static_cast<std::uint64_t>(iteration)),
            &pos_clamped);
        plan.clusters_clamped = plan.clusters_clamped || pos_clamped;
        plan.n_pos_centers = pos.k;
        plan.pos_inertia = pos.inertia;
        if (pos.k > 0)
            plan.pos_mean = positive_mean(pos.centers, pos.k, pos.dim, cfg.normalize_features);
    }
    return plan;
}

LossReport eval_step_loss(const ExtractorParams& params, const StepPlan& plan,
                          const TrainConfig& cfg, ExtractorGrads* grads, StepContext* ctx) {
    const int num_sizes = params.layout.num_sizes;
    const int nb = static_cast<int>(plan.rubbing.size());

    std::vector<ForwardCache> local_caches;
    std::vector<ForwardResult> local_outs;
    if (!ctx) {
        local_caches.resize(nb);
        local_outs.resize(nb);
#pragma omp parallel for schedule(dynamic)
        for (int bi = 0; bi < nb; ++bi) {
            const Tensor input = pad_to_stride(plan.rubbing[bi].image->to_tensor());
            local_outs[bi] = forward_cached(params, input, local_caches[bi]);
        }
    }
    std::vector<ForwardCache>& caches = ctx ? ctx->caches : local_caches;
    std::vector<ForwardResult>& outs = ctx ? ctx->outs : local_outs;

    // Sample features (positive rubbing anchors), raw kept for the
    // normalization pullback.
    std::vector<FeatureVector> samples;
    std::vector<std::vector<double>> raw_samples;
    std::vector<std::pair<int, int>> sample_origin;  // (image, anchor)
    for (int bi = 0; bi < nb; ++bi) {
        for (int ai : plan.rubbing[bi].positive_anchors) {
            FeatureVector raw = roi_align(outs[bi].feature_map, kStride, plan.rubbing[bi].anchors[ai]);
            raw_samples.push_back(raw.values);
            samples.push_back(cfg.normalize_features ? l2_normalize(raw) : std::move(raw));
            sample_origin.emplace_back(bi, ai);
        }
    }

    ClusLossResult clus;
    const bool clus_active = plan.contrastive && plan.n_pos_centers > 0 && plan.n_neg_centers > 0 &&
                             !samples.empty();
    if (clus_active) {
        clus = clus_loss(samples, plan.pos_mean, plan.neg_centers, plan.n_neg_centers,
                         Temperature{cfg.tau}, cfg.denominator_mode);
    } else {
        clus.skipped = true;
    }

    // Classification and box losses over the rubbing anchors only.
    std::vector<double> logits;
    std::vector<int> targets;
    std::vector<std::array<double, 4>> pred_deltas, target_deltas;
    int n_pos_anchors = 0, n_neg_anchors = 0;
    for (int bi = 0; bi < nb; ++bi) {
        const auto& rp = plan.rubbing[bi];
        const int map_w = outs[bi].objectness.dim(2);
        for (std::size_t li = 0; li < rp.labeled_anchors.size(); ++li) {
            const AnchorAddress ad = anchor_address(rp.labeled_anchors[li], num_sizes, map_w);
            logits.push_back(outs[bi].objectness.at(ad.size_idx, ad.cell_y, ad.cell_x));
            targets.push_back(rp.class_targets[li]);
            (rp.class_targets[li] ? n_pos_anchors : n_neg_anchors) += 1;
        }
        for (std::size_t pi = 0; pi < rp.positive_anchors.size(); ++pi) {
            const AnchorAddress ad = anchor_address(rp.positive_anchors[pi], num_sizes, map_w);
            std::array<double, 4> d;
            for (int c = 0; c < 4; ++c)
                d[c] = outs[bi].deltas.at(4 * ad.size_idx + c, ad.cell_y, ad.cell_x);
            pred_deltas.push_back(d);
            target_deltas.push_back(rp.box_targets[pi]);
        }
    }
    const BceLossResult bce = class_loss(logits, targets);
    const BoxLossResult box = box_loss(pred_deltas, target_deltas);

    LossReport report = total_loss(clus.loss, bce.loss, box.loss, cfg.lambdas);
    report.tau = cfg.tau;
    report.n_samples = static_cast<int>(samples.size());
    report.n_pos_centers = plan.n_pos_centers;
    report.n_neg_centers = plan.n_neg_centers;
    report.n_pos_anchors = n_pos_anchors;
    report.n_neg_anchors = n_neg_anchors;
    report.clus_skipped = clus.skipped;
    report.class_skipped = bce.skipped;
    report.box_skipped = box.skipped;
    report.clusters_clamped = plan.clusters_clamped;
    if (!grads) return report;

    // Upstream gradients per image, then one backward sweep each. Per-image
    // buffers keep the parallel accumulation order fixed.
    std::vector<ExtractorGrads> per_image(nb, ExtractorGrads(params.layout));
    std::vector<Tensor> d_fmap(nb), d_obj(nb), d_del(nb);
    for (int bi = 0; bi < nb; ++bi) {
        d_fmap[bi] = Tensor::zeros(outs[bi].feature_map.shape);
        d_obj[bi] = Tensor::zeros(outs[bi].objectness.shape);
        d_del[bi] = Tensor::zeros(outs[bi].deltas.shape);
    }

    std::size_t labeled_cursor = 0, positive_cursor = 0;
    for (int bi = 0; bi < nb; ++bi) {
        const auto& rp = plan.rubbing[bi];
        const int map_w = outs[bi].objectness.dim(2);
        for (std::size_t li = 0; li < rp.labeled_anchors.size(); ++li, ++labeled_cursor) {
            const AnchorAddress ad = anchor_address(rp.labeled_anchors[li], num_sizes, map_w);
            d_obj[bi].at(ad.size_idx, ad.cell_y, ad.cell_x) +=
                cfg.lambdas[1] * bce.d_logits[labeled_cursor];
        }
        for (std::size_t pi = 0; pi < rp.positive_anchors.size(); ++pi, ++positive_cursor) {
            const AnchorAddress ad = anchor_address(rp.positive_anchors[pi], num_sizes, map_w);
            for (int c = 0; c < 4; ++c)
                d_del[bi].at(4 * ad.size_idx + c, ad.cell_y, ad.cell_x) +=
                    cfg.lambdas[2] * box.d_pred[positive_cursor][c];
        }
    }
    if (clus_active && cfg.lambdas[0] != 0.0) {
        for (std::size_t s = 0; s < samples.size(); ++s) {
            std::vector<double> d_vec = clus.d_samples[s];
            for (double& v : d_vec) v *= cfg.lambdas[0];
            // The pullback also zeroes gradients of degenerate inputs, whose
            // normalized output is a constant zero vector.
            if (cfg.normalize_features) d_vec = l2_normalize_backward(raw_samples[s], d_vec);
            const auto [bi, ai] = sample_origin[s];
            roi_align_backward(kStride, plan.rubbing[bi].anchors[ai], d_vec, d_fmap[bi]);
        }
    }

#pragma omp parallel for schedule(dynamic)
    for (int bi = 0; bi < nb; ++bi)
        backward(params, caches[bi], d_fmap[bi], d_obj[bi], d_del[bi], per_image[bi]);
    for (int bi = 0; bi < nb; ++bi)
        for (std::size_t i = 0; i < grads->flat.size(); ++i) grads->flat[i] += per_image[bi].flat[i];
    return report;
}

IterationRecord train_step(TrainState& state, const std::vector<const ImageSample*>& rubbing_batch,
                           const std::vector<const ImageSample*>& font_batch,
                           const TrainConfig& cfg, int iteration) {
    const auto t0 = std::chrono::steady_clock::now();
    StepContext ctx;
    const StepPlan plan =
        make_step_plan(state.params, rubbing_batch, font_batch, cfg, iteration, &ctx);
    ExtractorGrads grads(state.params.layout);
    IterationRecord rec;
    rec.iteration = iteration;
    rec.loss = eval_step_loss(state.params, plan, cfg, &grads, &ctx);
    state.optimizer.step(state.params, grads);
    rec.neg_inertia = plan.neg_inertia;
    rec.pos_inertia = plan.pos_inertia;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

TrainResult train(const TrainConfig& cfg, const std::vector<ImageSample>& rubbing,
                  const std::vector<ImageSample>& font) {
    cfg.validate();
    if (rubbing.empty()) throw InputError("train: empty rubbing dataset");
    if (cfg.contrastive_enabled()) {
        if (font.empty()) throw InputError("train: contrastive path needs a font dataset");
        for (const ImageSample& f : font)
            if (f.boxes.size() != 1)
                throw InputError("train: font samples must carry exactly one box");
    }

    TrainState state(cfg);
    TrainResult result{ExtractorParams(static_cast<int>(cfg.anchor_sizes.size())), {}, false, {}};
    result.records.reserve(static_cast<std::size_t>(cfg.iterations));

    const int n = static_cast<int>(rubbing.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<const ImageSample*> batch(cfg.batch_size);
        for (int j = 0; j < cfg.batch_size; ++j)
            batch[j] = &rubbing[(static_cast<std::size_t>(it) * cfg.batch_size + j) % n];
        std::vector<const ImageSample*> fonts;
        for (int idx : font_draws_for_iteration(cfg, static_cast<int>(font.size()), it))
            fonts.push_back(&font[idx]);
        try {
            result.records.push_back(train_step(state, batch, fonts, cfg, it));
        } catch (const NumericError& e) {
            result.aborted = true;
            result.abort_reason = "iteration " + std::to_string(it) + ": " + e.what();
            break;
        }
    }
    result.params = std::move(state.params);
    return result;
}

std::string iteration_csv_header() {
    return "iteration,l_clus,l_class,l_box,total,n_samples,n_pos_centers,n_neg_centers,"
           "n_pos_anchors,n_neg_anchors";
}

std::string iteration_csv_line(const IterationRecord& rec) {
    std::ostringstream os;
    os << rec.iteration << ',' << fmt_double(rec.loss.l_clus) << ',' << fmt_double(rec.loss.l_class)
       << ',' << fmt_double(rec.loss.l_box) << ',' << fmt_double(rec.loss.total) << ','
       << rec.loss.n_samples << ',' << rec.loss.n_pos_centers << ',' << rec.loss.n_neg_centers
       << ',' << rec.loss.n_pos_anchors << ',' << rec.loss.n_neg_anchors;
    return os.str();
}

}  // namespace obidet

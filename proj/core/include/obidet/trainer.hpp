#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "obidet/clustering.hpp"
#include "obidet/dataset.hpp"
#include "obidet/geometry.hpp"
#include "obidet/losses.hpp"
#include "obidet/net.hpp"

namespace obidet {

/// Every knob of a training run. All fields have working defaults; the JSON
/// config file mirrors the field names exactly and any subset may be given.
struct TrainConfig {
    double lr = 1e-2;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::array<double, 3> lambdas{1.0, 1.0, 1.0};
    double tau = 0.1;
    int n_neg_clusters = 63;  // N
    int m_pos_clusters = 3;   // M
    int obc_count = 10;       // font exemplars drawn per iteration
    MatchPolicy match_policy = MatchPolicy::dense();
    ClusterSpec cluster_method;
    int batch_size = 2;
    int iterations = 500;
    std::uint64_t seed = 0;
    bool normalize_features = true;
    DenominatorMode denominator_mode = DenominatorMode::InfoNce;
    std::vector<int> anchor_sizes{16, 32, 48};
    bool disable_contrastive = false;  // hard off-switch for the whole contrastive path

    bool contrastive_enabled() const { return !disable_contrastive && lambdas[0] != 0.0; }
    void validate() const;
};

TrainConfig config_from_json_file(const std::filesystem::path& path);
TrainConfig config_from_json_text(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);  // fully resolved, all fields

struct IterationRecord {
    int iteration = 0;
    LossReport loss;
    double neg_inertia = 0.0;
    double pos_inertia = 0.0;
    double wall_ms = 0.0;  // diagnostic only, never logged
};

std::string iteration_csv_header();
std::string iteration_csv_line(const IterationRecord& rec);

struct TrainState {
    ExtractorParams params;
    SgdOptimizer optimizer;

    TrainState(const TrainConfig& cfg)
        : params(ExtractorParams::init(static_cast<int>(cfg.anchor_sizes.size()), cfg.seed)),
          optimizer(cfg.lr, cfg.momentum, cfg.weight_decay, params.layout) {}
};

/// Everything the per-step objective treats as constant: batch matching,
/// feature source boxes, and the frozen cluster centers. Centers are
/// captured at the incoming parameters and receive no gradient.
struct StepPlan {
    struct RubbingPlan {
        const ImageSample* image = nullptr;
        std::vector<Box> anchors;
        std::vector<int> labeled_anchors;    // Positive + Negative, in anchor order
        std::vector<int> class_targets;      // parallel to labeled_anchors
        std::vector<int> positive_anchors;   // sample-feature sources
        std::vector<std::array<double, 4>> box_targets;
    };
    std::vector<RubbingPlan> rubbing;
    bool contrastive = false;
    std::vector<double> pos_mean;
    std::vector<double> neg_centers;
    int n_pos_centers = 0;
    int n_neg_centers = 0;
    int n_pos_feats = 0;  // font-side features that built pos_mean
    int n_neg_feats = 0;  // rubbing negatives that built neg_centers
    double pos_inertia = 0.0;
    double neg_inertia = 0.0;
    bool clusters_clamped = false;
};

/// Forward activations retained between plan capture and the first
/// evaluation so the nominal training step forwards each image once.
struct StepContext {
    std::vector<ForwardCache> caches;
    std::vector<ForwardResult> outs;
};

StepPlan make_step_plan(const ExtractorParams& params,
                        const std::vector<const ImageSample*>& rubbing_batch,
                        const std::vector<const ImageSample*>& font_batch, const TrainConfig& cfg,
                        int iteration, StepContext* ctx);

/// The per-step objective at `params` under a frozen plan. When `grads` is
/// non-null the exact reverse-mode gradient is accumulated into it. `ctx`
/// may carry forwards captured at the same params; pass nullptr to
/// recompute (finite-difference probes do).
LossReport eval_step_loss(const ExtractorParams& params, const StepPlan& plan,
                          const TrainConfig& cfg, ExtractorGrads* grads, StepContext* ctx);

IterationRecord train_step(TrainState& state, const std::vector<const ImageSample*>& rubbing_batch,
                           const std::vector<const ImageSample*>& font_batch,
                           const TrainConfig& cfg, int iteration);

struct TrainResult {
    ExtractorParams params;
    std::vector<IterationRecord> records;
    bool aborted = false;
    std::string abort_reason;
};

/// Round-robin rubbing batches, uniform-with-replacement font draws of
/// obc_count per iteration, one train_step per iteration. Bit-reproducible
/// from (config, datasets).
TrainResult train(const TrainConfig& cfg, const std::vector<ImageSample>& rubbing,
                  const std::vector<ImageSample>& font);

/// Font images drawn for one iteration; empty when the contrastive path is
/// off. Exposed so feature tooling can replay training-time draws.
std::vector<int> font_draws_for_iteration(const TrainConfig& cfg, int font_count, int iteration);

}  // namespace obidet

#include "obidet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obidet/errors.hpp"

namespace obidet {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kDeltaClamp = 8.0;  // pre-decode clamp, keeps exp() finite

}  // namespace

DetectionResult infer(const ExtractorParams& params, const ImageSample& image,
                      const std::vector<int>& anchor_sizes, double score_thresh,
                      double nms_thresh) {
    const int num_sizes = static_cast<int>(anchor_sizes.size());
    if (params.layout.num_sizes != num_sizes)
        throw InputError("infer: checkpoint anchor count does not match anchor_sizes");
    const Tensor input = pad_to_stride(image.to_tensor());
    const ForwardResult out = forward(params, input);
    const int map_h = out.objectness.dim(1), map_w = out.objectness.dim(2);
    const std::vector<Box> anchors = generate_anchors(map_h, map_w, kStride, anchor_sizes);

    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < map_h; ++i) {
        for (int j = 0; j < map_w; ++j) {
            for (int a = 0; a < num_sizes; ++a) {
                const double score = sigmoid(out.objectness.at(a, i, j));
                if (score < score_thresh) continue;
                std::array<double, 4> d;
                for (int c = 0; c < 4; ++c)
                    d[c] = std::clamp(out.deltas.at(4 * a + c, i, j), -kDeltaClamp, kDeltaClamp);
                const int anchor_idx = (i * map_w + j) * num_sizes + a;
                const Box decoded = decode_box(anchors[anchor_idx], d);
                const Box clipped = clip_box(decoded, image.width, image.height);
                if (clipped.width() <= 1e-6 || clipped.height() <= 1e-6) continue;
                boxes.push_back(clipped);
                scores.push_back(score);
            }
        }
    }

    DetectionResult result;
    for (int idx : nms(boxes, scores, nms_thresh)) result.push_back({boxes[idx], scores[idx]});
    return result;
}

ConfusionCounts match_predictions(const DetectionResult& preds, const std::vector<Box>& gts,
                                  double iou_thresh) {
    ConfusionCounts c;
    std::vector<char> taken(gts.size(), 0);
    for (const Detection& p : preds) {
        int best_g = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double v = iou(p.box, gts[g]);
            if (v >= iou_thresh && v > best_iou) {
                best_iou = v;
                best_g = static_cast<int>(g);
            }
        }
        if (best_g >= 0) {
            taken[best_g] = 1;
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    c.fn = static_cast<int>(gts.size()) - c.tp;
    return c;
}

Prf1 precision_recall_f1(int tp, int fp, int fn) {
    if (tp < 0 || fp < 0 || fn < 0) throw InputError("precision_recall_f1: negative counts");
    Prf1 r;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                        : 0.0;
    return r;
}

std::vector<double> coco_iou_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

namespace {

struct FlatPred {
    int image;
    int rank;  // per-image rank, already score-descending
    double score;
};

// Greedy matching down the global ranking; out_tp[k] marks whether the k-th
// ranked prediction matched. Returns total TP.
int match_at_threshold(const std::vector<FlatPred>& order,
                       const std::vector<DetectionResult>& preds,
                       const std::vector<std::vector<Box>>& gts, double thresh,
                       std::vector<char>& out_tp) {
    std::vector<std::vector<char>> taken(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i].size(), 0);
    out_tp.assign(order.size(), 0);
    int total_tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const FlatPred& fp = order[k];
        const Box& pb = preds[fp.image][fp.rank].box;
        const std::vector<Box>& g = gts[fp.image];
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t gi = 0; gi < g.size(); ++gi) {
            if (taken[fp.image][gi]) continue;
            const double v = iou(pb, g[gi]);
            if (v >= thresh && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0) {
            taken[fp.image][best] = 1;
            out_tp[k] = 1;
            ++total_tp;
        }
    }
    return total_tp;
}

// 101-point interpolation: mean over recall grid of the max precision at
// recall >= r.
double interpolated_ap(const std::vector<char>& tp_flags, int num_gts) {
    const int n = static_cast<int>(tp_flags.size());
    std::vector<double> precision(n), recall(n);
    int tp = 0;
    for (int k = 0; k < n; ++k) {
        tp += tp_flags[k];
        precision[k] = static_cast<double>(tp) / (k + 1);
        recall[k] = static_cast<double>(tp) / num_gts;
    }
    for (int k = n - 2; k >= 0; --k) precision[k] = std::max(precision[k], precision[k + 1]);
    double ap = 0.0;
    int k = 0;
    for (int j = 0; j <= 100; ++j) {
        const double r = j / 100.0;
        while (k < n && recall[k] < r) ++k;
        if (k < n) ap += precision[k];
    }
    return ap / 101.0;
}

}  // namespace

MetricsReport average_precision(const std::vector<DetectionResult>& preds_per_image,
                                const std::vector<std::vector<Box>>& gts_per_image,
                                const std::vector<double>& iou_thresholds,
                                double f1_score_thresh) {
    if (preds_per_image.size() != gts_per_image.size())
        throw InputError("average_precision: image count mismatch");
    MetricsReport report;
    int num_gts = 0;
    for (const auto& g : gts_per_image) num_gts += static_cast<int>(g.size());
    if (num_gts == 0) {
        report.no_ground_truth = true;
        return report;
    }

    std::vector<FlatPred> order;
    for (std::size_t i = 0; i < preds_per_image.size(); ++i)
        for (std::size_t r = 0; r < preds_per_image[i].size(); ++r)
            order.push_back({static_cast<int>(i), static_cast<int>(r), preds_per_image[i][r].score});
    std::stable_sort(order.begin(), order.end(),
                     [](const FlatPred& a, const FlatPred& b) { return a.score > b.score; });

    std::vector<char> tp_flags;
    double ap_sum = 0.0;
    for (double t : iou_thresholds) {
        const int total_tp = match_at_threshold(order, preds_per_image, gts_per_image, t, tp_flags);
        const double ap = order.empty() ? 0.0 : interpolated_ap(tp_flags, num_gts);
        report.ap_by_iou.emplace_back(t, ap);
        ap_sum += ap;
        if (std::abs(t - 0.5) < 1e-9) {
            report.ap50 = ap;
            report.ar50 = static_cast<double>(total_tp) / num_gts;
            // P/R/F1 at the operating threshold: matching is prefix
            // consistent, so the head of the ranking is reused.
            int cut = 0;
            while (cut < static_cast<int>(order.size()) && order[cut].score >= f1_score_thresh) ++cut;
            int tp_cut = 0;
            for (int k = 0; k < cut; ++k) tp_cut += tp_flags[k];
            const Prf1 prf = precision_recall_f1(tp_cut, cut - tp_cut, num_gts - tp_cut);
            report.precision50 = prf.precision;
            report.recall50 = prf.recall;
            report.f1_50 = prf.f1;
        }
        if (std::abs(t - 0.75) < 1e-9) report.ap75 = ap;
    }
    report.ap = iou_thresholds.empty() ? 0.0 : ap_sum / static_cast<double>(iou_thresholds.size());
    return report;
}

}  // namespace obidet

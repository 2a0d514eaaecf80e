#pragma once

#include <vector>

#include "obidet/dataset.hpp"
#include "obidet/geometry.hpp"
#include "obidet/net.hpp"

namespace obidet {

struct Detection {
    Box box;
    double score = 0.0;
};

/// Per-image detections, scores descending.
using DetectionResult = std::vector<Detection>;

/// Sigmoid objectness per anchor, threshold, decode, clip to the image,
/// then greedy NMS. Deltas are clamped to a sane range before decoding so
/// an untrained head cannot overflow the exp.
DetectionResult infer(const ExtractorParams& params, const ImageSample& image,
                      const std::vector<int>& anchor_sizes, double score_thresh,
                      double nms_thresh);

struct ConfusionCounts {
    int tp = 0, fp = 0, fn = 0;
};

/// Greedy one-to-one matching in score order: each prediction takes the
/// unmatched gt with the highest IoU >= thresh, ties to the lower gt index.
ConfusionCounts match_predictions(const DetectionResult& preds, const std::vector<Box>& gts,
                                  double iou_thresh);

struct Prf1 {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); zero denominators give 0.
Prf1 precision_recall_f1(int tp, int fp, int fn);

struct MetricsReport {
    double ap = 0.0;      // mean over IoU .50:.05:.95
    double ap50 = 0.0;
    double ap75 = 0.0;
    double ar50 = 0.0;    // recall at IoU 0.5, all predictions admitted
    double precision50 = 0.0, recall50 = 0.0, f1_50 = 0.0;
    std::vector<std::pair<double, double>> ap_by_iou;
    bool no_ground_truth = false;
};

std::vector<double> coco_iou_thresholds();

/// COCO-style evaluation: global score ordering, greedy per-image matching,
/// 101-point interpolated AP per IoU threshold. P/R/F1 are taken at IoU 0.5
/// over the predictions scoring at least `f1_score_thresh`.
MetricsReport average_precision(const std::vector<DetectionResult>& preds_per_image,
                                const std::vector<std::vector<Box>>& gts_per_image,
                                const std::vector<double>& iou_thresholds,
                                double f1_score_thresh = 0.5);

}  // namespace obidet

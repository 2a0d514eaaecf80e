#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace obidet {

/// Axis-aligned rectangle, upper-left and lower-right corners in pixels.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    bool valid() const;
};

enum class AnchorLabel : std::uint8_t { Positive, Negative, Ignore };

enum class MatchRegime : std::uint8_t { Dense, Sparse };

/// IoU thresholds for anchor labelling. Dense detectors use a high positive
/// threshold, sparse ones a low one; the numeric defaults are conventions
/// and are echoed in every resolved config.
struct MatchPolicy {
    double pos_threshold = 0.5;
    double neg_threshold = 0.3;
    MatchRegime regime = MatchRegime::Dense;

    static MatchPolicy dense() { return {0.5, 0.3, MatchRegime::Dense}; }
    static MatchPolicy sparse() { return {0.3, 0.3, MatchRegime::Sparse}; }
    bool valid() const { return pos_threshold > 0.0 && pos_threshold <= 1.0 && neg_threshold >= 0.0 && neg_threshold < 1.0 && neg_threshold <= pos_threshold; }
};

/// Intersection over union of two valid boxes. Throws InputError on
/// degenerate input.
double iou(const Box& a, const Box& b);

/// Square anchors, one per (cell, size): side s centered on the cell center
/// ((j+0.5)*stride, (i+0.5)*stride). Row-major over cells, then sizes.
/// Anchors may extend beyond the image; they are not clipped.
std::vector<Box> generate_anchors(int map_h, int map_w, int stride, const std::vector<int>& sizes);

struct AnchorMatch {
    std::vector<AnchorLabel> labels;
    std::vector<int> matched_gt;  // index of best gt per anchor, -1 if gt empty
    std::vector<double> max_iou;
};

/// Threshold labelling against ground truth, plus a forced positive for the
/// best anchor of every gt box so no gt goes untrained on coarse grids.
AnchorMatch match_anchors_detailed(const std::vector<Box>& anchors, const std::vector<Box>& gt,
                                   const MatchPolicy& policy);

std::vector<AnchorLabel> match_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gt,
                                       const MatchPolicy& policy);

/// Center/size delta parameterization of gt relative to an anchor:
/// ((cx-cxa)/wa, (cy-cya)/ha, ln(w/wa), ln(h/ha)).
std::array<double, 4> encode_box(const Box& anchor, const Box& gt);

/// Inverse of encode_box. Throws NumericError if the result is non-finite
/// or degenerate.
Box decode_box(const Box& anchor, const std::array<double, 4>& deltas);

Box clip_box(const Box& b, double width, double height);

/// Greedy non-maximum suppression by descending score (ties keep the lower
/// index). Returns kept indices in suppression order.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh);

}  // namespace obidet

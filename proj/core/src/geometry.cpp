#include "obidet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obidet/errors.hpp"

namespace obidet {

bool Box::valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x2 > x1 && y2 > y1;
}

namespace {

bool box_before(const Box& a, const Box& b) {
    if (a.x1 != b.x1) return a.x1 < b.x1;
    if (a.y1 != b.y1) return a.y1 < b.y1;
    if (a.x2 != b.x2) return a.x2 < b.x2;
    return a.y2 < b.y2;
}

}  // namespace

double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw InputError("iou: degenerate box");
    // Canonical operand order keeps the arithmetic bit-for-bit symmetric
    // even under FMA contraction.
    const Box& p = box_before(b, a) ? b : a;
    const Box& q = box_before(b, a) ? a : b;
    const double ix = std::max(0.0, std::min(p.x2, q.x2) - std::max(p.x1, q.x1));
    const double iy = std::max(0.0, std::min(p.y2, q.y2) - std::max(p.y1, q.y1));
    const double inter = ix * iy;
    const double uni = p.area() + q.area() - inter;
    return inter / uni;
}

std::vector<Box> generate_anchors(int map_h, int map_w, int stride, const std::vector<int>& sizes) {
    if (map_h < 1 || map_w < 1 || stride < 1) throw InputError("generate_anchors: non-positive grid");
    if (sizes.empty()) throw InputError("generate_anchors: no anchor sizes");
    std::vector<Box> anchors;
    anchors.reserve(static_cast<std::size_t>(map_h) * map_w * sizes.size());
    for (int i = 0; i < map_h; ++i) {
        for (int j = 0; j < map_w; ++j) {
            const double cx = (j + 0.5) * stride;
            const double cy = (i + 0.5) * stride;
            for (int s : sizes) {
                const double h = 0.5 * s;
                anchors.push_back({cx - h, cy - h, cx + h, cy + h});
            }
        }
    }
    return anchors;
}

AnchorMatch match_anchors_detailed(const std::vector<Box>& anchors, const std::vector<Box>& gt,
                                   const MatchPolicy& policy) {
    if (!policy.valid()) throw InputError("match_anchors: invalid policy");
    const int na = static_cast<int>(anchors.size());
    const int ng = static_cast<int>(gt.size());
    AnchorMatch m;
    m.labels.assign(na, AnchorLabel::Negative);
    m.matched_gt.assign(na, -1);
    m.max_iou.assign(na, 0.0);
    if (ng == 0) return m;

    // Best anchor per gt, tracked while scanning the IoU matrix once.
    std::vector<int> best_anchor(ng, -1);
    std::vector<double> best_anchor_iou(ng, -1.0);
    for (int a = 0; a < na; ++a) {
        double best = -1.0;
        int best_g = -1;
        for (int g = 0; g < ng; ++g) {
            const double v = iou(anchors[a], gt[g]);
            if (v > best) {
                best = v;
                best_g = g;
            }
            if (v > best_anchor_iou[g]) {
                best_anchor_iou[g] = v;
                best_anchor[g] = a;
            }
        }
        m.max_iou[a] = best;
        m.matched_gt[a] = best_g;
        if (best >= policy.pos_threshold)
            m.labels[a] = AnchorLabel::Positive;
        else if (best < policy.neg_threshold)
            m.labels[a] = AnchorLabel::Negative;
        else
            m.labels[a] = AnchorLabel::Ignore;
    }

    // Every gt keeps its highest-IoU anchor as a positive; on conflicts the
    // anchor regresses toward the gt it overlaps most.
    for (int g = 0; g < ng; ++g) {
        const int a = best_anchor[g];
        if (a < 0) continue;
        m.labels[a] = AnchorLabel::Positive;
        if (m.matched_gt[a] < 0 || best_anchor_iou[g] > m.max_iou[a]) m.matched_gt[a] = g;
    }
    return m;
}

std::vector<AnchorLabel> match_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gt,
                                       const MatchPolicy& policy) {
    return match_anchors_detailed(anchors, gt, policy).labels;
}

std::array<double, 4> encode_box(const Box& anchor, const Box& gt) {
    if (!anchor.valid() || !gt.valid()) throw InputError("encode_box: degenerate box");
    const double wa = anchor.width(), ha = anchor.height();
    return {(gt.cx() - anchor.cx()) / wa, (gt.cy() - anchor.cy()) / ha,
            std::log(gt.width() / wa), std::log(gt.height() / ha)};
}

Box decode_box(const Box& anchor, const std::array<double, 4>& deltas) {
    if (!anchor.valid()) throw InputError("decode_box: degenerate anchor");
    const double wa = anchor.width(), ha = anchor.height();
    const double cx = deltas[0] * wa + anchor.cx();
    const double cy = deltas[1] * ha + anchor.cy();
    const double w = wa * std::exp(deltas[2]);
    const double h = ha * std::exp(deltas[3]);
    Box b{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    if (!b.valid()) throw NumericError("decode_box: non-finite or degenerate result");
    return b;
}

Box clip_box(const Box& b, double width, double height) {
    return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
            std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh) {
    if (boxes.size() != scores.size()) throw InputError("nms: boxes/scores size mismatch");
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    std::vector<int> kept;
    std::vector<char> removed(boxes.size(), 0);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const int i = order[oi];
        if (removed[i]) continue;
        kept.push_back(i);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const int j = order[oj];
            if (!removed[j] && iou(boxes[i], boxes[j]) > iou_thresh) removed[j] = 1;
        }
    }
    return kept;
}

}  // namespace obidet

#include <doctest.h>

#include <cmath>

#include "obidet/errors.hpp"
#include "obidet/geometry.hpp"
#include "obidet/rng.hpp"

using namespace obidet;

namespace {

Box random_box(Rng& rng, double extent) {
    const double x1 = rng.uniform(-extent, extent);
    const double y1 = rng.uniform(-extent, extent);
    return {x1, y1, x1 + rng.uniform(0.5, extent), y1 + rng.uniform(0.5, extent)};
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("iou identity, disjoint, and hand case") {
    CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == doctest::Approx(1.0));
    CHECK(iou({0, 0, 1, 1}, {5, 5, 6, 6}) == doctest::Approx(0.0));
    // overlap 1x1, union 4+4-1
    CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("iou rejects degenerate boxes") {
    CHECK_THROWS_AS(iou({0, 0, 0, 1}, {0, 0, 1, 1}), InputError);
    CHECK_THROWS_AS(iou({0, 0, 1, 1}, {2, 2, 1, 3}), InputError);
}

TEST_CASE("iou symmetry and bounds over random pairs") {
    Rng rng(42);
    for (int i = 0; i < 10000; ++i) {
        const Box a = random_box(rng, 20.0);
        const Box b = random_box(rng, 20.0);
        const double ab = iou(a, b);
        CHECK(ab == iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
    }
    const Box a = random_box(rng, 5.0);
    CHECK(iou(a, a) == doctest::Approx(1.0));
}

TEST_CASE("anchor generation geometry and ordering") {
    const auto single = generate_anchors(1, 1, 8, {16});
    REQUIRE(single.size() == 1);
    CHECK(single[0].x1 == doctest::Approx(-4.0));
    CHECK(single[0].y1 == doctest::Approx(-4.0));
    CHECK(single[0].x2 == doctest::Approx(12.0));
    CHECK(single[0].y2 == doctest::Approx(12.0));

    CHECK(generate_anchors(2, 2, 8, {16}).size() == 4);

    const auto concentric = generate_anchors(1, 1, 8, {16, 32});
    REQUIRE(concentric.size() == 2);
    CHECK(concentric[0].cx() == doctest::Approx(concentric[1].cx()));
    CHECK(concentric[0].cy() == doctest::Approx(concentric[1].cy()));

    // row-major cells, then sizes
    const auto grid = generate_anchors(2, 3, 8, {16, 32});
    CHECK(grid.size() == 12);
    CHECK(grid[2].cx() == doctest::Approx(12.0));  // cell (0,1), first size
    CHECK(grid[2].width() == doctest::Approx(16.0));
    CHECK(grid[3].width() == doctest::Approx(32.0));
    CHECK(grid[6].cy() == doctest::Approx(12.0));  // cell (1,0)
}

TEST_CASE("anchor matching thresholds") {
    const MatchPolicy dense = MatchPolicy::dense();
    const Box gt{0, 0, 16, 16};

    SUBCASE("exact overlap is positive") {
        const auto labels = match_anchors({gt}, {gt}, dense);
        CHECK(labels[0] == AnchorLabel::Positive);
    }
    SUBCASE("disjoint anchors are negative") {
        const auto labels = match_anchors({{100, 100, 116, 116}, gt}, {gt}, dense);
        CHECK(labels[0] == AnchorLabel::Negative);
    }
    SUBCASE("mid-IoU anchor is ignored when not best") {
        // (0,6.4,16,22.4) vs gt: inter 16*9.6, union 512-153.6 -> ~0.4286
        const Box mid{0, 6.4, 16, 22.4};
        const auto labels = match_anchors({gt, mid}, {gt}, dense);
        CHECK(labels[0] == AnchorLabel::Positive);
        CHECK(labels[1] == AnchorLabel::Ignore);
    }
    SUBCASE("empty gt labels everything negative") {
        const auto labels = match_anchors({gt, {5, 5, 8, 8}}, {}, dense);
        for (auto l : labels) CHECK(l == AnchorLabel::Negative);
    }
}

TEST_CASE("best anchor per gt is forced positive") {
    // both anchors below the positive threshold; the better one is forced
    const Box gt{0, 0, 10, 10};
    const std::vector<Box> anchors{{0, 0, 30, 30}, {0, 0, 40, 40}};
    const auto m = match_anchors_detailed(anchors, {gt}, MatchPolicy::dense());
    CHECK(m.labels[0] == AnchorLabel::Positive);
    CHECK(m.labels[1] == AnchorLabel::Negative);
    CHECK(m.matched_gt[0] == 0);
}

TEST_CASE("labels partition every anchor; empty gt means zero positives") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Box> anchors, gts;
        for (int i = 0; i < 40; ++i) anchors.push_back(random_box(rng, 30.0));
        for (int i = 0; i < 4; ++i) gts.push_back(random_box(rng, 30.0));
        CHECK(match_anchors(anchors, gts, MatchPolicy::sparse()).size() == anchors.size());
        int positives = 0;
        for (auto l : match_anchors(anchors, {}, MatchPolicy::dense()))
            positives += l == AnchorLabel::Positive;
        CHECK(positives == 0);
    }
}

TEST_CASE("encode and decode invert each other") {
    const Box a{2, 3, 18, 31};
    SUBCASE("identity encodes to zeros") {
        const auto d = encode_box(a, a);
        for (double v : d) CHECK(v == doctest::Approx(0.0));
        const Box back = decode_box(a, {0, 0, 0, 0});
        CHECK(back.x1 == doctest::Approx(a.x1));
        CHECK(back.y2 == doctest::Approx(a.y2));
    }
    SUBCASE("round trip on 1000 random pairs") {
        Rng rng(11);
        double max_err = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const Box anchor = random_box(rng, 40.0);
            const Box gt = random_box(rng, 40.0);
            const Box back = decode_box(anchor, encode_box(anchor, gt));
            max_err = std::max({max_err, std::abs(back.x1 - gt.x1), std::abs(back.y1 - gt.y1),
                                std::abs(back.x2 - gt.x2), std::abs(back.y2 - gt.y2)});
        }
        CHECK(max_err <= 1e-9);
    }
    SUBCASE("non-finite deltas raise a numeric error") {
        CHECK_THROWS_AS(decode_box(a, {0, 0, 1e9, 0}), NumericError);
    }
}

TEST_CASE("nms basics") {
    SUBCASE("single box kept") {
        CHECK(nms({{0, 0, 2, 2}}, {0.5}, 0.5) == std::vector<int>{0});
    }
    SUBCASE("duplicate suppressed, higher score wins") {
        const std::vector<Box> boxes{{0, 0, 2, 2}, {0, 0, 2, 2}};
        CHECK(nms(boxes, {0.9, 0.8}, 0.5) == std::vector<int>{0});
        CHECK(nms(boxes, {0.8, 0.9}, 0.5) == std::vector<int>{1});
    }
    SUBCASE("disjoint boxes both kept") {
        const std::vector<Box> boxes{{0, 0, 2, 2}, {10, 10, 12, 12}};
        const auto kept = nms(boxes, {0.1, 0.9}, 0.5);
        CHECK(kept.size() == 2);
        CHECK(kept[0] == 1);  // score order
    }
    SUBCASE("tie keeps the lower index") {
        const std::vector<Box> boxes{{0, 0, 2, 2}, {0, 0, 2, 2}};
        CHECK(nms(boxes, {0.7, 0.7}, 0.5) == std::vector<int>{0});
    }
}

TEST_CASE("nms output is score sorted and mutually separated") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Box> boxes;
        std::vector<double> scores;
        for (int i = 0; i < 50; ++i) {
            boxes.push_back(random_box(rng, 15.0));
            scores.push_back(rng.uniform());
        }
        const auto kept = nms(boxes, scores, 0.4);
        for (std::size_t i = 1; i < kept.size(); ++i)
            CHECK(scores[kept[i - 1]] >= scores[kept[i]]);
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j)
                CHECK(iou(boxes[kept[i]], boxes[kept[j]]) <= 0.4);
    }
}

}  // TEST_SUITE

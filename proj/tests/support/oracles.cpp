#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracles {

obidet::Tensor naive_conv3x3(const obidet::Tensor& in, const std::vector<double>& w,
                             const std::vector<double>& b, int cout) {
    const int cin = in.dim(0), h = in.dim(1), wd = in.dim(2);
    obidet::Tensor out = obidet::Tensor::zeros({cout, h, wd});
    for (int co = 0; co < cout; ++co) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < wd; ++x) {
                double acc = b[co];
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const int yy = y + ky - 1, xx = x + kx - 1;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                            acc += w[((static_cast<std::size_t>(co) * cin + ci) * 3 + ky) * 3 + kx] *
                                   in.at(ci, yy, xx);
                        }
                    }
                }
                out.at(co, y, x) = acc;
            }
        }
    }
    return out;
}

namespace {

double bilinear_read(const obidet::Tensor& map, int c, double x, double y) {
    const int h = map.dim(1), w = map.dim(2);
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto px = [&](int yy, int xx) -> double {
        if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
        return map.at(c, yy, xx);
    };
    return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

}  // namespace

std::vector<double> naive_roi_align(const obidet::Tensor& map, int stride, const obidet::Box& box,
                                    int out_size) {
    const int c = map.dim(0);
    std::vector<double> out(static_cast<std::size_t>(c) * out_size * out_size, 0.0);
    const double fx1 = box.x1 / stride, fy1 = box.y1 / stride;
    const double bw = (box.x2 - box.x1) / stride / out_size;
    const double bh = (box.y2 - box.y1) / stride / out_size;
    for (int ch = 0; ch < c; ++ch) {
        for (int by = 0; by < out_size; ++by) {
            for (int bx = 0; bx < out_size; ++bx) {
                double acc = 0.0;
                for (int sy = 0; sy < 2; ++sy) {
                    for (int sx = 0; sx < 2; ++sx) {
                        const double px = fx1 + (bx + (sx + 0.5) / 2.0) * bw;
                        const double py = fy1 + (by + (sy + 0.5) / 2.0) * bh;
                        acc += bilinear_read(map, ch, px, py);
                    }
                }
                out[(static_cast<std::size_t>(ch) * out_size + by) * out_size + bx] = acc / 4.0;
            }
        }
    }
    return out;
}

double best_two_cluster_inertia(const std::vector<std::vector<double>>& points) {
    const int n = static_cast<int>(points.size());
    const int d = static_cast<int>(points[0].size());
    auto part_inertia = [&](const std::vector<int>& members) {
        std::vector<double> mean(d, 0.0);
        for (int i : members)
            for (int j = 0; j < d; ++j) mean[j] += points[i][j];
        for (double& m : mean) m /= static_cast<double>(members.size());
        double s = 0.0;
        for (int i : members)
            for (int j = 0; j < d; ++j) {
                const double diff = points[i][j] - mean[j];
                s += diff * diff;
            }
        return s;
    };
    double best = std::numeric_limits<double>::infinity();
    // Point 0 stays in part A; masks enumerate the rest.
    for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
        std::vector<int> a{0}, b;
        for (int i = 1; i < n; ++i) ((mask >> (i - 1)) & 1u ? b : a).push_back(i);
        if (b.empty()) continue;
        best = std::min(best, part_inertia(a) + part_inertia(b));
    }
    return best;
}

std::vector<double> jacobi_eigenvalues(std::vector<double> a, int n) {
    auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> evals(n);
    for (int i = 0; i < n; ++i) evals[i] = at(i, i);
    std::sort(evals.begin(), evals.end());
    return evals;
}

bool dbscan_labels_consistent(const std::vector<std::vector<double>>& points, double eps,
                              int min_samples, const std::vector<int>& labels) {
    const int n = static_cast<int>(points.size());
    const int d = static_cast<int>(points[0].size());
    auto dist_sq = [&](int i, int j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            const double diff = points[i][k] - points[j][k];
            s += diff * diff;
        }
        return s;
    };
    std::vector<std::vector<int>> nbr(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (dist_sq(i, j) <= eps * eps) nbr[i].push_back(j);
    auto is_core = [&](int i) { return static_cast<int>(nbr[i].size()) >= min_samples; };

    for (int i = 0; i < n; ++i) {
        if (is_core(i)) {
            if (labels[i] < 0) return false;  // core points always belong to a cluster
            for (int j : nbr[i]) {
                // every neighbor of a core point is density-reachable from it
                if (labels[j] < 0) return false;
                if (is_core(j) && labels[j] != labels[i]) return false;
            }
        } else if (labels[i] >= 0) {
            // border point: must touch a core point of the same cluster
            bool ok = false;
            for (int j : nbr[i])
                if (j != i && is_core(j) && labels[j] == labels[i]) ok = true;
            if (!ok) return false;
        } else {
            // noise: may not be within eps of any core point
            for (int j : nbr[i])
                if (j != i && is_core(j)) return false;
        }
    }
    return true;
}

}  // namespace oracles

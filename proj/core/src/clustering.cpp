#include "obidet/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "obidet/errors.hpp"
#include "obidet/rng.hpp"

namespace obidet {

namespace {

double dot(const double* a, const double* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

double sq_dist(const double* a, const double* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const double d0 = a[i] - b[i], d1 = a[i + 1] - b[i + 1];
        const double d2 = a[i + 2] - b[i + 2], d3 = a[i + 3] - b[i + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
    }
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s0 += d * d;
    }
    return (s0 + s1) + (s2 + s3);
}

int check_points(const std::vector<FeatureVector>& points) {
    if (points.empty()) throw InputError("clustering: no points");
    const int dim = static_cast<int>(points[0].values.size());
    for (const auto& p : points)
        if (static_cast<int>(p.values.size()) != dim)
            throw InputError("clustering: inconsistent point dimensions");
    return dim;
}

}  // namespace

int nearest_center(const double* point, const std::vector<double>& centers, int k, int dim) {
    // argmin ||x-c||^2 == argmin (||c||^2/2 - x.c); the x-term is shared.
    int best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
        const double* c = centers.data() + static_cast<std::size_t>(j) * dim;
        const double score = 0.5 * dot(c, c, dim) - dot(point, c, dim);
        if (score < best_score) {
            best_score = score;
            best = j;
        }
    }
    return best;
}

ClusterModel kmeans_fit(const std::vector<FeatureVector>& points, const ClusterSpec& spec) {
    const int dim = check_points(points);
    const int n = static_cast<int>(points.size());
    const int k = spec.k;
    if (k < 1) throw InputError("kmeans_fit: k must be >= 1");
    if (n < k) throw InputError("kmeans_fit: fewer points than clusters");

    ClusterModel model;
    model.k = k;
    model.dim = dim;
    model.centers.resize(static_cast<std::size_t>(k) * dim);
    model.assignments.assign(n, 0);

    Rng rng(spec.seed);
    const std::vector<int> init = rng.sample_without_replacement(n, k);
    for (int j = 0; j < k; ++j)
        std::copy(points[init[j]].values.begin(), points[init[j]].values.end(),
                  model.centers.begin() + static_cast<std::size_t>(j) * dim);

    std::vector<double> dist_to_own(n, 0.0);
    std::vector<int> counts(k, 0);
    std::vector<double> new_centers(model.centers.size());

    // Hamerly-style bounds: upper[i] >= d(x_i, own center), lower[i] <=
    // min distance to any other center. A point whose bounds certify the
    // assignment skips the full center scan; distances that matter are
    // always recomputed exactly, so results match the plain scan.
    std::vector<double> upper(n, std::numeric_limits<double>::infinity());
    std::vector<double> lower(n, 0.0);
    std::vector<double> half_gap(k, 0.0);  // half distance to the nearest other center
    std::vector<double> center_shift(k, 0.0);

    bool gaps_stale = true;
    for (int iter = 0; iter < spec.max_iters; ++iter) {
        // The exact O(k^2 d) gap matrix is only refreshed periodically; in
        // between, the shifts decay half_gap into a still-valid lower bound.
        if (k > 1 && (gaps_stale || iter % 8 == 0)) {
#pragma omp parallel for schedule(static)
            for (int j = 0; j < k; ++j) {
                double best = std::numeric_limits<double>::infinity();
                for (int j2 = 0; j2 < k; ++j2)
                    if (j2 != j) best = std::min(best, sq_dist(model.center(j), model.center(j2), dim));
                half_gap[j] = 0.5 * std::sqrt(best);
            }
            gaps_stale = false;
        }

#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            const double* x = points[i].values.data();
            const double guard = std::max(lower[i], half_gap[model.assignments[i]]);
            if (iter > 0 && upper[i] < guard) continue;
            if (iter > 0) {
                upper[i] = std::sqrt(sq_dist(x, model.center(model.assignments[i]), dim));
                if (upper[i] < guard) continue;
            }
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity(), second = best_d;
            for (int j = 0; j < k; ++j) {
                const double d = sq_dist(x, model.center(j), dim);
                if (d < best_d) {
                    second = best_d;
                    best_d = d;
                    best = j;
                } else if (d < second) {
                    second = d;
                }
            }
            model.assignments[i] = best;
            upper[i] = std::sqrt(best_d);
            lower[i] = k > 1 ? std::sqrt(second) : std::numeric_limits<double>::infinity();
        }

        // Exact distances to the owned centers: the inertia trace and the
        // empty-cluster reseed both need them, and they retighten upper.
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            dist_to_own[i] = sq_dist(points[i].values.data(),
                                     model.center(model.assignments[i]), dim);
            upper[i] = std::sqrt(dist_to_own[i]);
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) inertia += dist_to_own[i];
        if (!model.inertia_history.empty() &&
            inertia > model.inertia_history.back() * (1.0 + 1e-12) + 1e-12)
            throw NumericError("kmeans_fit: inertia increased across Lloyd iterations");
        model.inertia_history.push_back(inertia);
        model.inertia = inertia;
        model.iterations_run = iter + 1;

        // Eq.-style center update: each center becomes the mean of its
        // members, summed in point-index order.
        std::fill(new_centers.begin(), new_centers.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            double* c = new_centers.data() + static_cast<std::size_t>(model.assignments[i]) * dim;
            const double* p = points[i].values.data();
            for (int v = 0; v < dim; ++v) c[v] += p[v];
            ++counts[model.assignments[i]];
        }
        for (int j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;
            double* c = new_centers.data() + static_cast<std::size_t>(j) * dim;
            const double inv = 1.0 / counts[j];
            for (int v = 0; v < dim; ++v) c[v] *= inv;
        }

        // Reseed emptied clusters with the point farthest from its own
        // center (ties and repeats resolved by lower point index).
        std::vector<char> used(n, 0);
        for (int j = 0; j < k; ++j) {
            if (counts[j] != 0) continue;
            int far = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                if (!used[i] && dist_to_own[i] > far_d) {
                    far_d = dist_to_own[i];
                    far = i;
                }
            }
            used[far] = 1;
            std::copy(points[far].values.begin(), points[far].values.end(),
                      new_centers.begin() + static_cast<std::size_t>(j) * dim);
        }

        double max_shift = 0.0;
        for (int j = 0; j < k; ++j) {
            center_shift[j] = std::sqrt(sq_dist(new_centers.data() + static_cast<std::size_t>(j) * dim,
                                                model.center(j), dim));
            max_shift = std::max(max_shift, center_shift[j]);
        }
        model.centers = new_centers;
        if (max_shift < spec.tol) break;
        for (int i = 0; i < n; ++i) {
            upper[i] += center_shift[model.assignments[i]];
            lower[i] -= max_shift;
        }
        if (k > 1)
            for (int j = 0; j < k; ++j)
                half_gap[j] = std::max(0.0, half_gap[j] - 0.5 * (center_shift[j] + max_shift));
    }

    // Final inertia against the centers actually returned.
    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
        inertia += sq_dist(points[i].values.data(), model.center(model.assignments[i]), dim);
    model.inertia = inertia;
    return model;
}

ClusterModel kmeans_fit_best_of(const std::vector<FeatureVector>& points, const ClusterSpec& spec,
                                int restarts) {
    if (restarts < 1) throw InputError("kmeans_fit_best_of: need at least one restart");
    ClusterModel best;
    for (int r = 0; r < restarts; ++r) {
        ClusterSpec s = spec;
        s.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(r));
        ClusterModel m = kmeans_fit(points, s);
        if (r == 0 || m.inertia < best.inertia) best = std::move(m);
    }
    return best;
}

ClusterModel dbscan_fit(const std::vector<FeatureVector>& points, const ClusterSpec& spec) {
    const int dim = check_points(points);
    if (spec.eps <= 0.0) throw InputError("dbscan_fit: eps must be positive");
    if (spec.min_samples < 1) throw InputError("dbscan_fit: min_samples must be >= 1");
    const int n = static_cast<int>(points.size());
    const double eps_sq = spec.eps * spec.eps;

    std::vector<std::vector<int>> neighbors(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (sq_dist(points[i].values.data(), points[j].values.data(), dim) <= eps_sq)
                neighbors[i].push_back(j);
    }

    ClusterModel model;
    model.dim = dim;
    model.assignments.assign(n, -1);
    std::vector<char> visited(n, 0);
    int next_cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (visited[i]) continue;
        visited[i] = 1;
        if (static_cast<int>(neighbors[i].size()) < spec.min_samples) continue;  // noise unless claimed later
        const int cid = next_cluster++;
        model.assignments[i] = cid;
        std::vector<int> queue = neighbors[i];
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const int p = queue[q];
            if (model.assignments[p] == -1) model.assignments[p] = cid;
            if (visited[p]) continue;
            visited[p] = 1;
            if (static_cast<int>(neighbors[p].size()) >= spec.min_samples)
                queue.insert(queue.end(), neighbors[p].begin(), neighbors[p].end());
        }
    }

    model.k = next_cluster;
    model.iterations_run = 1;
    model.centers.assign(static_cast<std::size_t>(model.k) * dim, 0.0);
    std::vector<int> counts(model.k, 0);
    for (int i = 0; i < n; ++i) {
        const int cid = model.assignments[i];
        if (cid < 0) continue;
        double* c = model.centers.data() + static_cast<std::size_t>(cid) * dim;
        for (int v = 0; v < dim; ++v) c[v] += points[i].values[v];
        ++counts[cid];
    }
    for (int j = 0; j < model.k; ++j) {
        double* c = model.centers.data() + static_cast<std::size_t>(j) * dim;
        const double inv = 1.0 / counts[j];
        for (int v = 0; v < dim; ++v) c[v] *= inv;
    }
    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
        if (model.assignments[i] >= 0)
            inertia += sq_dist(points[i].values.data(), model.center(model.assignments[i]), dim);
    model.inertia = inertia;
    model.inertia_history.push_back(inertia);
    return model;
}

std::vector<double> positive_mean(const std::vector<double>& centers, int m, int dim,
                                  bool renormalize) {
    if (m < 1) throw InputError("positive_mean: no centers");
    if (static_cast<int>(centers.size()) != m * dim)
        throw InputError("positive_mean: centers size mismatch");
    std::vector<double> mean(dim, 0.0);
    for (int j = 0; j < m; ++j) {
        const double* c = centers.data() + static_cast<std::size_t>(j) * dim;
        for (int v = 0; v < dim; ++v) mean[v] += c[v];
    }
    for (int v = 0; v < dim; ++v) mean[v] /= m;
    if (renormalize) {
        double sq = 0.0;
        for (double v : mean) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm >= 1e-12)
            for (double& v : mean) v /= norm;
    }
    return mean;
}

}  // namespace obidet

#pragma once

#include <cstdint>
#include <vector>

#include "obidet/roi_align.hpp"

namespace obidet {

enum class ClusterMethod : std::uint8_t { KMeans, DBSCAN };

struct ClusterSpec {
    ClusterMethod method = ClusterMethod::KMeans;
    int k = 1;               // K-Means
    double eps = 12.0;       // DBSCAN
    int min_samples = 5;     // DBSCAN
    int max_iters = 100;
    double tol = 1e-6;       // max center shift to stop
    std::uint64_t seed = 0;
};

struct ClusterModel {
    int k = 0;    // number of centers actually produced
    int dim = 0;
    std::vector<double> centers;      // k x dim, row-major
    std::vector<int> assignments;     // per point; -1 marks DBSCAN noise
    double inertia = 0.0;             // sum of squared distances to assigned centers
    int iterations_run = 0;
    std::vector<double> inertia_history;  // one entry per assignment phase

    const double* center(int j) const { return centers.data() + static_cast<std::size_t>(j) * dim; }
};

/// Index of the nearest center by Euclidean distance, ties to the lower
/// index. Shared by the fitter and by invariant checks so both sides agree
/// on borderline points.
int nearest_center(const double* point, const std::vector<double>& centers, int k, int dim);

/// Lloyd's algorithm. Centers start at k distinct points drawn by seed;
/// an emptied cluster is reseeded with the point farthest from its assigned
/// center. Inertia is recorded after every assignment phase and must be
/// non-increasing.
ClusterModel kmeans_fit(const std::vector<FeatureVector>& points, const ClusterSpec& spec);

/// Best of `restarts` runs with seeds derived from spec.seed; lowest
/// inertia wins, earlier restart on ties.
ClusterModel kmeans_fit_best_of(const std::vector<FeatureVector>& points, const ClusterSpec& spec,
                                int restarts);

/// Density-reachability clustering; cluster ids in first-core-point order,
/// noise assigned -1 and excluded from the per-cluster mean centers.
ClusterModel dbscan_fit(const std::vector<FeatureVector>& points, const ClusterSpec& spec);

/// Arithmetic mean of the m d-dimensional center rows, optionally
/// re-normalized to unit length.
std::vector<double> positive_mean(const std::vector<double>& centers, int m, int dim,
                                  bool renormalize);

}  // namespace obidet

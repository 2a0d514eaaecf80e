#include "obidet/pca.hpp"

#include <algorithm>
#include <cmath>

#include "obidet/errors.hpp"
#include "obidet/rng.hpp"

namespace obidet {

namespace {

// y = (1/n) X^T (X v) - sum_k lambda_k (v_k . v) v_k ; covariance products
// go through the n x d data matrix, never materializing d x d.
struct CovOperator {
    const std::vector<double>& x;  // centered, n x d
    int n, d;
    std::vector<std::pair<double, std::vector<double>>> deflated;

    std::vector<double> apply(const std::vector<double>& v) const {
        std::vector<double> t(n, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* row = x.data() + static_cast<std::size_t>(i) * d;
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += row[j] * v[j];
            t[i] = s;
        }
        std::vector<double> out(d, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* row = x.data() + static_cast<std::size_t>(i) * d;
            const double ti = t[i];
            for (int j = 0; j < d; ++j) out[j] += ti * row[j];
        }
        const double inv_n = 1.0 / n;
        for (double& o : out) o *= inv_n;
        for (const auto& [lambda, u] : deflated) {
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += u[j] * v[j];
            const double s = lambda * dot;
            for (int j = 0; j < d; ++j) out[j] -= s * u[j];
        }
        return out;
    }
};

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void project_out(std::vector<double>& v,
                 const std::vector<std::pair<double, std::vector<double>>>& basis) {
    for (const auto& [lambda, u] : basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) dot += u[j] * v[j];
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= dot * u[j];
    }
}

// Power iteration restricted to the orthogonal complement of the already
// found directions. A zero operator in the remaining subspace yields
// eigenvalue 0 and a deterministic unit vector from that complement, so
// degenerate trailing directions still project rank-deficient data to 0.
std::pair<double, std::vector<double>> power_iterate(const CovOperator& op, double tol,
                                                     int max_iters) {
    Rng rng(0x70636131);
    std::vector<double> v(op.d);
    for (double& e : v) e = rng.uniform(-1.0, 1.0);
    project_out(v, op.deflated);
    double nv = norm(v);
    if (nv < 1e-12) {  // unlucky start: complete from the standard basis
        for (int j = 0; j < op.d && nv < 1e-12; ++j) {
            std::fill(v.begin(), v.end(), 0.0);
            v[j] = 1.0;
            project_out(v, op.deflated);
            nv = norm(v);
        }
        if (nv < 1e-12) return {0.0, std::vector<double>(op.d, 0.0)};
    }
    for (double& e : v) e /= nv;

    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        std::vector<double> w = op.apply(v);
        project_out(w, op.deflated);
        const double nw = norm(w);
        if (nw < 1e-300) return {0.0, v};
        double max_delta = 0.0;
        for (int j = 0; j < op.d; ++j) {
            w[j] /= nw;
            max_delta = std::max(max_delta, std::abs(w[j] - v[j]));
        }
        v = std::move(w);
        lambda = nw;
        if (max_delta < tol) break;
    }
    return {lambda, v};
}

void fix_sign(std::vector<double>& v) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < v.size(); ++j)
        if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0.0)
        for (double& e : v) e = -e;
}

}  // namespace

std::string role_name(FeatureRole role) {
    switch (role) {
        case FeatureRole::Sample: return "sample";
        case FeatureRole::Positive: return "positive";
        default: return "negative";
    }
}

FeatureRole role_from_name(const std::string& name) {
    if (name == "sample") return FeatureRole::Sample;
    if (name == "positive") return FeatureRole::Positive;
    if (name == "negative") return FeatureRole::Negative;
    throw InputError("unknown feature role \"" + name + "\"");
}

Embedding embed_2d(const std::vector<std::pair<FeatureRole, FeatureVector>>& features) {
    const int n = static_cast<int>(features.size());
    if (n < 2) throw InputError("embed_2d: need at least two features");
    const int d = static_cast<int>(features[0].second.values.size());
    for (const auto& [role, f] : features)
        if (static_cast<int>(f.values.size()) != d)
            throw InputError("embed_2d: inconsistent feature dimensions");

    std::vector<double> mean(d, 0.0);
    for (const auto& [role, f] : features)
        for (int j = 0; j < d; ++j) mean[j] += f.values[j];
    for (double& m : mean) m /= n;

    std::vector<double> centered(static_cast<std::size_t>(n) * d);
    double total_sq = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double v = features[i].second.values[j] - mean[j];
            centered[static_cast<std::size_t>(i) * d + j] = v;
            total_sq += v * v;
        }

    Embedding out;
    out.points.resize(n);
    for (int i = 0; i < n; ++i) out.points[i].role = features[i].first;
    if (total_sq < 1e-24) {  // rank 0: all inputs identical
        out.degenerate = true;
        return out;
    }

    CovOperator op{centered, n, d, {}};
    auto [l1, v1] = power_iterate(op, 1e-9, 100000);
    fix_sign(v1);
    op.deflated.emplace_back(l1, v1);
    auto [l2, v2] = power_iterate(op, 1e-9, 100000);
    fix_sign(v2);
    out.explained_variance = {l1, l2};

    for (int i = 0; i < n; ++i) {
        const double* row = centered.data() + static_cast<std::size_t>(i) * d;
        double px = 0.0, py = 0.0;
        for (int j = 0; j < d; ++j) {
            px += row[j] * v1[j];
            py += row[j] * v2[j];
        }
        out.points[i].x = px;
        out.points[i].y = py;
    }
    return out;
}

}  // namespace obidet

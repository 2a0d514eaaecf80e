#include "obidet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "obidet/errors.hpp"

namespace obidet {

ClusLossResult clus_loss(const std::vector<FeatureVector>& samples,
                         const std::vector<double>& pos_mean,
                         const std::vector<double>& neg_centers, int n_neg, Temperature tau,
                         DenominatorMode mode) {
    ClusLossResult out;
    if (samples.empty() || n_neg < 1) {
        out.skipped = true;
        return out;
    }
    if (!tau.valid()) throw InputError("clus_loss: tau must be positive");
    const int dim = static_cast<int>(pos_mean.size());
    if (static_cast<int>(neg_centers.size()) != n_neg * dim)
        throw InputError("clus_loss: negative centers size mismatch");
    for (const auto& s : samples)
        if (static_cast<int>(s.values.size()) != dim)
            throw InputError("clus_loss: sample dimension mismatch");

    const double inv_tau = 1.0 / tau.tau;
    const int n = static_cast<int>(samples.size());
    const double inv_n = 1.0 / n;
    out.d_samples.assign(samples.size(), std::vector<double>(dim, 0.0));

    double total = 0.0;
    std::vector<double> logits(static_cast<std::size_t>(n_neg) + 1);
    for (int s = 0; s < n; ++s) {
        const double* p = samples[s].values.data();
        double zp = 0.0;
        for (int v = 0; v < dim; ++v) zp += p[v] * pos_mean[v];
        zp *= inv_tau;
        logits[0] = zp;
        for (int j = 0; j < n_neg; ++j) {
            const double* c = neg_centers.data() + static_cast<std::size_t>(j) * dim;
            double z = 0.0;
            for (int v = 0; v < dim; ++v) z += p[v] * c[v];
            logits[static_cast<std::size_t>(j) + 1] = z * inv_tau;
        }

        // Denominator terms: [pos?, negs...]; log-sum-exp with max shift.
        const int lo = mode == DenominatorMode::InfoNce ? 0 : 1;
        double m = logits[lo];
        for (int j = lo; j <= n_neg; ++j) m = std::max(m, logits[j]);
        double sum = 0.0;
        for (int j = lo; j <= n_neg; ++j) sum += std::exp(logits[j] - m);
        const double lse = m + std::log(sum);
        total += lse - zp;

        // d(lse)/d(z_j) = softmax_j over denominator terms; d(-z+)/dp adds
        // the -c_mean term.
        std::vector<double>& g = out.d_samples[s];
        const double gp = (mode == DenominatorMode::InfoNce ? std::exp(logits[0] - m) / sum : 0.0) - 1.0;
        for (int v = 0; v < dim; ++v) g[v] = gp * pos_mean[v];
        for (int j = 0; j < n_neg; ++j) {
            const double w = std::exp(logits[static_cast<std::size_t>(j) + 1] - m) / sum;
            const double* c = neg_centers.data() + static_cast<std::size_t>(j) * dim;
            for (int v = 0; v < dim; ++v) g[v] += w * c[v];
        }
        const double scale = inv_tau * inv_n;
        for (int v = 0; v < dim; ++v) g[v] *= scale;
    }
    out.loss = total * inv_n;
    if (!std::isfinite(out.loss)) throw NumericError("clus_loss: non-finite loss");
    return out;
}

BceLossResult class_loss(const std::vector<double>& logits, const std::vector<int>& targets) {
    if (logits.size() != targets.size()) throw InputError("class_loss: size mismatch");
    BceLossResult out;
    if (logits.empty()) {
        out.skipped = true;
        return out;
    }
    const int n = static_cast<int>(logits.size());
    const double inv_n = 1.0 / n;
    out.d_logits.assign(logits.size(), 0.0);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = logits[i];
        const double t = targets[i] ? 1.0 : 0.0;
        // bce = max(x,0) - x*t + log(1 + exp(-|x|))
        total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
        const double sigmoid = 1.0 / (1.0 + std::exp(-x));
        out.d_logits[i] = (sigmoid - t) * inv_n;
    }
    out.loss = total * inv_n;
    return out;
}

BoxLossResult box_loss(const std::vector<std::array<double, 4>>& pred,
                       const std::vector<std::array<double, 4>>& target) {
    if (pred.size() != target.size()) throw InputError("box_loss: size mismatch");
    BoxLossResult out;
    if (pred.empty()) {
        out.skipped = true;
        return out;
    }
    const int n = static_cast<int>(pred.size());
    const double inv_n = 1.0 / n;
    out.d_pred.assign(pred.size(), {0.0, 0.0, 0.0, 0.0});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 4; ++c) {
            const double x = pred[i][c] - target[i][c];
            const double ax = std::abs(x);
            if (ax < 1.0) {
                total += 0.5 * x * x;
                out.d_pred[i][c] = x * inv_n;
            } else {
                total += ax - 0.5;
                out.d_pred[i][c] = (x > 0.0 ? 1.0 : -1.0) * inv_n;
            }
        }
    }
    out.loss = total * inv_n;
    return out;
}

LossReport total_loss(double l_clus, double l_class, double l_box,
                      const std::array<double, 3>& lambdas) {
    for (double l : lambdas)
        if (l < 0.0) throw InputError("total_loss: lambdas must be non-negative");
    LossReport r;
    r.l_clus = l_clus;
    r.l_class = l_class;
    r.l_box = l_box;
    r.lambdas = lambdas;
    r.total = lambdas[0] * l_clus + lambdas[1] * l_class + lambdas[2] * l_box;
    if (!std::isfinite(r.total)) throw NumericError("total_loss: non-finite total");
    return r;
}

}  // namespace obidet

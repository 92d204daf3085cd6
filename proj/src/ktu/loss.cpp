#include "p2p/ktu/loss.hpp"

#include <cmath>

#include "p2p/ktu/model.hpp"

namespace p2p::ktu {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Adds the Gaussian NLL of one series; returns its value, writes d/dmu and d/dvar scaled by `w`.
double gaussian_nll(const Eigen::VectorXd& mu, const Eigen::VectorXd& var, const Eigen::VectorXd& y, double eps,
                    double w, Eigen::VectorXd* dmu, Eigen::VectorXd* dvar) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
        if (!(var[k] > 0.0)) throw KtuError("non-positive predicted variance; check the variance head");
        const double s = var[k] + eps;
        const double r = y[k] - mu[k];
        total += 0.5 * (std::log(s) + r * r / s);
        if (dmu != nullptr) {
            (*dmu)[k] += w * (-r / s);
            (*dvar)[k] += w * 0.5 * (1.0 / s - r * r / (s * s));
        }
    }
    return total;
}

double total_variation(const Eigen::VectorXd& mu, double w, Eigen::VectorXd* dmu) {
    double total = 0.0;
    for (Eigen::Index k = 0; k + 1 < mu.size(); ++k) {
        const double diff = mu[k + 1] - mu[k];
        total += std::abs(diff);
        if (dmu != nullptr) {
            (*dmu)[k + 1] += w * sign(diff);
            (*dmu)[k] -= w * sign(diff);
        }
    }
    return total;
}

}  // namespace

LossBreakdown composite_loss(std::span<const ForecastDistribution> pred, std::span<const Eigen::VectorXd> pv_pre_mask,
                             std::span<const Eigen::MatrixXd> targets, std::span<const Eigen::VectorXd> daylight,
                             const LossWeights& weights, std::vector<SampleLossGradient>* gradients) {
    const std::size_t n = pred.size();
    if (n == 0) throw KtuError("empty batch");
    if (pv_pre_mask.size() != n || targets.size() != n || daylight.size() != n)
        throw KtuError("loss inputs differ in batch size");

    const double inv_n = 1.0 / static_cast<double>(n);
    if (gradients != nullptr) gradients->assign(n, {});

    LossBreakdown b;
    for (std::size_t i = 0; i < n; ++i) {
        const ForecastDistribution& f = pred[i];
        const Eigen::Index h = f.horizon();
        if (f.var_load.size() != h || f.mu_pv.size() != h || f.var_pv.size() != h || pv_pre_mask[i].size() != h ||
            targets[i].rows() != h || targets[i].cols() != 2 || daylight[i].size() != h)
            throw KtuError("loss inputs are not aligned to the horizon");

        SampleLossGradient* g = nullptr;
        if (gradients != nullptr) {
            g = &(*gradients)[i];
            g->mu_load = g->var_load = g->mu_pv = g->var_pv = g->pv_pre_mask = Eigen::VectorXd::Zero(h);
        }
        const Eigen::VectorXd y_load = targets[i].col(0);
        const Eigen::VectorXd y_pv = targets[i].col(1);
        b.nll += inv_n * gaussian_nll(f.mu_load, f.var_load, y_load, weights.epsilon_stab, inv_n,
                                      g ? &g->mu_load : nullptr, g ? &g->var_load : nullptr);
        b.nll += inv_n * gaussian_nll(f.mu_pv, f.var_pv, y_pv, weights.epsilon_stab, inv_n, g ? &g->mu_pv : nullptr,
                                      g ? &g->var_pv : nullptr);

        const double ws = weights.alpha_smooth * inv_n;
        b.smoothness += inv_n * (total_variation(f.mu_load, ws, g ? &g->mu_load : nullptr) +
                                 total_variation(f.mu_pv, ws, g ? &g->mu_pv : nullptr));

        double night = 0.0;
        for (Eigen::Index k = 0; k < h; ++k) {
            night += pv_pre_mask[i][k] * (1.0 - daylight[i][k]);
            if (g != nullptr) g->pv_pre_mask[k] += weights.beta_night * inv_n * (1.0 - daylight[i][k]);
        }
        b.night_pv_penalty += inv_n * night;
    }
    b.total = b.nll + weights.alpha_smooth * b.smoothness + weights.beta_night * b.night_pv_penalty;
    return b;
}

}  // namespace p2p::ktu

#pragma once

// Parametric value-at-risk under jointly normal log-returns, plus the
// imputation and covariance error measures.

#include <cmath>
#include <sstream>
#include <string>

#include "core.hpp"
#include "linalg.hpp"
#include "stats.hpp"

namespace pcann::riskmetrics {

/// Overlapping h-step log returns, one row per series: (N, T - h).
inline Matrix log_returns(const Matrix& prices, std::size_t h_steps = 1) {
    const auto t_len = static_cast<std::size_t>(prices.cols());
    require(h_steps >= 1, "return horizon must be >= 1 step");
    if (h_steps >= t_len) {
        std::ostringstream msg;
        msg << "return horizon " << h_steps << " must be shorter than the series length " << t_len;
        throw ValidationError(msg.str());
    }
    if (!(prices.array() > 0.0).all()) {
        throw ValidationError("log returns need strictly positive prices");
    }
    const auto h = static_cast<Eigen::Index>(h_steps);
    const Eigen::Index n_ret = prices.cols() - h;
    Matrix logp = prices.array().log().matrix();
    return logp.rightCols(n_ret) - logp.leftCols(n_ret);
}

struct ReturnModel {
    Vector mu;
    Eigen::MatrixXd sigma;

    std::size_t n_assets() const { return static_cast<std::size_t>(mu.size()); }
};

/// Sample mean and 1/(n-1) covariance of the returns; rows are series.
inline ReturnModel estimate_params(const Matrix& returns) {
    if (returns.cols() < 2) {
        throw ValidationError("parameter estimation needs at least two return observations");
    }
    const Matrix obs = returns.transpose();
    const auto m = linalg::sample_moments(obs);
    return {m.mean, m.covariance};
}

/// Returns of exact GBMs over h steps of length dt:
/// mu_R = (mu - sigma^2/2) h dt, Sigma_R = rho_ij sigma_i sigma_j h dt.
inline ReturnModel theoretical_params(const Vector& mu, const Vector& sigma, const Eigen::MatrixXd& correlation,
                                      double dt, std::size_t h_steps = 1) {
    require(mu.size() == sigma.size(), "mu and sigma lengths differ");
    require(correlation.rows() == mu.size() && correlation.cols() == mu.size(), "correlation shape differs from mu");
    const double horizon = static_cast<double>(h_steps) * dt;
    ReturnModel out;
    out.mu = (mu.array() - 0.5 * sigma.array().square()).matrix() * horizon;
    out.sigma = sigma.asDiagonal() * correlation * sigma.asDiagonal();
    out.sigma *= horizon;
    return out;
}

struct VarEstimate {
    double value = 0.0;
    double alpha = 0.99;
    std::size_t horizon = 1;
    std::string source;
    double mu_p = 0.0;
    double sigma_p = 0.0;
};

/// VaR_alpha(P) = mu_P + q_alpha sigma_P with P = Q^T R; no sign flip.
inline VarEstimate portfolio_var(const ReturnModel& model, const Vector& weights, double alpha,
                                 std::string source = "", std::size_t horizon = 1) {
    if (!(alpha > 0.5 && alpha < 1.0)) {
        std::ostringstream msg;
        msg << "alpha must lie in (0.5, 1), got " << alpha;
        throw ValidationError(msg.str());
    }
    require(weights.size() == model.mu.size(), "portfolio weights length differs from the number of assets");
    require(weights.allFinite(), "portfolio weights must be finite");
    const double var_p = weights.dot(model.sigma * weights);
    const double tol = 1e-10 * std::max(1.0, weights.squaredNorm() * model.sigma.cwiseAbs().maxCoeff());
    if (var_p < -tol) {
        std::ostringstream msg;
        msg << "portfolio variance is negative: " << var_p;
        throw NumericalError(msg.str());
    }
    VarEstimate out;
    out.alpha = alpha;
    out.horizon = horizon;
    out.source = std::move(source);
    out.mu_p = weights.dot(model.mu);
    out.sigma_p = std::sqrt(std::max(var_p, 0.0));
    out.value = out.mu_p + stats::normal_quantile(alpha) * out.sigma_p;
    return out;
}

struct VarErrors {
    double absolute = 0.0;
    double relative = 0.0;
};

inline VarErrors var_errors(const VarEstimate& theo, const VarEstimate& est) {
    if (theo.value == 0.0) {
        throw ValidationError("relative VaR error is undefined for a zero reference VaR");
    }
    VarErrors e;
    e.absolute = std::abs(theo.value - est.value);
    e.relative = e.absolute / std::abs(theo.value);
    return e;
}

/// sqrt(sum_j (S_j - S~_j)^2 / n_anom).
inline double imputation_error(const Vector& clean, const Vector& imputed, std::size_t n_anom) {
    require(n_anom >= 1, "n_anom must be >= 1");
    require(clean.size() == imputed.size(), "imputation error: row lengths differ");
    return std::sqrt((clean - imputed).squaredNorm() / static_cast<double>(n_anom));
}

inline double cov_error(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& sigma_tilde) {
    require(sigma.rows() == sigma_tilde.rows() && sigma.cols() == sigma_tilde.cols(),
            "covariance error: matrix shapes differ");
    return (sigma - sigma_tilde).norm();
}

}  // namespace pcann::riskmetrics

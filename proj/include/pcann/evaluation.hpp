#pragma once

// Classification and localization metrics, precision-recall curves, cut-off
// robustness, amplitude buckets, multi-run aggregation and the augmented
// Dickey-Fuller test.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "stats.hpp"

namespace pcann::evaluation {

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
};

inline double f1_score(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline MetricsReport classification_metrics(std::span<const int> truth, std::span<const int> predicted) {
    require(truth.size() == predicted.size(), "label vectors have different lengths");
    MetricsReport m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require((truth[i] == 0 || truth[i] == 1) && (predicted[i] == 0 || predicted[i] == 1),
                "classification labels must be 0 or 1");
        if (truth[i] == 1) {
            (predicted[i] == 1 ? m.tp : m.fn)++;
        } else {
            (predicted[i] == 1 ? m.fp : m.tn)++;
        }
    }
    const auto n = static_cast<double>(truth.size());
    m.accuracy = truth.empty() ? 0.0 : static_cast<double>(m.tp + m.tn) / n;
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

/// Multi-class metrics for location labels: accuracy is the exact-match rate,
/// precision/recall/F1 are one-vs-rest per true class, weighted by support.
inline MetricsReport localization_metrics(std::span<const int> truth, std::span<const int> predicted) {
    require(truth.size() == predicted.size(), "location vectors have different lengths");
    if (truth.empty()) {
        throw ValidationError("localization metrics need at least one row");
    }
    std::map<int, std::size_t> support;
    std::map<int, std::size_t> predicted_count;
    std::map<int, std::size_t> hits;
    std::size_t matches = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++support[truth[i]];
        ++predicted_count[predicted[i]];
        if (truth[i] == predicted[i]) {
            ++hits[truth[i]];
            ++matches;
        }
    }
    const auto n = static_cast<double>(truth.size());
    MetricsReport m;
    m.tp = matches;
    m.fn = truth.size() - matches;
    m.accuracy = static_cast<double>(matches) / n;
    for (const auto& [cls, count] : support) {
        const double w = static_cast<double>(count) / n;
        const double tp = static_cast<double>(hits[cls]);
        const std::size_t pc = predicted_count.count(cls) ? predicted_count[cls] : 0;
        const double prec = pc > 0 ? tp / static_cast<double>(pc) : 0.0;
        const double rec = tp / static_cast<double>(count);
        m.precision += w * prec;
        m.recall += w * rec;
        m.f1 += w * f1_score(prec, rec);
    }
    return m;
}

struct PrcPoint {
    double threshold = 0.0;
    double recall = 0.0;
    double precision = 0.0;
};

struct PrcCurve {
    std::vector<PrcPoint> points;  // ascending recall; the first point is (0, 1)
    double auc = 0.0;
};

/// Sweeps "score >= threshold" over the unique scores, evenly subsampled to
/// `grid_size` thresholds that always include the lowest and highest score.
inline PrcCurve precision_recall_curve(std::span<const double> scores, std::span<const int> truth,
                                       std::size_t grid_size = 512) {
    require(scores.size() == truth.size(), "score count differs from label count");
    require(grid_size >= 2, "PRC grid needs at least two thresholds");
    std::size_t n_pos = 0;
    for (int a : truth) {
        require(a == 0 || a == 1, "labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(a);
    }
    if (n_pos == 0 || n_pos == truth.size()) {
        throw ValidationError("both classes required");
    }

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Cumulative counts at each distinct score, walking from the top.
    std::vector<PrcPoint> all;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t j = 0; j < order.size(); ++j) {
        (truth[order[j]] == 1 ? tp : fp)++;
        if (j + 1 == order.size() || scores[order[j + 1]] != scores[order[j]]) {
            all.push_back({scores[order[j]], static_cast<double>(tp) / static_cast<double>(n_pos),
                           static_cast<double>(tp) / static_cast<double>(tp + fp)});
        }
    }

    PrcCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
    if (all.size() <= grid_size) {
        curve.points.insert(curve.points.end(), all.begin(), all.end());
    } else {
        std::size_t last = all.size();
        for (std::size_t g = 0; g < grid_size; ++g) {
            const auto idx = static_cast<std::size_t>(
                std::llround(static_cast<double>(g) * static_cast<double>(all.size() - 1) /
                             static_cast<double>(grid_size - 1)));
            if (idx != last) {
                curve.points.push_back(all[idx]);
                last = idx;
            }
        }
    }
    for (std::size_t j = 1; j < curve.points.size(); ++j) {
        const auto& a = curve.points[j - 1];
        const auto& b = curve.points[j];
        curve.auc += (b.recall - a.recall) * 0.5 * (a.precision + b.precision);
    }
    return curve;
}

struct RobustnessRow {
    double shock = 0.0;
    MetricsReport metrics;
    std::size_t predicted_positive = 0;
};

inline std::vector<double> default_cutoff_shocks() {
    return {-2.0, -1.0, -1e-1, -1e-2, -1e-3, -1e-4, 0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 2.0};
}

/// Metrics of the hard classifier 1{score > s + gamma} for each shock gamma.
inline std::vector<RobustnessRow> cutoff_robustness(std::span<const double> scores, std::span<const int> truth,
                                                    double cutoff, std::span<const double> shocks) {
    require(scores.size() == truth.size(), "score count differs from label count");
    std::vector<RobustnessRow> rows;
    std::vector<int> pred(scores.size());
    for (double gamma : shocks) {
        require(std::isfinite(gamma), "cut-off shocks must be finite");
        RobustnessRow row;
        row.shock = gamma;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            pred[i] = scores[i] > cutoff + gamma ? 1 : 0;
            row.predicted_positive += static_cast<std::size_t>(pred[i]);
        }
        row.metrics = classification_metrics(truth, pred);
        rows.push_back(row);
    }
    return rows;
}

struct AmplitudeBucket {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    std::optional<double> ratio;  // empty when no anomaly falls in the bucket
};

/// Bucket ratios for explicit edges; values at or above the last inner edge fall in the top bucket.
inline std::vector<AmplitudeBucket> amplitude_buckets(std::span<const double> amplitude, std::span<const int> success,
                                                      const std::array<double, 5>& edges) {
    require(amplitude.size() == success.size(), "amplitude count differs from outcome count");
    std::vector<AmplitudeBucket> buckets(4);
    std::vector<std::size_t> hits(4, 0);
    for (std::size_t b = 0; b < 4; ++b) {
        buckets[b].lo = edges[b];
        buckets[b].hi = edges[b + 1];
    }
    for (std::size_t i = 0; i < amplitude.size(); ++i) {
        std::size_t b = 0;
        while (b < 3 && amplitude[i] >= edges[b + 1]) {
            ++b;
        }
        ++buckets[b].count;
        hits[b] += success[i] != 0 ? 1 : 0;
    }
    for (std::size_t b = 0; b < 4; ++b) {
        if (buckets[b].count > 0) {
            buckets[b].ratio = static_cast<double>(hits[b]) / static_cast<double>(buckets[b].count);
        }
    }
    return buckets;
}

/// Fraction of successes per amplitude quartile [min, q25), [q25, q50),
/// [q50, q75), [q75, max]. `success[i]` says whether the anomaly with
/// amplitude `amplitude[i]` was detected (or localized).
inline std::vector<AmplitudeBucket> amplitude_buckets(std::span<const double> amplitude, std::span<const int> success) {
    require(amplitude.size() == success.size(), "amplitude count differs from outcome count");
    require(!amplitude.empty(), "amplitude buckets need at least one anomaly");
    std::vector<double> sorted(amplitude.begin(), amplitude.end());
    std::sort(sorted.begin(), sorted.end());
    const std::array<double, 5> edges{sorted.front(), stats::sorted_quantile(sorted, 0.25),
                                      stats::sorted_quantile(sorted, 0.5), stats::sorted_quantile(sorted, 0.75),
                                      sorted.back()};
    return amplitude_buckets(amplitude, success, edges);
}

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample std, 0 for a single run
    std::size_t n = 0;
};

inline Summary summarize(std::span<const double> xs) {
    require(!xs.empty(), "summary of an empty sample");
    return {stats::mean(xs), stats::sample_std(xs), xs.size()};
}

using RunMetrics = std::map<std::string, double>;

/// Runs `experiment(seed)` for every seed and summarizes every reported metric.
/// A failing run is rethrown with its index prepended.
inline std::map<std::string, Summary> multirun(const std::function<RunMetrics(std::uint64_t)>& experiment,
                                               std::span<const std::uint64_t> seeds) {
    require(seeds.size() >= 2, "multirun needs at least two runs");
    std::map<std::string, std::vector<double>> values;
    for (std::size_t r = 0; r < seeds.size(); ++r) {
        RunMetrics metrics;
        try {
            metrics = experiment(seeds[r]);
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "run " << r << " (seed " << seeds[r] << ") failed: " << e.what();
            throw Error(msg.str());
        }
        for (const auto& [key, v] : metrics) {
            values[key].push_back(v);
        }
    }
    std::map<std::string, Summary> out;
    for (const auto& [key, vs] : values) {
        out[key] = summarize(vs);
    }
    return out;
}

struct AdfResult {
    double statistic = 0.0;
    std::size_t lags = 0;
    std::size_t n_obs = 0;  // observations in the regression
    double p_value = 1.0;
    double critical_1 = 0.0;
    double critical_5 = 0.0;
    double critical_10 = 0.0;
    bool reject_5 = false;
};

/// floor(12 (n / 100)^(1/4)).
inline std::size_t schwert_lag(std::size_t n) {
    return static_cast<std::size_t>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
}

/// Approximate p-value of the constant-only Dickey-Fuller statistic
/// (MacKinnon 1994 response surface, one variable).
inline double adf_p_value(double tau) {
    constexpr double tau_max = 2.74;
    constexpr double tau_min = -18.83;
    constexpr double tau_star = -1.61;
    if (tau > tau_max) {
        return 1.0;
    }
    if (tau < tau_min) {
        return 0.0;
    }
    double z = 0.0;
    if (tau <= tau_star) {
        z = 2.1659 + tau * (1.4412 + tau * 0.038269);
    } else {
        z = 1.7339 + tau * (0.93202 + tau * (-0.12745 + tau * -0.010368));
    }
    return stats::normal_cdf(z);
}

/// Finite-sample critical values (MacKinnon 2010, constant, no trend).
inline std::array<double, 3> adf_critical_values(std::size_t n_obs) {
    const double inv = 1.0 / static_cast<double>(n_obs);
    return {-3.43035 - 6.5393 * inv - 16.786 * inv * inv - 79.433 * inv * inv * inv,
            -2.86154 - 2.8903 * inv - 4.234 * inv * inv - 40.040 * inv * inv * inv,
            -2.56677 - 1.5384 * inv - 2.809 * inv * inv};
}

/// Augmented Dickey-Fuller test with intercept and no trend:
/// dy_t = a + g y_{t-1} + sum_j theta_j dy_{t-j} + z_t; the statistic is the
/// OLS t-ratio of g. The lag order defaults to the Schwert rule.
inline AdfResult adf_test(std::span<const double> series, std::optional<std::size_t> lag_order = std::nullopt) {
    const std::size_t n = series.size();
    const std::size_t lags = lag_order ? *lag_order : schwert_lag(n);
    if (n <= lags + 2) {
        std::ostringstream msg;
        msg << "ADF test needs more than " << lags + 2 << " observations, got " << n;
        throw ValidationError(msg.str());
    }
    std::vector<double> dy(n - 1);
    for (std::size_t t = 1; t < n; ++t) {
        dy[t - 1] = series[t] - series[t - 1];
    }
    // Rows t = lags .. n-2 index dy; regress dy[t] on 1, y[t], dy[t-1..t-lags].
    const std::size_t n_obs = dy.size() - lags;
    const auto cols = static_cast<Eigen::Index>(lags + 2);
    require(n_obs > static_cast<std::size_t>(cols), "ADF regression has no residual degrees of freedom");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n_obs), cols);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n_obs));
    for (std::size_t r = 0; r < n_obs; ++r) {
        const std::size_t t = r + lags;
        const auto row = static_cast<Eigen::Index>(r);
        y[row] = dy[t];
        x(row, 0) = 1.0;
        x(row, 1) = series[t];
        for (std::size_t j = 1; j <= lags; ++j) {
            x(row, static_cast<Eigen::Index>(j + 1)) = dy[t - j];
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < cols) {
        throw NumericalError("ADF regression is singular");
    }
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - x * beta;
    const double dof = static_cast<double>(n_obs) - static_cast<double>(cols);
    const double s2 = resid.squaredNorm() / dof;
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(cols, cols));
    const double se = std::sqrt(s2 * xtx_inv(1, 1));
    if (!(se > 0.0) || !std::isfinite(se)) {
        throw NumericalError("ADF regression has a degenerate standard error");
    }

    AdfResult out;
    out.statistic = beta[1] / se;
    out.lags = lags;
    out.n_obs = n_obs;
    out.p_value = adf_p_value(out.statistic);
    const auto cv = adf_critical_values(n_obs);
    out.critical_1 = cv[0];
    out.critical_5 = cv[1];
    out.critical_10 = cv[2];
    out.reject_5 = out.statistic < out.critical_5;
    return out;
}

}  // namespace pcann::evaluation

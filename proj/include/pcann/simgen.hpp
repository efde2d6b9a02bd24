#pragma once

// Synthetic market panels: correlated GBM paths, multiplicative shock
// contamination, sliding-window augmentation and train/test selection.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "core.hpp"
#include "linalg.hpp"

namespace pcann::simgen {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Constant pairwise correlation, or an explicit symmetric PSD matrix.
struct CorrelationSpec {
    double constant = 0.5;
    std::optional<Eigen::MatrixXd> matrix;

    Eigen::MatrixXd resolve(std::size_t n) const {
        const auto size = static_cast<Eigen::Index>(n);
        if (matrix) {
            require(matrix->rows() == size && matrix->cols() == size, "correlation matrix must be n_stocks x n_stocks");
            for (Eigen::Index i = 0; i < size; ++i) {
                require(std::abs((*matrix)(i, i) - 1.0) <= 1e-12, "correlation matrix must have a unit diagonal");
            }
            return *matrix;
        }
        require(constant >= 0.0 && constant < 1.0, "constant correlation must lie in [0, 1)");
        Eigen::MatrixXd c = Eigen::MatrixXd::Constant(size, size, constant);
        c.diagonal().setOnes();
        return c;
    }
};

struct DiffusionConfig {
    std::size_t n_stocks = 20;
    std::size_t n_steps = 1500;
    double dt = 1.0 / 252.0;
    Interval drift_range{0.01, 0.2};
    Interval vol_range{0.01, 0.1};
    double s0_mean = 100.0;
    double s0_std = 1.0;
    CorrelationSpec correlation;
    std::uint64_t seed = 0;

    void validate() const {
        require(n_stocks >= 1, "n_stocks must be >= 1");
        require(n_steps >= 1, "n_steps must be >= 1");
        require(dt > 0.0, "dt must be > 0");
        require(drift_range.lo <= drift_range.hi, "drift_range must be ordered");
        require(vol_range.lo <= vol_range.hi && vol_range.lo >= 0.0, "vol_range must be ordered and non-negative");
        require(s0_std >= 0.0, "s0_std must be >= 0");
    }
};

struct StockParams {
    double mu = 0.0;
    double sigma = 0.0;
    double s0 = 0.0;
};

/// N x T price matrix. `params` and `correlation` are empty for panels that
/// were loaded from disk rather than simulated.
struct PricePanel {
    Matrix prices;
    std::vector<StockParams> params;
    Eigen::MatrixXd correlation;
    double dt = 1.0 / 252.0;

    std::size_t n_series() const { return static_cast<std::size_t>(prices.rows()); }
    std::size_t length() const { return static_cast<std::size_t>(prices.cols()); }
};

/// Simulates N correlated geometric Brownian motions.
///
/// Column 0 holds S0; each further column advances one step of `dt` using the
/// exact log-normal transition. Stock i draws its parameters and its
/// independent normals from stream (seed, i); the correlation factor then
/// mixes the normals across stocks, so results do not depend on evaluation order.
inline PricePanel simulate_gbm(const DiffusionConfig& config) {
    config.validate();
    const std::size_t n = config.n_stocks;
    const std::size_t t_len = config.n_steps;

    PricePanel panel;
    panel.dt = config.dt;
    panel.correlation = config.correlation.resolve(n);
    const Eigen::MatrixXd factor = linalg::psd_square_root(panel.correlation);

    Eigen::MatrixXd shocks(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_len > 0 ? t_len - 1 : 0));
    panel.params.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_rng(config.seed, i);
        std::uniform_real_distribution<double> drift(config.drift_range.lo, config.drift_range.hi);
        std::uniform_real_distribution<double> vol(config.vol_range.lo, config.vol_range.hi);
        std::normal_distribution<double> normal(0.0, 1.0);
        StockParams& p = panel.params[i];
        p.mu = config.drift_range.lo == config.drift_range.hi ? config.drift_range.lo : drift(rng);
        p.sigma = config.vol_range.lo == config.vol_range.hi ? config.vol_range.lo : vol(rng);
        p.s0 = config.s0_mean + config.s0_std * normal(rng);
        require(p.s0 > 0.0, "simulated initial price is not positive; adjust s0_mean/s0_std");
        for (Eigen::Index t = 0; t < shocks.cols(); ++t) {
            shocks(static_cast<Eigen::Index>(i), t) = normal(rng);
        }
    }
    const Eigen::MatrixXd correlated = factor * shocks;

    panel.prices.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_len));
    const double sqrt_dt = std::sqrt(config.dt);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const StockParams& p = panel.params[i];
        const double drift_step = (p.mu - 0.5 * p.sigma * p.sigma) * config.dt;
        double log_price = std::log(p.s0);
        panel.prices(row, 0) = p.s0;
        for (Eigen::Index t = 1; t < panel.prices.cols(); ++t) {
            log_price += drift_step + p.sigma * sqrt_dt * correlated(row, t - 1);
            panel.prices(row, t) = std::exp(log_price);
        }
    }
    return panel;
}

struct ContaminationConfig {
    std::size_t n_anom = 4;
    double rho = 0.04;
    std::uint64_t seed = 0;
};

/// Contaminated panel together with its multiplicative mask (1 + delta at
/// shocked stamps, 1 elsewhere) and the 0/1 value labels Y.
struct ContaminatedPanel {
    PricePanel panel;
    Matrix mask;
    LabelMatrix labels;
};

inline ContaminatedPanel contaminate(const PricePanel& clean, const ContaminationConfig& cfg) {
    const std::size_t t_len = clean.length();
    if (cfg.n_anom > t_len) {
        std::ostringstream msg;
        msg << "n_anom (" << cfg.n_anom << ") exceeds series length (" << t_len << ")";
        throw ValidationError(msg.str());
    }
    require(cfg.rho >= 0.0, "rho must be >= 0");

    ContaminatedPanel out;
    out.panel = clean;
    out.mask = Matrix::Ones(clean.prices.rows(), clean.prices.cols());
    out.labels = LabelMatrix::Zero(clean.prices.rows(), clean.prices.cols());

    std::vector<std::size_t> stamps(t_len);
    for (std::size_t i = 0; i < clean.n_series(); ++i) {
        Rng rng = make_rng(cfg.seed, i);
        std::uniform_real_distribution<double> amplitude(0.0, cfg.rho);
        std::bernoulli_distribution positive(0.5);
        // Partial Fisher-Yates: the first n_anom entries are distinct stamps.
        for (std::size_t t = 0; t < t_len; ++t) {
            stamps[t] = t;
        }
        for (std::size_t j = 0; j < cfg.n_anom; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, t_len - 1);
            std::swap(stamps[j], stamps[pick(rng)]);
        }
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < cfg.n_anom; ++j) {
            const double sign = positive(rng) ? 1.0 : -1.0;
            const double delta = sign * amplitude(rng);
            const auto col = static_cast<Eigen::Index>(stamps[j]);
            out.mask(row, col) = 1.0 + delta;
            out.labels(row, col) = 1;
        }
    }
    out.panel.prices = clean.prices.cwiseProduct(out.mask);
    return out;
}

struct Provenance {
    std::size_t series = 0;
    std::size_t offset = 0;  // 0-based start of the window in the source series
};

struct SlidedData {
    Matrix windows;
    LabelMatrix labels;
    std::vector<Provenance> provenance;
};

/// All T - p + 1 windows of every series, series-major.
inline SlidedData slide(const Matrix& prices, const LabelMatrix& value_labels, std::size_t p) {
    require(value_labels.rows() == prices.rows() && value_labels.cols() == prices.cols(),
            "slide: label matrix shape differs from the panel");
    require(p >= 1, "slide: window length must be >= 1");
    const auto t_len = static_cast<std::size_t>(prices.cols());
    if (p > t_len) {
        std::ostringstream msg;
        msg << "window length p=" << p << " exceeds series length T=" << t_len;
        throw ValidationError(msg.str());
    }
    const std::size_t per_series = t_len - p + 1;
    const std::size_t n_rows = per_series * static_cast<std::size_t>(prices.rows());
    const auto width = static_cast<Eigen::Index>(p);

    SlidedData out;
    out.windows.resize(static_cast<Eigen::Index>(n_rows), width);
    out.labels.resize(static_cast<Eigen::Index>(n_rows), width);
    out.provenance.reserve(n_rows);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < prices.rows(); ++i) {
        for (std::size_t q = 0; q < per_series; ++q, ++r) {
            const auto start = static_cast<Eigen::Index>(q);
            out.windows.row(r) = prices.row(i).segment(start, width);
            out.labels.row(r) = value_labels.row(i).segment(start, width);
            out.provenance.push_back({static_cast<std::size_t>(i), q});
        }
    }
    return out;
}

enum class SelectionMode { Train, Test };

/// Row indices (ascending) kept by the selection step.
///
/// Windows with two or more anomalies are always dropped. Train mode keeps
/// every contaminated window plus as many uniformly sampled clean windows;
/// when clean windows are the scarcer class, all of them are kept and the
/// contaminated windows are subsampled to the same count.
/// Test mode samples ceil(Nc (1 - r_c) / r_c) clean windows; when fewer clean
/// windows exist, all of them are kept and the contaminated windows are
/// subsampled instead so that the contamination rate still equals r_c.
inline std::vector<std::size_t> select_rows(const LabelMatrix& window_labels, SelectionMode mode,
                                            double contamination_rate, std::uint64_t seed) {
    std::vector<std::size_t> contaminated;
    std::vector<std::size_t> clean;
    for (Eigen::Index r = 0; r < window_labels.rows(); ++r) {
        const int total = window_labels.row(r).sum();
        if (total == 1) {
            contaminated.push_back(static_cast<std::size_t>(r));
        } else if (total == 0) {
            clean.push_back(static_cast<std::size_t>(r));
        }
    }
    if (contaminated.empty()) {
        throw ValidationError("no contaminated windows survive selection");
    }

    Rng rng = make_rng(seed, 0);
    auto sample = [&rng](std::vector<std::size_t> pool, std::size_t count) {
        count = std::min(count, pool.size());
        for (std::size_t j = 0; j < count; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
            std::swap(pool[j], pool[pick(rng)]);
        }
        pool.resize(count);
        return pool;
    };

    std::vector<std::size_t> keep;
    if (mode == SelectionMode::Train) {
        if (clean.empty()) {
            throw ValidationError("no clean windows survive selection");
        }
        if (clean.size() >= contaminated.size()) {
            keep = contaminated;
            const auto picked = sample(clean, contaminated.size());
            keep.insert(keep.end(), picked.begin(), picked.end());
        } else {
            keep = sample(contaminated, clean.size());
            keep.insert(keep.end(), clean.begin(), clean.end());
        }
    } else {
        require(contamination_rate > 0.0 && contamination_rate <= 1.0, "contamination rate must lie in (0, 1]");
        const double nc = static_cast<double>(contaminated.size());
        const auto wanted_clean = static_cast<std::size_t>(std::ceil(nc * (1.0 - contamination_rate) / contamination_rate - 1e-9));
        if (wanted_clean <= clean.size()) {
            keep = contaminated;
            const auto picked = sample(clean, wanted_clean);
            keep.insert(keep.end(), picked.begin(), picked.end());
        } else {
            const double nu = static_cast<double>(clean.size());
            auto n_contaminated = static_cast<std::size_t>(std::floor(nu * contamination_rate / (1.0 - contamination_rate) + 1e-9));
            n_contaminated = std::max<std::size_t>(n_contaminated, 1);
            keep = sample(contaminated, n_contaminated);
            keep.insert(keep.end(), clean.begin(), clean.end());
        }
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

/// Identification labels A (window sums) and 1-based localization labels L.
struct WindowLabels {
    std::vector<int> ident;
    std::vector<std::optional<int>> loc;
};

inline WindowLabels label(const LabelMatrix& window_labels) {
    WindowLabels out;
    out.ident.reserve(static_cast<std::size_t>(window_labels.rows()));
    out.loc.reserve(static_cast<std::size_t>(window_labels.rows()));
    for (Eigen::Index r = 0; r < window_labels.rows(); ++r) {
        const int total = window_labels.row(r).sum();
        if (total >= 2) {
            std::ostringstream msg;
            msg << "window " << r << " holds " << total << " anomalies; at most one is allowed";
            throw ValidationError(msg.str());
        }
        out.ident.push_back(total);
        if (total == 1) {
            Eigen::Index arg = 0;
            window_labels.row(r).maxCoeff(&arg);
            out.loc.emplace_back(static_cast<int>(arg) + 1);
        } else {
            out.loc.emplace_back(std::nullopt);
        }
    }
    return out;
}

struct LabeledPanel {
    Matrix windows;
    std::vector<int> ident;
    std::vector<std::optional<int>> loc;
    std::vector<Provenance> provenance;

    std::size_t rows() const { return static_cast<std::size_t>(windows.rows()); }
    std::size_t width() const { return static_cast<std::size_t>(windows.cols()); }
    std::size_t n_contaminated() const {
        return static_cast<std::size_t>(std::count(ident.begin(), ident.end(), 1));
    }
};

inline LabeledPanel build_labeled_panel(const SlidedData& slided, const std::vector<std::size_t>& rows) {
    LabeledPanel out;
    out.windows.resize(static_cast<Eigen::Index>(rows.size()), slided.windows.cols());
    LabelMatrix sub(static_cast<Eigen::Index>(rows.size()), slided.labels.cols());
    out.provenance.reserve(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const auto src = static_cast<Eigen::Index>(rows[j]);
        out.windows.row(static_cast<Eigen::Index>(j)) = slided.windows.row(src);
        sub.row(static_cast<Eigen::Index>(j)) = slided.labels.row(src);
        out.provenance.push_back(slided.provenance[rows[j]]);
    }
    auto labels = label(sub);
    out.ident = std::move(labels.ident);
    out.loc = std::move(labels.loc);
    return out;
}

/// Splits along time: columns [0, split) and [split, T).
inline std::pair<PricePanel, PricePanel> split_train_test(const PricePanel& panel, std::size_t split_index) {
    const std::size_t t_len = panel.length();
    if (split_index == 0 || split_index >= t_len) {
        std::ostringstream msg;
        msg << "split index " << split_index << " must lie strictly inside (0, " << t_len << ")";
        throw ValidationError(msg.str());
    }
    PricePanel first = panel;
    PricePanel second = panel;
    const auto s = static_cast<Eigen::Index>(split_index);
    first.prices = panel.prices.leftCols(s);
    second.prices = panel.prices.rightCols(panel.prices.cols() - s);
    return {std::move(first), std::move(second)};
}

}  // namespace pcann::simgen

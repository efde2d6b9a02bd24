#pragma once

// Gaussian kernel density estimates of score distributions and the closed-form
// tail masses used by the detector's loss and the naive cut-off.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "core.hpp"
#include "stats.hpp"

namespace pcann::density {

inline constexpr double kMinBandwidth = 1e-6;

/// Silverman's rule 0.9 min(sd, IQR/1.34) n^(-1/5), floored at kMinBandwidth.
inline double silverman_bandwidth(std::span<const double> samples) {
    require(!samples.empty(), "bandwidth of an empty sample");
    if (samples.size() < 2) {
        return kMinBandwidth;
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double sd = stats::sample_std(sorted);
    const double iqr = stats::sorted_quantile(sorted, 0.75) - stats::sorted_quantile(sorted, 0.25);
    double spread = sd;
    if (iqr > 0.0) {
        spread = std::min(sd, iqr / 1.34);
    }
    const double h = 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
    return std::max(h, kMinBandwidth);
}

struct BandwidthGradient {
    double value = kMinBandwidth;
    std::vector<double> d_samples;  // d value / d sample_i, same order as the input
};

/// Silverman bandwidth together with its derivative with respect to every
/// sample. The rule is piecewise smooth: sd and the interpolated quartiles are
/// differentiated on the branch that is active; the floor has zero gradient.
inline BandwidthGradient silverman_bandwidth_gradient(std::span<const double> samples) {
    require(!samples.empty(), "bandwidth of an empty sample");
    const std::size_t n = samples.size();
    BandwidthGradient out;
    out.d_samples.assign(n, 0.0);
    if (n < 2) {
        return out;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return samples[a] < samples[b]; });
    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) {
        sorted[i] = samples[order[i]];
    }
    const double m = stats::mean(sorted);
    const double sd = stats::sample_std(sorted);
    const double q25 = stats::sorted_quantile(sorted, 0.25);
    const double q75 = stats::sorted_quantile(sorted, 0.75);
    const double iqr = q75 - q25;
    const bool use_iqr = iqr > 0.0 && iqr / 1.34 < sd;
    const double spread = use_iqr ? iqr / 1.34 : sd;
    const double scale = 0.9 * std::pow(static_cast<double>(n), -0.2);
    const double h = scale * spread;
    if (h < kMinBandwidth) {
        return out;
    }
    out.value = h;
    if (use_iqr) {
        auto add_quantile = [&](double q, double sign) {
            const double pos = q * static_cast<double>(n - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const std::size_t hi = std::min(lo + 1, n - 1);
            const double frac = pos - static_cast<double>(lo);
            out.d_samples[order[lo]] += sign * (1.0 - frac) * scale / 1.34;
            out.d_samples[order[hi]] += sign * frac * scale / 1.34;
        };
        add_quantile(0.75, 1.0);
        add_quantile(0.25, -1.0);
    } else if (sd > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            out.d_samples[i] = scale * (samples[i] - m) / (static_cast<double>(n - 1) * sd);
        }
    }
    return out;
}

class KdeModel {
public:
    KdeModel(std::vector<double> samples, double bandwidth) : samples_(std::move(samples)), bandwidth_(bandwidth) {
        require(!samples_.empty(), "kernel density estimate needs at least one sample");
        require(bandwidth_ > 0.0 && std::isfinite(bandwidth_), "bandwidth must be positive and finite");
    }

    double bandwidth() const { return bandwidth_; }
    const std::vector<double>& samples() const { return samples_; }

    double density(double s) const {
        double acc = 0.0;
        for (double x : samples_) {
            acc += stats::normal_pdf((s - x) / bandwidth_);
        }
        return acc / (static_cast<double>(samples_.size()) * bandwidth_);
    }

    /// Mass above s, i.e. the integral of the density over [s, inf).
    double auc_above(double s) const {
        double acc = 0.0;
        for (double x : samples_) {
            acc += stats::normal_sf((s - x) / bandwidth_);
        }
        return acc / static_cast<double>(samples_.size());
    }

    /// Mass below s.
    double auc_below(double s) const {
        double acc = 0.0;
        for (double x : samples_) {
            acc += stats::normal_cdf((s - x) / bandwidth_);
        }
        return acc / static_cast<double>(samples_.size());
    }

    double min_sample() const { return *std::min_element(samples_.begin(), samples_.end()); }
    double max_sample() const { return *std::max_element(samples_.begin(), samples_.end()); }

private:
    std::vector<double> samples_;
    double bandwidth_;
};

/// Fits a Gaussian KDE; `bandwidth` overrides Silverman's rule when given.
inline KdeModel fit_kde(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt) {
    require(!samples.empty(), "kernel density estimate needs at least one sample");
    const double h = bandwidth ? *bandwidth : silverman_bandwidth(samples);
    return KdeModel(std::vector<double>(samples.begin(), samples.end()), h);
}

inline std::vector<double> linear_grid(double lo, double hi, std::size_t size) {
    require(size >= 2, "grid needs at least two points");
    std::vector<double> grid(size);
    for (std::size_t i = 0; i < size; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(size - 1);
    }
    return grid;
}

/// Evenly spaced grid over the union of both sample ranges.
inline std::vector<double> union_grid(const KdeModel& a, const KdeModel& b, std::size_t size = 1024) {
    return linear_grid(std::min(a.min_sample(), b.min_sample()), std::max(a.max_sample(), b.max_sample()), size);
}

struct Cutoff {
    double value = 0.0;
    double gap = 0.0;         // |f_u - f_c| at the cut-off
    bool within_eta = false;  // false when no grid point met the eta band
};

/// Intersection of two densities on a grid.
///
/// The search is restricted to grid points between the two densities' grid
/// modes (the whole grid when the modes coincide), which keeps the far tails,
/// where both densities vanish, out of the candidate set.
inline Cutoff intersection_cutoff(const KdeModel& f_u, const KdeModel& f_c, double eta, std::span<const double> grid) {
    require(eta > 0.0, "eta must be > 0");
    require(!grid.empty(), "cut-off grid is empty");
    std::vector<double> du(grid.size());
    std::vector<double> dc(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        du[i] = f_u.density(grid[i]);
        dc[i] = f_c.density(grid[i]);
    }
    const auto mode_u = static_cast<std::size_t>(std::max_element(du.begin(), du.end()) - du.begin());
    const auto mode_c = static_cast<std::size_t>(std::max_element(dc.begin(), dc.end()) - dc.begin());
    std::size_t lo = std::min(mode_u, mode_c);
    std::size_t hi = std::max(mode_u, mode_c);
    if (lo == hi) {
        lo = 0;
        hi = grid.size() - 1;
    }

    Cutoff best;
    best.gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = lo; i <= hi; ++i) {
        const double gap = std::abs(du[i] - dc[i]);
        if (gap < best.gap) {
            best.gap = gap;
            best.value = grid[i];
        }
    }
    best.within_eta = best.gap < eta;
    return best;
}

}  // namespace pcann::density

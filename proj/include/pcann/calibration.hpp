#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "core.hpp"
#include "evaluation.hpp"
#include "pcafeat.hpp"
#include "scorer.hpp"

namespace pcann::calibration {

struct LatentDimPoint {
    std::size_t k = 0;
    double f1 = 0.0;
};

struct LatentDimResult {
    std::size_t k = 0;
    std::vector<LatentDimPoint> curve;
};

/// Train-set F1 of the naive detector for every k in `k_grid`; picks the
/// smallest k whose F1 is within `tolerance` of the best.
inline LatentDimResult calibrate_latent_dim(const Matrix& x_train, std::span<const int> labels,
                                            std::span<const std::size_t> k_grid, double tolerance = 0.02,
                                            double eta = 1e-3) {
    require(!k_grid.empty(), "latent dimension grid is empty");
    require(tolerance >= 0.0, "tolerance must be >= 0");
    const auto p = static_cast<std::size_t>(x_train.cols());
    for (std::size_t k : k_grid) {
        require(k >= 1 && k <= p, "latent dimension grid must lie in [1, p]");
    }
    const auto spectrum = pcafeat::fit_spectrum(x_train);
    LatentDimResult out;
    for (std::size_t k : k_grid) {
        const auto model = spectrum.truncate(k);
        const Matrix eps = pcafeat::reconstruction_errors(model, x_train);
        const Vector scores = scorer::naive_scores(eps);
        const auto naive = scorer::fit_intersection(scores, labels, eta);
        const auto pred = scorer::hard_labels(scores, naive.cutoff.value);
        out.curve.push_back({k, evaluation::classification_metrics(labels, pred).f1});
    }
    double best = 0.0;
    for (const auto& pt : out.curve) {
        best = std::max(best, pt.f1);
    }
    out.k = 0;
    for (const auto& pt : out.curve) {
        if (pt.f1 >= best - tolerance && (out.k == 0 || pt.k < out.k)) {
            out.k = pt.k;
        }
    }
    return out;
}

}  // namespace pcann::calibration

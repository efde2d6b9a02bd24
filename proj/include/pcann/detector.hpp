#pragma once

// Two-step pipeline: identify contaminated windows, localize the anomaly,
// impute it, and repeat on the cleaned window.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "pcafeat.hpp"
#include "scorer.hpp"

namespace pcann::detector {

enum class ImputeMethod { BackwardFill, LinearInterpolation, PcaReconstruction };

inline std::string to_string(ImputeMethod m) {
    switch (m) {
        case ImputeMethod::BackwardFill:
            return "bf";
        case ImputeMethod::LinearInterpolation:
            return "li";
        case ImputeMethod::PcaReconstruction:
            return "pca";
    }
    return "bf";
}

inline ImputeMethod parse_impute_method(const std::string& s) {
    if (s == "bf" || s == "BF") {
        return ImputeMethod::BackwardFill;
    }
    if (s == "li" || s == "LI") {
        return ImputeMethod::LinearInterpolation;
    }
    if (s == "pca" || s == "PCA") {
        return ImputeMethod::PcaReconstruction;
    }
    throw ValidationError("unknown imputation method '" + s + "' (expected bf, li or pca)");
}

struct DetectionModel {
    pcafeat::PcaModel pca;
    scorer::ScoringNetwork net;

    void validate() const {
        net.validate();
        if (net.input_dim() != pca.p()) {
            std::ostringstream msg;
            msg << "network input dim " << net.input_dim() << " differs from PCA width " << pca.p();
            throw ValidationError(msg.str());
        }
    }

    Vector scores(const Matrix& x) const { return net.forward(pcafeat::reconstruction_errors(pca, x)); }
};

/// A_hat_i = 1{F(eps_i) > s}.
inline std::vector<int> identify(const DetectionModel& model, const Matrix& x) {
    return scorer::hard_labels(model.scores(x), model.net.cutoff);
}

/// 1-based index of the largest |eps|, smallest index on ties.
inline int argmax_abs(const Vector& eps) {
    require(eps.size() > 0, "cannot localize in an empty row");
    Eigen::Index arg = 0;
    double best = std::abs(eps[0]);
    for (Eigen::Index j = 1; j < eps.size(); ++j) {
        const double a = std::abs(eps[j]);
        if (a > best) {
            best = a;
            arg = j;
        }
    }
    return static_cast<int>(arg) + 1;
}

inline int localize(const pcafeat::PcaModel& pca, const Vector& row) {
    return argmax_abs(pcafeat::reconstruction_errors(pca, row));
}

/// Replaces the value at the 1-based `location`.
///
/// BF copies the previous value (the next one at index 1). LI interpolates
/// linearly between the nearest positions not listed in `flagged`, falling
/// back to the nearest such neighbour at a boundary. PCA uses the model's
/// reconstruction of the row.
inline Vector impute(const Vector& row, int location, ImputeMethod method, const pcafeat::PcaModel* pca = nullptr,
                     const std::vector<int>& flagged = {}) {
    const auto p = static_cast<int>(row.size());
    if (location < 1 || location > p) {
        std::ostringstream msg;
        msg << "imputation location " << location << " outside 1.." << p;
        throw ValidationError(msg.str());
    }
    Vector out = row;
    if (p == 1) {
        return out;
    }
    const int j = location - 1;
    switch (method) {
        case ImputeMethod::BackwardFill:
            out[j] = j == 0 ? row[1] : row[j - 1];
            break;
        case ImputeMethod::LinearInterpolation: {
            auto usable = [&](int idx) {
                return idx != j && std::find(flagged.begin(), flagged.end(), idx + 1) == flagged.end();
            };
            int left = j - 1;
            while (left >= 0 && !usable(left)) {
                --left;
            }
            int right = j + 1;
            while (right < p && !usable(right)) {
                ++right;
            }
            if (left >= 0 && right < p) {
                const double w = static_cast<double>(j - left) / static_cast<double>(right - left);
                out[j] = (1.0 - w) * row[left] + w * row[right];
            } else if (left >= 0) {
                out[j] = row[left];
            } else if (right < p) {
                out[j] = row[right];
            }
            break;
        }
        case ImputeMethod::PcaReconstruction: {
            require(pca != nullptr, "PCA imputation needs a fitted PCA model");
            Matrix x = row.transpose();
            out[j] = pca->reconstruct(x)(0, j);
            break;
        }
    }
    return out;
}

struct DetectionReport {
    int predicted = 0;
    double score = 0.0;              // score of the input row
    std::vector<int> locations;      // 1-based, discovery order
    Vector imputed;
    std::size_t iterations = 0;      // localization rounds performed
    bool repeated_location = false;  // loop stopped on a repeated index
};

/// Identify, localize and impute until the row identifies as clean, `max_iter`
/// rounds have run, or a location repeats.
inline DetectionReport detect_iterative(const DetectionModel& model, const Vector& row,
                                        ImputeMethod method = ImputeMethod::BackwardFill, std::size_t max_iter = 5) {
    require(max_iter >= 1, "max_iter must be >= 1");
    DetectionReport report;
    report.imputed = row;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const Vector eps = pcafeat::reconstruction_errors(model.pca, report.imputed);
        const double score = model.net.forward_row(eps);
        if (it == 0) {
            report.score = score;
        }
        if (!(score > model.net.cutoff)) {
            break;
        }
        report.predicted = 1;
        const int loc = argmax_abs(eps);
        if (std::find(report.locations.begin(), report.locations.end(), loc) != report.locations.end()) {
            report.repeated_location = true;
            break;
        }
        report.locations.push_back(loc);
        report.imputed = impute(report.imputed, loc, method, &model.pca, report.locations);
        ++report.iterations;
    }
    return report;
}

inline std::vector<DetectionReport> detect_all(const DetectionModel& model, const Matrix& x,
                                               ImputeMethod method = ImputeMethod::BackwardFill,
                                               std::size_t max_iter = 5) {
    model.validate();
    model.pca.check_width(x);
    std::vector<DetectionReport> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        out.push_back(detect_iterative(model, x.row(r).transpose(), method, max_iter));
    }
    return out;
}

}  // namespace pcann::detector

#pragma once

#include <sstream>

#include "core.hpp"
#include "linalg.hpp"

namespace pcann::pcafeat {

/// Training means plus the k leading covariance eigenvectors (rows of omega).
struct PcaModel {
    Vector mean;
    Matrix omega;  // k x p, orthonormal rows
    Vector eigenvalues;

    std::size_t k() const { return static_cast<std::size_t>(omega.rows()); }
    std::size_t p() const { return static_cast<std::size_t>(omega.cols()); }

    /// Reconstruction X_hat = mean + (X - mean) Omega^T Omega.
    Matrix reconstruct(const Matrix& x) const {
        check_width(x);
        const Matrix centered = x.rowwise() - mean.transpose();
        Matrix out = (centered * omega.transpose()) * omega;
        out.rowwise() += mean.transpose();
        return out;
    }

    void check_width(const Matrix& x) const {
        if (static_cast<std::size_t>(x.cols()) != p()) {
            std::ostringstream msg;
            msg << "PCA model expects rows of length " << p() << ", got " << x.cols();
            throw ValidationError(msg.str());
        }
    }
};

/// Full eigen-decomposition of the training covariance; truncate() yields a
/// model for any k without refitting.
struct PcaSpectrum {
    Vector mean;
    linalg::SymmetricEigen eigen;

    PcaModel truncate(std::size_t k) const {
        const auto p = static_cast<std::size_t>(mean.size());
        if (k < 1 || k > p) {
            std::ostringstream msg;
            msg << "latent dimension k=" << k << " must lie in [1, " << p << "]";
            throw ValidationError(msg.str());
        }
        const auto kk = static_cast<Eigen::Index>(k);
        PcaModel model;
        model.mean = mean;
        model.omega = eigen.vectors.leftCols(kk).transpose();
        model.eigenvalues = eigen.values.head(kk).cwiseMax(0.0);
        return model;
    }
};

inline PcaSpectrum fit_spectrum(const Matrix& x_train) {
    require(x_train.rows() >= 2, "fit_pca needs at least two training rows");
    const auto moments = linalg::sample_moments(x_train);
    return {moments.mean, linalg::jacobi_eigen(moments.covariance)};
}

inline PcaModel fit_pca(const Matrix& x_train, std::size_t k) {
    if (k < 1 || k > static_cast<std::size_t>(x_train.cols())) {
        std::ostringstream msg;
        msg << "latent dimension k=" << k << " must lie in [1, " << x_train.cols() << "]";
        throw ValidationError(msg.str());
    }
    return fit_spectrum(x_train).truncate(k);
}

/// Features epsilon = X_hat - X. Centering cancels in the difference, so this
/// equals X_c (Omega^T Omega - I) on the centered rows.
inline Matrix reconstruction_errors(const PcaModel& model, const Matrix& x) {
    model.check_width(x);
    const Matrix centered = x.rowwise() - model.mean.transpose();
    return (centered * model.omega.transpose()) * model.omega - centered;
}

inline Vector reconstruction_errors(const PcaModel& model, const Vector& row) {
    Matrix x = row.transpose();
    return reconstruction_errors(model, x).row(0).transpose();
}

}  // namespace pcann::pcafeat

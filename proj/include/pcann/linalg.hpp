#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "core.hpp"

namespace pcann::linalg {

struct SymmetricEigen {
    Vector values;        // descending
    Eigen::MatrixXd vectors;  // column j pairs with values[j]
    int sweeps = 0;
};

/// Flips each column so that its largest-magnitude component is positive
/// (first such component on ties).
inline void normalize_signs(Eigen::MatrixXd& vectors) {
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
            const double a = std::abs(vectors(i, j));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (vectors(arg, j) < 0.0) {
            vectors.col(j) *= -1.0;
        }
    }
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Sweeps over every off-diagonal pair until the off-diagonal Frobenius norm
/// drops below `tolerance * max(1, ||A||_F)`. Eigenpairs come back sorted by
/// descending eigenvalue with the deterministic sign convention above.
inline SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, double tolerance = 1e-13, int max_sweeps = 100) {
    require(input.rows() == input.cols(), "jacobi_eigen: matrix must be square");
    const Eigen::Index n = input.rows();
    require(n > 0, "jacobi_eigen: empty matrix");
    if (!input.allFinite()) {
        throw NumericalError("jacobi_eigen: matrix has non-finite entries");
    }

    Eigen::MatrixXd a = 0.5 * (input + input.transpose());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    const double threshold = tolerance * std::max(1.0, a.norm());

    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < j; ++i) {
                s += 2.0 * a(i, j) * a(i, j);
            }
        }
        return std::sqrt(s);
    };

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        if (off_norm() <= threshold) {
            break;
        }
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    if (k == p || k == q) {
                        continue;
                    }
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(p, k) = a(k, p);
                    a(k, q) = s * akp + c * akq;
                    a(q, k) = a(k, q);
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (off_norm() > threshold) {
        std::ostringstream msg;
        msg << "jacobi_eigen: no convergence after " << max_sweeps << " sweeps (off-diagonal norm " << off_norm()
            << ")";
        throw NumericalError(msg.str());
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });

    SymmetricEigen result;
    result.values.resize(n);
    result.vectors.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto src = order[static_cast<std::size_t>(j)];
        result.values[j] = a(src, src);
        result.vectors.col(j) = v.col(src);
    }
    normalize_signs(result.vectors);
    result.sweeps = sweep;
    return result;
}

struct Moments {
    Vector mean;
    Eigen::MatrixXd covariance;
};

/// Column means and 1/(n-1) sample covariance of the rows of `x`.
inline Moments sample_moments(const Matrix& x) {
    require(x.rows() >= 2, "sample covariance needs at least two observations");
    Moments m;
    m.mean = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - m.mean.transpose();
    m.covariance = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
    return m;
}

/// Symmetric square root F of a PSD matrix, F * F^T = C.
///
/// Eigenvalues below -`tolerance` are rejected with the offending value in the
/// message; tiny negative round-off is clamped to zero.
inline Eigen::MatrixXd psd_square_root(const Eigen::MatrixXd& c, double tolerance = 1e-10) {
    require(c.rows() == c.cols(), "psd_square_root: matrix must be square");
    require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "psd_square_root: matrix is not symmetric");
    const SymmetricEigen eig = jacobi_eigen(c, 1e-12);
    const double smallest = eig.values[eig.values.size() - 1];
    if (smallest < -tolerance) {
        std::ostringstream msg;
        msg << "matrix is not positive semi-definite: eigenvalue " << smallest;
        throw ValidationError(msg.str());
    }
    const Vector root = eig.values.cwiseMax(0.0).cwiseSqrt();
    return eig.vectors * root.asDiagonal() * eig.vectors.transpose();
}

}  // namespace pcann::linalg

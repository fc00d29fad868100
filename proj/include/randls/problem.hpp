#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "randls/errors.hpp"
#include "randls/matrix.hpp"
#include "randls/rng.hpp"

namespace randls {

/// An overdetermined linear least-squares problem min ||A x - b||^2, with one
/// or more right-hand-side columns and optional generating ground truth.
struct LsProblem {
    Matrix a;                      // m x n, m >= n
    Matrix rhs;                    // m x r
    std::optional<Matrix> x_true;  // n x r
    std::optional<double> sigma;   // noise standard deviation of rhs

    Index m() const { return a.rows(); }
    Index n() const { return a.cols(); }
    Index r() const { return rhs.cols(); }

    void validate() const {
        if (a.rows() < a.cols()) throw DimensionError("LsProblem: need m >= n");
        if (rhs.rows() != a.rows()) throw DimensionError("LsProblem: rhs row count != m");
        if (rhs.cols() < 1) throw DimensionError("LsProblem: need at least one right-hand side");
        if (x_true && (x_true->rows() != a.cols() || x_true->cols() != rhs.cols()))
            throw DimensionError("LsProblem: x_true must be n x r");
        if (sigma && *sigma < 0) throw ArgumentError("LsProblem: sigma must be nonnegative");
    }
};

/// Synthetic regression instance: standard-normal A (filled row-major from the
/// seed stream), x_true = all ones, b = A x_true + noise with the given
/// standard deviation. Bit-deterministic in the seed.
inline LsProblem generate_regression(Index m, Index n, double sigma, std::uint64_t seed) {
    if (n < 1 || m < n) throw DimensionError("generate_regression: need m >= n >= 1");
    if (sigma < 0) throw ArgumentError("generate_regression: sigma must be nonnegative");
    Rng rng(seed);
    LsProblem p;
    p.a.resize(m, n);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) p.a(i, j) = rng.next_normal();
    Matrix xt = Matrix::Ones(n, 1);
    p.rhs = p.a * xt;
    if (sigma > 0)
        for (Index i = 0; i < m; ++i) p.rhs(i, 0) += sigma * rng.next_normal();
    p.x_true = xt;
    p.sigma = sigma;
    return p;
}

/// Least-squares objective f(x) = 1/2 ||A x - b||^2 for one rhs column.
inline double objective(const LsProblem& p, const Matrix& x, Index rhs_col = 0) {
    if (x.rows() != p.n() || x.cols() != 1) throw DimensionError("objective: x must be n x 1");
    if (rhs_col < 0 || rhs_col >= p.r()) throw DimensionError("objective: rhs column out of range");
    return 0.5 * (p.a * x - p.rhs.col(rhs_col).eval()).squaredNorm();
}

// Relative rank threshold on the QR diagonal: |R_ii| <= kQrRankTol * max|R_jj|
// flags rank deficiency.
inline constexpr double kQrRankTol = 1e-12;

/// Unique least-squares minimizer per rhs column via Householder QR with
/// column pivoting. Throws RankError when A is rank-deficient within the
/// relative threshold above.
inline Matrix qr_solve(const Matrix& a, const Matrix& rhs) {
    if (a.rows() != rhs.rows()) throw DimensionError("qr_solve: A and rhs row counts differ");
    if (a.rows() < a.cols()) throw DimensionError("qr_solve: system is underdetermined (m < n)");
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    const Index k = a.cols();
    const auto& r = qr.matrixR();
    const double rmax = k > 0 ? std::abs(r(0, 0)) : 0.0;
    const double rmin = k > 0 ? std::abs(r(k - 1, k - 1)) : 0.0;
    if (rmax == 0.0 || rmin <= kQrRankTol * rmax)
        throw RankError("qr_solve: matrix is rank-deficient (|R_min|/|R_max| = " +
                        std::to_string(rmax == 0.0 ? 0.0 : rmin / rmax) + ")");
    return qr.solve(rhs);
}

/// Weighted least squares argmin (b - A x)^T diag(w) (b - A x), computed by
/// row-scaling with sqrt(w) and deferring to qr_solve.
inline Matrix weighted_solve(const Matrix& a, const Matrix& b, const Vector& weights) {
    if (weights.size() != a.rows()) throw DimensionError("weighted_solve: weight count != row count");
    if ((weights.array() <= 0.0).any()) throw ArgumentError("weighted_solve: weights must be positive");
    const Vector s = weights.array().sqrt();
    return qr_solve(s.asDiagonal() * a, s.asDiagonal() * b);
}

/// Moore-Penrose pseudoinverse via SVD. Singular values at or below tol are
/// treated as zero; tol = 0 selects the machine default max(m,n)*eps*s_max.
/// Rows and columns (1 x n / m x 1) take the closed form v / ||v||^2 so the
/// single-row Kaczmarz path is exact.
inline Matrix pseudo_solve(const Matrix& mat, double tol = 0.0) {
    if (tol < 0) throw ArgumentError("pseudo_solve: tol must be nonnegative");
    if (mat.rows() == 1 || mat.cols() == 1) {
        const double s2 = mat.squaredNorm();
        if (s2 == 0.0 || (tol > 0 && std::sqrt(s2) <= tol)) return Matrix::Zero(mat.cols(), mat.rows());
        return mat.transpose() / s2;
    }
    Eigen::JacobiSVD<Matrix> svd(mat, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    const double cut =
        tol > 0 ? tol : double(std::max(mat.rows(), mat.cols())) * std::numeric_limits<double>::epsilon() * smax;
    Vector inv = Vector::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cut) inv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

} // namespace randls

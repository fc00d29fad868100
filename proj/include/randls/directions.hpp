#pragma once

#include <cmath>
#include <limits>
#include <variant>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "randls/errors.hpp"
#include "randls/matrix.hpp"
#include "randls/problem.hpp"

namespace randls {

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

struct Gradient {};

struct Newton {
    double svd_tol = 0.0; // 0 = machine default
};

/// Parameters of the running inverse-Hessian approximation
/// B~_k = lambda2 I + k (lambda1 I + sum_i A^T W_i W_i^T A)^{-1},
/// applied only while lambda_max(B~_k) stays at or below cap.
struct QuasiNewton {
    double lambda1 = 1e-5;
    double lambda2 = 0.0;
    double cap = std::numeric_limits<double>::infinity();

    void validate() const {
        if (!(lambda1 > 0)) throw ArgumentError("quasi-newton: lambda1 must be positive");
        if (lambda2 < 0) throw ArgumentError("quasi-newton: lambda2 must be nonnegative");
        if (!(cap > lambda2)) throw ArgumentError("quasi-newton: cap must exceed lambda2");
    }
};

using DirectionStrategy = std::variant<Gradient, Newton, QuasiNewton>;

// ---------------------------------------------------------------------------
// Largest eigenvalue of a symmetric matrix
// ---------------------------------------------------------------------------

// Dense symmetric eigensolve up to this order; power iteration above.
inline constexpr Index kExactEigMaxDim = 64;

/// Largest eigenvalue of a symmetric matrix. Small matrices use a dense
/// symmetric eigensolve; larger ones power iteration with a deterministic
/// all-ones start (or the caller-provided warm start), converged to a
/// relative tolerance on the Rayleigh quotient.
inline double lambda_max(const Matrix& mat, double tol = 1e-6, int max_iters = 500, const Vector* warm_start = nullptr) {
    if (mat.rows() != mat.cols()) throw ArgumentError("lambda_max: matrix must be square");
    const double scale = max_abs(mat);
    if ((mat - mat.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, scale))
        throw ArgumentError("lambda_max: matrix is not symmetric");
    const Index n = mat.rows();
    if (n <= kExactEigMaxDim) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(mat, Eigen::EigenvaluesOnly);
        return eig.eigenvalues().maxCoeff();
    }
    Vector v = (warm_start && warm_start->size() == n) ? warm_start->normalized()
                                                       : Vector::Constant(n, 1.0 / std::sqrt(double(n)));
    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vector w = mat * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        w /= norm;
        const double next = w.dot(mat * w);
        const bool converged = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
        lambda = next;
        v = w;
        if (converged) break;
    }
    return lambda;
}

/// Like lambda_max but leaves the converged eigenvector in warm (for
/// warm-starting the next call on a nearby matrix).
inline double lambda_max_warm(const Matrix& mat, Vector& warm, double tol = 1e-6, int max_iters = 500) {
    const Index n = mat.rows();
    if (n <= kExactEigMaxDim) return lambda_max(mat, tol, max_iters);
    Vector v = (warm.size() == n) ? warm.normalized() : Vector::Constant(n, 1.0 / std::sqrt(double(n)));
    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vector w = mat * v;
        const double norm = w.norm();
        if (norm == 0.0) break;
        w /= norm;
        const double next = w.dot(mat * w);
        const bool converged = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
        lambda = next;
        v = w;
        if (converged) break;
    }
    warm = v;
    return lambda;
}

// ---------------------------------------------------------------------------
// Directions
// ---------------------------------------------------------------------------

/// Sample gradient step -(W^T A)^T (W^T A x - W^T b).
inline Matrix gradient_dir(const Matrix& wa, const Matrix& wb, const Matrix& x) {
    if (wa.cols() != x.rows() || wa.rows() != wb.rows() || x.cols() != wb.cols())
        throw DimensionError("gradient_dir: shape mismatch");
    return -(wa.transpose() * (wa * x - wb));
}

/// Stochastic Newton step -(W^T A)^+ (W^T A x - W^T b); equal to the
/// unreduced -(A^T W W^T A)^+ A^T W W^T (A x - b) by pseudoinverse algebra.
inline Matrix newton_dir(const Matrix& wa, const Matrix& wb, const Matrix& x, double svd_tol = 0.0) {
    if (wa.cols() != x.rows() || wa.rows() != wb.rows() || x.cols() != wb.cols())
        throw DimensionError("newton_dir: shape mismatch");
    return -(pseudo_solve(wa, svd_tol) * (wa * x - wb));
}

// ---------------------------------------------------------------------------
// Quasi-Newton state
// ---------------------------------------------------------------------------

/// Woodbury-maintained chain for the inverse-Hessian approximation.
///
/// inv_core holds k (lambda1 I + sum_{i<=k} A^T W_i W_i^T A)^{-1}; the
/// candidate B~_k = lambda2 I + inv_core is adopted as `accepted` only while
/// its largest eigenvalue stays at or below cap. The chain itself always
/// advances, rejected or not, so the k-scaled recursion stays intact.
struct QnState {
    QuasiNewton cfg;
    long k = 0;
    Matrix inv_core; // n x n, symmetric positive definite
    Matrix accepted; // n x n, the matrix actually applied
    long reject_count = 0;
    long pseudo_fallback_count = 0;
    bool last_rejected = false;
    Vector eig_warm; // power-iteration warm start (used when n > kExactEigMaxDim)

    Index n() const { return inv_core.rows(); }
};

inline QnState qn_init(Index n, const QuasiNewton& cfg) {
    cfg.validate();
    if (n < 1) throw ArgumentError("qn_init: need n >= 1");
    QnState state;
    state.cfg = cfg;
    state.inv_core = Matrix::Identity(n, n) / cfg.lambda1;
    state.accepted = Matrix::Identity(n, n) * std::min(1.0 / cfg.lambda1 + cfg.lambda2, cfg.cap);
    return state;
}

namespace detail {

/// Solves the ell x ell SPD inner system via Cholesky, falling back to an SVD
/// pseudo-solve when the factorization fails numerically.
inline Matrix solve_inner(const Matrix& inner, const Matrix& rhs, QnState& state) {
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    ++state.pseudo_fallback_count;
    return pseudo_solve(inner) * rhs;
}

} // namespace detail

/// Advances the chain by one sketch W (passed as wa = W^T A), inverting only
/// an ell x ell system, then applies the cap rule to refresh `accepted`.
inline void qn_update(QnState& state, const Matrix& wa) {
    if (wa.cols() != state.n()) throw DimensionError("qn_update: wa column count != n");
    const Index n = state.n();
    if (state.k == 0) {
        // B~_1 = (1/lambda1) (I - wa^T (lambda1 I + wa wa^T)^{-1} wa)
        Matrix inner = wa * wa.transpose();
        inner.diagonal().array() += state.cfg.lambda1;
        const Matrix y = detail::solve_inner(inner, wa, state); // ell x n
        state.inv_core = (Matrix::Identity(n, n) - wa.transpose() * y) / state.cfg.lambda1;
    } else {
        const double k = double(state.k);
        const Matrix c = state.inv_core * wa.transpose(); // n x ell
        Matrix inner = wa * c;                            // ell x ell
        inner.diagonal().array() += k;
        const Matrix y = detail::solve_inner(inner, Matrix(c.transpose()), state); // ell x n
        state.inv_core = ((k + 1.0) / k) * (state.inv_core - c * y);
    }
    state.inv_core = 0.5 * (state.inv_core + state.inv_core.transpose()).eval();
    ++state.k;

    Matrix candidate = state.inv_core;
    candidate.diagonal().array() += state.cfg.lambda2;
    const double lmax = lambda_max_warm(candidate, state.eig_warm);
    if (lmax <= state.cfg.cap) {
        state.accepted = std::move(candidate);
        state.last_rejected = false;
    } else {
        ++state.reject_count;
        state.last_rejected = true;
    }
}

/// Quasi-Newton step -B (W^T A)^T (W^T A x - W^T b) with B the last accepted
/// inverse-Hessian approximation.
inline Matrix qn_dir(const QnState& state, const Matrix& wa, const Matrix& wb, const Matrix& x) {
    if (wa.cols() != x.rows() || wa.rows() != wb.rows() || x.cols() != wb.cols() || state.n() != x.rows())
        throw DimensionError("qn_dir: shape mismatch");
    return -(state.accepted * (wa.transpose() * (wa * x - wb)));
}

} // namespace randls

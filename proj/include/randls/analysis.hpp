#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "randls/errors.hpp"
#include "randls/matrix.hpp"
#include "randls/matrix_io.hpp"
#include "randls/problem.hpp"
#include "randls/rng.hpp"
#include "randls/sketch.hpp"

namespace randls {

// ---------------------------------------------------------------------------
// The two-parameter worked example: A = [[mu, 0], [0, 1], [1, -1]],
// b = (1, 1, nu). The least-squares solution x_hat and the single-row
// Kaczmarz stochastic-Newton limit x_tilde have closed forms, and their gap
// omega(mu, nu) = ||x_hat - x_tilde|| quantifies how far stochastic Newton
// can land from the least-squares solution.
// ---------------------------------------------------------------------------

struct ExampleParams {
    double mu = 1.0;
    double nu = 0.0;
};

inline void validate(const ExampleParams& p) {
    if (p.mu == 0.0) throw ArgumentError("example: mu must be nonzero (the solution has a pole at mu = 0)");
    if (!std::isfinite(p.mu) || !std::isfinite(p.nu)) throw ArgumentError("example: parameters must be finite");
}

struct ExampleProblem {
    Matrix a; // 3 x 2
    Matrix b; // 3 x 1
};

inline ExampleProblem example_problem(const ExampleParams& p) {
    validate(p);
    ExampleProblem e;
    e.a.resize(3, 2);
    e.a << p.mu, 0.0, 0.0, 1.0, 1.0, -1.0;
    e.b.resize(3, 1);
    e.b << 1.0, 1.0, p.nu;
    return e;
}

struct ExampleSolutions {
    Matrix xhat;   // 2 x 1
    Matrix xtilde; // 2 x 1
    double omega = 0.0;
};

inline ExampleSolutions example_solutions(const ExampleParams& p) {
    validate(p);
    ExampleSolutions s;
    const double mu = p.mu, nu = p.nu;
    s.xhat.resize(2, 1);
    s.xhat << (2.0 * mu + nu + 1.0) / (2.0 * mu * mu + 1.0),
        (mu - mu * mu * nu + mu * mu + 1.0) / (2.0 * mu * mu + 1.0);
    s.xtilde.resize(2, 1);
    s.xtilde << (1.0 + nu + 3.0 / mu) / 4.0, (3.0 - nu + 1.0 / mu) / 4.0;
    s.omega = (s.xhat - s.xtilde).norm();
    return s;
}

// ---------------------------------------------------------------------------
// The projection matrix P = E[(W^T A)^+ W^T] of the stochastic Newton limit
// x_tilde = (P A)^{-1} P b.
// ---------------------------------------------------------------------------

/// Closed form for single-row Kaczmarz sketches: P = A^T diag(1/||a_i||^2).
/// (The uniform 1/m row-choice factor is dropped; x_tilde is invariant to
/// the scale of P.)
inline Matrix row_kaczmarz_P(const Matrix& a) {
    Matrix p(a.cols(), a.rows());
    for (Index i = 0; i < a.rows(); ++i) {
        const double s2 = a.row(i).squaredNorm();
        if (s2 == 0.0) throw ArgumentError("row_kaczmarz_P: row " + std::to_string(i) + " of A is zero");
        p.col(i) = a.row(i).transpose() / s2;
    }
    return p;
}

struct PEstimate {
    Matrix p_hat;        // n x m
    long n_samples = 0;  // draws, or enumerated outcomes when exhaustive
    double std_err = 0.0; // max entrywise standard error (0 when exhaustive)
    bool exhaustive = false;
};

namespace detail {

/// H_W = (W^T A)^+ W^T accumulated into `out` (n x m) with weight 1.
inline void accumulate_h(const SketchSample& sample, const Matrix& a, double svd_tol, Matrix& out,
                         Matrix* out_sq = nullptr) {
    Matrix wa = Matrix::Zero(sample.ell, a.cols());
    for (Index j = 0; j < sample.ell; ++j)
        for (const auto& [row, value] : sample.columns[std::size_t(j)]) wa.row(j) += value * a.row(row);
    const Matrix pinv = pseudo_solve(wa, svd_tol); // n x ell
    Matrix h = Matrix::Zero(a.cols(), a.rows());
    for (Index j = 0; j < sample.ell; ++j)
        for (const auto& [row, value] : sample.columns[std::size_t(j)]) h.col(row) += value * pinv.col(j);
    out += h;
    if (out_sq) *out_sq += h.cwiseProduct(h);
}

inline long binomial_capped(Index m, Index k, long cap) {
    double c = 1.0;
    for (Index i = 0; i < k; ++i) {
        c *= double(m - i) / double(i + 1);
        if (c > double(cap)) return cap + 1;
    }
    return long(c + 0.5);
}

} // namespace detail

// Exhaustive enumeration is used instead of Monte Carlo whenever the sketch
// family has a finite sample space of at most this many outcomes.
inline constexpr long kExhaustiveOutcomeLimit = 10000;

/// Estimates P for a sketch distribution. When the sample space is finite and
/// small (Kaczmarz families), every outcome is enumerated once and the
/// equal-weight sum is returned, which carries no sampling error and matches
/// the scale convention of row_kaczmarz_P. Otherwise p_hat is the Monte Carlo
/// sample mean of H_W with an entrywise standard-error estimate.
inline PEstimate estimate_P(const SketchSpec& spec, const Matrix& a, long n_samples, std::uint64_t seed,
                            double svd_tol = 0.0) {
    validate_spec(spec);
    if (a.rows() != sketch_rows(spec)) throw DimensionError("estimate_P: A row count != sketch dimension");
    PEstimate est;
    est.p_hat = Matrix::Zero(a.cols(), a.rows());

    if (const auto* gk = std::get_if<GeneralizedKaczmarzSpec>(&spec)) {
        if (gk->p() <= kExhaustiveOutcomeLimit) {
            for (const auto& blk : gk->blocks) {
                SketchSample s;
                s.m = gk->m;
                s.ell = blk.size();
                s.columns.resize(std::size_t(blk.size()));
                for (Index c = blk.begin; c < blk.end; ++c) {
                    auto& col = s.columns[std::size_t(c - blk.begin)];
                    if (gk->q) {
                        for (Index i = 0; i < gk->m; ++i)
                            if ((*gk->q)(i, c) != 0.0) col.emplace_back(i, (*gk->q)(i, c));
                    } else {
                        col.emplace_back(c, 1.0);
                    }
                }
                detail::accumulate_h(s, a, svd_tol, est.p_hat);
            }
            est.n_samples = gk->p();
            est.exhaustive = true;
            return est;
        }
    }
    if (const auto* kc = std::get_if<KaczmarzUniformColumnsSpec>(&spec)) {
        const long outcomes = detail::binomial_capped(kc->m, kc->ell, kExhaustiveOutcomeLimit);
        if (outcomes <= kExhaustiveOutcomeLimit) {
            // lexicographic ell-subsets of {0..m-1}
            std::vector<Index> idx(std::size_t(kc->ell));
            for (Index i = 0; i < kc->ell; ++i) idx[std::size_t(i)] = i;
            long count = 0;
            while (true) {
                SketchSample s;
                s.m = kc->m;
                s.ell = kc->ell;
                s.columns.resize(std::size_t(kc->ell));
                for (Index j = 0; j < kc->ell; ++j) s.columns[std::size_t(j)].emplace_back(idx[std::size_t(j)], 1.0);
                detail::accumulate_h(s, a, svd_tol, est.p_hat);
                ++count;
                Index i = kc->ell - 1;
                while (i >= 0 && idx[std::size_t(i)] == kc->m - kc->ell + i) --i;
                if (i < 0) break;
                ++idx[std::size_t(i)];
                for (Index j = i + 1; j < kc->ell; ++j) idx[std::size_t(j)] = idx[std::size_t(j - 1)] + 1;
            }
            est.n_samples = count;
            est.exhaustive = true;
            return est;
        }
    }

    if (n_samples < 2) throw ArgumentError("estimate_P: need at least 2 Monte Carlo samples");
    Rng rng(seed);
    Matrix sq = Matrix::Zero(a.cols(), a.rows());
    for (long k = 0; k < n_samples; ++k) detail::accumulate_h(draw(spec, rng), a, svd_tol, est.p_hat, &sq);
    est.p_hat /= double(n_samples);
    // entrywise sample variance -> standard error of the mean
    Matrix var = (sq / double(n_samples) - est.p_hat.cwiseProduct(est.p_hat)) * double(n_samples) /
                 double(n_samples - 1);
    est.std_err = std::sqrt(std::max(0.0, var.maxCoeff()) / double(n_samples));
    est.n_samples = n_samples;
    return est;
}

/// x_tilde = (P A)^{-1} P b, solved by QR of P A.
inline Matrix x_tilde_from_P(const Matrix& a, const Matrix& b, const Matrix& p) {
    if (p.cols() != a.rows() || p.rows() != a.cols()) throw DimensionError("x_tilde_from_P: P must be n x m");
    if (b.rows() != a.rows()) throw DimensionError("x_tilde_from_P: b row count != m");
    return qr_solve(p * a, p * b);
}

/// Sampling covariances of the two estimators under noise of the given
/// standard deviation:
///   Var(x_hat)   = sigma^2 (A^T A)^{-1}
///   Var(x_tilde) = sigma^2 (P A)^{-1} P P^T (A^T P^T)^{-1}.
struct EstimatorCovariances {
    Matrix var_xhat;   // n x n
    Matrix var_xtilde; // n x n
};

inline EstimatorCovariances covariances(double sigma, const Matrix& a, const Matrix& p) {
    if (sigma < 0) throw ArgumentError("covariances: sigma must be nonnegative");
    const Index n = a.cols();
    const Matrix eye = Matrix::Identity(n, n);
    EstimatorCovariances cov;
    cov.var_xhat = sigma * sigma * qr_solve(Matrix(a.transpose() * a), eye);
    const Matrix g = qr_solve(p * a, p); // (PA)^{-1} P
    cov.var_xtilde = sigma * sigma * (g * g.transpose());
    return cov;
}

// ---------------------------------------------------------------------------
// Sweeps and Monte Carlo studies
// ---------------------------------------------------------------------------

struct OmegaRow {
    double mu = 0.0;
    double nu = 0.0;
    double omega = 0.0;
};

inline std::vector<OmegaRow> omega_sweep(const std::vector<double>& mu_grid, const std::vector<double>& nu_grid) {
    std::vector<OmegaRow> rows;
    rows.reserve(mu_grid.size() * nu_grid.size());
    for (double mu : mu_grid)
        for (double nu : nu_grid) {
            const auto sol = example_solutions({mu, nu});
            rows.push_back({mu, nu, sol.omega});
        }
    return rows;
}

inline void write_omega_csv(const std::vector<OmegaRow>& rows, std::ostream& os) {
    os << "mu,nu,omega\n";
    for (const auto& r : rows)
        os << detail::format_double(r.mu) << ',' << detail::format_double(r.nu) << ','
           << detail::format_double(r.omega) << '\n';
}

/// Empirical means and covariances of x_hat and x_tilde over repeated noise
/// draws on the worked example.
///
/// The generative model fixes x_true = (1, 1) and adds the example's own
/// least-squares residual (which lies in null(A^T) and vanishes exactly when
/// nu = 1/mu - 1) as the noiseless inconsistency: b0 = A x_true + r(mu, nu),
/// then b = b0 + noise per trial. Since the offset is in null(A^T), x_hat
/// remains exactly unbiased for x_true; x_tilde is unbiased when the offset
/// is zero (e.g. nu = 0 at mu = 1), which is the configuration the paper's
/// unbiasedness statement refers to.
struct UnbiasednessSummary {
    Matrix x_true;     // 2 x 1
    Matrix mean_xhat;  // 2 x 1
    Matrix mean_xtilde;
    Matrix cov_xhat; // 2 x 2 sample covariances
    Matrix cov_xtilde;
    Matrix se_mean_xhat; // 2 x 1 standard errors of the means
    Matrix se_mean_xtilde;
    long n_trials = 0;
};

inline UnbiasednessSummary unbiasedness_study(const ExampleParams& params, double sigma, long n_trials,
                                              std::uint64_t seed) {
    if (n_trials < 2) throw ArgumentError("unbiasedness_study: need at least 2 trials");
    if (sigma < 0) throw ArgumentError("unbiasedness_study: sigma must be nonnegative");
    const ExampleProblem ex = example_problem(params);
    Matrix x_true(2, 1);
    x_true << 1.0, 1.0;
    const Matrix residual = ex.b - ex.a * qr_solve(ex.a, ex.b); // in null(A^T)
    const Matrix b0 = ex.a * x_true + residual;
    const Matrix p = row_kaczmarz_P(ex.a);

    Rng rng(seed);
    Matrix hats(n_trials, 2), tildes(n_trials, 2);
    Matrix b(3, 1);
    for (long t = 0; t < n_trials; ++t) {
        for (Index i = 0; i < 3; ++i) b(i, 0) = b0(i, 0) + sigma * rng.next_normal();
        hats.row(t) = qr_solve(ex.a, b).transpose();
        tildes.row(t) = x_tilde_from_P(ex.a, b, p).transpose();
    }

    auto summarize = [n_trials](const Matrix& samples, Matrix& mean, Matrix& cov, Matrix& se) {
        mean = samples.colwise().mean().transpose();
        Matrix centered = samples.rowwise() - mean.transpose().row(0);
        cov = (centered.transpose() * centered) / double(n_trials - 1);
        se = (cov.diagonal().array() / double(n_trials)).sqrt().matrix();
    };
    UnbiasednessSummary s;
    s.x_true = x_true;
    s.n_trials = n_trials;
    summarize(hats, s.mean_xhat, s.cov_xhat, s.se_mean_xhat);
    summarize(tildes, s.mean_xtilde, s.cov_xtilde, s.se_mean_xtilde);
    return s;
}

} // namespace randls

#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "randls/directions.hpp"
#include "randls/errors.hpp"
#include "randls/matrix.hpp"
#include "randls/matrix_io.hpp"
#include "randls/problem.hpp"
#include "randls/rng.hpp"
#include "randls/sketch.hpp"

namespace randls {

// ---------------------------------------------------------------------------
// Step schedules
// ---------------------------------------------------------------------------

struct HarmonicStep {
    double c = 1.0; // alpha_k = c / k
};

struct ConstantStep {
    double c = 1.0; // alpha_k = c
};

using StepSchedule = std::variant<HarmonicStep, ConstantStep>;

inline double step_size(const StepSchedule& schedule, long k) {
    if (k < 1) throw ArgumentError("step_size: iterations are 1-based");
    if (const auto* h = std::get_if<HarmonicStep>(&schedule)) {
        if (!(h->c > 0)) throw ArgumentError("step_size: c must be positive");
        return h->c / double(k);
    }
    const auto& c = std::get<ConstantStep>(schedule);
    if (!(c.c > 0)) throw ArgumentError("step_size: c must be positive");
    return c.c;
}

/// Whether the family satisfies sum alpha_k = inf and sum alpha_k^2 < inf
/// (harmonic: yes; constant: no).
inline bool satisfies_sa_conditions(const StepSchedule& schedule) {
    return std::holds_alternative<HarmonicStep>(schedule);
}

// ---------------------------------------------------------------------------
// Stopping
// ---------------------------------------------------------------------------

enum class StopMode { Any, Both };
enum class StopReason { MaxIters, XChange, FChange, Both };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::MaxIters: return "max_iters";
        case StopReason::XChange: return "x_change";
        case StopReason::FChange: return "f_change";
        case StopReason::Both: return "both";
    }
    return "?";
}

/// Early-stopping rule: a hard iteration limit plus the two tolerance tests
///   ||x_{k-1} - x_k||_inf < sqrt(tol) (1 + ||x_k||_inf)
///   |fbar_{k-1} - fbar_k| < tol (1 + fbar_{k-1})
/// where fbar is the moving average of the last `window` sample objectives
/// (undefined, hence inactive, until that many values exist). mode selects
/// whether one or both tests must fire on the same iteration.
struct StoppingRule {
    long max_iters = 1000;
    double tol = 1e-4;
    long window = 10; // values averaged; 10 = the paper's s = 9
    StopMode mode = StopMode::Both;

    void validate() const {
        if (max_iters < 1) throw ArgumentError("stopping rule: max_iters must be >= 1");
        if (!(tol > 0)) throw ArgumentError("stopping rule: tol must be positive");
        if (window < 1) throw ArgumentError("stopping rule: window must be >= 1");
    }
};

/// Evaluates the two tolerance tests given the latest pair of iterates and
/// the full sample-objective history (f_1..f_k, most recent last). Returns
/// the triggered reason, if any; the iteration limit is the caller's job.
inline std::optional<StopReason> check_stop(const StoppingRule& rule, const Matrix& x_prev, const Matrix& x_curr,
                                            const std::vector<double>& sample_f_history) {
    rule.validate();
    const double dx = (x_prev - x_curr).cwiseAbs().maxCoeff();
    const bool x_fired = dx < std::sqrt(rule.tol) * (1.0 + max_abs(x_curr));

    bool f_fired = false;
    const long w = rule.window;
    if (long(sample_f_history.size()) >= w + 1) {
        const auto tail = [&](long offset) {
            double sum = 0.0;
            const std::size_t end = sample_f_history.size() - std::size_t(offset);
            for (std::size_t i = end - std::size_t(w); i < end; ++i) sum += sample_f_history[i];
            return sum / double(w);
        };
        const double fbar_curr = tail(0);
        const double fbar_prev = tail(1);
        f_fired = std::abs(fbar_prev - fbar_curr) < rule.tol * (1.0 + fbar_prev);
    }

    if (rule.mode == StopMode::Both) {
        if (x_fired && f_fired) return StopReason::Both;
        return std::nullopt;
    }
    if (x_fired && f_fired) return StopReason::Both;
    if (x_fired) return StopReason::XChange;
    if (f_fired) return StopReason::FChange;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TraceRecord {
    long k = 0;
    double alpha = 0.0;
    double sample_f = 0.0;          // f_{W_k}(x_k) = ||W^T(A x - b)||_F^2 / (2 beta)
    std::optional<double> full_f;   // 1/2 ||A x - b||_F^2, every trace_every iterations
    std::vector<double> err_to_ref; // ||x_k - ref||_F / ||ref||_F, aligned with ref_names
    long rows_touched_cum = 0;
    bool qn_rejected = false;
};

struct SolveReport {
    Matrix final_x;
    long iterations = 0;
    StopReason stop_reason = StopReason::MaxIters;
    std::vector<std::string> ref_names;
    std::vector<TraceRecord> trace;
    long qn_reject_total = 0;
    long qn_pseudo_fallbacks = 0;
};

/// Named reference solutions (x_hat, x_tilde, x_true, ...) whose relative
/// distance is tracked per iteration.
using NamedRefs = std::vector<std::pair<std::string, Matrix>>;

enum class StartPoint { Zero, RandomNormal, Given };

struct RunControls {
    StartPoint x0_mode = StartPoint::Zero;
    Matrix x0;           // used when x0_mode == Given
    long trace_every = 10; // full-objective cadence
    bool strict_adapted = false; // compute s_k before absorbing W_k into B_k
};

// ---------------------------------------------------------------------------
// The stochastic approximation loop
// ---------------------------------------------------------------------------

/// Runs x_k = x_{k-1} + alpha_k s_k with a fresh sketch per iteration, all r
/// right-hand-side columns sharing one sketch stream and (for quasi-Newton)
/// one inverse-Hessian chain. Deterministic in the seed.
///
/// Directions are applied exactly as defined (no hidden beta factors): the
/// sample gradient has expectation beta * grad f, so a constant gradient
/// step should be chosen on the order of 1/(beta lambda_max(A^T A)); the
/// Newton step is scale-invariant; and the quasi-Newton chain's own 1/beta
/// limit cancels the beta in the sample gradient by itself.
inline SolveReport run_multi_rhs(const LsProblem& problem, const SketchSpec& spec, const StepSchedule& schedule,
                                 const DirectionStrategy& strategy, const StoppingRule& rule, const NamedRefs& refs,
                                 std::uint64_t seed, const RunControls& controls = {}) {
    problem.validate();
    validate_spec(spec);
    rule.validate();
    if (sketch_rows(spec) != problem.m()) throw DimensionError("run: sketch dimension != problem row count");
    const Index n = problem.n();
    const Index r = problem.r();
    for (const auto& [name, ref] : refs)
        if (ref.rows() != n || ref.cols() != r) throw DimensionError("run: reference '" + name + "' must be n x r");

    const double beta = beta_of(spec);
    Rng root(seed);
    Rng x0_rng = root.split();
    Rng sketch_rng = root.split();

    Matrix x(n, r);
    switch (controls.x0_mode) {
        case StartPoint::Zero: x.setZero(); break;
        case StartPoint::RandomNormal:
            for (Index i = 0; i < n; ++i)
                for (Index j = 0; j < r; ++j) x(i, j) = x0_rng.next_normal();
            break;
        case StartPoint::Given:
            if (controls.x0.rows() != n || controls.x0.cols() != r)
                throw DimensionError("run: given x0 must be n x r");
            x = controls.x0;
            break;
    }

    QnState qn;
    const auto* qn_cfg = std::get_if<QuasiNewton>(&strategy);
    if (qn_cfg) qn = qn_init(n, *qn_cfg);

    SolveReport report;
    for (const auto& [name, ref] : refs) report.ref_names.push_back(name);
    report.trace.reserve(std::size_t(std::min<long>(rule.max_iters, 1 << 20)));

    std::vector<double> f_history;
    f_history.reserve(std::size_t(std::min<long>(rule.max_iters, 1 << 20)));
    long rows_cum = 0;
    std::optional<StopReason> stop;

    for (long k = 1; k <= rule.max_iters; ++k) {
        const SketchSample sample = draw(spec, sketch_rng);
        const SketchedSystem sys = sketch_apply(sample, problem.a, problem.rhs);

        Matrix dir;
        bool rejected_now = false;
        if (std::holds_alternative<Gradient>(strategy)) {
            dir = gradient_dir(sys.wa, sys.wb, x);
        } else if (const auto* nw = std::get_if<Newton>(&strategy)) {
            dir = newton_dir(sys.wa, sys.wb, x, nw->svd_tol);
        } else if (controls.strict_adapted) {
            dir = qn_dir(qn, sys.wa, sys.wb, x);
            qn_update(qn, sys.wa);
            rejected_now = qn.last_rejected;
        } else {
            qn_update(qn, sys.wa);
            rejected_now = qn.last_rejected;
            dir = qn_dir(qn, sys.wa, sys.wb, x);
        }

        const double alpha = step_size(schedule, k);
        const Matrix x_prev = x;
        x += alpha * dir;

        TraceRecord rec;
        rec.k = k;
        rec.alpha = alpha;
        rec.sample_f = 0.5 * (sys.wa * x - sys.wb).squaredNorm() / beta;
        f_history.push_back(rec.sample_f);
        rows_cum += sys.rows_touched;
        rec.rows_touched_cum = rows_cum;
        rec.qn_rejected = rejected_now;
        for (const auto& [name, ref] : refs) {
            (void)name;
            rec.err_to_ref.push_back((x - ref).norm() / ref.norm());
        }

        stop = check_stop(rule, x_prev, x, f_history);
        const bool last = stop.has_value() || k == rule.max_iters;
        if (k % controls.trace_every == 0 || last)
            rec.full_f = 0.5 * (problem.a * x - problem.rhs).squaredNorm();
        report.trace.push_back(std::move(rec));
        report.iterations = k;
        if (stop) break;
    }

    report.final_x = std::move(x);
    report.stop_reason = stop.value_or(StopReason::MaxIters);
    if (qn_cfg) {
        report.qn_reject_total = qn.reject_count;
        report.qn_pseudo_fallbacks = qn.pseudo_fallback_count;
    }
    return report;
}

/// Single right-hand-side convenience wrapper; identical to run_multi_rhs on
/// an r = 1 problem.
inline SolveReport run(const LsProblem& problem, const SketchSpec& spec, const StepSchedule& schedule,
                       const DirectionStrategy& strategy, const StoppingRule& rule, const NamedRefs& refs,
                       std::uint64_t seed, const RunControls& controls = {}) {
    if (problem.r() != 1) throw DimensionError("run: problem has multiple right-hand sides; use run_multi_rhs");
    return run_multi_rhs(problem, spec, schedule, strategy, rule, refs, seed, controls);
}

/// Trace CSV: k,alpha,sample_f,full_f,err_<name>...,rows_touched_cum,qn_rejected.
/// full_f is blank on iterations where it was not evaluated.
inline void write_trace_csv(const SolveReport& report, std::ostream& os) {
    os << "k,alpha,sample_f,full_f";
    for (const auto& name : report.ref_names) os << ",err_" << name;
    os << ",rows_touched_cum,qn_rejected\n";
    for (const auto& rec : report.trace) {
        os << rec.k << ',' << detail::format_double(rec.alpha) << ',' << detail::format_double(rec.sample_f) << ',';
        if (rec.full_f) os << detail::format_double(*rec.full_f);
        for (double e : rec.err_to_ref) os << ',' << detail::format_double(e);
        os << ',' << rec.rows_touched_cum << ',' << (rec.qn_rejected ? 1 : 0) << '\n';
    }
}

} // namespace randls

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "randls/analysis.hpp"
#include "randls/solver.hpp"

using namespace randls;

namespace {

bool reports_equal(const SolveReport& a, const SolveReport& b) {
    if (a.iterations != b.iterations || a.stop_reason != b.stop_reason) return false;
    if (a.final_x != b.final_x) return false;
    if (a.trace.size() != b.trace.size()) return false;
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        const auto& ra = a.trace[i];
        const auto& rb = b.trace[i];
        if (ra.k != rb.k || ra.alpha != rb.alpha || ra.sample_f != rb.sample_f) return false;
        if (ra.full_f != rb.full_f || ra.err_to_ref != rb.err_to_ref) return false;
        if (ra.rows_touched_cum != rb.rows_touched_cum || ra.qn_rejected != rb.qn_rejected) return false;
    }
    return true;
}

StoppingRule run_to_limit(long iters) {
    StoppingRule rule;
    rule.max_iters = iters;
    rule.tol = std::numeric_limits<double>::min();
    return rule;
}

} // namespace

TEST_CASE("step_size families") {
    REQUIRE(step_size(HarmonicStep{1.0}, 4) == 0.25);
    REQUIRE(step_size(HarmonicStep{2.0}, 1) == 2.0);
    REQUIRE(step_size(ConstantStep{1.0}, 17) == 1.0);
    REQUIRE_THROWS_AS(step_size(HarmonicStep{1.0}, 0), ArgumentError);

    REQUIRE(satisfies_sa_conditions(HarmonicStep{1.0}));
    REQUIRE_FALSE(satisfies_sa_conditions(ConstantStep{0.5}));
}

TEST_CASE("check_stop: stationary iterates fire the x test") {
    StoppingRule rule;
    rule.tol = 1e-4;
    rule.mode = StopMode::Any;
    const Matrix z = Matrix::Zero(3, 1);
    const auto reason = check_stop(rule, z, z, {});
    REQUIRE(reason.has_value());
    REQUIRE(*reason == StopReason::XChange);
}

TEST_CASE("check_stop: constant objective history fires the f test") {
    StoppingRule rule;
    rule.tol = 1e-4;
    rule.mode = StopMode::Any;
    rule.window = 10;
    Matrix far = Matrix::Ones(3, 1) * 100.0;
    const std::vector<double> fs(11, 3.0); // window + 1 values
    const auto reason = check_stop(rule, Matrix::Zero(3, 1), far, fs);
    REQUIRE(reason.has_value());
    REQUIRE(*reason == StopReason::FChange);
}

TEST_CASE("check_stop: the f test is inactive before the window fills") {
    StoppingRule rule;
    rule.tol = 1e-4;
    rule.mode = StopMode::Any;
    rule.window = 10;
    Matrix far = Matrix::Ones(3, 1) * 100.0;
    const std::vector<double> fs(9, 3.0); // fewer than window values
    REQUIRE_FALSE(check_stop(rule, Matrix::Zero(3, 1), far, fs).has_value());
}

TEST_CASE("check_stop: both-mode requires both tests") {
    StoppingRule rule;
    rule.tol = 1e-4;
    rule.mode = StopMode::Both;
    const Matrix z = Matrix::Zero(2, 1);
    REQUIRE_FALSE(check_stop(rule, z, z, {}).has_value()); // x fires, f inactive
    const std::vector<double> fs(11, 3.0);
    const auto reason = check_stop(rule, z, z, fs);
    REQUIRE(reason.has_value());
    REQUIRE(*reason == StopReason::Both);
}

TEST_CASE("runs are bit-deterministic in the seed") {
    const LsProblem p = generate_regression(100, 8, 0.5, 3);
    const SketchSpec spec = SketchSpec(SparseRademacherSpec{100, 10, 8});
    const Matrix xhat = qr_solve(p.a, p.rhs);
    const auto r1 = run(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-5, 0.0}, run_to_limit(50), {{"xhat", xhat}}, 9);
    const auto r2 = run(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-5, 0.0}, run_to_limit(50), {{"xhat", xhat}}, 9);
    REQUIRE(reports_equal(r1, r2));

    const auto r3 = run(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-5, 0.0}, run_to_limit(50), {{"xhat", xhat}}, 10);
    REQUIRE_FALSE(reports_equal(r1, r3));
}

TEST_CASE("trace length equals the iteration count and row counters are monotone") {
    const LsProblem p = generate_regression(60, 5, 0.2, 4);
    const auto rep = run(p, block_kaczmarz(60, 10), HarmonicStep{1.0}, Gradient{}, run_to_limit(40), {}, 2);
    REQUIRE(rep.iterations == 40);
    REQUIRE(rep.trace.size() == 40);
    for (std::size_t i = 1; i < rep.trace.size(); ++i)
        REQUIRE(rep.trace[i].rows_touched_cum >= rep.trace[i - 1].rows_touched_cum);
}

TEST_CASE("run with one rhs equals run_multi_rhs bit for bit") {
    const LsProblem p = generate_regression(50, 4, 0.3, 6);
    const SketchSpec spec = SketchSpec(KaczmarzUniformColumnsSpec{50, 5});
    const auto a = run(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-4, 0.0}, run_to_limit(30), {}, 11);
    const auto b = run_multi_rhs(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-4, 0.0}, run_to_limit(30), {}, 11);
    REQUIRE(reports_equal(a, b));
}

TEST_CASE("multi-rhs equals per-column runs fed the same sketch stream") {
    const Index m = 80, n = 6, r = 3;
    LsProblem multi = generate_regression(m, n, 0.0, 13);
    Rng rng(99);
    Matrix rhs(m, r);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < r; ++j) rhs(i, j) = rng.next_normal();
    multi.rhs = rhs;
    multi.x_true.reset();

    const SketchSpec spec = block_kaczmarz(m, 8);
    for (const DirectionStrategy& strat :
         {DirectionStrategy(QuasiNewton{1e-5, 0.0}), DirectionStrategy(Newton{}), DirectionStrategy(Gradient{})}) {
        const auto joint = run_multi_rhs(multi, spec, HarmonicStep{1.0}, strat, run_to_limit(40), {}, 21);
        for (Index j = 0; j < r; ++j) {
            LsProblem single = multi;
            single.rhs = multi.rhs.col(j);
            const auto solo = run(single, spec, HarmonicStep{1.0}, strat, run_to_limit(40), {}, 21);
            REQUIRE((joint.final_x.col(j) - solo.final_x).cwiseAbs().maxCoeff() <
                    1e-12 * (1.0 + solo.final_x.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("newton with unit constant step solves a consistent system") {
    const LsProblem p = generate_regression(200, 10, 0.0, 5);
    const auto rep = run(p, block_kaczmarz(200, 20), ConstantStep{1.0}, Newton{}, run_to_limit(1500), {}, 3);
    REQUIRE((p.a * rep.final_x - p.rhs).norm() < 1e-8);
}

TEST_CASE("small constant-step gradient decreases the objective") {
    const LsProblem p = generate_regression(100, 6, 0.5, 8);
    const SketchSpec spec = block_kaczmarz(100, 10);
    const double c = 1.0 / (beta_of(spec) * lambda_max(Matrix(p.a.transpose() * p.a)));
    RunControls controls;
    controls.trace_every = 10;
    const auto rep = run(p, spec, ConstantStep{c}, Gradient{}, run_to_limit(10), {}, 12, controls);
    const double f0 = 0.5 * p.rhs.squaredNorm(); // x0 = 0
    REQUIRE(rep.trace.back().full_f.has_value());
    REQUIRE(*rep.trace.back().full_f < f0);
}

TEST_CASE("sqn error to xhat shrinks with iteration count (median of 5 seeds)") {
    const LsProblem p = generate_regression(400, 20, 1.0, 17);
    const Matrix xhat = qr_solve(p.a, p.rhs);
    const SketchSpec spec = block_kaczmarz(400, 40);
    std::vector<double> e20, e200;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto rep =
            run(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-5, 0.0}, run_to_limit(200), {{"xhat", xhat}}, seed);
        e20.push_back(rep.trace[19].err_to_ref[0]);
        e200.push_back(rep.trace[199].err_to_ref[0]);
    }
    std::sort(e20.begin(), e20.end());
    std::sort(e200.begin(), e200.end());
    REQUIRE(e200[2] < e20[2]);
}

TEST_CASE("strict adapted mode delays the chain by one sketch") {
    const LsProblem p = generate_regression(60, 5, 0.5, 19);
    const SketchSpec spec = block_kaczmarz(60, 6);
    RunControls strict;
    strict.strict_adapted = true;
    const auto lazy = run(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-3, 0.0}, run_to_limit(5), {}, 23, strict);
    const auto eager = run(p, spec, HarmonicStep{1.0}, QuasiNewton{1e-3, 0.0}, run_to_limit(5), {}, 23);
    // first strict step uses B_0 = min(1/lambda1, cap) I: a scaled gradient step
    REQUIRE_FALSE(reports_equal(lazy, eager));
}

TEST_CASE("trace csv has the documented header and blank full_f fields") {
    const LsProblem p = generate_regression(30, 3, 0.1, 25);
    const Matrix xhat = qr_solve(p.a, p.rhs);
    RunControls controls;
    controls.trace_every = 5;
    const auto rep = run(p, SketchSpec(KaczmarzUniformColumnsSpec{30, 3}), HarmonicStep{1.0}, QuasiNewton{1e-5, 0.0},
                         run_to_limit(7), {{"xhat", xhat}}, 31, controls);
    std::ostringstream os;
    write_trace_csv(rep, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    REQUIRE(line == "k,alpha,sample_f,full_f,err_xhat,rows_touched_cum,qn_rejected");
    std::getline(is, line); // k = 1: no full_f
    REQUIRE(line.find(",,") != std::string::npos);
    long rows = 0;
    while (std::getline(is, line)) ++rows;
    REQUIRE(rows + 1 == 7);
}

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "randls/config.hpp"

using namespace randls;

namespace {

RunConfig parse_text(const std::string& text) {
    std::istringstream is(text);
    return parse_config_stream(is, "test.cfg");
}

} // namespace

TEST_CASE("a minimal generate config fills defaults") {
    const RunConfig cfg = parse_text("problem.mode = generate\n"
                                     "problem.m = 100\n"
                                     "problem.n = 10\n"
                                     "problem.sigma = 1\n"
                                     "problem.seed = 7\n");
    REQUIRE(cfg.m == 100);
    REQUIRE(cfg.n == 10);
    REQUIRE(cfg.sigma == 1.0);
    REQUIRE(cfg.seed == 7);
    REQUIRE(cfg.family == RunConfig::SketchFamily::Kaczmarz);
    REQUIRE(cfg.ell == 1);
    REQUIRE(cfg.strategy == RunConfig::StrategyKind::QuasiNewton);
    REQUIRE(cfg.lambda1 == 1e-5);
    REQUIRE(std::isinf(cfg.cap));
    REQUIRE(cfg.schedule == RunConfig::ScheduleKind::Harmonic);
    REQUIRE(cfg.c == 1.0);
    REQUIRE(cfg.stop.max_iters == 1000);
    REQUIRE(cfg.stop.tol == 1e-4);
    REQUIRE(cfg.stop.window == 10);
    REQUIRE(cfg.stop.mode == StopMode::Both);
    REQUIRE(cfg.x0 == StartPoint::Zero);
    REQUIRE(cfg.trace_every == 10);
    REQUIRE(cfg.out == "trace.csv");
    REQUIRE(cfg.ref_xhat);
    REQUIRE(cfg.xtilde_mode == RunConfig::XtildeMode::None);
}

TEST_CASE("experiment-1 style quasinewton keys parse") {
    const RunConfig cfg = parse_text("problem.m = 2000\n"
                                     "problem.n = 50\n"
                                     "problem.sigma = 1\n"
                                     "sketch.family = block_kaczmarz\n"
                                     "sketch.block_size = 100\n"
                                     "strategy.kind = quasinewton\n"
                                     "strategy.lambda1 = 1e-5\n"
                                     "run.x0 = random\n");
    REQUIRE(cfg.family == RunConfig::SketchFamily::BlockKaczmarz);
    REQUIRE(cfg.block_size == 100);
    REQUIRE(cfg.lambda1 == 1e-5);
    REQUIRE(cfg.x0 == StartPoint::RandomNormal);
}

TEST_CASE("comments and blank lines are ignored") {
    const RunConfig cfg = parse_text("# experiment\n\nproblem.m = 5 # inline note\n");
    REQUIRE(cfg.m == 5);
}

TEST_CASE("a typo key is rejected with its line number") {
    try {
        parse_text("problem.m = 10\nstrategy.lamda1 = 1e-5\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE(e.line() == 2);
        REQUIRE(std::string(e.what()).find("lamda1") != std::string::npos);
    }
}

TEST_CASE("type mismatches name the key and line") {
    try {
        parse_text("problem.m = ten\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE(e.line() == 1);
        REQUIRE(std::string(e.what()).find("problem.m") != std::string::npos);
    }
}

TEST_CASE("bad enum values are rejected") {
    REQUIRE_THROWS_AS(parse_text("problem.m = 10\nsketch.family = fourier\n"), ParseError);
    REQUIRE_THROWS_AS(parse_text("problem.m = 10\nstop.mode = sometimes\n"), ParseError);
}

TEST_CASE("missing required keys are reported") {
    REQUIRE_THROWS_AS(parse_text("problem.sigma = 1\n"), ParseError);             // no problem.m
    REQUIRE_THROWS_AS(parse_text("problem.mode = files\n"), ParseError);          // no a_path
}

TEST_CASE("duplicate keys are rejected") {
    REQUIRE_THROWS_AS(parse_text("problem.m = 10\nproblem.m = 20\n"), ParseError);
}

TEST_CASE("prepare_run materializes problem, sketch, and references") {
    const RunConfig cfg = parse_text("problem.m = 60\n"
                                     "problem.n = 4\n"
                                     "problem.sigma = 0.5\n"
                                     "problem.seed = 5\n"
                                     "sketch.family = block_kaczmarz\n"
                                     "sketch.block_size = 6\n"
                                     "refs.xtilde_mode = kaczmarz\n");
    const PreparedRun r = prepare_run(cfg);
    REQUIRE(r.problem.m() == 60);
    REQUIRE(r.problem.n() == 4);
    REQUIRE(std::holds_alternative<GeneralizedKaczmarzSpec>(r.spec));
    REQUIRE(r.refs.size() == 3); // xhat, xtilde, xtrue (generate mode)
    REQUIRE(r.refs[0].first == "xhat");
    REQUIRE(r.refs[1].first == "xtilde");
    REQUIRE(r.refs[2].first == "xtrue");
    // the xhat reference satisfies the normal equations
    const Matrix resid = r.problem.a.transpose() * (r.problem.a * r.refs[0].second - r.problem.rhs);
    REQUIRE(max_abs(resid) < 1e-8);
}

TEST_CASE("files mode round trips a problem through matrix files") {
    const LsProblem p = generate_regression(20, 3, 0.1, 11);
    write_matrix(p.a, "randls_test_a.bin", MatrixFormat::Binary);
    write_matrix(p.rhs, "randls_test_b.csv", MatrixFormat::Csv);
    const RunConfig cfg = parse_text("problem.mode = files\n"
                                     "problem.a_path = randls_test_a.bin\n"
                                     "problem.b_path = randls_test_b.csv\n"
                                     "sketch.family = kaczmarz\n"
                                     "sketch.ell = 2\n");
    const PreparedRun r = prepare_run(cfg);
    REQUIRE(r.problem.a == p.a);                 // binary: bit-exact
    REQUIRE(max_abs(Matrix(r.problem.rhs - p.rhs)) == 0.0); // csv: value-exact
    std::remove("randls_test_a.bin");
    std::remove("randls_test_b.csv");
}

#pragma once

#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "randls/analysis.hpp"
#include "randls/errors.hpp"
#include "randls/matrix_io.hpp"
#include "randls/problem.hpp"
#include "randls/sketch.hpp"
#include "randls/solver.hpp"

namespace randls {

// ---------------------------------------------------------------------------
// Run configuration: `key = value` lines, '#' comments, unknown keys
// rejected. Key reference (defaults in parentheses):
//
//   problem.mode        generate | files           (generate)
//   problem.m           rows, generate mode        (required)
//   problem.n           columns, generate mode     (1)
//   problem.sigma       noise stddev               (0)
//   problem.seed        generation seed            (1)
//   problem.a_path      A matrix file, files mode  (required; .csv or binary)
//   problem.b_path      rhs file, files mode       (required)
//   sketch.family       sparse_random | block_kaczmarz | kaczmarz |
//                       sparse_rademacher          (kaczmarz)
//   sketch.ell          sketch columns             (1)
//   sketch.psi          sparse-random density      (1.0)
//   sketch.beta         sparse-random beta         (0 = ell)
//   sketch.p            rademacher nonzeros/column (0 = ell)
//   sketch.block_size   block width, block_kaczmarz (0 = ell)
//   sketch.q_path       orthogonal Q file          (identity)
//   strategy.kind       gradient | newton | quasinewton  (quasinewton)
//   strategy.lambda1 / lambda2 / cap / svd_tol     (1e-5 / 0 / inf / 0)
//   strategy.strict_adapted                        (false)
//   schedule.kind       harmonic | constant        (harmonic)
//   schedule.c          step constant              (1.0)
//   stop.max_iters / stop.tol / stop.window        (1000 / 1e-4 / 10)
//   stop.mode           any | both                 (both)
//   run.x0              zero | random              (zero)
//   run.trace_every     full-objective cadence     (10)
//   run.out             trace CSV path             (trace.csv)
//   refs.xhat           track error to the QR solution   (true)
//   refs.xtilde_mode    none | kaczmarz | monte_carlo    (none)
// ---------------------------------------------------------------------------

struct RunConfig {
    enum class ProblemMode { Generate, Files };
    enum class SketchFamily { SparseRandom, BlockKaczmarz, Kaczmarz, SparseRademacher };
    enum class StrategyKind { Gradient, Newton, QuasiNewton };
    enum class ScheduleKind { Harmonic, Constant };
    enum class XtildeMode { None, Kaczmarz, MonteCarlo };

    ProblemMode problem_mode = ProblemMode::Generate;
    Index m = 0;
    Index n = 1;
    double sigma = 0.0;
    std::uint64_t seed = 1;
    std::string a_path, b_path;

    SketchFamily family = SketchFamily::Kaczmarz;
    Index ell = 1;
    double psi = 1.0;
    double beta = 0.0;
    Index p = 0;
    Index block_size = 0;
    std::string q_path;

    StrategyKind strategy = StrategyKind::QuasiNewton;
    double lambda1 = 1e-5;
    double lambda2 = 0.0;
    double cap = std::numeric_limits<double>::infinity();
    double svd_tol = 0.0;
    bool strict_adapted = false;

    ScheduleKind schedule = ScheduleKind::Harmonic;
    double c = 1.0;

    StoppingRule stop;

    StartPoint x0 = StartPoint::Zero;
    long trace_every = 10;
    std::string out = "trace.csv";

    bool ref_xhat = true;
    XtildeMode xtilde_mode = XtildeMode::None;
};

namespace detail {

class ConfigParser {
public:
    ConfigParser(std::istream& is, std::string path) : path_(std::move(path)) {
        std::string line;
        long lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const std::size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ParseError(path_ + ":" + std::to_string(lineno) + ": expected 'key = value'", lineno);
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ParseError(path_ + ":" + std::to_string(lineno) + ": empty key", lineno);
            if (entries_.count(key))
                throw ParseError(path_ + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'", lineno);
            entries_[key] = {value, lineno};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.consumed = true;
        return it->second.value;
    }

    std::string require_string(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ParseError(path_ + ": missing required key '" + key + "'");
        it->second.consumed = true;
        return it->second.value;
    }

    double get_real(const std::string& key, double fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.consumed = true;
        return to_real(key, it->second);
    }

    long get_int(const std::string& key, long fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.consumed = true;
        return to_int(key, it->second);
    }

    long require_int(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ParseError(path_ + ": missing required key '" + key + "'");
        it->second.consumed = true;
        return to_int(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.consumed = true;
        const std::string& v = it->second.value;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ParseError(path_ + ":" + std::to_string(it->second.line) + ": key '" + key +
                             "' expects a boolean, got '" + v + "'",
                         it->second.line);
    }

    /// One value among the listed choices; throws naming the key and line.
    std::string get_choice(const std::string& key, const std::vector<std::string>& choices,
                           const std::string& fallback) {
        auto it = entries_.find(key);
        const std::string v = it == entries_.end() ? fallback : it->second.value;
        if (it != entries_.end()) it->second.consumed = true;
        for (const auto& choice : choices)
            if (v == choice) return v;
        std::string msg = (it == entries_.end() ? path_ : path_ + ":" + std::to_string(it->second.line)) + ": key '" +
                          key + "' must be one of {";
        for (std::size_t i = 0; i < choices.size(); ++i) msg += (i ? ", " : "") + choices[i];
        msg += "}, got '" + v + "'";
        throw ParseError(msg, it == entries_.end() ? 0 : it->second.line);
    }

    /// Every key must have been consumed by now.
    void reject_unknown() const {
        for (const auto& [key, entry] : entries_)
            if (!entry.consumed)
                throw ParseError(path_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'",
                                 entry.line);
    }

private:
    struct Entry {
        std::string value;
        long line = 0;
        bool consumed = false;
    };

    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    }

    double to_real(const std::string& key, Entry& e) const {
        try {
            std::size_t used = 0;
            const double v = std::stod(e.value, &used);
            if (used != e.value.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ParseError(path_ + ":" + std::to_string(e.line) + ": key '" + key + "' expects a number, got '" +
                                 e.value + "'",
                             e.line);
        }
    }

    long to_int(const std::string& key, Entry& e) const {
        try {
            std::size_t used = 0;
            const long v = std::stol(e.value, &used);
            if (used != e.value.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ParseError(path_ + ":" + std::to_string(e.line) + ": key '" + key + "' expects an integer, got '" +
                                 e.value + "'",
                             e.line);
        }
    }

    std::string path_;
    std::map<std::string, Entry> entries_;
};

inline MatrixFormat format_from_path(const std::string& path) {
    return path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? MatrixFormat::Csv : MatrixFormat::Binary;
}

} // namespace detail

inline RunConfig parse_config_stream(std::istream& is, const std::string& path = "<config>") {
    detail::ConfigParser p(is, path);
    RunConfig cfg;

    const std::string mode = p.get_choice("problem.mode", {"generate", "files"}, "generate");
    if (mode == "generate") {
        cfg.problem_mode = RunConfig::ProblemMode::Generate;
        cfg.m = p.require_int("problem.m");
        cfg.n = p.get_int("problem.n", 1);
        cfg.sigma = p.get_real("problem.sigma", 0.0);
        cfg.seed = std::uint64_t(p.get_int("problem.seed", 1));
    } else {
        cfg.problem_mode = RunConfig::ProblemMode::Files;
        cfg.a_path = p.require_string("problem.a_path");
        cfg.b_path = p.require_string("problem.b_path");
        cfg.seed = std::uint64_t(p.get_int("problem.seed", 1));
    }

    const std::string family =
        p.get_choice("sketch.family", {"sparse_random", "block_kaczmarz", "kaczmarz", "sparse_rademacher"}, "kaczmarz");
    if (family == "sparse_random")
        cfg.family = RunConfig::SketchFamily::SparseRandom;
    else if (family == "block_kaczmarz")
        cfg.family = RunConfig::SketchFamily::BlockKaczmarz;
    else if (family == "sparse_rademacher")
        cfg.family = RunConfig::SketchFamily::SparseRademacher;
    else
        cfg.family = RunConfig::SketchFamily::Kaczmarz;
    cfg.ell = p.get_int("sketch.ell", 1);
    cfg.psi = p.get_real("sketch.psi", 1.0);
    cfg.beta = p.get_real("sketch.beta", 0.0);
    cfg.p = p.get_int("sketch.p", 0);
    cfg.block_size = p.get_int("sketch.block_size", 0);
    cfg.q_path = p.get_string("sketch.q_path", "");

    const std::string strat = p.get_choice("strategy.kind", {"gradient", "newton", "quasinewton"}, "quasinewton");
    cfg.strategy = strat == "gradient"  ? RunConfig::StrategyKind::Gradient
                   : strat == "newton" ? RunConfig::StrategyKind::Newton
                                       : RunConfig::StrategyKind::QuasiNewton;
    cfg.lambda1 = p.get_real("strategy.lambda1", 1e-5);
    cfg.lambda2 = p.get_real("strategy.lambda2", 0.0);
    cfg.cap = p.get_real("strategy.cap", std::numeric_limits<double>::infinity());
    cfg.svd_tol = p.get_real("strategy.svd_tol", 0.0);
    cfg.strict_adapted = p.get_bool("strategy.strict_adapted", false);

    cfg.schedule = p.get_choice("schedule.kind", {"harmonic", "constant"}, "harmonic") == "constant"
                       ? RunConfig::ScheduleKind::Constant
                       : RunConfig::ScheduleKind::Harmonic;
    cfg.c = p.get_real("schedule.c", 1.0);

    cfg.stop.max_iters = p.get_int("stop.max_iters", 1000);
    cfg.stop.tol = p.get_real("stop.tol", 1e-4);
    cfg.stop.window = p.get_int("stop.window", 10);
    cfg.stop.mode = p.get_choice("stop.mode", {"any", "both"}, "both") == "any" ? StopMode::Any : StopMode::Both;

    cfg.x0 = p.get_choice("run.x0", {"zero", "random"}, "zero") == "random" ? StartPoint::RandomNormal
                                                                            : StartPoint::Zero;
    cfg.trace_every = p.get_int("run.trace_every", 10);
    cfg.out = p.get_string("run.out", "trace.csv");

    cfg.ref_xhat = p.get_bool("refs.xhat", true);
    const std::string xt = p.get_choice("refs.xtilde_mode", {"none", "kaczmarz", "monte_carlo"}, "none");
    cfg.xtilde_mode = xt == "kaczmarz"      ? RunConfig::XtildeMode::Kaczmarz
                      : xt == "monte_carlo" ? RunConfig::XtildeMode::MonteCarlo
                                            : RunConfig::XtildeMode::None;

    p.reject_unknown();

    if (cfg.stop.max_iters < 1) throw ParseError(path + ": stop.max_iters must be >= 1");
    if (!(cfg.stop.tol > 0)) throw ParseError(path + ": stop.tol must be positive");
    if (cfg.trace_every < 1) throw ParseError(path + ": run.trace_every must be >= 1");
    return cfg;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open config file " + path);
    return parse_config_stream(is, path);
}

/// Everything a solve run needs, materialized from a config: the problem,
/// the sketch distribution, and the reference solutions to track.
struct PreparedRun {
    LsProblem problem;
    SketchSpec spec = KaczmarzUniformColumnsSpec{1, 1};
    StepSchedule schedule = HarmonicStep{1.0};
    DirectionStrategy strategy = QuasiNewton{};
    StoppingRule stop;
    RunControls controls;
    NamedRefs refs;
    std::uint64_t seed = 1;
    std::string out;
};

// Monte Carlo sample count used when refs.xtilde_mode = monte_carlo.
inline constexpr long kXtildeMonteCarloSamples = 20000;

inline SketchSpec build_sketch_spec(const RunConfig& cfg, Index m) {
    switch (cfg.family) {
        case RunConfig::SketchFamily::SparseRandom:
            return SparseRandomSpec{m, cfg.ell, cfg.psi, cfg.beta};
        case RunConfig::SketchFamily::BlockKaczmarz: {
            const Index bs = cfg.block_size > 0 ? cfg.block_size : cfg.ell;
            if (!cfg.q_path.empty()) {
                Matrix q = read_matrix(cfg.q_path, detail::format_from_path(cfg.q_path));
                if (q.rows() != m) throw ArgumentError("sketch.q_path: Q dimension != problem rows");
                std::vector<Index> sizes(std::size_t(m / bs), bs);
                if (m % bs != 0) sizes.push_back(m % bs);
                return kaczmarz_partition(std::move(q), sizes);
            }
            return block_kaczmarz(m, bs);
        }
        case RunConfig::SketchFamily::Kaczmarz:
            return KaczmarzUniformColumnsSpec{m, cfg.ell};
        case RunConfig::SketchFamily::SparseRademacher:
            return SparseRademacherSpec{m, cfg.ell, cfg.p > 0 ? cfg.p : cfg.ell};
    }
    throw ArgumentError("unreachable sketch family");
}

inline PreparedRun prepare_run(const RunConfig& cfg) {
    PreparedRun r;
    if (cfg.problem_mode == RunConfig::ProblemMode::Generate) {
        r.problem = generate_regression(cfg.m, cfg.n, cfg.sigma, cfg.seed);
    } else {
        r.problem.a = read_matrix(cfg.a_path, detail::format_from_path(cfg.a_path));
        r.problem.rhs = read_matrix(cfg.b_path, detail::format_from_path(cfg.b_path));
        r.problem.validate();
    }
    r.spec = build_sketch_spec(cfg, r.problem.m());
    validate_spec(r.spec);

    r.schedule = cfg.schedule == RunConfig::ScheduleKind::Harmonic ? StepSchedule(HarmonicStep{cfg.c})
                                                                   : StepSchedule(ConstantStep{cfg.c});
    switch (cfg.strategy) {
        case RunConfig::StrategyKind::Gradient: r.strategy = Gradient{}; break;
        case RunConfig::StrategyKind::Newton: r.strategy = Newton{cfg.svd_tol}; break;
        case RunConfig::StrategyKind::QuasiNewton: {
            QuasiNewton qn{cfg.lambda1, cfg.lambda2, cfg.cap};
            qn.validate();
            r.strategy = qn;
            break;
        }
    }
    r.stop = cfg.stop;
    r.controls.x0_mode = cfg.x0;
    r.controls.trace_every = cfg.trace_every;
    r.controls.strict_adapted = cfg.strict_adapted;
    r.seed = cfg.seed;
    r.out = cfg.out;

    if (cfg.ref_xhat) r.refs.emplace_back("xhat", qr_solve(r.problem.a, r.problem.rhs));
    if (cfg.xtilde_mode == RunConfig::XtildeMode::Kaczmarz) {
        const Matrix p = row_kaczmarz_P(r.problem.a);
        r.refs.emplace_back("xtilde", x_tilde_from_P(r.problem.a, r.problem.rhs, p));
    } else if (cfg.xtilde_mode == RunConfig::XtildeMode::MonteCarlo) {
        const PEstimate est =
            estimate_P(r.spec, r.problem.a, kXtildeMonteCarloSamples, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        r.refs.emplace_back("xtilde", x_tilde_from_P(r.problem.a, r.problem.rhs, est.p_hat));
    }
    if (r.problem.x_true) r.refs.emplace_back("xtrue", *r.problem.x_true);
    return r;
}

} // namespace randls

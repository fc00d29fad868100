// Command-line front end: solve (one stochastic run with trace CSV),
// sketch-verify (empirical check of E(W W^T) = beta I), omega (closed-form
// error sweep on the worked example), compare-sketches (the four sketch
// families on one regression problem, cost measured in row accesses), and
// elm train/eval (the extreme-learning-machine pipeline).

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "randls/randls.hpp"

namespace {

using namespace randls;

std::vector<double> parse_grid(const std::string& text) {
    const std::size_t c1 = text.find(':');
    if (c1 == std::string::npos) return {std::stod(text)};
    const std::size_t c2 = text.find(':', c1 + 1);
    if (c2 == std::string::npos) throw ArgumentError("grid '" + text + "' must be start:end:count or a single value");
    const double start = std::stod(text.substr(0, c1));
    const double end = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
    const long count = std::stol(text.substr(c2 + 1));
    if (count < 1) throw ArgumentError("grid '" + text + "' needs count >= 1");
    std::vector<double> grid;
    grid.reserve(std::size_t(count));
    for (long i = 0; i < count; ++i)
        grid.push_back(count == 1 ? start : start + double(i) * (end - start) / double(count - 1));
    return grid;
}

std::string family_name(const SketchSpec& spec) {
    if (std::holds_alternative<SparseRandomSpec>(spec)) return "sparse_random";
    if (std::holds_alternative<GeneralizedKaczmarzSpec>(spec)) return "block_kaczmarz";
    if (std::holds_alternative<KaczmarzUniformColumnsSpec>(spec)) return "kaczmarz";
    return "sparse_rademacher";
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ParseError("cannot open " + path + " for writing");
    return os;
}

int cmd_solve(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_override) {
    RunConfig cfg = parse_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_override.empty()) cfg.out = out_override;
    PreparedRun r = prepare_run(cfg);
    const SolveReport report =
        run_multi_rhs(r.problem, r.spec, r.schedule, r.strategy, r.stop, r.refs, r.seed, r.controls);
    auto os = open_out(r.out);
    write_trace_csv(report, os);
    std::cout << "iterations = " << report.iterations << "\nstop_reason = " << to_string(report.stop_reason) << '\n';
    if (!report.trace.empty())
        for (std::size_t i = 0; i < report.ref_names.size(); ++i)
            std::cout << "final err_" << report.ref_names[i] << " = " << report.trace.back().err_to_ref[i] << '\n';
    std::cout << "trace written to " << r.out << '\n';
    return 0;
}

int cmd_sketch_verify(const std::string& spec_path, long n_samples, std::optional<std::uint64_t> seed, double max_dev,
                      const std::string& out_path) {
    RunConfig cfg = parse_config(spec_path);
    if (seed) cfg.seed = *seed;
    const Index m = cfg.problem_mode == RunConfig::ProblemMode::Generate
                        ? cfg.m
                        : read_matrix(cfg.a_path, MatrixFormat::Binary).rows();
    const SketchSpec spec = build_sketch_spec(cfg, m);
    Rng rng(cfg.seed);
    const double dev = empirical_moment_deviation(spec, n_samples, rng);
    std::cout << "family = " << family_name(spec) << "\nn_samples = " << n_samples << "\ndeviation = " << dev << '\n';
    if (!out_path.empty()) {
        auto os = open_out(out_path);
        os << "family,n_samples,deviation\n"
           << family_name(spec) << ',' << n_samples << ',' << randls::detail::format_double(dev) << '\n';
    }
    if (dev > max_dev) {
        std::cerr << "deviation " << dev << " exceeds bound " << max_dev << '\n';
        return 1;
    }
    return 0;
}

int cmd_omega(const std::string& mu_text, const std::string& nu_text, const std::string& out_path) {
    const auto rows = omega_sweep(parse_grid(mu_text), parse_grid(nu_text));
    auto os = open_out(out_path);
    write_omega_csv(rows, os);
    std::cout << rows.size() << " rows written to " << out_path << '\n';
    return 0;
}

int cmd_compare_sketches(Index m, Index n, double sigma, Index ell, double psi, long iters, long trace_every,
                         std::uint64_t seed, const std::string& out_path) {
    const LsProblem problem = generate_regression(m, n, sigma, seed);
    const Matrix xhat = qr_solve(problem.a, problem.rhs);
    const std::vector<SketchSpec> specs = {
        block_kaczmarz(m, ell),
        SketchSpec(KaczmarzUniformColumnsSpec{m, ell}),
        SketchSpec(SparseRademacherSpec{m, ell, ell}),
        SketchSpec(SparseRandomSpec{m, ell, psi, 0.0}),
    };
    StoppingRule rule;
    rule.max_iters = iters;
    rule.tol = std::numeric_limits<double>::min(); // run the full budget
    RunControls controls;
    controls.trace_every = trace_every;
    auto os = open_out(out_path);
    os << "distribution,k,rows_touched_cum,sample_f,full_f,err_xhat\n";
    for (const auto& spec : specs) {
        const SolveReport report = run_multi_rhs(problem, spec, HarmonicStep{1.0}, QuasiNewton{1e-5, 0.0}, rule,
                                                 {{"xhat", xhat}}, seed, controls);
        for (const auto& rec : report.trace)
            if (rec.full_f)
                os << family_name(spec) << ',' << rec.k << ',' << rec.rows_touched_cum << ','
                   << randls::detail::format_double(rec.sample_f) << ',' << randls::detail::format_double(*rec.full_f)
                   << ',' << randls::detail::format_double(rec.err_to_ref[0]) << '\n';
    }
    std::cout << "comparison written to " << out_path << '\n';
    return 0;
}

struct ElmDataArgs {
    std::string images_path, labels_path;
    Index synthetic_m = 0;
    Index synthetic_d = 10;
    Index synthetic_classes = 2;
    std::uint64_t data_seed = 1;

    ImageDataset load() const {
        if (!images_path.empty() != !labels_path.empty())
            throw ArgumentError("elm: --images and --labels must be given together");
        if (!images_path.empty()) return read_idx(images_path, labels_path);
        if (synthetic_m <= 0) throw ArgumentError("elm: give --images/--labels or --synthetic-m");
        return make_blobs(synthetic_m, synthetic_d, synthetic_classes, data_seed);
    }
};

int cmd_elm_train(const ElmDataArgs& data_args, Index hidden, const std::string& method, int augment,
                  std::uint64_t seed, const std::string& model_path, const std::string& report_path) {
    ImageDataset ds = data_args.load();
    if (augment > 0) ds = augment_dataset(ds, augment, seed ^ 0xa5a5a5a5ULL);
    ElmModel model = init_hidden(hidden, ds.dim(), seed);
    const TrainMethod tm = method == "qr" ? TrainMethod::QrBaseline : TrainMethod::Sqn;
    const TrainOutcome outcome = train(model, ds, tm, seed);
    save_model(outcome.model, model_path);
    std::cout << "training accuracy = " << accuracy(outcome.model, ds) << '\n';
    if (outcome.report) {
        std::cout << "solver iterations = " << outcome.report->iterations << " (stop: "
                  << to_string(outcome.report->stop_reason) << ")\n";
        if (!report_path.empty()) {
            auto os = open_out(report_path);
            write_trace_csv(*outcome.report, os);
        }
    }
    std::cout << "model written to " << model_path << '\n';
    return 0;
}

int cmd_elm_eval(const ElmDataArgs& data_args, const std::string& model_path) {
    const ImageDataset ds = data_args.load();
    const ElmModel model = load_model(model_path);
    if (!model.trained()) throw StateError("elm eval: model file has no trained output weights");
    std::cout << "accuracy = " << accuracy(model, ds) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic sketching solvers for large linear least-squares problems"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> global_seed;
    app.add_option("--seed", global_seed, "override the config seed");

    // solve
    auto* solve = app.add_subcommand("solve", "run one stochastic solve from a config file");
    std::string solve_config, solve_out;
    solve->add_option("--config", solve_config, "run configuration file")->required();
    solve->add_option("--out", solve_out, "trace CSV path (overrides run.out)");

    // sketch-verify
    auto* verify = app.add_subcommand("sketch-verify", "check E(W W^T) = beta I empirically");
    std::string verify_spec, verify_out;
    long verify_n = 200000;
    double verify_max_dev = 0.02;
    verify->add_option("--spec", verify_spec, "config file with problem.m and sketch.* keys")->required();
    verify->add_option("--n", verify_n, "number of samples");
    verify->add_option("--max-dev", verify_max_dev, "fail (exit 1) above this deviation");
    verify->add_option("--out", verify_out, "optional one-row CSV");

    // omega
    auto* omega = app.add_subcommand("omega", "sweep the worked example's error omega(mu, nu)");
    std::string omega_mu, omega_nu = "10", omega_out = "omega.csv";
    omega->add_option("--mu", omega_mu, "mu grid, start:end:count or a value")->required();
    omega->add_option("--nu", omega_nu, "nu grid, start:end:count or a value");
    omega->add_option("--out", omega_out, "output CSV");

    // compare-sketches
    auto* cmp = app.add_subcommand("compare-sketches", "one problem, all four sketch families");
    Index cmp_m = 2000, cmp_n = 50, cmp_ell = 100;
    double cmp_sigma = 1.0, cmp_psi = 0.05;
    long cmp_iters = 200, cmp_trace = 10;
    std::string cmp_out = "compare_sketches.csv";
    cmp->add_option("--m", cmp_m, "problem rows");
    cmp->add_option("--n", cmp_n, "problem columns");
    cmp->add_option("--sigma", cmp_sigma, "noise stddev");
    cmp->add_option("--ell", cmp_ell, "sketch columns");
    cmp->add_option("--psi", cmp_psi, "sparse-random density");
    cmp->add_option("--iters", cmp_iters, "iterations per family");
    cmp->add_option("--trace-every", cmp_trace, "checkpoint cadence");
    cmp->add_option("--out", cmp_out, "output CSV");

    // elm
    auto* elm = app.add_subcommand("elm", "extreme learning machine pipeline");
    elm->require_subcommand(1);
    ElmDataArgs data_args;
    auto add_data_opts = [&data_args](CLI::App* cmd) {
        cmd->add_option("--images", data_args.images_path, "IDX image file");
        cmd->add_option("--labels", data_args.labels_path, "IDX label file");
        cmd->add_option("--synthetic-m", data_args.synthetic_m, "synthetic blob count");
        cmd->add_option("--synthetic-d", data_args.synthetic_d, "synthetic dimension");
        cmd->add_option("--synthetic-classes", data_args.synthetic_classes, "synthetic class count");
        cmd->add_option("--data-seed", data_args.data_seed, "synthetic data seed");
    };
    auto* elm_train = elm->add_subcommand("train", "fit output weights");
    Index elm_hidden = 300;
    std::string elm_method = "sqn", elm_model = "model.elm", elm_report;
    int elm_augment = 0;
    add_data_opts(elm_train);
    elm_train->add_option("--hidden", elm_hidden, "hidden nodes");
    elm_train->add_option("--method", elm_method, "sqn or qr")->check(CLI::IsMember({"sqn", "qr"}));
    elm_train->add_option("--augment", elm_augment, "random rotations per image");
    elm_train->add_option("--model", elm_model, "output model file");
    elm_train->add_option("--report", elm_report, "optional solver trace CSV");
    auto* elm_eval = elm->add_subcommand("eval", "classification accuracy of a trained model");
    std::string eval_model = "model.elm";
    add_data_opts(elm_eval);
    elm_eval->add_option("--model", eval_model, "model file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*solve) return cmd_solve(solve_config, global_seed, solve_out);
        if (*verify) return cmd_sketch_verify(verify_spec, verify_n, global_seed, verify_max_dev, verify_out);
        if (*omega) return cmd_omega(omega_mu, omega_nu, omega_out);
        if (*cmp)
            return cmd_compare_sketches(cmp_m, cmp_n, cmp_sigma, cmp_ell, cmp_psi, cmp_iters, cmp_trace,
                                        global_seed.value_or(1), cmp_out);
        if (*elm) {
            if (global_seed) data_args.data_seed = *global_seed;
            if (*elm_train)
                return cmd_elm_train(data_args, elm_hidden, elm_method, elm_augment, global_seed.value_or(1),
                                     elm_model, elm_report);
            return cmd_elm_eval(data_args, eval_model);
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) { // rank failures, untrained models, ...
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

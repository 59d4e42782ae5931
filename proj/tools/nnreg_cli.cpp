// nnreg: run expanding-network and Tikhonov experiments, print defaults, or
// run a quick self-check.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nnreg/bench.hpp"

using namespace nnreg;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct RunArgs {
    std::string example;
    std::string algorithm;
    std::string config_file;
    std::vector<double> deltas;
    std::vector<std::uint64_t> seeds;
    double tau = 0.0;
    std::size_t n_max = 0;
    std::size_t iterations = 0;
    std::string penalty;
    double energy_bound_scale = 0.0;
    bool sweep_past_stop = false;
    std::string out;
};

ExperimentConfig build_config(const RunArgs& a) {
    ExperimentConfig c;
    if (!a.config_file.empty()) {
        try {
            c = config_from_json(nlohmann::json::parse(read_text(a.config_file)));
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError(a.config_file + ": " + e.what());
        }
    } else {
        if (a.example.empty() || a.algorithm.empty()) {
            throw InputError("--example and --algorithm are required unless --config is given");
        }
        c = default_config(parse_example(a.example), parse_algorithm(a.algorithm));
    }
    if (!a.deltas.empty()) c.deltas = a.deltas;
    if (!a.seeds.empty()) c.seeds = a.seeds;
    if (a.tau != 0.0) c.schedule.tau = a.tau;
    if (a.n_max != 0) c.schedule.n_max = a.n_max;
    if (a.iterations != 0) c.schedule.iterations = a.iterations;
    if (!a.penalty.empty()) c.penalty = parse_penalty(a.penalty);
    if (a.energy_bound_scale != 0.0) c.energy_bound_scale = a.energy_bound_scale;
    if (a.sweep_past_stop) c.schedule.sweep_past_stop = true;
    if (!a.out.empty()) {
        c.out_dir = a.out;
    } else if (const char* env = std::getenv("NNREG_OUT_DIR"); env && *env) {
        c.out_dir = env;
    }
    c.validate();
    return c;
}

int cmd_run(const RunArgs& args) {
    const ExperimentConfig config = build_config(args);
    std::printf("%-36s %-12s %8s %8s %14s\n", "cell", "terminated", "stop_n", "rows", "final_rel_err");
    for (const auto& cell : run_experiment(config)) {
        const auto& r = cell.record;
        const std::string stop = r.stopping ? std::to_string(r.stopping->n) : "-";
        const double err = r.rows.empty() ? NAN : r.rows.back().rel_l2_error;
        std::printf("%-36s %-12s %8s %8zu %14.6g\n", cell.csv_path.stem().string().c_str(),
                    to_string(r.terminated_by).c_str(), stop.c_str(), r.rows.size(), err);
    }
    std::printf("wrote %s\n", config.out_dir.c_str());
    return kOk;
}

int cmd_defaults(const std::string& example, const std::string& algorithm) {
    std::cout << to_json(default_config(parse_example(example), parse_algorithm(algorithm))).dump(2) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// verify

struct Check {
    std::string name;
    double value;
    double limit;
};

double rel_diff(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> uniform_vector(std::size_t n, Rng& rng, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

double fredholm_spectral() {
    FredholmOperator op;
    const double pi = std::numbers::pi;
    double worst = 0;
    for (int k = 1; k <= 5; ++k) {
        std::vector<double> f(op.solution_grid().size());
        for (std::size_t j = 0; j < f.size(); ++j) f[j] = std::sin(k * pi * op.solution_grid().nodes(j, 0));
        const auto g = op.apply(f);
        std::vector<double> e(g.size());
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::sin(k * pi * op.data_grid().nodes(i, 0)) / (k * k * pi * pi);
        worst = std::max(worst, relative_l2_error(g, e));
    }
    return worst;
}

double adjoint_gap(const ForwardOperator& op, Rng& rng, double lo, double hi) {
    const auto f = uniform_vector(op.solution_grid().size(), rng, lo, hi);
    const auto h = uniform_vector(f.size(), rng, -1, 1);
    const auto s = uniform_vector(op.data_size(), rng, -1, 1);
    const double step = 1e-5;
    std::vector<double> fp(f), fm(f);
    for (std::size_t i = 0; i < f.size(); ++i) {
        fp[i] += step * h[i];
        fm[i] -= step * h[i];
    }
    const double fd = (dot(op.apply(fp), s) - dot(op.apply(fm), s)) / (2 * step);
    return rel_diff(dot(op.pullback(f, s), h), fd);
}

double objective_gradient_gap(Rng& rng) {
    auto op = std::make_shared<AutoconvolutionOperator>();
    ForwardProblem p;
    p.op = op;
    p.exact_solution.assign(op->solution_grid().size(), 1.0);
    p.data = add_noise(op->apply(p.exact_solution), 0.01, std::uint64_t{7});
    const Objective obj{&p, MisfitKind::rms, Penalty::h1(0.05, 0.1)};
    const auto net = init_network(1, 5, rng);
    const auto g = objective_gradient(net, obj).gradient.values;
    double worst = 0;
    for (std::size_t q = 0; q < g.size(); ++q) {
        std::vector<double> plus(net.parameters().begin(), net.parameters().end()), minus = plus;
        plus[q] += 1e-6;
        minus[q] -= 1e-6;
        const double fd = (objective_value(TwoLayerNet(1, plus), obj).total -
                           objective_value(TwoLayerNet(1, minus), obj).total) / 2e-6;
        worst = std::max(worst, rel_diff(g[q], fd));
    }
    return worst;
}

double projection_defect(Rng& rng) {
    std::vector<double> p(30 * 4);
    for (double& v : p) v = rng.uniform(-5, 5);
    const auto net = project_constraints(TwoLayerNet(2, p), 1.5, rng);
    double worst = 0;
    for (std::size_t j = 0; j < net.width(); ++j) {
        worst = std::max(worst, std::abs(net.inner_l1(j) - 1.0));
        worst = std::max(worst, std::max(0.0, std::abs(net.outer(j)) - 1.5));
    }
    return worst;
}

int cmd_verify() {
    Rng rng(2024);
    const std::vector<Check> checks{
        {"fredholm sine eigenfunctions (rel L2)", fredholm_spectral(), 1e-2},
        {"fredholm adjoint (rel)", adjoint_gap(FredholmOperator(), rng, -1, 1), 1e-5},
        {"autoconvolution linearization (rel)", adjoint_gap(AutoconvolutionOperator(), rng, -1, 1), 1e-5},
        {"eit discrete adjoint (rel)", adjoint_gap(EitOperator(), rng, 0.5, 2.0), 1e-3},
        {"objective gradient, autoconv + H1 (rel)", objective_gradient_gap(rng), 1e-4},
        {"projection onto M_r (abs)", projection_defect(rng), 1e-12},
    };
    bool ok = true;
    for (const auto& c : checks) {
        const bool pass = c.value <= c.limit;
        ok &= pass;
        std::printf("%-4s %-42s %.3e <= %.0e\n", pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.limit);
    }
    return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nnreg: regularization by expanding two-layer ReLU networks"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run every (delta, seed) cell and write CSV + JSON records");
    run_cmd->add_option("--example", run.example, "fredholm | autoconv | eit");
    run_cmd->add_option("--algorithm", run.algorithm, "enn1 | enn2 | tikhonov");
    run_cmd->add_option("--config", run.config_file, "JSON config (as written to config.json)");
    run_cmd->add_option("--delta", run.deltas, "noise levels (repeatable)");
    run_cmd->add_option("--seed", run.seeds, "seeds (repeatable)");
    run_cmd->add_option("--tau", run.tau, "discrepancy factor (> 1)");
    run_cmd->add_option("--n-max", run.n_max, "largest width");
    run_cmd->add_option("--iterations", run.iterations, "Adam steps per width");
    run_cmd->add_option("--penalty", run.penalty, "enn2 penalty: h1 | path_norm");
    run_cmd->add_option("--energy-bound-scale", run.energy_bound_scale, "enn1 bound B as a multiple of c_rho(f)");
    run_cmd->add_flag("--sweep-past-stop", run.sweep_past_stop, "keep expanding after the discrepancy test passes");
    run_cmd->add_option("--out", run.out, "output directory (default: $NNREG_OUT_DIR, else ./runs)");

    std::string d_example = "fredholm", d_algorithm = "enn1";
    auto* defaults_cmd = app.add_subcommand("defaults", "Print the default configuration as JSON");
    defaults_cmd->add_option("--example", d_example, "fredholm | autoconv | eit");
    defaults_cmd->add_option("--algorithm", d_algorithm, "enn1 | enn2 | tikhonov");

    auto* verify_cmd = app.add_subcommand("verify", "Quick oracle checks of operators, gradients and projection");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*defaults_cmd) return cmd_defaults(d_example, d_algorithm);
        if (*verify_cmd) return cmd_verify();
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}

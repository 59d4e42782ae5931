#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nnreg/discretization.hpp"
#include "nnreg/errors.hpp"
#include "nnreg/optimize.hpp"
#include "nnreg/rng.hpp"
#include "nnreg/shallow_net.hpp"

namespace nnreg {

enum class Algorithm { enn1, enn2, tikhonov };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::enn1: return "enn1";
        case Algorithm::enn2: return "enn2";
        case Algorithm::tikhonov: return "tikhonov";
    }
    return "unknown";
}

/// Width sequence and parameter rules shared by the three drivers.
struct Schedule {
    std::size_t first_width = 50;
    std::size_t width_step = 20;
    std::size_t n_max = 1000;
    std::size_t iterations = 600;
    double learning_rate = 1e-3;
    double tau = 1.0001;
    double c0 = 0.1;     // beta_n = c0 * n^(-theta/2)
    double theta = 1.0;
    double c_r1 = 0.1;   // R1(f) = c_r1 * ||f||_H1
    double eta = 0.8;    // alpha = (delta + 1/n)^eta
    /// Keep expanding after the discrepancy test first passes (the stopping
    /// index is still recorded). Used to trace full error-vs-width curves.
    bool sweep_past_stop = false;

    /// b(k) = first_width + width_step*(k-1), with the last entry capped at n_max.
    std::vector<std::size_t> widths() const {
        if (first_width == 0 || width_step == 0 || n_max < first_width) {
            throw InputError("schedule: need 0 < first_width <= n_max and a positive step");
        }
        std::vector<std::size_t> w;
        for (std::size_t n = first_width; n < n_max; n += width_step) w.push_back(n);
        w.push_back(n_max);
        return w;
    }

    double beta(std::size_t n) const { return c0 * std::pow(static_cast<double>(n), -theta / 2.0); }
    double alpha(double delta, std::size_t n) const {
        return std::pow(delta + 1.0 / static_cast<double>(n), eta);
    }

    void validate() const {
        if (!(tau > 1.0)) throw InputError("schedule: tau must exceed 1");
        if (!(c0 > 0.0 && theta > 0.0 && c_r1 > 0.0 && eta > 0.0)) {
            throw InputError("schedule: coefficients must be positive");
        }
        if (iterations == 0) throw InputError("schedule: iterations must be positive");
        (void)widths();
    }
};

/// Radius of the bounded class for the energy-bound algorithm:
/// r(n) = B n/(n+1), increasing with limit B.
inline double bounded_radius(double energy_bound, std::size_t n) {
    const double nn = static_cast<double>(n);
    return energy_bound * nn / (nn + 1.0);
}

/// Radius for the penalized algorithm: r(n) = sqrt(n).
inline double growing_radius(std::size_t n) { return std::sqrt(static_cast<double>(n)); }

struct RunRow {
    std::size_t n = 0;
    double misfit = 0.0;  // RMS misfit J of the best iterate, for every algorithm
    double rel_l2_error = 0.0;
    double path_norm = 0.0;
    double wall_ms = 0.0;
    // Not serialized to CSV.
    double penalty = 0.0;
    double radius = 0.0;
    double coefficient = 0.0;  // beta_n or alpha at this width
    bool diverged = false;
};

enum class Termination { discrepancy, budget };

inline std::string to_string(Termination t) { return t == Termination::discrepancy ? "discrepancy" : "budget"; }

struct StoppingIndex {
    std::size_t k = 0;  // 1-based position in the width sequence
    std::size_t n = 0;
};

struct RunRecord {
    Algorithm algorithm = Algorithm::enn1;
    double delta = 0.0;
    double tau = 1.0001;
    std::vector<RunRow> rows;
    std::optional<StoppingIndex> stopping;
    Termination terminated_by = Termination::budget;
    std::optional<double> energy_bound;
    int reinitialized_neurons = 0;
    std::optional<TwoLayerNet> final_net;

    /// Width with the smallest relative error.
    std::optional<std::size_t> argmin_error_width() const {
        if (rows.empty()) return std::nullopt;
        const RunRow* best = &rows.front();
        for (const auto& r : rows) {
            if (r.rel_l2_error < best->rel_l2_error) best = &r;
        }
        return best->n;
    }
};

/// Observation points for instrumentation.
struct DriverHooks {
    /// Every post-step iterate, with the width's constraint radius (infinity if a is free).
    std::function<void(const TwoLayerNet&, double radius, std::size_t step)> on_step;
    /// Right after expansion, before training at the new width.
    std::function<void(const TwoLayerNet& before, const TwoLayerNet& after)> on_expand;
};

/// Relative L2 error of f against the exact solution. For sign-symmetric
/// operators f is first replaced by -f when its integral is negative, so the
/// error is measured for the representative in the nonnegative cone.
inline double reconstruction_error(const ForwardProblem& problem, std::vector<double> f) {
    if (problem.op->sign_symmetric() && integrate(problem.solution_grid(), f) < 0.0) {
        for (double& v : f) v = -v;
    }
    return relative_l2_error(f, problem.exact_solution);
}

namespace detail {

struct WidthSetup {
    Objective objective;
    double radius = std::numeric_limits<double>::infinity();
    double coefficient = 0.0;
};

inline RunRecord run_expanding(const ForwardProblem& problem, const Schedule& schedule, Algorithm algorithm,
                               const std::function<WidthSetup(std::size_t)>& setup, Rng& rng,
                               const DriverHooks& hooks) {
    schedule.validate();
    if (problem.exact_solution.size() != problem.solution_grid().size()) {
        throw InputError("driver: exact solution does not live on the solution grid");
    }
    RunRecord record;
    record.algorithm = algorithm;
    record.delta = problem.delta();
    record.tau = schedule.tau;
    const double threshold = schedule.tau * problem.delta();
    const bool uses_discrepancy = algorithm != Algorithm::tikhonov;
    const int dim = problem.solution_grid().dim;
    const auto widths = schedule.widths();

    AdamState adam;
    adam.learning_rate = schedule.learning_rate;
    TwoLayerNet net;
    for (std::size_t k = 0; k < widths.size(); ++k) {
        const std::size_t n = widths[k];
        const auto start = std::chrono::steady_clock::now();
        WidthSetup ws = setup(n);
        if (k == 0) {
            net = init_network(dim, n, rng, ws.radius);
        } else {
            TwoLayerNet expanded = expand_width(net, n, rng, ws.radius);
            if (hooks.on_expand) hooks.on_expand(net, expanded);
            net = std::move(expanded);
        }
        adam.resize(net.parameters().size());

        TrainOptions opts;
        opts.iterations = schedule.iterations;
        opts.constraint_r = ws.radius;
        if (hooks.on_step) {
            opts.on_step = [&, r = ws.radius](const TwoLayerNet& it, std::size_t step) { hooks.on_step(it, r, step); };
        }
        TrainResult tr = train_fixed_width(net, ws.objective, opts, rng, adam);
        net = tr.net;
        record.reinitialized_neurons += tr.reinitialized;

        RunRow row;
        row.n = n;
        row.misfit = ws.objective.misfit == MisfitKind::rms_squared ? std::sqrt(tr.best.misfit) : tr.best.misfit;
        row.penalty = tr.best.penalty;
        row.radius = ws.radius;
        row.coefficient = ws.coefficient;
        row.diverged = tr.diverged;
        row.path_norm = path_norm(net);
        row.rel_l2_error = reconstruction_error(problem, evaluate(net, problem.solution_grid().nodes));
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        record.rows.push_back(row);

        if (uses_discrepancy && !record.stopping && row.misfit <= threshold) {
            record.stopping = StoppingIndex{k + 1, n};
            if (!schedule.sweep_past_stop) {
                record.terminated_by = Termination::discrepancy;
                break;
            }
        }
    }
    record.final_net = net;
    return record;
}

}  // namespace detail

/// Expanding network with a known energy bound B >= c_rho(f-dagger):
/// minimize the RMS misfit over M_{r(n)}, r(n) = B n/(n+1), expanding until
/// the misfit drops to tau*delta.
inline RunRecord run_algorithm1(const ForwardProblem& problem, const Schedule& schedule, double energy_bound, Rng& rng,
                                const DriverHooks& hooks = {}) {
    if (!(energy_bound > 0.0)) throw InputError("run_algorithm1: energy bound must be positive");
    auto setup = [&](std::size_t n) {
        detail::WidthSetup ws;
        ws.objective = Objective{&problem, MisfitKind::rms, Penalty::none()};
        ws.radius = bounded_radius(energy_bound, n);
        return ws;
    };
    RunRecord rec = detail::run_expanding(problem, schedule, Algorithm::enn1, setup, rng, hooks);
    rec.energy_bound = energy_bound;
    return rec;
}

enum class PenaltyChoice { h1, path_norm };

/// Penalized expanding network: misfit + beta_n R(f) over M_{sqrt(n)}, with
/// R = c_r1 ||f||_H1 or R = c_rho_n(f). The stopping test uses the misfit only.
inline RunRecord run_algorithm2(const ForwardProblem& problem, const Schedule& schedule, PenaltyChoice penalty,
                                Rng& rng, const DriverHooks& hooks = {}) {
    auto setup = [&](std::size_t n) {
        detail::WidthSetup ws;
        const double beta = schedule.beta(n);
        ws.objective = Objective{&problem, MisfitKind::rms,
                                 penalty == PenaltyChoice::h1 ? Penalty::h1(beta, schedule.c_r1) : Penalty::path(beta)};
        ws.radius = growing_radius(n);
        ws.coefficient = beta;
        return ws;
    };
    return detail::run_expanding(problem, schedule, Algorithm::enn2, setup, rng, hooks);
}

/// Tikhonov sweep: squared misfit + alpha (c_rho_n)^2 with alpha = (delta+1/n)^eta,
/// a_j unbounded and (b_j, c_j) normalized, over every width up to n_max.
inline RunRecord run_tikhonov(const ForwardProblem& problem, const Schedule& schedule, Rng& rng,
                              const DriverHooks& hooks = {}) {
    auto setup = [&](std::size_t n) {
        detail::WidthSetup ws;
        const double alpha = schedule.alpha(problem.delta(), n);
        ws.objective = Objective{&problem, MisfitKind::rms_squared, Penalty::path_squared(alpha)};
        ws.coefficient = alpha;
        return ws;
    };
    return detail::run_expanding(problem, schedule, Algorithm::tikhonov, setup, rng, hooks);
}

}  // namespace nnreg

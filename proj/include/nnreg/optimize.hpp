#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "nnreg/discretization.hpp"
#include "nnreg/errors.hpp"
#include "nnreg/operators.hpp"
#include "nnreg/rng.hpp"
#include "nnreg/shallow_net.hpp"

namespace nnreg {

/// An operator together with the data it is inverted against.
struct ForwardProblem {
    std::shared_ptr<const ForwardOperator> op;
    std::vector<double> exact_solution;  // f-dagger on the solution grid
    NoisyData data;

    const Grid& solution_grid() const { return op->solution_grid(); }
    double delta() const { return data.delta; }
};

enum class MisfitKind { rms, rms_squared };

enum class PenaltyKind {
    none,
    h1_scaled,          // coefficient * scale * ||f||_{H1}
    path_norm,          // coefficient * c_rho_n(f)
    path_norm_squared,  // coefficient * c_rho_n(f)^2
};

struct Penalty {
    PenaltyKind kind = PenaltyKind::none;
    double coefficient = 0.0;
    double scale = 1.0;

    static Penalty none() { return {}; }
    static Penalty h1(double beta, double c_r1) { return {PenaltyKind::h1_scaled, beta, c_r1}; }
    static Penalty path(double beta) { return {PenaltyKind::path_norm, beta, 1.0}; }
    static Penalty path_squared(double alpha) { return {PenaltyKind::path_norm_squared, alpha, 1.0}; }
};

struct Objective {
    const ForwardProblem* problem = nullptr;
    MisfitKind misfit = MisfitKind::rms;
    Penalty penalty;
};

struct ObjectiveValue {
    double total = 0.0;
    double misfit = 0.0;
    double penalty = 0.0;
};

struct ObjectiveGradient {
    ObjectiveValue value;
    NetGradient gradient;
};

namespace detail {

inline void check_objective(const Objective& obj) {
    if (obj.problem == nullptr || !obj.problem->op) throw InputError("objective: no forward problem bound");
    if (obj.penalty.coefficient < 0.0 || obj.penalty.scale < 0.0) {
        throw InputError("objective: penalty coefficients must be nonnegative");
    }
}

inline double misfit_from_residual(MisfitKind kind, std::span<const double> residual) {
    const double j = rms_norm(residual);
    return kind == MisfitKind::rms ? j : j * j;
}

}  // namespace detail

inline ObjectiveValue objective_value(const TwoLayerNet& net, const Objective& obj) {
    detail::check_objective(obj);
    const ForwardProblem& p = *obj.problem;
    const auto f = evaluate(net, p.solution_grid().nodes);
    auto residual = p.op->apply(f);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= p.data.noisy[i];

    ObjectiveValue v;
    v.misfit = detail::misfit_from_residual(obj.misfit, residual);
    switch (obj.penalty.kind) {
        case PenaltyKind::none: break;
        case PenaltyKind::h1_scaled:
            v.penalty = obj.penalty.coefficient * obj.penalty.scale * sobolev_norms(net, p.solution_grid()).h1;
            break;
        case PenaltyKind::path_norm: v.penalty = obj.penalty.coefficient * path_norm(net); break;
        case PenaltyKind::path_norm_squared: {
            const double c = path_norm(net);
            v.penalty = obj.penalty.coefficient * c * c;
            break;
        }
    }
    v.total = v.misfit + v.penalty;
    return v;
}

/// Value and parameter gradient of the composite objective. The RMS misfit
/// has gradient 0 at zero residual; sign(0) = 0 in the path-norm subgradient.
inline ObjectiveGradient objective_gradient(const TwoLayerNet& net, const Objective& obj) {
    detail::check_objective(obj);
    const ForwardProblem& p = *obj.problem;
    const Grid& grid = p.solution_grid();
    const std::size_t n = net.width();
    const int d = net.input_dim();

    const auto f = evaluate(net, grid.nodes);
    const auto lin = p.op->linearize(f);
    std::vector<double> residual = lin->value();
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= p.data.noisy[i];

    ObjectiveGradient out;
    const double rms = rms_norm(residual);
    const double m = static_cast<double>(residual.size());
    std::vector<double> data_seed(residual.size(), 0.0);
    if (obj.misfit == MisfitKind::rms) {
        out.value.misfit = rms;
        if (rms > 0.0) {
            for (std::size_t i = 0; i < residual.size(); ++i) data_seed[i] = residual[i] / (m * rms);
        }
    } else {
        out.value.misfit = rms * rms;
        for (std::size_t i = 0; i < residual.size(); ++i) data_seed[i] = 2.0 * residual[i] / m;
    }
    std::vector<double> seed = lin->pullback(data_seed);
    std::vector<double> grad_seed;

    // Penalty terms acting directly on parameters, added after backprop.
    double path_factor = 0.0;
    switch (obj.penalty.kind) {
        case PenaltyKind::none: break;
        case PenaltyKind::h1_scaled: {
            const auto df = input_gradient(net, grid.nodes);
            CompensatedSum q;
            for (std::size_t i = 0; i < f.size(); ++i) {
                double g2 = f[i] * f[i];
                for (int k = 0; k < d; ++k) g2 += df[i * d + k] * df[i * d + k];
                q.add(grid.weights[i] * g2);
            }
            const double h1 = std::sqrt(std::max(0.0, q.value()));
            const double c = obj.penalty.coefficient * obj.penalty.scale;
            out.value.penalty = c * h1;
            if (h1 > 0.0) {
                grad_seed.assign(df.size(), 0.0);
                for (std::size_t i = 0; i < f.size(); ++i) {
                    const double wi = c * grid.weights[i] / h1;
                    seed[i] += wi * f[i];
                    for (int k = 0; k < d; ++k) grad_seed[i * d + k] = wi * df[i * d + k];
                }
            }
            break;
        }
        case PenaltyKind::path_norm:
            out.value.penalty = obj.penalty.coefficient * path_norm(net);
            path_factor = obj.penalty.coefficient;
            break;
        case PenaltyKind::path_norm_squared: {
            const double c = path_norm(net);
            out.value.penalty = obj.penalty.coefficient * c * c;
            path_factor = 2.0 * obj.penalty.coefficient * c;
            break;
        }
    }
    out.value.total = out.value.misfit + out.value.penalty;

    out.gradient = param_gradient(net, grid.nodes, seed, grad_seed);
    if (path_factor != 0.0 && n > 0) {
        auto sign = [](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); };
        const double s = path_factor / static_cast<double>(n);
        const std::size_t st = net.stride();
        for (std::size_t j = 0; j < n; ++j) {
            const double a = net.outer(j);
            out.gradient.values[j * st] += s * sign(a) * net.inner_l1(j);
            const auto b = net.inner_weights(j);
            for (int k = 0; k < d; ++k) out.gradient.values[j * st + 1 + k] += s * std::abs(a) * sign(b[k]);
            out.gradient.values[j * st + d + 1] += s * std::abs(a) * sign(net.inner_bias(j));
        }
    }
    return out;
}

/// Adam moments in the network's flat parameter layout.
struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::size_t step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Zero moments for parameters appended by expand_width; retained
    /// parameters keep theirs. step_count is not reset.
    void resize(std::size_t parameter_count) {
        first_moment.resize(parameter_count, 0.0);
        second_moment.resize(parameter_count, 0.0);
    }

    void step(std::vector<double>& params, std::span<const double> grad) {
        resize(params.size());
        ++step_count;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (std::size_t i = 0; i < params.size(); ++i) {
            first_moment[i] = beta1 * first_moment[i] + (1.0 - beta1) * grad[i];
            second_moment[i] = beta2 * second_moment[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double mhat = first_moment[i] / c1;
            const double vhat = second_moment[i] / c2;
            params[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
        }
    }
};

struct TrainOptions {
    std::size_t iterations = 600;
    /// When set, every iterate is projected onto M_r (r may be +infinity,
    /// which keeps only the normalization of (b_j, c_j)).
    std::optional<double> constraint_r;
    /// Test hook: train only the outer weights a_j.
    bool train_inner = true;
    /// Called with each post-step (post-projection) iterate and its step index.
    std::function<void(const TwoLayerNet&, std::size_t)> on_step;
};

struct TrainResult {
    TwoLayerNet net;           // lowest-total iterate seen
    ObjectiveValue best;
    std::vector<double> trace;  // total objective at the start iterate and after every step
    bool diverged = false;      // a non-finite objective stopped training early
    int reinitialized = 0;      // degenerate neurons replaced during projection
};

/// Runs `iterations` projected Adam steps from `net` and returns the best
/// iterate. `adam` carries moments across calls (warm starts); pass a fresh
/// state to start cold.
inline TrainResult train_fixed_width(const TwoLayerNet& net, const Objective& obj, const TrainOptions& options,
                                     Rng& rng, AdamState& adam) {
    if (options.iterations == 0) throw InputError("train_fixed_width: iterations must be positive");
    TrainResult result;
    ProjectionStats stats;
    TwoLayerNet current = options.constraint_r ? project_constraints(net, *options.constraint_r, rng, &stats) : net;
    const int d = current.input_dim();
    const std::size_t stride = current.stride();
    double best_total = std::numeric_limits<double>::infinity();
    result.net = current;
    result.trace.reserve(options.iterations + 1);

    for (std::size_t k = 0;; ++k) {
        ObjectiveGradient og = objective_gradient(current, obj);
        if (!std::isfinite(og.value.total)) {
            result.diverged = true;
            break;
        }
        result.trace.push_back(og.value.total);
        if (og.value.total < best_total) {
            best_total = og.value.total;
            result.best = og.value;
            result.net = current;
        }
        if (k == options.iterations) break;

        if (!options.train_inner) {
            for (std::size_t j = 0; j < current.width(); ++j) {
                for (std::size_t q = 1; q < stride; ++q) og.gradient.values[j * stride + q] = 0.0;
            }
        }
        std::vector<double> params(current.parameters().begin(), current.parameters().end());
        adam.step(params, og.gradient.values);
        current = TwoLayerNet(d, std::move(params));
        if (options.constraint_r) current = project_constraints(current, *options.constraint_r, rng, &stats);
        if (options.on_step) options.on_step(current, k);
    }
    if (!std::isfinite(best_total)) {
        // Diverged at the very first evaluation; report the starting point.
        result.best = {best_total, best_total, 0.0};
    }
    result.reinitialized = stats.reinitialized;
    return result;
}

inline TrainResult train_fixed_width(const TwoLayerNet& net, const Objective& obj, const TrainOptions& options,
                                     Rng& rng) {
    AdamState adam;
    return train_fixed_width(net, obj, options, rng, adam);
}

}  // namespace nnreg

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "nnreg/discretization.hpp"
#include "nnreg/errors.hpp"
#include "nnreg/rng.hpp"
#include "nnreg/summation.hpp"

namespace nnreg {

/// Width-n two-layer ReLU network on R^d,
///
///     f(x) = (1/n) * sum_j a_j * max(0, b_j . x + c_j).
///
/// Parameters are stored per neuron as [a_j, b_j(1..d), c_j], so a network
/// is a flat vector of width*(d+2) doubles. Instances are values: every
/// operation below returns a new network.
class TwoLayerNet {
public:
    TwoLayerNet() = default;

    TwoLayerNet(int input_dim, std::vector<double> params) : dim_(input_dim), params_(std::move(params)) {
        if (input_dim != 1 && input_dim != 2) throw InputError("TwoLayerNet: input_dim must be 1 or 2");
        if (params_.size() % stride() != 0) throw InputError("TwoLayerNet: parameter count does not match layout");
    }

    /// Builds from separate outer weights, flattened inner weights (n*d) and biases.
    static TwoLayerNet from_parts(int input_dim, std::span<const double> outer, std::span<const double> inner_weights,
                                  std::span<const double> inner_bias) {
        const std::size_t n = outer.size();
        if (inner_bias.size() != n || inner_weights.size() != n * static_cast<std::size_t>(input_dim)) {
            throw InputError("TwoLayerNet: parameter lists must all have the network width");
        }
        std::vector<double> p;
        p.reserve(n * (input_dim + 2));
        for (std::size_t j = 0; j < n; ++j) {
            p.push_back(outer[j]);
            for (int k = 0; k < input_dim; ++k) p.push_back(inner_weights[j * input_dim + k]);
            p.push_back(inner_bias[j]);
        }
        return TwoLayerNet(input_dim, std::move(p));
    }

    int input_dim() const { return dim_; }
    std::size_t stride() const { return static_cast<std::size_t>(dim_) + 2; }
    std::size_t width() const { return params_.size() / stride(); }

    double outer(std::size_t j) const { return params_[j * stride()]; }
    std::span<const double> inner_weights(std::size_t j) const {
        return {params_.data() + j * stride() + 1, static_cast<std::size_t>(dim_)};
    }
    double inner_bias(std::size_t j) const { return params_[j * stride() + dim_ + 1]; }

    /// ||b_j||_1 + |c_j|
    double inner_l1(std::size_t j) const {
        double s = std::abs(inner_bias(j));
        for (double b : inner_weights(j)) s += std::abs(b);
        return s;
    }

    std::span<const double> parameters() const { return params_; }

    bool operator==(const TwoLayerNet&) const = default;

private:
    int dim_ = 1;
    std::vector<double> params_;
};

/// Partial derivatives in the same per-neuron layout as TwoLayerNet::parameters().
struct NetGradient {
    int input_dim = 1;
    std::vector<double> values;

    std::size_t stride() const { return static_cast<std::size_t>(input_dim) + 2; }
    double d_outer(std::size_t j) const { return values[j * stride()]; }
    double d_inner_weight(std::size_t j, int k) const { return values[j * stride() + 1 + k]; }
    double d_inner_bias(std::size_t j) const { return values[j * stride() + input_dim + 1]; }
};

struct SobolevNorms {
    double l2 = 0.0;
    double h1 = 0.0;
};

struct NetFunctionals {
    double path_norm = 0.0;
    double l2_norm = 0.0;
    double h1_norm = 0.0;
};

namespace detail {

inline void check_points(const TwoLayerNet& net, const Points& points) {
    if (points.dim != net.input_dim()) throw InputError("point dimension does not match network input_dim");
}

inline double preactivation(const TwoLayerNet& net, std::size_t j, std::span<const double> x) {
    const auto b = net.inner_weights(j);
    double z = net.inner_bias(j);
    for (std::size_t k = 0; k < b.size(); ++k) z += b[k] * x[k];
    return z;
}

/// Neuron order used for every output summation: lexicographic in
/// (a_j, b_j, c_j). Makes evaluation independent of how neurons are stored.
inline std::vector<std::size_t> canonical_order(const TwoLayerNet& net) {
    std::vector<std::size_t> order(net.width());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto p = net.parameters();
    const std::size_t s = net.stride();
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
        return std::lexicographical_compare(p.begin() + l * s, p.begin() + (l + 1) * s, p.begin() + r * s,
                                            p.begin() + (r + 1) * s);
    });
    return order;
}

}  // namespace detail

/// f(x_i) at each point.
inline std::vector<double> evaluate(const TwoLayerNet& net, const Points& points) {
    detail::check_points(net, points);
    const auto order = detail::canonical_order(net);
    const double inv_n = net.width() > 0 ? 1.0 / static_cast<double>(net.width()) : 0.0;
    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto x = points.point(i);
        CompensatedSum acc;
        for (std::size_t j : order) {
            const double z = detail::preactivation(net, j, x);
            if (z > 0.0) acc.add(net.outer(j) * z);
        }
        out[i] = inv_n * acc.value();
    }
    return out;
}

/// Spatial gradient (1/n) sum_j a_j b_j 1[b_j.x + c_j >= 0], row-major N x d.
/// A neuron on its kink counts as active.
inline std::vector<double> input_gradient(const TwoLayerNet& net, const Points& points) {
    detail::check_points(net, points);
    const auto order = detail::canonical_order(net);
    const int d = net.input_dim();
    const double inv_n = net.width() > 0 ? 1.0 / static_cast<double>(net.width()) : 0.0;
    std::vector<double> out(points.size() * d);
    std::vector<CompensatedSum> acc(d);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto x = points.point(i);
        std::fill(acc.begin(), acc.end(), CompensatedSum{});
        for (std::size_t j : order) {
            if (detail::preactivation(net, j, x) >= 0.0) {
                const auto b = net.inner_weights(j);
                for (int k = 0; k < d; ++k) acc[k].add(net.outer(j) * b[k]);
            }
        }
        for (int k = 0; k < d; ++k) out[i * d + k] = inv_n * acc[k].value();
    }
    return out;
}

/// Backpropagates per-point seeds u_i = dL/df(x_i), and optionally per-point
/// vector seeds v_i = dL/d(grad f)(x_i) (row-major N x d), to the parameters.
/// The ReLU derivative at the kink is 0 for value seeds and 1 for gradient seeds,
/// matching evaluate and input_gradient.
inline NetGradient param_gradient(const TwoLayerNet& net, const Points& points, std::span<const double> upstream,
                                  std::span<const double> upstream_input_grad = {}) {
    detail::check_points(net, points);
    if (upstream.size() != points.size()) throw InputError("param_gradient: one upstream value per point required");
    const int d = net.input_dim();
    const bool with_grad_seed = !upstream_input_grad.empty();
    if (with_grad_seed && upstream_input_grad.size() != points.size() * d) {
        throw InputError("param_gradient: input-gradient seed must have N*d entries");
    }
    const std::size_t n = net.width();
    const std::size_t s = net.stride();
    const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    NetGradient g{d, std::vector<double>(net.parameters().size(), 0.0)};
    for (std::size_t j = 0; j < n; ++j) {
        const double a = net.outer(j);
        const auto b = net.inner_weights(j);
        double da = 0.0;
        double dc = 0.0;
        double db[2] = {0.0, 0.0};
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto x = points.point(i);
            const double z = detail::preactivation(net, j, x);
            if (!(z >= 0.0)) continue;
            if (z > 0.0) {
                const double u = upstream[i];
                da += u * z;
                dc += u;
                for (int k = 0; k < d; ++k) db[k] += u * x[k];
            }
            if (with_grad_seed) {
                for (int k = 0; k < d; ++k) {
                    const double v = upstream_input_grad[i * d + k];
                    da += v * b[k];
                    db[k] += v;
                }
            }
        }
        g.values[j * s] = inv_n * da;
        for (int k = 0; k < d; ++k) g.values[j * s + 1 + k] = inv_n * a * db[k];
        g.values[j * s + d + 1] = inv_n * a * dc;
    }
    return g;
}

/// Draws one neuron: b and c uniform on [-1,1] then scaled to ||b||_1+|c| = 1;
/// a uniform on [-1,1], clamped to [-r, r]. Draw order is b_1..b_d, c, a.
inline void draw_neuron(int input_dim, Rng& rng, double r, std::vector<double>& out) {
    std::vector<double> inner(input_dim + 1);
    double l1 = 0.0;
    do {
        l1 = 0.0;
        for (double& v : inner) {
            v = rng.uniform(-1.0, 1.0);
            l1 += std::abs(v);
        }
    } while (l1 < 1e-12);
    const double a = std::clamp(rng.uniform(-1.0, 1.0), -r, r);
    out.push_back(a);
    for (double v : inner) out.push_back(v / l1);
}

inline TwoLayerNet init_network(int input_dim, std::size_t width,
                                Rng& rng, double r = std::numeric_limits<double>::infinity()) {
    if (input_dim != 1 && input_dim != 2) throw InputError("init_network: input_dim must be 1 or 2");
    std::vector<double> p;
    p.reserve(width * (input_dim + 2));
    for (std::size_t j = 0; j < width; ++j) draw_neuron(input_dim, rng, r, p);
    return TwoLayerNet(input_dim, std::move(p));
}

struct ProjectionStats {
    int reinitialized = 0;
};

/// Maps every neuron into M_r: (b_j, c_j) divided by ||b_j||_1+|c_j| and a_j
/// clamped to [-r, r]. r may be +infinity (normalization only). Neurons with
/// ||b_j||_1+|c_j| < 1e-12 get fresh (b_j, c_j) from the init distribution.
inline TwoLayerNet project_constraints(const TwoLayerNet& net, double r, Rng& rng, ProjectionStats* stats = nullptr) {
    if (!(r > 0.0)) throw InputError("project_constraints: radius must be positive");
    const int d = net.input_dim();
    const std::size_t s = net.stride();
    std::vector<double> p(net.parameters().begin(), net.parameters().end());
    for (std::size_t j = 0; j < net.width(); ++j) {
        double* nb = p.data() + j * s;
        double l1 = 0.0;
        for (int k = 1; k <= d + 1; ++k) l1 += std::abs(nb[k]);
        if (l1 < 1e-12) {
            std::vector<double> fresh;
            draw_neuron(d, rng, r, fresh);
            for (int k = 1; k <= d + 1; ++k) nb[k] = fresh[k];
            if (stats) ++stats->reinitialized;
        } else if (l1 != 1.0) {
            for (int k = 1; k <= d + 1; ++k) nb[k] /= l1;
        }
        nb[0] = std::clamp(nb[0], -r, r);
    }
    return TwoLayerNet(d, std::move(p));
}

inline TwoLayerNet project_constraints(const TwoLayerNet& net, double r) {
    Rng rng(0x9e3779b97f4a7c15ULL);
    return project_constraints(net, r, rng);
}

/// True when every neuron satisfies | ||b_j||_1+|c_j| - 1 | <= tol and |a_j| <= r.
inline bool in_constraint_set(const TwoLayerNet& net, double r, double tol = 1e-12) {
    for (std::size_t j = 0; j < net.width(); ++j) {
        if (std::abs(net.inner_l1(j) - 1.0) > tol) return false;
        if (std::abs(net.outer(j)) > r) return false;
    }
    return true;
}

/// c_{rho_n}(f) = (1/n) sum_j |a_j| (||b_j||_1 + |c_j|).
inline double path_norm(const TwoLayerNet& net) {
    if (net.width() == 0) return 0.0;
    CompensatedSum acc;
    for (std::size_t j = 0; j < net.width(); ++j) acc.add(std::abs(net.outer(j)) * net.inner_l1(j));
    return acc.value() / static_cast<double>(net.width());
}

/// L2 and H1 norms by trapezoidal quadrature; the gradient is the exact
/// piecewise-constant network gradient at each node.
inline SobolevNorms sobolev_norms(const TwoLayerNet& net, const Grid& grid) {
    if (grid.size() == 0) throw InputError("sobolev_norms: empty grid");
    const auto f = evaluate(net, grid.nodes);
    const auto df = input_gradient(net, grid.nodes);
    const int d = net.input_dim();
    CompensatedSum l2;
    CompensatedSum grad;
    for (std::size_t i = 0; i < f.size(); ++i) {
        l2.add(grid.weights[i] * f[i] * f[i]);
        double g2 = 0.0;
        for (int k = 0; k < d; ++k) g2 += df[i * d + k] * df[i * d + k];
        grad.add(grid.weights[i] * g2);
    }
    const double l2sq = std::max(0.0, l2.value());
    return {std::sqrt(l2sq), std::sqrt(l2sq + std::max(0.0, grad.value()))};
}

inline NetFunctionals functionals(const TwoLayerNet& net, const Grid& grid) {
    const auto s = sobolev_norms(net, grid);
    return {path_norm(net), s.l2, s.h1};
}

/// Appends new_width - width neurons from the init distribution (outer
/// weight clamped to r when given). Existing neurons are copied unchanged.
inline TwoLayerNet expand_width(const TwoLayerNet& net, std::size_t new_width, Rng& rng,
                                std::optional<double> r = std::nullopt) {
    if (new_width <= net.width()) throw InputError("expand_width: new width must exceed current width");
    std::vector<double> p(net.parameters().begin(), net.parameters().end());
    p.reserve(new_width * net.stride());
    const double radius = r.value_or(std::numeric_limits<double>::infinity());
    for (std::size_t j = net.width(); j < new_width; ++j) draw_neuron(net.input_dim(), rng, radius, p);
    return TwoLayerNet(net.input_dim(), std::move(p));
}

}  // namespace nnreg

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "nnreg/discretization.hpp"
#include "nnreg/errors.hpp"

namespace nnreg {

enum class OperatorKind { fredholm_green, autoconvolution, eit2d };

inline std::string to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::fredholm_green: return "fredholm_green";
        case OperatorKind::autoconvolution: return "autoconvolution";
        case OperatorKind::eit2d: return "eit2d";
    }
    return "unknown";
}

/// A forward map bound to a point (the f it was evaluated at). Holds
/// whatever the pullback needs so the forward work is done once.
class Linearization {
public:
    virtual ~Linearization() = default;
    virtual const std::vector<double>& value() const = 0;
    /// Gradient of f -> <A(f), seed> with respect to the grid values of f.
    virtual std::vector<double> pullback(std::span<const double> seed) const = 0;
};

class ForwardOperator {
public:
    virtual ~ForwardOperator() = default;

    virtual OperatorKind kind() const = 0;
    virtual const Grid& solution_grid() const = 0;
    virtual std::size_t data_size() const = 0;

    virtual std::vector<double> apply(std::span<const double> f) const = 0;
    /// Gradient of f -> <apply(f), seed> (Euclidean pairings on both sides).
    virtual std::vector<double> pullback(std::span<const double> f, std::span<const double> seed) const = 0;

    virtual std::unique_ptr<Linearization> linearize(std::span<const double> f) const {
        return std::make_unique<DefaultLinearization>(*this, f);
    }

    /// Discretization settings echoed into run manifests.
    virtual std::map<std::string, std::string> settings() const = 0;

    /// True when A(-f) = A(f), so solutions are determined only up to sign.
    virtual bool sign_symmetric() const { return false; }

protected:
    void check_solution(std::span<const double> f) const {
        if (f.size() != solution_grid().size()) {
            throw InputError(to_string(kind()) + ": input does not live on the solution grid");
        }
    }
    void check_data(std::span<const double> seed) const {
        if (seed.size() != data_size()) throw InputError(to_string(kind()) + ": seed does not live on the data grid");
    }

private:
    class DefaultLinearization : public Linearization {
    public:
        DefaultLinearization(const ForwardOperator& op, std::span<const double> f)
            : op_(op), f_(f.begin(), f.end()), value_(op.apply(f)) {}
        const std::vector<double>& value() const override { return value_; }
        std::vector<double> pullback(std::span<const double> seed) const override { return op_.pullback(f_, seed); }

    private:
        const ForwardOperator& op_;
        std::vector<double> f_;
        std::vector<double> value_;
    };
};

// ---------------------------------------------------------------------------

/// g(t) = int_0^1 K(t,s) f(s) ds with the Green's kernel of -d^2/dt^2 on
/// [0,1] (K = s(1-t) for s <= t, t(1-s) otherwise). Trapezoidal rule on the
/// solution grid; the data grid is a coarser uniform grid.
class FredholmOperator final : public ForwardOperator {
public:
    explicit FredholmOperator(int solution_points = 101, int data_points = 51)
        : solution_(make_grid(1, solution_points)), data_(make_grid(1, data_points)) {
        const std::size_t n = solution_.size();
        const std::size_t m = data_.size();
        matrix_.resize(m * n);
        for (std::size_t i = 0; i < m; ++i) {
            const double t = data_.nodes(i, 0);
            for (std::size_t j = 0; j < n; ++j) {
                matrix_[i * n + j] = solution_.weights[j] * kernel(t, solution_.nodes(j, 0));
            }
        }
    }

    static double kernel(double t, double s) { return s <= t ? s * (1.0 - t) : t * (1.0 - s); }

    OperatorKind kind() const override { return OperatorKind::fredholm_green; }
    const Grid& solution_grid() const override { return solution_; }
    const Grid& data_grid() const { return data_; }
    std::size_t data_size() const override { return data_.size(); }

    std::vector<double> apply(std::span<const double> f) const override {
        check_solution(f);
        const std::size_t n = solution_.size();
        std::vector<double> g(data_.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += matrix_[i * n + j] * f[j];
            g[i] = acc;
        }
        return g;
    }

    std::vector<double> pullback(std::span<const double> /*f*/, std::span<const double> seed) const override {
        check_data(seed);
        const std::size_t n = solution_.size();
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < seed.size(); ++i) {
            const double s = seed[i];
            for (std::size_t j = 0; j < n; ++j) out[j] += matrix_[i * n + j] * s;
        }
        return out;
    }

    std::map<std::string, std::string> settings() const override {
        return {{"kernel", "green_dirichlet"},
                {"quadrature", "trapezoid"},
                {"solution_points", std::to_string(solution_.size())},
                {"data_points", std::to_string(data_.size())}};
    }

private:
    Grid solution_;
    Grid data_;
    std::vector<double> matrix_;  // M x N, quadrature weights folded in
};

// ---------------------------------------------------------------------------

/// g(t) = int_0^t f(t-s) f(s) ds on a uniform grid, trapezoidal in s with
/// f(t_i - s_j) = f_{i-j}. Data and solution grids coincide.
class AutoconvolutionOperator final : public ForwardOperator {
public:
    explicit AutoconvolutionOperator(int points = 101) : grid_(make_grid(1, points)) {}

    OperatorKind kind() const override { return OperatorKind::autoconvolution; }
    const Grid& solution_grid() const override { return grid_; }
    std::size_t data_size() const override { return grid_.size(); }

    std::vector<double> apply(std::span<const double> f) const override {
        check_solution(f);
        const double h = grid_.spacing();
        std::vector<double> g(f.size(), 0.0);
        for (std::size_t i = 1; i < f.size(); ++i) {
            CompensatedSum acc;
            for (std::size_t j = 0; j <= i; ++j) acc.add(weight(i, j) * f[i - j] * f[j]);
            g[i] = h * acc.value();
        }
        return g;
    }

    std::vector<double> pullback(std::span<const double> f, std::span<const double> seed) const override {
        check_solution(f);
        check_data(seed);
        const double h = grid_.spacing();
        std::vector<double> out(f.size(), 0.0);
        for (std::size_t k = 0; k < f.size(); ++k) {
            double acc = 0.0;
            for (std::size_t i = std::max<std::size_t>(k, 1); i < f.size(); ++i) {
                acc += seed[i] * weight(i, k) * f[i - k];
            }
            out[k] = 2.0 * h * acc;
        }
        return out;
    }

    std::map<std::string, std::string> settings() const override {
        return {{"quadrature", "trapezoid"}, {"points", std::to_string(grid_.size())}};
    }

    bool sign_symmetric() const override { return true; }

private:
    // Trapezoid weight of node j in the integral over [0, t_i] (in units of h).
    static double weight(std::size_t i, std::size_t j) { return (j == 0 || j == i) ? 0.5 : 1.0; }

    Grid grid_;
};

// ---------------------------------------------------------------------------

/// Boundary data and measurement layout for the conductivity problem.
struct EitState {
    Grid grid2d;
    /// u on the grid boundary (zero at interior nodes): sin(pi x) on y = 0.
    std::vector<double> dirichlet_values;
    /// (x, y) of each flux sample, counter-clockwise from (0,0) along the
    /// boundary of a (points+1)-per-axis grid.
    Points measurement_points;
};

/// div(f grad u) = 0 on [0,1]^2 with u = h on the boundary; returns the
/// boundary flux f du/dnu at the measurement points.
///
/// Discretization: conservative 5-point stencil with face conductivities
/// (f_P + f_Q)/2, solved by sparse Cholesky. The normal derivative at each
/// boundary node is the second-order one-sided difference (3u_0 - 4u_1 +
/// u_2)/(2h) along the inward normal (corners average both edges). The
/// resulting nodal fluxes are interpolated linearly in arc length onto the
/// measurement points. Conductivities below kConductivityFloor are clamped.
class EitOperator final : public ForwardOperator {
public:
    static constexpr double kConductivityFloor = 1e-3;

    /// Boundary voltage is amplitude * sin(pi x) on y = 0 and 0 elsewhere.
    explicit EitOperator(int points = 31, double boundary_amplitude = 1.0) : points_(points) {
        if (points < 5) throw InputError("EitOperator: need at least 5 points per axis");
        state_.grid2d = make_grid(2, points);
        const Grid& g = state_.grid2d;
        state_.dirichlet_values.assign(g.size(), 0.0);
        for (int ix = 0; ix < points; ++ix) {
            state_.dirichlet_values[g.index(ix, 0)] = boundary_amplitude * std::sin(std::numbers::pi * g.nodes(g.index(ix, 0), 0));
        }
        build_boundary();
        build_measurements();
    }

    OperatorKind kind() const override { return OperatorKind::eit2d; }
    const Grid& solution_grid() const override { return state_.grid2d; }
    std::size_t data_size() const override { return measurement_.size(); }
    const EitState& state() const { return state_; }

    std::vector<double> apply(std::span<const double> f) const override { return Solved(*this, f).value(); }

    std::vector<double> pullback(std::span<const double> f, std::span<const double> seed) const override {
        return Solved(*this, f).pullback(seed);
    }

    std::unique_ptr<Linearization> linearize(std::span<const double> f) const override {
        return std::make_unique<Solved>(*this, f);
    }

    /// Potential on the full grid for conductivity f (clamped).
    std::vector<double> potential(std::span<const double> f) const { return Solved(*this, f).potential(); }

    std::map<std::string, std::string> settings() const override {
        return {{"stencil", "conservative_5pt_arithmetic_face"},
                {"linear_solver", "eigen_simplicial_llt"},
                {"normal_derivative", "one_sided_second_order"},
                {"grid_points_per_axis", std::to_string(points_)},
                {"measurements", std::to_string(measurement_.size())},
                {"conductivity_floor", "1e-3"}};
    }

private:
    struct Term {
        std::size_t node;
        double coeff;
    };
    struct Interp {
        std::size_t lo;  // index into boundary_
        std::size_t hi;
        double t;
    };

    // Boundary nodes in counter-clockwise arc-length order starting at (0,0),
    // each with its normal-derivative functional over grid nodes.
    void build_boundary() {
        const Grid& g = state_.grid2d;
        const int p = points_;
        const int last = p - 1;
        const double inv2h = 1.0 / (2.0 * g.spacing());
        // One-sided derivative into the domain from (ix,iy) along (dx,dy).
        auto stencil = [&](int ix, int iy, int dx, int dy) {
            return std::vector<Term>{{g.index(ix, iy), 3.0 * inv2h},
                                     {g.index(ix + dx, iy + dy), -4.0 * inv2h},
                                     {g.index(ix + 2 * dx, iy + 2 * dy), 1.0 * inv2h}};
        };
        auto average = [](std::vector<Term> a, const std::vector<Term>& b) {
            for (auto& t : a) t.coeff *= 0.5;
            for (auto t : b) a.push_back({t.node, 0.5 * t.coeff});
            return a;
        };
        auto add = [&](int ix, int iy) {
            const bool left = ix == 0, right = ix == last, bottom = iy == 0, top = iy == last;
            auto sx = [&] { return stencil(ix, iy, left ? 1 : -1, 0); };
            auto sy = [&] { return stencil(ix, iy, 0, bottom ? 1 : -1); };
            std::vector<Term> d;
            if ((left || right) && (bottom || top)) {
                d = average(sx(), sy());
            } else if (left || right) {
                d = sx();
            } else {
                d = sy();
            }
            boundary_.push_back(g.index(ix, iy));
            normal_.push_back(std::move(d));
        };
        for (int ix = 0; ix < last; ++ix) add(ix, 0);        // bottom, x increasing
        for (int iy = 0; iy < last; ++iy) add(last, iy);     // right, y increasing
        for (int ix = last; ix > 0; --ix) add(ix, last);     // top, x decreasing
        for (int iy = last; iy > 0; --iy) add(0, iy);        // left, y decreasing

        unknown_.assign(g.size(), kNotUnknown);
        std::size_t next = 0;
        for (int ix = 1; ix < last; ++ix) {
            for (int iy = 1; iy < last; ++iy) unknown_[g.index(ix, iy)] = next++;
        }
        interior_count_ = next;
    }

    // Measurement m sits at arc length 4m/K on a perimeter of length 4, with
    // K = 4*points samples (the boundary of a (points+1)-per-axis grid).
    void build_measurements() {
        const std::size_t nb = boundary_.size();  // 4*(points-1)
        const std::size_t per_edge_nodes = static_cast<std::size_t>(points_) - 1;
        const std::size_t per_edge_meas = static_cast<std::size_t>(points_);
        const std::size_t count = 4 * per_edge_meas;
        std::vector<double> coords;
        for (std::size_t m = 0; m < count; ++m) {
            const std::size_t scaled = m * per_edge_nodes;  // arc position in node units times per_edge_meas
            const std::size_t lo = scaled / per_edge_meas;
            const std::size_t rem = scaled % per_edge_meas;
            const double t = static_cast<double>(rem) / static_cast<double>(per_edge_meas);
            measurement_.push_back({lo % nb, (lo + 1) % nb, t});

            const std::size_t edge = m / per_edge_meas;
            const double s = static_cast<double>(m % per_edge_meas) / static_cast<double>(per_edge_meas);
            switch (edge) {
                case 0: coords.insert(coords.end(), {s, 0.0}); break;
                case 1: coords.insert(coords.end(), {1.0, s}); break;
                case 2: coords.insert(coords.end(), {1.0 - s, 1.0}); break;
                default: coords.insert(coords.end(), {0.0, 1.0 - s}); break;
            }
        }
        state_.measurement_points = Points(2, std::move(coords));
    }

    static constexpr std::size_t kNotUnknown = static_cast<std::size_t>(-1);

    // Forward solve at one conductivity, kept alive for the adjoint solve.
    class Solved : public Linearization {
    public:
        Solved(const EitOperator& op, std::span<const double> f) : op_(op) {
            op.check_solution(f);
            const Grid& g = op.state_.grid2d;
            const int p = op.points_;
            sigma_.resize(f.size());
            active_.resize(f.size());
            for (std::size_t k = 0; k < f.size(); ++k) {
                active_[k] = f[k] >= kConductivityFloor;
                sigma_[k] = active_[k] ? f[k] : kConductivityFloor;
            }

            const std::size_t nu = op.interior_count_;
            std::vector<Eigen::Triplet<double>> triplets;
            triplets.reserve(5 * nu);
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nu));
            for (int ix = 1; ix < p - 1; ++ix) {
                for (int iy = 1; iy < p - 1; ++iy) {
                    const std::size_t c = g.index(ix, iy);
                    const auto row = static_cast<Eigen::Index>(op.unknown_[c]);
                    double diag = 0.0;
                    for (const auto& [dx, dy] : kNeighbours) {
                        const std::size_t q = g.index(ix + dx, iy + dy);
                        const double face = 0.5 * (sigma_[c] + sigma_[q]);
                        diag += face;
                        if (op.unknown_[q] != kNotUnknown) {
                            triplets.emplace_back(row, static_cast<Eigen::Index>(op.unknown_[q]), -face);
                        } else {
                            rhs[row] += face * op.state_.dirichlet_values[q];
                        }
                    }
                    triplets.emplace_back(row, row, diag);
                }
            }
            matrix_.resize(static_cast<Eigen::Index>(nu), static_cast<Eigen::Index>(nu));
            matrix_.setFromTriplets(triplets.begin(), triplets.end());
            solver_.compute(matrix_);
            if (solver_.info() != Eigen::Success) throw OperatorError("eit: factorization of the stiffness matrix failed");
            const Eigen::VectorXd ui = solve(rhs, "forward");

            potential_ = op.state_.dirichlet_values;
            for (std::size_t k = 0; k < potential_.size(); ++k) {
                if (op.unknown_[k] != kNotUnknown) potential_[k] = ui[static_cast<Eigen::Index>(op.unknown_[k])];
            }

            nodal_flux_.resize(op.boundary_.size());
            for (std::size_t b = 0; b < op.boundary_.size(); ++b) {
                double du = 0.0;
                for (const auto& t : op.normal_[b]) du += t.coeff * potential_[t.node];
                normal_derivative_.push_back(du);
                nodal_flux_[b] = sigma_[op.boundary_[b]] * du;
            }
            value_.resize(op.measurement_.size());
            for (std::size_t m = 0; m < value_.size(); ++m) {
                const auto& it = op.measurement_[m];
                value_[m] = (1.0 - it.t) * nodal_flux_[it.lo] + it.t * nodal_flux_[it.hi];
            }
        }

        const std::vector<double>& value() const override { return value_; }
        const std::vector<double>& potential() const { return potential_; }

        std::vector<double> pullback(std::span<const double> seed) const override {
            op_.check_data(seed);
            const Grid& g = op_.state_.grid2d;
            const int p = op_.points_;
            // Seed on the nodal fluxes (transpose of the interpolation).
            std::vector<double> w(op_.boundary_.size(), 0.0);
            for (std::size_t m = 0; m < seed.size(); ++m) {
                const auto& it = op_.measurement_[m];
                w[it.lo] += (1.0 - it.t) * seed[m];
                w[it.hi] += it.t * seed[m];
            }

            std::vector<double> grad(sigma_.size(), 0.0);
            Eigen::VectorXd dl_du = Eigen::VectorXd::Zero(matrix_.rows());
            for (std::size_t b = 0; b < op_.boundary_.size(); ++b) {
                grad[op_.boundary_[b]] += w[b] * normal_derivative_[b];
                const double scale = w[b] * sigma_[op_.boundary_[b]];
                for (const auto& t : op_.normal_[b]) {
                    if (op_.unknown_[t.node] != kNotUnknown) {
                        dl_du[static_cast<Eigen::Index>(op_.unknown_[t.node])] += scale * t.coeff;
                    }
                }
            }

            const Eigen::VectorXd lambda = solve(dl_du, "adjoint");
            // grad -= lambda^T dR/dsigma, R_P = sum_Q (s_P + s_Q)/2 (u_P - u_Q).
            for (int ix = 1; ix < p - 1; ++ix) {
                for (int iy = 1; iy < p - 1; ++iy) {
                    const std::size_t c = g.index(ix, iy);
                    const double lam = lambda[static_cast<Eigen::Index>(op_.unknown_[c])];
                    for (const auto& [dx, dy] : kNeighbours) {
                        const std::size_t q = g.index(ix + dx, iy + dy);
                        const double contrib = 0.5 * lam * (potential_[c] - potential_[q]);
                        grad[c] -= contrib;
                        grad[q] -= contrib;
                    }
                }
            }
            for (std::size_t k = 0; k < grad.size(); ++k) {
                if (!active_[k]) grad[k] = 0.0;
            }
            return grad;
        }

    private:
        static constexpr std::array<std::array<int, 2>, 4> kNeighbours{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

        Eigen::VectorXd solve(const Eigen::VectorXd& rhs, const char* which) const {
            Eigen::VectorXd x = solver_.solve(rhs);
            const double scale = std::max(rhs.norm(), 1e-300);
            const double residual = (matrix_ * x - rhs).norm();
            if (solver_.info() != Eigen::Success || !std::isfinite(residual) || residual > 1e-8 * scale) {
                throw OperatorError(std::string("eit: ") + which + " solve failed, residual " + std::to_string(residual));
            }
            return x;
        }

        const EitOperator& op_;
        std::vector<double> sigma_;
        std::vector<bool> active_;
        Eigen::SparseMatrix<double> matrix_;
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver_;
        std::vector<double> potential_;
        std::vector<double> normal_derivative_;
        std::vector<double> nodal_flux_;
        std::vector<double> value_;
    };

    int points_;
    EitState state_;
    std::vector<std::size_t> boundary_;
    std::vector<std::vector<Term>> normal_;
    std::vector<std::size_t> unknown_;
    std::size_t interior_count_ = 0;
    std::vector<Interp> measurement_;
};

}  // namespace nnreg

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nnreg/errors.hpp"
#include "nnreg/rng.hpp"
#include "nnreg/summation.hpp"

namespace nnreg {

/// A set of points in R^d stored row-major (point i occupies
/// coords[i*dim .. i*dim+dim)).
struct Points {
    int dim = 1;
    std::vector<double> coords;

    Points() = default;
    Points(int d, std::vector<double> c) : dim(d), coords(std::move(c)) {
        if (d < 1) throw InputError("Points: dimension must be positive");
        if (coords.size() % static_cast<std::size_t>(d) != 0) {
            throw InputError("Points: coordinate count is not a multiple of the dimension");
        }
    }

    std::size_t size() const { return coords.size() / static_cast<std::size_t>(dim); }
    bool empty() const { return coords.empty(); }
    double operator()(std::size_t i, int k) const { return coords[i * dim + k]; }
    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * dim, static_cast<std::size_t>(dim)};
    }
};

/// Uniform tensor grid on [0,1]^d with trapezoidal weights.
///
/// Nodes are in lexicographic order: in 2-D the node (ix, iy) sits at index
/// ix * points_per_axis + iy, with x = ix*h, y = iy*h.
struct Grid {
    int dim = 1;
    int points_per_axis = 0;
    Points nodes;
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
    double spacing() const { return 1.0 / (points_per_axis - 1); }
    std::size_t index(int ix, int iy) const {
        return static_cast<std::size_t>(ix) * points_per_axis + iy;
    }
};

inline std::vector<double> trapezoid_weights_1d(int points) {
    std::vector<double> w(points, 1.0 / (points - 1));
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

inline Grid make_grid(int dim, int points_per_axis) {
    if (dim != 1 && dim != 2) throw InputError("make_grid: dimension must be 1 or 2");
    if (points_per_axis < 2) throw InputError("make_grid: need at least 2 points per axis");

    Grid g;
    g.dim = dim;
    g.points_per_axis = points_per_axis;
    const double h = 1.0 / (points_per_axis - 1);
    const auto w1 = trapezoid_weights_1d(points_per_axis);
    std::vector<double> coords;
    if (dim == 1) {
        coords.reserve(points_per_axis);
        for (int i = 0; i < points_per_axis; ++i) coords.push_back(i == points_per_axis - 1 ? 1.0 : i * h);
        g.weights = w1;
    } else {
        coords.reserve(2 * points_per_axis * points_per_axis);
        g.weights.reserve(points_per_axis * points_per_axis);
        for (int ix = 0; ix < points_per_axis; ++ix) {
            for (int iy = 0; iy < points_per_axis; ++iy) {
                coords.push_back(ix == points_per_axis - 1 ? 1.0 : ix * h);
                coords.push_back(iy == points_per_axis - 1 ? 1.0 : iy * h);
                g.weights.push_back(w1[ix] * w1[iy]);
            }
        }
    }
    g.nodes = Points(dim, std::move(coords));
    return g;
}

/// Trapezoidal quadrature of grid values.
inline double integrate(const Grid& grid, std::span<const double> values) {
    if (grid.size() == 0) throw InputError("integrate: empty grid");
    if (values.size() != grid.size()) throw InputError("integrate: value count does not match grid");
    CompensatedSum acc;
    for (std::size_t i = 0; i < values.size(); ++i) acc.add(grid.weights[i] * values[i]);
    return acc.value();
}

/// Discrete norm of the data space: sqrt((1/M) sum v_i^2).
inline double rms_norm(std::span<const double> v) {
    if (v.empty()) throw InputError("rms_norm: empty vector");
    CompensatedSum acc;
    for (double x : v) acc.add(x * x);
    return std::sqrt(acc.value() / static_cast<double>(v.size()));
}

/// sqrt(sum (approx-exact)^2) / sqrt(sum exact^2).
inline double relative_l2_error(std::span<const double> approx, std::span<const double> exact) {
    if (approx.size() != exact.size()) throw InputError("relative_l2_error: length mismatch");
    CompensatedSum num;
    CompensatedSum den;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        const double e = approx[i] - exact[i];
        num.add(e * e);
        den.add(exact[i] * exact[i]);
    }
    if (den.value() == 0.0) throw InputError("relative_l2_error: exact vector is zero");
    return std::sqrt(num.value()) / std::sqrt(den.value());
}

struct NoisyData {
    std::vector<double> clean;
    std::vector<double> noisy;
    double delta = 0.0;
    std::uint64_t seed = 0;
};

/// noisy_i = clean_i + delta * xi_i with xi_i iid uniform on [-1,1].
/// One xi is drawn per entry even when delta is zero, so the generator
/// advances identically for every noise level.
inline std::vector<double> add_noise(std::span<const double> clean, double delta, Rng& rng) {
    if (!(delta >= 0.0)) throw InputError("add_noise: delta must be nonnegative");
    std::vector<double> noisy(clean.begin(), clean.end());
    for (double& v : noisy) {
        const double xi = rng.uniform(-1.0, 1.0);
        if (delta > 0.0) v += delta * xi;
    }
    return noisy;
}

inline NoisyData add_noise(std::span<const double> clean, double delta, std::uint64_t seed) {
    Rng rng(seed);
    NoisyData out;
    out.clean.assign(clean.begin(), clean.end());
    out.noisy = add_noise(clean, delta, rng);
    out.delta = delta;
    out.seed = seed;
    return out;
}

}  // namespace nnreg

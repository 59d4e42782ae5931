#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nnreg/operators.hpp"
#include "oracles.hpp"

using namespace nnreg;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

long double dot(std::span<const double> a, std::span<const double> b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
    return s;
}

std::vector<double> axpy(std::span<const double> x, double t, std::span<const double> h) {
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t * h[i];
    return out;
}

double l2_relative(std::span<const double> a, std::span<const double> b) {
    long double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
        den += static_cast<long double>(b[i]) * b[i];
    }
    return std::sqrt(static_cast<double>(num / den));
}

}  // namespace

TEST(Fredholm, ZeroInputGivesZero) {
    FredholmOperator op;
    for (double v : op.apply(std::vector<double>(101, 0.0))) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(op.data_size(), 51u);
}

TEST(Fredholm, SineEigenfunctions) {
    FredholmOperator op;
    const Grid& s = op.solution_grid();
    const Grid& t = op.data_grid();
    const double pi = std::numbers::pi;
    for (int k = 1; k <= 5; ++k) {
        std::vector<double> f(s.size()), expected(t.size());
        for (std::size_t j = 0; j < f.size(); ++j) f[j] = std::sin(k * pi * s.nodes(j, 0));
        for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = std::sin(k * pi * t.nodes(i, 0)) / (k * k * pi * pi);
        EXPECT_LE(l2_relative(op.apply(f), expected), 0.01) << k;
    }
}

TEST(Fredholm, Linearity) {
    FredholmOperator op;
    Rng rng(1);
    const auto f = random_vector(101, rng);
    const auto g = random_vector(101, rng);
    std::vector<double> twice(f), sum(f);
    for (std::size_t i = 0; i < f.size(); ++i) {
        twice[i] *= 2.0;
        sum[i] += g[i];
    }
    const auto af = op.apply(f), ag = op.apply(g), a2 = op.apply(twice), as = op.apply(sum);
    for (std::size_t i = 0; i < af.size(); ++i) {
        EXPECT_NEAR(a2[i], 2.0 * af[i], 1e-12);
        EXPECT_NEAR(as[i], af[i] + ag[i], 1e-12);
    }
}

TEST(Fredholm, GridMismatchIsInputError) {
    FredholmOperator op;
    EXPECT_THROW(op.apply(std::vector<double>(100, 0.0)), InputError);
    EXPECT_THROW(op.pullback(std::vector<double>(101, 0.0), std::vector<double>(50, 0.0)), InputError);
}

TEST(Fredholm, AdjointIdentity) {
    FredholmOperator op;
    Rng rng(2);
    const std::vector<double> f0(101, 0.0);
    for (double v : op.pullback(f0, std::vector<double>(51, 0.0))) EXPECT_EQ(v, 0.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_vector(101, rng);
        const auto s = random_vector(51, rng);
        const double lhs = static_cast<double>(dot(op.apply(f), s));
        const double rhs = static_cast<double>(dot(f, op.pullback(f, s)));
        EXPECT_NEAR(lhs, rhs, 1e-10);
    }
}

TEST(Autoconvolution, ConstantInputGivesIdentity) {
    AutoconvolutionOperator op;
    const auto g = op.apply(std::vector<double>(101, 1.0));
    const Grid& grid = op.solution_grid();
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], grid.nodes(i, 0), 1e-12);
    for (double v : op.apply(std::vector<double>(101, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(Autoconvolution, Evenness) {
    AutoconvolutionOperator op;
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        auto f = random_vector(101, rng);
        const auto a = op.apply(f);
        for (double& v : f) v = -v;
        EXPECT_EQ(op.apply(f), a);
    }
}

TEST(Autoconvolution, PullbackMatchesDirectionalDerivative) {
    AutoconvolutionOperator op;
    Rng rng(4);
    for (double v : op.pullback(random_vector(101, rng), std::vector<double>(101, 0.0))) EXPECT_EQ(v, 0.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_vector(101, rng);
        const auto h = random_vector(101, rng);
        const auto s = random_vector(101, rng);
        const double step = 1e-4;
        const double fd = static_cast<double>(dot(op.apply(axpy(f, step, h)), s) - dot(op.apply(axpy(f, -step, h)), s)) /
                          (2 * step);
        const double analytic = static_cast<double>(dot(op.pullback(f, s), h));
        EXPECT_LE(nnreg::testing::relative_difference(analytic, fd), 1e-5);
    }
}

TEST(Eit, StateLayout) {
    EitOperator op;
    const auto& st = op.state();
    ASSERT_EQ(st.grid2d.size(), 961u);
    ASSERT_EQ(op.data_size(), 124u);
    ASSERT_EQ(st.measurement_points.size(), 124u);
    for (std::size_t k = 0; k < st.grid2d.size(); ++k) {
        const double x = st.grid2d.nodes(k, 0), y = st.grid2d.nodes(k, 1);
        const double expected = y == 0.0 ? std::sin(std::numbers::pi * x) : 0.0;
        EXPECT_NEAR(st.dirichlet_values[k], expected, 1e-15);
    }
    for (std::size_t i = 0; i < 124; ++i) {
        const double x = st.measurement_points(i, 0), y = st.measurement_points(i, 1);
        EXPECT_TRUE(x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0) << i;
    }
}

TEST(Eit, UnitConductivityMatchesLaplaceSolution) {
    EitOperator op;
    const auto g = op.apply(std::vector<double>(961, 1.0));
    const auto& mp = op.state().measurement_points;
    std::vector<double> expected(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        expected[i] = nnreg::testing::laplace_normal_derivative(mp(i, 0), mp(i, 1));
    }
    EXPECT_LE(l2_relative(g, expected), 0.05);
}

TEST(Eit, HomogeneityInConstantConductivity) {
    EitOperator op;
    const auto base = op.apply(std::vector<double>(961, 1.0));
    const auto u1 = op.potential(std::vector<double>(961, 1.0));
    for (double lambda : {0.5, 1.0, 2.0}) {
        const auto g = op.apply(std::vector<double>(961, lambda));
        for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], lambda * base[i], 1e-10);
        const auto u = op.potential(std::vector<double>(961, lambda));
        for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], u1[i], 1e-10);
    }
}

TEST(Eit, ZeroBoundaryDataGivesZeroFlux) {
    EitOperator op(31, 0.0);
    Rng rng(5);
    for (double v : op.apply(random_vector(961, rng, 0.5, 2.0))) EXPECT_EQ(v, 0.0);
}

TEST(Eit, PullbackMatchesFiniteDifferences) {
    EitOperator op;
    Rng rng(6);
    for (double v : op.pullback(std::vector<double>(961, 1.0), std::vector<double>(124, 0.0))) EXPECT_EQ(v, 0.0);
    for (int trial = 0; trial < 5; ++trial) {
        const auto f = random_vector(961, rng, 0.5, 2.0);
        const auto h = random_vector(961, rng);
        const auto s = random_vector(124, rng);
        const double step = 1e-5;
        const double fd = static_cast<double>(dot(op.apply(axpy(f, step, h)), s) - dot(op.apply(axpy(f, -step, h)), s)) /
                          (2 * step);
        const double analytic = static_cast<double>(dot(op.pullback(f, s), h));
        EXPECT_LE(nnreg::testing::relative_difference(analytic, fd), 1e-3) << analytic << " " << fd;
    }
}

TEST(Eit, LinearizationReusesOneSolve) {
    EitOperator op;
    Rng rng(7);
    const auto f = random_vector(961, rng, 0.5, 2.0);
    const auto s = random_vector(124, rng);
    const auto lin = op.linearize(f);
    EXPECT_EQ(lin->value(), op.apply(f));
    const auto a = lin->pullback(s);
    const auto b = op.pullback(f, s);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Eit, ClampedNodesAreFlat) {
    EitOperator op;
    Rng rng(8);
    auto f = random_vector(961, rng, 0.5, 2.0);
    const std::size_t k = op.solution_grid().index(15, 15);
    f[k] = -0.3;
    const auto s = random_vector(124, rng);
    const auto base = op.apply(f);
    f[k] = -0.7;
    EXPECT_EQ(op.apply(f), base);
    EXPECT_EQ(op.pullback(f, s)[k], 0.0);
}

TEST(Operators, SettingsAreReported) {
    EXPECT_EQ(EitOperator().settings().at("linear_solver"), "eigen_simplicial_llt");
    EXPECT_EQ(FredholmOperator().settings().at("data_points"), "51");
    EXPECT_EQ(to_string(AutoconvolutionOperator().kind()), "autoconvolution");
}

#include <gtest/gtest.h>

#include "nonlocal_lab/ball_solver.hpp"
#include "oracles.hpp"

using namespace nonlocal_lab;

namespace {

// g(y) = (|y| - 1)^{-beta} outside the ball.
ScalarField distance_power(double beta) {
    ScalarField g;
    g.eval = [beta](std::span<const double> y) {
        const double d = norm(y) - 1.0;
        return d > 0.0 ? std::pow(d, -beta) : 0.0;
    };
    g.radial = [beta](double, double d) { return d > 0.0 ? std::pow(d, -beta) : 0.0; };
    g.kinks.push_back({Vec{0.0, 0.0}, 1.0});
    return g;
}

ScalarField shell_indicator(double outer) {
    ScalarField g;
    g.eval = [outer](std::span<const double> y) { return norm(y) < outer ? 1.0 : 0.0; };
    g.radial = [outer](double r, double) { return r < outer ? 1.0 : 0.0; };
    g.kinks.push_back({Vec{0.0, 0.0}, outer});
    return g;
}

// A smooth positive bump centred outside the ball.
ScalarField gaussian(const Vec& c, double width) {
    ScalarField g;
    g.eval = [c, width](std::span<const double> y) { return std::exp(-norm2(sub(y, c)) / (width * width)); };
    return g;
}

// Poisson integral of a radial datum at x = 0, where P(0, y) = c (|y|^2 - 1)^{-s} |y|^{-N}.
// rho = sqrt(1 + w^{1/(1-s)}) absorbs the endpoint singularity.
double radial_poisson_at_centre(const KernelParams& p, const std::function<double(double)>& g, double rho_max) {
    const double e = 1.0 / (1.0 - p.s);
    const double area = 2.0 * oracle::pi;
    const double top = std::pow(rho_max * rho_max - 1.0, 1.0 - p.s);
    const double I = oracle::gauss_legendre(
        [&](double w) {
            const double rho = std::sqrt(1.0 + std::pow(w, e));
            return 0.5 * e * g(rho) / (rho * rho);
        },
        0.0, top, 200);
    return oracle::c_Ns(2, p.s) * area * I;
}

}  // namespace

TEST(PoissonSolveBall, SharmonicExteriorBranch) {
    const KernelParams p{2, 0.3};
    const double sigma = 0.2;
    const Vec x{0.5, 0.0};
    const double ref = oracle::c_Ns(2, 0.3) * std::pow(1.0 - 0.25, -sigma);
    EXPECT_NEAR(poisson_solve_ball(p, sharmonic_field(p, sigma), x), ref, 1e-3 * ref);
}

TEST(PoissonSolveBall, ConstantDatum) {
    for (double s : {0.2, 0.5, 0.8}) {
        const KernelParams p{2, s};
        EXPECT_NEAR(poisson_solve_ball(p, constant_field(1.0), Vec{0.0, 0.0}), 1.0, 1e-4) << s;
        EXPECT_NEAR(poisson_solve_ball(p, constant_field(1.0), Vec{0.3, -0.6}), 1.0, 1e-4) << s;
    }
    const KernelParams p3{3, 0.4};
    EXPECT_NEAR(poisson_solve_ball(p3, constant_field(1.0), Vec{0.1, 0.2, 0.3}), 1.0, 1e-4);
}

TEST(PoissonSolveBall, ShellIndicator) {
    const KernelParams p{2, 0.4};
    const auto g = shell_indicator(2.0);
    const double u0 = poisson_solve_ball(p, g, Vec{0.0, 0.0});
    EXPECT_GT(u0, 0.0);
    EXPECT_LT(u0, 1.0);
    // at the centre the mass of the shell under the exit law is I_{3/4}(1-s, s)
    EXPECT_NEAR(u0, oracle::ibeta(0.6, 0.4, 0.75), 1e-6);
    EXPECT_NEAR(u0, radial_poisson_at_centre(p, [](double r) { return r < 2.0 ? 1.0 : 0.0; }, 2.0), 1e-6);
    // points nearer the sphere see more of the shell
    double prev = u0;
    for (double r : {0.3, 0.6, 0.9}) {
        const double u = poisson_solve_ball(p, g, Vec{r, 0.0});
        EXPECT_GT(u, prev) << r;
        prev = u;
    }
    WalkConfig cfg;
    cfg.n_samples = 40000;
    const auto est = wos_estimate(ball_domain(unit_ball(2), g.eval), {}, Vec{0.0, 0.0}, p, cfg);
    EXPECT_NEAR(est.mean, u0, 3.0 * est.std_error);
}

TEST(PoissonSolveBall, Linearity) {
    const KernelParams p{2, 0.35};
    const auto a = gaussian(Vec{1.5, 0.3}, 0.7), b = shell_indicator(3.0);
    const Vec x{0.2, 0.4};
    const double ua = poisson_solve_ball(p, a, x), ub = poisson_solve_ball(p, b, x);
    ScalarField c;
    c.eval = [fa = a.eval, fb = b.eval](std::span<const double> y) { return 2.5 * fa(y) - 0.75 * fb(y); };
    c.kinks = b.kinks;
    const double uc = poisson_solve_ball(p, c, x);
    EXPECT_NEAR(uc, 2.5 * ua - 0.75 * ub, 1e-10 * (2.5 * std::abs(ua) + 0.75 * std::abs(ub)));
}

TEST(PoissonSolveBall, ComparisonPrinciple) {
    const KernelParams p{2, 0.5};
    const auto lo = gaussian(Vec{-1.2, 0.8}, 0.5);
    ScalarField hi;
    hi.eval = [f = lo.eval](std::span<const double> y) { return f(y) + 0.05 * std::exp(-norm2(y)); };
    Rng rng(3);
    for (int k = 0; k < 5; ++k) {
        const double r = 0.95 * std::sqrt(rng.uniform()), t = 2.0 * oracle::pi * rng.uniform();
        const Vec x{r * std::cos(t), r * std::sin(t)};
        EXPECT_LE(poisson_solve_ball(p, lo, x), poisson_solve_ball(p, hi, x)) << k;
    }
}

TEST(PoissonSolveBall, AgreesWithWalkOnSpheres) {
    Rng rng(2024);
    WalkConfig cfg;
    cfg.n_samples = 20000;
    for (int k = 0; k < 10; ++k) {
        const double s = 0.2 + 0.6 * rng.uniform();
        const KernelParams p{2, s};
        const double ang = 2.0 * oracle::pi * rng.uniform();
        const double dist = 1.2 + 1.5 * rng.uniform();
        const auto g = gaussian(Vec{dist * std::cos(ang), dist * std::sin(ang)}, 0.5 + rng.uniform());
        const double r = 0.8 * rng.uniform(), t = 2.0 * oracle::pi * rng.uniform();
        const Vec x{r * std::cos(t), r * std::sin(t)};
        cfg.seed = 1 + k;
        const double u = poisson_solve_ball(p, g, x);
        const auto est = wos_estimate(ball_domain(unit_ball(2), g.eval), {}, x, p, cfg);
        EXPECT_NEAR(est.mean, u, 3.0 * est.std_error + 1e-6) << k;
    }
}

TEST(PoissonSolveBall, RejectsBadInput) {
    const KernelParams p{2, 0.3};
    EXPECT_THROW(poisson_solve_ball(p, constant_field(1.0), Vec{1.0, 0.0}), DomainError);
    ScalarField heavy;
    heavy.eval = [](std::span<const double> y) { return std::pow(norm(y), 3.0); };
    EXPECT_THROW(poisson_solve_ball(p, heavy, Vec{0.0, 0.0}), IntegrabilityError);
}

TEST(BallGreen, SymmetricAndPositive) {
    const KernelParams p{2, 0.4};
    const Vec x{0.3, -0.2}, y{-0.1, 0.5};
    const double a = ball_green_function(p, x, y), b = ball_green_function(p, y, x);
    EXPECT_GT(a, 0.0);
    EXPECT_NEAR(a, b, 1e-14 * a);
    EXPECT_EQ(ball_green_function(p, x, Vec{1.2, 0.0}), 0.0);
}

TEST(BallGreen, RadialSolveOfConstantIsTorsion) {
    for (double s : {0.3, 0.7}) {
        const KernelParams p{2, s};
        for (double r : {0.0, 0.5, 0.9}) {
            const Vec x{r, 0.0};
            const double ref = oracle::torsion_factor(2, s) * std::pow(1.0 - r * r, s);
            const auto u = green_solve_ball_radial(p, [](double, double) { return 1.0; }, x, 1e-10);
            EXPECT_NEAR(u.value, ref, 1e-7 * ref) << s << " " << r;
        }
    }
}

TEST(MartinTrace, ConstantIsExactlyOne) {
    const KernelParams p{2, 0.4};
    const Field one = [](std::span<const double>) { return 1.0; };
    EXPECT_EQ(martin_trace_ball(p, one, Vec{0.3, 0.2}).u_ratio, 1.0);
}

TEST(MartinTrace, OddDataVanishAtCentre) {
    const KernelParams p{3, 0.6};
    const Field h = [](std::span<const double> th) { return th[0]; };
    EXPECT_NEAR(martin_trace_ball(p, h, Vec{0.0, 0.0, 0.0}).u_ratio, 0.0, 1e-10);
}

TEST(MartinTrace, ApproachesBoundaryValue) {
    const KernelParams p{2, 0.5};
    const Field h = [](std::span<const double> th) { return th[0]; };
    double prev = -1.0;
    for (double d : {0.1, 0.01, 0.001}) {
        const double u = martin_trace_ball(p, h, Vec{1.0 - d, 0.0}).u_ratio;
        EXPECT_GT(u, prev) << d;
        EXPECT_LE(u, 1.0 + 1e-10);
        prev = u;
    }
    EXPECT_NEAR(prev, 1.0, 1e-2);
}

TEST(LargeSharmonic, NondecreasingInLevel) {
    const KernelParams p{2, 0.3};
    const auto g = distance_power(0.4);
    const std::vector<double> levels{1.0, 2.0, 4.0, 8.0, 16.0, 64.0};
    for (double r : {0.0, 0.7}) {
        const auto u = large_sharmonic_ball(p, g, levels, Vec{r, 0.0});
        for (std::size_t k = 1; k < u.size(); ++k) EXPECT_GE(u[k] - u[k - 1], -1e-10) << r << " " << k;
    }
}

TEST(LargeSharmonic, LimitRateMatchesDatum) {
    const KernelParams p{2, 0.3};
    const double beta = 0.4;
    const auto g = distance_power(beta);
    std::vector<double> delta, u;
    for (double d : {1e-2, 3e-3, 1e-3, 3e-4, 1e-4}) {
        delta.push_back(d);
        u.push_back(poisson_solve_ball(p, g, Vec{1.0 - d, 0.0}));
    }
    EXPECT_NEAR(oracle::loglog_slope(delta, u), -beta, 0.05);
}

TEST(LargeSharmonic, BoundedDatumStabilizes) {
    const KernelParams p{2, 0.5};
    const auto g = gaussian(Vec{1.5, 0.0}, 0.5);
    const auto u = large_sharmonic_ball(p, g, {0.25, 0.5, 1.0, 2.0, 4.0}, Vec{0.2, 0.1});
    EXPECT_LT(u[0], u[2]);
    EXPECT_EQ(u[2], u[3]);
    EXPECT_EQ(u[3], u[4]);
}

TEST(WeightedTrace, MartinIntegralGivesOne) {
    const KernelParams p{2, 0.4};
    std::vector<std::pair<double, double>> samples;
    for (double d = 0.1; d > 1e-5; d *= 0.3) {
        const double r = 1.0 - d;
        samples.push_back({d, martin_mass(p, r * r)});
    }
    const auto t = weighted_trace(p, samples);
    EXPECT_NEAR(t.Eu, 1.0, 1e-2);
    EXPECT_TRUE(t.converged);
}

TEST(WeightedTrace, SubcriticalBlowUpHasZeroTrace) {
    const KernelParams p{2, 0.4};
    const auto u = sharmonic_field(p, 0.3);
    std::vector<std::pair<double, double>> samples;
    for (double d = 0.1; d > 1e-6; d *= 0.3) samples.push_back({d, u(Vec{1.0 - d, 0.0})});
    const auto t = weighted_trace(p, samples);
    EXPECT_NEAR(t.Eu, 0.0, 1e-2);
}

TEST(WeightedTrace, CriticalBlowUpHasPositiveTrace) {
    const KernelParams p{2, 0.4};
    const auto u = sharmonic_field(p, 1.0 - p.s);
    std::vector<std::pair<double, double>> samples;
    for (double d = 0.1; d > 1e-6; d *= 0.3) samples.push_back({d, u(Vec{1.0 - d, 0.0})});
    const auto t = weighted_trace(p, samples);
    EXPECT_TRUE(t.converged);
    EXPECT_GT(t.Eu, 0.0);
    // u_{1-s} / mass = c (1-|x|^2)^{s-1} / (2 pi (1-|x|^2)^{s-1})
    EXPECT_NEAR(t.Eu, oracle::c_Ns(2, 0.4) / (2.0 * oracle::pi), 1e-8);
}

TEST(WeightedTrace, RejectsShortInput) {
    EXPECT_THROW(weighted_trace(KernelParams{2, 0.4}, {{0.1, 1.0}, {0.01, 1.0}}), DomainError);
}

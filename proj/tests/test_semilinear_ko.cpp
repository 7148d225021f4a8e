#include <gtest/gtest.h>

#include "nonlocal_lab/semilinear_ko.hpp"
#include "oracles.hpp"

using namespace nonlocal_lab;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    return g;
}

// phi for t^p by direct quadrature of sqrt(p+1) t^{-(p+1)/2} after t = u / w^2.
double power_phi_oracle(double p, double u) {
    const double e = 0.5 * (p + 1.0);
    return oracle::gauss_legendre(
        [&](double w) {
            if (w == 0.0) return 0.0;
            const double t = u / (w * w);
            return std::sqrt(p + 1.0) * std::pow(t, -e) * 2.0 * u / (w * w * w);
        },
        0.0, 1.0, 200);
}

std::vector<double> halving_deltas(double from, double to) {
    std::vector<double> d;
    for (double x = from; x > to; x *= 0.5) d.push_back(x);
    return d;
}

}  // namespace

TEST(ProfileCheck, PowerIsExact) {
    const auto r = profile_check(power_profile(3.0), log_grid(1e-3, 1e3, 30));
    EXPECT_NEAR(r.m_hat, 2.0, 1e-12);
    EXPECT_NEAR(r.M_hat, 2.0, 1e-12);
    EXPECT_TRUE(r.ok);
}

TEST(ProfileCheck, LowerCriticalBracket) {
    const double s = 0.5, alpha = 0.7;
    const auto prof = lower_critical_profile(s, alpha);
    for (double t : log_grid(1e-3, 1e6, 40)) {
        const double ratio = t * prof.fprime(t) / prof.f(t);
        const double ref = 1.0 + 2.0 * s + alpha * t / ((1.0 + t) * std::log1p(t));
        EXPECT_NEAR(ratio, ref, 1e-10 * ref) << t;
        EXPECT_GE(ratio, 1.0 + 2.0 * s - 1e-12);
        EXPECT_LE(ratio, 1.0 + 2.0 * s + alpha + 1e-12);
    }
    EXPECT_TRUE(profile_check(prof, log_grid(1e-3, 1e6, 40)).ok);
}

TEST(ProfileCheck, ExponentialHasNoUpperBound) {
    const auto r = profile_check(exponential_profile(), log_grid(1.0, 500.0, 20));
    EXPECT_FALSE(r.ok);
    EXPECT_GT(r.M_hat, 100.0);
}

TEST(ProfileCheck, AntiderivativeRatio) {
    for (const auto& prof : {lower_critical_profile(0.4, 1.0), upper_critical_profile(0.4, 0.5)})
        for (double t : log_grid(1e-2, 1e4, 12)) {
            const double r = t * prof.f(t) / prof.antiderivative(t);
            EXPECT_GE(r, 2.0 + prof.m - 1e-8) << prof.name << " " << t;
            EXPECT_LE(r, 2.0 + prof.M + 1e-8) << prof.name << " " << t;
        }
}

TEST(ProfileCheck, RejectsBadGrid) {
    EXPECT_THROW(profile_check(power_profile(2.0), {1.0, -1.0}), DomainError);
    EXPECT_THROW(profile_check(power_profile(2.0), {}), DomainError);
}

TEST(Phi, PowerClosedForm) {
    const double p = 3.0;
    const auto prof = power_profile(p);
    EXPECT_NEAR(power_phi_oracle(p, 1.0), 2.0, 1e-10);
    EXPECT_NEAR(phi_eval(prof, 1.0), 2.0, 1e-8);
    for (double u : {0.1, 7.0, 300.0}) {
        const double ref = power_phi_oracle(p, u);
        EXPECT_NEAR(phi_eval(prof, u), ref, 1e-8 * ref) << u;
    }
}

TEST(Phi, DecreasingAndComparableToSqrtUOverF) {
    const double s = 0.5;
    for (const auto& prof : {power_profile(2.5), lower_critical_profile(s, 1.5), upper_critical_profile(s, 0.5)}) {
        EXPECT_LT(phi_eval(prof, 2.0), phi_eval(prof, 1.0)) << prof.name;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (double u : log_grid(1.0, 1e3, 10)) {
            const double r = phi_eval(prof, u) * std::sqrt(prof.f(u) / u);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        // F lies between t f / (2+M) and t f / (2+m), so the ratio sits in a fixed bracket
        EXPECT_GE(lo, 2.0 * std::sqrt(2.0 + prof.m) / (2.0 + prof.M) * 0.5) << prof.name;
        EXPECT_LE(hi, 2.0 * std::sqrt(2.0 + prof.M) / prof.m * 2.0) << prof.name;
    }
}

TEST(Phi, RejectsDivergentTail) {
    NonlinearProfile lin;
    lin.f = [](double t) { return t; };
    lin.fprime = [](double) { return 1.0; };
    lin.F = [](double t) { return 0.5 * t * t; };
    EXPECT_THROW(phi_eval(lin, 1.0), KOViolation);
    EXPECT_THROW(phi_eval(power_profile(2.0), 0.0), DomainError);
}

TEST(Psi, RoundTrip) {
    for (const auto& prof : {power_profile(2.5), lower_critical_profile(0.5, 1.0)})
        for (double u : log_grid(0.5, 100.0, 20)) EXPECT_NEAR(psi_eval(prof, phi_eval(prof, u)) / u, 1.0, 1e-8);
}

TEST(Psi, PowerClosedForm) {
    const double p = 2.5;
    const auto prof = power_profile(p);
    for (double v : {0.05, 0.5, 3.0}) {
        const double ref = std::pow((p - 1.0) * v / (2.0 * std::sqrt(p + 1.0)), 2.0 / (1.0 - p));
        EXPECT_NEAR(psi_eval(prof, v), ref, 1e-9 * ref) << v;
    }
}

TEST(Psi, ScalingBound) {
    // the log-derivative of psi lies in [-2/m, -2/M]
    const auto prof = lower_critical_profile(0.5, 1.0);
    for (double v : {0.1, 0.5, 1.0})
        for (double c : {0.2, 0.5, 0.9}) {
            const double a = psi_eval(prof, c * v), b = psi_eval(prof, v);
            EXPECT_GE(a, std::pow(c, -2.0 / prof.M) * b * (1.0 - 1e-9)) << v << " " << c;
            EXPECT_LE(a, std::pow(c, -2.0 / prof.m) * b * (1.0 + 1e-9)) << v << " " << c;
        }
    const auto pw = power_profile(2.5);
    EXPECT_NEAR(psi_eval(pw, 0.3), std::pow(0.5, -2.0 / pw.M) * psi_eval(pw, 0.6), 1e-9 * psi_eval(pw, 0.3));
}

TEST(KOClassify, PowerFamily) {
    const double s = 0.5;
    // L1 threshold 1+2s = 2, E threshold (1+s)/(1-s) = 3
    struct Case {
        double p;
        bool L1, E;
    };
    for (const auto& c : {Case{1.8, false, true}, Case{2.2, true, true}, Case{2.8, true, true}, Case{3.2, true, false}}) {
        const auto k = ko_classify(power_profile(c.p), s);
        EXPECT_EQ(k.KO, Tri::yes) << c.p;
        EXPECT_EQ(k.L1, c.L1 ? Tri::yes : Tri::no) << c.p;
        EXPECT_EQ(k.E, c.E ? Tri::yes : Tri::no) << c.p;
    }
}

TEST(KOClassify, LowerCriticalFamily) {
    const double s = 0.5;
    EXPECT_EQ(ko_classify(lower_critical_profile(s, 2.0 * s - 0.5), s).L1, Tri::no);
    EXPECT_EQ(ko_classify(lower_critical_profile(s, 2.0 * s + 0.5), s).L1, Tri::yes);
    EXPECT_EQ(ko_classify(lower_critical_profile(s, 2.0 * s + 0.5), s).E, Tri::yes);
    EXPECT_EQ(ko_classify(lower_critical_profile(s, 2.0 * s - 0.5), s).KO, Tri::yes);
}

TEST(KOClassify, UpperCriticalFamily) {
    const double s = 0.5;
    for (double beta : {0.5, 0.8, 1.2, 1.5}) {
        const auto k = ko_classify(upper_critical_profile(s, beta), s);
        EXPECT_EQ(k.KO, Tri::yes) << beta;
        EXPECT_EQ(k.L1, Tri::yes) << beta;
        EXPECT_EQ(k.E, beta > 1.0 ? Tri::yes : Tri::no) << beta;
    }
}

TEST(KOClassify, ExponentialAndThresholds) {
    const auto k = ko_classify(exponential_profile(), 0.5);
    EXPECT_EQ(k.KO, Tri::yes);
    EXPECT_EQ(k.L1, Tri::yes);
    EXPECT_EQ(k.E, Tri::no);
    // t^{-1} is decided by the log refit, t^{-1} log^{-1} t is not
    EXPECT_EQ(ko_classify(power_profile(2.0), 0.5).L1, Tri::no);
    EXPECT_EQ(ko_classify(lower_critical_profile(0.5, 1.0), 0.5).L1, Tri::undecided);
    EXPECT_THROW(ko_classify(power_profile(2.0), 1.0), DomainError);
}

TEST(PowerRange, Endpoints) {
    EXPECT_EQ(power_range(0.5, OperatorKind::restricted), std::make_pair(2.0, 3.0));
    EXPECT_EQ(power_range(0.5, OperatorKind::spectral), std::make_pair(1.5, 2.0));
    EXPECT_NEAR(power_range(1.0 - 1e-9, OperatorKind::restricted).first, 3.0, 1e-8);
    EXPECT_THROW(power_range(0.0, OperatorKind::restricted), DomainError);
}

TEST(Supersolution, BoundaryRate) {
    const double s = 0.5, p = 2.5;
    const auto prof = power_profile(p);
    std::vector<double> d, v;
    for (double x : log_grid(1e-6, 1e-3, 8)) {
        d.push_back(x);
        v.push_back(psi_eval(prof, std::pow(x, s)));
    }
    EXPECT_NEAR(oracle::loglog_slope(d, v), -2.0 * s / (p - 1.0), 0.05);
    const double u = supersolution_value(prof, s, unit_ball(2), Vec{0.5, 0.0}, {2.0, 3.0});
    EXPECT_NEAR(u, 2.0 * psi_eval(prof, std::pow(0.5, s)) + 3.0 * oracle::torsion_factor(2, s) * std::pow(0.75, s), 1e-10 * u);
}

TEST(Supersolution, RejectsNonIntegrableProfile) {
    const double s = 0.5;
    EXPECT_THROW(supersolution_value(power_profile(1.0 + 2.0 * s - 0.2), s, unit_ball(2), Vec{0.0, 0.0}), KOViolation);
    EXPECT_THROW(supersolution_value(power_profile(2.5), s, unit_ball(2), Vec{0.0, 0.0}, {0.5, 1.0}), DomainError);
}

TEST(Supersolution, OperatorBoundedBelowOnCollar) {
    const double s = 0.5, p = 2.5;
    const KernelParams kp{2, s};
    const auto prof = power_profile(p);
    // closed-form psi for the power profile keeps each evaluation cheap
    const double k = 2.0 / (1.0 - p), c = (p - 1.0) / (2.0 * std::sqrt(p + 1.0));
    const double tf = oracle::torsion_factor(2, s);
    ScalarField u;
    u.eval = [=](std::span<const double> x) {
        const double d = 1.0 - norm(x);
        if (d <= 0.0) return 0.0;
        return std::pow(c * std::pow(d, s), k) + tf * std::pow(1.0 - norm2(x), s);
    };
    u.kinks.push_back({Vec{0.0, 0.0}, 1.0});
    u.growth = Growth::compact;
    u.support = Sphere{Vec{0.0, 0.0}, 1.0};
    std::vector<double> ratio;
    for (double d : {0.1, 0.01}) {
        const Vec x{1.0 - d, 0.0};
        EXPECT_NEAR(u(x), supersolution_value(prof, s, unit_ball(2), x), 1e-9 * u(x));
        QuadConfig q;
        q.split_radius = 0.5 * d;
        ratio.push_back(frac_laplacian_pv(u, kp, x, q).value / prof.f(u(x)));
    }
    // (-Delta)^s u >= -C f(u) with one C for the whole collar
    for (double r : ratio) EXPECT_GT(r, -1.0);
    EXPECT_NEAR(ratio[1], ratio[0], 0.2 * std::abs(ratio[0]));
}

TEST(MonotoneIterate, AbsorptionWithBoundedDatumDecreases) {
    const KernelParams p{2, 0.5};
    const auto g = constant_field(1.0);
    const auto model = green_model(p, halving_deltas(0.9, 1e-3), {}, &g);
    IterateProblem prob;
    prob.f = [](double t) { return t * t; };
    // sup g = 1, up to the quadrature tolerance of the base solve
    const auto res = monotone_iterate_checked(prob, model, 6, [](double) { return 1.0 + 1e-8; });
    EXPECT_TRUE(res.monotone);
    ASSERT_TRUE(res.bounded_by.has_value());
    EXPECT_TRUE(*res.bounded_by);
    for (const auto& it : res.iterates)
        for (double v : it) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0 + 1e-8);
        }
    EXPECT_LT(res.iterates.back().front(), res.iterates.front().front());
}

TEST(MonotoneIterate, LinearProblemIsFixedAfterOneStep) {
    const KernelParams p{2, 0.5};
    const auto g = constant_field(2.0);
    const auto model = green_model(p, halving_deltas(0.9, 1e-2), {}, &g);
    IterateProblem prob;
    const auto res = monotone_iterate(prob, model, 4);
    for (std::size_t k = 1; k < res.iterates.size(); ++k) EXPECT_EQ(res.iterates[k], res.iterates[0]);
    for (double v : res.iterates[0]) EXPECT_NEAR(v, 2.0, 1e-4);
}

TEST(MonotoneIterate, SourceSchemeIncreases) {
    const KernelParams p{2, 0.5};
    const auto model = green_model(p, halving_deltas(0.9, 1e-2));
    IterateProblem prob;
    prob.sign = Sign::plus;
    prob.f = [](double t) { return 0.5 * t + 1.0; };
    const auto res = monotone_iterate_checked(prob, model, 8);
    EXPECT_TRUE(res.monotone);
    // linear growth below the first eigenvalue: the iterates converge
    const auto& a = res.iterates[res.iterates.size() - 2];
    const auto& b = res.iterates.back();
    EXPECT_NEAR(a[0], b[0], 0.02 * b[0]);
}

TEST(MonotoneIterate, LargeSolutionLadder) {
    const double s = 0.5;
    const KernelParams p{2, s};
    const auto range = power_range(s, OperatorKind::restricted);
    const auto prof = power_profile(0.5 * (range.first + range.second));
    const auto deltas = halving_deltas(0.9, 5e-4);
    const auto model = green_model(p, deltas, trace_weight(p, prof.f));
    IterateProblem prob;
    prob.f = prof.f;
    prob.fprime = prof.fprime;
    prob.levels = {1, 2, 3, 4, 5};
    const auto sup = [&](double r) { return supersolution_value(prof, s, unit_ball(2), Vec{r, 0.0}); };
    const auto res = monotone_iterate_checked(prob, model, 0, sup);
    EXPECT_TRUE(res.monotone);
    EXPECT_TRUE(*res.bounded_by);
    for (std::size_t k = 1; k < res.iterates.size(); ++k)
        for (std::size_t i = 0; i < deltas.size(); ++i) EXPECT_GE(res.iterates[k][i], res.iterates[k - 1][i]);
    // phi(u) >= c delta^s at the top level
    std::vector<double> d, ph;
    for (std::size_t i = deltas.size() - 6; i < deltas.size(); ++i) {
        d.push_back(deltas[i]);
        ph.push_back(phi_eval(prof, res.iterates.back()[i]));
    }
    EXPECT_GE(oracle::loglog_slope(d, ph), s - 0.05);
}

TEST(MonotoneIterate, FrozenPathLadderWithinStatisticalTolerance) {
    const double s = 0.5;
    const KernelParams p{2, s};
    const auto prof = power_profile(2.5);
    WalkConfig cfg;
    cfg.n_samples = 2000;
    const auto fp = std::make_shared<const FrozenPaths>(build_frozen_paths(p, {0.1, 0.5, 0.9, 0.95}, {}, cfg));
    const auto model = frozen_model(fp, trace_weight(p, prof.f));
    IterateProblem prob;
    prob.f = prof.f;
    prob.fprime = prof.fprime;
    prob.levels = {1, 2, 3};
    const auto res = monotone_iterate(prob, model, 0);
    EXPECT_TRUE(res.monotone);
    for (const auto& se : res.std_errors)
        for (double e : se) EXPECT_GT(e, 0.0);
}

TEST(MonotoneIterate, RejectsBadInput) {
    const KernelParams p{2, 0.5};
    const auto model = green_model(p, {0.5, 0.1, 0.01});
    IterateProblem prob;
    prob.f = [](double t) { return t * t; };
    EXPECT_THROW(monotone_iterate(prob, model, 0), DomainError);
    prob.levels = {1.0};
    EXPECT_THROW(monotone_iterate(prob, model, 0), DomainError);
    EXPECT_THROW(green_model(p, {0.1, 0.5}), DomainError);
}

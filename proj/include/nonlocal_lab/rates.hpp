#pragma once

#include "ball_solver.hpp"

namespace nonlocal_lab {

struct RateFit {
    double exponent = 0.0;
    bool log_factor = false;
    double r2 = 0.0;
    std::pair<double, double> window{0.0, 0.0};
    // (delta, value) pairs the fit was computed from
    std::vector<std::pair<double, double>> samples;
};

namespace detail {

struct LineFit {
    double intercept = 0.0, slope = 0.0, rss = 0.0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        f.rss += r * r;
    }
    return f;
}

}  // namespace detail

// Power model log v = a + e log d against v = d^e log(1/d) (unit log power).
// Both are scored on the same response, so the higher r2 is the smaller residual.
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& samples, bool allow_log) {
    if (samples.size() < 6) throw DomainError("fit_rate: need at least 6 samples");
    std::vector<double> lx, ly, ly_log;
    double dmin = 1.0, dmax = 0.0;
    for (const auto& [d, v] : samples) {
        if (!(d > 0.0 && d < 1.0)) throw DomainError("fit_rate: delta must lie in (0,1)");
        if (!(v > 0.0)) throw DomainError("fit_rate: values must be positive");
        lx.push_back(std::log(d));
        ly.push_back(std::log(v));
        ly_log.push_back(std::log(v) - std::log(std::log(1.0 / d)));
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    double my = 0.0;
    for (double v : ly) my += v;
    my /= static_cast<double>(ly.size());
    double tss = 0.0;
    for (double v : ly) tss += (v - my) * (v - my);
    auto r2_of = [&](double rss) { return tss > 0.0 ? std::max(0.0, 1.0 - rss / tss) : 1.0; };

    RateFit out;
    out.window = {dmin, dmax};
    out.samples = samples;
    const auto pw = detail::least_squares(lx, ly);
    out.exponent = pw.slope;
    out.r2 = r2_of(pw.rss);
    if (allow_log) {
        const auto lg = detail::least_squares(lx, ly_log);
        if (lg.rss < pw.rss) {
            out.exponent = lg.slope;
            out.log_factor = true;
            out.r2 = r2_of(lg.rss);
        }
    }
    return out;
}

struct RateMode {
    enum Kind { rhs, datum } kind = rhs;
    double beta = 0.1;
};

struct ExpectedRate {
    double exponent = 0.0;
    bool log_factor = false;
};

inline void validate_mode(const RateMode& m, double s) {
    if (m.kind == RateMode::rhs && !(m.beta > 0.0 && m.beta < 1.0 + s))
        throw DomainError("rate_experiment: rhs mode needs 0 < beta < 1+s");
    if (m.kind == RateMode::datum && !(m.beta > 0.0 && m.beta < 1.0 - s))
        throw DomainError("rate_experiment: datum mode needs 0 < beta < 1-s");
}

inline ExpectedRate expected_rate(const RateMode& m, double s) {
    validate_mode(m, s);
    if (m.kind == RateMode::datum) return {-m.beta, false};
    if (m.beta < s) return {s, false};
    if (m.beta == s) return {s, true};
    return {2.0 * s - m.beta, false};
}

// f in the ball and g outside it; a solver returns u at x.
struct RateProblem {
    Field f;
    ScalarField g;
    // unclipped radial source f(r, 1-r), used by deterministic solvers
    std::function<double(double, double)> f_radial;
};

using RateSolver = std::function<double(const KernelParams&, const RateProblem&, std::span<const double>)>;

inline RateSolver wos_rate_solver(WalkConfig cfg) {
    return [cfg](const KernelParams& p, const RateProblem& prob, std::span<const double> x) {
        auto dom = ball_domain(unit_ball(p.N), prob.g.eval);
        return wos_estimate(dom, prob.f, x, p, cfg).mean;
    };
}

inline RateSolver quadrature_rate_solver(BallQuad q = {}) {
    return [q](const KernelParams& p, const RateProblem& prob, std::span<const double> x) {
        if (prob.f) throw DomainError("quadrature_rate_solver: only exterior data are supported");
        return poisson_solve_ball(p, prob.g, x, q);
    };
}

// Deterministic rhs solver through the Green function of the ball.
inline RateSolver green_rate_solver(double tol = 1e-7) {
    return [tol](const KernelParams& p, const RateProblem& prob, std::span<const double> x) {
        if (!prob.f_radial) throw DomainError("green_rate_solver: needs a radial source");
        return green_solve_ball_radial(p, prob.f_radial, x, tol).value;
    };
}

inline std::vector<double> geometric_grid(double hi, double lo, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(hi * std::pow(lo / hi, static_cast<double>(i) / (n - 1)));
    return g;
}

inline std::vector<double> default_delta_grid() { return geometric_grid(0.2, 0.002, 10); }

inline RateProblem rate_problem(const RateMode& m, const KernelParams& p, double clip) {
    validate_mode(m, p.s);
    RateProblem prob;
    const double beta = m.beta;
    if (m.kind == RateMode::rhs) {
        prob.f = [beta, clip](std::span<const double> y) {
            const double d = std::max(1.0 - norm(y), clip);
            return std::pow(d, -beta);
        };
        prob.g = constant_field(0.0);
        prob.f_radial = [beta](double, double d) { return std::pow(d, -beta); };
    } else {
        prob.g.eval = [beta](std::span<const double> y) {
            const double d = norm(y) - 1.0;
            return d > 0.0 ? std::pow(d, -beta) : 0.0;
        };
        prob.g.radial = [beta](double, double d) { return d > 0.0 ? std::pow(d, -beta) : 0.0; };
        prob.g.growth = Growth::integrable;
        prob.g.kinks.push_back({Vec(static_cast<std::size_t>(p.N), 0.0), 1.0});
    }
    return prob;
}

// The rhs source is clipped below grid minimum * 1e-4.
inline RateFit rate_experiment(const RateMode& m, const KernelParams& p, const RateSolver& solver,
                               const std::vector<double>& grid = default_delta_grid()) {
    p.validate();
    validate_mode(m, p.s);
    if (grid.size() < 6) throw DomainError("rate_experiment: need at least 6 grid points");
    double dmin = 1.0;
    for (double d : grid) {
        if (!(d > 0.0 && d < 1.0)) throw DomainError("rate_experiment: grid must lie in (0,1)");
        dmin = std::min(dmin, d);
    }
    const auto prob = rate_problem(m, p, dmin * 1e-4);
    std::vector<std::pair<double, double>> samples;
    for (double d : grid) {
        Vec x(static_cast<std::size_t>(p.N), 0.0);
        x[0] = 1.0 - d;
        samples.emplace_back(d, solver(p, prob, x));
    }
    return fit_rate(samples, m.kind == RateMode::rhs);
}

}  // namespace nonlocal_lab

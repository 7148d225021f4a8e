#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "common.hpp"

namespace nonlocal_lab {

struct QuadValue {
    double value = 0.0;
    double err = 0.0;
};

namespace detail {

// One integrator per nesting level; instances are cheap to share read-only but
// building them is not.
inline boost::math::quadrature::tanh_sinh<double>& tanh_sinh_level(int level) {
    thread_local std::vector<std::unique_ptr<boost::math::quadrature::tanh_sinh<double>>> pool;
    while (static_cast<int>(pool.size()) <= level)
        pool.push_back(std::make_unique<boost::math::quadrature::tanh_sinh<double>>(12));
    return *pool[static_cast<std::size_t>(level)];
}

}  // namespace detail

// Integrates g(x, x - a, b - x) over [a, b]. Nodes whose distance to an
// endpoint is below the floating point resolution of the interval are dropped,
// unless exact_distances is set (g then relies only on the distances it is given).
template <class G>
QuadValue integrate_segment(G&& g, double a, double b, double tol, int level = 0, bool exact_distances = false) {
    if (!(b > a)) return {};
    const double floor_d = exact_distances ? std::numeric_limits<double>::min()
                                           : 64.0 * std::numeric_limits<double>::epsilon() *
                                                 std::max({1.0, std::abs(a), std::abs(b)});
    const double len = b - a;
    auto f = [&](double x, double xc) -> double {
        double dl, dr;
        if (xc < 0) {
            dl = -xc;
            dr = len - dl;
        } else if (xc > 0) {
            dr = xc;
            dl = len - dr;
        } else {
            dl = x - a;
            dr = b - x;
        }
        if (dl < floor_d || dr < floor_d) return 0.0;
        double r = g(a + dl, dl, dr);
        return std::isfinite(r) ? r : 0.0;
    };
    QuadValue out;
    double l1 = 0.0;
    try {
        out.value = detail::tanh_sinh_level(level).integrate(f, a, b, tol, &out.err, &l1);
    } catch (const std::exception& e) {
        throw ConvergenceError(std::string("segment quadrature failed: ") + e.what(), 0.0,
                               std::numeric_limits<double>::infinity());
    }
    return out;
}

// Integrates g(x, x - a) over [a, inf) through x = a + L w / (1 - w).
template <class G>
QuadValue integrate_tail(G&& g, double a, double L, double tol, int level = 0) {
    auto h = [&](double w, double dw, double dr) -> double {
        // dw = w, dr = 1 - w, both accurate
        const double off = L * dw / dr;
        if (!std::isfinite(off)) return 0.0;
        return g(a + off, off) * L / (dr * dr);
    };
    return integrate_segment(h, 0.0, 1.0, tol, level);
}

// Integrates g(x) over [a, inf) for g ~ x^{-1-alpha} through x = a u^{-1/alpha},
// which leaves a bounded integrand on (0, 1].
template <class G>
QuadValue integrate_power_tail(G&& g, double a, double alpha, double tol, int level = 0) {
    if (!(a > 0.0 && alpha > 0.0)) throw DomainError("integrate_power_tail: need a > 0 and alpha > 0");
    auto h = [&](double u, double, double) -> double {
        const double x = a * std::pow(u, -1.0 / alpha);
        if (!std::isfinite(x)) return 0.0;
        return g(x) * x / (alpha * u);
    };
    return integrate_segment(h, 0.0, 1.0, tol, level);
}

// Gauss-Kronrod 15 on a panel, error = |K15 - G7|.
template <class F>
QuadValue gk15(F&& f, double a, double b) {
    QuadValue out;
    out.value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &out.err);
    // with no subdivision Boost reports the error on the reference interval
    out.err *= 0.5 * std::abs(b - a);
    return out;
}

// Fixed tanh-sinh rule on [a, b] with step h; dl, dr are the exact distances
// of each node to the endpoints.
struct RuleNode {
    double x, dl, dr, w;
};

inline std::vector<RuleNode> tanh_sinh_rule(double a, double b, double h, double t_max = 5.0) {
    std::vector<RuleNode> out;
    const double half = 0.5 * (b - a);
    const int K = static_cast<int>(std::floor(t_max / h));
    for (int k = -K; k <= K; ++k) {
        const double t = k * h;
        const double u = 0.5 * pi * std::sinh(t);
        const double cu = std::cosh(u);
        const double w = half * h * 0.5 * pi * std::cosh(t) / (cu * cu);
        // 1 + tanh(u) and 1 - tanh(u) without cancellation
        const double lp = 2.0 / (1.0 + std::exp(-2.0 * u));
        const double lm = 2.0 / (1.0 + std::exp(2.0 * u));
        const double dl = half * lp, dr = half * lm;
        if (dl <= 0.0 || dr <= 0.0 || w == 0.0) continue;
        out.push_back({t <= 0 ? a + dl : b - dr, dl, dr, w});
    }
    return out;
}

// Orthonormal completion of a unit axis (used for spherical frames).
inline std::vector<Vec> orthonormal_frame(std::span<const double> axis) {
    const std::size_t n = axis.size();
    std::vector<Vec> frame;
    frame.emplace_back(axis.begin(), axis.end());
    for (std::size_t k = 0; k < n && frame.size() < n; ++k) {
        Vec v(n, 0.0);
        v[k] = 1.0;
        for (const auto& f : frame) {
            double c = dot(v, f);
            for (std::size_t i = 0; i < n; ++i) v[i] -= c * f[i];
        }
        double nv = norm(v);
        if (nv < 1e-8) continue;
        for (auto& vi : v) vi /= nv;
        frame.push_back(std::move(v));
    }
    return frame;
}

struct SphereRule {
    double tol = 1e-9;
    int n_azimuth = 48;
};

// Integral of F(omega) over S^{N-1} for N in {1,2,3}. The polar angle is measured
// from `axis`; `breaks` are polar angles in (0, pi) where F may be non-smooth.
// With `even` set, F(-omega) = F(omega) is assumed and half the sphere is used.
template <class F>
QuadValue integrate_sphere(int N, std::span<const double> axis, std::vector<double> breaks, F&& f,
                           const SphereRule& rule, bool even = false, int level = 1) {
    if (N == 1) {
        Vec w(axis.begin(), axis.end());
        double a = f(std::span<const double>(w));
        if (even) return {2.0 * a, 0.0};
        w[0] = -w[0];
        return {a + f(std::span<const double>(w)), 0.0};
    }
    if (N > 3) throw DomainError("sphere quadrature supports N <= 3");
    auto frame = orthonormal_frame(axis);
    const double top = (even && N == 3) ? 0.5 * pi : pi;
    std::vector<double> cuts{0.0};
    std::sort(breaks.begin(), breaks.end());
    for (double b : breaks)
        if (b > 1e-12 && b < top - 1e-12) cuts.push_back(b);
    cuts.push_back(top);

    Vec w(static_cast<std::size_t>(N));
    QuadValue total;
    if (N == 2) {
        auto at = [&](double th) {
            for (int i = 0; i < 2; ++i) w[i] = std::cos(th) * frame[0][i] + std::sin(th) * frame[1][i];
            return f(std::span<const double>(w));
        };
        for (int side = 0; side < (even ? 1 : 2); ++side) {
            const double sgn = side == 0 ? 1.0 : -1.0;
            for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
                auto r = integrate_segment([&](double th, double, double) { return at(sgn * th); }, cuts[k],
                                           cuts[k + 1], rule.tol, level);
                total.value += r.value;
                total.err += r.err;
            }
        }
        if (even) {
            // [0, pi] covers half the circle
            total.value *= 2.0;
            total.err *= 2.0;
        }
        return total;
    }
    const int m = rule.n_azimuth;
    auto ring = [&](double ph) {
        double acc = 0.0;
        const double c = std::cos(ph), sn = std::sin(ph);
        for (int j = 0; j < m; ++j) {
            const double ps = 2.0 * pi * j / m;
            for (int i = 0; i < 3; ++i)
                w[i] = c * frame[0][i] + sn * (std::cos(ps) * frame[1][i] + std::sin(ps) * frame[2][i]);
            acc += f(std::span<const double>(w));
        }
        return acc * (2.0 * pi / m) * sn;
    };
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        auto r = integrate_segment([&](double ph, double, double) { return ring(ph); }, cuts[k], cuts[k + 1],
                                   rule.tol, level);
        total.value += r.value;
        total.err += r.err;
    }
    if (even) {
        total.value *= 2.0;
        total.err *= 2.0;
    }
    return total;
}

}  // namespace nonlocal_lab

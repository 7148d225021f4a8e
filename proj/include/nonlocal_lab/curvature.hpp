#pragma once

#include <optional>

#include <boost/math/special_functions/beta.hpp>

#include "quadrature.hpp"

namespace nonlocal_lab {

struct ConstructionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Subgraph {x_N <= f(x')} with f(0) = 0 and grad f(0) = 0.
struct GraphSurface {
    int N = 3;
    std::function<double(std::span<const double>)> f;
    std::optional<std::vector<std::vector<double>>> hessian0;
    // length scale of the surface features; quadrature breaks sit at its multiples
    double support_radius = 1.0;
    // extra radii where f(rho e) is not smooth
    std::vector<double> breaks;

    void validate() const {
        if (N < 3) throw DomainError("GraphSurface: need N >= 3");
        if (!f) throw DomainError("GraphSurface: f is empty");
        if (!(support_radius > 0.0)) throw DomainError("GraphSurface: need support_radius > 0");
        const std::size_t n = static_cast<std::size_t>(N - 1);
        Vec z(n, 0.0);
        if (!(std::abs(f(z)) <= 1e-10)) throw DomainError("GraphSurface: f(0) must vanish");
        const double h = 1e-4;
        for (std::size_t k = 0; k < n; ++k) {
            Vec p(n, 0.0), m(n, 0.0);
            p[k] = h;
            m[k] = -h;
            if (!(std::abs(f(p) - f(m)) / (2.0 * h) <= 1e-6)) throw DomainError("GraphSurface: grad f(0) must vanish");
        }
        if (hessian0) {
            if (hessian0->size() != n) throw DomainError("GraphSurface: hessian has the wrong size");
            for (std::size_t i = 0; i < n; ++i) {
                if ((*hessian0)[i].size() != n) throw DomainError("GraphSurface: hessian has the wrong size");
                for (std::size_t j = 0; j < i; ++j)
                    if (std::abs((*hessian0)[i][j] - (*hessian0)[j][i]) > 1e-12)
                        throw DomainError("GraphSurface: hessian must be symmetric");
            }
        }
    }

    // <D^2 f(0) e, e>
    double hessian_form(std::span<const double> e) const {
        if (hessian0) {
            double acc = 0.0;
            for (std::size_t i = 0; i < e.size(); ++i)
                for (std::size_t j = 0; j < e.size(); ++j) acc += (*hessian0)[i][j] * e[i] * e[j];
            return acc;
        }
        const double h = 1e-3 * support_radius;
        Vec p(e.begin(), e.end()), m(e.begin(), e.end());
        for (std::size_t i = 0; i < e.size(); ++i) {
            p[i] *= h;
            m[i] *= -h;
        }
        Vec z(e.size(), 0.0);
        return (f(p) + f(m) - 2.0 * f(z)) / (h * h);
    }
};

inline GraphSurface paraboloid_surface(int N = 3, double c = 1.0) {
    GraphSurface g;
    g.N = N;
    g.f = [c](std::span<const double> x) { return 0.5 * c * norm2(x); };
    std::vector<std::vector<double>> H(static_cast<std::size_t>(N - 1), std::vector<double>(static_cast<std::size_t>(N - 1), 0.0));
    for (std::size_t i = 0; i < H.size(); ++i) H[i][i] = c;
    g.hessian0 = H;
    return g;
}

inline GraphSurface saddle_surface() {
    GraphSurface g;
    g.f = [](std::span<const double> x) { return 0.5 * (x[0] * x[0] - x[1] * x[1]); };
    g.hessian0 = std::vector<std::vector<double>>{{1.0, 0.0}, {0.0, -1.0}};
    return g;
}

// f = 8 x^2 y^2
inline GraphSurface es2_surface() {
    GraphSurface g;
    g.f = [](std::span<const double> x) { return 8.0 * x[0] * x[0] * x[1] * x[1]; };
    g.hessian0 = std::vector<std::vector<double>>{{0.0, 0.0}, {0.0, 0.0}};
    return g;
}

inline GraphSurface flat_surface(int N = 3) {
    GraphSurface g;
    g.N = N;
    g.f = [](std::span<const double>) { return 0.0; };
    return g;
}

struct CurvatureQuad {
    double tol = 1e-11;
};

namespace detail {

inline void check_curvature_s(double s) {
    if (!(s > 0.0 && s < 0.5)) throw DomainError("curvature: s must lie in (0, 1/2)");
}

// F(t) = int_0^t (1 + tau^2)^{-a} d tau, odd in t.
inline double slab_antiderivative(double t, double a) {
    if (t == 0.0) return 0.0;
    const double at = std::abs(t);
    double v;
    if (std::isinf(at)) {
        v = 0.5 * boost::math::beta(0.5, a - 0.5);
    } else {
        const double x = at * at / (1.0 + at * at);
        v = x > 0.5 ? 0.5 * (boost::math::beta(0.5, a - 0.5) - boost::math::betac(0.5, a - 0.5, x))
                    : 0.5 * boost::math::beta(0.5, a - 0.5, x);
    }
    return t < 0.0 ? -v : v;
}

// int_0^inf 2 rho^{-1-2s} F(q(rho)) d rho where q = f(rho e)/rho ~ D rho at 0.
// The linear part D rho is integrated exactly on [0, rho0].
template <class Q>
QuadValue curvature_integral(Q&& q, double a, double s, double D, double rho0, std::vector<double> breaks,
                             double tol, double eps = 0.0) {
    std::vector<double> cuts{eps};
    std::sort(breaks.begin(), breaks.end());
    for (double b : breaks)
        if (b > eps) cuts.push_back(b);
    if (rho0 > eps) cuts.push_back(rho0);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    const double eta = cuts.back();
    QuadValue out;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const bool sub = cuts[k + 1] <= rho0 && eps == 0.0;
        auto r = integrate_segment(
            [&](double rho, double, double) {
                double v = slab_antiderivative(q(rho), a);
                if (sub) v -= D * rho;
                return 2.0 * std::pow(rho, -1.0 - 2.0 * s) * v;
            },
            cuts[k], cuts[k + 1], tol, 1, true);
        out.value += r.value;
        out.err += r.err;
    }
    if (eps == 0.0) out.value += 2.0 * D * std::pow(rho0, 1.0 - 2.0 * s) / (1.0 - 2.0 * s);
    auto t = integrate_power_tail(
        [&](double rho) { return 2.0 * std::pow(rho, -1.0 - 2.0 * s) * slab_antiderivative(q(rho), a); }, eta,
        2.0 * s, tol, 1);
    out.value += t.value;
    out.err += t.err;
    return out;
}

inline Vec unit_or_throw(std::span<const double> e, int N) {
    if (static_cast<int>(e.size()) != N - 1) throw DomainError("curvature: direction has the wrong dimension");
    const double n = norm(e);
    if (!(std::abs(n - 1.0) < 1e-9)) throw DomainError("curvature: direction must be a unit vector");
    return Vec(e.begin(), e.end());
}

}  // namespace detail

// K_{s,e} = 2 int_0^inf rho^{N-2} int_0^{f(rho e)} (rho^2 + h^2)^{-s-N/2} dh d rho
inline QuadValue directional_curvature(const GraphSurface& g, std::span<const double> e, double s,
                                       const CurvatureQuad& quad = {}) {
    detail::check_curvature_s(s);
    g.validate();
    const Vec u = detail::unit_or_throw(e, g.N);
    const double a = s + 0.5 * g.N;
    const double D = 0.5 * g.hessian_form(u);
    Vec y(u.size());
    auto q = [&](double rho) {
        for (std::size_t i = 0; i < u.size(); ++i) y[i] = rho * u[i];
        return g.f(y) / rho;
    };
    std::vector<double> breaks = g.breaks;
    const double R = g.support_radius;
    for (double m : {0.5, 1.0, 2.0, 4.0}) breaks.push_back(m * R);
    return detail::curvature_integral(q, a, s, D, R, breaks, quad.tol);
}

// Same integral restricted to |y| > eps in the half-plane.
inline QuadValue directional_curvature_truncated(const GraphSurface& g, std::span<const double> e, double s,
                                                 double eps, const CurvatureQuad& quad = {}) {
    detail::check_curvature_s(s);
    g.validate();
    if (!(eps > 0.0)) throw DomainError("directional_curvature_truncated: need eps > 0");
    const Vec u = detail::unit_or_throw(e, g.N);
    const double a = s + 0.5 * g.N;
    Vec y(u.size());
    auto fr = [&](double rho) {
        for (std::size_t i = 0; i < u.size(); ++i) y[i] = rho * u[i];
        return g.f(y);
    };
    // inside the ball only |h| > sqrt(eps^2 - rho^2) counts
    QuadValue inner = integrate_segment(
        [&](double rho, double, double) {
            const double fv = fr(rho);
            const double hmin = std::sqrt(std::max(eps * eps - rho * rho, 0.0));
            if (std::abs(fv) <= hmin) return 0.0;
            const double sg = fv > 0.0 ? 1.0 : -1.0;
            const double v = detail::slab_antiderivative(std::abs(fv) / rho, a) - detail::slab_antiderivative(hmin / rho, a);
            return 2.0 * sg * std::pow(rho, -1.0 - 2.0 * s) * v;
        },
        0.0, eps, quad.tol, 1, true);
    std::vector<double> breaks = g.breaks;
    for (double m : {0.5, 1.0, 2.0, 4.0}) breaks.push_back(m * g.support_radius);
    auto outer = detail::curvature_integral([&](double rho) { return fr(rho) / rho; }, a, s, 0.0, 0.0, breaks,
                                            quad.tol, eps);
    return {inner.value + outer.value, inner.err + outer.err};
}

// Spherical average over n_dirs equally spaced directions of S^1 (N = 3).
inline QuadValue mean_curvature_avg(const GraphSurface& g, double s, int n_dirs = 64, const CurvatureQuad& quad = {}) {
    detail::check_curvature_s(s);
    if (g.N != 3) throw DomainError("mean_curvature_avg: supported for N = 3");
    if (n_dirs < 4) throw DomainError("mean_curvature_avg: need n_dirs >= 4");
    std::vector<QuadValue> ks(static_cast<std::size_t>(n_dirs));
    parallel_for(ks.size(), [&](std::size_t k) {
        const double th = 2.0 * pi * static_cast<double>(k) / n_dirs;
        const Vec e{std::cos(th), std::sin(th)};
        ks[k] = directional_curvature(g, e, s, quad);
    });
    QuadValue out;
    for (const auto& k : ks) {
        out.value += k.value;
        out.err += k.err;
    }
    out.value /= n_dirs;
    out.err /= n_dirs;
    return out;
}

// Average over S^1 by adaptive quadrature between angle breaks; for surfaces
// whose K_{s,e} has cusps (directions where f vanishes along a ray).
inline QuadValue mean_curvature_avg_adaptive(const GraphSurface& g, double s, std::vector<double> angle_breaks,
                                             const CurvatureQuad& quad = {}, double tol = 1e-9) {
    detail::check_curvature_s(s);
    if (g.N != 3) throw DomainError("mean_curvature_avg_adaptive: supported for N = 3");
    std::vector<double> cuts{0.0};
    for (double b : angle_breaks)
        if (b > 0.0 && b < 2.0 * pi) cuts.push_back(b);
    cuts.push_back(2.0 * pi);
    std::sort(cuts.begin(), cuts.end());
    QuadValue out;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        auto r = integrate_segment(
            [&](double th, double, double) {
                const Vec e{std::cos(th), std::sin(th)};
                return directional_curvature(g, e, s, quad).value;
            },
            cuts[k], cuts[k + 1], tol, 0);
        out.value += r.value;
        out.err += r.err;
    }
    out.value /= 2.0 * pi;
    out.err /= 2.0 * pi;
    return out;
}

struct PVConfig {
    double tol = 1e-9;
    // polar angle breaks in [0, 2 pi)
    std::vector<double> angle_breaks;
};

// (1/omega_{N-2}) PV int chi~_E(x) |x|^{-N-2s} dx for N = 3: the odd part of
// chi~ outside the slab |h| <= |f| cancels, the slab integrates in h in closed
// form and the far field goes through a mapped radial variable.
inline QuadValue mean_curvature_pv(const GraphSurface& g, double s, const PVConfig& cfg = {}) {
    detail::check_curvature_s(s);
    g.validate();
    if (g.N != 3) throw DomainError("mean_curvature_pv: supported for N = 3");
    const double a = s + 1.5;
    // int_0^|f| (rho^2 + h^2)^{-a} dh in closed form
    auto slab = [&](double rho, double fv) {
        if (fv == 0.0) return 0.0;
        const double v = std::pow(rho, 1.0 - 2.0 * a) * detail::slab_antiderivative(std::abs(fv) / rho, a);
        return (fv > 0.0 ? 2.0 : -2.0) * rho * v;
    };
    const double R = g.support_radius;
    std::vector<double> cuts{0.0};
    for (double b : cfg.angle_breaks)
        if (b > 0.0 && b < 2.0 * pi) cuts.push_back(b);
    cuts.push_back(2.0 * pi);
    std::sort(cuts.begin(), cuts.end());
    QuadValue total;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        auto r = integrate_segment(
            [&](double th, double, double) {
                const double c = std::cos(th), sn = std::sin(th);
                Vec y(2);
                auto fr = [&](double rho) {
                    y[0] = rho * c;
                    y[1] = rho * sn;
                    return g.f(y);
                };
                std::vector<double> rc{0.0};
                for (double m : {0.5, 1.0, 2.0, 4.0}) rc.push_back(m * R);
                for (double b : g.breaks) rc.push_back(b);
                std::sort(rc.begin(), rc.end());
                rc.erase(std::unique(rc.begin(), rc.end()), rc.end());
                double acc = 0.0;
                for (std::size_t j = 0; j + 1 < rc.size(); ++j)
                    acc += integrate_segment([&](double rho, double, double) { return slab(rho, fr(rho)); }, rc[j],
                                             rc[j + 1], cfg.tol, 2, true)
                               .value;
                acc += integrate_power_tail([&](double rho) { return slab(rho, fr(rho)); }, rc.back(), 2.0 * s,
                                            cfg.tol, 2)
                           .value;
                return acc;
            },
            cuts[k], cuts[k + 1], cfg.tol, 1);
        total.value += r.value;
        total.err += r.err;
    }
    total.value /= 2.0 * pi;
    total.err /= 2.0 * pi;
    return total;
}

// 2 int_0^inf rho^{-1-2s} F(phi(rho)/rho) d rho for f(rho e) = phi(rho).
inline QuadValue radial_curvature(const std::function<double(double)>& phi, double s, int N,
                                  const CurvatureQuad& quad = {}, double scale = 1.0) {
    detail::check_curvature_s(s);
    if (N < 3) throw DomainError("radial_curvature: need N >= 3");
    const double a = s + 0.5 * N;
    const double h = 1e-3 * scale;
    const double D = (phi(h) - phi(0.0)) / (h * h);
    const double lead = phi(1e-6 * scale) / (1e-6 * scale);
    if (!(std::abs(lead) <= 1e-3 * std::max(1.0, std::abs(D))))
        throw DomainError("radial_curvature: phi(rho)/rho must vanish at 0");
    std::vector<double> breaks;
    for (double m : {0.5, 1.0, 2.0, 4.0}) breaks.push_back(m * scale);
    return detail::curvature_integral([&](double rho) { return phi(rho) / rho; }, a, s, D, scale, breaks, quad.tol);
}

// Directional curvature of z = 8 x^2 y^2 in direction (cos th, sin th) from the
// z-first reduction; z = w^2 removes the singularity at 0.
inline QuadValue es2_curvature(double theta, double s, double tol = 1e-11) {
    detail::check_curvature_s(s);
    const double c = 1.0 - std::cos(4.0 * theta);
    if (c == 0.0) return {0.0, 0.0};
    const double sc = std::sqrt(c);
    const double num = std::pow(c, 0.5 * s + 0.25);
    auto g = [&](double w) { return 2.0 * w * num / std::pow(w * w * w * w * sc + w, s + 0.5); };
    const double ws = std::pow(sc, -1.0 / 3.0);
    QuadValue out;
    std::vector<double> cuts{0.0};
    for (double m : {1e-4, 1e-2, 0.25, 1.0}) cuts.push_back(m * ws);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        auto r = integrate_segment([&](double w, double, double) { return g(w); }, cuts[k], cuts[k + 1], tol, 1, true);
        out.value += r.value;
        out.err += r.err;
    }
    auto t = integrate_power_tail(g, ws, 4.0 * s, tol, 1);
    out.value += t.value;
    out.err += t.err;
    const double pre = 2.0 / (2.0 * s + 1.0);
    return {pre * out.value, pre * out.err};
}

struct SweepResult {
    std::vector<std::pair<double, double>> points;  // (s, (1-2s) K)
    double target = 0.0;
    std::vector<double> deviations;
    bool contract_ok = false;
};

// Deviations must not increase over the last three values; when s reaches
// 0.499 the last deviation must be below 0.05.
inline SweepResult asymptotic_sweep(const GraphSurface& g, std::span<const double> e, const std::vector<double>& s_list,
                                    const CurvatureQuad& quad = {}) {
    if (s_list.empty()) throw DomainError("asymptotic_sweep: empty s list");
    for (std::size_t i = 0; i < s_list.size(); ++i) {
        detail::check_curvature_s(s_list[i]);
        if (i > 0 && !(s_list[i] > s_list[i - 1])) throw DomainError("asymptotic_sweep: s list must increase");
    }
    SweepResult r;
    r.target = g.hessian_form(detail::unit_or_throw(e, g.N));
    for (double s : s_list) {
        const double v = (1.0 - 2.0 * s) * directional_curvature(g, e, s, quad).value;
        r.points.emplace_back(s, v);
        r.deviations.push_back(std::abs(v - r.target));
    }
    r.contract_ok = true;
    const std::size_t n = r.deviations.size();
    for (std::size_t i = n >= 3 ? n - 2 : 1; i < n; ++i)
        if (r.deviations[i] > r.deviations[i - 1] + 1e-12) r.contract_ok = false;
    if (s_list.back() >= 0.499 && !(r.deviations.back() < 0.05)) r.contract_ok = false;
    return r;
}

// Closed subsets of S^1 as unions of arcs [from, to] (counterclockwise, radians).
struct ArcSet {
    std::vector<std::pair<double, double>> arcs;

    bool contains(double th, double slack = 1e-12) const {
        for (const auto& [a, b] : arcs) {
            const double w = std::fmod(std::fmod(b - a, 2.0 * pi) + 2.0 * pi, 2.0 * pi);
            const double t = std::fmod(std::fmod(th - a, 2.0 * pi) + 2.0 * pi, 2.0 * pi);
            if (t <= w + slack || t >= 2.0 * pi - slack) return true;
        }
        return false;
    }
};

inline std::function<double(double)> default_bump() {
    return [](double r) {
        r = std::abs(r);
        if (!(r > 1.0 && r < 2.0)) return 0.0;
        return std::exp(4.0 - 1.0 / ((r - 1.0) * (2.0 - r)));
    };
}

struct PrescribedResult {
    GraphSurface surface;
    std::function<double(double)> a;
    std::vector<double> directions;
    std::vector<double> curvatures;
    double k_minus = 0.0, k_plus = 0.0;
    bool verified = false;
};

namespace detail {

// Smooth, nonnegative and zero exactly on the arc set: for an arc with centre
// c and half-width w, cos w - cos(th - c) is positive exactly off the arc.
inline double arc_vanishing(const ArcSet& S, double th, double eps = 1e-2) {
    double g = 1.0;
    for (const auto& [a, b] : S.arcs) {
        const double w = 0.5 * std::fmod(std::fmod(b - a, 2.0 * pi) + 2.0 * pi, 2.0 * pi);
        const double c = a + w;
        const double u = std::cos(w) - std::cos(th - c);
        g *= u > 0.0 ? std::exp(-eps / u) : 0.0;
    }
    return g;
}

}  // namespace detail

// f(x') = a(e) phi(|x'|) with a = g- / (g- + g+); the ordering is checked at
// n_test directions spaced `margin` away from both sets.
inline PrescribedResult prescribed_extrema(const ArcSet& minus, const ArcSet& plus, double s,
                                           std::function<double(double)> phi = default_bump(), int n_test = 16,
                                           double margin = 0.05, const CurvatureQuad& quad = {}) {
    detail::check_curvature_s(s);
    if (minus.arcs.empty() || plus.arcs.empty()) throw DomainError("prescribed_extrema: both sets must be nonempty");
    for (int k = 0; k < 3600; ++k) {
        const double th = 2.0 * pi * k / 3600.0;
        if (minus.contains(th) && plus.contains(th)) throw DomainError("prescribed_extrema: sets must be disjoint");
    }
    for (const auto& arc : minus.arcs)
        if (plus.contains(arc.first) || plus.contains(arc.second))
            throw DomainError("prescribed_extrema: sets must be disjoint");
    for (const auto& arc : plus.arcs)
        if (minus.contains(arc.first) || minus.contains(arc.second))
            throw DomainError("prescribed_extrema: sets must be disjoint");

    PrescribedResult out;
    out.a = [minus, plus](double th) {
        const double gm = detail::arc_vanishing(minus, th), gp = detail::arc_vanishing(plus, th);
        const double den = gm + gp;
        if (!(den > 0.0)) throw ConstructionError("prescribed_extrema: interpolant denominator vanished");
        return gm / den;
    };
    for (int k = 0; k < 720; ++k) {
        const double th = 2.0 * pi * k / 720.0;
        const double v = out.a(th);
        if (!(v >= 0.0 && v <= 1.0)) throw ConstructionError("prescribed_extrema: interpolant left [0,1]");
    }
    auto af = out.a;
    out.surface.N = 3;
    out.surface.support_radius = 1.0;
    out.surface.breaks = {1.0, 1.5, 2.0};
    out.surface.hessian0 = std::vector<std::vector<double>>{{0.0, 0.0}, {0.0, 0.0}};
    out.surface.f = [af, phi](std::span<const double> x) {
        const double r = norm(x);
        if (r == 0.0) return 0.0;
        const double p = phi(r);
        return p == 0.0 ? 0.0 : af(std::atan2(x[1], x[0])) * p;
    };
    auto K = [&](double th) {
        const Vec e{std::cos(th), std::sin(th)};
        return directional_curvature(out.surface, e, s, quad).value;
    };
    const double tm = minus.arcs.front().first, tp = plus.arcs.front().first;
    out.k_minus = K(tm);
    out.k_plus = K(tp);
    // n_test directions spread over the part of a fine grid outside the margin
    std::vector<double> free;
    for (int k = 0; k < 720; ++k) {
        const double th = 2.0 * pi * (k + 0.5) / 720.0;
        if (!minus.contains(th, margin) && !plus.contains(th, margin)) free.push_back(th);
    }
    if (static_cast<int>(free.size()) < n_test)
        throw ConstructionError("prescribed_extrema: not enough directions outside the margin");
    for (int i = 0; i < n_test; ++i)
        out.directions.push_back(free[static_cast<std::size_t>(i) * free.size() / static_cast<std::size_t>(n_test)]);
    out.curvatures.resize(out.directions.size());
    parallel_for(out.directions.size(), [&](std::size_t i) { out.curvatures[i] = K(out.directions[i]); });
    out.verified = true;
    for (double k : out.curvatures)
        if (!(k > out.k_minus + 1e-6 && k < out.k_plus - 1e-6)) out.verified = false;
    return out;
}

}  // namespace nonlocal_lab

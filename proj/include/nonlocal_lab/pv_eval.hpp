#pragma once

#include <limits>
#include <optional>

#include <boost/math/quadrature/gauss.hpp>

#include "kernels.hpp"
#include "quadrature.hpp"

namespace nonlocal_lab {

enum class Growth { bounded, integrable, compact };

struct Sphere {
    Vec center;
    double radius = 1.0;
};

struct ScalarField {
    std::function<double(std::span<const double>)> eval;
    double c2_radius = std::numeric_limits<double>::infinity();
    Growth growth = Growth::bounded;
    // sup |u|; only used for the truncation bound of the integrable class
    double sup_bound = std::numeric_limits<double>::infinity();
    // support ball of compactly supported fields
    std::optional<Sphere> support;
    // spheres across which the field is not smooth
    std::vector<Sphere> kinks;
    // optional radial profile u(r) taking d = r - 1 as well, for fields singular at the unit sphere
    std::function<double(double, double)> radial;

    double operator()(std::span<const double> x) const { return eval(x); }
};

struct QuadConfig {
    double split_radius = 0.05;
    int near_order = 12;
    double far_radius = 1e4;
    double abs_tol = 1e-12;
    double rel_tol = 1e-9;
    int n_azimuth = 48;
};

struct PVResult {
    double value = 0.0;
    double err_est = 0.0;
};

namespace detail {

// Positive ray parameters where x + t*w crosses the sphere.
inline void ray_crossings(std::span<const double> x, std::span<const double> w, const Sphere& sp, Vec& out) {
    const Vec d = sub(x, sp.center);
    const double b = dot(d, w);
    const double q = norm2(d) - sp.radius * sp.radius;
    const double disc = b * b - q;
    if (disc <= 0.0) return;
    const double sq = std::sqrt(disc);
    // stable pair of roots of t^2 + 2bt + q
    const double t1 = (b > 0) ? -(b + sq) : (-b + sq);
    const double t2 = (t1 != 0.0) ? q / t1 : -b - sq;
    if (t1 > 0) out.push_back(t1);
    if (t2 > 0) out.push_back(t2);
}

inline double distance_to_sphere(std::span<const double> x, const Sphere& sp) {
    return std::abs(norm(sub(x, sp.center)) - sp.radius);
}

// Polar axis and tangency angles for the first kink (or support) sphere.
inline std::pair<Vec, std::vector<double>> polar_frame(std::span<const double> x, const ScalarField& u) {
    const std::size_t n = x.size();
    Vec axis(n, 0.0);
    axis[n - 1] = 1.0;
    std::vector<double> breaks;
    const Sphere* ref = nullptr;
    if (!u.kinks.empty())
        ref = &u.kinks.front();
    else if (u.support)
        ref = &*u.support;
    if (ref) {
        Vec d = sub(ref->center, x);
        double nd = norm(d);
        if (nd > 1e-14) {
            for (std::size_t i = 0; i < n; ++i) axis[i] = d[i] / nd;
            if (nd > ref->radius) {
                const double a = std::asin(ref->radius / nd);
                breaks = {a, pi - a};
            }
        }
    }
    return {axis, breaks};
}

struct RadialParts {
    double value = 0.0;
    double err = 0.0;
};

// int_0^inf (2u(x) - u(x+tw) - u(x-tw)) t^{-1-2s} dt
inline RadialParts pv_radial(const ScalarField& u, double u0, std::span<const double> x, std::span<const double> w,
                             double s, const QuadConfig& q) {
    const std::size_t n = x.size();
    Vec yp(n), ym(n);
    auto second_diff = [&](double t) {
        for (std::size_t i = 0; i < n; ++i) {
            yp[i] = x[i] + t * w[i];
            ym[i] = x[i] - t * w[i];
        }
        return 2.0 * u0 - u(yp) - u(ym);
    };
    RadialParts out;
    const double eps = q.split_radius;
    const int K = std::max(1, q.near_order);

    // far-field breaks where either ray crosses a declared sphere
    Vec cuts;
    Vec wm(w.begin(), w.end());
    for (auto& v : wm) v = -v;
    for (const auto& k : u.kinks) {
        ray_crossings(x, w, k, cuts);
        ray_crossings(x, wm, k, cuts);
    }
    double support_end = std::numeric_limits<double>::infinity();
    if (u.growth == Growth::compact && u.support) {
        Vec sc;
        ray_crossings(x, w, *u.support, sc);
        ray_crossings(x, wm, *u.support, sc);
        support_end = sc.empty() ? eps : std::max(eps, *std::max_element(sc.begin(), sc.end()));
        for (double c : sc) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    Vec pts{eps};
    for (double c : cuts)
        if (c > pts.back() * (1.0 + 1e-12) && c < support_end * (1.0 + 1e-12)) pts.push_back(c);
    if (u.growth == Growth::compact && support_end > pts.back()) pts.push_back(support_end);
    if (u.growth == Growth::integrable) {
        while (!pts.empty() && pts.back() >= q.far_radius) pts.pop_back();
        pts.push_back(q.far_radius);
    }
    // dyadic breaks eps 2^k below the first cut: halving eps reuses every panel
    const double first = pts.size() > 1 ? pts[1] : std::max(1.0, 2.0 * eps);
    {
        Vec geo;
        for (double b = 2.0 * eps; b < first * (1.0 - 1e-12); b *= 2.0) geo.push_back(b);
        pts.insert(pts.begin() + 1, geo.begin(), geo.end());
    }

    // dyadic panels clear of the first cut take a fixed Kronrod rule, the rest
    // the adaptive one
    auto g = [&](double t, double, double) { return second_diff(t) * std::pow(t, -1.0 - 2.0 * s); };
    auto panel = [&](double lo, double hi) {
        const QuadValue r = 2.0 * hi <= first && hi == 2.0 * lo
                                ? gk15([&](double t) { return g(t, 0.0, 0.0); }, lo, hi)
                                : integrate_segment(g, lo, hi, q.rel_tol, 0);
        out.value += r.value;
        out.err += r.err;
    };

    // near field: shells [eps 2^{-k-1}, eps 2^{-k}], stopping once the second
    // difference sinks to rounding level
    const double scale = u0 != 0.0 ? std::abs(u0) : std::max(std::abs(second_diff(eps)), 1e-300);
    double t0 = eps * std::ldexp(1.0, -K);
    for (int k = 0; k < K; ++k) {
        const double hi = eps * std::ldexp(1.0, -k);
        if (std::abs(second_diff(hi)) < 1e-8 * scale) {
            t0 = hi;
            break;
        }
        panel(0.5 * hi, hi);
    }
    // innermost disc: quadratic model of the second difference
    const double a0 = second_diff(t0) / (t0 * t0);
    const double a1 = second_diff(2.0 * t0) / (4.0 * t0 * t0);
    const double core = std::pow(t0, 2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    out.value += a0 * core;
    out.err += std::abs(a0 - a1) * core + 1e-3 * std::abs(a0) * core;

    for (std::size_t k = 0; k + 1 < pts.size(); ++k) panel(pts[k], pts[k + 1]);
    const double last = pts.back();
    const double tail_const = 2.0 * u0 * std::pow(last, -2.0 * s) / (2.0 * s);
    switch (u.growth) {
        case Growth::compact:
            out.value += tail_const;
            break;
        case Growth::integrable:
            out.value += tail_const;
            out.err += 2.0 * u.sup_bound * std::pow(last, -2.0 * s) / (2.0 * s);
            break;
        case Growth::bounded: {
            auto r = integrate_tail([&](double t, double) { return second_diff(t) * std::pow(t, -1.0 - 2.0 * s); },
                                    last, std::max(last, 1.0), q.rel_tol, 0);
            out.value += r.value;
            out.err += r.err;
            break;
        }
    }
    return out;
}

inline void check_field_point(const ScalarField& u, std::span<const double> x, const QuadConfig& q) {
    if (!(q.split_radius > 0.0) || q.split_radius > u.c2_radius)
        throw DomainError("QuadConfig.split_radius must lie in (0, c2_radius]");
    if (!(q.far_radius > q.split_radius)) throw DomainError("QuadConfig.far_radius must exceed split_radius");
    for (const auto& k : u.kinks)
        if (distance_to_sphere(x, k) < q.split_radius)
            throw DomainError("evaluation point closer than split_radius to a declared non-smooth sphere");
}

}  // namespace detail

inline PVResult frac_laplacian_pv(const ScalarField& u, const KernelParams& p, std::span<const double> x,
                                  const QuadConfig& q) {
    p.validate();
    if (static_cast<int>(x.size()) != p.N) throw DomainError("point dimension differs from KernelParams.N");
    detail::check_field_point(u, x, q);
    const double u0 = u(x);
    auto [axis, breaks] = detail::polar_frame(x, u);
    double inner_err = 0.0;
    SphereRule rule{std::max(q.rel_tol, 1e-12), q.n_azimuth};
    auto res = integrate_sphere(
        p.N, axis, breaks,
        [&](std::span<const double> w) {
            auto r = detail::pv_radial(u, u0, x, w, p.s, q);
            inner_err = std::max(inner_err, r.err);
            return r.value;
        },
        rule, true);
    const double C = detail::C_Ns(p.N, p.s);
    PVResult out;
    out.value = 0.5 * C * res.value;
    out.err_est = 0.5 * C * (res.err + inner_err * sphere_area(p.N)) + q.abs_tol;
    if (!std::isfinite(out.value))
        throw ConvergenceError("frac_laplacian_pv: non-finite value", out.value, out.err_est);
    return out;
}

struct MeanValueResult {
    double residual = 0.0;
    double bound = 0.0;
};

inline MeanValueResult mean_value_residual(const ScalarField& u, const KernelParams& p, std::span<const double> x,
                                           double r, const QuadConfig& q) {
    p.validate();
    if (!(r > 0.0)) throw DomainError("mean_value_residual: r must be > 0");
    for (const auto& k : u.kinks)
        if (norm(sub(x, k.center)) - k.radius < r && norm(sub(x, k.center)) + r > k.radius)
            throw DomainError("mean_value_residual: ball meets a declared non-smooth sphere");
    const std::size_t n = x.size();
    const double u0 = u(x);
    const double c = detail::c_Ns(p.N, p.s);
    const double s = p.s;
    auto [axis, breaks] = detail::polar_frame(x, u);
    Vec yp(n), ym(n);
    double inner_err = 0.0;
    auto radial = [&](std::span<const double> w) {
        auto sd = [&](double t) {
            for (std::size_t i = 0; i < n; ++i) {
                yp[i] = x[i] + t * w[i];
                ym[i] = x[i] - t * w[i];
            }
            return 2.0 * u0 - u(yp) - u(ym);
        };
        Vec cuts;
        Vec wm(w.begin(), w.end());
        for (auto& v : wm) v = -v;
        for (const auto& k : u.kinks) {
            detail::ray_crossings(x, w, k, cuts);
            detail::ray_crossings(x, wm, k, cuts);
        }
        std::sort(cuts.begin(), cuts.end());
        Vec pts{r};
        for (double cc : cuts)
            if (cc > pts.back() * (1.0 + 1e-12)) pts.push_back(cc);
        double val = 0.0, err = 0.0;
        // (t^2 - r^2) = (t - r)(t + r) with t - r carried exactly
        auto kern = [&](double t, double tr) { return std::pow(tr * (t + r), -s) / t; };
        for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
            const double a = pts[k];
            auto res = integrate_segment([&](double t, double da, double) { return sd(t) * kern(t, (a - r) + da); },
                                         a, pts[k + 1], q.rel_tol, 0);
            val += res.value;
            err += res.err;
        }
        const double last = pts.back();
        if (u.growth == Growth::compact && u.support) {
            Vec sc;
            detail::ray_crossings(x, w, *u.support, sc);
            detail::ray_crossings(x, wm, *u.support, sc);
            double end = sc.empty() ? last : *std::max_element(sc.begin(), sc.end());
            if (end > last) {
                auto res = integrate_segment(
                    [&](double t, double da, double) { return sd(t) * kern(t, (last - r) + da); }, last, end,
                    q.rel_tol, 0);
                val += res.value;
                err += res.err;
            }
            // beyond the support only 2u0 remains; int_e^inf t^{-1}(t^2-r^2)^{-s} dt
            const double e = std::max(end, last);
            auto res = integrate_tail([&](double t, double off) { return 2.0 * u0 * kern(t, (e - r) + off); }, e,
                                      std::max(e, 1.0), q.rel_tol, 0);
            val += res.value;
            err += res.err;
        } else {
            auto res = integrate_tail([&](double t, double off) { return sd(t) * kern(t, (last - r) + off); }, last,
                                      std::max(last, 1.0), q.rel_tol, 0);
            val += res.value;
            err += res.err;
        }
        inner_err = std::max(inner_err, err);
        return val;
    };
    SphereRule rule{std::max(q.rel_tol, 1e-12), q.n_azimuth};
    auto res = integrate_sphere(p.N, axis, breaks, radial, rule, true);
    MeanValueResult out;
    out.residual = 0.5 * c * std::pow(r, 2.0 * s) * res.value;

    // sup of the operator over the ball, sampled at the centre and on two shells
    double sup = 0.0;
    std::vector<Vec> probes{Vec(x.begin(), x.end())};
    for (double frac : {0.5, 0.95})
        for (std::size_t k = 0; k < n; ++k)
            for (double sg : {-1.0, 1.0}) {
                Vec y(x.begin(), x.end());
                y[k] += sg * frac * r;
                probes.push_back(std::move(y));
            }
    for (const auto& y : probes) {
        QuadConfig qq = q;
        double dk = std::numeric_limits<double>::infinity();
        for (const auto& k : u.kinks) dk = std::min(dk, detail::distance_to_sphere(y, k));
        qq.split_radius = std::min({q.split_radius, 0.5 * dk, u.c2_radius});
        auto v = frac_laplacian_pv(u, p, y, qq);
        sup = std::max(sup, std::abs(v.value) + v.err_est);
    }
    out.bound = gamma_ball(p, r) * sup;
    (void)inner_err;
    return out;
}

// ---- reference fields ----

inline ScalarField constant_field(double value) {
    ScalarField f;
    f.eval = [value](std::span<const double>) { return value; };
    f.sup_bound = std::abs(value);
    return f;
}

// u_sigma on all of R^N; the unit sphere is a pole, values there are dropped.
inline ScalarField sharmonic_field(const KernelParams& p, double sigma) {
    (void)explicit_sharmonic(p, sigma, Vec(static_cast<std::size_t>(p.N), 0.0));
    const double cin = detail::c_Ns(p.N, p.s);
    const double cout = sigma >= 1.0 - p.s ? 0.0 : detail::c_Ns(p.N, p.s + sigma);
    ScalarField f;
    f.eval = [cin, cout, sigma](std::span<const double> x) {
        const double q = 1.0 - norm2(x);
        if (q == 0.0) return 0.0;
        return q > 0.0 ? cin * std::pow(q, -sigma) : cout * std::pow(-q, -sigma);
    };
    f.kinks.push_back({Vec(static_cast<std::size_t>(p.N), 0.0), 1.0});
    f.radial = [cin, cout, sigma](double r, double d) {
        if (d == 0.0) return 0.0;
        const double a = std::abs(d) * (r + 1.0);
        return d < 0.0 ? cin * std::pow(a, -sigma) : cout * std::pow(a, -sigma);
    };
    return f;
}

inline ScalarField torsion_field(const KernelParams& p, const BallGeometry& ball) {
    const double k = detail::torsion_factor(p.N, p.s);
    const double r2 = ball.radius * ball.radius;
    const double s = p.s;
    Vec c = ball.center;
    ScalarField f;
    f.eval = [k, r2, s, c](std::span<const double> x) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - c[i]) * (x[i] - c[i]);
        const double q = r2 - d2;
        return q > 0.0 ? k * std::pow(q, s) : 0.0;
    };
    f.growth = Growth::compact;
    f.support = Sphere{ball.center, ball.radius};
    f.kinks.push_back({ball.center, ball.radius});
    f.sup_bound = k * std::pow(r2, s);
    return f;
}

// exp(1 - 1/(1 - |x-c|^2/r^2)) inside the ball, 0 outside.
inline ScalarField bump_field(const Vec& center, double radius, double height = 1.0) {
    ScalarField f;
    f.eval = [center, radius, height](std::span<const double> x) {
        const double q = norm2(sub(x, center)) / (radius * radius);
        if (q >= 1.0) return 0.0;
        return height * std::exp(1.0 - 1.0 / (1.0 - q));
    };
    f.growth = Growth::compact;
    f.support = Sphere{center, radius};
    f.sup_bound = std::abs(height);
    return f;
}

// Ball-shaped domain used by the duality check.
struct DualityGrid {
    double tol = 1e-5;
    int n_angles = 16;
    int n_panels = 1;  // 20-point Gauss panels per side in the graded radial variable
};

namespace detail {

inline std::vector<std::pair<Vec, double>> sphere_nodes(int N, int m) {
    std::vector<std::pair<Vec, double>> nodes;
    if (N == 1) {
        nodes.push_back({Vec{1.0}, 1.0});
        nodes.push_back({Vec{-1.0}, 1.0});
    } else if (N == 2) {
        for (int j = 0; j < m; ++j) {
            double th = 2.0 * pi * (j + 0.5) / m;
            nodes.push_back({Vec{std::cos(th), std::sin(th)}, 2.0 * pi / m});
        }
    } else if (N == 3) {
        // Gauss-Legendre in cos(phi) times trapezoid in the azimuth
        const int mp = std::max(2, m / 2);
        for (int i = 0; i < mp; ++i) {
            double z = -1.0 + (2.0 * i + 1.0) / mp;
            double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
            for (int j = 0; j < m; ++j) {
                double ps = 2.0 * pi * (j + 0.5) / m;
                nodes.push_back({Vec{rr * std::cos(ps), rr * std::sin(ps), z}, (2.0 / mp) * (2.0 * pi / m)});
            }
        }
    } else {
        throw DomainError("duality_residual supports N <= 3");
    }
    return nodes;
}

}  // namespace detail

// int_B u L v - int_B v L u + int_{B^c} u L v, polar quadrature about the ball centre.
inline double duality_residual(const ScalarField& u, const ScalarField& v, const BallGeometry& ball,
                               const KernelParams& p, const QuadConfig& q, const DualityGrid& grid = {}) {
    p.validate();
    ball.validate(p.N);
    const auto nodes = detail::sphere_nodes(p.N, grid.n_angles);
    const Sphere bdry{ball.center, ball.radius};
    auto local_q = [&](std::span<const double> y) {
        QuadConfig qq = q;
        double dk = detail::distance_to_sphere(y, bdry);
        for (const auto* f : {&u, &v})
            for (const auto& k : f->kinks) dk = std::min(dk, detail::distance_to_sphere(y, k));
        qq.split_radius = std::min({q.split_radius, 0.5 * dk, u.c2_radius, v.c2_radius});
        qq.rel_tol = std::max(q.rel_tol, 1e-7);
        return qq;
    };
    // well outside the ball L v(y) = -C int_B v(z) |z-y|^{-N-2s} dz, a smooth kernel
    const double C = detail::C_Ns(p.N, p.s);
    auto exterior_lv = [&](std::span<const double> y) {
        auto ring = [&](double r, double, double) {
            double acc = 0.0;
            for (const auto& [w, wt] : nodes) {
                const Vec z = axpy(r, w, ball.center);
                acc += wt * v(z) * std::pow(norm2(sub(z, y)), -0.5 * p.N - p.s);
            }
            return acc * std::pow(r, p.N - 1);
        };
        return -C * integrate_segment(ring, 0.0, ball.radius, grid.tol, 2).value;
    };
    auto shell = [&](double rad, bool inside) {
        double acc = 0.0;
        for (const auto& [w, wt] : nodes) {
            Vec y = axpy(rad, w, ball.center);
            auto qq = local_q(y);
            if (inside) {
                const double lv = frac_laplacian_pv(v, p, y, qq).value;
                const double lu = frac_laplacian_pv(u, p, y, qq).value;
                acc += wt * (u(y) * lv - v(y) * lu);
            } else {
                const double uy = u(y);
                if (uy == 0.0) continue;
                acc += wt * uy * (rad >= 2.0 * ball.radius ? exterior_lv(y) : frac_laplacian_pv(v, p, y, qq).value);
            }
        }
        return acc * std::pow(rad, p.N - 1);
    };
    // delta = tau^{1/(1-s)} absorbs the delta^{-s} boundary layer of L v and
    // keeps the nodes off the sphere
    const double R = ball.radius, e = 1.0 / (1.0 - p.s);
    const double top = std::pow(R, 1.0 - p.s);
    const int np = std::max(1, grid.n_panels);
    double in = 0.0, near_out = 0.0;
    for (int k = 0; k < np; ++k) {
        const double a = top * k / np, b = top * (k + 1) / np;
        auto jac = [&](double tau) { return e * std::pow(tau, e - 1.0); };
        in += boost::math::quadrature::gauss<double, 20>::integrate(
            [&](double tau) { return jac(tau) * shell(R - std::pow(tau, e), true); }, a, b);
        near_out += boost::math::quadrature::gauss<double, 20>::integrate(
            [&](double tau) { return jac(tau) * shell(R + std::pow(tau, e), false); }, a, b);
    }
    auto far_out = integrate_tail([&](double r, double) { return shell(r, false); }, 2.0 * R, R, grid.tol, 1);
    return in + near_out + far_out.value;
}

}  // namespace nonlocal_lab

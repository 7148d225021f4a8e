#pragma once

#include "pv_eval.hpp"
#include "wos.hpp"

namespace nonlocal_lab {

struct BallQuad {
    double h = 1.0 / 16.0;  // tanh-sinh step of the radial and polar rules
    int n_azimuth = 32;     // trapezoid points in the azimuth (N = 3)
    bool check_integrability = true;
};

namespace detail {

// Radii in (1, inf) where a radial field is not smooth.
inline std::vector<double> exterior_breaks(const ScalarField& g) {
    std::vector<double> br;
    for (const auto& k : g.kinks)
        if (norm(k.center) == 0.0 && k.radius > 1.0) br.push_back(k.radius);
    if (g.support && norm(g.support->center) == 0.0 && g.support->radius > 1.0) br.push_back(g.support->radius);
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end()), br.end());
    return br;
}

// Product rule over the exterior of the unit ball in polar coordinates about
// the origin, with the polar axis along x. F(theta, rho, rho - 1) is weighted
// by rho^{N-1} and the surface measure.
template <class F>
double exterior_integral(int N, std::span<const double> x, const std::vector<double>& breaks, const BallQuad& q,
                         F&& f) {
    Vec axis(static_cast<std::size_t>(N), 0.0);
    const double nx = norm(x);
    if (nx > 0.0)
        for (int i = 0; i < N; ++i) axis[i] = x[i] / nx;
    else
        axis[N - 1] = 1.0;
    auto frame = orthonormal_frame(axis);

    // radial nodes: finite panels between breaks, then a mapped tail
    struct RNode {
        double rho, off, w;
    };
    std::vector<RNode> rn;
    double lo = 1.0;
    std::vector<double> ends = breaks;
    // resolve the peak of the kernel when x is close to the sphere
    const double dx = 1.0 - nx;
    if (dx < 0.1) {
        ends.push_back(1.0 + 4.0 * dx);
        std::sort(ends.begin(), ends.end());
    }
    for (double b : ends) {
        for (const auto& nd : tanh_sinh_rule(0.0, b - lo, q.h)) rn.push_back({lo + nd.x, (lo - 1.0) + nd.x, nd.w});
        lo = b;
    }
    const double L = std::max(1.0, lo);
    for (const auto& nd : tanh_sinh_rule(0.0, 1.0, q.h)) {
        const double off = L * nd.dl / nd.dr;
        if (!std::isfinite(off)) continue;
        rn.push_back({lo + off, (lo - 1.0) + off, nd.w * L / (nd.dr * nd.dr)});
    }

    auto radial = [&](std::span<const double> th) {
        double acc = 0.0;
        for (const auto& r : rn) acc += r.w * std::pow(r.rho, N - 1) * f(th, r.rho, r.off);
        return acc;
    };
    Vec th(static_cast<std::size_t>(N));
    if (N == 1) {
        double acc = radial(axis);
        th[0] = -axis[0];
        return acc + radial(th);
    }
    double total = 0.0;
    // polar angle from the axis, two tanh-sinh panels so the x-peak sits at an endpoint
    std::vector<RuleNode> polar;
    if (dx < 0.1) {
        polar = tanh_sinh_rule(0.0, 4.0 * dx, q.h);
        for (const auto& nd : tanh_sinh_rule(4.0 * dx, pi, q.h)) polar.push_back(nd);
    } else {
        polar = tanh_sinh_rule(0.0, pi, q.h);
    }
    for (const auto& nd : polar) {
        const double ph = nd.x, c = std::cos(ph), sn = std::sin(ph);
        if (N == 2) {
            for (double sg : {1.0, -1.0}) {
                for (int i = 0; i < 2; ++i) th[i] = c * frame[0][i] + sg * sn * frame[1][i];
                total += nd.w * radial(th);
            }
        } else {
            double ring = 0.0;
            for (int j = 0; j < q.n_azimuth; ++j) {
                const double ps = 2.0 * pi * j / q.n_azimuth;
                for (int i = 0; i < 3; ++i)
                    th[i] = c * frame[0][i] + sn * (std::cos(ps) * frame[1][i] + std::sin(ps) * frame[2][i]);
                ring += radial(th);
            }
            total += nd.w * sn * ring * 2.0 * pi / q.n_azimuth;
        }
    }
    return total;
}

}  // namespace detail

inline double poisson_solve_ball(const KernelParams& p, const ScalarField& g, std::span<const double> x,
                                 const BallQuad& q = {}) {
    p.validate();
    if (static_cast<int>(x.size()) != p.N) throw DomainError("poisson_solve_ball: point dimension differs from N");
    const double x2 = norm2(x);
    if (x2 >= 1.0) throw DomainError("poisson_solve_ball: need |x| < 1");
    if (q.check_integrability) {
        auto rep = gintro_check(unit_ball(p.N), g.eval, p);
        if (!rep.ok) throw IntegrabilityError("poisson_solve_ball: " + rep.message);
    }
    const double c = detail::c_Ns(p.N, p.s);
    const double a = std::pow(1.0 - x2, p.s);
    const std::size_t n = x.size();
    Vec y(n);
    return c * a *
           detail::exterior_integral(p.N, x, detail::exterior_breaks(g), q,
                                     [&](std::span<const double> th, double rho, double off) {
                                         double d2 = 0.0;
                                         for (std::size_t i = 0; i < n; ++i) {
                                             y[i] = rho * th[i];
                                             d2 += (x[i] - y[i]) * (x[i] - y[i]);
                                         }
                                         const double gy = g.radial ? g.radial(rho, off) : g(y);
                                         if (gy == 0.0) return 0.0;
                                         return gy * std::pow(d2, -0.5 * p.N) * std::pow(off * (rho + 1.0), -p.s);
                                     });
}

// Green function of the unit ball:
// kappa |x-y|^{2s-N} int_0^{r0} t^{s-1} (1+t)^{-N/2} dt, r0 = (1-|x|^2)(1-|y|^2)/|x-y|^2.
// The caller passes the exact factors 1-|x|^2, 1-|y|^2 and |x-y|^2.
struct BallGreen {
    int N;
    double s, a, b, kappa_beta;

    explicit BallGreen(const KernelParams& p) : N(p.N), s(p.s) {
        p.validate();
        if (!(2.0 * s < N)) throw DomainError("ball Green function: need N > 2s");
        a = s;
        b = 0.5 * N - s;
        kappa_beta = std::tgamma(b) / (std::pow(4.0, s) * std::pow(pi, 0.5 * N) * std::tgamma(s));
    }

    double operator()(double qx, double qy, double d2) const {
        if (d2 <= 0.0) return std::numeric_limits<double>::infinity();
        const double r0 = qx * qy / d2;
        // fraction of the full Beta integral, I_{r0/(1+r0)}(a, b)
        const double frac = r0 <= 1.0 ? boost::math::ibeta(a, b, r0 / (1.0 + r0))
                                      : 1.0 - boost::math::ibeta(b, a, 1.0 / (1.0 + r0));
        return kappa_beta * std::pow(d2, s - 0.5 * N) * frac;
    }
};

inline double ball_green_function(const KernelParams& p, std::span<const double> x, std::span<const double> y) {
    const double qx = 1.0 - norm2(x), qy = 1.0 - norm2(y);
    if (qx <= 0.0 || qy <= 0.0) return 0.0;
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    return BallGreen(p)(qx, qy, d2);
}

namespace detail {

// |S^{N-1}| r^{N-1} times the spherical mean of G(x, r omega), |x| = rx, with
// 1 - |x|^2 = qx, 1 - r and |r - rx| passed exactly.
inline double green_shell(const BallGreen& G, double rx, double qx, double r, double dr_out, double gap, double tol) {
    const int N = G.N;
    const double qy = dr_out * (1.0 + r);
    if (N == 1) {
        const double far = rx + r;
        return G(qx, qy, gap * gap) + G(qx, qy, far * far);
    }
    auto integrand = [&](double phi, double, double) {
        const double sh = std::sin(0.5 * phi);
        const double d2 = gap * gap + 4.0 * rx * r * sh * sh;
        const double g = G(qx, qy, d2);
        return N == 2 ? 2.0 * g : 2.0 * pi * g * std::sin(phi);
    };
    return integrate_segment(integrand, 0.0, pi, tol, 1, true).value * std::pow(r, N - 1);
}

}  // namespace detail

// u(x) = int_B G(x,y) f(|y|) dy for a radial source given as f(r, 1-r).
inline QuadValue green_solve_ball_radial(const KernelParams& p, const std::function<double(double, double)>& f,
                                         std::span<const double> x, double tol = 1e-10) {
    const BallGreen G(p);
    const double rx = norm(x);
    if (!(rx < 1.0)) throw DomainError("green_solve_ball_radial: need |x| < 1");
    const double dx = 1.0 - rx;
    const double qx = dx * (1.0 + rx);
    QuadValue total;
    // [0, rx] and [rx, 1]; r - rx and 1 - r come from the endpoint distances
    if (rx > 0.0) {
        auto in = integrate_segment(
            [&](double r, double, double dr) {
                return f(r, dx + dr) * detail::green_shell(G, rx, qx, r, dx + dr, dr, tol);
            },
            0.0, rx, tol, 0, true);
        total.value += in.value;
        total.err += in.err;
    }
    auto out = integrate_segment(
        [&](double r, double dl, double dr) {
            const double d = (r < rx + 0.5 * dx) ? dx - dl : dr;
            return f(r, d) * detail::green_shell(G, rx, qx, r, d, dl, tol);
        },
        rx, 1.0, tol, 0, true);
    total.value += out.value;
    total.err += out.err;
    return total;
}

struct MartinRatio {
    double u_ratio = 0.0;
};

inline MartinRatio martin_trace_ball(const KernelParams& p, const Field& h, std::span<const double> x,
                                     double tol = 1e-10) {
    p.validate();
    const double x2 = norm2(x);
    if (x2 >= 1.0) throw DomainError("martin_trace_ball: need |x| < 1");
    Vec axis(x.begin(), x.end());
    const double nx = std::sqrt(x2);
    if (nx > 0)
        for (auto& v : axis) v /= nx;
    else
        axis.back() = 1.0;
    SphereRule rule{tol, 64};
    auto mk = [&](std::span<const double> th) { return ball_martin_kernel(p, x, th); };
    auto num = integrate_sphere(p.N, axis, {}, [&](std::span<const double> th) { return mk(th) * h(th); }, rule);
    auto den = integrate_sphere(p.N, axis, {}, mk, rule);
    return {num.value / den.value};
}

inline std::vector<double> large_sharmonic_ball(const KernelParams& p, const ScalarField& g,
                                                const std::vector<double>& levels, std::span<const double> x,
                                                const BallQuad& q = {}) {
    std::vector<double> out;
    for (double n : levels) {
        ScalarField gn = g;
        const Field base = g.eval;
        gn.eval = [base, n](std::span<const double> y) { return std::min(base(y), n); };
        if (g.radial) {
            const auto rb = g.radial;
            gn.radial = [rb, n](double r, double d) { return std::min(rb(r, d), n); };
        }
        out.push_back(poisson_solve_ball(p, gn, x, q));
    }
    return out;
}

struct TraceResult {
    double Eu = 0.0;
    bool converged = false;
    std::vector<double> ratios;
};

// Samples (delta_k, u((1-delta_k) theta*)) with geometrically decreasing delta.
inline TraceResult weighted_trace(const KernelParams& p, const std::vector<std::pair<double, double>>& samples,
                                  double tol = 1e-2) {
    p.validate();
    if (samples.size() < 3) throw DomainError("weighted_trace: need at least 3 samples");
    TraceResult res;
    for (const auto& [d, u] : samples) {
        const double r = 1.0 - d;
        res.ratios.push_back(u / martin_mass(p, r * r));
    }
    std::vector<double> ext;
    for (std::size_t k = 1; k < samples.size(); ++k) {
        const double qd = samples[k].first / samples[k - 1].first;
        ext.push_back((res.ratios[k] - qd * res.ratios[k - 1]) / (1.0 - qd));
    }
    res.Eu = ext.back();
    const double prev = ext[ext.size() - 2];
    res.converged = std::abs(res.Eu - prev) <= tol * std::max(std::abs(res.Eu), 1.0);
    return res;
}

}  // namespace nonlocal_lab

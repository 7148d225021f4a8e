#pragma once

#include <complex>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/zeta.hpp>

#include "quadrature.hpp"

namespace nonlocal_lab {

struct ResolutionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Li_a(e^{i theta}) for 0 < theta < 2 pi and real a < 2.
inline std::complex<double> polylog_unit(double a, double theta) {
    if (!(theta > 0.0 && theta < 2.0 * pi)) throw DomainError("polylog_unit: theta must lie in (0, 2 pi)");
    if (!(a < 2.0)) throw DomainError("polylog_unit: need a < 2");
    if (theta > pi) return std::conj(polylog_unit(a, 2.0 * pi - theta));
    const std::complex<double> z = std::polar(1.0, theta);
    if (a == 1.0) return -std::log(1.0 - z);
    if (a == 0.0) return z / (1.0 - z);
    if (a > 0.0 && a == std::floor(a)) throw DomainError("polylog_unit: positive integer orders other than 1 are unsupported");
    // Li_a(e^{i th}) = Gamma(1-a) (-i th)^{a-1} + sum_k zeta(a-k) (i th)^k / k!
    using boost::math::tgamma;
    using boost::math::zeta;
    std::complex<double> sum = tgamma(1.0 - a) * std::pow(theta, a - 1.0) * std::polar(1.0, -0.5 * pi * (a - 1.0));
    // zeta(a - k) depends on a only; the last order used is kept per thread
    thread_local double cached_a = std::numeric_limits<double>::quiet_NaN();
    thread_local std::vector<double> zetas;
    if (a != cached_a) {
        zetas.clear();
        cached_a = a;
    }
    std::complex<double> ik(1.0, 0.0);
    for (int k = 0; k < 400; ++k) {
        if (k > 0) ik *= std::complex<double>(0.0, theta / k);
        if (static_cast<int>(zetas.size()) <= k) zetas.push_back(zeta(a - k));
        const double zk = zetas[static_cast<std::size_t>(k)];
        const std::complex<double> term = zk * ik;
        sum += term;
        if (k > 4 && std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

// Dirichlet eigenpairs of -Laplacian on (0,a) or (0,a) x (0,b), sorted by eigenvalue.
struct EigenBasis {
    enum Kind { interval, rectangle } kind = interval;
    double a = 1.0, b = 1.0;
    std::vector<double> lambda;
    std::vector<std::pair<int, int>> index;  // (j, k); k = 0 on the interval

    int dim() const { return kind == interval ? 1 : 2; }
    std::size_t size() const { return lambda.size(); }

    double phi(std::size_t n, std::span<const double> x) const {
        const auto [j, k] = index[n];
        if (kind == interval) return std::sqrt(2.0 / a) * std::sin(j * pi * x[0] / a);
        return 2.0 / std::sqrt(a * b) * std::sin(j * pi * x[0] / a) * std::sin(k * pi * x[1] / b);
    }

    // -d phi / d nu at a boundary point (outward normal)
    double normal_derivative(std::size_t n, std::span<const double> z) const {
        const auto [j, k] = index[n];
        const double tol = 1e-14;
        if (kind == interval) {
            const double c = std::sqrt(2.0 / a) * j * pi / a;
            if (std::abs(z[0]) < tol) return c;
            if (std::abs(z[0] - a) < tol) return c * (j % 2 == 1 ? 1.0 : -1.0);
            throw DomainError("normal_derivative: point is not on the boundary");
        }
        const double nrm = 2.0 / std::sqrt(a * b);
        const double sx = std::sin(j * pi * z[0] / a), sy = std::sin(k * pi * z[1] / b);
        if (std::abs(z[0]) < tol) return nrm * (j * pi / a) * sy;
        if (std::abs(z[0] - a) < tol) return nrm * (j * pi / a) * (j % 2 == 1 ? 1.0 : -1.0) * sy;
        if (std::abs(z[1]) < tol) return nrm * (k * pi / b) * sx;
        if (std::abs(z[1] - b) < tol) return nrm * (k * pi / b) * (k % 2 == 1 ? 1.0 : -1.0) * sx;
        throw DomainError("normal_derivative: point is not on the boundary");
    }

    double distance_to_boundary(std::span<const double> x) const {
        if (kind == interval) return std::min(x[0], a - x[0]);
        return std::min({x[0], a - x[0], x[1], b - x[1]});
    }

    bool inside(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != dim()) return false;
        return distance_to_boundary(x) > 0.0;
    }
};

inline EigenBasis interval_basis(int J, double a = 1.0) {
    if (J < 1) throw DomainError("interval_basis: need J >= 1");
    if (!(a > 0.0)) throw DomainError("interval_basis: need a > 0");
    EigenBasis B;
    B.kind = EigenBasis::interval;
    B.a = a;
    for (int j = 1; j <= J; ++j) {
        B.lambda.push_back(std::pow(j * pi / a, 2));
        B.index.emplace_back(j, 0);
    }
    return B;
}

inline EigenBasis rectangle_basis(int J, double a = 1.0, double b = 1.0) {
    if (J < 1) throw DomainError("rectangle_basis: need J >= 1");
    if (!(a > 0.0 && b > 0.0)) throw DomainError("rectangle_basis: need positive sides");
    EigenBasis B;
    B.kind = EigenBasis::rectangle;
    B.a = a;
    B.b = b;
    std::vector<std::tuple<double, int, int>> all;
    for (int j = 1; j <= J; ++j)
        for (int k = 1; k <= J; ++k) all.emplace_back(pi * pi * (j * j / (a * a) + k * k / (b * b)), j, k);
    std::stable_sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return std::get<0>(l) < std::get<0>(r); });
    for (const auto& [l, j, k] : all) {
        B.lambda.push_back(l);
        B.index.emplace_back(j, k);
    }
    return B;
}

struct SpectralValue {
    double value = 0.0;
    double tail_estimate = 0.0;
};

inline SpectralValue spectral_apply(const std::vector<double>& coeffs, double s, const EigenBasis& B,
                                    std::span<const double> x) {
    if (!(s > 0.0 && s <= 1.0)) throw DomainError("spectral_apply: s must lie in (0,1]");
    if (coeffs.size() > B.size()) throw DomainError("spectral_apply: more coefficients than basis functions");
    if (coeffs.empty()) return {};
    SpectralValue r;
    for (std::size_t n = 0; n < coeffs.size(); ++n) r.value += std::pow(B.lambda[n], s) * coeffs[n] * B.phi(n, x);
    r.tail_estimate = std::pow(B.lambda[coeffs.size() - 1], s) * std::abs(coeffs.back());
    return r;
}

namespace detail {

// Dirichlet heat kernel of d/dt - d^2/dx^2 on (0, L): images for small t, sine
// series otherwise.
inline constexpr double heat_switch = 0.1;

inline double gauss(double t, double z) { return std::exp(-z * z / (4.0 * t)) / std::sqrt(4.0 * pi * t); }

inline int series_terms(double tau) { return static_cast<int>(std::ceil(std::sqrt(42.0 / (pi * pi * tau)))) + 1; }

inline double heat1d(double t, double x, double y, double L = 1.0) {
    const double tau = t / (L * L), u = x / L, v = y / L;
    double acc = 0.0;
    if (tau < heat_switch) {
        for (int n = -6; n <= 6; ++n) acc += gauss(tau, u - v + 2 * n) - gauss(tau, u + v + 2 * n);
    } else {
        const int J = series_terms(tau);
        for (int j = 1; j <= J; ++j)
            acc += 2.0 * std::exp(-pi * pi * j * j * tau) * std::sin(j * pi * u) * std::sin(j * pi * v);
    }
    return std::max(acc, 0.0) / L;
}

// Heat kernel minus the free Gaussian.
inline double heat1d_regular(double t, double x, double y) {
    if (t < heat_switch) {
        double acc = 0.0;
        for (int n = -6; n <= 6; ++n) {
            if (n != 0) acc += gauss(t, x - y + 2 * n);
            acc -= gauss(t, x + y + 2 * n);
        }
        return acc;
    }
    return heat1d(t, x, y) - gauss(t, x - y);
}

// d/dy p(t, x, y) at y = 0 on (0, L), i.e. -d/dnu at the left end.
inline double heat1d_dn0(double t, double x, double L = 1.0) {
    const double tau = t / (L * L), u = x / L;
    double acc = 0.0;
    if (tau < heat_switch) {
        for (int n = -6; n <= 6; ++n) {
            const double z = u + 2 * n;
            acc += z / tau * gauss(tau, z);
        }
    } else {
        const int J = series_terms(tau);
        for (int j = 1; j <= J; ++j) acc += 2.0 * j * pi * std::exp(-pi * pi * j * j * tau) * std::sin(j * pi * u);
    }
    return acc / (L * L);
}

// 1 - int_0^L p(t, x, y) dy, the probability of having left (0, L) by time t.
inline double heat1d_exit(double t, double x, double L = 1.0) {
    const double tau = t / (L * L), u = x / L;
    if (tau < heat_switch) {
        const double sq = std::sqrt(4.0 * tau);
        auto E = [&](double z) { return 0.5 * std::erfc(z / sq); };
        double acc = 2.0 * E(u) + E(1.0 - u) - E(1.0 + u);
        for (int n = 1; n <= 6; ++n) {
            acc -= E(2 * n + u - 1) - E(2 * n + u) - E(2 * n - 1 - u) + E(2 * n - u);
            acc -= -E(1 - u + 2 * n) + E(2 * n - u) + E(1 + u + 2 * n) - E(u + 2 * n);
        }
        return std::clamp(acc, 0.0, 1.0);
    }
    const int J = series_terms(tau);
    double surv = 0.0;
    for (int j = 1; j <= J; j += 2) surv += 4.0 / (j * pi) * std::exp(-pi * pi * j * j * tau) * std::sin(j * pi * u);
    return std::clamp(1.0 - surv, 0.0, 1.0);
}

// int_0^inf F(t) t^{a-1} dt in z = log t over [t_lo, t_hi]; the integrand is
// smooth in z and negligible outside.
template <class F>
QuadValue log_time_integral(F&& f, double a, double t_lo, double t_hi, double tol = 1e-12) {
    return integrate_segment(
        [&](double z, double, double) {
            const double t = std::exp(z);
            return f(t) * std::pow(t, a);
        },
        std::log(t_lo), std::log(t_hi), tol, 2);
}

inline double first_eigenvalue(const EigenBasis& B) {
    return B.kind == EigenBasis::interval ? pi * pi / (B.a * B.a) : pi * pi * (1.0 / (B.a * B.a) + 1.0 / (B.b * B.b));
}

inline double t_upper(const EigenBasis& B) { return 45.0 / first_eigenvalue(B); }

inline double t_lower(double d2, double s, double power) {
    // p ~ exp(-d^2/4t) makes [0, d^2/2800] negligible; on the diagonal the
    // integrand behaves like t^{power}
    if (d2 > 0.0) return d2 / 2800.0;
    if (!(power > 0.0)) throw DomainError("subordination integral diverges on the diagonal");
    (void)s;
    return std::pow(1e-18, 1.0 / power);
}

inline void check_point(const EigenBasis& B, std::span<const double> x, const char* who) {
    if (!B.inside(x)) throw DomainError(std::string(who) + ": point must lie inside the domain");
}

}  // namespace detail

inline double heat_kernel(double t, std::span<const double> x, std::span<const double> y, const EigenBasis& B) {
    if (!(t > 0.0)) throw DomainError("heat_kernel: need t > 0");
    if (B.kind == EigenBasis::interval) return detail::heat1d(t, x[0], y[0], B.a);
    return detail::heat1d(t, x[0], y[0], B.a) * detail::heat1d(t, x[1], y[1], B.b);
}

// Truncated eigen-expansion of the heat kernel, for cross-checks.
inline double heat_kernel_series(double t, std::span<const double> x, std::span<const double> y,
                                 const EigenBasis& B) {
    double acc = 0.0;
    for (std::size_t n = 0; n < B.size(); ++n) {
        const double e = std::exp(-B.lambda[n] * t);
        if (e < 1e-300) break;
        acc += e * B.phi(n, x) * B.phi(n, y);
    }
    return acc;
}

inline double green_subordinate(double s, std::span<const double> x, std::span<const double> y,
                                const EigenBasis& B) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("green_subordinate: s must lie in (0,1)");
    detail::check_point(B, x, "green_subordinate");
    detail::check_point(B, y, "green_subordinate");
    const double d2 = norm2(sub(x, y));
    if (d2 == 0.0 && !(s > 0.5 * B.dim())) throw DomainError("green_subordinate: need x != y");
    const double lo = detail::t_lower(d2, s, s - 0.5 * B.dim());
    auto r = detail::log_time_integral([&](double t) { return heat_kernel(t, x, y, B); }, s, lo, detail::t_upper(B));
    return r.value / std::tgamma(s);
}

// Closed form of sum_j lambda_j^{-s} phi_j(x) phi_j(y) on (0,1).
inline double green_interval(double s, double x, double y) {
    if (!(s > 0.0 && s <= 1.0)) throw DomainError("green_interval: s must lie in (0,1]");
    if (!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0)) throw DomainError("green_interval: points must lie in (0,1)");
    if (s == 1.0) return std::min(x, y) * (1.0 - std::max(x, y));
    const double a = 2.0 * s;
    auto re_li = [&](double th) { return polylog_unit(a, th).real(); };
    double diag;
    const double d = std::abs(x - y);
    if (d == 0.0) {
        if (!(a > 1.0)) throw DomainError("green_interval: diverges on the diagonal for s <= 1/2");
        diag = boost::math::zeta(a);
    } else {
        diag = re_li(pi * d);
    }
    return (diag - re_li(pi * (x + y))) / std::pow(pi, a);
}

struct JumpKill {
    double J = 0.0;
    double kappa_at_x = 0.0;
};

inline JumpKill jump_and_kill(std::span<const double> x, std::span<const double> y, double s, const EigenBasis& B) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("jump_and_kill: s must lie in (0,1)");
    detail::check_point(B, x, "jump_and_kill");
    detail::check_point(B, y, "jump_and_kill");
    const double d2 = norm2(sub(x, y));
    if (d2 == 0.0) throw DomainError("jump_and_kill: need x != y");
    const double c = s / std::tgamma(1.0 - s);
    const double hi = detail::t_upper(B);
    JumpKill r;
    r.J = c * detail::log_time_integral([&](double t) { return heat_kernel(t, x, y, B); }, -s, d2 / 2800.0, hi).value;
    auto exit_prob = [&](double t) {
        if (B.kind == EigenBasis::interval) return detail::heat1d_exit(t, x[0], B.a);
        const double s1 = 1.0 - detail::heat1d_exit(t, x[0], B.a), s2 = 1.0 - detail::heat1d_exit(t, x[1], B.b);
        return 1.0 - s1 * s2;
    };
    const double dx = B.distance_to_boundary(x);
    // beyond t_hi the exit probability is 1 to double precision
    r.kappa_at_x = c * (detail::log_time_integral(exit_prob, -s, dx * dx / 2800.0, hi).value + std::pow(hi, -s) / s);
    return r;
}

// J minus the free kernel C(1,s)|x-y|^{-1-2s} on (0,1); smooth up to the diagonal.
inline double jump_regular_interval(double x, double y, double s) {
    const double c = s / std::tgamma(1.0 - s);
    const double hi = 45.0 / (pi * pi);
    const double dmin = std::min({x, y, 1.0 - x, 1.0 - y});
    const double lo = std::max(dmin * dmin, 1e-300) / 2800.0;
    auto r = detail::log_time_integral([&](double t) { return detail::heat1d_regular(t, x, y); }, -s, lo, hi, 1e-13);
    // past t_hi p is negligible and the Gaussian tail integrates in closed form
    const double d2 = (x - y) * (x - y);
    const double free_tail = boost::math::tgamma_lower(s + 0.5, d2 / (4.0 * hi)) / std::sqrt(4.0 * pi) *
                             std::pow(d2 / 4.0, -s - 0.5);
    return c * (r.value - (d2 > 0.0 ? free_tail : std::pow(hi, -s - 0.5) / ((s + 0.5) * std::sqrt(4.0 * pi))));
}

// P^s(x, z) for z on the boundary.
inline double spectral_poisson(std::span<const double> x, std::span<const double> z, double s, const EigenBasis& B) {
    if (!(s > 0.0 && s <= 1.0)) throw DomainError("spectral_poisson: s must lie in (0,1]");
    detail::check_point(B, x, "spectral_poisson");
    if (B.kind == EigenBasis::interval) {
        const double a = B.a;
        double u;
        if (std::abs(z[0]) < 1e-14)
            u = x[0] / a;
        else if (std::abs(z[0] - a) < 1e-14)
            u = 1.0 - x[0] / a;
        else
            throw DomainError("spectral_poisson: point is not on the boundary");
        // 2 pi^{1-2s} sum j^{1-2s} sin(j pi u), rescaled to (0, a)
        const double val = 2.0 * std::pow(pi, 1.0 - 2.0 * s) * polylog_unit(2.0 * s - 1.0, pi * u).imag();
        return val * std::pow(a, 2.0 * s - 2.0);
    }
    // rectangle: subordinate the inward normal derivative of the product kernel
    const double tol = 1e-14;
    std::function<double(double)> dn;
    if (std::abs(z[0]) < tol)
        dn = [&](double t) { return detail::heat1d_dn0(t, x[0], B.a) * detail::heat1d(t, x[1], z[1], B.b); };
    else if (std::abs(z[0] - B.a) < tol)
        dn = [&](double t) { return detail::heat1d_dn0(t, B.a - x[0], B.a) * detail::heat1d(t, x[1], z[1], B.b); };
    else if (std::abs(z[1]) < tol)
        dn = [&](double t) { return detail::heat1d_dn0(t, x[1], B.b) * detail::heat1d(t, x[0], z[0], B.a); };
    else if (std::abs(z[1] - B.b) < tol)
        dn = [&](double t) { return detail::heat1d_dn0(t, B.b - x[1], B.b) * detail::heat1d(t, x[0], z[0], B.a); };
    else
        throw DomainError("spectral_poisson: point is not on the boundary");
    const double d2 = norm2(sub(x, z));
    auto r = detail::log_time_integral(dn, s, d2 / 2800.0, detail::t_upper(B));
    return r.value / std::tgamma(s);
}

// Integral of P^s(x, .) over the boundary.
inline double h1_weight(std::span<const double> x, double s, const EigenBasis& B) {
    detail::check_point(B, x, "h1_weight");
    if (B.kind == EigenBasis::interval) {
        const Vec z0{0.0}, z1{B.a};
        return spectral_poisson(x, z0, s, B) + spectral_poisson(x, z1, s, B);
    }
    // each edge integrates the tangential kernel to a survival probability
    auto surv = [](double t, double u, double L) { return 1.0 - detail::heat1d_exit(t, u, L); };
    auto integrand = [&](double t) {
        return (detail::heat1d_dn0(t, x[0], B.a) + detail::heat1d_dn0(t, B.a - x[0], B.a)) * surv(t, x[1], B.b) +
               (detail::heat1d_dn0(t, x[1], B.b) + detail::heat1d_dn0(t, B.b - x[1], B.b)) * surv(t, x[0], B.a);
    };
    const double d = B.distance_to_boundary(x);
    return detail::log_time_integral(integrand, s, d * d / 2800.0, detail::t_upper(B)).value / std::tgamma(s);
}

// u(x) = int G^s(x,y) mu(y) dy + P^s(x,0) zeta0 + P^s(x,1) zeta1 on (0,1).
inline double spectral_solve(const std::function<double(double)>& mu, double zeta0, double zeta1, double x, double s,
                             double tol = 1e-10) {
    if (!(x > 0.0 && x < 1.0)) throw DomainError("spectral_solve: x must lie in (0,1)");
    const EigenBasis B = interval_basis(1);
    double u = 0.0;
    if (mu) {
        auto g = [&](double y, double, double) { return green_interval(s, x, y) * mu(y); };
        u += integrate_segment(g, 0.0, x, tol, 0).value + integrate_segment(g, x, 1.0, tol, 0).value;
    }
    const Vec xv{x};
    if (zeta0 != 0.0) u += zeta0 * spectral_poisson(xv, Vec{0.0}, s, B);
    if (zeta1 != 0.0) u += zeta1 * spectral_poisson(xv, Vec{1.0}, s, B);
    return u;
}

struct SpectralLadder {
    std::vector<double> nodes;
    std::vector<std::vector<double>> iterates;  // iterates[j-1][node]
    std::vector<double> probes;
    std::vector<std::vector<double>> probe_values;  // probe_values[j-1][probe]
    bool monotone = true;
    bool envelope_ok = false;
    double envelope_exponent = 0.0;
};

// u_j = j h1 - G^s[u_j^p] on (0,1) for j = 1..J_max, by Newton on a product
// integration Nystrom system. Nodes are graded geometrically toward both ends;
// the source is h1^p times the piecewise-linear interpolant of u^p / h1^p.
inline SpectralLadder large_solution_spectral(double p, double s, int J_max, const std::vector<double>& probes,
                                              int n_half = 28, double d_min = 1e-6) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("large_solution_spectral: s must lie in (0,1)");
    const double lo = 1.0 + s, hi = 1.0 / (1.0 - s);
    if (!(p > lo && p < hi))
        throw DomainError("large_solution_spectral: p must lie in (" + std::to_string(lo) + ", " + std::to_string(hi) +
                          ")");
    if (J_max < 1) throw DomainError("large_solution_spectral: need J_max >= 1");
    const EigenBasis B = interval_basis(1);
    // distances to the nearest end, then the mirrored half
    std::vector<double> dl;
    for (int i = 0; i < n_half; ++i) dl.push_back(d_min * std::pow(0.5 / d_min, static_cast<double>(i) / (n_half - 1)));
    std::vector<double> x, dist;
    for (double d : dl) {
        x.push_back(d);
        dist.push_back(d);
    }
    for (int i = n_half - 2; i >= 0; --i) {
        x.push_back(1.0 - dl[static_cast<std::size_t>(i)]);
        dist.push_back(dl[static_cast<std::size_t>(i)]);
    }
    const std::size_t n = x.size();
    const auto ni = static_cast<Eigen::Index>(n);
    auto h1_at = [&](double xv) { return h1_weight(Vec{xv}, s, B); };
    Eigen::VectorXd h1(ni);
    for (std::size_t i = 0; i < n; ++i) h1(static_cast<Eigen::Index>(i)) = h1_at(x[i]);
    auto W = [&](double y) { return std::pow(h1_at(y), p); };

    // A(i,k) = int G(x_i, y) W(y) hat_k(y) dy, with end panels [0, x_0] and [x_{n-1}, 1]
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ni, ni);
    const auto rule = tanh_sinh_rule(0.0, 1.0, 1.0 / 8.0);
    struct PanelNode {
        double y, t, w;
    };
    std::vector<std::vector<PanelNode>> panels(n + 1);
    parallel_for(n + 1, [&](std::size_t k) {
        const double a = k == 0 ? 0.0 : x[k - 1];
        const double b = k == n ? 1.0 : x[k];
        const double len = b - a;
        for (const auto& nd : rule) {
            const double y = a + nd.dl * len;
            if (!(y > 0.0 && y < 1.0) || y == a || y == b) continue;
            const double w = nd.w * len * W(y);
            if (std::isfinite(w)) panels[k].push_back({y, nd.dl, w});
        }
    });
    parallel_for(n, [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (std::size_t k = 0; k <= n; ++k) {
            double c0 = 0.0, c1 = 0.0;
            for (const auto& nd : panels[k]) {
                const double val = nd.w * green_interval(s, x[i], nd.y);
                if (!std::isfinite(val)) continue;
                c0 += val * (1.0 - nd.t);
                c1 += val * nd.t;
            }
            // hats: panel k spans nodes k-1 and k; the end panels continue the end ratio
            if (k == 0) {
                A(ii, 0) += c0 + c1;
            } else if (k == n) {
                A(ii, ni - 1) += c0 + c1;
            } else {
                A(ii, static_cast<Eigen::Index>(k - 1)) += c0;
                A(ii, static_cast<Eigen::Index>(k)) += c1;
            }
        }
    });
    Eigen::VectorXd wn(ni);
    for (Eigen::Index i = 0; i < ni; ++i) wn(i) = std::pow(h1(i), p);

    SpectralLadder out;
    out.nodes = x;
    out.probes = probes;
    auto ratio = [&](const Eigen::VectorXd& u) {
        Eigen::VectorXd q(ni);
        for (Eigen::Index i = 0; i < ni; ++i) q(i) = std::pow(std::max(u(i), 0.0), p) / wn(i);
        return q;
    };
    for (int j = 1; j <= J_max; ++j) {
        const Eigen::VectorXd b = j * h1;
        auto residual = [&](const Eigen::VectorXd& u) { return Eigen::VectorXd(u - b + A * ratio(u)); };
        Eigen::VectorXd u = (b - A * ratio(b)).cwiseMax(0.0);
        double rn = residual(u).cwiseAbs().maxCoeff();
        bool ok = false;
        for (int it = 0; it < 200; ++it) {
            if (rn <= 1e-12 * b.cwiseAbs().maxCoeff()) {
                ok = true;
                break;
            }
            Eigen::VectorXd dq(ni);
            for (Eigen::Index i = 0; i < ni; ++i) dq(i) = u(i) > 0.0 ? p * std::pow(u(i), p - 1.0) / wn(i) : 0.0;
            const Eigen::MatrixXd Jm = Eigen::MatrixXd::Identity(ni, ni) + A * dq.asDiagonal();
            const Eigen::VectorXd step = Jm.partialPivLu().solve(-residual(u));
            double lam = 1.0;
            for (int ls = 0; ls < 60; ++ls, lam *= 0.5) {
                const Eigen::VectorXd cand = u + lam * step;
                const double rc = residual(cand).cwiseAbs().maxCoeff();
                if (rc < (1.0 - 1e-4 * lam) * rn || ls == 59) {
                    u = cand;
                    rn = rc;
                    break;
                }
            }
        }
        if (!ok) throw ConvergenceError("large_solution_spectral: Newton did not converge", u(0), rn);
        out.iterates.emplace_back(u.data(), u.data() + ni);
        // probes: u = j h1 - G[W lerp(q)] evaluated with the same product rule
        const Eigen::VectorXd q = ratio(u);
        std::vector<double> pv;
        for (double xp : probes) {
            if (!(xp > 0.0 && xp < 1.0)) throw DomainError("large_solution_spectral: probes must lie in (0,1)");
            auto qat = [&](double y) {
                if (y <= x.front()) return q(0);
                if (y >= x.back()) return q(ni - 1);
                const auto itp = std::upper_bound(x.begin(), x.end(), y);
                const std::size_t k = static_cast<std::size_t>(itp - x.begin()) - 1;
                const double t = (y - x[k]) / (x[k + 1] - x[k]);
                return (1.0 - t) * q(static_cast<Eigen::Index>(k)) + t * q(static_cast<Eigen::Index>(k + 1));
            };
            double g = 0.0;
            std::vector<double> cuts{0.0};
            for (double xv : x) cuts.push_back(xv);
            cuts.push_back(1.0);
            cuts.push_back(xp);
            std::sort(cuts.begin(), cuts.end());
            for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
                const double a = cuts[c], len = cuts[c + 1] - a;
                if (!(len > 0.0)) continue;
                for (const auto& nd : rule) {
                    const double y = a + nd.dl * len;
                    if (!(y > 0.0 && y < 1.0) || y == xp) continue;
                    const double val = nd.w * len * green_interval(s, xp, y) * W(y) * qat(y);
                    if (std::isfinite(val)) g += val;
                }
            }
            pv.push_back(j * h1_at(xp) - g);
        }
        out.probe_values.push_back(pv);
    }
    for (std::size_t j = 1; j < out.iterates.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i)
            if (out.iterates[j][i] < out.iterates[j - 1][i] - 1e-8 * std::max(1.0, std::abs(out.iterates[j][i])))
                out.monotone = false;
        for (std::size_t k = 0; k < probes.size(); ++k)
            if (out.probe_values[j][k] < out.probe_values[j - 1][k] - 1e-8) out.monotone = false;
    }
    // blow-up rate of the top level on the left collar [1e-4, 1e-2]
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n_half); ++i)
        if (dist[i] >= 1e-4 && dist[i] <= 1e-2 && out.iterates.back()[i] > 0.0) {
            lx.push_back(std::log(dist[i]));
            ly.push_back(std::log(out.iterates.back()[i]));
        }
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= lx.size();
        my /= lx.size();
        double sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxx += (lx[i] - mx) * (lx[i] - mx);
            sxy += (lx[i] - mx) * (ly[i] - my);
        }
        out.envelope_exponent = sxy / sxx;
        out.envelope_ok = out.envelope_exponent >= -2.0 * s / (p - 1.0) - 0.05;
    }
    return out;
}

}  // namespace nonlocal_lab

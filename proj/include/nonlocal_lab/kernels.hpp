#pragma once

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "common.hpp"

namespace nonlocal_lab {

struct KernelParams {
    int N = 2;
    double s = 0.5;

    void validate() const {
        if (N < 1) throw DomainError("KernelParams.N must be >= 1, got " + std::to_string(N));
        if (!(s > 0.0 && s < 1.0)) throw DomainError("KernelParams.s must lie in (0,1), got " + std::to_string(s));
    }
};

struct BallGeometry {
    Vec center;
    double radius = 1.0;

    void validate(int N) const {
        if (!(radius > 0.0)) throw DomainError("BallGeometry.radius must be > 0");
        if (static_cast<int>(center.size()) != N) throw DomainError("BallGeometry.center has wrong dimension");
    }
};

inline BallGeometry unit_ball(int N) { return {Vec(static_cast<std::size_t>(N), 0.0), 1.0}; }

struct NormalizingConstants {
    double C;
    double c;
    double gamma;
};

namespace detail {

inline double C_Ns(int N, double s) {
    using boost::math::tgamma;
    return std::pow(4.0, s) * tgamma(0.5 * N + s) * s / (std::pow(pi, 0.5 * N) * tgamma(1.0 - s));
}

inline double c_Ns(int N, double s) {
    return boost::math::tgamma(0.5 * N) * std::sin(pi * s) / std::pow(pi, 1.0 + 0.5 * N);
}

// Torsion prefactor: gamma(N,s,r) = torsion_factor * r^{2s}.
inline double torsion_factor(int N, double s) {
    using boost::math::tgamma;
    return tgamma(0.5 * N) / (std::pow(2.0, 2.0 * s) * tgamma(0.5 * (N + 2.0 * s)) * tgamma(1.0 + s));
}

}  // namespace detail

inline NormalizingConstants normalizing_constants(const KernelParams& p, double r) {
    p.validate();
    if (!(r > 0.0)) throw DomainError("r must be > 0");
    return {detail::C_Ns(p.N, p.s), detail::c_Ns(p.N, p.s), detail::torsion_factor(p.N, p.s) * std::pow(r, 2.0 * p.s)};
}

inline double gamma_ball(const KernelParams& p, double r) {
    return detail::torsion_factor(p.N, p.s) * std::pow(r, 2.0 * p.s);
}

inline double exit_kernel_density(const KernelParams& p, const BallGeometry& ball, std::span<const double> y) {
    const double d2 = norm2(sub(y, ball.center));
    const double r2 = ball.radius * ball.radius;
    if (d2 <= r2) return 0.0;
    const double c = detail::c_Ns(p.N, p.s);
    return c * std::pow(ball.radius, 2.0 * p.s) / (std::pow(d2, 0.5 * p.N) * std::pow(d2 - r2, p.s));
}

// P(|y - x0| <= rho r) for the exit law.
inline double exit_radial_cdf(double s, double rho) {
    if (rho <= 1.0) return 0.0;
    return boost::math::ibeta(1.0 - s, s, 1.0 - 1.0 / (rho * rho));
}

inline double ball_poisson_kernel(const KernelParams& p, std::span<const double> x, std::span<const double> y) {
    p.validate();
    const double x2 = norm2(x), y2 = norm2(y);
    if (x2 >= 1.0) throw DomainError("ball_poisson_kernel: need |x| < 1");
    if (y2 <= 1.0) throw DomainError("ball_poisson_kernel: need |y| > 1");
    const double dxy = norm(sub(x, y));
    return detail::c_Ns(p.N, p.s) / std::pow(dxy, p.N) * std::pow((1.0 - x2) / (y2 - 1.0), p.s);
}

inline double ball_martin_kernel(const KernelParams& p, std::span<const double> x, std::span<const double> theta) {
    p.validate();
    const double x2 = norm2(x);
    if (x2 >= 1.0) throw DomainError("ball_martin_kernel: need |x| < 1");
    const double d = norm(sub(x, theta));
    if (d == 0.0) throw DomainError("ball_martin_kernel: x coincides with theta");
    return std::pow(1.0 - x2, p.s) / std::pow(d, p.N);
}

// Integral of the constant-free Martin kernel over the unit sphere.
inline double martin_mass(const KernelParams& p, double x2) {
    return sphere_area(p.N) * std::pow(1.0 - x2, p.s - 1.0);
}

inline double torsion_ball(const KernelParams& p, const BallGeometry& ball, std::span<const double> x) {
    const double q = ball.radius * ball.radius - norm2(sub(x, ball.center));
    if (q <= 0.0) return 0.0;
    return detail::torsion_factor(p.N, p.s) * std::pow(q, p.s);
}

inline double explicit_sharmonic(const KernelParams& p, double sigma, std::span<const double> x) {
    p.validate();
    if (!(sigma > 0.0 && sigma <= 1.0 - p.s + 1e-15))
        throw DomainError("explicit_sharmonic: sigma must lie in (0, 1-s]");
    const double q = 1.0 - norm2(x);
    if (q == 0.0) throw DomainError("explicit_sharmonic: |x| = 1 is a pole");
    if (q > 0.0) return detail::c_Ns(p.N, p.s) * std::pow(q, -sigma);
    if (sigma >= 1.0 - p.s) return 0.0;
    return detail::c_Ns(p.N, p.s + sigma) * std::pow(-q, -sigma);
}

}  // namespace nonlocal_lab

#pragma once

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "ball_solver.hpp"

namespace nonlocal_lab {

struct KOViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemeViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonlinearProfile {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> fprime;
    // antiderivative with F(0) = 0; empty means quadrature
    std::function<double(double)> F;
    double m = 0.0;
    double M = 0.0;

    double antiderivative(double t) const {
        if (F) return F(t);
        if (!(t > 0.0)) return 0.0;
        // log-spaced pieces keep the double-exponential rule on a smooth integrand
        double acc = integrate_segment([&](double x, double, double) { return f(x); }, 0.0, std::min(t, 1.0), 1e-13,
                                       3)
                         .value;
        if (t > 1.0)
            acc += integrate_segment([&](double z, double, double) { return f(std::exp(z)) * std::exp(z); }, 0.0,
                                     std::log(t), 1e-13, 3)
                       .value;
        return acc;
    }
};

inline NonlinearProfile power_profile(double p) {
    if (!(p > 1.0)) throw DomainError("power_profile: need p > 1");
    NonlinearProfile n;
    n.name = "power";
    n.f = [p](double t) { return std::pow(t, p); };
    n.fprime = [p](double t) { return p * std::pow(t, p - 1.0); };
    n.F = [p](double t) { return std::pow(t, p + 1.0) / (p + 1.0); };
    n.m = n.M = p - 1.0;
    return n;
}

// t^{1+2s} log^alpha(1+t)
inline NonlinearProfile lower_critical_profile(double s, double alpha) {
    if (!(alpha > 0.0)) throw DomainError("lower_critical_profile: need alpha > 0");
    const double q = 1.0 + 2.0 * s;
    NonlinearProfile n;
    n.name = "lower_critical";
    n.f = [q, alpha](double t) { return std::pow(t, q) * std::pow(std::log1p(t), alpha); };
    n.fprime = [q, alpha](double t) {
        const double L = std::log1p(t);
        return std::pow(t, q - 1.0) * std::pow(L, alpha - 1.0) * (q * L + alpha * t / (1.0 + t));
    };
    n.m = q - 1.0;
    n.M = q - 1.0 + alpha;
    return n;
}

// t^{(1+s)/(1-s)} log^{-beta}(1+t)
inline NonlinearProfile upper_critical_profile(double s, double beta) {
    if (!(beta > 0.0)) throw DomainError("upper_critical_profile: need beta > 0");
    const double q = (1.0 + s) / (1.0 - s);
    if (!(q - 1.0 - beta > 0.0)) throw DomainError("upper_critical_profile: need beta < 2s/(1-s)");
    NonlinearProfile n;
    n.name = "upper_critical";
    n.f = [q, beta](double t) { return std::pow(t, q) * std::pow(std::log1p(t), -beta); };
    n.fprime = [q, beta](double t) {
        const double L = std::log1p(t);
        return std::pow(t, q - 1.0) * std::pow(L, -beta - 1.0) * (q * L - beta * t / (1.0 + t));
    };
    n.m = q - 1.0 - beta;
    n.M = q - 1.0;
    return n;
}

inline NonlinearProfile exponential_profile() {
    NonlinearProfile n;
    n.name = "exponential";
    n.f = [](double t) { return std::expm1(t); };
    n.fprime = [](double t) { return std::exp(t); };
    n.F = [](double t) { return std::expm1(t) - t; };
    n.m = 1.0;
    n.M = std::numeric_limits<double>::infinity();
    return n;
}

struct ProfileCheck {
    double m_hat = 0.0;
    double M_hat = 0.0;
    bool ok = false;
};

inline ProfileCheck profile_check(const NonlinearProfile& prof, const std::vector<double>& grid) {
    if (grid.empty()) throw DomainError("profile_check: empty grid");
    ProfileCheck r;
    r.m_hat = std::numeric_limits<double>::infinity();
    r.M_hat = -std::numeric_limits<double>::infinity();
    for (double t : grid) {
        if (!(t > 0.0)) throw DomainError("profile_check: grid must lie in (0, inf)");
        const double f = prof.f(t), fp = prof.fprime(t);
        if (!(f > 0.0) || !(fp > 0.0)) throw DomainError("profile_check: f and f' must be positive on the grid");
        const double e = t * fp / f - 1.0;
        r.m_hat = std::min(r.m_hat, e);
        r.M_hat = std::max(r.M_hat, e);
    }
    const double slack = 1e-9;
    r.ok = r.m_hat > 0.0 && std::isfinite(r.M_hat) && std::isfinite(prof.M) && prof.m > 0.0 &&
           prof.m <= r.m_hat + slack && r.M_hat <= prof.M + slack;
    return r;
}

// phi(u) = int_u^inf dt / sqrt(F(t)). The range [u, 1e8 u] is integrated in
// log t; beyond it the integrand is continued as a power fitted at 1e8 u.
inline double phi_eval(const NonlinearProfile& prof, double u) {
    if (!(u > 0.0)) throw DomainError("phi_eval: need u > 0");
    auto integrand = [&](double t) {
        const double F = prof.antiderivative(t);
        return F > 0.0 ? 1.0 / std::sqrt(F) : std::numeric_limits<double>::infinity();
    };
    const double span = 1e8;
    const double T = u * span;
    const double IT = integrand(T);
    double tail = 0.0;
    if (IT > 0.0) {
        const double a = -std::log(integrand(2.0 * T) / IT) / std::log(2.0);
        if (!(a > 1.0 + 1e-3)) throw KOViolation("phi_eval: the integral of F^{-1/2} does not converge");
        tail = T * IT / (a - 1.0);
    }
    const auto body = integrate_segment(
        [&](double z, double, double) {
            const double t = u * std::exp(z);
            return t * integrand(t);
        },
        0.0, std::log(span), 1e-12, 1);
    return body.value + tail;
}

inline double psi_eval(const NonlinearProfile& prof, double v) {
    if (!(v > 0.0)) throw DomainError("psi_eval: need v > 0");
    auto h = [&](double z) { return phi_eval(prof, std::exp(z)) - v; };
    double lo = 0.0, hi = 0.0;
    double hl = h(lo);
    int budget = 200;
    // phi is decreasing: move right while phi > v, left while phi < v
    if (hl > 0.0) {
        hi = lo + 2.0;
        while (h(hi) > 0.0) {
            lo = hi;
            hi += 2.0;
            if (--budget == 0) throw ConvergenceError("psi_eval: no bracket found", std::exp(hi), 0.0);
        }
    } else {
        hi = lo;
        lo = hi - 2.0;
        while (h(lo) < 0.0) {
            hi = lo;
            lo -= 2.0;
            if (--budget == 0) throw ConvergenceError("psi_eval: no bracket found", std::exp(lo), 0.0);
        }
    }
    std::uintmax_t iters = 200;
    auto tol = [](double a, double b) { return std::abs(a - b) <= 1e-13 * std::max(1.0, std::abs(a)); };
    auto r = boost::math::tools::toms748_solve(h, lo, hi, tol, iters);
    return std::exp(0.5 * (r.first + r.second));
}

enum class Tri { no, yes, undecided };

inline const char* to_string(Tri t) { return t == Tri::yes ? "true" : t == Tri::no ? "false" : "undecided"; }

struct KOClass {
    Tri KO = Tri::undecided;
    Tri L1 = Tri::undecided;
    Tri E = Tri::undecided;
};

namespace detail {

// Convergence of int^inf I(t) dt from the fitted model a + b log t + c log log t
// on [1e6, 1e12], with a dead zone of 0.05 around the critical exponents.
inline Tri tail_converges(const std::function<double(double)>& I, double margin = 0.05) {
    const int n = 25;
    std::vector<double> lt, llt, ly;
    for (int i = 0; i < n; ++i) {
        const double t = std::pow(10.0, 6.0 + 6.0 * i / (n - 1));
        const double v = I(t);
        if (v == 0.0) return Tri::yes;  // underflow: faster than any power
        if (!std::isfinite(v)) return Tri::no;
        lt.push_back(std::log(t));
        llt.push_back(std::log(std::log(t)));
        ly.push_back(std::log(v));
    }
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = lt[i];
        A(i, 2) = llt[i];
        y(i) = ly[i];
    }
    const Eigen::VectorXd c3 = A.colPivHouseholderQr().solve(y);
    const double b = c3(1);
    if (b < -1.0 - margin) return Tri::yes;
    if (b > -1.0 + margin) return Tri::no;
    // power at the threshold: refit the log exponent with b = -1
    Eigen::MatrixXd B(n, 2);
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) {
        B(i, 0) = 1.0;
        B(i, 1) = llt[i];
        z(i) = ly[i] + lt[i];
    }
    const Eigen::VectorXd c2 = B.colPivHouseholderQr().solve(z);
    const double c = c2(1);
    if (c < -1.0 - margin) return Tri::yes;
    if (c > -1.0 + margin) return Tri::no;
    return Tri::undecided;
}

}  // namespace detail

inline KOClass ko_classify(const NonlinearProfile& prof, double s) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("ko_classify: s must lie in (0,1)");
    KOClass k;
    k.KO = detail::tail_converges([&](double t) { return 1.0 / std::sqrt(prof.antiderivative(t)); });
    k.L1 = detail::tail_converges([&](double t) { return std::pow(t / prof.f(t), 0.5 / s); });
    k.E = detail::tail_converges([&](double t) { return prof.f(t) * std::pow(t, -2.0 / (1.0 - s)); });
    return k;
}

enum class OperatorKind { restricted, spectral };

inline std::pair<double, double> power_range(double s, OperatorKind op) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("power_range: s must lie in (0,1)");
    if (op == OperatorKind::restricted) return {1.0 + 2.0 * s, 1.0 + 2.0 * s / (1.0 - s)};
    return {1.0 + s, 1.0 / (1.0 - s)};
}

struct SuperScale {
    double mu = 1.0;
    double lambda = 1.0;
};

// mu psi(delta^s) + lambda xi on a ball, xi the torsion function.
inline double supersolution_value(const NonlinearProfile& prof, double s, const BallGeometry& ball,
                                  std::span<const double> x, const SuperScale& scale = {}) {
    const int N = static_cast<int>(ball.center.size());
    KernelParams p{N, s};
    p.validate();
    ball.validate(N);
    if (!(scale.mu >= 1.0)) throw DomainError("supersolution_value: need mu >= 1");
    if (ko_classify(prof, s).L1 != Tri::yes)
        throw KOViolation("supersolution_value: psi(delta^s) is not integrable (L1 condition fails)");
    const double d = ball.radius - norm(sub(x, ball.center));
    if (!(d > 0.0)) throw DomainError("supersolution_value: x must lie inside the ball");
    return scale.mu * psi_eval(prof, std::pow(d, s)) + scale.lambda * torsion_ball(p, ball, x);
}

// ---- monotone schemes on the unit ball with radial data ----

// Linear part of a radial problem on nodes r_0 < ... < r_{n-1} along e_1:
// u_i = base_i + sign (A q)_i where q_k = f(u_k) / weight(r_k) and A applies the
// Green operator to weight(r) times the piecewise-linear interpolant of q.
struct RadialModel {
    KernelParams params;
    std::vector<double> radii;
    Eigen::VectorXd base;
    Eigen::MatrixXd A;
    std::function<double(double)> weight;
    // standard error of u_i for given nodal ratios; empty for deterministic models
    std::function<double(std::size_t, const Eigen::VectorXd&, double)> std_error;
};

namespace detail {

inline void check_radii(const std::vector<double>& radii) {
    if (radii.size() < 2) throw DomainError("radial model: need at least 2 radii");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] >= 0.0 && radii[i] < 1.0)) throw DomainError("radial model: radii must lie in [0,1)");
        if (i > 0 && !(radii[i] > radii[i - 1])) throw DomainError("radial model: radii must increase");
    }
}

// Column and linear weight of radius r on the grid; beyond the last node the
// ratio is continued as a constant.
inline std::pair<std::size_t, double> locate(const std::vector<double>& radii, double r) {
    if (r <= radii.front()) return {0, 0.0};
    if (r >= radii.back()) return {radii.size() - 2, 1.0};
    const auto it = std::upper_bound(radii.begin(), radii.end(), r);
    const std::size_t k = static_cast<std::size_t>(it - radii.begin()) - 1;
    return {k, (r - radii[k]) / (radii[k + 1] - radii[k])};
}

inline double weight_at(const std::function<double(double)>& w, double r) { return w ? w(r) : 1.0; }

}  // namespace detail

// Walks from every node are stored once and reused for every nonlinearity
// (common random numbers), so the order properties of the continuous schemes
// hold sample by sample for the discrete ones.
struct FrozenPaths {
    KernelParams params;
    std::vector<double> radii;
    std::vector<std::vector<double>> exit_value;
    std::vector<std::vector<std::uint32_t>> offset;  // walk w owns visits [offset[w], offset[w+1])
    std::vector<std::vector<double>> visit_r, visit_w;
    long censored = 0;
};

inline FrozenPaths build_frozen_paths(const KernelParams& p, std::vector<double> radii,
                                      const std::function<double(double)>& g_radial, const WalkConfig& cfg) {
    p.validate();
    cfg.validate();
    detail::check_radii(radii);
    FrozenPaths fp;
    fp.params = p;
    fp.radii = std::move(radii);
    const std::size_t n = fp.radii.size();
    fp.exit_value.resize(n);
    fp.offset.resize(n);
    fp.visit_r.resize(n);
    fp.visit_w.resize(n);
    std::vector<long> cens(n, 0);
    const double tf = detail::torsion_factor(p.N, p.s);
    auto dom = ball_domain(unit_ball(p.N), [](std::span<const double>) { return 0.0; });
    parallel_for(n, [&](std::size_t i) {
        Vec x(static_cast<std::size_t>(p.N), 0.0);
        x[0] = fp.radii[i];
        auto& off = fp.offset[i];
        off.push_back(0);
        for (long w = 0; w < cfg.n_samples; ++w) {
            Rng rng(cfg.seed, i, static_cast<std::uint64_t>(w));
            auto out = walk(dom, x, p.s, cfg, rng, [&](std::span<const double> c, double r) {
                fp.visit_r[i].push_back(norm(c));
                fp.visit_w[i].push_back(tf * std::pow(r, 2.0 * p.s));
            });
            if (out.censored) ++cens[i];
            const bool keep = !out.censored || cfg.censor == CensorPolicy::datum_at_nearest;
            fp.exit_value[i].push_back(keep && g_radial ? g_radial(norm(out.exit)) : 0.0);
            off.push_back(static_cast<std::uint32_t>(fp.visit_r[i].size()));
        }
    });
    for (long c : cens) fp.censored += c;
    return fp;
}

inline RadialModel frozen_model(std::shared_ptr<const FrozenPaths> fp, std::function<double(double)> weight = {}) {
    const std::size_t n = fp->radii.size();
    const auto ni = static_cast<Eigen::Index>(n);
    RadialModel m;
    m.params = fp->params;
    m.radii = fp->radii;
    m.weight = weight;
    m.A = Eigen::MatrixXd::Zero(ni, ni);
    m.base = Eigen::VectorXd::Zero(ni);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double nw = static_cast<double>(fp->exit_value[i].size());
        for (double e : fp->exit_value[i]) m.base(ii) += e / nw;
        for (std::size_t v = 0; v < fp->visit_r[i].size(); ++v) {
            const double r = fp->visit_r[i][v];
            const double w = fp->visit_w[i][v] * detail::weight_at(weight, r) / nw;
            auto [k, t] = detail::locate(fp->radii, r);
            m.A(ii, static_cast<Eigen::Index>(k)) += w * (1.0 - t);
            m.A(ii, static_cast<Eigen::Index>(k + 1)) += w * t;
        }
    }
    m.std_error = [fp, weight](std::size_t i, const Eigen::VectorXd& q, double sign) {
        detail::Moments mo;
        const auto& off = fp->offset[i];
        for (std::size_t w = 0; w + 1 < off.size(); ++w) {
            double acc = fp->exit_value[i][w];
            for (std::uint32_t v = off[w]; v < off[w + 1]; ++v) {
                const double r = fp->visit_r[i][v];
                auto [k, t] = detail::locate(fp->radii, r);
                const double ratio =
                    (1.0 - t) * q(static_cast<Eigen::Index>(k)) + t * q(static_cast<Eigen::Index>(k + 1));
                acc += sign * fp->visit_w[i][v] * detail::weight_at(weight, r) * ratio;
            }
            mo.add(acc);
        }
        return mo.estimate().std_error;
    };
    return m;
}

// Product-integration Nystrom model with the Green function of the ball. Nodes
// are given by their distances to the sphere (decreasing), so the boundary
// layer is resolved without cancellation.
inline RadialModel green_model(const KernelParams& p, const std::vector<double>& deltas,
                               std::function<double(double)> weight = {}, const ScalarField* g = nullptr,
                               double tol = 1e-8) {
    const BallGreen G(p);
    std::vector<double> radii;
    for (double d : deltas) radii.push_back(1.0 - d);
    detail::check_radii(radii);
    const std::size_t n = radii.size();
    const auto ni = static_cast<Eigen::Index>(n);
    RadialModel m;
    m.params = p;
    m.radii = radii;
    m.weight = weight;
    m.A = Eigen::MatrixXd::Zero(ni, ni);
    m.base = Eigen::VectorXd::Zero(ni);
    const auto rule = tanh_sinh_rule(0.0, 1.0, 1.0 / 8.0);
    parallel_for(n, [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double rx = radii[i], dx = deltas[i], qx = dx * (1.0 + rx);
        if (g) {
            Vec x(static_cast<std::size_t>(p.N), 0.0);
            x[0] = rx;
            m.base(ii) = poisson_solve_ball(p, *g, x);
        }
        // panels [r_k, r_{k+1}] and the boundary panel [r_{n-1}, 1)
        for (std::size_t k = 0; k < n; ++k) {
            const bool last = k + 1 == n;
            const double a = radii[k];
            const double len = last ? deltas[k] : deltas[k] - deltas[k + 1];
            const double d_hi = last ? 0.0 : deltas[k + 1];
            double c0 = 0.0, c1 = 0.0;
            for (const auto& nd : rule) {
                const double dl = nd.dl * len, dr = nd.dr * len, w = nd.w * len;
                const double r = a + dl;
                const double dout = d_hi + dr;
                // |r - rx| from the panel end nearest to rx
                const double gap = k < i ? (deltas[k + 1] - dx) + dr : (dx - deltas[k]) + dl;
                const double kern = detail::green_shell(G, rx, qx, r, dout, gap, tol);
                const double val = w * kern * detail::weight_at(weight, r);
                if (!std::isfinite(val)) continue;
                if (last) {
                    c0 += val;
                } else {
                    const double t = dl / len;
                    c0 += val * (1.0 - t);
                    c1 += val * t;
                }
            }
            m.A(ii, static_cast<Eigen::Index>(k)) += c0;
            if (!last) m.A(ii, static_cast<Eigen::Index>(k + 1)) += c1;
        }
    });
    return m;
}

// f(|Martin normaliser|), a source weight under which the nodal ratios of trace
// problems stay bounded at the boundary.
inline std::function<double(double)> trace_weight(const KernelParams& p, const std::function<double(double)>& f) {
    return [p, f](double r) {
        const double w = f(martin_mass(p, r * r));
        return w > 0.0 ? w : 1.0;
    };
}

enum class Sign { plus, minus };

struct IterateProblem {
    Sign sign = Sign::minus;
    std::function<double(double)> f;       // nonlinearity with f(0) = 0, evaluated at max(u, 0)
    std::function<double(double)> fprime;  // needed for trace levels
    // h-trace levels: u = h m + base - G[f(u)] with m the Martin normaliser;
    // empty means a Picard scheme on the model's base solution
    std::vector<double> levels;
};

struct IterateResult {
    std::vector<double> probes;                 // radii along e_1
    std::vector<std::vector<double>> iterates;  // iterates[k][i]
    std::vector<std::vector<double>> std_errors;
    bool monotone = true;
    std::optional<bool> bounded_by;
};

namespace detail {

inline double fpos(const std::function<double(double)>& f, double u) { return f ? f(std::max(u, 0.0)) : 0.0; }

inline void check_order(IterateResult& res, bool increasing, bool statistical) {
    for (std::size_t k = 1; k < res.iterates.size(); ++k)
        for (std::size_t i = 0; i < res.probes.size(); ++i) {
            const double d = res.iterates[k][i] - res.iterates[k - 1][i];
            const double tol = 1e-10 * std::max(1.0, std::abs(res.iterates[k][i])) +
                               (statistical ? 3.0 * std::max(res.std_errors[k][i], res.std_errors[k - 1][i]) : 0.0);
            if ((increasing && d < -tol) || (!increasing && d > tol)) res.monotone = false;
        }
}

}  // namespace detail

// Picard: u_0 = T(0), then u_{n+1} = T(u_n) for sign + and u_{n+1} = T(T(u_n))
// for sign - (T is then antitone and T o T isotone). Trace levels: one Newton
// solve of the discrete system per level.
inline IterateResult monotone_iterate(const IterateProblem& prob, const RadialModel& model, int k_max,
                                      const std::function<double(double)>& supersolution = {}) {
    const std::size_t n = model.radii.size();
    const auto ni = static_cast<Eigen::Index>(n);
    const double sg = prob.sign == Sign::plus ? 1.0 : -1.0;
    IterateResult res;
    res.probes = model.radii;
    Eigen::VectorXd wn(ni);
    for (std::size_t i = 0; i < n; ++i) wn(static_cast<Eigen::Index>(i)) = detail::weight_at(model.weight, model.radii[i]);
    auto ratios = [&](const Eigen::VectorXd& u) {
        Eigen::VectorXd q(ni);
        for (Eigen::Index i = 0; i < ni; ++i) q(i) = detail::fpos(prob.f, u(i)) / wn(i);
        return q;
    };
    auto record = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& q) {
        res.iterates.emplace_back(u.data(), u.data() + ni);
        std::vector<double> se(n, 0.0);
        if (model.std_error)
            for (std::size_t i = 0; i < n; ++i) se[i] = model.std_error(i, q, sg);
        res.std_errors.push_back(se);
    };

    if (prob.levels.empty()) {
        if (k_max < 1) throw DomainError("monotone_iterate: need k_max >= 1");
        auto T = [&](const Eigen::VectorXd& u) { return Eigen::VectorXd(model.base + sg * (model.A * ratios(u))); };
        Eigen::VectorXd src = Eigen::VectorXd::Zero(ni);
        Eigen::VectorXd u = T(src);
        record(u, ratios(src));
        for (int k = 1; k < k_max; ++k) {
            src = prob.sign == Sign::minus ? T(u) : u;
            u = T(src);
            record(u, ratios(src));
        }
        detail::check_order(res, prob.sign == Sign::plus, false);
    } else {
        if (!prob.fprime) throw DomainError("monotone_iterate: trace levels need f'");
        for (double h : prob.levels) {
            if (!(h > 0.0)) throw DomainError("monotone_iterate: trace levels must be positive");
            Eigen::VectorXd b(ni);
            for (std::size_t i = 0; i < n; ++i)
                b(static_cast<Eigen::Index>(i)) =
                    h * martin_mass(model.params, model.radii[i] * model.radii[i]) + model.base(static_cast<Eigen::Index>(i));
            auto residual = [&](const Eigen::VectorXd& u) {
                return Eigen::VectorXd(u - b - sg * (model.A * ratios(u)));
            };
            Eigen::VectorXd u = b;
            // for absorption T(b) lies below the solution
            if (prob.sign == Sign::minus) u = (b - model.A * ratios(b)).cwiseMax(0.0);
            bool ok = false;
            double rn = residual(u).cwiseAbs().maxCoeff();
            const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
            for (int it = 0; it < 200 && !ok; ++it) {
                if (rn <= 1e-12 * scale) {
                    ok = true;
                    break;
                }
                Eigen::VectorXd dq(ni);
                for (Eigen::Index i = 0; i < ni; ++i) dq(i) = u(i) > 0.0 ? prob.fprime(u(i)) / wn(i) : 0.0;
                const Eigen::MatrixXd J = Eigen::MatrixXd::Identity(ni, ni) - sg * model.A * dq.asDiagonal();
                const Eigen::VectorXd step = J.partialPivLu().solve(-residual(u));
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
            if (!ok) throw ConvergenceError("monotone_iterate: Newton did not converge at a trace level", u(0), rn);
            record(u, ratios(u));
        }
        detail::check_order(res, true, static_cast<bool>(model.std_error));
    }
    if (supersolution) {
        bool ok = true;
        for (std::size_t k = 0; k < res.iterates.size(); ++k)
            for (std::size_t i = 0; i < n; ++i)
                if (res.iterates[k][i] > supersolution(model.radii[i]) + 3.0 * res.std_errors[k][i]) ok = false;
        res.bounded_by = ok;
    }
    return res;
}

// As monotone_iterate, but a sequence that is not monotone is an error.
inline IterateResult monotone_iterate_checked(const IterateProblem& prob, const RadialModel& model, int k_max,
                                              const std::function<double(double)>& supersolution = {}) {
    auto r = monotone_iterate(prob, model, k_max, supersolution);
    if (!r.monotone) throw SchemeViolation("monotone_iterate: sequence is not monotone beyond tolerance");
    return r;
}

}  // namespace nonlocal_lab

#pragma once

#include <limits>

#include "kernels.hpp"

namespace nonlocal_lab {

using Field = std::function<double(std::span<const double>)>;

struct Domain {
    Field sdf;  // positive inside, Lipschitz 1
    std::function<bool(std::span<const double>)> inside;
    Field g;  // exterior datum
    double bounding_radius = 1.0;
};

inline Domain ball_domain(const BallGeometry& ball, Field g) {
    Domain d;
    d.sdf = [ball](std::span<const double> x) { return ball.radius - norm(sub(x, ball.center)); };
    d.inside = [ball](std::span<const double> x) { return norm(sub(x, ball.center)) < ball.radius; };
    d.g = std::move(g);
    d.bounding_radius = ball.radius;
    return d;
}

enum class CensorPolicy { zero, datum_at_nearest };

struct WalkConfig {
    double kappa = 0.5;
    int max_steps = 1000;
    long n_samples = 10000;
    std::uint64_t seed = 1;
    CensorPolicy censor = CensorPolicy::zero;

    void validate() const {
        if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("WalkConfig.kappa must lie in (0,1)");
        if (n_samples < 1) throw DomainError("WalkConfig.n_samples must be >= 1");
        if (max_steps < 1) throw DomainError("WalkConfig.max_steps must be >= 1");
    }
};

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long n = 0;
    long censored = 0;

};

inline void random_direction(Rng& rng, std::span<double> w) {
    const std::size_t n = w.size();
    if (n == 1) {
        w[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        return;
    }
    if (n == 2) {
        const double t = 2.0 * pi * rng.uniform();
        w[0] = std::cos(t);
        w[1] = std::sin(t);
        return;
    }
    double nn = 0.0;
    do {
        nn = 0.0;
        for (auto& v : w) {
            v = rng.normal();
            nn += v * v;
        }
    } while (nn == 0.0);
    nn = std::sqrt(nn);
    for (auto& v : w) v /= nn;
}

// Exit radius in units of r: rho = (1-V)^{-1/2}, V ~ Beta(1-s, s), with
// 1 - V = Y/(X+Y) for X ~ Gamma(1-s), Y ~ Gamma(s).
inline double sample_exit_radius(double s, Rng& rng) {
    const double X = rng.gamma(1.0 - s);
    const double Y = rng.gamma(s);
    if (Y <= 0.0) return std::numeric_limits<double>::max();
    return std::sqrt((X + Y) / Y);
}

inline Vec sample_exit(std::span<const double> x, double r, const KernelParams& p, Rng& rng) {
    if (!(r > 0.0)) throw DomainError("sample_exit: r must be > 0");
    Vec w(x.size());
    random_direction(rng, w);
    const double rho = sample_exit_radius(p.s, rng);
    Vec y(x.begin(), x.end());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += r * rho * w[i];
    return y;
}

struct WalkOutcome {
    Vec exit;
    bool censored = false;
    int steps = 0;
};

// One walk from x. visit(point, r) is called for every ball the walker sits in.
template <class Visit>
WalkOutcome walk(const Domain& dom, std::span<const double> x, double s, const WalkConfig& cfg, Rng& rng,
                 Visit&& visit) {
    const std::size_t n = x.size();
    Vec pos(x.begin(), x.end()), w(n);
    WalkOutcome out;
    for (int k = 0; k < cfg.max_steps; ++k) {
        const double d = dom.sdf(pos);
        if (d <= 0.0) {
            out.exit = pos;
            out.steps = k;
            return out;
        }
        const double r = cfg.kappa * d;
        visit(std::span<const double>(pos), r);
        random_direction(rng, w);
        const double rho = sample_exit_radius(s, rng);
        for (std::size_t i = 0; i < n; ++i) pos[i] += r * rho * w[i];
        if (!dom.inside(pos)) {
            out.exit = pos;
            out.steps = k + 1;
            return out;
        }
    }
    out.censored = true;
    out.steps = cfg.max_steps;
    if (cfg.censor == CensorPolicy::datum_at_nearest) {
        // march along the last direction until the walker leaves the domain
        for (int it = 0; it < 10000 && dom.inside(pos); ++it) {
            const double d = std::max(dom.sdf(pos), 1e-12 * dom.bounding_radius);
            for (std::size_t i = 0; i < n; ++i) pos[i] += (d + 1e-12 * dom.bounding_radius) * w[i];
        }
    }
    out.exit = pos;
    return out;
}

namespace detail {

struct Moments {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    long censored = 0;

    void add(double v) {
        ++n;
        const double d = v - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (v - mean);
    }
    void merge(const Moments& o) {
        if (o.n == 0) return;
        const long nt = n + o.n;
        const double d = o.mean - mean;
        mean += d * static_cast<double>(o.n) / static_cast<double>(nt);
        m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / static_cast<double>(nt);
        n = nt;
        censored += o.censored;
    }
    MCEstimate estimate() const {
        MCEstimate e;
        e.mean = mean;
        e.n = n;
        e.censored = censored;
        e.std_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
        return e;
    }
};

inline constexpr long chunk_size = 2048;

}  // namespace detail

// Per-sample scores computed in fixed chunks and merged in chunk order, so the
// result depends only on (seed, point index) and not on the worker count.
template <class Score>
MCEstimate monte_carlo(long n_samples, std::uint64_t seed, std::uint64_t point_index, Score&& score) {
    const long n_chunks = (n_samples + detail::chunk_size - 1) / detail::chunk_size;
    std::vector<detail::Moments> parts(static_cast<std::size_t>(n_chunks));
    parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t c) {
        const long lo = static_cast<long>(c) * detail::chunk_size;
        const long hi = std::min(n_samples, lo + detail::chunk_size);
        detail::Moments m;
        for (long i = lo; i < hi; ++i) {
            Rng rng(seed, point_index, static_cast<std::uint64_t>(i));
            bool censored = false;
            m.add(score(rng, censored));
            if (censored) ++m.censored;
        }
        parts[c] = m;
    });
    detail::Moments total;
    for (const auto& m : parts) total.merge(m);
    return total.estimate();
}

inline MCEstimate wos_estimate(const Domain& dom, const Field& f, std::span<const double> x, const KernelParams& p,
                               const WalkConfig& cfg, std::uint64_t point_index = 0) {
    p.validate();
    cfg.validate();
    if (static_cast<int>(x.size()) != p.N) throw DomainError("wos_estimate: point dimension differs from N");
    if (!dom.inside(x) || dom.sdf(x) <= 0.0) throw DomainError("wos_estimate: start point outside the domain");
    const double tf = detail::torsion_factor(p.N, p.s);
    const double two_s = 2.0 * p.s;
    return monte_carlo(cfg.n_samples, cfg.seed, point_index, [&](Rng& rng, bool& censored) {
        double acc = 0.0;
        auto out = walk(dom, x, p.s, cfg, rng, [&](std::span<const double> c, double r) {
            if (f) acc += tf * std::pow(r, two_s) * f(c);
        });
        censored = out.censored;
        if (!out.censored || cfg.censor == CensorPolicy::datum_at_nearest) acc += dom.g(out.exit);
        return acc;
    });
}

inline std::vector<MCEstimate> wos_field(const Domain& dom, const Field& f, const std::vector<Vec>& grid,
                                         const KernelParams& p, const WalkConfig& cfg) {
    std::vector<MCEstimate> out;
    out.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out.push_back(wos_estimate(dom, f, grid[i], p, cfg, i));
    return out;
}

struct IntegrabilityReport {
    bool ok = true;
    std::vector<double> shell_sums;
    std::string message;
};

// Dyadic-shell sums of |g| min(delta^{-s}, delta^{-N-2s}) outside a ball; the
// tail is flagged when the shell sums stop decaying. Warns, never throws.
inline IntegrabilityReport gintro_check(const BallGeometry& ball, const Field& g, const KernelParams& p,
                                        int k_min = -30, int k_max = 30, int n_dirs = 32) {
    IntegrabilityReport rep;
    const int N = p.N;
    std::vector<Vec> dirs;
    for (int j = 0; j < n_dirs; ++j) {
        Vec w(static_cast<std::size_t>(N), 0.0);
        if (N == 1) {
            w[0] = (j % 2 == 0) ? 1.0 : -1.0;
        } else {
            const double t = 2.0 * pi * (j + 0.5) / n_dirs;
            w[0] = std::cos(t);
            w[1] = std::sin(t);
        }
        dirs.push_back(w);
    }
    const double area = sphere_area(N);
    for (int k = k_min; k < k_max; ++k) {
        const double d0 = std::ldexp(ball.radius, k), d1 = 2.0 * d0;
        double acc = 0.0;
        const int m = 8;
        for (int i = 0; i < m; ++i) {
            const double d = d0 + (i + 0.5) * (d1 - d0) / m;
            const double rr = ball.radius + d;
            const double wgt = std::min(std::pow(d, -p.s), std::pow(d, -N - 2.0 * p.s));
            double avg = 0.0;
            for (const auto& w : dirs) avg += std::abs(g(axpy(rr, w, ball.center)));
            acc += avg / n_dirs * wgt * std::pow(rr, N - 1) * area * (d1 - d0) / m;
        }
        rep.shell_sums.push_back(acc);
    }
    const std::size_t L = rep.shell_sums.size();
    auto decays = [&](std::size_t a, std::size_t b, int step) {
        // last few shells on the given side must shrink
        double prev = rep.shell_sums[a];
        for (std::size_t i = a;; i = static_cast<std::size_t>(static_cast<long>(i) + step)) {
            if (rep.shell_sums[i] > 1.01 * prev && rep.shell_sums[i] > 1e-300) return false;
            prev = rep.shell_sums[i];
            if (i == b) break;
        }
        return true;
    };
    const bool inner_ok = decays(4, 0, -1);
    const bool outer_ok = decays(L - 5, L - 1, 1);
    rep.ok = inner_ok && outer_ok;
    if (!inner_ok) rep.message = "exterior datum not integrable near the boundary";
    if (!outer_ok) rep.message += (rep.message.empty() ? "" : "; ") + std::string("exterior datum tail not integrable");
    return rep;
}

}  // namespace nonlocal_lab

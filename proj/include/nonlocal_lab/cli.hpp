#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "curvature.hpp"
#include "rates.hpp"
#include "semilinear_ko.hpp"
#include "spectral.hpp"

namespace nonlocal_lab::cli {

using json = nlohmann::json;

enum ExitCode { ok = 0, failure = 1, precondition = 2, convergence = 3 };

struct RunConfig {
    std::string command;
    json params = json::object();
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"kernels", "eval", "wos", "ball", "rates", "ko", "spectral", "curvature"};
    return c;
}

// ---- csv ----

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

// Short form for report text.
inline std::string show(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct Cell {
    std::string text;
    Cell(double v) : text(fmt(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(long v) : text(std::to_string(v)) {}
    Cell(std::size_t v) : text(std::to_string(v)) {}
    Cell(bool v) : text(v ? "true" : "false") {}
    Cell(const char* v) : text(v) {}
    Cell(std::string v) : text(std::move(v)) {}
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::initializer_list<Cell> cells) {
        std::vector<std::string> r;
        for (const auto& c : cells) r.push_back(c.text);
        if (r.size() != header.size()) throw std::logic_error("csv row width differs from the header");
        rows.push_back(std::move(r));
    }

    std::string str() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& v) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) out += ',';
                out += v[i];
            }
            out += '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out;
    }

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw DomainError("results.csv: missing column " + name);
    }

    double num(std::size_t row, const std::string& name) const {
        const std::string& t = rows.at(row).at(col(name));
        if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (t == "inf") return std::numeric_limits<double>::infinity();
        if (t == "-inf") return -std::numeric_limits<double>::infinity();
        double v = 0.0;
        auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw DomainError("results.csv: bad number " + t);
        return v;
    }

    const std::string& text(std::size_t row, const std::string& name) const { return rows.at(row).at(col(name)); }
};

inline Table parse_csv(const std::string& body) {
    Table t;
    std::istringstream in(body);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> v;
        std::string cur;
        for (char c : l) {
            if (c == ',') {
                v.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur += c;
            }
        }
        v.push_back(cur);
        return v;
    };
    if (!std::getline(in, line)) throw DomainError("results.csv: empty file");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto r = split(line);
        if (r.size() != t.header.size()) throw DomainError("results.csv: ragged row");
        t.rows.push_back(std::move(r));
    }
    return t;
}

// ---- parameters ----

// Reads experiment parameters with defaults, recording every resolved value;
// finish() rejects keys no experiment asked for.
class Params {
public:
    explicit Params(json& j) : j_(j) {
        if (!j_.is_object()) throw DomainError("params must be a JSON object");
    }

    double num(const std::string& key, double def) {
        used_.insert(key);
        if (!j_.contains(key)) j_[key] = def;
        const json& v = j_[key];
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const std::string t = v.get<std::string>();
            double d = 0.0;
            auto r = std::from_chars(t.data(), t.data() + t.size(), d);
            if (r.ec == std::errc() && r.ptr == t.data() + t.size()) {
                j_[key] = d;
                return d;
            }
        }
        throw DomainError("parameter " + key + " must be a number");
    }

    long integer(const std::string& key, long def) {
        const double v = num(key, static_cast<double>(def));
        if (v != std::floor(v)) throw DomainError("parameter " + key + " must be an integer");
        j_[key] = static_cast<long>(v);
        return static_cast<long>(v);
    }

    std::string str(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
        used_.insert(key);
        if (!j_.contains(key)) j_[key] = def;
        if (!j_[key].is_string()) throw DomainError("parameter " + key + " must be a string");
        const std::string v = j_[key].get<std::string>();
        if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
            std::string msg = "parameter " + key + " must be one of:";
            for (const auto& a : allowed) msg += " " + a;
            throw DomainError(msg);
        }
        return v;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw DomainError("unknown parameter " + it.key() + " for this command");
    }

private:
    json& j_;
    std::set<std::string> used_;
};

inline KernelParams kernel_params(Params& P, double s_def, int n_def) {
    KernelParams p{static_cast<int>(P.integer("dim", n_def)), P.num("s", s_def)};
    p.validate();
    return p;
}

inline WalkConfig walk_config(Params& P, std::uint64_t seed, long samples_def) {
    WalkConfig w;
    w.n_samples = P.integer("samples", samples_def);
    w.kappa = P.num("kappa", 0.5);
    w.max_steps = static_cast<int>(P.integer("max_steps", 1000));
    w.seed = seed;
    w.validate();
    return w;
}

// Truth table for the classifiers, from the exponents of each profile.
struct ExpectedKO {
    bool KO, L1, E;
};

inline ExpectedKO expected_ko(const std::string& f, double s, double param) {
    if (f == "power") return {param > 1.0, param > 1.0 + 2.0 * s, param < (1.0 + s) / (1.0 - s)};
    if (f == "lower") return {true, param > 2.0 * s, true};
    if (f == "upper") return {true, true, param > 1.0};
    return {true, true, false};
}

// ---- experiments ----

inline Table run_kernels(Params& P) {
    const auto p = kernel_params(P, 0.5, 2);
    const double r = P.num("r", 1.0);
    if (!(r > 0.0)) throw DomainError("r must be > 0");
    P.finish();
    const auto nc = normalizing_constants(p, r);
    BallGeometry ball{Vec(static_cast<std::size_t>(p.N), 0.0), r};
    Table t{{"quantity", "argument", "value"}, {}};
    t.add({"C", 0.0, nc.C});
    t.add({"c", 0.0, nc.c});
    t.add({"gamma", r, nc.gamma});
    t.add({"torsion_center", 0.0, torsion_ball(p, ball, ball.center)});
    for (double m : {1.25, 1.5, 2.0, 4.0}) {
        Vec y(static_cast<std::size_t>(p.N), 0.0);
        y[0] = m * r;
        t.add({"exit_density", m * r, exit_kernel_density(p, ball, y)});
    }
    return t;
}

inline Table run_eval(Params& P) {
    const auto p = kernel_params(P, 0.3, 2);
    const std::string field = P.str("field", "sharmonic", {"sharmonic", "torsion"});
    const double sigma = field == "sharmonic" ? P.num("sigma", 0.5 * (1.0 - p.s)) : 0.0;
    const long n = P.integer("points", field == "sharmonic" ? 10 : 5);
    P.finish();
    if (n < 1) throw DomainError("points must be >= 1");
    const ScalarField u = field == "sharmonic" ? sharmonic_field(p, sigma) : torsion_field(p, unit_ball(p.N));
    Table t{{"x1", "u", "value", "err_est", "target", "tolerance"}, {}};
    for (long k = 0; k < n; ++k) {
        Vec x(static_cast<std::size_t>(p.N), 0.0);
        x[0] = n == 1 ? 0.0 : 0.85 * static_cast<double>(k) / static_cast<double>(n - 1);
        const auto r = frac_laplacian_pv(u, p, x, QuadConfig{});
        const double ux = u(x);
        const double target = field == "sharmonic" ? 0.0 : 1.0;
        const double tol = field == "sharmonic" ? std::max(r.err_est, 1e-4 * std::abs(ux)) : 1e-3;
        t.add({x[0], ux, r.value, r.err_est, target, tol});
    }
    return t;
}

inline Table run_wos(Params& P, std::uint64_t seed) {
    const auto p = kernel_params(P, 0.3, 2);
    const double sigma = P.num("sigma", 0.2);
    const auto cfg = walk_config(P, seed, 100000);
    const double x1 = P.num("x1", 0.0);
    P.finish();
    if (sigma >= 1.0 - p.s) throw DomainError("sigma must lie below 1-s for a nonzero exterior branch");
    if (!(std::abs(x1) < 1.0)) throw DomainError("x1 must lie in (-1,1)");
    const auto u = sharmonic_field(p, sigma);
    auto dom = ball_domain(unit_ball(p.N), u.eval);
    Vec x(static_cast<std::size_t>(p.N), 0.0);
    x[0] = x1;
    const auto est = wos_estimate(dom, {}, x, p, cfg);
    Table t{{"x1", "mean", "std_error", "n", "censored", "reference"}, {}};
    t.add({x1, est.mean, est.std_error, est.n, est.censored, explicit_sharmonic(p, sigma, x)});
    return t;
}

inline Table run_ball(Params& P) {
    const auto p = kernel_params(P, 0.3, 2);
    const double sigma = P.num("sigma", 0.2);
    P.finish();
    if (sigma >= 1.0 - p.s) throw DomainError("sigma must lie below 1-s for a nonzero exterior branch");
    const auto g = sharmonic_field(p, sigma);
    Table t{{"x1", "value", "reference", "rel_error"}, {}};
    for (double r : {0.0, 0.25, 0.5, 0.75, 0.9}) {
        Vec x(static_cast<std::size_t>(p.N), 0.0);
        x[0] = r;
        const double v = poisson_solve_ball(p, g, x);
        const double ref = explicit_sharmonic(p, sigma, x);
        t.add({r, v, ref, std::abs(v - ref) / ref});
    }
    return t;
}

inline Table run_rates(Params& P) {
    const auto p = kernel_params(P, 0.4, 2);
    const std::string mode = P.str("mode", "rhs", {"rhs", "datum"});
    RateMode m;
    m.kind = mode == "rhs" ? RateMode::rhs : RateMode::datum;
    m.beta = P.num("beta", mode == "rhs" ? p.s : 0.5 * (1.0 - p.s));
    const double hi = P.num("delta_hi", mode == "rhs" ? 1e-5 : 1e-3);
    const double lo = P.num("delta_lo", mode == "rhs" ? 1e-9 : 1e-7);
    const long n = P.integer("delta_points", 10);
    const double tol = P.num("tol", 1e-7);
    P.finish();
    validate_mode(m, p.s);
    if (!(hi < 1.0 && lo > 0.0 && lo < hi)) throw DomainError("need 0 < delta_lo < delta_hi < 1");
    if (n < 6) throw DomainError("delta_points must be >= 6");
    const auto solver = m.kind == RateMode::rhs ? green_rate_solver(tol) : quadrature_rate_solver();
    const auto fit = rate_experiment(m, p, solver, geometric_grid(hi, lo, static_cast<int>(n)));
    const auto ex = expected_rate(m, p.s);
    Table t{{"delta", "value", "exponent", "log_factor", "expected_exponent", "expected_log_factor"}, {}};
    for (const auto& [d, v] : fit.samples) t.add({d, v, fit.exponent, fit.log_factor, ex.exponent, ex.log_factor});
    return t;
}

inline Table run_ko(Params& P) {
    const double s = P.num("s", 0.5);
    const std::string f = P.str("f", "power", {"power", "lower", "upper", "exp"});
    double param = 0.0;
    NonlinearProfile prof;
    if (!(s > 0.0 && s < 1.0)) throw DomainError("s must lie in (0,1)");
    if (f == "power") {
        param = P.num("p", 2.5);
        P.finish();
        prof = power_profile(param);
    } else if (f == "lower") {
        param = P.num("alpha", 1.0);
        P.finish();
        prof = lower_critical_profile(s, param);
    } else if (f == "upper") {
        param = P.num("beta", 1.2);
        P.finish();
        prof = upper_critical_profile(s, param);
    } else {
        P.finish();
        prof = exponential_profile();
    }
    const auto k = ko_classify(prof, s);
    const auto ex = expected_ko(f, s, param);
    Table t{{"profile", "parameter", "s", "KO", "L1", "E", "expected_KO", "expected_L1", "expected_E"}, {}};
    t.add({f, param, s, to_string(k.KO), to_string(k.L1), to_string(k.E), ex.KO, ex.L1, ex.E});
    return t;
}

inline Table run_spectral(Params& P, std::uint64_t seed) {
    const std::string demo = P.str("demo", "green", {"green", "composition", "h1", "kappa", "ladder"});
    if (demo == "ladder") {
        const double s = P.num("s", 0.75);
        const double p = P.num("p", 2.0);
        const long J = P.integer("levels", 5);
        P.finish();
        const auto L = large_solution_spectral(p, s, static_cast<int>(J), {0.1, 0.25, 0.5});
        Table t{{"j", "probe", "value", "envelope_exponent", "envelope_bound"}, {}};
        const double bound = -2.0 * s / (p - 1.0) - 0.05;
        for (std::size_t j = 0; j < L.probe_values.size(); ++j)
            for (std::size_t k = 0; k < L.probes.size(); ++k)
                t.add({static_cast<long>(j + 1), L.probes[k], L.probe_values[j][k], L.envelope_exponent, bound});
        return t;
    }
    const double s = P.num("s", 0.5);
    if (!(s > 0.0 && s < 1.0)) throw DomainError("s must lie in (0,1)");
    const EigenBasis B = interval_basis(1);
    if (demo == "green") {
        const long n = P.integer("pairs", 20);
        P.finish();
        Rng rng(seed, 0, 0);
        Table t{{"x", "y", "subordinated", "closed_form", "abs_diff"}, {}};
        for (long i = 0; i < n; ++i) {
            const double x = 0.02 + 0.96 * rng.uniform(), y = 0.02 + 0.96 * rng.uniform();
            const double a = green_subordinate(s, Vec{x}, Vec{y}, B), b = green_interval(s, x, y);
            t.add({x, y, a, b, std::abs(a - b)});
        }
        return t;
    }
    if (demo == "composition") {
        P.finish();
        Table t{{"kind", "x", "y", "lhs", "rhs", "abs_diff"}, {}};
        const double tol = 1e-11;
        for (auto [x, y] : std::vector<std::pair<double, double>>{{0.2, 0.6}, {0.5, 0.7}, {0.3, 0.9}}) {
            // the diagonal singularities are integrable; the nodes may round onto them
            auto g = [&](double z, double, double) {
                if (z <= 0.0 || z >= 1.0 || z == x || z == y) return 0.0;
                return green_interval(s, x, z) * green_interval(1.0 - s, z, y);
            };
            const double lhs = integrate_segment(g, 0.0, x, tol, 0, true).value +
                               integrate_segment(g, x, y, tol, 0, true).value +
                               integrate_segment(g, y, 1.0, tol, 0, true).value;
            const double rhs = std::min(x, y) * (1.0 - std::max(x, y));
            t.add({"green", x, y, lhs, rhs, std::abs(lhs - rhs)});
        }
        for (double x : {0.2, 0.5, 0.8}) {
            auto g = [&](double z, double, double) {
                if (z <= 0.0 || z >= 1.0 || z == x) return 0.0;
                return green_interval(1.0 - s, x, z) * spectral_poisson(Vec{z}, Vec{0.0}, s, B);
            };
            const double lhs = integrate_segment(g, 0.0, x, tol, 0, true).value +
                               integrate_segment(g, x, 1.0, tol, 0, true).value;
            t.add({"poisson", x, 0.0, lhs, 1.0 - x, std::abs(lhs - (1.0 - x))});
        }
        return t;
    }
    if (demo == "h1") {
        P.finish();
        Table t{{"delta", "h1", "expected_slope"}, {}};
        for (double d : geometric_grid(1e-2, 1e-4, 9)) t.add({d, h1_weight(Vec{d}, s, B), -(2.0 - 2.0 * s)});
        return t;
    }
    P.finish();
    const double C = detail::C_Ns(1, s);
    Table t{{"delta", "kappa", "kappa_delta2s", "bracket_lo", "bracket_hi"}, {}};
    for (double d : geometric_grid(0.2, 0.01, 8)) {
        const double k = jump_and_kill(Vec{d}, Vec{0.5 + 0.25 * (d < 0.5 ? 1.0 : -1.0)}, s, B).kappa_at_x;
        t.add({d, k, k * std::pow(d, 2.0 * s), 0.9 * C / s, 1.25 * C / s});
    }
    return t;
}

inline Table run_curvature(Params& P) {
    const std::string demo = P.str("demo", "es2", {"es2", "sweep", "nll", "prescribed"});
    if (demo == "sweep") {
        P.finish();
        const auto r = asymptotic_sweep(paraboloid_surface(), Vec{1.0, 0.0}, {0.4, 0.45, 0.49, 0.499});
        Table t{{"s", "scaled_K", "target", "deviation"}, {}};
        for (std::size_t i = 0; i < r.points.size(); ++i)
            t.add({r.points[i].first, r.points[i].second, r.target, r.deviations[i]});
        return t;
    }
    const double s = P.num("s", 0.3);
    detail::check_curvature_s(s);
    if (demo == "es2") {
        const long n = P.integer("points", 721);
        P.finish();
        if (n < 3) throw DomainError("points must be >= 3");
        std::vector<double> K(static_cast<std::size_t>(n));
        parallel_for(K.size(), [&](std::size_t k) { K[k] = es2_curvature(pi * k / (n - 1), s).value; });
        Table t{{"theta", "K"}, {}};
        for (long k = 0; k < n; ++k) t.add({pi * k / (n - 1), K[static_cast<std::size_t>(k)]});
        return t;
    }
    if (demo == "nll") {
        P.finish();
        GraphSurface ell;
        ell.f = [](std::span<const double> x) { return 0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]); };
        ell.hessian0 = std::vector<std::vector<double>>{{1.0, 0.0}, {0.0, 2.0}};
        const std::vector<std::pair<std::string, GraphSurface>> surfaces{
            {"paraboloid", paraboloid_surface()}, {"saddle", saddle_surface()}, {"elliptic", ell}};
        Table t{{"surface", "avg", "pv", "abs_diff"}, {}};
        for (const auto& [name, g] : surfaces) {
            const double a = mean_curvature_avg(g, s, 64).value, b = mean_curvature_pv(g, s).value;
            t.add({name, a, b, std::abs(a - b)});
        }
        return t;
    }
    P.finish();
    const auto r = prescribed_extrema(ArcSet{{{0.5 * pi, 0.5 * pi}}}, ArcSet{{{0.0, 0.0}}}, s);
    Table t{{"theta", "K", "role", "verified"}, {}};
    t.add({0.5 * pi, r.k_minus, "minus", r.verified});
    t.add({0.0, r.k_plus, "plus", r.verified});
    for (std::size_t i = 0; i < r.directions.size(); ++i) t.add({r.directions[i], r.curvatures[i], "test", r.verified});
    return t;
}

inline Table dispatch(RunConfig& cfg) {
    Params P(cfg.params);
    const std::string& c = cfg.command;
    if (c == "kernels") return run_kernels(P);
    if (c == "eval") return run_eval(P);
    if (c == "wos") return run_wos(P, cfg.seed);
    if (c == "ball") return run_ball(P);
    if (c == "rates") return run_rates(P);
    if (c == "ko") return run_ko(P);
    if (c == "spectral") return run_spectral(P, cfg.seed);
    if (c == "curvature") return run_curvature(P);
    throw DomainError("unknown command '" + c + "'");
}

inline json meta_of(const RunConfig& cfg) {
    json m;
    m["command"] = cfg.command;
    m["seed"] = cfg.seed;
    m["params"] = cfg.params;
    return m;
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DomainError("cannot write " + p.string());
    out << body;
    if (!out) throw DomainError("cannot write " + p.string());
}

// Runs one experiment into cfg.out_dir; returns the exit code.
inline int run(RunConfig cfg, std::ostream& err = std::cerr) {
    try {
        namespace fs = std::filesystem;
        if (std::find(commands().begin(), commands().end(), cfg.command) == commands().end())
            throw DomainError("unknown command '" + cfg.command + "'");
        std::error_code ec;
        fs::create_directories(cfg.out_dir, ec);
        if (!fs::is_directory(cfg.out_dir)) throw DomainError("output directory is not writable: " + cfg.out_dir);
        const Table t = dispatch(cfg);
        write_file(fs::path(cfg.out_dir) / "results.csv", t.str());
        write_file(fs::path(cfg.out_dir) / "meta.json", meta_of(cfg).dump(2) + "\n");
        return ok;
    } catch (const DomainError& e) {
        err << "precondition error: " << e.what() << "\n";
        return precondition;
    } catch (const IntegrabilityError& e) {
        err << "precondition error: " << e.what() << "\n";
        return precondition;
    } catch (const KOViolation& e) {
        err << "precondition error: " << e.what() << "\n";
        return precondition;
    } catch (const json::exception& e) {
        err << "precondition error: " << e.what() << "\n";
        return precondition;
    } catch (const ConvergenceError& e) {
        err << "convergence error: " << e.what() << "\n";
        return convergence;
    } catch (const SchemeViolation& e) {
        err << "convergence error: " << e.what() << "\n";
        return convergence;
    } catch (const ResolutionError& e) {
        err << "convergence error: " << e.what() << "\n";
        return convergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return failure;
    }
}

// Merges a JSON config file into cfg; keys already set by flags win.
inline void merge_config(RunConfig& cfg, const json& file, bool command_set, bool seed_set, bool out_set) {
    if (!file.is_object()) throw DomainError("config file must hold a JSON object");
    if (!command_set && file.contains("command")) cfg.command = file.at("command").get<std::string>();
    if (!seed_set && file.contains("seed")) cfg.seed = file.at("seed").get<std::uint64_t>();
    if (!out_set && file.contains("out")) cfg.out_dir = file.at("out").get<std::string>();
    if (file.contains("params")) {
        const json& p = file.at("params");
        if (!p.is_object()) throw DomainError("config params must be an object");
        for (auto it = p.begin(); it != p.end(); ++it)
            if (!cfg.params.contains(it.key())) cfg.params[it.key()] = it.value();
    }
}

// ---- report ----

struct Check {
    std::string name;
    std::string detail;
    bool pass;
};

inline std::vector<Check> checks_for(const json& meta, const Table& t) {
    std::vector<Check> out;
    const std::string cmd = meta.at("command").get<std::string>();
    const json& prm = meta.at("params");
    auto pstr = [&](const char* k, const char* d) { return prm.contains(k) ? prm.at(k).get<std::string>() : std::string(d); };
    auto pnum = [&](const char* k, double d) { return prm.contains(k) ? prm.at(k).get<double>() : d; };
    if (t.rows.empty()) return {{cmd, "results.csv has no rows", false}};

    if (cmd == "kernels") {
        bool pos = true;
        for (std::size_t i = 0; i < t.rows.size(); ++i) pos = pos && t.num(i, "value") > 0.0;
        out.push_back({"normalizing constants", "all tabulated values positive", pos});
    } else if (cmd == "eval") {
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const double v = t.num(i, "value"), target = t.num(i, "target"), tol = t.num(i, "tolerance");
            out.push_back({"operator value at x1=" + show(t.num(i, "x1")),
                           "|value - " + show(target) + "| <= " + show(tol), std::abs(v - target) <= tol});
        }
    } else if (cmd == "wos") {
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const double m = t.num(i, "mean"), se = t.num(i, "std_error"), ref = t.num(i, "reference");
            out.push_back({"walk-on-spheres mean", "within 3 stderr of the closed form", std::abs(m - ref) <= 3.0 * se});
            out.push_back({"walk-on-spheres stderr", "below 1% of the value", se < 0.01 * std::abs(ref)});
        }
    } else if (cmd == "ball") {
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const double v = t.num(i, "value"), ref = t.num(i, "reference");
            out.push_back({"ball solve at x1=" + show(t.num(i, "x1")), "relative error <= 1e-3",
                           std::abs(v - ref) <= 1e-3 * std::abs(ref)});
        }
    } else if (cmd == "rates") {
        std::vector<std::pair<double, double>> samples;
        for (std::size_t i = 0; i < t.rows.size(); ++i) samples.emplace_back(t.num(i, "delta"), t.num(i, "value"));
        const bool rhs = pstr("mode", "rhs") == "rhs";
        const auto fit = fit_rate(samples, rhs);
        const double ex = t.num(0, "expected_exponent");
        const bool exlog = t.text(0, "expected_log_factor") == "true";
        const double s = pnum("s", 0.4), beta = pnum("beta", s);
        std::string row = !rhs ? "datum row" : beta < s ? "first row" : beta == s ? "middle row" : "last row";
        std::string what = "exponent " + show(ex) + (exlog ? " with log factor" : "");
        out.push_back({"boundary rate, " + row, what + ", fitted " + show(fit.exponent) + (fit.log_factor ? " with log factor" : ""),
                       std::abs(fit.exponent - ex) <= 0.05 && fit.log_factor == exlog});
    } else if (cmd == "ko") {
        for (const char* k : {"KO", "L1", "E"}) {
            const std::string got = t.text(0, k), want = t.text(0, std::string("expected_") + k);
            out.push_back({std::string(k) + " classifier", "expected " + want + ", got " + got, got == want});
        }
    } else if (cmd == "spectral") {
        const std::string demo = pstr("demo", "green");
        if (demo == "green") {
            double worst = 0.0;
            for (std::size_t i = 0; i < t.rows.size(); ++i)
                worst = std::max(worst, std::abs(t.num(i, "subordinated") - t.num(i, "closed_form")));
            out.push_back({"Green function", "subordination vs series within 1e-6, worst " + show(worst), worst <= 1e-6});
        } else if (demo == "composition") {
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                const double d = std::abs(t.num(i, "lhs") - t.num(i, "rhs"));
                const bool green = t.text(i, "kind") == "green";
                const double tol = 1e-5;
                out.push_back({std::string(green ? "composition" : "Poisson identity") + " at x=" + show(t.num(i, "x")),
                               "within " + show(tol), d <= tol});
            }
        } else if (demo == "h1") {
            std::vector<double> lx, ly;
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                lx.push_back(std::log(t.num(i, "delta")));
                ly.push_back(std::log(t.num(i, "h1")));
            }
            const auto f = detail::least_squares(lx, ly);
            const double ex = t.num(0, "expected_slope");
            out.push_back({"h1 boundary rate", "slope " + show(f.slope) + " vs " + show(ex) + " within 0.05",
                           std::abs(f.slope - ex) <= 0.05});
        } else if (demo == "kappa") {
            bool in = true;
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                const double v = t.num(i, "kappa_delta2s");
                in = in && v >= t.num(i, "bracket_lo") && v <= t.num(i, "bracket_hi");
            }
            out.push_back({"killing rate", "kappa delta^2s inside the bracket", in});
        } else {
            std::map<double, std::vector<double>> by_probe;
            for (std::size_t i = 0; i < t.rows.size(); ++i) by_probe[t.num(i, "probe")].push_back(t.num(i, "value"));
            bool mono = true;
            for (const auto& [x, v] : by_probe)
                for (std::size_t j = 1; j < v.size(); ++j) mono = mono && v[j] >= v[j - 1] - 1e-8;
            out.push_back({"spectral ladder", "nondecreasing in j within 1e-8", mono});
            out.push_back({"spectral envelope", "exponent " + show(t.num(0, "envelope_exponent")) + " >= " +
                                                    show(t.num(0, "envelope_bound")),
                           t.num(0, "envelope_exponent") >= t.num(0, "envelope_bound")});
        }
    } else if (cmd == "curvature") {
        const std::string demo = pstr("demo", "es2");
        if (demo == "es2") {
            const std::size_t n = t.rows.size();
            std::size_t arg = 0;
            double mx = -std::numeric_limits<double>::infinity(), sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double k = t.num(i, "K");
                if (k > mx) {
                    mx = k;
                    arg = i;
                }
                if (i + 1 < n) sum += 0.5 * (k + t.num(i + 1, "K")) * (t.num(i + 1, "theta") - t.num(i, "theta"));
            }
            const double step = t.num(1, "theta") - t.num(0, "theta");
            out.push_back({"quartic surface minimum", "K = 0 at theta = 0", t.num(0, "theta") == 0.0 && t.num(0, "K") == 0.0});
            bool half = false;
            for (std::size_t i = 0; i < n; ++i)
                if (std::abs(t.num(i, "theta") - 0.5 * pi) < 0.5 * step) half = t.num(i, "K") == 0.0;
            out.push_back({"quartic surface minimum", "K = 0 at theta = pi/2", half});
            out.push_back({"quartic surface maximum", "argmax within one grid step of pi/4",
                           std::abs(t.num(arg, "theta") - 0.25 * pi) <= step});
            const double H = sum / (t.num(n - 1, "theta") - t.num(0, "theta"));
            const double ratio = H / (0.5 * mx);
            out.push_back({"quartic surface mean vs principal average", "ratio " + show(ratio) + " >= 4/pi - 0.02",
                           ratio >= 4.0 / pi - 0.02});
        } else if (demo == "sweep") {
            const std::size_t n = t.rows.size();
            bool dec = true;
            for (std::size_t i = n >= 3 ? n - 2 : 1; i < n; ++i)
                dec = dec && t.num(i, "deviation") <= t.num(i - 1, "deviation") + 1e-12;
            out.push_back({"asymptotic sweep", "deviations nonincreasing on the tail", dec});
            out.push_back({"asymptotic sweep", "final deviation < 0.05", t.num(n - 1, "deviation") < 0.05});
        } else if (demo == "nll") {
            for (std::size_t i = 0; i < t.rows.size(); ++i)
                out.push_back({"mean curvature identity, " + t.text(i, "surface"), "average vs principal value within 1e-3",
                               std::abs(t.num(i, "avg") - t.num(i, "pv")) <= 1e-3});
        } else {
            double km = 0, kp = 0;
            bool ok_order = true;
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                if (t.text(i, "role") == "minus") km = t.num(i, "K");
                if (t.text(i, "role") == "plus") kp = t.num(i, "K");
            }
            for (std::size_t i = 0; i < t.rows.size(); ++i)
                if (t.text(i, "role") == "test") {
                    const double k = t.num(i, "K");
                    ok_order = ok_order && k > km + 1e-6 && k < kp - 1e-6;
                }
            out.push_back({"prescribed extrema", "strict ordering on the test directions", ok_order});
        }
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DomainError("missing " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Prints one line per check; 0 when all pass, 1 on any failure, 2 on missing
// or unreadable files.
inline int report(const std::string& dir, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<Check> cs;
    try {
        const auto meta = json::parse(read_file(std::filesystem::path(dir) / "meta.json"));
        const auto t = parse_csv(read_file(std::filesystem::path(dir) / "results.csv"));
        cs = checks_for(meta, t);
    } catch (const std::exception& e) {
        err << "report: " << e.what() << "\n";
        return precondition;
    }
    bool all = true;
    for (const auto& c : cs) {
        out << c.name << ": " << c.detail << ": " << (c.pass ? "PASS" : "FAIL") << "\n";
        all = all && c.pass;
    }
    return all ? ok : failure;
}

}  // namespace nonlocal_lab::cli

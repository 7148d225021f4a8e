#include <CLI11.hpp>

#include <nonlocal_lab/cli.hpp>

namespace cli = nonlocal_lab::cli;

int main(int argc, char** argv) {
    CLI::App app{"nonlocal_lab: experiments for fractional operators"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run one experiment and write results.csv and meta.json");
    std::string command, config_path, out_dir;
    std::uint64_t seed = 1;
    std::vector<std::string> sets;
    run->add_option("command", command, "kernels | eval | wos | ball | rates | ko | spectral | curvature");
    run->add_option("--config", config_path, "JSON file with command, seed, out and params");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "random seed");
    run->add_option("--set", sets, "extra parameter as key=value (repeatable)");

    // Numeric and string parameters forwarded into params under the given key.
    struct Flag {
        const char* name;
        const char* key;
        const char* help;
        std::string value;
    };
    std::vector<Flag> flags{
        {"--s", "s", "fractional order", {}},
        {"--dim", "dim", "space dimension", {}},
        {"--samples", "samples", "Monte Carlo samples", {}},
        {"--kappa", "kappa", "walk-on-spheres ball fraction", {}},
        {"--max-steps", "max_steps", "walk step cap", {}},
        {"--f", "f", "nonlinearity: power | lower | upper | exp", {}},
        {"--p", "p", "power exponent", {}},
        {"--alpha", "alpha", "log exponent of the lower critical profile", {}},
        {"--beta", "beta", "datum or rhs exponent, or log exponent of the upper critical profile", {}},
        {"--sigma", "sigma", "exponent of the explicit s-harmonic family", {}},
        {"--mode", "mode", "rates mode: rhs | datum", {}},
        {"--demo", "demo", "demo name for spectral and curvature", {}},
        {"--field", "field", "eval field: sharmonic | torsion", {}},
    };
    for (auto& f : flags) run->add_option(f.name, f.value, f.help);

    auto* rep = app.add_subcommand("report", "check a finished run against its thresholds");
    std::string report_dir;
    rep->add_option("dir", report_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::precondition;
    }

    if (*rep) return cli::report(report_dir);

    cli::RunConfig cfg;
    try {
        cfg.command = command;
        cfg.seed = seed;
        cfg.out_dir = out_dir.empty() ? "." : out_dir;
        // numeric strings are parsed and range-checked by the experiment
        for (const auto& f : flags)
            if (!f.value.empty()) cfg.params[f.key] = f.value;
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) throw nonlocal_lab::DomainError("--set expects key=value");
            cfg.params[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw nonlocal_lab::DomainError("cannot read config " + config_path);
            const auto file = cli::json::parse(in);
            cli::merge_config(cfg, file, !command.empty(), run->count("--seed") > 0, !out_dir.empty());
        }
        if (cfg.command.empty()) throw nonlocal_lab::DomainError("no command given");
    } catch (const std::exception& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return cli::precondition;
    }
    return cli::run(cfg);
}

// chemotax <mode> --config <path> [--jobs N] [--out DIR] [--gnuplot]
//
// Modes: simulate | convergence | energy-report | optimize | validate.
// Exit codes: 0 ok, 2 config error, 3 solver failure, 4 invariant violation.
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "chemotax/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"chemotaxis-consumption simulation and optimal control toolkit"};
    app.require_subcommand(0, 1);

    std::string config_path;
    std::string out_dir;
    int jobs = 0;
    bool gnuplot = false;
    std::string mode_arg;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory (overrides config)");
        sub->add_option("--jobs", jobs, "sweep-level parallelism");
        sub->add_flag("--gnuplot", gnuplot, "print plot column descriptions");
    };
    for (const char* m : {"simulate", "convergence", "energy-report", "optimize", "validate"})
        add_common(app.add_subcommand(m));

    CLI11_PARSE(app, argc, argv);

    if (app.get_subcommands().empty()) {
        std::fprintf(stderr, "error: a mode subcommand is required\n%s", app.help().c_str());
        return chemotax::kExitConfig;
    }
    mode_arg = app.get_subcommands().front()->get_name();

    try {
        chemotax::RunConfig cfg = chemotax::parse_config(config_path);
        using Mode = chemotax::RunConfig::Mode;
        Mode want = Mode::Validate;
        if (mode_arg == "simulate") want = Mode::Simulate;
        else if (mode_arg == "convergence") want = Mode::Convergence;
        else if (mode_arg == "energy-report") want = Mode::EnergyReport;
        else if (mode_arg == "optimize") want = Mode::Optimize;
        if (cfg.mode != want)
            throw chemotax::ConfigError(
                {"mode: config declares a different mode than the '" + mode_arg + "' subcommand"});
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (jobs > 0) cfg.jobs = jobs;
        if (gnuplot) cfg.gnuplot = true;
        return chemotax::execute(cfg);
    } catch (const chemotax::ConfigError& e) {
        std::fprintf(stderr, "{\"error\":\"config\",\"problems\":[");
        for (size_t i = 0; i < e.problems.size(); ++i)
            std::fprintf(stderr, "%s\"%s\"", i ? "," : "", e.problems[i].c_str());
        std::fprintf(stderr, "]}\n");
        return chemotax::kExitConfig;
    } catch (const chemotax::InvariantViolation& e) {
        std::fprintf(stderr, "{\"error\":\"invariant\",\"message\":\"%s\"}\n", e.what());
        return chemotax::kExitInvariant;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "{\"error\":\"solver\",\"message\":\"%s\"}\n", e.what());
        return chemotax::kExitSolver;
    }
}

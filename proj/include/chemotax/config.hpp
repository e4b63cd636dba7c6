// Configuration-driven entry point: parse a JSON run description, execute the
// selected mode, and write machine-readable artifacts (manifest.json + CSVs).
#pragma once

#include <cstdint>

#include "chemotax/control.hpp"
#include "chemotax/diagnostics.hpp"

namespace chemotax {

// All validation problems found in a config, each with a field path.
struct ConfigError : std::runtime_error {
    std::vector<std::string> problems;
    explicit ConfigError(std::vector<std::string> probs)
        : std::runtime_error(probs.empty() ? "invalid config" : probs.front()),
          problems(std::move(probs)) {}
};

struct InitialRecipe {
    std::string type = "constant";  // constant | gaussian | csv | perturbed_constant
    double value = 0.0;             // constant / perturbed_constant
    double base = 0.0;              // gaussian offset
    double amplitude = 1.0;
    std::array<double, 2> center{0.5, 0.5};
    double width = 0.1;
    double noise = 0.0;  // perturbed_constant: uniform(-noise, noise), seeded
    std::string path;    // csv

    Field materialize(const GridSpec& grid, std::uint64_t seed) const;
};

struct ControlConfig {
    double gamma_u = 1.0, gamma_v = 0.0, gamma_f = 1e-2;
    double q = 3.0;
    double p_u = 0.0;
    double f_lo = -1.0, f_hi = 1.0;
    // Mask: a coordinate rectangle [x0,x1] (x [y0,y1] in 2D) or explicit cells.
    bool mask_is_rect = true;
    std::array<double, 4> mask_rect{0.0, 1.0, 0.0, 1.0};
    std::vector<int> mask_cells;
    // Targets: constant fields, a reference run driven by a known control, or
    // per-step CSV files with a printf-style %d pattern.
    std::string target_type = "constant";  // constant | reference_run | files
    double target_u = 0.0, target_v = 0.0;
    double reference_f_value = 0.0;
    std::string u_pattern, v_pattern;
    double vi_tol = 1e-6;
    int max_iters = 200;
    std::string f_init = "zero";  // zero | constant
    double f_init_value = 0.0;

    Field build_mask(const GridSpec& grid) const;
};

struct RunConfig {
    enum class Mode { Simulate, Convergence, EnergyReport, Optimize, Validate };
    Mode mode = Mode::Simulate;
    GridSpec grid;
    SchemeParams scheme;
    InitialRecipe u0_recipe, v0_recipe;
    std::string out_dir = "out";
    int stride = 1;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool gnuplot = false;

    // convergence mode
    std::string study = "self_convergence";  // | interpolant_gap | variant_agreement
    std::vector<double> k_values;
    std::vector<double> m_values;

    ControlConfig control;

    // raw JSON text, echoed into the manifest
    std::string raw_json;
};

// Parse and validate; reports every problem found, not just the first.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<inline>");

// Execute a validated config; returns the process exit code (0 ok, 3 solver
// failure, 4 invariant violation) and writes all artifacts under out_dir.
int execute(const RunConfig& config);

// Exit codes used by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitInvariant = 4;

}  // namespace chemotax

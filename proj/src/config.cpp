#include "chemotax/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace chemotax {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int log_level() {
    static int level = [] {
        const char* env = std::getenv("CHEMOTAX_LOG");
        if (!env) return 1;
        std::string v(env);
        if (v == "silent") return 0;
        if (v == "debug") return 2;
        return 1;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "chemotax: %s\n", msg.c_str());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError({"cannot open config file: " + path});
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("failed to write " + path.string());
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Field access with error accumulation keyed by JSON path.
struct Checker {
    const json& root;
    std::vector<std::string>& problems;

    const json* get(const json& obj, const std::string& path) const {
        const json* cur = &obj;
        std::string tok;
        std::istringstream ss(path);
        while (std::getline(ss, tok, '.')) {
            if (!cur->is_object() || !cur->contains(tok)) return nullptr;
            cur = &(*cur)[tok];
        }
        return cur;
    }

    template <typename T>
    T value_or(const std::string& path, T fallback) {
        const json* v = get(root, path);
        if (!v) return fallback;
        try {
            return v->get<T>();
        } catch (const json::exception&) {
            problems.push_back(path + ": wrong type");
            return fallback;
        }
    }

    bool has(const std::string& path) const { return get(root, path) != nullptr; }

    template <typename T>
    T require(const std::string& path, T fallback) {
        if (!has(path)) {
            problems.push_back(path + ": missing required field");
            return fallback;
        }
        return value_or<T>(path, fallback);
    }
};

InitialRecipe parse_recipe(Checker& ck, const std::string& prefix) {
    InitialRecipe r;
    r.type = ck.value_or<std::string>(prefix + ".type", "constant");
    r.value = ck.value_or<double>(prefix + ".value", 0.0);
    r.base = ck.value_or<double>(prefix + ".base", 0.0);
    r.amplitude = ck.value_or<double>(prefix + ".amplitude", 1.0);
    r.width = ck.value_or<double>(prefix + ".width", 0.1);
    r.noise = ck.value_or<double>(prefix + ".noise", 0.0);
    r.path = ck.value_or<std::string>(prefix + ".path", "");
    auto center = ck.value_or<std::vector<double>>(prefix + ".center", {0.5, 0.5});
    for (size_t i = 0; i < std::min<size_t>(2, center.size()); ++i) r.center[i] = center[i];
    if (r.type != "constant" && r.type != "gaussian" && r.type != "csv" &&
        r.type != "perturbed_constant")
        ck.problems.push_back(prefix + ".type: unknown recipe '" + r.type + "'");
    if (r.type == "csv") {
        if (r.path.empty())
            ck.problems.push_back(prefix + ".path: required for csv recipe");
        else if (!fs::exists(r.path))
            ck.problems.push_back(prefix + ".path: file not found: " + r.path);
    }
    if (r.type == "gaussian" && !(r.width > 0.0))
        ck.problems.push_back(prefix + ".width: must be positive");
    return r;
}

}  // namespace

Field InitialRecipe::materialize(const GridSpec& grid, std::uint64_t seed) const {
    if (type == "constant") return Field(grid, value);
    if (type == "gaussian") {
        const double w2 = 2.0 * width * width;
        const double cx = center[0], cy = center[1], b = base, a = amplitude;
        return Field::sample(grid, [=](double x, double y) {
            double r2 = (x - cx) * (x - cx);
            if (grid.dim == 2) r2 += (y - cy) * (y - cy);
            return b + a * std::exp(-r2 / w2);
        });
    }
    if (type == "perturbed_constant") {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(-noise, noise);
        Field f(grid, value);
        for (double& v : f.values) v = std::max(0.0, v + dist(rng));
        return f;
    }
    if (type == "csv") return field_from_csv(read_file(path));
    throw std::invalid_argument("InitialRecipe: unknown type " + type);
}

Field ControlConfig::build_mask(const GridSpec& grid) const {
    Field mask(grid, 0.0);
    if (mask_is_rect) {
        for (int j = 0; j < grid.cells[1]; ++j)
            for (int i = 0; i < grid.cells[0]; ++i) {
                const double x = grid.center(i, 0);
                const double y = grid.dim == 2 ? grid.center(j, 1) : 0.5;
                const bool inx = x >= mask_rect[0] && x <= mask_rect[1];
                const bool iny = grid.dim == 1 || (y >= mask_rect[2] && y <= mask_rect[3]);
                if (inx && iny) mask.at(i, j) = 1.0;
            }
    } else {
        for (int c : mask_cells)
            if (c >= 0 && c < grid.cell_count()) mask[c] = 1.0;
    }
    return mask;
}

RunConfig parse_config(const std::string& path) {
    return parse_config_text(read_file(path), path);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError({origin + ": not valid JSON: " + e.what()});
    }
    std::vector<std::string> problems;
    Checker ck{root, problems};
    RunConfig cfg;
    cfg.raw_json = root.dump(2);

    const std::string mode = ck.require<std::string>("mode", "simulate");
    if (mode == "simulate") cfg.mode = RunConfig::Mode::Simulate;
    else if (mode == "convergence") cfg.mode = RunConfig::Mode::Convergence;
    else if (mode == "energy-report") cfg.mode = RunConfig::Mode::EnergyReport;
    else if (mode == "optimize") cfg.mode = RunConfig::Mode::Optimize;
    else if (mode == "validate") cfg.mode = RunConfig::Mode::Validate;
    else problems.push_back("mode: must be simulate|convergence|energy-report|optimize|validate");

    // grid
    const int dim = ck.value_or<int>("grid.dim", 1);
    auto cells = ck.value_or<std::vector<int>>("grid.cells", {64});
    auto lengths = ck.value_or<std::vector<double>>("grid.lengths", {1.0});
    if (dim != 1 && dim != 2) problems.push_back("grid.dim: must be 1 or 2");
    if (static_cast<int>(cells.size()) < dim) problems.push_back("grid.cells: need one entry per axis");
    if (static_cast<int>(lengths.size()) < dim) lengths.resize(static_cast<size_t>(dim), 1.0);
    for (int a = 0; a < dim && a < static_cast<int>(cells.size()); ++a) {
        if (cells[static_cast<size_t>(a)] < 2) problems.push_back("grid.cells: need >= 2 cells per axis");
        if (!(lengths[static_cast<size_t>(a)] > 0.0)) problems.push_back("grid.lengths: must be positive");
    }
    if (problems.empty()) {
        cfg.grid = dim == 1 ? GridSpec::line(cells[0], lengths[0])
                            : GridSpec::rect(cells[0], cells[1], lengths[0], lengths[1]);
    }

    // scheme
    cfg.scheme.k = ck.value_or<double>("scheme.k", cfg.scheme.k);
    cfg.scheme.T_final = ck.value_or<double>("scheme.T_final", cfg.scheme.T_final);
    cfg.scheme.model.s = ck.value_or<double>("scheme.s", cfg.scheme.model.s);
    cfg.scheme.model.m = ck.value_or<double>("scheme.m", cfg.scheme.model.m);
    cfg.scheme.model.alpha = ck.value_or<double>("scheme.alpha", cfg.scheme.model.alpha);
    cfg.scheme.model.alpha_max = ck.value_or<double>("scheme.alpha_max", cfg.scheme.model.alpha_max);
    cfg.scheme.picard_tol = ck.value_or<double>("scheme.picard_tol", cfg.scheme.picard_tol);
    cfg.scheme.picard_max = ck.value_or<int>("scheme.picard_max", cfg.scheme.picard_max);
    cfg.scheme.linear.rel_tol = ck.value_or<double>("scheme.linear_tol", cfg.scheme.linear.rel_tol);
    const std::string variant = ck.value_or<std::string>("scheme.v_variant", "from_z");
    if (variant == "from_z") cfg.scheme.v_variant = VVariant::FromZ;
    else if (variant == "from_u") cfg.scheme.v_variant = VVariant::FromU;
    else problems.push_back("scheme.v_variant: must be from_z|from_u");
    const std::string flux = ck.value_or<std::string>("scheme.flux_scheme", "central");
    if (flux == "central") cfg.scheme.flux_scheme = FluxScheme::Central;
    else if (flux == "upwind") cfg.scheme.flux_scheme = FluxScheme::Upwind;
    else problems.push_back("scheme.flux_scheme: must be central|upwind");
    if (!(cfg.scheme.k > 0.0)) problems.push_back("scheme.k: must be positive");
    if (cfg.scheme.T_final < cfg.scheme.k) problems.push_back("scheme.T_final: must be >= scheme.k");
    if (cfg.scheme.model.s < 1.0) problems.push_back("scheme.s: must be >= 1");
    if (cfg.scheme.model.m < 1.0) problems.push_back("scheme.m: must be >= 1");
    if (!(cfg.scheme.model.alpha > 0.0) || cfg.scheme.model.alpha > cfg.scheme.model.alpha_max)
        problems.push_back("scheme.alpha: need 0 < alpha <= alpha_max");
    if (!(cfg.scheme.picard_tol > 0.0)) problems.push_back("scheme.picard_tol: must be positive");

    cfg.u0_recipe = parse_recipe(ck, "initial.u");
    cfg.v0_recipe = parse_recipe(ck, "initial.v");
    cfg.out_dir = ck.value_or<std::string>("output.dir", "out");
    cfg.stride = ck.value_or<int>("output.stride", 1);
    if (cfg.stride < 1) problems.push_back("output.stride: must be >= 1");
    cfg.seed = ck.value_or<std::uint64_t>("seed", 0);
    cfg.jobs = ck.value_or<int>("jobs", 1);
    if (cfg.jobs < 1) problems.push_back("jobs: must be >= 1");

    if (cfg.mode == RunConfig::Mode::Convergence) {
        cfg.study = ck.value_or<std::string>("convergence.study", "self_convergence");
        if (cfg.study != "self_convergence" && cfg.study != "interpolant_gap" &&
            cfg.study != "variant_agreement")
            problems.push_back("convergence.study: unknown study '" + cfg.study + "'");
        cfg.k_values = ck.require<std::vector<double>>("convergence.k_values", {});
        cfg.m_values = ck.value_or<std::vector<double>>("convergence.m_values", {});
        if (cfg.k_values.size() < 2) problems.push_back("convergence.k_values: need at least 2 values");
        for (size_t i = 1; i < cfg.k_values.size(); ++i)
            if (!(cfg.k_values[i] < cfg.k_values[i - 1]))
                problems.push_back("convergence.k_values: must be strictly decreasing");
    }

    if (cfg.mode == RunConfig::Mode::Optimize) {
        if (!ck.has("control")) {
            problems.push_back("control: required block missing for optimize mode");
        } else {
            ControlConfig& cc = cfg.control;
            cc.gamma_u = ck.value_or<double>("control.gamma_u", cc.gamma_u);
            cc.gamma_v = ck.value_or<double>("control.gamma_v", cc.gamma_v);
            cc.gamma_f = ck.value_or<double>("control.gamma_f", cc.gamma_f);
            cc.q = ck.value_or<double>("control.q", cc.q);
            cc.p_u = ck.value_or<double>("control.p_u", cc.p_u);
            cc.f_lo = ck.value_or<double>("control.box.lo", cc.f_lo);
            cc.f_hi = ck.value_or<double>("control.box.hi", cc.f_hi);
            cc.vi_tol = ck.value_or<double>("control.vi_tol", cc.vi_tol);
            cc.max_iters = ck.value_or<int>("control.max_iters", cc.max_iters);
            cc.f_init = ck.value_or<std::string>("control.f_init", cc.f_init);
            cc.f_init_value = ck.value_or<double>("control.f_init_value", cc.f_init_value);
            if (ck.has("control.mask.rect")) {
                cc.mask_is_rect = true;
                auto rect = ck.value_or<std::vector<double>>("control.mask.rect", {});
                if (rect.size() != 2 && rect.size() != 4)
                    problems.push_back("control.mask.rect: need [x0,x1] or [x0,x1,y0,y1]");
                for (size_t i = 0; i < std::min<size_t>(4, rect.size()); ++i) cc.mask_rect[i] = rect[i];
            } else if (ck.has("control.mask.cells")) {
                cc.mask_is_rect = false;
                cc.mask_cells = ck.value_or<std::vector<int>>("control.mask.cells", {});
            }
            if (!(cc.gamma_u > 0.0)) problems.push_back("control.gamma_u: must be positive");
            if (!(cc.q > 1.0)) problems.push_back("control.q: must exceed 1");
            if (!(cc.gamma_f > 0.0) && !(std::isfinite(cc.f_lo) && std::isfinite(cc.f_hi)))
                problems.push_back("control: need gamma_f > 0 or a bounded box");
            if (!ck.has("control.targets")) {
                problems.push_back("control.targets: required block missing");
            } else {
                cc.target_type = ck.value_or<std::string>("control.targets.type", "constant");
                cc.target_u = ck.value_or<double>("control.targets.u", 0.0);
                cc.target_v = ck.value_or<double>("control.targets.v", 0.0);
                cc.reference_f_value = ck.value_or<double>("control.targets.f_value", 0.0);
                cc.u_pattern = ck.value_or<std::string>("control.targets.u_pattern", "");
                cc.v_pattern = ck.value_or<std::string>("control.targets.v_pattern", "");
                if (cc.target_type != "constant" && cc.target_type != "reference_run" &&
                    cc.target_type != "files")
                    problems.push_back("control.targets.type: unknown '" + cc.target_type + "'");
                if (cc.target_type == "files" && (cc.u_pattern.empty() || cc.v_pattern.empty()))
                    problems.push_back("control.targets: files type needs u_pattern and v_pattern");
            }
        }
    }

    if (!problems.empty()) throw ConfigError(std::move(problems));
    return cfg;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

namespace {

struct Manifest {
    json j;
    std::vector<std::string> outputs;

    void add_output(const std::string& name) { outputs.push_back(name); }
    void finalize(const fs::path& dir, double wall_seconds) {
        j["wall_time_seconds"] = wall_seconds;
        j["outputs"] = outputs;
        write_file(dir / "manifest.json", j.dump(2) + "\n");
    }
};

std::string step_csv_name(const char* var, int n) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "step_%05d_%s.csv", n, var);
    return buf;
}

void export_trajectory(const Trajectory& traj, const fs::path& dir, int stride, Manifest& man) {
    json steps = json::array();
    for (int n = 0; n <= traj.step_count(); ++n) {
        const TimeStep& st = traj.steps[static_cast<size_t>(n)];
        steps.push_back({{"n", st.n},
                         {"t", traj.time_of(n)},
                         {"picard_iters", st.picard_iters},
                         {"picard_residual", st.picard_residual},
                         {"mass", integrate(st.u)},
                         {"u_min", st.u.min()},
                         {"v_max", st.v.max()},
                         {"z_max", st.z.max()}});
        if (n % stride == 0 || n == traj.step_count()) {
            for (const char* var : {"u", "v", "z"}) {
                const Field& f = var[0] == 'u' ? st.u : (var[0] == 'v' ? st.v : st.z);
                const std::string name = step_csv_name(var, n);
                write_file(dir / name, field_to_csv(f));
                man.add_output(name);
            }
        }
    }
    man.j["steps"] = steps;
    man.j["step_count"] = traj.step_count();
}

void export_energy_report(const EnergyReport& rep, const fs::path& dir, Manifest& man) {
    std::ostringstream csv;
    csv << "n,energy,energy_scheme,delta_energy,grad_increment,consumption_grad,"
           "hessian_sq,quartic,u_dissipation,rhs_driver,mass,mass_drift_rel,"
           "telescoping_slack,gradient_budget_slack\n";
    for (const EnergyStepTerms& t : rep.per_step) {
        csv << t.n << ',' << fmt(t.energy) << ',' << fmt(t.energy_scheme) << ','
            << fmt(t.delta_energy) << ',' << fmt(t.grad_increment) << ','
            << fmt(t.consumption_grad) << ',' << fmt(t.hessian_sq) << ',' << fmt(t.quartic) << ','
            << fmt(t.u_dissipation) << ',' << fmt(t.rhs_driver) << ',' << fmt(t.mass) << ','
            << fmt(t.mass_drift_rel) << ',' << fmt(t.telescoping_slack) << ','
            << fmt(t.gradient_budget_slack) << "\n";
    }
    write_file(dir / "energy.csv", csv.str());
    man.add_output("energy.csv");
    man.j["energy_summary"] = {
        {"max_mass_drift_rel", rep.max_mass_drift_rel},
        {"min_telescoping_slack", rep.min_telescoping_slack},
        {"min_gradient_budget_slack", rep.min_gradient_budget_slack},
        {"gradient_budget_bound", rep.gradient_budget_bound},
        {"lemma_budgets_pass", rep.lemma_budgets_pass},
        {"inferred_energy_ratio", rep.inferred_energy_ratio},
    };
    write_file(dir / "energy_summary.json", man.j["energy_summary"].dump(2) + "\n");
    man.add_output("energy_summary.json");
}

void export_rate_csv(const fs::path& dir, const std::string& name,
                     const std::vector<double>& ks, const std::vector<double>& vals,
                     Manifest& man) {
    std::ostringstream csv;
    csv << "k,value\n";
    for (size_t i = 0; i < ks.size(); ++i) csv << fmt(ks[i]) << ',' << fmt(vals[i]) << "\n";
    write_file(dir / name, csv.str());
    man.add_output(name);
}

int execute_validate(const RunConfig& cfg, const fs::path& dir, Manifest& man);

void print_gnuplot_help(const RunConfig& cfg) {
    std::printf("# column descriptions for plotting\n");
    switch (cfg.mode) {
        case RunConfig::Mode::EnergyReport:
            std::printf("energy.csv: 1=n 2=energy 3=energy_scheme 4=delta_energy 5=grad_increment "
                        "6=consumption_grad 7=hessian_sq 8=quartic 9=u_dissipation 10=rhs_driver "
                        "11=mass 12=mass_drift_rel 13=telescoping_slack 14=gradient_budget_slack\n");
            break;
        case RunConfig::Mode::Convergence:
            std::printf("*_rate.csv: 1=k 2=value (log-log plot; slope in manifest.json)\n");
            break;
        case RunConfig::Mode::Optimize:
            std::printf("iterations.csv: 1=iter 2=J 3=gradient_norm 4=vi_residual 5=step_size\n");
            break;
        default:
            std::printf("step_NNNNN_{u,v,z}.csv: 1=i 2=j 3=value\n");
            break;
    }
}

}  // namespace

int execute(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    Manifest man;
    man.j["version"] = "0.1.0";
    man.j["config"] = json::parse(cfg.raw_json);
    int exit_code = kExitOk;

    if (cfg.gnuplot) print_gnuplot_help(cfg);

    Field u0, v0;
    if (cfg.mode != RunConfig::Mode::Validate) {
        u0 = cfg.u0_recipe.materialize(cfg.grid, cfg.seed);
        v0 = cfg.v0_recipe.materialize(cfg.grid, cfg.seed + 1);
    }

    switch (cfg.mode) {
        case RunConfig::Mode::Simulate: {
            Trajectory traj = run(u0, v0, cfg.scheme);
            export_trajectory(traj, dir, cfg.stride, man);
            log_info("simulate: " + std::to_string(traj.step_count()) + " steps");
            break;
        }
        case RunConfig::Mode::EnergyReport: {
            Trajectory traj = run(u0, v0, cfg.scheme);
            EnergyReport rep = energy_report(traj);
            export_trajectory(traj, dir, cfg.stride, man);
            export_energy_report(rep, dir, man);
            if (!rep.lemma_budgets_pass) exit_code = kExitInvariant;
            break;
        }
        case RunConfig::Mode::Convergence: {
            StudySetup setup{u0, v0, cfg.scheme, cfg.jobs};
            if (cfg.study == "interpolant_gap") {
                GapRateStudy study = interpolant_gap_rate(setup, cfg.k_values);
                export_rate_csv(dir, "u_gap_rate.csv", study.u_fit.k_values, study.u_fit.values, man);
                export_rate_csv(dir, "z_gap_rate.csv", study.z_fit.k_values, study.z_fit.values, man);
                man.j["rates"] = {{"u_gap_slope", study.u_fit.slope},
                                  {"z_gap_slope", study.z_fit.slope},
                                  {"u_gap_correlation", study.u_fit.correlation},
                                  {"z_gap_correlation", study.z_fit.correlation}};
            } else if (cfg.study == "variant_agreement") {
                VariantAgreementStudy study = variant_agreement(setup, cfg.k_values);
                export_rate_csv(dir, "variant_rate.csv", study.k_values, study.differences, man);
                man.j["rates"] = {{"variant_slope", study.fit.slope},
                                  {"variant_correlation", study.fit.correlation}};
            } else {
                SelfConvergenceStudy study = self_convergence(setup, cfg.k_values, cfg.m_values);
                export_rate_csv(dir, "cauchy_u_rate.csv", study.k_values, study.u_cauchy, man);
                export_rate_csv(dir, "cauchy_v_rate.csv", study.k_values, study.v_cauchy, man);
                man.j["rates"] = {{"u_cauchy_monotone", study.monotone},
                                  {"min_reduction_factor", study.min_reduction_factor},
                                  {"m_saturation_diff", study.m_saturation_diff},
                                  {"u_slope", study.u_fit.slope}};
            }
            break;
        }
        case RunConfig::Mode::Optimize: {
            ControlProblem pb;
            pb.grid = cfg.grid;
            pb.mask = cfg.control.build_mask(cfg.grid);
            pb.gamma_u = cfg.control.gamma_u;
            pb.gamma_v = cfg.control.gamma_v;
            pb.gamma_f = cfg.control.gamma_f;
            pb.q = cfg.control.q;
            pb.p_u = cfg.control.p_u;
            pb.model = cfg.scheme.model;
            pb.k = cfg.scheme.k;
            pb.T_final = cfg.scheme.T_final;
            pb.u0 = u0;
            pb.v0 = v0;
            pb.f_lo = cfg.control.f_lo;
            pb.f_hi = cfg.control.f_hi;
            pb.linear = cfg.scheme.linear;
            const int N = pb.n_steps();
            if (cfg.control.target_type == "constant") {
                pb.u_target.assign(static_cast<size_t>(N), Field(cfg.grid, cfg.control.target_u));
                pb.v_target.assign(static_cast<size_t>(N), Field(cfg.grid, cfg.control.target_v));
            } else if (cfg.control.target_type == "reference_run") {
                ControlField f_ref = ControlField::constant(pb, cfg.control.reference_f_value);
                Trajectory ref = state_solve_controlled(u0, v0, f_ref, pb);
                for (int n = 1; n <= N; ++n) {
                    pb.u_target.push_back(ref.steps[static_cast<size_t>(n)].u);
                    pb.v_target.push_back(ref.steps[static_cast<size_t>(n)].v);
                }
                man.j["reference_cost"] = cost_J(ref, f_ref, pb);
            } else {  // files
                char buf[512];
                for (int n = 1; n <= N; ++n) {
                    std::snprintf(buf, sizeof(buf), cfg.control.u_pattern.c_str(), n);
                    pb.u_target.push_back(field_from_csv(read_file(buf)));
                    std::snprintf(buf, sizeof(buf), cfg.control.v_pattern.c_str(), n);
                    pb.v_target.push_back(field_from_csv(read_file(buf)));
                }
            }
            OptimizeOptions opts;
            opts.vi_tol = cfg.control.vi_tol;
            opts.max_iters = cfg.control.max_iters;
            ControlField f_init = cfg.control.f_init == "constant"
                                      ? ControlField::constant(pb, cfg.control.f_init_value)
                                      : ControlField::zeros(pb);
            ControlIterate sol = projected_gradient(pb, f_init, opts);

            std::ostringstream csv;
            csv << "iter,J,gradient_norm,vi_residual,step_size\n";
            for (const auto& row : sol.history)
                csv << row.iteration << ',' << fmt(row.J) << ',' << fmt(row.gradient_norm) << ','
                    << fmt(row.vi_residual) << ',' << fmt(row.step_size) << "\n";
            write_file(dir / "iterations.csv", csv.str());
            man.add_output("iterations.csv");
            for (int n = 1; n <= N; ++n) {
                const std::string name = step_csv_name("f", n);
                write_file(dir / name, field_to_csv(sol.f.at_step(n)));
                man.add_output(name);
            }
            man.j["optimize_summary"] = {{"J", sol.J_value},
                                         {"gradient_norm", sol.gradient_norm},
                                         {"vi_residual", sol.vi_residual},
                                         {"iterations", sol.iterations},
                                         {"converged", sol.converged},
                                         {"stalled", sol.stalled}};
            break;
        }
        case RunConfig::Mode::Validate:
            exit_code = execute_validate(cfg, dir, man);
            break;
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man.finalize(dir, wall);
    return exit_code;
}

namespace {

// The canned invariant suite behind `chemotax validate`.
int execute_validate(const RunConfig& cfg, const fs::path& dir, Manifest& man) {
    (void)cfg;
    struct Check {
        std::string name;
        bool pass;
        double value;
    };
    std::vector<Check> checks;
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Grid consistency on a 2D grid: divergence theorem and Laplacian symmetry.
    {
        GridSpec g = GridSpec::rect(17, 13, 1.0, 0.7);
        FaceData fd(g);
        for (double& v : fd.x_faces) v = unit(rng) - 0.5;
        for (double& v : fd.y_faces) v = unit(rng) - 0.5;
        const double div_int = std::abs(integrate(div_faces(fd)));
        checks.push_back({"divergence_theorem", div_int <= 1e-12, div_int});

        Field f(g), h(g);
        for (double& v : f.values) v = unit(rng);
        for (double& v : h.values) v = unit(rng);
        const double sym = std::abs(dot(neumann_laplacian(f), h) - dot(f, neumann_laplacian(h)));
        const double rel = sym / std::max(1.0, std::abs(dot(neumann_laplacian(f), h)));
        checks.push_back({"laplacian_symmetry", rel <= 1e-12, rel});

        Field ones(g, 1.0);
        checks.push_back({"quadrature_constant",
                          std::abs(integrate(ones) - g.domain_volume()) <= 1e-12,
                          integrate(ones)});
    }

    // Discrete-derivative identity on random pairs.
    {
        GridSpec g = GridSpec::line(64, 1.0);
        Field a(g), b(g);
        for (double& v : a.values) v = 0.5 + unit(rng);
        for (double& v : b.values) v = 0.5 + unit(rng);
        const double res = eyre_identity_check(a, b, 1.0 / 64.0);
        checks.push_back({"eyre_identity", res <= 1e-12, res});
    }

    // Exact budgets on a canned run.
    {
        GridSpec g = GridSpec::line(64, 1.0);
        Field u0 = Field::sample(g, [](double x) { return 2.0 * std::exp(-20.0 * (x - 0.4) * (x - 0.4)); });
        Field v0 = Field::sample(g, [](double x) { return 1.0 + 0.5 * std::cos(3.14159265358979 * x); });
        SchemeParams p;
        p.k = 1.0 / 32.0;
        p.T_final = 0.25;
        Trajectory traj = run(u0, v0, p);
        EnergyReport rep = energy_report(traj);
        checks.push_back({"mass_conservation", rep.max_mass_drift_rel <= 1e-10, rep.max_mass_drift_rel});
        checks.push_back({"z_telescoping", rep.min_telescoping_slack >= -1e-8, rep.min_telescoping_slack});
        checks.push_back({"gradient_budget", rep.min_gradient_budget_slack >= -1e-8,
                          rep.min_gradient_budget_slack});
    }

    bool all = true;
    json results = json::array();
    for (const Check& c : checks) {
        std::printf("[%s] %s (%.3e)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value);
        results.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}});
        all = all && c.pass;
    }
    man.j["validate"] = results;
    write_file(dir / "validate.json", results.dump(2) + "\n");
    man.add_output("validate.json");
    return all ? kExitOk : kExitInvariant;
}

}  // namespace

}  // namespace chemotax

#include "chemotax/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

namespace chemotax {

double hessian_norm_sq(const Field& z) {
    const GridSpec& g = z.grid;
    const int nx = g.cells[0], ny = g.cells[1];
    const double ihx2 = 1.0 / (g.h(0) * g.h(0));
    // Reflected ghosts: the mirror cell carries the same value, so the second
    // difference at a boundary cell collapses to (neighbor - center)/h^2.
    auto zval = [&](int i, int j) {
        i = std::clamp(i, 0, nx - 1);
        j = std::clamp(j, 0, ny - 1);
        return z.at(i, j);
    };
    double total = 0.0;
    if (g.dim == 1) {
        for (int i = 0; i < nx; ++i) {
            const double zxx = (zval(i - 1, 0) - 2.0 * z.at(i, 0) + zval(i + 1, 0)) * ihx2;
            total += zxx * zxx;
        }
        return total * g.cell_volume();
    }
    const double ihy2 = 1.0 / (g.h(1) * g.h(1));
    const double ihxy = 1.0 / (4.0 * g.h(0) * g.h(1));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double zxx = (zval(i - 1, j) - 2.0 * z.at(i, j) + zval(i + 1, j)) * ihx2;
            const double zyy = (zval(i, j - 1) - 2.0 * z.at(i, j) + zval(i, j + 1)) * ihy2;
            const double zxy = (zval(i + 1, j + 1) - zval(i + 1, j - 1) - zval(i - 1, j + 1) +
                                zval(i - 1, j - 1)) * ihxy;
            total += zxx * zxx + 2.0 * zxy * zxy + zyy * zyy;
        }
    return total * g.cell_volume();
}

EnergyReport energy_report(const Trajectory& traj) {
    if (traj.steps.empty()) throw std::invalid_argument("energy_report: empty trajectory");
    const SchemeParams& p = traj.params;
    const double s = p.model.s, m = p.model.m, a = p.model.alpha;
    const double k = p.k;
    const Field& u0 = traj.steps[0].u;
    const Field& z0 = traj.steps[0].z;

    const double mass0 = integrate(u0);
    const double mass_scale = std::max(std::abs(mass0), 1e-300);
    const double z0_sq = l2_norm(z0) * l2_norm(z0);
    // v0 + alpha^2 == z0^2, so the budget constant is ||z0^2||^2 / (4 alpha^2).
    const double budget = dot(pointwise_mul(z0, z0), pointwise_mul(z0, z0)) / (4.0 * a * a);

    EnergyReport rep;
    rep.gradient_budget_bound = budget;
    rep.min_telescoping_slack = std::numeric_limits<double>::infinity();
    rep.min_gradient_budget_slack = std::numeric_limits<double>::infinity();

    auto clamp0 = [](const Field& f) { return map_field(f, [](double v) { return v < 0.0 ? 0.0 : v; }); };
    double prev_scheme_energy = energy_E_scheme(clamp0(u0), z0, p.model);
    double telescoping_sum = 0.0;
    double grad_sum = 0.0;
    double lhs_aggregate = 0.0, driver_aggregate = 0.0;

    for (int n = 1; n <= traj.step_count(); ++n) {
        const TimeStep& cur = traj.steps[static_cast<size_t>(n)];
        const TimeStep& prev = traj.steps[static_cast<size_t>(n - 1)];
        EnergyStepTerms t;
        t.n = n;

        Field u_pos = clamp0(cur.u);
        Field tu = map_field(u_pos, [m](double v) { return tm_cap(v, m); });
        FaceData gz = grad_faces(cur.z);
        Field gz_sq_cells = face_square_cellavg(gz);

        t.energy = energy_E(u_pos, cur.z, s);
        t.energy_scheme = energy_E_scheme(u_pos, cur.z, p.model);
        t.delta_energy = (t.energy_scheme - prev_scheme_energy) / k;
        prev_scheme_energy = t.energy_scheme;

        t.grad_increment = 0.5 / k * face_norm_sq(grad_faces(cur.z - prev.z));
        Field ts = map_field(tu, [s](double v) { return std::pow(v, s); });
        t.consumption_grad = dot(ts, gz_sq_cells);
        t.hessian_sq = hessian_norm_sq(cur.z);
        t.quartic = dot(pointwise_div(gz_sq_cells, pointwise_mul(cur.z, cur.z)), gz_sq_cells);
        if (s >= 2.0) {
            Field w = map_field(tu, [s](double v) { return std::pow(v, 0.5 * s); });
            t.u_dissipation = face_norm_sq(grad_faces(w));
        } else {
            Field w = map_field(tu, [](double v) { return std::sqrt(v + 1.0); });
            t.u_dissipation = face_norm_sq(grad_faces(w));
        }
        t.rhs_driver = face_norm_sq(gz);

        t.mass = integrate(cur.u);
        t.mass_drift_rel = std::abs(t.mass - mass0) / mass_scale;

        telescoping_sum += l2_norm(cur.z - prev.z) * l2_norm(cur.z - prev.z);
        const double zn_sq = l2_norm(cur.z) * l2_norm(cur.z);
        t.telescoping_slack = z0_sq - zn_sq - telescoping_sum;

        grad_sum += k * t.rhs_driver;
        t.gradient_budget_slack = budget - grad_sum;

        rep.max_mass_drift_rel = std::max(rep.max_mass_drift_rel, t.mass_drift_rel);
        rep.min_telescoping_slack = std::min(rep.min_telescoping_slack, t.telescoping_slack);
        rep.min_gradient_budget_slack = std::min(rep.min_gradient_budget_slack, t.gradient_budget_slack);

        lhs_aggregate += k * std::max(0.0, t.delta_energy + t.grad_increment + 0.25 * t.consumption_grad);
        driver_aggregate += k * t.rhs_driver;

        rep.per_step.push_back(std::move(t));
    }

    rep.inferred_energy_ratio = driver_aggregate > 0.0 ? lhs_aggregate / driver_aggregate : 0.0;
    rep.lemma_budgets_pass = rep.max_mass_drift_rel <= 1e-10 &&
                             rep.min_telescoping_slack >= -1e-8 &&
                             rep.min_gradient_budget_slack >= -1e-8;
    return rep;
}

RateFit fit_rate(const std::vector<double>& k_values, const std::vector<double>& values) {
    if (k_values.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 samples");
    if (k_values.size() != values.size()) throw std::invalid_argument("fit_rate: size mismatch");
    for (size_t i = 1; i < k_values.size(); ++i)
        if (!(k_values[i] < k_values[i - 1]))
            throw std::invalid_argument("fit_rate: k must be strictly decreasing");
    RateFit fit;
    fit.k_values = k_values;
    fit.values = values;
    const size_t n = values.size();
    std::vector<double> xs(n), ys(n);
    for (size_t i = 0; i < n; ++i) {
        if (!(values[i] > 0.0)) throw std::invalid_argument("fit_rate: values must be positive");
        xs[i] = std::log(k_values[i]);
        ys[i] = std::log(values[i]);
    }
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) { mx += xs[i]; my += ys[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.correlation = syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 1.0;
    return fit;
}

GapNorms interpolant_gap(const Trajectory& traj) {
    const double k = traj.params.k;
    const double s = traj.params.model.s;
    const double pu = s < 2.0 ? s : 2.0;
    GapNorms out;
    for (int n = 1; n <= traj.step_count(); ++n) {
        const Field du = traj.steps[static_cast<size_t>(n)].u - traj.steps[static_cast<size_t>(n - 1)].u;
        const Field dz = traj.steps[static_cast<size_t>(n)].z - traj.steps[static_cast<size_t>(n - 1)].z;
        // On each interval the gap equals theta(t) * increment with theta
        // sweeping (0, 1], and the integral of theta^2 over the interval is k/3.
        const double nu = lp_norm(du, pu);
        out.u_gap_sq += (k / 3.0) * nu * nu;
        const double nz2 = l2_norm(dz) * l2_norm(dz) + face_norm_sq(grad_faces(dz));
        out.z_gap_sq += (k / 3.0) * nz2;
    }
    return out;
}

std::vector<Trajectory> run_many(const StudySetup& setup, const std::vector<SchemeParams>& params) {
    std::vector<Trajectory> out(params.size());
    if (setup.jobs <= 1 || params.size() <= 1) {
        for (size_t i = 0; i < params.size(); ++i) out[i] = run(setup.u0, setup.v0, params[i]);
        return out;
    }
    std::vector<std::future<Trajectory>> futs;
    futs.reserve(params.size());
    for (const SchemeParams& p : params)
        futs.push_back(std::async(std::launch::async,
                                  [&setup, p] { return run(setup.u0, setup.v0, p); }));
    for (size_t i = 0; i < futs.size(); ++i) out[i] = futs[i].get();
    return out;
}

GapRateStudy interpolant_gap_rate(const StudySetup& setup, const std::vector<double>& k_list) {
    std::vector<SchemeParams> params;
    for (double k : k_list) {
        SchemeParams p = setup.base;
        p.k = k;
        params.push_back(p);
    }
    std::vector<Trajectory> trajs = run_many(setup, params);
    std::vector<double> ug, zg;
    for (const Trajectory& traj : trajs) {
        GapNorms gaps = interpolant_gap(traj);
        ug.push_back(gaps.u_gap_sq);
        zg.push_back(gaps.z_gap_sq);
    }
    GapRateStudy study;
    study.u_fit = fit_rate(k_list, ug);
    study.z_fit = fit_rate(k_list, zg);
    return study;
}

namespace {

double cauchy_difference(const Trajectory& coarse, const Trajectory& fine,
                         const Field TimeStep::*member) {
    if (!(coarse.grid == fine.grid))
        throw std::invalid_argument("cauchy_difference: grid mismatch");
    if (fine.step_count() != 2 * coarse.step_count())
        throw std::invalid_argument("cauchy_difference: fine run must halve the time step");
    const double kf = fine.params.k;
    double total = 0.0;
    for (int j = 1; j <= fine.step_count(); ++j) {
        const int nc = (j + 1) / 2;  // coarse interval covering fine interval j
        const Field& a = coarse.steps[static_cast<size_t>(nc)].*member;
        const Field& b = fine.steps[static_cast<size_t>(j)].*member;
        const double d = l2_norm(a - b);
        total += kf * d * d;
    }
    return std::sqrt(total);
}

}  // namespace

double cauchy_difference_u(const Trajectory& coarse, const Trajectory& fine) {
    return cauchy_difference(coarse, fine, &TimeStep::u);
}

double cauchy_difference_v(const Trajectory& coarse, const Trajectory& fine) {
    return cauchy_difference(coarse, fine, &TimeStep::v);
}

SelfConvergenceStudy self_convergence(const StudySetup& setup, const std::vector<double>& k_list,
                                      const std::vector<double>& m_list) {
    if (k_list.size() < 2) throw std::invalid_argument("self_convergence: need at least 2 k values");
    for (size_t i = 1; i < k_list.size(); ++i)
        if (std::abs(k_list[i] - 0.5 * k_list[i - 1]) > 1e-12 * k_list[i - 1])
            throw std::invalid_argument("self_convergence: k_list must be dyadic");

    std::vector<SchemeParams> params;
    for (double k : k_list) {
        SchemeParams p = setup.base;
        p.k = k;
        params.push_back(p);
    }
    std::vector<Trajectory> trajs = run_many(setup, params);

    SelfConvergenceStudy study;
    for (size_t i = 0; i + 1 < trajs.size(); ++i) {
        study.k_values.push_back(k_list[i]);
        study.u_cauchy.push_back(cauchy_difference_u(trajs[i], trajs[i + 1]));
        study.v_cauchy.push_back(cauchy_difference_v(trajs[i], trajs[i + 1]));
    }
    study.monotone = true;
    study.min_reduction_factor = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < study.u_cauchy.size(); ++i) {
        if (!(study.u_cauchy[i + 1] < study.u_cauchy[i])) study.monotone = false;
        study.min_reduction_factor =
            std::min(study.min_reduction_factor, study.u_cauchy[i] / study.u_cauchy[i + 1]);
    }
    if (study.u_cauchy.size() >= 3) study.u_fit = fit_rate(study.k_values, study.u_cauchy);

    // m-saturation: with every m in the list above max u, the truncation is
    // inactive and the Picard path is identical, so runs must agree to roundoff.
    study.m_saturation_diff = 0.0;
    if (m_list.size() >= 2) {
        SchemeParams p = setup.base;
        p.k = k_list.front();
        std::vector<Trajectory> mruns;
        for (double m : m_list) {
            p.model.m = m;
            mruns.push_back(run(setup.u0, setup.v0, p));
        }
        for (size_t i = 0; i + 1 < mruns.size(); ++i)
            for (size_t n = 0; n < mruns[i].steps.size(); ++n) {
                study.m_saturation_diff = std::max(
                    study.m_saturation_diff,
                    linf_norm(mruns[i].steps[n].u - mruns[i + 1].steps[n].u));
                study.m_saturation_diff = std::max(
                    study.m_saturation_diff,
                    linf_norm(mruns[i].steps[n].v - mruns[i + 1].steps[n].v));
            }
    }
    return study;
}

VariantAgreementStudy variant_agreement(const StudySetup& setup, const std::vector<double>& k_list) {
    std::vector<SchemeParams> params;
    for (double k : k_list) {
        SchemeParams p = setup.base;
        p.k = k;
        p.v_variant = VVariant::FromZ;
        params.push_back(p);
    }
    std::vector<Trajectory> trajs = run_many(setup, params);
    VariantAgreementStudy study;
    for (size_t ix = 0; ix < trajs.size(); ++ix) {
        const Trajectory& traj = trajs[ix];
        const double k = k_list[ix];
        // The (u, z) path does not depend on the variant, so the FromU chain
        // can be rebuilt over the same trajectory.
        double total = 0.0;
        Field v_u = traj.steps[0].v;
        for (int n = 1; n <= traj.step_count(); ++n) {
            v_u = v_update_from_u(v_u, traj.steps[static_cast<size_t>(n)].u, params[ix]);
            const double d = l2_norm(traj.steps[static_cast<size_t>(n)].v - v_u);
            total += k * d * d;
        }
        study.k_values.push_back(k);
        study.differences.push_back(std::sqrt(total));
    }
    if (study.k_values.size() >= 3) study.fit = fit_rate(study.k_values, study.differences);
    return study;
}

}  // namespace chemotax

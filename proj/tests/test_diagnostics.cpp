#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "chemotax/diagnostics.hpp"
#include "doctest.h"

using namespace chemotax;

namespace {
constexpr double kPi = 3.14159265358979323846;

StudySetup smooth_setup(int cells = 64) {
    StudySetup s;
    GridSpec g = GridSpec::line(cells, 1.0);
    s.u0 = Field::sample(g, [](double x) {
        return 2.0 * std::exp(-(x - 0.35) * (x - 0.35) / (2 * 0.12 * 0.12));
    });
    s.v0 = Field::sample(g, [](double x) {
        return 0.4 + std::exp(-(x - 0.65) * (x - 0.65) / (2 * 0.15 * 0.15));
    });
    s.base.k = 1.0 / 16.0;
    s.base.T_final = 0.25;
    s.base.model = {1.0, 10.0, 0.1, 0.1};
    return s;
}
}  // namespace

TEST_CASE("energy_report: zero-u constant-v trajectory has zero terms and slacks") {
    GridSpec g = GridSpec::line(32, 1.0);
    SchemeParams p;
    p.k = 1.0 / 16.0;
    p.T_final = 0.25;
    Trajectory traj = run(Field(g, 0.0), Field(g, 1.0), p);
    EnergyReport rep = energy_report(traj);
    for (const EnergyStepTerms& t : rep.per_step) {
        CHECK(std::abs(t.energy) < 1e-10);
        CHECK(std::abs(t.grad_increment) < 1e-10);
        CHECK(std::abs(t.consumption_grad) < 1e-10);
        CHECK(std::abs(t.hessian_sq) < 1e-10);
        CHECK(std::abs(t.quartic) < 1e-10);
        CHECK(std::abs(t.rhs_driver) < 1e-10);
        CHECK(std::abs(t.mass_drift_rel) == 0.0);
    }
    // Telescoping slack may be positive (consumption), never below -1e-8.
    CHECK(rep.min_telescoping_slack >= -1e-8);
    CHECK(rep.lemma_budgets_pass);
}

TEST_CASE("energy_report: budgets with the explicit Lemma constant on a live run") {
    StudySetup s = smooth_setup();
    Trajectory traj = run(s.u0, s.v0, s.base);
    EnergyReport rep = energy_report(traj);
    CHECK(rep.max_mass_drift_rel <= 1e-10);
    CHECK(rep.min_telescoping_slack >= -1e-8);
    CHECK(rep.min_gradient_budget_slack >= -1e-8);

    // The budget bound is (1/(4 alpha^2)) ||v0 + alpha^2||^2, computed directly.
    const double a2 = 0.1 * 0.1;
    Field v0pa = map_field(s.v0, [a2](double v) { return v + a2; });
    const double direct = l2_norm(v0pa) * l2_norm(v0pa) / (4.0 * a2);
    CHECK(rep.gradient_budget_bound == doctest::Approx(direct).epsilon(1e-12));

    // max |z| is nonincreasing along the run.
    for (size_t n = 1; n < traj.steps.size(); ++n)
        CHECK(traj.steps[n].z.max() <= traj.steps[n - 1].z.max() + 1e-8);

    CHECK(rep.inferred_energy_ratio >= 0.0);
    for (const EnergyStepTerms& t : rep.per_step) {
        CHECK(std::isfinite(t.u_dissipation));
        CHECK(std::isfinite(t.quartic));
        CHECK(std::isfinite(t.hessian_sq));
    }
}

TEST_CASE("hessian_norm_sq: analytic value on cos(pi x)") {
    // z = cos(pi x): z'' = -pi^2 cos(pi x), integral of z''^2 = pi^4 / 2.
    auto value = [](int n) {
        GridSpec g = GridSpec::line(n, 1.0);
        Field z = Field::sample(g, [](double x) { return std::cos(kPi * x); });
        return hessian_norm_sq(z);
    };
    const double exact = 0.5 * kPi * kPi * kPi * kPi;
    CHECK(std::abs(value(256) - exact) / exact < 2e-2);
    CHECK(std::abs(value(512) - exact) / exact < 1e-2);
}

TEST_CASE("fit_rate recovers exact power laws and validates input") {
    std::vector<double> ks{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> vals;
    for (double k : ks) vals.push_back(3.0 * std::pow(k, 1.7));
    RateFit fit = fit_rate(ks, vals);
    CHECK(fit.slope == doctest::Approx(1.7).epsilon(1e-10));
    CHECK(fit.correlation == doctest::Approx(1.0).epsilon(1e-10));

    CHECK_THROWS_AS(fit_rate({0.1, 0.2, 0.3}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(fit_rate({0.1, 0.05}, {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(fit_rate(ks, {1, 2, 3, 0}), std::invalid_argument);
}

TEST_CASE("interpolant_gap: identically zero on a time-constant solution") {
    GridSpec g = GridSpec::line(32, 1.0);
    SchemeParams p;
    p.k = 1.0 / 16.0;
    p.T_final = 0.5;
    // u0 constant, v0 = 0: z stays at alpha, u stays at c; all increments vanish.
    Trajectory traj = run(Field(g, 1.5), Field(g, 0.0), p);
    GapNorms gaps = interpolant_gap(traj);
    CHECK(gaps.u_gap_sq <= 1e-20);
    CHECK(gaps.z_gap_sq <= 1e-20);
}

TEST_CASE("interpolant_gap matches a direct quadrature of the interpolants") {
    StudySetup s = smooth_setup(32);
    s.base.T_final = 4 * s.base.k;
    Trajectory traj = run(s.u0, s.v0, s.base);
    GapNorms gaps = interpolant_gap(traj);

    // Independent oracle: Gauss-Legendre 4-point quadrature of
    // ||z_pc(t) - z_lin(t)||_{H^1}^2 per interval (exact for the quadratic
    // integrand in t).
    const double nodes[4] = {-0.861136311594052575, -0.339981043584856265,
                             0.339981043584856265, 0.861136311594052575};
    const double weights[4] = {0.347854845137453857, 0.652145154862546143,
                               0.652145154862546143, 0.347854845137453857};
    double z_gap = 0.0;
    const double k = s.base.k;
    for (int n = 1; n <= traj.step_count(); ++n) {
        for (int qd = 0; qd < 4; ++qd) {
            const double t = (n - 0.5 + 0.5 * nodes[qd]) * k;
            auto [upc, zpc] = interpolant_pc(traj, t);
            auto [ulin, zlin] = interpolant_lin(traj, t);
            Field dz = zpc - zlin;
            const double h1 = l2_norm(dz) * l2_norm(dz) + face_norm_sq(grad_faces(dz));
            z_gap += 0.5 * k * weights[qd] * h1;
        }
    }
    CHECK(gaps.z_gap_sq == doctest::Approx(z_gap).epsilon(1e-10));
}

TEST_CASE("self_convergence: m-saturation when m exceeds max u, divergence when not") {
    StudySetup s = smooth_setup(32);
    s.base.T_final = 0.125;
    SelfConvergenceStudy study =
        self_convergence(s, {1.0 / 16, 1.0 / 32, 1.0 / 64}, {10.0, 20.0});
    CHECK(study.m_saturation_diff <= 1e-12);
    CHECK(study.monotone);

    // u0 above m everywhere: the truncation is active and runs must differ.
    StudySetup s2 = s;
    s2.u0 = Field(s.u0.grid, 6.0);
    SelfConvergenceStudy study2 = self_convergence(s2, {1.0 / 16, 1.0 / 32}, {2.0, 4.0});
    CHECK(study2.m_saturation_diff > 1e-6);
}

TEST_CASE("variant_agreement: FromZ and FromU converge to each other in k") {
    // Band-limited data: a single cosine mode is never stiff over this k
    // range, so the measured order is the clean O(k) one instead of being
    // polluted by an under-resolved initial layer.
    StudySetup s;
    GridSpec g = GridSpec::line(48, 1.0);
    s.u0 = Field::sample(g, [](double x) { return 1.0 + 0.5 * std::cos(kPi * x); });
    s.v0 = Field::sample(g, [](double x) { return 0.8 + 0.3 * std::cos(kPi * x); });
    s.base.T_final = 0.5;
    s.base.model = {1.0, 10.0, 0.1, 0.1};
    VariantAgreementStudy study =
        variant_agreement(s, {1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256});
    for (size_t i = 0; i + 1 < study.differences.size(); ++i)
        CHECK(study.differences[i + 1] < study.differences[i]);
    CHECK(study.fit.slope >= 0.9);
}

TEST_CASE("run_many is deterministic across jobs settings") {
    StudySetup s = smooth_setup(32);
    s.base.T_final = 0.125;
    std::vector<SchemeParams> params;
    for (double k : {1.0 / 8, 1.0 / 16, 1.0 / 32}) {
        SchemeParams p = s.base;
        p.k = k;
        params.push_back(p);
    }
    s.jobs = 1;
    auto seq = run_many(s, params);
    s.jobs = 3;
    auto par = run_many(s, params);
    REQUIRE(seq.size() == par.size());
    for (size_t i = 0; i < seq.size(); ++i) {
        REQUIRE(seq[i].steps.size() == par[i].steps.size());
        for (size_t n = 0; n < seq[i].steps.size(); ++n)
            CHECK(linf_norm(seq[i].steps[n].u - par[i].steps[n].u) == 0.0);
    }
}

// Truncated time-discrete scheme in the (u, z) variables, z = sqrt(v + alpha^2):
//
//   du/dt - Lap u = -div( T_m(u) grad(z^2) )
//   dz/dt - |grad z|^2 / z - Lap z = -(1/2) T_m(u)^s (z - alpha^2/z)
//
// discretized by implicit Euler and solved per step with a Picard alternation.
// v is reconstructed either algebraically from z or by one implicit heat step.
#pragma once

#include "chemotax/grid.hpp"
#include "chemotax/model.hpp"

namespace chemotax {

enum class VVariant { FromZ, FromU };
enum class FluxScheme { Central, Upwind };

struct SchemeParams {
    double k = 1.0 / 64.0;
    double T_final = 1.0;
    ModelParams model;
    VVariant v_variant = VVariant::FromZ;
    FluxScheme flux_scheme = FluxScheme::Central;
    double picard_tol = 1e-9;
    int picard_max = 200;
    SolveOptions linear;

    void validate() const;
};

struct TimeStep {
    int n = 0;
    Field u, z, v;
    int picard_iters = 0;
    double picard_residual = 0.0;
};

struct Trajectory {
    SchemeParams params;
    GridSpec grid;
    std::vector<TimeStep> steps;  // steps[0] holds (u0, z0 = sqrt(v0 + alpha^2), v0)

    int step_count() const { return static_cast<int>(steps.size()) - 1; }
    double time_of(int n) const { return n * params.k; }
};

// Thrown when the per-step Picard alternation fails to converge.
struct NonconvergenceError : SolverError {
    using SolverError::SolverError;
};

// Thrown by run(); carries the steps accepted before the failure.
struct RunError : std::runtime_error {
    Trajectory partial;
    RunError(const std::string& msg, Trajectory traj)
        : std::runtime_error(msg), partial(std::move(traj)) {}
};

// Step 0: z = sqrt(v0 + alpha^2). Rejects negative initial data.
TimeStep initialize(const Field& u0, const Field& v0, const SchemeParams& params);

// One accepted implicit step. Checks the pointwise bounds u >= -tol,
// alpha - tol <= z <= max(z_prev) + tol afterwards and fails loudly beyond
// tol = 1e-8 (they are theorem conclusions; a violation means a solver bug).
TimeStep step(const TimeStep& prev, const SchemeParams& params);

// v = z^2 - alpha^2 (the algebraic variant).
Field v_update_from_z(const Field& z_n, double alpha);

// Solve (I/k - Lap + T_m(u_n)^s) v = v_prev / k (the heat-step variant).
// Discrete maximum principle: 0 <= v <= max(v_prev).
Field v_update_from_u(const Field& v_prev, const Field& u_n, const SchemeParams& params);

// ceil(T_final / k) accepted steps from the given data.
Trajectory run(const Field& u0, const Field& v0, const SchemeParams& params);

// Time interpolants of (u, z). The piecewise-constant one takes the step-n
// value on (t_{n-1}, t_n]; the piecewise-linear one connects consecutive steps.
std::pair<Field, Field> interpolant_pc(const Trajectory& traj, double t);
std::pair<Field, Field> interpolant_lin(const Trajectory& traj, double t);

// Max-norm residual of the discrete-derivative identity for F(z) = z^2:
//   (dz) 2 z_n  =  d(z^2) + (1/k)(z_n - z_prev)^2,   dz = (z_n - z_prev)/k.
// Exact algebraically; the return value is floating-point noise.
double eyre_identity_check(const Field& z_n, const Field& z_prev, double k);

// Face flux T_m(u) * grad(z^2) under the given flux scheme (central average of
// T_m(u) or donor-cell value by the sign of the face gradient).
FaceData chemotaxis_flux(const Field& u, const Field& z, const SchemeParams& params);

// Residual of the two scheme equations at (u, z) given the previous step,
// relative to the previous step's scale. This is what Picard drives below tol.
double scheme_residual(const Field& u, const Field& z, const TimeStep& prev,
                       const SchemeParams& params);

}  // namespace chemotax

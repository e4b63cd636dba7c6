// Bilinear optimal control of the chemotaxis-consumption system:
//
//   min J(u, v, f) = gamma_u/p int ||u - u_d||_p^p + gamma_v/2 int ||v - v_d||^2
//                  + gamma_f/q int_{Omega_c} ||f||_q^q
//
// subject to the controlled state system with the control acting through
// + f v 1_{Omega_c} in the chemical equation. The forward solve is linearly
// implicit (coefficients frozen at the previous step), its adjoint is the
// exact transpose of the discrete forward map, so the gradient
//   gamma_f sgn(f)|f|^{q-1} + v eta   on Omega_c
// matches central finite differences of the discrete cost to solver tolerance.
#pragma once

#include <cmath>
#include <limits>

#include "chemotax/scheme.hpp"

namespace chemotax {

// Rejected control/state configuration (stability guard, bad box, ...).
struct ControlError : std::runtime_error {
    double suggested_k = 0.0;
    explicit ControlError(const std::string& msg, double suggestion = 0.0)
        : std::runtime_error(msg), suggested_k(suggestion) {}
};

struct ControlProblem {
    GridSpec grid;
    Field mask;  // indicator of Omega_c, values in {0, 1}
    double gamma_u = 1.0;
    double gamma_v = 0.0;
    double gamma_f = 1e-2;
    double q = 3.0;    // control exponent (> 5/2 by default; q = 2 supported)
    double p_u = 0.0;  // tracking exponent for the u term; 0 selects s*q
    ModelParams model;
    double k = 1.0 / 64.0;
    double T_final = 0.25;
    Field u0, v0;
    std::vector<Field> u_target, v_target;  // one field per step 1..N
    double f_lo = -std::numeric_limits<double>::infinity();
    double f_hi = std::numeric_limits<double>::infinity();
    SolveOptions linear;

    int n_steps() const { return static_cast<int>(std::ceil(T_final / k - 1e-12)); }
    double tracking_exponent() const { return p_u > 0.0 ? p_u : model.s * q; }
    bool box_bounded() const { return std::isfinite(f_lo) && std::isfinite(f_hi); }
    void validate() const;
};

// Time-indexed control: one field per step 1..N, supported on the mask.
struct ControlField {
    std::vector<Field> steps;

    static ControlField zeros(const ControlProblem& pb);
    static ControlField constant(const ControlProblem& pb, double value);  // masked

    Field& at_step(int n) { return steps.at(static_cast<size_t>(n - 1)); }
    const Field& at_step(int n) const { return steps.at(static_cast<size_t>(n - 1)); }
    int n_steps() const { return static_cast<int>(steps.size()); }
};

// Multipliers for the state equations of steps 1..N plus the zero terminal
// slice (index N+1), mirroring lambda(T) = eta(T) = 0.
struct AdjointPair {
    std::vector<Field> lambda_steps, eta_steps;  // size N+1; entry n-1 is step n

    const Field& lambda(int n) const { return lambda_steps.at(static_cast<size_t>(n - 1)); }
    const Field& eta(int n) const { return eta_steps.at(static_cast<size_t>(n - 1)); }
};

// Forward trajectory of the linearly-implicit controlled scheme:
//   u-step: u/k - Lap u = u_prev/k - div( avg(T_m(u_prev)) grad v_prev )
//   v-step: v/k - Lap v + (T_m(u)^s - f 1_c) v = v_prev/k
// The f term is implicit; the step is rejected if 1/k + T_m(u)^s - f loses
// positivity anywhere (ControlError carries a suggested k).
Trajectory state_solve_controlled(const Field& u0, const Field& v0, const ControlField& f,
                                  const ControlProblem& pb);

double cost_J(const Trajectory& traj, const ControlField& f, const ControlProblem& pb);

// Adjoint sources from the cost: g_lambda = gamma_u sgn(u - u_d)|u - u_d|^{p-1},
// g_eta = gamma_v (v - v_d).
std::vector<Field> adjoint_source_lambda(const Trajectory& traj, const ControlProblem& pb);
std::vector<Field> adjoint_source_eta(const Trajectory& traj, const ControlProblem& pb);

// Exact discrete adjoint of the forward map, marched backward from the zero
// terminal slice, with arbitrary sources (one field per step 1..N).
AdjointPair adjoint_solve_with_sources(const Trajectory& traj, const ControlField& f,
                                       const ControlProblem& pb,
                                       const std::vector<Field>& g_lambda,
                                       const std::vector<Field>& g_eta);

// Adjoint with the cost-derived sources.
AdjointPair adjoint_solve(const Trajectory& traj, const ControlField& f, const ControlProblem& pb);

// Pointwise gamma_f sgn(f)|f|^{q-1} + v eta on Omega_c, zero elsewhere; the
// integrand of the optimality condition and the discrete dJ/df.
ControlField cost_gradient(const ControlField& f, const Trajectory& traj, const AdjointPair& adj,
                           const ControlProblem& pb);

// k-weighted pairing sum_n k <a^n, b^n>; the duality product behind the
// gradient and the finite-difference check.
double control_dot(const ControlField& a, const ControlField& b, double k);

// General linearized prototype around a trajectory:
//   U-eq: dU/dt - Lap U + a1 U + b1 V + div( avg(mu U) c1 ) + div( avg(d) grad V ) = g_U
//   V-eq: dV/dt - Lap V + a2 V + b2 U + cellavg( c2 . grad V ) = g_V
// stepped with the same linearly-implicit placement as the state scheme and
// zero initial data.
struct LinearizedCoeffs {
    GridSpec grid;
    double k = 0.0;
    std::vector<Field> a1, b1, mu, d, a2, b2;  // per step 1..N
    std::vector<FaceData> c1, c2;
    SolveOptions linear;
};

// Coefficients that make linearized_solve the exact Frechet derivative of
// state_solve_controlled around (traj, f).
LinearizedCoeffs linearize_around(const Trajectory& traj, const ControlField& f,
                                  const ControlProblem& pb);

std::pair<std::vector<Field>, std::vector<Field>> linearized_solve(
    const LinearizedCoeffs& coeffs, const std::vector<Field>& g_U, const std::vector<Field>& g_V);

struct OptimizeOptions {
    double vi_tol = 1e-6;
    int max_iters = 200;
    double tau_init = 1.0;
    double tau_max = 1e6;
    double stall_step = 1e-14;
    double armijo = 0.5;  // accept if J_new <= J - armijo * <g, f - f_new>
};

struct OptimizeIterationRow {
    int iteration = 0;
    double J = 0.0;
    double gradient_norm = 0.0;
    double vi_residual = 0.0;
    double step_size = 0.0;
};

struct ControlIterate {
    ControlField f;
    double J_value = 0.0;
    double gradient_norm = 0.0;
    double vi_residual = 0.0;
    bool stalled = false;
    bool converged = false;
    int iterations = 0;
    std::vector<OptimizeIterationRow> history;
};

// Max over cells/steps on Omega_c of the largest linearized decrease toward a
// box vertex, max_vertex -g (vertex - f); zero at a point satisfying the
// variational inequality. Unbounded box sides measure |g| per unit move.
double vi_residual(const ControlField& gradient, const ControlField& f, const ControlProblem& pb);

// Projected gradient descent f <- Pi_box(f - tau g) with Barzilai-Borwein step
// seeding and halving Armijo backtracking on the cost; J is nonincreasing
// across accepted iterates.
ControlIterate projected_gradient(const ControlProblem& pb, const ControlField& f_init,
                                  const OptimizeOptions& opts = {});

}  // namespace chemotax

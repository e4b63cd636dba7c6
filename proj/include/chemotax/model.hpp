// Pointwise nonlinear ingredients: the truncations of the identity, the
// primitive families behind the discrete energy law, and the energy functional.
#pragma once

#include "chemotax/grid.hpp"

namespace chemotax {

struct ModelParams {
    double s = 1.0;       // consumption power, >= 1
    double m = 10.0;      // truncation level, >= 1
    double alpha = 0.1;   // shift in z = sqrt(v + alpha^2)
    double alpha_max = 0.1;

    void validate() const;
};

// Upper truncation min(r, m); the one the time stepper uses.
double tm_cap(double r, double m);

// Derivative of tm_cap almost everywhere: 1 for r < m, 0 for r > m.
// The kink at r == m takes the left value; the adjoint uses this choice too.
double tm_cap_deriv(double r, double m);

// Bounded C^2 truncation: -1 below -2, identity on [0, m], m+1 above m+2,
// quintic Hermite blends on (-2, 0) and (m, m+2). Monotone on [0, inf).
double tm_smooth(double r, double m);

// g_m'(r): ln(tm_cap(r, m)) for s = 1 (requires r > 0), tm_cap(r,m)^(s-1)/(s-1) for s > 1.
double gm_prime(double r, const ModelParams& p);

// g_m(r) = integral of g_m' from 0 to r, in closed form; linear beyond m.
// Requires r >= 0.
double gm_primitive(double r, const ModelParams& p);

// Energy density g(u): (u+1)ln(u+1) - u for s = 1, u^s/(s(s-1)) for s > 1.
// Convex, g(0) = 0. Requires u >= 0 (entries above -1e-12 are clamped).
double g_energy_density(double u, double s);

// E(u, z) = (s/4) * integral of g(u) + (1/2) * integral of |grad z|^2.
double energy_E(const Field& u, const Field& z, double s);

// Same shape with g_m in place of g; this is the quantity whose discrete time
// increments appear in the per-step energy inequality.
double energy_E_scheme(const Field& u, const Field& z, const ModelParams& p);

}  // namespace chemotax

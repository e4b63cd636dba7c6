#include "chemotax/scheme.hpp"

#include <cmath>
#include <limits>

namespace chemotax {

namespace {

constexpr double kBoundTol = 1e-8;

// The truncation as the stepper's coefficients evaluate it. u is clamped at 0
// first: the scheme only tolerates negative u at roundoff level, and pow of a
// negative base would poison fractional powers.
double trunc_of(double u, double m) { return tm_cap(u < 0.0 ? 0.0 : u, m); }

Field trunc_pow_s(const Field& u, const ModelParams& p) {
    return map_field(u, [&p](double v) { return std::pow(trunc_of(v, p.m), p.s); });
}

}  // namespace

void SchemeParams::validate() const {
    model.validate();
    if (!(k > 0.0)) throw std::invalid_argument("SchemeParams: k must be positive");
    if (!(picard_tol > 0.0)) throw std::invalid_argument("SchemeParams: picard_tol must be positive");
    if (T_final < k) throw std::invalid_argument("SchemeParams: T_final must be >= k");
}

FaceData chemotaxis_flux(const Field& u, const Field& z, const SchemeParams& params) {
    const GridSpec& g = u.grid;
    const double m = params.model.m;
    Field zsq = pointwise_mul(z, z);
    FaceData gz2 = grad_faces(zsq);
    FaceData flux(g);
    const int nx = g.cells[0], ny = g.cells[1];
    if (params.flux_scheme == FluxScheme::Central) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i + 1 < nx; ++i)
                flux.xf(i, j) = 0.5 * (trunc_of(u.at(i, j), m) + trunc_of(u.at(i + 1, j), m)) * gz2.xf(i, j);
        if (g.dim == 2)
            for (int j = 0; j + 1 < ny; ++j)
                for (int i = 0; i < nx; ++i)
                    flux.yf(i, j) = 0.5 * (trunc_of(u.at(i, j), m) + trunc_of(u.at(i, j + 1), m)) * gz2.yf(i, j);
    } else {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i + 1 < nx; ++i) {
                const double v = gz2.xf(i, j);
                flux.xf(i, j) = v * trunc_of(v > 0.0 ? u.at(i, j) : u.at(i + 1, j), m);
            }
        if (g.dim == 2)
            for (int j = 0; j + 1 < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const double v = gz2.yf(i, j);
                    flux.yf(i, j) = v * trunc_of(v > 0.0 ? u.at(i, j) : u.at(i, j + 1), m);
                }
    }
    return flux;
}

double scheme_residual(const Field& u, const Field& z, const TimeStep& prev,
                       const SchemeParams& params) {
    const double k = params.k;
    const double a2 = params.model.alpha * params.model.alpha;

    Field res_u = div_faces(chemotaxis_flux(u, z, params)) - neumann_laplacian(u);
    for (int i = 0; i < res_u.size(); ++i) res_u[i] += (u[i] - prev.u[i]) / k;

    Field ts = trunc_pow_s(u, params.model);
    Field sing = pointwise_div(face_square_cellavg(grad_faces(z)), z);
    Field res_z = neumann_laplacian(z);
    for (int i = 0; i < res_z.size(); ++i)
        res_z[i] = (z[i] - prev.z[i]) / k - sing[i] - res_z[i] + 0.5 * ts[i] * (z[i] - a2 / z[i]);

    const double scale = (l2_norm(prev.u) + l2_norm(prev.z)) / k;
    return (l2_norm(res_u) + l2_norm(res_z)) / scale;
}

TimeStep initialize(const Field& u0, const Field& v0, const SchemeParams& params) {
    params.validate();
    if (!(u0.grid == v0.grid)) throw std::invalid_argument("initialize: grid mismatch");
    if (u0.min() < 0.0 || v0.min() < 0.0)
        throw std::invalid_argument("initialize: initial data must be nonnegative");
    const double a2 = params.model.alpha * params.model.alpha;
    TimeStep s0;
    s0.n = 0;
    s0.u = u0;
    s0.z = map_field(v0, [a2](double v) { return std::sqrt(v + a2); });
    s0.v = v0;
    return s0;
}

Field v_update_from_z(const Field& z_n, double alpha) {
    const double a2 = alpha * alpha;
    return map_field(z_n, [a2](double z) { return z * z - a2; });
}

Field v_update_from_u(const Field& v_prev, const Field& u_n, const SchemeParams& params) {
    Field coeff = trunc_pow_s(u_n, params.model);
    Field rhs = (1.0 / params.k) * v_prev;
    return helmholtz_solve(1.0 / params.k, &coeff, rhs, params.linear);
}

TimeStep step(const TimeStep& prev, const SchemeParams& params) {
    const double k = params.k;
    const double m = params.model.m;
    const double a2 = params.model.alpha * params.model.alpha;
    const double inv_k = 1.0 / k;

    Field u_it = prev.u;
    Field z_it = prev.z;
    double residual = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    int iters = 0;

    while (iters < params.picard_max) {
        ++iters;
        Field u_new;
        if (params.flux_scheme == FluxScheme::Central) {
            // Increment form: the right-hand side is a discrete divergence, so
            // every Krylov iterate has exactly zero mean and conservation of
            // cells does not depend on the solver tolerance.
            Field rhs = neumann_laplacian(prev.u) - div_faces(chemotaxis_flux(u_it, z_it, params));
            Field w = helmholtz_solve(inv_k, nullptr, rhs, params.linear);
            u_new = prev.u + w;
        } else {
            // Donor-cell flux, implicit in u: theta(u_it) * u * grad(z^2) with
            // theta chosen so that theta(u) * u == T_m(u) at the fixed point.
            Field theta = map_field(u_it, [m](double v) { return v > m ? m / v : 1.0; });
            Field zsq = pointwise_mul(z_it, z_it);
            FaceData gz2 = grad_faces(zsq);
            Field rhs = inv_k * prev.u;
            u_new = upwind_advection_diffusion_solve(inv_k, theta, gz2, rhs);
        }

        // z-solve: consumption implicit in z, the singular term and alpha^2/z
        // lagged at the previous iterate (z_it >= alpha keeps them finite).
        Field coeff = 0.5 * trunc_pow_s(u_new, params.model);
        Field sing = pointwise_div(face_square_cellavg(grad_faces(z_it)), z_it);
        Field rhs_z(prev.z.grid);
        for (int i = 0; i < rhs_z.size(); ++i)
            rhs_z[i] = prev.z[i] * inv_k + sing[i] + coeff[i] * a2 / z_it[i];
        Field z_new = helmholtz_solve(inv_k, &coeff, rhs_z, params.linear);

        if (!u_new.all_finite() || !z_new.all_finite())
            throw SolverError("step: numeric failure (NaN/Inf) in Picard iteration");

        residual = scheme_residual(u_new, z_new, prev, params);
        history.push_back(residual);
        u_it = std::move(u_new);
        z_it = std::move(z_new);
        if (residual < params.picard_tol) break;
    }
    if (!(residual < params.picard_tol))
        throw NonconvergenceError("step: Picard iteration did not converge", residual, history);

    // Theorem conclusions, asserted post hoc. Failing loudly here surfaces
    // solver bugs instead of hiding them behind a clip.
    const double z_prev_max = prev.z.max();
    if (u_it.min() < -kBoundTol)
        throw InvariantViolation("step: u dropped below 0 beyond tolerance");
    if (z_it.min() < params.model.alpha - kBoundTol)
        throw InvariantViolation("step: z dropped below alpha beyond tolerance");
    if (z_it.max() > z_prev_max + kBoundTol)
        throw InvariantViolation("step: max of z increased beyond tolerance");

    TimeStep next;
    next.n = prev.n + 1;
    next.v = params.v_variant == VVariant::FromZ ? v_update_from_z(z_it, params.model.alpha)
                                                 : v_update_from_u(prev.v, u_it, params);
    const double v_prev_max = prev.v.max();
    if (next.v.min() < -kBoundTol || next.v.max() > v_prev_max + kBoundTol)
        throw InvariantViolation("step: v left [0, max(v_prev)] beyond tolerance");
    next.u = std::move(u_it);
    next.z = std::move(z_it);
    next.picard_iters = iters;
    next.picard_residual = residual;
    return next;
}

Trajectory run(const Field& u0, const Field& v0, const SchemeParams& params) {
    Trajectory traj;
    traj.params = params;
    traj.grid = u0.grid;
    traj.steps.push_back(initialize(u0, v0, params));
    const int n_steps = static_cast<int>(std::ceil(params.T_final / params.k - 1e-12));
    for (int n = 1; n <= n_steps; ++n) {
        try {
            traj.steps.push_back(step(traj.steps.back(), params));
        } catch (const std::exception& e) {
            throw RunError("run: step " + std::to_string(n) + " failed: " + e.what(),
                           std::move(traj));
        }
    }
    return traj;
}

namespace {

int pc_index(const Trajectory& traj, double t) {
    const double k = traj.params.k;
    const int n_max = traj.step_count();
    if (t < -1e-12 * k || t > (n_max + 1e-9) * k)
        throw std::out_of_range("interpolant: t outside [0, T]");
    int n = static_cast<int>(std::ceil(t / k - 1e-9));
    if (n < 0) n = 0;
    if (n > n_max) n = n_max;
    return n;
}

}  // namespace

std::pair<Field, Field> interpolant_pc(const Trajectory& traj, double t) {
    const int n = pc_index(traj, t);
    return {traj.steps[static_cast<size_t>(n)].u, traj.steps[static_cast<size_t>(n)].z};
}

std::pair<Field, Field> interpolant_lin(const Trajectory& traj, double t) {
    const int n = pc_index(traj, t);
    if (n == 0) return {traj.steps[0].u, traj.steps[0].z};
    const double k = traj.params.k;
    const double w = (t - n * k) / k;  // in [-1, 0] on the n-th interval
    const TimeStep& a = traj.steps[static_cast<size_t>(n - 1)];
    const TimeStep& b = traj.steps[static_cast<size_t>(n)];
    Field u = b.u, z = b.z;
    for (int i = 0; i < u.size(); ++i) {
        u[i] += w * (b.u[i] - a.u[i]);
        z[i] += w * (b.z[i] - a.z[i]);
    }
    return {u, z};
}

double eyre_identity_check(const Field& z_n, const Field& z_prev, double k) {
    if (!(k > 0.0)) throw std::invalid_argument("eyre_identity_check: k must be positive");
    double worst = 0.0;
    for (int i = 0; i < z_n.size(); ++i) {
        const double zn = z_n[i], zp = z_prev[i];
        const double d = zn - zp;
        const double lhs = (d / k) * 2.0 * zn;
        const double rhs = (zn * zn - zp * zp) / k + d * d / k;
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

}  // namespace chemotax

#include "chemotax/control.hpp"

#include <cmath>

namespace chemotax {

namespace {

double clamp0(double v) { return v < 0.0 ? 0.0 : v; }

Field trunc_field(const Field& u, double m) {
    return map_field(u, [m](double v) { return tm_cap(clamp0(v), m); });
}

Field trunc_pow(const Field& u, double m, double p) {
    return map_field(u, [m, p](double v) { return std::pow(tm_cap(clamp0(v), m), p); });
}

Field trunc_deriv_field(const Field& u, double m) {
    return map_field(u, [m](double v) { return tm_cap_deriv(clamp0(v), m); });
}

// sgn(x) |x|^{p-1} with the natural value 0 at x = 0 (p > 1).
double signed_pow(double x, double pm1) {
    if (x == 0.0) return 0.0;
    return (x > 0.0 ? 1.0 : -1.0) * std::pow(std::abs(x), pm1);
}

Field masked(const Field& f, const Field& mask) { return pointwise_mul(f, mask); }

}  // namespace

void ControlProblem::validate() const {
    model.validate();
    if (!(k > 0.0) || T_final < k) throw std::invalid_argument("ControlProblem: bad time grid");
    if (!(q > 1.0)) throw std::invalid_argument("ControlProblem: q must exceed 1");
    for (double v : mask.values)
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("ControlProblem: mask must be 0/1 valued");
    if (!(gamma_u > 0.0)) throw std::invalid_argument("ControlProblem: gamma_u must be positive");
    if (!(gamma_f > 0.0) && !box_bounded())
        throw std::invalid_argument("ControlProblem: need gamma_f > 0 or a bounded box");
    if (f_lo > f_hi) throw std::invalid_argument("ControlProblem: empty box");
    const int N = n_steps();
    if (static_cast<int>(u_target.size()) != N || static_cast<int>(v_target.size()) != N)
        throw std::invalid_argument("ControlProblem: targets must carry one field per step");
}

ControlField ControlField::zeros(const ControlProblem& pb) {
    ControlField f;
    f.steps.assign(static_cast<size_t>(pb.n_steps()), Field(pb.grid, 0.0));
    return f;
}

ControlField ControlField::constant(const ControlProblem& pb, double value) {
    ControlField f;
    f.steps.assign(static_cast<size_t>(pb.n_steps()), masked(Field(pb.grid, value), pb.mask));
    return f;
}

Trajectory state_solve_controlled(const Field& u0, const Field& v0, const ControlField& f,
                                  const ControlProblem& pb) {
    if (u0.min() < 0.0 || v0.min() < 0.0)
        throw std::invalid_argument("state_solve_controlled: initial data must be nonnegative");
    const int N = pb.n_steps();
    if (f.n_steps() != N)
        throw std::invalid_argument("state_solve_controlled: control step count mismatch");
    const double k = pb.k, m = pb.model.m, s = pb.model.s;
    const double a2 = pb.model.alpha * pb.model.alpha;
    const double inv_k = 1.0 / k;

    // Stability guard: the implicit f term must keep 1/k + T^s - f positive.
    for (int n = 1; n <= N; ++n) {
        double fmax = 0.0;
        const Field& fn = f.at_step(n);
        for (int i = 0; i < fn.size(); ++i)
            if (pb.mask[i] != 0.0) fmax = std::max(fmax, fn[i]);
        if (k * fmax >= 1.0)
            throw ControlError("state_solve_controlled: k * max f >= 1 on the control region",
                               0.5 / fmax);
    }

    Trajectory traj;
    traj.grid = pb.grid;
    traj.params.k = k;
    traj.params.T_final = pb.T_final;
    traj.params.model = pb.model;
    traj.params.linear = pb.linear;
    traj.params.v_variant = VVariant::FromU;

    TimeStep s0;
    s0.n = 0;
    s0.u = u0;
    s0.v = v0;
    s0.z = map_field(v0, [a2](double v) { return std::sqrt(clamp0(v) + a2); });
    traj.steps.push_back(std::move(s0));

    for (int n = 1; n <= N; ++n) {
        const TimeStep& prev = traj.steps.back();
        // u-step, coefficients frozen at n-1; increment form keeps the cell
        // count exact independently of the solver tolerance.
        FaceData flux = face_mul(cell_to_face_avg(trunc_field(prev.u, m)), grad_faces(prev.v));
        Field rhs_w = neumann_laplacian(prev.u) - div_faces(flux);
        Field w = helmholtz_solve(inv_k, nullptr, rhs_w, pb.linear);
        Field u_n = prev.u + w;

        // v-step, consumption and control implicit.
        Field coeff = trunc_pow(u_n, m, s) - masked(f.at_step(n), pb.mask);
        Field rhs_v = inv_k * prev.v;
        Field v_n = helmholtz_solve(inv_k, &coeff, rhs_v, pb.linear);
        if (!u_n.all_finite() || !v_n.all_finite())
            throw SolverError("state_solve_controlled: numeric failure (NaN/Inf)");

        TimeStep st;
        st.n = n;
        st.z = map_field(v_n, [a2](double v) { return std::sqrt(clamp0(v) + a2); });
        st.u = std::move(u_n);
        st.v = std::move(v_n);
        st.picard_iters = 1;
        traj.steps.push_back(std::move(st));
    }
    return traj;
}

double cost_J(const Trajectory& traj, const ControlField& f, const ControlProblem& pb) {
    const int N = pb.n_steps();
    if (traj.step_count() != N || f.n_steps() != N)
        throw std::invalid_argument("cost_J: step count mismatch");
    const double pu = pb.tracking_exponent();
    double J = 0.0;
    for (int n = 1; n <= N; ++n) {
        const Field& un = traj.steps[static_cast<size_t>(n)].u;
        const Field& vn = traj.steps[static_cast<size_t>(n)].v;
        const Field& ud = pb.u_target[static_cast<size_t>(n - 1)];
        const Field& vd = pb.v_target[static_cast<size_t>(n - 1)];
        if (!(un.grid == ud.grid)) throw std::invalid_argument("cost_J: target grid mismatch");
        double tu = 0.0, tv = 0.0, tf = 0.0;
        if (pb.gamma_u > 0.0) {
            const double nrm = lp_norm(un - ud, pu);
            tu = pb.gamma_u / pu * std::pow(nrm, pu);
        }
        if (pb.gamma_v > 0.0) {
            const double nrm = l2_norm(vn - vd);
            tv = 0.5 * pb.gamma_v * nrm * nrm;
        }
        if (pb.gamma_f > 0.0) {
            const Field fn = masked(f.at_step(n), pb.mask);
            const double nrm = lp_norm(fn, pb.q);
            tf = pb.gamma_f / pb.q * std::pow(nrm, pb.q);
        }
        J += pb.k * (tu + tv + tf);
    }
    return J;
}

std::vector<Field> adjoint_source_lambda(const Trajectory& traj, const ControlProblem& pb) {
    const double pm1 = pb.tracking_exponent() - 1.0;
    std::vector<Field> out;
    for (int n = 1; n <= pb.n_steps(); ++n) {
        Field d = traj.steps[static_cast<size_t>(n)].u - pb.u_target[static_cast<size_t>(n - 1)];
        out.push_back(map_field(d, [&](double x) { return pb.gamma_u * signed_pow(x, pm1); }));
    }
    return out;
}

std::vector<Field> adjoint_source_eta(const Trajectory& traj, const ControlProblem& pb) {
    std::vector<Field> out;
    for (int n = 1; n <= pb.n_steps(); ++n) {
        Field d = traj.steps[static_cast<size_t>(n)].v - pb.v_target[static_cast<size_t>(n - 1)];
        out.push_back(pb.gamma_v * d);
    }
    return out;
}

AdjointPair adjoint_solve_with_sources(const Trajectory& traj, const ControlField& f,
                                       const ControlProblem& pb,
                                       const std::vector<Field>& g_lambda,
                                       const std::vector<Field>& g_eta) {
    const int N = pb.n_steps();
    if (traj.step_count() != N || f.n_steps() != N ||
        static_cast<int>(g_lambda.size()) != N || static_cast<int>(g_eta.size()) != N)
        throw std::invalid_argument("adjoint_solve: step count mismatch");
    const double inv_k = 1.0 / pb.k;
    const double m = pb.model.m, s = pb.model.s;

    AdjointPair adj;
    adj.lambda_steps.assign(static_cast<size_t>(N + 1), Field(pb.grid, 0.0));
    adj.eta_steps.assign(static_cast<size_t>(N + 1), Field(pb.grid, 0.0));

    Field lambda_next(pb.grid, 0.0);  // lambda^{n+1}, starts at the zero terminal slice
    Field eta_next(pb.grid, 0.0);
    for (int n = N; n >= 1; --n) {
        const Field& un = traj.steps[static_cast<size_t>(n)].u;
        const Field& vn = traj.steps[static_cast<size_t>(n)].v;
        FaceData grad_lambda_next = grad_faces(lambda_next);

        // eta-equation: same operator as the forward v-step.
        Field coeff_v = trunc_pow(un, m, s) - masked(f.at_step(n), pb.mask);
        Field rhs_eta = g_eta[static_cast<size_t>(n - 1)] -
                        div_faces(face_mul(cell_to_face_avg(trunc_field(un, m)), grad_lambda_next));
        for (int i = 0; i < rhs_eta.size(); ++i) rhs_eta[i] += eta_next[i] * inv_k;
        Field eta_n = helmholtz_solve(inv_k, &coeff_v, rhs_eta, pb.linear);

        // lambda-equation: transposes the flux and consumption couplings.
        Field tprime = trunc_deriv_field(un, m);
        Field ts1 = trunc_pow(un, m, s - 1.0);
        Field coupling = face_to_cell_avg(face_mul(grad_lambda_next, grad_faces(vn)));
        Field rhs_lambda = g_lambda[static_cast<size_t>(n - 1)];
        for (int i = 0; i < rhs_lambda.size(); ++i)
            rhs_lambda[i] += lambda_next[i] * inv_k + tprime[i] * coupling[i] -
                             s * ts1[i] * tprime[i] * eta_n[i] * vn[i];
        Field lambda_n = helmholtz_solve(inv_k, nullptr, rhs_lambda, pb.linear);

        adj.lambda_steps[static_cast<size_t>(n - 1)] = lambda_n;
        adj.eta_steps[static_cast<size_t>(n - 1)] = eta_n;
        lambda_next = std::move(lambda_n);
        eta_next = std::move(eta_n);
    }
    return adj;
}

AdjointPair adjoint_solve(const Trajectory& traj, const ControlField& f, const ControlProblem& pb) {
    return adjoint_solve_with_sources(traj, f, pb, adjoint_source_lambda(traj, pb),
                                      adjoint_source_eta(traj, pb));
}

ControlField cost_gradient(const ControlField& f, const Trajectory& traj, const AdjointPair& adj,
                           const ControlProblem& pb) {
    const int N = pb.n_steps();
    ControlField g = ControlField::zeros(pb);
    const double qm1 = pb.q - 1.0;
    for (int n = 1; n <= N; ++n) {
        const Field& vn = traj.steps[static_cast<size_t>(n)].v;
        const Field& fn = f.at_step(n);
        Field gn(pb.grid, 0.0);
        for (int i = 0; i < gn.size(); ++i)
            if (pb.mask[i] != 0.0)
                gn[i] = pb.gamma_f * signed_pow(fn[i], qm1) + vn[i] * adj.eta(n)[i];
        g.at_step(n) = std::move(gn);
    }
    return g;
}

double control_dot(const ControlField& a, const ControlField& b, double k) {
    if (a.n_steps() != b.n_steps()) throw std::invalid_argument("control_dot: size mismatch");
    double s = 0.0;
    for (int n = 1; n <= a.n_steps(); ++n) s += k * dot(a.at_step(n), b.at_step(n));
    return s;
}

LinearizedCoeffs linearize_around(const Trajectory& traj, const ControlField& f,
                                  const ControlProblem& pb) {
    const int N = pb.n_steps();
    LinearizedCoeffs c;
    c.grid = pb.grid;
    c.k = pb.k;
    c.linear = pb.linear;
    const double m = pb.model.m, s = pb.model.s;
    for (int n = 1; n <= N; ++n) {
        const TimeStep& prev = traj.steps[static_cast<size_t>(n - 1)];
        const TimeStep& cur = traj.steps[static_cast<size_t>(n)];
        c.a1.emplace_back(pb.grid, 0.0);
        c.b1.emplace_back(pb.grid, 0.0);
        c.mu.push_back(trunc_deriv_field(prev.u, m));
        c.c1.push_back(grad_faces(prev.v));
        c.d.push_back(trunc_field(prev.u, m));
        c.a2.push_back(trunc_pow(cur.u, m, s) - pointwise_mul(f.at_step(n), pb.mask));
        Field b2 = trunc_pow(cur.u, m, s - 1.0);
        for (int i = 0; i < b2.size(); ++i)
            b2[i] *= s * tm_cap_deriv(clamp0(cur.u[i]), m) * cur.v[i];
        c.b2.push_back(std::move(b2));
        c.c2.emplace_back(pb.grid);
    }
    return c;
}

std::pair<std::vector<Field>, std::vector<Field>> linearized_solve(
    const LinearizedCoeffs& c, const std::vector<Field>& g_U, const std::vector<Field>& g_V) {
    const int N = static_cast<int>(c.a2.size());
    if (static_cast<int>(g_U.size()) != N || static_cast<int>(g_V.size()) != N)
        throw std::invalid_argument("linearized_solve: source count mismatch");
    const double inv_k = 1.0 / c.k;
    std::vector<Field> U, V;
    Field U_prev(c.grid, 0.0), V_prev(c.grid, 0.0);
    for (int n = 1; n <= N; ++n) {
        const size_t ix = static_cast<size_t>(n - 1);
        Field rhs_U = g_U[ix] -
                      div_faces(face_mul(cell_to_face_avg(pointwise_mul(c.mu[ix], U_prev)), c.c1[ix])) -
                      div_faces(face_mul(cell_to_face_avg(c.d[ix]), grad_faces(V_prev))) -
                      pointwise_mul(c.b1[ix], V_prev);
        for (int i = 0; i < rhs_U.size(); ++i) rhs_U[i] += U_prev[i] * inv_k;
        Field U_n = helmholtz_solve(inv_k, &c.a1[ix], rhs_U, c.linear);

        Field rhs_V = g_V[ix] - pointwise_mul(c.b2[ix], U_n) -
                      face_to_cell_avg(face_mul(c.c2[ix], grad_faces(V_prev)));
        for (int i = 0; i < rhs_V.size(); ++i) rhs_V[i] += V_prev[i] * inv_k;
        // The zero-order coefficient may dip negative (the control term);
        // insist the implicit step stays positive definite, as in the state solve.
        double min_diag = std::numeric_limits<double>::infinity();
        for (double vv : c.a2[ix].values) min_diag = std::min(min_diag, inv_k + vv);
        if (!(min_diag > 0.0))
            throw ControlError("linearized_solve: implicit V step lost positivity");
        Field V_n = helmholtz_solve(inv_k, &c.a2[ix], rhs_V, c.linear);

        U.push_back(U_n);
        V.push_back(V_n);
        U_prev = std::move(U_n);
        V_prev = std::move(V_n);
    }
    return {U, V};
}

double vi_residual(const ControlField& gradient, const ControlField& f, const ControlProblem& pb) {
    double worst = 0.0;
    for (int n = 1; n <= gradient.n_steps(); ++n) {
        const Field& g = gradient.at_step(n);
        const Field& fn = f.at_step(n);
        for (int i = 0; i < g.size(); ++i) {
            if (pb.mask[i] == 0.0) continue;
            double r = 0.0;
            if (std::isfinite(pb.f_lo)) r = std::max(r, -g[i] * (pb.f_lo - fn[i]));
            else if (g[i] > 0.0) r = std::max(r, g[i]);
            if (std::isfinite(pb.f_hi)) r = std::max(r, -g[i] * (pb.f_hi - fn[i]));
            else if (g[i] < 0.0) r = std::max(r, -g[i]);
            worst = std::max(worst, r);
        }
    }
    return worst;
}

namespace {

ControlField project_box(const ControlField& f, const ControlProblem& pb) {
    ControlField out = f;
    for (auto& fld : out.steps)
        for (int i = 0; i < fld.size(); ++i) {
            if (pb.mask[i] == 0.0) {
                fld[i] = 0.0;
                continue;
            }
            fld[i] = std::clamp(fld[i], pb.f_lo, pb.f_hi);
        }
    return out;
}

ControlField axpy(const ControlField& f, double t, const ControlField& g) {
    ControlField out = f;
    for (int n = 1; n <= out.n_steps(); ++n) {
        Field& fn = out.at_step(n);
        const Field& gn = g.at_step(n);
        for (int i = 0; i < fn.size(); ++i) fn[i] += t * gn[i];
    }
    return out;
}

}  // namespace

ControlIterate projected_gradient(const ControlProblem& pb, const ControlField& f_init,
                                  const OptimizeOptions& opts) {
    pb.validate();
    ControlField f = project_box(f_init, pb);
    Trajectory traj = state_solve_controlled(pb.u0, pb.v0, f, pb);
    double J = cost_J(traj, f, pb);
    AdjointPair adj = adjoint_solve(traj, f, pb);
    ControlField g = cost_gradient(f, traj, adj, pb);

    ControlIterate out;
    out.iterations = 0;
    double tau = opts.tau_init;
    bool have_prev = false;
    ControlField f_prev = f, g_prev = g;

    for (int it = 0; it <= opts.max_iters; ++it) {
        const double vi = vi_residual(g, f, pb);
        const double gnorm = std::sqrt(control_dot(g, g, pb.k));
        out.history.push_back({it, J, gnorm, vi, tau});
        out.J_value = J;
        out.gradient_norm = gnorm;
        out.vi_residual = vi;
        out.iterations = it;
        if (vi <= opts.vi_tol) {
            out.converged = true;
            break;
        }
        if (it == opts.max_iters) break;

        if (have_prev) {
            // Barzilai-Borwein step seed, safeguarded into [1e-12, tau_max].
            ControlField df = axpy(f, -1.0, f_prev);
            ControlField dg = axpy(g, -1.0, g_prev);
            const double num = control_dot(df, df, pb.k);
            const double den = control_dot(df, dg, pb.k);
            if (den > 0.0) tau = std::clamp(num / den, 1e-12, opts.tau_max);
        }

        bool accepted = false;
        while (tau >= opts.stall_step) {
            ControlField f_try = project_box(axpy(f, -tau, g), pb);
            Trajectory traj_try;
            double J_try;
            try {
                traj_try = state_solve_controlled(pb.u0, pb.v0, f_try, pb);
                J_try = cost_J(traj_try, f_try, pb);
            } catch (const ControlError&) {
                tau *= 0.5;  // stability rejection: shorten the step
                continue;
            }
            ControlField move = axpy(f, -1.0, f_try);
            const double predicted = control_dot(g, move, pb.k);  // >= 0 by projection
            if (J_try <= J - opts.armijo * predicted) {
                f_prev = std::move(f);
                g_prev = g;
                f = std::move(f_try);
                traj = std::move(traj_try);
                J = J_try;
                adj = adjoint_solve(traj, f, pb);
                g = cost_gradient(f, traj, adj, pb);
                have_prev = true;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if (!accepted) {
            out.stalled = true;
            break;
        }
    }
    out.f = std::move(f);
    return out;
}

}  // namespace chemotax

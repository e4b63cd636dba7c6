#include "chemotax/model.hpp"

#include <cmath>

namespace chemotax {

void ModelParams::validate() const {
    if (s < 1.0) throw std::invalid_argument("ModelParams: s must be >= 1");
    if (m < 1.0) throw std::invalid_argument("ModelParams: m must be >= 1");
    if (!(alpha > 0.0) || alpha > alpha_max)
        throw std::invalid_argument("ModelParams: need 0 < alpha <= alpha_max");
}

double tm_cap(double r, double m) { return r < m ? r : m; }

double tm_cap_deriv(double r, double m) { return r <= m ? 1.0 : 0.0; }

namespace {

// Quintic Hermite on [a, b] matching value, first and second derivative at both
// ends; the unique minimal-degree C^2 blend.
double quintic_hermite(double x, double a, double b, double f0, double d0, double dd0,
                       double f1, double d1, double dd1) {
    const double L = b - a;
    const double t = (x - a) / L;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double h0 = 1 - 10 * t3 + 15 * t4 - 6 * t5;
    const double h1 = t - 6 * t3 + 8 * t4 - 3 * t5;
    const double h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    const double h3 = 10 * t3 - 15 * t4 + 6 * t5;
    const double h4 = -4 * t3 + 7 * t4 - 3 * t5;
    const double h5 = 0.5 * t3 - t4 + 0.5 * t5;
    return f0 * h0 + d0 * L * h1 + dd0 * L * L * h2 + f1 * h3 + d1 * L * h4 + dd1 * L * L * h5;
}

}  // namespace

double tm_smooth(double r, double m) {
    if (r <= -2.0) return -1.0;
    if (r < 0.0) return quintic_hermite(r, -2.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    if (r <= m) return r;
    if (r < m + 2.0) return quintic_hermite(r, m, m + 2.0, m, 1.0, 0.0, m + 1.0, 0.0, 0.0);
    return m + 1.0;
}

double gm_prime(double r, const ModelParams& p) {
    if (p.s == 1.0) {
        if (r <= 0.0) throw std::domain_error("gm_prime: s = 1 requires r > 0");
        return std::log(tm_cap(r, p.m));
    }
    return std::pow(tm_cap(r, p.m), p.s - 1.0) / (p.s - 1.0);
}

double gm_primitive(double r, const ModelParams& p) {
    if (r < 0.0) throw std::domain_error("gm_primitive: requires r >= 0");
    const double s = p.s, m = p.m;
    auto core = [&](double x) {  // primitive on [0, m]
        if (s == 1.0) return x > 0.0 ? x * std::log(x) - x : 0.0;
        return std::pow(x, s) / (s * (s - 1.0));
    };
    if (r <= m) return core(r);
    return core(m) + gm_prime(m, p) * (r - m);
}

double g_energy_density(double u, double s) {
    if (u < -1e-12) throw std::domain_error("g_energy_density: requires u >= 0");
    if (u < 0.0) u = 0.0;
    if (s == 1.0) return (u + 1.0) * std::log(u + 1.0) - u;
    return std::pow(u, s) / (s * (s - 1.0));
}

double energy_E(const Field& u, const Field& z, double s) {
    double gsum = 0.0;
    for (double v : u.values) gsum += g_energy_density(v, s);
    return 0.25 * s * gsum * u.grid.cell_volume() + 0.5 * face_norm_sq(grad_faces(z));
}

double energy_E_scheme(const Field& u, const Field& z, const ModelParams& p) {
    double gsum = 0.0;
    for (double v : u.values) gsum += gm_primitive(std::max(v, 0.0), p);
    return 0.25 * p.s * gsum * u.grid.cell_volume() + 0.5 * face_norm_sq(grad_faces(z));
}

}  // namespace chemotax

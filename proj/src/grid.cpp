#include "chemotax/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chemotax {

GridSpec GridSpec::line(int nx, double length) {
    if (nx < 2 || length <= 0.0) throw std::invalid_argument("GridSpec::line: need nx >= 2, length > 0");
    GridSpec g;
    g.dim = 1;
    g.cells = {nx, 1};
    g.lengths = {length, 1.0};
    return g;
}

GridSpec GridSpec::rect(int nx, int ny, double lx, double ly) {
    if (nx < 2 || ny < 2 || lx <= 0.0 || ly <= 0.0)
        throw std::invalid_argument("GridSpec::rect: need nx,ny >= 2 and positive lengths");
    GridSpec g;
    g.dim = 2;
    g.cells = {nx, ny};
    g.lengths = {lx, ly};
    return g;
}

Field Field::sample(const GridSpec& g, const std::function<double(double)>& f) {
    if (g.dim != 1) throw std::invalid_argument("Field::sample(1d fn) on 2D grid");
    Field out(g);
    for (int i = 0; i < g.cells[0]; ++i) out[i] = f(g.center(i, 0));
    return out;
}

Field Field::sample(const GridSpec& g, const std::function<double(double, double)>& f) {
    Field out(g);
    for (int j = 0; j < g.cells[1]; ++j)
        for (int i = 0; i < g.cells[0]; ++i)
            out.at(i, j) = f(g.center(i, 0), g.dim == 2 ? g.center(j, 1) : 0.0);
    return out;
}

double Field::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : values) m = std::min(m, v);
    return m;
}

double Field::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : values) m = std::max(m, v);
    return m;
}

bool Field::all_finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

FaceData::FaceData(const GridSpec& g) : grid(g) {
    x_faces.assign(static_cast<size_t>((g.cells[0] - 1) * g.cells[1]), 0.0);
    if (g.dim == 2) y_faces.assign(static_cast<size_t>(g.cells[0] * (g.cells[1] - 1)), 0.0);
}

static void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
    if (!(a == b)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

Field operator+(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "operator+");
    Field out = a;
    for (int i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Field operator-(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "operator-");
    Field out = a;
    for (int i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Field operator*(double c, const Field& a) {
    Field out = a;
    for (double& v : out.values) v *= c;
    return out;
}

Field pointwise_mul(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "pointwise_mul");
    Field out = a;
    for (int i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Field pointwise_div(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "pointwise_div");
    Field out = a;
    for (int i = 0; i < out.size(); ++i) out[i] /= b[i];
    return out;
}

Field map_field(const Field& a, const std::function<double(double)>& f) {
    Field out = a;
    for (double& v : out.values) v = f(v);
    return out;
}

double integrate(const Field& f) {
    double s = 0.0;
    for (double v : f.values) s += v;
    return s * f.grid.cell_volume();
}

double lp_norm(const Field& f, double p) {
    if (std::isinf(p)) return linf_norm(f);
    if (p < 1.0) throw std::invalid_argument("lp_norm: p must be >= 1");
    double s = 0.0;
    for (double v : f.values) s += std::pow(std::abs(v), p);
    return std::pow(s * f.grid.cell_volume(), 1.0 / p);
}

double l2_norm(const Field& f) {
    double s = 0.0;
    for (double v : f.values) s += v * v;
    return std::sqrt(s * f.grid.cell_volume());
}

double linf_norm(const Field& f) {
    double m = 0.0;
    for (double v : f.values) m = std::max(m, std::abs(v));
    return m;
}

double dot(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "dot");
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s * a.grid.cell_volume();
}

FaceData grad_faces(const Field& f) {
    const GridSpec& g = f.grid;
    FaceData out(g);
    const int nx = g.cells[0], ny = g.cells[1];
    const double ihx = 1.0 / g.h(0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i)
            out.xf(i, j) = (f.at(i + 1, j) - f.at(i, j)) * ihx;
    if (g.dim == 2) {
        const double ihy = 1.0 / g.h(1);
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i < nx; ++i)
                out.yf(i, j) = (f.at(i, j + 1) - f.at(i, j)) * ihy;
    }
    return out;
}

Field div_faces(const FaceData& gf) {
    const GridSpec& g = gf.grid;
    Field out(g);
    const int nx = g.cells[0], ny = g.cells[1];
    const double ihx = 1.0 / g.h(0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double right = (i + 1 < nx) ? gf.xf(i, j) : 0.0;
            const double left = (i > 0) ? gf.xf(i - 1, j) : 0.0;
            out.at(i, j) = (right - left) * ihx;
        }
    if (g.dim == 2) {
        const double ihy = 1.0 / g.h(1);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double up = (j + 1 < ny) ? gf.yf(i, j) : 0.0;
                const double down = (j > 0) ? gf.yf(i, j - 1) : 0.0;
                out.at(i, j) += (up - down) * ihy;
            }
    }
    return out;
}

Field neumann_laplacian(const Field& f) { return div_faces(grad_faces(f)); }

double face_dot(const FaceData& a, const FaceData& b) {
    require_same_grid(a.grid, b.grid, "face_dot");
    double s = 0.0;
    for (size_t i = 0; i < a.x_faces.size(); ++i) s += a.x_faces[i] * b.x_faces[i];
    for (size_t i = 0; i < a.y_faces.size(); ++i) s += a.y_faces[i] * b.y_faces[i];
    return s * a.grid.cell_volume();
}

double face_norm_sq(const FaceData& a) { return face_dot(a, a); }

Field face_square_cellavg(const FaceData& gf) {
    const GridSpec& g = gf.grid;
    Field out(g);
    const int nx = g.cells[0], ny = g.cells[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double r = (i + 1 < nx) ? gf.xf(i, j) : 0.0;
            const double l = (i > 0) ? gf.xf(i - 1, j) : 0.0;
            out.at(i, j) = 0.5 * (l * l + r * r);
        }
    if (g.dim == 2)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double u = (j + 1 < ny) ? gf.yf(i, j) : 0.0;
                const double d = (j > 0) ? gf.yf(i, j - 1) : 0.0;
                out.at(i, j) += 0.5 * (d * d + u * u);
            }
    return out;
}

FaceData cell_to_face_avg(const Field& f) {
    const GridSpec& g = f.grid;
    FaceData out(g);
    const int nx = g.cells[0], ny = g.cells[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i)
            out.xf(i, j) = 0.5 * (f.at(i, j) + f.at(i + 1, j));
    if (g.dim == 2)
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i < nx; ++i)
                out.yf(i, j) = 0.5 * (f.at(i, j) + f.at(i, j + 1));
    return out;
}

FaceData face_mul(const FaceData& a, const FaceData& b) {
    require_same_grid(a.grid, b.grid, "face_mul");
    FaceData out = a;
    for (size_t i = 0; i < out.x_faces.size(); ++i) out.x_faces[i] *= b.x_faces[i];
    for (size_t i = 0; i < out.y_faces.size(); ++i) out.y_faces[i] *= b.y_faces[i];
    return out;
}

Field face_to_cell_avg(const FaceData& gf) {
    const GridSpec& g = gf.grid;
    Field out(g);
    const int nx = g.cells[0], ny = g.cells[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double r = (i + 1 < nx) ? gf.xf(i, j) : 0.0;
            const double l = (i > 0) ? gf.xf(i - 1, j) : 0.0;
            out.at(i, j) = 0.5 * (l + r);
        }
    if (g.dim == 2)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double u = (j + 1 < ny) ? gf.yf(i, j) : 0.0;
                const double d = (j > 0) ? gf.yf(i, j - 1) : 0.0;
                out.at(i, j) += 0.5 * (d + u);
            }
    return out;
}

Field helmholtz_apply(double sigma, const Field* c, const Field& x) {
    Field out = neumann_laplacian(x);
    for (int i = 0; i < out.size(); ++i) {
        out[i] = sigma * x[i] - out[i];
        if (c) out[i] += (*c)[i] * x[i];
    }
    return out;
}

Field upwind_advection_apply(const Field& theta, const FaceData& w, const Field& x) {
    const GridSpec& g = x.grid;
    FaceData flux(g);
    const int nx = g.cells[0], ny = g.cells[1];
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            const double v = w.xf(i, j);
            flux.xf(i, j) = v > 0.0 ? theta.at(i, j) * x.at(i, j) * v
                                    : theta.at(i + 1, j) * x.at(i + 1, j) * v;
        }
    if (g.dim == 2)
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double v = w.yf(i, j);
                flux.yf(i, j) = v > 0.0 ? theta.at(i, j) * x.at(i, j) * v
                                        : theta.at(i, j + 1) * x.at(i, j + 1) * v;
            }
    return div_faces(flux);
}

// ---------------------------------------------------------------------------
// Banded LU without pivoting. Safe here because every matrix passed in is an
// M-matrix (column diagonally dominant, positive diagonal, nonpositive
// off-diagonals); the factors inherit the sign pattern, so forward/back
// substitution with a nonnegative right-hand side only ever adds nonnegative
// terms. That is what makes the upwind positivity exact in floating point.
// ---------------------------------------------------------------------------
namespace {

class BandedMatrix {
  public:
    BandedMatrix(int n, int bw) : n_(n), bw_(bw), a_(static_cast<size_t>(n) * (2 * bw + 1), 0.0) {}

    double& at(int i, int j) { return a_[static_cast<size_t>(i) * (2 * bw_ + 1) + (j - i + bw_)]; }
    double at(int i, int j) const { return a_[static_cast<size_t>(i) * (2 * bw_ + 1) + (j - i + bw_)]; }

    void factor() {
        for (int p = 0; p < n_; ++p) {
            const double piv = at(p, p);
            if (!(piv > 0.0)) throw SolverError("banded LU: nonpositive pivot", piv);
            const int iend = std::min(p + bw_, n_ - 1);
            for (int i = p + 1; i <= iend; ++i) {
                const double l = at(i, p) / piv;
                at(i, p) = l;
                if (l == 0.0) continue;
                const int jend = std::min(p + bw_, n_ - 1);
                for (int j = p + 1; j <= jend; ++j) at(i, j) -= l * at(p, j);
            }
        }
    }

    void solve_in_place(std::vector<double>& x) const {
        for (int i = 0; i < n_; ++i) {
            double s = x[static_cast<size_t>(i)];
            const int j0 = std::max(0, i - bw_);
            for (int j = j0; j < i; ++j) s -= at(i, j) * x[static_cast<size_t>(j)];
            x[static_cast<size_t>(i)] = s;
        }
        for (int i = n_ - 1; i >= 0; --i) {
            double s = x[static_cast<size_t>(i)];
            const int jend = std::min(n_ - 1, i + bw_);
            for (int j = i + 1; j <= jend; ++j) s -= at(i, j) * x[static_cast<size_t>(j)];
            x[static_cast<size_t>(i)] = s / at(i, i);
        }
    }

  private:
    int n_, bw_;
    std::vector<double> a_;
};

// Assemble sigma*I - Laplacian + diag(c) in banded form.
BandedMatrix assemble_helmholtz(const GridSpec& g, double sigma, const Field* c) {
    const int nx = g.cells[0], ny = g.cells[1];
    const int n = g.cell_count();
    const int bw = g.dim == 1 ? 1 : nx;
    BandedMatrix A(n, bw);
    const double ax = 1.0 / (g.h(0) * g.h(0));
    const double ay = g.dim == 2 ? 1.0 / (g.h(1) * g.h(1)) : 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int p = g.idx(i, j);
            double diag = sigma + (c ? (*c)[p] : 0.0);
            if (i > 0) { A.at(p, g.idx(i - 1, j)) = -ax; diag += ax; }
            if (i + 1 < nx) { A.at(p, g.idx(i + 1, j)) = -ax; diag += ax; }
            if (g.dim == 2 && j > 0) { A.at(p, g.idx(i, j - 1)) = -ay; diag += ay; }
            if (g.dim == 2 && j + 1 < ny) { A.at(p, g.idx(i, j + 1)) = -ay; diag += ay; }
            A.at(p, p) = diag;
        }
    return A;
}

Field cg_solve(double sigma, const Field* c, const Field& b, const SolveOptions& opts,
               SolveReport* report) {
    Field x(b.grid, 0.0);
    Field r = b;
    double bnorm = 0.0;
    for (double v : b.values) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) {
        if (report) *report = {0, 0.0};
        return x;
    }
    Field p = r;
    double rs = 0.0;
    for (double v : r.values) rs += v * v;
    std::vector<double> history;
    for (int it = 1; it <= opts.max_iters; ++it) {
        Field Ap = helmholtz_apply(sigma, c, p);
        double pAp = 0.0;
        for (int i = 0; i < p.size(); ++i) pAp += p[i] * Ap[i];
        const double alpha = rs / pAp;
        for (int i = 0; i < x.size(); ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
        }
        if (it % 50 == 0) {
            // Guard against residual-recurrence drift at tight tolerances.
            Field rr = b - helmholtz_apply(sigma, c, x);
            r = rr;
        }
        double rs_new = 0.0;
        for (double v : r.values) rs_new += v * v;
        const double rel = std::sqrt(rs_new) / bnorm;
        if (rel <= opts.rel_tol) {
            if (report) *report = {it, rel};
            return x;
        }
        history.push_back(rel);
        const double beta = rs_new / rs;
        rs = rs_new;
        for (int i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    throw SolverError("conjugate gradient did not reach tolerance", history.back(), history);
}

}  // namespace

Field helmholtz_solve(double sigma, const Field* c, const Field& b, const SolveOptions& opts,
                      SolveReport* report) {
    if (c) require_same_grid(b.grid, c->grid, "helmholtz_solve");
    if (b.grid.dim == 1) {
        BandedMatrix A = assemble_helmholtz(b.grid, sigma, c);
        A.factor();
        std::vector<double> x = b.values;
        A.solve_in_place(x);
        Field out(b.grid);
        out.values = std::move(x);
        if (report) {
            Field r = b - helmholtz_apply(sigma, c, out);
            double bn = l2_norm(b);
            *report = {1, bn > 0 ? l2_norm(r) / bn : 0.0};
        }
        return out;
    }
    return cg_solve(sigma, c, b, opts, report);
}

Field upwind_advection_diffusion_solve(double inv_k, const Field& theta, const FaceData& w,
                                       const Field& b, SolveReport* report) {
    const GridSpec& g = b.grid;
    const int nx = g.cells[0], ny = g.cells[1];
    const int n = g.cell_count();
    const int bw = g.dim == 1 ? 1 : nx;
    BandedMatrix A(n, bw);
    const double ax = 1.0 / (g.h(0) * g.h(0));
    const double ay = g.dim == 2 ? 1.0 / (g.h(1) * g.h(1)) : 0.0;
    const double ihx = 1.0 / g.h(0);
    const double ihy = g.dim == 2 ? 1.0 / g.h(1) : 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int p = g.idx(i, j);
            double diag = inv_k;
            if (i > 0) { A.at(p, g.idx(i - 1, j)) = -ax; diag += ax; }
            if (i + 1 < nx) { A.at(p, g.idx(i + 1, j)) = -ax; diag += ax; }
            if (g.dim == 2 && j > 0) { A.at(p, g.idx(i, j - 1)) = -ay; diag += ay; }
            if (g.dim == 2 && j + 1 < ny) { A.at(p, g.idx(i, j + 1)) = -ay; diag += ay; }
            A.at(p, p) = diag;
        }
    // Upwind flux theta_donor * x_donor * w at each interior face; the donor is
    // the cell the flow leaves. Divergence adds +flux/h to the donor-side cell
    // and -flux/h to the other, giving nonpositive off-diagonal entries.
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            const double v = w.xf(i, j);
            const int pl = g.idx(i, j), pr = g.idx(i + 1, j);
            if (v > 0.0) {
                const double cfl = theta.at(i, j) * v * ihx;
                A.at(pl, pl) += cfl;
                A.at(pr, pl) -= cfl;
            } else if (v < 0.0) {
                const double cfl = theta.at(i + 1, j) * v * ihx;
                A.at(pl, pr) += cfl;   // v < 0: entry is nonpositive
                A.at(pr, pr) -= cfl;
            }
        }
    if (g.dim == 2)
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double v = w.yf(i, j);
                const int pd = g.idx(i, j), pu = g.idx(i, j + 1);
                if (v > 0.0) {
                    const double cfl = theta.at(i, j) * v * ihy;
                    A.at(pd, pd) += cfl;
                    A.at(pu, pd) -= cfl;
                } else if (v < 0.0) {
                    const double cfl = theta.at(i, j + 1) * v * ihy;
                    A.at(pd, pu) += cfl;
                    A.at(pu, pu) -= cfl;
                }
            }
    A.factor();
    std::vector<double> x = b.values;
    A.solve_in_place(x);
    Field out(g);
    out.values = std::move(x);
    if (report) {
        Field Ax = helmholtz_apply(inv_k, nullptr, out) + upwind_advection_apply(theta, w, out);
        double bn = l2_norm(b);
        *report = {1, bn > 0 ? l2_norm(b - Ax) / bn : 0.0};
    }
    return out;
}

Field poisson_neumann_solve(const Field& h_rhs, const SolveOptions& opts, SolveReport* report) {
    SolveReport rep;
    Field z = helmholtz_solve(1.0, nullptr, h_rhs, opts, &rep);
    if (report) *report = rep;
    if (rep.residual > 10.0 * opts.rel_tol)
        throw SolverError("poisson_neumann_solve: residual above tolerance", rep.residual);
    return z;
}

}  // namespace chemotax

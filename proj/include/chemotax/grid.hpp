// Uniform cell-centered 1D/2D grids with homogeneous Neumann boundaries:
// quadrature, Lp norms, face gradients/divergence, Neumann Laplacian, and
// the linear solvers used by the time steppers.
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chemotax {

// Thrown when an iterative or direct linear solve cannot reach tolerance.
struct SolverError : std::runtime_error {
    double residual = 0.0;
    std::vector<double> residual_history;
    explicit SolverError(const std::string& msg, double res = 0.0,
                         std::vector<double> history = {})
        : std::runtime_error(msg), residual(res), residual_history(std::move(history)) {}
};

// Thrown when a post-hoc invariant (theorem conclusion) is violated beyond tolerance.
struct InvariantViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridSpec {
    int dim = 1;
    std::array<int, 2> cells{1, 1};        // cells per axis; cells[1] == 1 in 1D
    std::array<double, 2> lengths{1.0, 1.0};

    static GridSpec line(int nx, double length = 1.0);
    static GridSpec rect(int nx, int ny, double lx = 1.0, double ly = 1.0);

    double h(int axis) const { return lengths[axis] / cells[axis]; }
    int cell_count() const { return cells[0] * cells[1]; }
    double cell_volume() const { return dim == 1 ? h(0) : h(0) * h(1); }
    double domain_volume() const { return dim == 1 ? lengths[0] : lengths[0] * lengths[1]; }

    // Cell center coordinate along an axis.
    double center(int i, int axis) const { return (i + 0.5) * h(axis); }
    int idx(int i, int j = 0) const { return j * cells[0] + i; }

    bool operator==(const GridSpec& o) const {
        return dim == o.dim && cells == o.cells && lengths == o.lengths;
    }
};

// Scalar function sampled at cell centers. Value-semantic.
struct Field {
    GridSpec grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(const GridSpec& g, double fill = 0.0)
        : grid(g), values(static_cast<size_t>(g.cell_count()), fill) {}

    int size() const { return static_cast<int>(values.size()); }
    double operator[](int i) const { return values[static_cast<size_t>(i)]; }
    double& operator[](int i) { return values[static_cast<size_t>(i)]; }
    double at(int i, int j) const { return values[static_cast<size_t>(grid.idx(i, j))]; }
    double& at(int i, int j) { return values[static_cast<size_t>(grid.idx(i, j))]; }

    // Sample f(x) in 1D or f(x,y) in 2D at cell centers.
    static Field sample(const GridSpec& g, const std::function<double(double)>& f);
    static Field sample(const GridSpec& g, const std::function<double(double, double)>& f);

    double min() const;
    double max() const;
    bool all_finite() const;
};

// One value per interior face per axis. Boundary-normal components are
// identically zero (this is how the zero-flux boundary enters every operator).
struct FaceData {
    GridSpec grid;
    std::vector<double> x_faces;  // (nx-1) * ny entries, index j*(nx-1)+i for face (i,j)-(i+1,j)
    std::vector<double> y_faces;  // nx * (ny-1) entries, index j*nx+i for face (i,j)-(i,j+1); empty in 1D

    FaceData() = default;
    explicit FaceData(const GridSpec& g);

    double& xf(int i, int j) { return x_faces[static_cast<size_t>(j * (grid.cells[0] - 1) + i)]; }
    double xf(int i, int j) const { return x_faces[static_cast<size_t>(j * (grid.cells[0] - 1) + i)]; }
    double& yf(int i, int j) { return y_faces[static_cast<size_t>(j * grid.cells[0] + i)]; }
    double yf(int i, int j) const { return y_faces[static_cast<size_t>(j * grid.cells[0] + i)]; }
};

// Field arithmetic (element-wise, grids must match).
Field operator+(const Field& a, const Field& b);
Field operator-(const Field& a, const Field& b);
Field operator*(double c, const Field& a);
Field pointwise_mul(const Field& a, const Field& b);
Field pointwise_div(const Field& a, const Field& b);
Field map_field(const Field& a, const std::function<double(double)>& f);

// Midpoint quadrature: sum of values times cell volume. Exact for cell-wise
// constants and (by the midpoint rule) for linear functions.
double integrate(const Field& f);

// (integral of |f|^p)^(1/p); p = infinity gives max |f|. Requires p >= 1.
double lp_norm(const Field& f, double p);
double l2_norm(const Field& f);
double linf_norm(const Field& f);

// Discrete L2 inner product, cell-volume weighted.
double dot(const Field& a, const Field& b);

// Face-difference gradient: (right - left)/h at interior faces, zero at the boundary.
FaceData grad_faces(const Field& f);

// Cell divergence of face data, (outgoing - incoming)/h summed over axes.
// integrate(div_faces(g)) == 0 for every g (telescoping sum).
Field div_faces(const FaceData& g);

// div_faces(grad_faces(f)): the Neumann Laplacian with reflecting ghost cells.
Field neumann_laplacian(const Field& f);

// Face quadrature of a . b; each interior face carries one cell volume.
double face_dot(const FaceData& a, const FaceData& b);
double face_norm_sq(const FaceData& a);  // == face_dot(a, a), i.e. integral of |a|^2

// Cell field whose i-th value is sum over axes of (g_left^2 + g_right^2)/2.
// integrate(face_square_cellavg(g)) == face_norm_sq(g) exactly; this identity
// is what makes the z-equation testing arguments carry over to the grid.
Field face_square_cellavg(const FaceData& g);

// Face value = arithmetic mean of the two adjacent cells.
FaceData cell_to_face_avg(const Field& f);

// Per-face product.
FaceData face_mul(const FaceData& a, const FaceData& b);

// Transpose of cell_to_face_avg in the uniform-volume pairing: cell value =
// half the sum over adjacent interior faces. face_square_cellavg(g) equals
// face_to_cell_avg(face_mul(g, g)).
Field face_to_cell_avg(const FaceData& g);

struct SolveOptions {
    double rel_tol = 1e-12;
    int max_iters = 200000;
};

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;  // final relative residual
};

// Solve (sigma*I - Laplacian + diag(c)) x = b where c may be null (treated as 0).
// Requires sigma + c > 0 pointwise so the system is SPD.
// 1D: direct tridiagonal elimination. 2D: conjugate gradients with a fixed
// iteration order, matrix-free.
Field helmholtz_solve(double sigma, const Field* c, const Field& b,
                      const SolveOptions& opts = {}, SolveReport* report = nullptr);

// Solve (inv_k*I - Laplacian + U) x = b where U is the upwind (donor-cell)
// advection matrix for the face flux theta_donor * x_donor * w_f. The matrix
// is an M-matrix, so x >= 0 whenever b >= 0; the direct banded elimination
// used here involves no cancellation, making that sign property exact in
// floating point as well.
Field upwind_advection_diffusion_solve(double inv_k, const Field& theta, const FaceData& w,
                                       const Field& b, SolveReport* report = nullptr);

// Matrix apply for (sigma*I - Laplacian + diag(c)); exposed for residual checks.
Field helmholtz_apply(double sigma, const Field* c, const Field& x);

// Apply the upwind advection operator U (divergence of theta_donor*x_donor*w).
Field upwind_advection_apply(const Field& theta, const FaceData& w, const Field& x);

// Solve (I - Laplacian) z = h, the operator-validation problem. The result
// satisfies the residual contract ||(I - Lap)z - h||_2 <= rel_tol * ||h||_2.
Field poisson_neumann_solve(const Field& h_rhs, const SolveOptions& opts = {},
                            SolveReport* report = nullptr);

// CSV / JSON serialization with grid metadata headers.
std::string field_to_csv(const Field& f);
Field field_from_csv(const std::string& text);
std::string field_to_json(const Field& f);
Field field_from_json(const std::string& text);

}  // namespace chemotax

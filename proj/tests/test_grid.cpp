#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "chemotax/grid.hpp"
#include "doctest.h"

using namespace chemotax;

namespace {
constexpr double kPi = 3.14159265358979323846;

Field random_field(const GridSpec& g, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Field f(g);
    for (double& v : f.values) v = dist(rng);
    return f;
}

FaceData random_faces(const GridSpec& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    FaceData fd(g);
    for (double& v : fd.x_faces) v = dist(rng);
    for (double& v : fd.y_faces) v = dist(rng);
    return fd;
}
}  // namespace

TEST_CASE("integrate: exact for constants and midpoint-sampled linears") {
    GridSpec g1 = GridSpec::line(64, 1.0);
    CHECK(integrate(Field(g1, 1.0)) == doctest::Approx(1.0).epsilon(1e-14));

    GridSpec g2 = GridSpec::rect(32, 16, 2.0, 1.0);
    const double c = 3.7;
    CHECK(integrate(Field(g2, c)) == doctest::Approx(2.0 * c).epsilon(1e-14));

    Field linear = Field::sample(g1, [](double x) { return x; });
    CHECK(integrate(linear) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("lp_norm basics") {
    GridSpec g = GridSpec::line(64, 1.0);
    CHECK(lp_norm(Field(g, 2.0), 2.0) == doctest::Approx(2.0));
    CHECK(lp_norm(Field(g, -3.0), std::numeric_limits<double>::infinity()) == doctest::Approx(3.0));

    Field half = Field::sample(g, [](double x) { return x < 0.5 ? 1.0 : 0.0; });
    CHECK(lp_norm(half, 1.0) == doctest::Approx(0.5));

    CHECK_THROWS_AS(lp_norm(half, 0.5), std::invalid_argument);
}

TEST_CASE("grad_faces: constants, linears, analytic derivative oracle") {
    GridSpec g = GridSpec::line(64, 1.0);
    FaceData zero = grad_faces(Field(g, 4.2));
    for (double v : zero.x_faces) CHECK(v == 0.0);

    FaceData one = grad_faces(Field::sample(g, [](double x) { return x; }));
    for (double v : one.x_faces) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    // d/dx cos(pi x) = -pi sin(pi x); face-centered differences are O(h^2).
    Field cosf = Field::sample(g, [](double x) { return std::cos(kPi * x); });
    FaceData grad = grad_faces(cosf);
    const double h = g.h(0);
    double worst = 0.0;
    for (int i = 0; i + 1 < g.cells[0]; ++i) {
        const double xf = (i + 1) * h;
        worst = std::max(worst, std::abs(grad.xf(i, 0) + kPi * std::sin(kPi * xf)));
    }
    CHECK(worst < 1.5 * kPi * kPi * kPi * h * h / 24.0);
}

TEST_CASE("div_faces: zero, discrete divergence theorem, Laplacian oracle") {
    std::mt19937_64 rng(7);
    GridSpec g2 = GridSpec::rect(23, 17, 1.0, 1.3);

    Field z = div_faces(FaceData(g2));
    for (double v : z.values) CHECK(v == 0.0);

    for (int rep = 0; rep < 5; ++rep) {
        FaceData fd = random_faces(g2, rng);
        CHECK(std::abs(integrate(div_faces(fd))) <= 1e-12);
    }

    GridSpec g = GridSpec::line(128, 1.0);
    Field cosf = Field::sample(g, [](double x) { return std::cos(kPi * x); });
    Field lap = div_faces(grad_faces(cosf));
    double worst = 0.0;
    for (int i = 0; i < g.cells[0]; ++i)
        worst = std::max(worst, std::abs(lap[i] + kPi * kPi * cosf[i]));
    CHECK(worst < 5e-3);  // O(h^2) at h = 1/128
}

TEST_CASE("neumann_laplacian: nullspace, compatibility, symmetry") {
    std::mt19937_64 rng(11);
    for (const GridSpec& g : {GridSpec::line(37, 1.0), GridSpec::rect(12, 19, 1.0, 0.5)}) {
        Field c(g, 5.5);
        for (double v : neumann_laplacian(c).values) CHECK(std::abs(v) <= 1e-11);

        Field f = random_field(g, rng);
        CHECK(std::abs(integrate(neumann_laplacian(f))) <= 1e-12);

        Field h = random_field(g, rng);
        const double a = dot(neumann_laplacian(f), h);
        const double b = dot(f, neumann_laplacian(h));
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("neumann_laplacian: observed order is 2 on cos*cos") {
    // Max-norm error on cos(pi x) cos(pi y) must shrink ~4x per h halving.
    auto err = [](int n) {
        GridSpec g = GridSpec::rect(n, n, 1.0, 1.0);
        Field f = Field::sample(g, [](double x, double y) {
            return std::cos(kPi * x) * std::cos(kPi * y);
        });
        Field lap = neumann_laplacian(f);
        double worst = 0.0;
        for (int i = 0; i < g.cell_count(); ++i)
            worst = std::max(worst, std::abs(lap[i] + 2.0 * kPi * kPi * f[i]));
        return worst;
    };
    const double e1 = err(16), e2 = err(32), e3 = err(64);
    const double o1 = std::log2(e1 / e2), o2 = std::log2(e2 / e3);
    CHECK(o1 > 1.8);
    CHECK(o1 < 2.2);
    CHECK(o2 > 1.8);
    CHECK(o2 < 2.2);
}

TEST_CASE("face_square_cellavg matches the face quadrature exactly") {
    std::mt19937_64 rng(13);
    for (const GridSpec& g : {GridSpec::line(41, 1.0), GridSpec::rect(14, 9, 2.0, 1.0)}) {
        FaceData fd = random_faces(g, rng);
        const double a = integrate(face_square_cellavg(fd));
        const double b = face_norm_sq(fd);
        CHECK(a == doctest::Approx(b).epsilon(1e-13));
        // And the general transfer identity behind it.
        const double c = integrate(face_to_cell_avg(face_mul(fd, fd)));
        CHECK(c == doctest::Approx(b).epsilon(1e-13));
    }
}

TEST_CASE("summation by parts: <div w, phi> = -<w, grad phi>") {
    std::mt19937_64 rng(17);
    for (const GridSpec& g : {GridSpec::line(29, 1.0), GridSpec::rect(11, 13, 1.0, 1.0)}) {
        FaceData w = random_faces(g, rng);
        Field phi = random_field(g, rng);
        const double lhs = dot(div_faces(w), phi);
        const double rhs = -face_dot(w, grad_faces(phi));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("poisson_neumann_solve: constants, analytic solution, residual contract") {
    GridSpec g = GridSpec::line(64, 1.0);
    Field c = poisson_neumann_solve(Field(g, 2.5));
    for (double v : c.values) CHECK(v == doctest::Approx(2.5).epsilon(1e-11));

    // -z'' + z = (1 + pi^2) cos(pi x) has solution z = cos(pi x).
    Field rhs = Field::sample(g, [](double x) { return (1.0 + kPi * kPi) * std::cos(kPi * x); });
    Field z = poisson_neumann_solve(rhs);
    Field exact = Field::sample(g, [](double x) { return std::cos(kPi * x); });
    CHECK(linf_norm(z - exact) < 2e-3);

    std::mt19937_64 rng(23);
    for (const GridSpec& gg : {GridSpec::line(50, 1.0), GridSpec::rect(20, 20, 1.0, 1.0)}) {
        Field h = random_field(gg, rng);
        SolveReport rep;
        Field sol = poisson_neumann_solve(h, {}, &rep);
        const double res = l2_norm(h - helmholtz_apply(1.0, nullptr, sol));
        CHECK(res <= 1e-10 * std::max(1.0, l2_norm(h)));
    }
}

TEST_CASE("poisson_neumann_solve: observed spatial order across h = 1/32..1/128") {
    auto err = [](int n) {
        GridSpec g = GridSpec::line(n, 1.0);
        Field rhs = Field::sample(g, [](double x) { return (1.0 + kPi * kPi) * std::cos(kPi * x); });
        Field z = poisson_neumann_solve(rhs);
        Field exact = Field::sample(g, [](double x) { return std::cos(kPi * x); });
        return linf_norm(z - exact);
    };
    const double e32 = err(32), e64 = err(64), e128 = err(128);
    for (double order : {std::log2(e32 / e64), std::log2(e64 / e128)}) {
        CHECK(order > 1.8);
        CHECK(order < 2.2);
    }
}

TEST_CASE("helmholtz_solve handles variable nonnegative coefficients") {
    std::mt19937_64 rng(31);
    for (const GridSpec& g : {GridSpec::line(40, 1.0), GridSpec::rect(16, 16, 1.0, 1.0)}) {
        Field c = random_field(g, rng, 0.0, 4.0);
        Field b = random_field(g, rng);
        Field x = helmholtz_solve(32.0, &c, b);
        const double res = l2_norm(b - helmholtz_apply(32.0, &c, x));
        CHECK(res <= 1e-10 * std::max(1.0, l2_norm(b)));
    }
}

TEST_CASE("upwind solve: M-matrix positivity is exact in floating point") {
    std::mt19937_64 rng(37);
    for (const GridSpec& g : {GridSpec::line(80, 1.0), GridSpec::rect(20, 20, 1.0, 1.0)}) {
        for (int rep = 0; rep < 3; ++rep) {
            Field theta = random_field(g, rng, 0.0, 1.0);
            FaceData w = random_faces(g, rng);
            for (double& v : w.x_faces) v *= 30.0;
            for (double& v : w.y_faces) v *= 30.0;
            Field b = random_field(g, rng, 0.0, 2.0);
            for (double& v : b.values) v *= 64.0;
            Field x = upwind_advection_diffusion_solve(64.0, theta, w, b);
            CHECK(x.min() >= 0.0);
            SolveReport rep2;
            Field x2 = upwind_advection_diffusion_solve(64.0, theta, w, b, &rep2);
            CHECK(rep2.residual <= 1e-12);
        }
    }
}

TEST_CASE("field CSV and JSON round-trips preserve values and grid") {
    std::mt19937_64 rng(41);
    for (const GridSpec& g : {GridSpec::line(9, 2.0), GridSpec::rect(5, 4, 1.5, 0.5)}) {
        Field f = random_field(g, rng);
        Field back = field_from_csv(field_to_csv(f));
        REQUIRE(back.grid == f.grid);
        CHECK(linf_norm(back - f) == 0.0);

        Field back2 = field_from_json(field_to_json(f));
        REQUIRE(back2.grid == f.grid);
        CHECK(linf_norm(back2 - f) == 0.0);
    }
}

TEST_CASE("GridSpec rejects degenerate shapes") {
    CHECK_THROWS_AS(GridSpec::line(1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(GridSpec::line(8, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(GridSpec::rect(4, 1, 1.0, 1.0), std::invalid_argument);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gse/matrix.hpp"
#include "gse/rng.hpp"
#include "gse/svd.hpp"

using namespace gse;

namespace {

// Independent oracle: eigendecompose W^T W with cyclic two-sided Jacobi
// rotations until the off-diagonal Frobenius mass drops below 1e-14, and
// return the square roots of the eigenvalues, descending.
std::vector<double> jacobi_singular_values(const Matrix& w) {
    Matrix a = matmul(w.transpose(), w);
    const std::size_t n = a.rows();
    auto offdiag_mass = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) acc += a(i, j) * a(i, j);
        return std::sqrt(acc);
    };
    for (int sweep = 0; sweep < 200 && offdiag_mass() >= 1e-14; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = std::sqrt(std::max(0.0, a(i, i)));
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

double ortho_error(const Matrix& q) {
    const Matrix g = matmul(q.transpose(), q);
    return max_abs_diff(g, Matrix::identity(q.cols()));
}

}  // namespace

TEST_CASE("frob_norm_sq anchors") {
    CHECK(frob_norm_sq(Matrix(3, 3)) == 0.0);
    CHECK(frob_norm_sq(Matrix::identity(4)) == 4.0);
    CHECK(frob_norm_sq(Matrix::from_rows({{1, 2}, {3, 4}})) == 30.0);
}

TEST_CASE("matrix products and outer") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{0, 1}, {1, 0}});
    const Matrix c = matmul(a, b);
    CHECK(c == Matrix::from_rows({{2, 1}, {4, 3}}));
    CHECK(matvec(a, {1.0, 1.0}) == Vector{3.0, 7.0});
    CHECK(matvec_transposed(a, {1.0, 1.0}) == Vector{4.0, 6.0});
    CHECK(outer({1.0, 2.0}, {3.0, 4.0}) == Matrix::from_rows({{3, 4}, {6, 8}}));
}

TEST_CASE("svd of diagonal matrix") {
    const auto d = svd(Matrix::diag({3, 2, 1}));
    CHECK(d.sigma == std::vector<double>{3, 2, 1});
    CHECK(max_abs_diff(d.u, Matrix::identity(3)) == 0.0);
    CHECK(max_abs_diff(d.v, Matrix::identity(3)) == 0.0);
}

TEST_CASE("svd of permuted diagonal") {
    const auto d = svd(Matrix::from_rows({{0, 2}, {1, 0}}));
    CHECK(d.sigma == std::vector<double>{2, 1});
    CHECK(max_abs_diff(d.u, Matrix::identity(2)) == 0.0);
    CHECK(max_abs_diff(d.v, Matrix::from_rows({{0, 1}, {1, 0}})) == 0.0);
}

TEST_CASE("svd rejects non-finite input") {
    Matrix w(2, 2);
    w(1, 0) = std::nan("");
    CHECK_THROWS_AS(svd(w), std::invalid_argument);
    CHECK_THROWS_AS(svd(Matrix()), std::invalid_argument);
}

TEST_CASE("svd singular values match Jacobi eigen-oracle") {
    RngStream rng(42, 0);
    const Matrix w = gaussian_matrix(4, 4, 1.0, rng);
    const auto d = svd(w);
    const auto oracle = jacobi_singular_values(w);
    REQUIRE(d.sigma.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i)
        CHECK(std::abs(d.sigma[i] - oracle[i]) <= 1e-9 * oracle[0]);
}

TEST_CASE("svd reconstruction, orthonormality, determinism over seeded corpus") {
    RngStream shapes(7, 99);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t m = 1 + shapes.next_u64() % 32;
        const std::size_t n = 1 + shapes.next_u64() % 32;
        RngStream rng(1000 + trial, 1);
        const Matrix w = gaussian_matrix(m, n, 1.0, rng);
        const auto d = svd(w);
        REQUIRE(d.rank() == std::min(m, n));
        CHECK(std::is_sorted(d.sigma.rbegin(), d.sigma.rend()));
        CHECK(frob_norm(d.reconstruct() - w) <= 1e-10 * frob_norm(w));
        CHECK(ortho_error(d.u) <= 1e-10);
        CHECK(ortho_error(d.v) <= 1e-10);
        const auto d2 = svd(w);
        CHECK(d2.u == d.u);
        CHECK(d2.v == d.v);
        CHECK(d2.sigma == d.sigma);
    }
}

TEST_CASE("gaussian_matrix determinism and precondition") {
    RngStream a(5, 2), b(5, 2);
    CHECK(gaussian_matrix(2, 2, 1.0, a) == gaussian_matrix(2, 2, 1.0, b));
    RngStream c(5, 3);
    CHECK_THROWS_AS(gaussian_matrix(3, 3, 0.0, c), std::invalid_argument);
}

TEST_CASE("gaussian_matrix sample statistics") {
    RngStream rng(11, 0);
    const Matrix m = gaussian_matrix(1000, 10, 0.02, rng);
    double mean = 0.0;
    for (double v : m.data()) mean += v;
    mean /= static_cast<double>(m.size());
    CHECK(std::abs(mean) <= 4.0 * 0.02 / std::sqrt(10000.0));
    double var = 0.0;
    for (double v : m.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m.size() - 1);
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("distinct stream ids decorrelate") {
    RngStream a(123, 0), b(123, 1);
    double corr = 0.0;
    for (int i = 0; i < 4000; ++i) corr += a.next_gaussian() * b.next_gaussian();
    corr /= 4000.0;
    CHECK(std::abs(corr) < 0.05);
}

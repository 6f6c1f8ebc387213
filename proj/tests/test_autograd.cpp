#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gse/autograd.hpp"

using namespace gse;

namespace {

GseLayer seeded_layer(std::size_t m, std::size_t n, std::uint64_t seed,
                      Variant variant = Variant::full) {
    GseConfig c;
    c.r_g = 2;
    c.d = 2;
    c.num_experts = 3;
    c.top_k = 2;
    c.seed = seed;
    c.variant = variant;
    RngStream rng(seed, 7);
    return build_layer(gaussian_matrix(m, n, 1.0, rng), c);
}

// Tr(Sigma_i U_i^T M U_i) assembled directly from the stored segment.
double projected_trace(const SpectralSegment& seg, const Matrix& m_sym, bool left) {
    const Matrix& basis = left ? seg.u : seg.v;
    double acc = 0.0;
    for (std::size_t k = 0; k < seg.width(); ++k) {
        Vector col(basis.rows());
        for (std::size_t i = 0; i < basis.rows(); ++i) col[i] = basis(i, k);
        acc += seg.sigma[k] * dot(col, matvec(m_sym, col));
    }
    return acc;
}

}  // namespace

TEST_CASE("upstream_gradient anchors") {
    Vector dl(4, 0.0), x(4, 0.0);
    dl[0] = 1.0;
    x[1] = 1.0;
    const Matrix g = upstream_gradient(dl, x);
    CHECK(g(0, 1) == 1.0);
    CHECK(frob_norm_sq(g) == 1.0);

    CHECK(max_abs(upstream_gradient(Vector(4, 0.0), x)) == 0.0);

    RngStream rng(1, 0);
    const Vector a1 = gaussian_vector(3, 1.0, rng), x1 = gaussian_vector(2, 1.0, rng);
    const Vector a2 = gaussian_vector(3, 1.0, rng), x2 = gaussian_vector(2, 1.0, rng);
    const std::vector<Vector> dls{a1, a2}, xs{x1, x2};
    const Matrix batch = upstream_gradient(std::span(dls), std::span(xs));
    CHECK(max_abs_diff(batch, outer(a1, x1) + outer(a2, x2)) == 0.0);
}

TEST_CASE("expert_gradients zero cases and linearity") {
    const auto layer = seeded_layer(8, 8, 3);
    RngStream rng(5, 1);
    const Matrix g1 = gaussian_matrix(8, 8, 1.0, rng);
    const Matrix g2 = gaussian_matrix(8, 8, 1.0, rng);

    auto [za, zb] = expert_gradients(g1, 0.0, layer.specialized[0]);
    CHECK(max_abs(za) == 0.0);
    CHECK(max_abs(zb) == 0.0);

    auto [ga0, gb0] = expert_gradients(Matrix(8, 8), 0.5, layer.specialized[0]);
    CHECK(max_abs(ga0) == 0.0);
    CHECK(max_abs(gb0) == 0.0);

    // linearity in g by superposition
    auto [ga1, gb1] = expert_gradients(g1, 0.4, layer.specialized[1]);
    auto [ga2, gb2] = expert_gradients(g2, 0.4, layer.specialized[1]);
    auto [gas, gbs] = expert_gradients(g1 + g2, 0.4, layer.specialized[1]);
    CHECK(max_abs_diff(gas, ga1 + ga2) <= 1e-12 * max_abs(gas));
    CHECK(max_abs_diff(gbs, gb1 + gb2) <= 1e-12 * max_abs(gbs));
}

TEST_CASE("exact trace law for localized gradient norms at init") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const auto layer = seeded_layer(8, 8, seed);
        RngStream rng(seed, 2);
        const Matrix g = gaussian_matrix(8, 8, 1.0, rng);
        const Matrix ggt = matmul(g, g.transpose());
        const Matrix gtg = matmul(g.transpose(), g);
        const double w = 0.37;
        for (std::size_t i = 0; i < layer.num_experts(); ++i) {
            const auto& e = layer.specialized[i];
            auto [ga, gb] = expert_gradients(g, w, e);
            const double expected_a =
                w * w * e.scale * projected_trace(layer.segments[i], ggt, true);
            const double expected_b =
                w * w * e.scale * projected_trace(layer.segments[i], gtg, false);
            CHECK(frob_norm_sq(ga) == doctest::Approx(expected_a).epsilon(1e-10));
            CHECK(frob_norm_sq(gb) == doctest::Approx(expected_b).epsilon(1e-10));
        }
    }
}

TEST_CASE("theorem-1 equalization under isotropic g and fixed uniform weights") {
    const std::size_t dim = 16;
    const int draws = 10000;
    for (bool scaled : {true, false}) {
        const auto layer = seeded_layer(dim, dim, 29, scaled ? Variant::full : Variant::no_grad_scaling);
        const std::size_t num_experts = layer.num_experts();
        const double w = 1.0 / static_cast<double>(num_experts);
        std::vector<double> mean(num_experts, 0.0), sq(num_experts, 0.0);
        RngStream rng(101, 0);
        for (int t = 0; t < draws; ++t) {
            const Matrix g = gaussian_matrix(dim, dim, 1.0, rng);
            for (std::size_t i = 0; i < num_experts; ++i) {
                auto [ga, gb] = expert_gradients(g, w, layer.specialized[i]);
                const double v = frob_norm_sq(ga);
                mean[i] += v;
                sq[i] += v * v;
            }
        }
        std::vector<double> se(num_experts);
        for (std::size_t i = 0; i < num_experts; ++i) {
            mean[i] /= draws;
            const double var = sq[i] / draws - mean[i] * mean[i];
            se[i] = std::sqrt(var / draws);
        }
        for (std::size_t i = 0; i < num_experts; ++i) {
            const double predicted =
                scaled ? mean[0]
                       : mean[0] * layer.specialized[i].trace_sigma /
                             layer.specialized[0].trace_sigma;
            const double tol = 3.0 * std::sqrt(se[i] * se[i] + se[0] * se[0]);
            CHECK(std::abs(mean[i] - predicted) <= tol + 1e-12);
        }
    }
}

TEST_CASE("router_gradients anchors") {
    const auto layer = seeded_layer(8, 8, 41);
    RngStream rng(6, 0);
    const Vector x = gaussian_vector(8, 1.0, rng);
    const Matrix g = gaussian_matrix(8, 8, 1.0, rng);

    // k = 1: the single selected weight is constant 1
    const auto r1 = route(layer.router, x, 1);
    CHECK(max_abs(router_gradients(g, x, r1, layer.specialized)) == 0.0);

    // equal Frobenius inner products across the selected set -> zero
    GseLayer same = layer;
    same.specialized[1] = same.specialized[0];
    same.specialized[2] = same.specialized[0];
    const auto rk = route(same.router, x, 2);
    CHECK(max_abs(router_gradients(g, x, rk, same.specialized)) <= 1e-14 * max_abs(g));
}

TEST_CASE("fd_check validates analytical gradients") {
    const auto layer = seeded_layer(12, 10, 77);
    RngStream rng(9, 0);
    const Vector x = gaussian_vector(10, 1.0, rng);
    const Vector target = gaussian_vector(12, 1.0, rng);
    const FdReport report = fd_check(layer, x, target, 1e-6);
    CHECK(report.max_factor_error() <= 1e-6);
    REQUIRE(report.router_probeable);
    CHECK(report.max_rel_router <= 1e-6);
}

TEST_CASE("fd_check edge cases") {
    const auto layer = seeded_layer(12, 10, 78);
    const Vector x0(10, 0.0);
    const Vector target(12, 0.0);
    const FdReport report = fd_check(layer, x0, target, 1e-6);
    CHECK(report.max_factor_error() == 0.0);

    CHECK_THROWS_AS(fd_check(layer, x0, target, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(fd_check(layer, x0, target, 1e-9), std::invalid_argument);
}

TEST_CASE("sgd step definition and zero-gradient no-op") {
    Matrix p = Matrix::from_rows({{1.0, 2.0}});
    Matrix g = Matrix::from_rows({{0.5, -1.0}});
    OptimState opt;
    std::vector<ParamGrad> params{{&p, &g, 0.1}};
    opt.apply_step(params);
    CHECK(p == Matrix::from_rows({{1.0 - 0.05, 2.0 + 0.1}}));
    CHECK(opt.step() == 1);

    const Matrix zero(1, 2);
    std::vector<ParamGrad> zparams{{&p, &zero, 0.1}};
    const Matrix before = p;
    opt.apply_step(zparams);
    CHECK(p == before);
    CHECK(opt.step() == 2);
}

TEST_CASE("adam update magnitude converges to the learning rate") {
    Matrix p(1, 1);
    Matrix g = Matrix::from_rows({{3.0}});
    OptimConfig cfg;
    cfg.kind = OptimKind::adam;
    OptimState opt(cfg);
    std::vector<ParamGrad> params{{&p, &g, 0.01}};
    double prev = p(0, 0);
    double last_step = 0.0;
    for (int i = 0; i < 100; ++i) {
        opt.apply_step(params);
        last_step = prev - p(0, 0);
        prev = p(0, 0);
    }
    // bias-corrected moment ratio approaches 1, so |update| -> lr
    CHECK(last_step == doctest::Approx(0.01).epsilon(1e-3));
}

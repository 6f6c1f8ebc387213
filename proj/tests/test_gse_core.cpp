#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gse/gse_layer.hpp"

using namespace gse;

namespace {

GseConfig small_config() {
    GseConfig c;
    c.r_g = 1;
    c.d = 1;
    c.num_experts = 3;
    c.top_k = 2;
    c.s_g = 2.0;
    c.s_base = 2.0;
    c.seed = 17;
    return c;
}

Matrix random_square(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed, 0);
    return gaussian_matrix(n, n, 1.0, rng);
}

}  // namespace

TEST_CASE("partition_spectrum index arithmetic") {
    SpectralDecomposition d;
    d.sigma = {8, 7, 6, 5, 4, 3, 2, 1};
    d.u = Matrix::identity(8);
    d.v = Matrix::identity(8);
    auto [gen, specs] = partition_spectrum(d, 2, 2, 3);
    CHECK(gen.sigma == std::vector<double>{8, 7});
    REQUIRE(specs.size() == 3);
    CHECK(specs[0].trace_sigma() == 11.0);
    CHECK(specs[1].trace_sigma() == 7.0);
    CHECK(specs[2].trace_sigma() == 3.0);
    CHECK(specs[0].index_lo == 2);
    CHECK(specs[2].index_hi == 8);
}

TEST_CASE("partition_spectrum rejects insufficient rank") {
    SpectralDecomposition d;
    d.sigma = {4, 3, 2, 1};
    d.u = Matrix::identity(4);
    d.v = Matrix::identity(4);
    CHECK_THROWS_WITH_AS(partition_spectrum(d, 2, 2, 3),
                         "partition_spectrum: needs rank 8, decomposition has 4",
                         std::invalid_argument);
}

TEST_CASE("partition_spectrum with r_g = 0") {
    SpectralDecomposition d;
    d.sigma = {4, 3, 2, 1};
    d.u = Matrix::identity(4);
    d.v = Matrix::identity(4);
    auto [gen, specs] = partition_spectrum(d, 0, 1, 4);
    CHECK(gen.width() == 0);
    CHECK(specs[0].index_lo == 0);
    CHECK(specs[0].sigma == std::vector<double>{4});
}

TEST_CASE("scaling_factors trace-inverse rule") {
    SpectralDecomposition d;
    d.sigma = {8, 7, 6, 5, 4, 3, 2, 1};
    d.u = Matrix::identity(8);
    d.v = Matrix::identity(8);
    auto [gen, specs] = partition_spectrum(d, 2, 2, 3);
    const auto s = scaling_factors(specs, 2.0);
    CHECK(s[0] == doctest::Approx(14.0 / 11.0).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(s[2] == doctest::Approx(14.0 / 3.0).epsilon(1e-14));
    // sum_i s_i * Tr_i = E * s_base * C exactly
    double lhs = 0.0;
    for (std::size_t i = 0; i < 3; ++i) lhs += s[i] * specs[i].trace_sigma();
    CHECK(lhs == doctest::Approx(3.0 * 2.0 * 7.0).epsilon(1e-14));

    const auto flat = scaling_factors(specs, 2.0, Variant::no_grad_scaling);
    CHECK(flat == std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("scaling_factors equal traces and zero-trace rejection") {
    SpectralSegment a, b;
    a.sigma = {3, 3};
    b.sigma = {2, 4};
    CHECK(scaling_factors({a, b}, 2.0) == std::vector<double>{2.0, 2.0});
    SpectralSegment z;
    z.sigma = {0, 0};
    CHECK_THROWS_AS(scaling_factors({a, z}, 2.0), std::invalid_argument);
}

TEST_CASE("init_generalized diagonal anchor") {
    const auto decomp = svd(Matrix::diag({4, 3, 2, 1}));
    auto [gen, specs] = partition_spectrum(decomp, 1, 1, 3);
    const auto e = init_generalized(gen, 2.0);
    CHECK(max_abs_diff(e.effective_weight(), Matrix::diag({4, 0, 0, 0})) <= 1e-14);
    const auto e1 = init_generalized(gen, 1.0);
    CHECK(max_abs_diff(matmul(e1.b, e1.a), gen.assemble()) <= 1e-14);
}

TEST_CASE("init_specialized diagonal anchor and no_svd_init") {
    const auto decomp = svd(Matrix::diag({4, 3, 2, 1}));
    auto [gen, specs] = partition_spectrum(decomp, 1, 1, 3);
    RngStream rng(3, 0);
    const auto e = init_specialized(specs[0], 4.0 / 3.0, Variant::full, rng);
    CHECK(max_abs_diff(e.effective_weight(), Matrix::diag({0, 3, 0, 0})) <= 1e-14);

    const auto lora = init_specialized(specs[0], 2.0, Variant::no_svd_init, rng);
    CHECK(max_abs(lora.effective_weight()) == 0.0);
    CHECK(max_abs(lora.b) > 0.0);
}

TEST_CASE("product identity on seeded random base") {
    const Matrix w0 = random_square(8, 99);
    const auto decomp = svd(w0);
    auto [gen, specs] = partition_spectrum(decomp, 2, 2, 3);
    const auto scales = scaling_factors(specs, 2.0);
    RngStream rng(0, 0);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto e = init_specialized(specs[i], scales[i], Variant::full, rng);
        const Matrix direct = specs[i].assemble();
        CHECK(frob_norm(e.effective_weight() - direct) <= 1e-12 * frob_norm(direct));
    }
}

TEST_CASE("residual_shift diagonal arithmetic") {
    GseConfig c = small_config();
    const auto layer = build_layer(Matrix::diag({4, 3, 2, 1}), c);
    const Matrix res = residual_shift(layer.generalized, layer.specialized);
    const Matrix expected = Matrix::diag({4, 1, 2.0 / 3.0, 1.0 / 3.0});
    CHECK(max_abs_diff(res, expected) <= 1e-13);
    CHECK(max_abs_diff(layer.w0_adjusted, Matrix::diag({0, 2, 4.0 / 3.0, 2.0 / 3.0})) <= 1e-13);
}

TEST_CASE("residual_shift is zero under no_svd_init with r_g = 0") {
    GseConfig c = small_config();
    c.r_g = 0;
    c.variant = Variant::no_svd_init;
    const auto layer = build_layer(random_square(6, 4), c);
    CHECK(max_abs(residual_shift(layer.generalized, layer.specialized)) == 0.0);
    CHECK(max_abs_diff(layer.w0_adjusted, layer.w0_original) == 0.0);
}

TEST_CASE("merge-with-uniform-weights identity") {
    GseConfig c;
    c.r_g = 2;
    c.d = 2;
    c.num_experts = 7;
    c.top_k = 2;
    c.seed = 5;
    const auto layer = build_layer(random_square(64, 12), c);
    REQUIRE(layer.specialized.size() == 7);
    Matrix merged = layer.w0_adjusted + layer.generalized.effective_weight();
    for (const auto& e : layer.specialized)
        merged += (1.0 / 7.0) * e.effective_weight();
    CHECK(max_abs_diff(merged, layer.w0_original) <= 1e-12);
}

TEST_CASE("segment sum plus discarded tail reconstructs w0") {
    const Matrix w0 = random_square(16, 21);
    const auto decomp = svd(w0);
    auto [gen, specs] = partition_spectrum(decomp, 2, 2, 3);
    Matrix acc = gen.assemble();
    for (const auto& s : specs) acc += s.assemble();
    // discarded tail: indices past the last expert segment
    for (std::size_t k = specs.back().index_hi; k < decomp.rank(); ++k) {
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j)
                acc(i, j) += decomp.u(i, k) * decomp.sigma[k] * decomp.v(j, k);
    }
    CHECK(frob_norm(acc - w0) <= 1e-10 * frob_norm(w0));
}

TEST_CASE("route anchors") {
    Router r;
    r.w_z = Matrix::identity(3);
    const auto res = route(r, {2.0, 1.0, 0.0}, 2);
    CHECK(res.selected == std::vector<std::size_t>{0, 1});
    CHECK(res.weights[0] == doctest::Approx(0.73106).epsilon(1e-4));
    CHECK(res.weights[1] == doctest::Approx(0.26894).epsilon(1e-4));
    CHECK(res.weights[2] == 0.0);

    const auto full = route(r, {2.0, 1.0, 0.0}, 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(full.weights[i] == doctest::Approx(full.full_probs[i]).epsilon(1e-14));

    const auto tie = route(r, {1.0, 1.0, 0.0}, 1);
    CHECK(tie.selected == std::vector<std::size_t>{0});
    CHECK(tie.weights == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("routing weights live on the probability simplex") {
    GseConfig c = small_config();
    const auto layer = build_layer(random_square(12, 31), c);
    RngStream rng(8, 3);
    for (int t = 0; t < 2000; ++t) {
        const Vector x = gaussian_vector(12, 1.0, rng);
        const auto res = route(layer.router, x, c.top_k);
        double total_w = 0.0, total_p = 0.0;
        for (std::size_t i = 0; i < res.weights.size(); ++i) {
            CHECK(res.weights[i] >= 0.0);
            total_w += res.weights[i];
            total_p += res.full_probs[i];
        }
        CHECK(total_w == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(total_p == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("forward agrees with equivalent_weight oracle") {
    GseConfig c;
    c.seed = 2;
    const auto layer = build_layer(random_square(32, 77), c);
    RngStream rng(55, 0);
    for (int t = 0; t < 200; ++t) {
        const Vector x = gaussian_vector(32, 1.0, rng);
        const auto [y, routing] = forward(layer, x);
        const Vector oracle = matvec(equivalent_weight(layer, x), x);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            num += (y[i] - oracle[i]) * (y[i] - oracle[i]);
            den += oracle[i] * oracle[i];
        }
        CHECK(std::sqrt(num) <= 1e-10 * std::sqrt(den));
    }
}

TEST_CASE("forward of zero input is zero") {
    const auto layer = build_layer(random_square(10, 1), small_config());
    const auto [y, routing] = forward(layer, Vector(10, 0.0));
    for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("no_svd_init forward has zero specialist contribution at init") {
    GseConfig c = small_config();
    c.variant = Variant::no_svd_init;
    const auto layer = build_layer(random_square(10, 13), c);
    RngStream rng(4, 0);
    const Vector x = gaussian_vector(10, 1.0, rng);
    const auto [y, routing] = forward(layer, x);
    Vector expected = matvec(layer.w0_adjusted, x);
    const Vector gax = matvec(layer.generalized.a, x);
    const Vector bgax = matvec(layer.generalized.b, gax);
    for (std::size_t i = 0; i < expected.size(); ++i)
        expected[i] += layer.generalized.scale * bgax[i];
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("no_specialized variant is input-independent and merges exactly") {
    GseConfig c = small_config();
    c.variant = Variant::no_specialized;
    const auto layer = build_layer(random_square(10, 6), c);
    RngStream rng(4, 1);
    const Matrix w1 = equivalent_weight(layer, gaussian_vector(10, 1.0, rng));
    const Matrix w2 = equivalent_weight(layer, gaussian_vector(10, 1.0, rng));
    CHECK(max_abs_diff(w1, w2) == 0.0);
    // uniform always-on mixing reproduces w0 exactly
    CHECK(max_abs_diff(w1, layer.w0_original) <= 1e-12);
}

TEST_CASE("no_generalized variant adds one specialized expert") {
    GseConfig c = small_config();
    c.variant = Variant::no_generalized;
    const auto layer = build_layer(random_square(10, 9), c);
    CHECK(layer.num_experts() == 4);
    CHECK(layer.generalized.b.cols() == 0);
    CHECK(max_abs(layer.generalized.effective_weight()) == 0.0);
}

TEST_CASE("table-scale build: 1 generalized + 7 specialized, adapter rank 16") {
    GseConfig c;
    c.r_g = 2;
    c.d = 2;
    c.num_experts = 7;
    c.top_k = 2;
    c.seed = 3;
    const auto layer = build_layer(random_square(64, 8), c);
    CHECK(layer.generalized.b.cols() == 2);
    CHECK(layer.num_experts() == 7);
    std::size_t total_rank = layer.generalized.b.cols();
    for (const auto& e : layer.specialized) total_rank += e.b.cols();
    CHECK(total_rank == 16);
}

TEST_CASE("equivalent_weight matches finite-difference dy/dx at fixed routing") {
    GseConfig c = small_config();
    c.seed = 14;
    const auto layer = build_layer(random_square(16, 41), c);
    RngStream rng(9, 0);
    const Vector x = gaussian_vector(16, 1.0, rng);
    const auto routing = route(layer.router, x, c.top_k);
    const Matrix weq = equivalent_weight_from_routing(layer, routing);
    // central differences of W_eq(x0) * x in x, holding the routing fixed
    const double eps = 1e-6;
    for (std::size_t j = 0; j < 16; j += 3) {
        Vector xp = x, xm = x;
        xp[j] += eps;
        xm[j] -= eps;
        const Vector yp = matvec(weq, xp);
        const Vector ym = matvec(weq, xm);
        for (std::size_t i = 0; i < 16; ++i) {
            const double fd = (yp[i] - ym[i]) / (2.0 * eps);
            CHECK(fd == doctest::Approx(weq(i, j)).epsilon(1e-7).scale(1.0));
        }
    }
}

TEST_CASE("config validation") {
    GseConfig c = small_config();
    c.top_k = 5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = small_config();
    c.s_g = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

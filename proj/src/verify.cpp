#include "gse/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gse/autograd.hpp"
#include "gse/baselines.hpp"
#include "gse/gse_layer.hpp"
#include "gse/losses.hpp"
#include "gse/matrix.hpp"
#include "gse/rng.hpp"
#include "gse/snapshot.hpp"
#include "gse/svd.hpp"

namespace gse {

namespace {

void add_check(SuiteResult& r, const std::string& name, double measured, double threshold) {
    r.checks.push_back({name, measured, threshold, measured <= threshold});
}

// desk-scale layer shapes used by the layer-sweep suites
struct Shape {
    std::size_t m, n;
};

Shape sweep_shape(std::size_t idx, RngStream& rng) {
    static constexpr Shape kAnchors[] = {{8, 8},   {16, 16}, {32, 32},  {64, 64},
                                         {128, 96}, {96, 128}, {24, 48}, {48, 24}};
    if (idx < std::size(kAnchors)) return kAnchors[idx];
    const std::size_t m = 8 + rng.next_u64() % 121;
    const std::size_t n = 8 + rng.next_u64() % 89;
    return {m, n};
}

GseConfig sweep_config(std::size_t m, std::size_t n, std::uint64_t seed,
                       Variant variant = Variant::full) {
    GseConfig c;
    c.r_g = 2;
    c.d = 2;
    c.num_experts = 7;
    c.top_k = 2;
    c.seed = seed;
    c.variant = variant;
    // keep r_g + E d within the spectrum on small shapes
    const std::size_t cap = std::min(m, n);
    while (c.r_g + c.num_experts * c.d > cap && c.num_experts > 2) --c.num_experts;
    return c;
}

// independent eigen-oracle for singular values: cyclic two-sided Jacobi on the
// Gram matrix, matching the corpus oracle used by the unit tests
std::vector<double> jacobi_singular_values(const Matrix& w) {
    const std::size_t n = w.cols();
    Matrix s = matmul(w.transpose(), w);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(s(p, q)));
        if (off < 1e-14) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(s(p, q)) < 1e-300) continue;
                const double theta = 0.5 * std::atan2(2.0 * s(p, q), s(q, q) - s(p, p));
                const double c = std::cos(theta), sn = std::sin(theta);
                for (std::size_t i = 0; i < n; ++i) {
                    const double sip = s(i, p), siq = s(i, q);
                    s(i, p) = c * sip - sn * siq;
                    s(i, q) = sn * sip + c * siq;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double spj = s(p, j), sqj = s(q, j);
                    s(p, j) = c * spj - sn * sqj;
                    s(q, j) = sn * spj + c * sqj;
                }
            }
        }
    }
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = std::sqrt(std::max(0.0, s(i, i)));
    std::sort(vals.rbegin(), vals.rend());
    return vals;
}

double orthonormality_error(const Matrix& q) {
    const Matrix gram = matmul(q.transpose(), q);
    return max_abs_diff(gram, Matrix::identity(gram.rows()));
}

SuiteResult suite_svd(std::uint64_t seed) {
    SuiteResult r;
    RngStream shape_rng(seed, 1);
    double worst_recon = 0.0, worst_ortho = 0.0, worst_sigma = 0.0;
    for (std::size_t t = 0; t < 500; ++t) {
        const std::size_t m = 2 + shape_rng.next_u64() % 31;
        const std::size_t n = 2 + shape_rng.next_u64() % 31;
        RngStream rng(seed, 1000 + t);
        const Matrix w = gaussian_matrix(m, n, 1.0, rng);
        const SpectralDecomposition d = svd(w);
        const double scale = std::max(1.0, max_abs(w));
        worst_recon = std::max(worst_recon, max_abs_diff(d.reconstruct(), w) / scale);
        worst_ortho = std::max(worst_ortho, orthonormality_error(d.u));
        worst_ortho = std::max(worst_ortho, orthonormality_error(d.v));
        const auto oracle = jacobi_singular_values(w);
        const std::size_t count = std::min(oracle.size(), d.sigma.size());
        for (std::size_t k = 0; k < count; ++k) {
            const double denom = std::max(1.0, oracle[k]);
            worst_sigma = std::max(worst_sigma, std::abs(d.sigma[k] - oracle[k]) / denom);
        }
    }
    add_check(r, "reconstruction_max_rel", worst_recon, 1e-10);
    add_check(r, "orthonormality_max", worst_ortho, 1e-10);
    add_check(r, "eigen_oracle_max_rel", worst_sigma, 1e-9);
    return r;
}

SuiteResult suite_init_identity(std::uint64_t seed) {
    SuiteResult r;
    double worst_lora = 0.0, worst_pissa = 0.0;
    RngStream shape_rng(seed, 2);
    for (std::size_t t = 0; t < 20; ++t) {
        const Shape s = sweep_shape(t, shape_rng);
        RngStream rng(seed, 2000 + t);
        const Matrix w0 = gaussian_matrix(s.m, s.n, 1.0, rng);
        const double scale = max_abs(w0);
        LoraAdapter lora(w0, std::min<std::size_t>(4, std::min(s.m, s.n)), 1.0, rng);
        worst_lora = std::max(worst_lora, max_abs_diff(lora.equivalent(), w0) / scale);
        PissaStyleAdapter pissa(w0, std::min<std::size_t>(4, std::min(s.m, s.n)));
        worst_pissa = std::max(worst_pissa, max_abs_diff(pissa.equivalent(), w0) / scale);
    }
    add_check(r, "lora_init_max_rel", worst_lora, 1e-12);
    add_check(r, "pissa_style_init_max_rel", worst_pissa, 1e-12);
    return r;
}

SuiteResult suite_merge_identity(std::uint64_t seed) {
    SuiteResult r;
    double worst = 0.0;
    RngStream shape_rng(seed, 3);
    for (std::size_t t = 0; t < 100; ++t) {
        const Shape s = sweep_shape(t, shape_rng);
        RngStream rng(seed, 3000 + t);
        const Matrix w0 = gaussian_matrix(s.m, s.n, 1.0, rng);
        const GseLayer layer = build_layer(w0, sweep_config(s.m, s.n, seed + t));
        Matrix merged = layer.w0_adjusted + residual_shift(layer.generalized, layer.specialized);
        worst = std::max(worst, max_abs_diff(merged, w0));
    }
    add_check(r, "merge_max_abs", worst, 1e-12);
    return r;
}

SuiteResult suite_expectation_alignment(std::uint64_t seed) {
    SuiteResult r;
    const std::size_t dim = 16;
    RngStream base_rng(seed, 4);
    const Matrix w0 = gaussian_matrix(dim, dim, 1.0, base_rng);
    GseLayer layer = build_layer(w0, sweep_config(dim, dim, seed));
    Matrix mean(dim, dim);
    const std::size_t rounds = 2000;
    for (std::size_t t = 0; t < rounds; ++t) {
        RngStream rng(seed, 4000 + t);
        layer.router.w_z = gaussian_matrix(layer.num_experts(), dim,
                                           layer.config.router_std, rng);
        const Vector x = gaussian_vector(dim, 1.0, rng);
        mean += equivalent_weight(layer, x);
    }
    mean = (1.0 / static_cast<double>(rounds)) * mean;
    const double rel = frob_norm(mean - w0) / frob_norm(w0);
    add_check(r, "expectation_rel_frob", rel, 0.05);
    return r;
}

// Tr(Sigma U^T M U) from a stored segment, left or right basis
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

SuiteResult suite_gradient_exact(std::uint64_t seed) {
    SuiteResult r;
    double worst = 0.0;
    RngStream shape_rng(seed, 5);
    for (std::size_t t = 0; t < 50; ++t) {
        const Shape s = sweep_shape(t, shape_rng);
        RngStream rng(seed, 5000 + t);
        const Matrix w0 = gaussian_matrix(s.m, s.n, 1.0, rng);
        const GseLayer layer = build_layer(w0, sweep_config(s.m, s.n, seed + t));
        for (std::size_t probe = 0; probe < 20; ++probe) {
            const Matrix g = gaussian_matrix(s.m, s.n, 1.0, rng);
            const Matrix ggt = matmul(g, g.transpose());
            const Matrix gtg = matmul(g.transpose(), g);
            const double w = 0.25 + 0.5 * rng.next_uniform();
            for (std::size_t i = 0; i < layer.num_experts(); ++i) {
                const auto& e = layer.specialized[i];
                auto [ga, gb] = expert_gradients(g, w, e);
                const double want_a =
                    w * w * e.scale * projected_trace(layer.segments[i], ggt, true);
                const double want_b =
                    w * w * e.scale * projected_trace(layer.segments[i], gtg, false);
                worst = std::max(worst, std::abs(frob_norm_sq(ga) - want_a) /
                                            std::max(1e-300, want_a));
                worst = std::max(worst, std::abs(frob_norm_sq(gb) - want_b) /
                                            std::max(1e-300, want_b));
            }
        }
    }
    add_check(r, "trace_law_max_rel", worst, 1e-10);
    return r;
}

SuiteResult suite_fd(std::uint64_t seed) {
    SuiteResult r;
    double worst_factor = 0.0, worst_router = 0.0;
    std::size_t probeable = 0;
    RngStream shape_rng(seed, 6);
    for (std::size_t t = 0; t < 50; ++t) {
        const std::size_t m = 8 + shape_rng.next_u64() % 9;
        const std::size_t n = 8 + shape_rng.next_u64() % 9;
        RngStream rng(seed, 6000 + t);
        const Matrix w0 = gaussian_matrix(m, n, 1.0, rng);
        const GseLayer layer = build_layer(w0, sweep_config(m, n, seed + t));
        const Vector x = gaussian_vector(n, 1.0, rng);
        const Vector target = gaussian_vector(m, 1.0, rng);
        const FdReport report = fd_check(layer, x, target, 1e-6);
        worst_factor = std::max(worst_factor, report.max_factor_error());
        if (report.router_probeable) {
            ++probeable;
            worst_router = std::max(worst_router, report.max_rel_router);
        }
    }
    add_check(r, "fd_factor_max_rel", worst_factor, 1e-5);
    add_check(r, "fd_router_max_rel", worst_router, 1e-5);
    add_check(r, "router_unprobeable_layers", 50.0 - static_cast<double>(probeable), 5.0);
    return r;
}

SuiteResult suite_theorem1(std::uint64_t seed) {
    SuiteResult r;
    const std::size_t dim = 16;
    const int draws = 10000;
    for (bool scaled : {true, false}) {
        const GseConfig config =
            sweep_config(dim, dim, seed, scaled ? Variant::full : Variant::no_grad_scaling);
        RngStream base_rng(seed, 7);
        const GseLayer layer = build_layer(gaussian_matrix(dim, dim, 1.0, base_rng), config);
        const std::size_t num_experts = layer.num_experts();
        const double w = 1.0 / static_cast<double>(num_experts);
        std::vector<double> mean(num_experts, 0.0), sq(num_experts, 0.0);
        RngStream rng(seed, 7000 + (scaled ? 0 : 1));
        for (int t = 0; t < draws; ++t) {
            const Matrix g = gaussian_matrix(dim, dim, 1.0, rng);
            for (std::size_t i = 0; i < num_experts; ++i) {
                auto [ga, gb] = expert_gradients(g, w, layer.specialized[i]);
                const double v = frob_norm_sq(ga);
                mean[i] += v;
                sq[i] += v * v;
            }
        }
        double worst_sigmas = 0.0;
        std::vector<double> se(num_experts);
        for (std::size_t i = 0; i < num_experts; ++i) {
            mean[i] /= draws;
            const double var = sq[i] / draws - mean[i] * mean[i];
            se[i] = std::sqrt(std::max(0.0, var) / draws);
        }
        for (std::size_t i = 1; i < num_experts; ++i) {
            const double predicted =
                scaled ? mean[0]
                       : mean[0] * layer.specialized[i].trace_sigma /
                             layer.specialized[0].trace_sigma;
            const double combined = std::sqrt(se[i] * se[i] + se[0] * se[0]);
            worst_sigmas = std::max(worst_sigmas, std::abs(mean[i] - predicted) /
                                                      std::max(combined, 1e-300));
        }
        add_check(r, scaled ? "equalized_max_sigmas" : "trace_ratio_max_sigmas",
                  worst_sigmas, 3.0);
    }
    return r;
}

SuiteResult suite_balance_loss(std::uint64_t seed) {
    SuiteResult r;
    (void)seed;
    double worst_uniform = 0.0;
    for (std::size_t num_experts : {2u, 4u, 7u}) {
        for (std::size_t k = 1; k <= num_experts; ++k) {
            RoutingBatchStats stats;
            stats.tokens = num_experts;
            stats.k = k;
            stats.selection_counts.assign(num_experts, k);
            stats.prob_sums.assign(num_experts, 1.0);
            worst_uniform = std::max(
                worst_uniform,
                std::abs(balance_loss(stats, num_experts) - static_cast<double>(k)));
        }
    }
    // E = 7 makes k/E inexact in binary, so "exact" means round-off only
    add_check(r, "uniform_equals_k", worst_uniform, 1e-14);

    RoutingBatchStats collapse;
    collapse.tokens = 10;
    collapse.k = 2;
    collapse.selection_counts = {10, 10, 0, 0};
    collapse.prob_sums = {5.0, 5.0, 0.0, 0.0};
    add_check(r, "collapse_anchor", std::abs(balance_loss(collapse, 4) - 4.0), 0.0);

    RoutingBatchStats token;
    token.tokens = 1;
    token.k = 2;
    token.selection_counts = {1, 1, 0, 0};
    token.prob_sums = {0.7, 0.2, 0.05, 0.05};
    add_check(r, "single_token_anchor", std::abs(balance_loss(token, 4) - 3.6), 1e-15);
    return r;
}

}  // namespace

std::string SuiteResult::summary() const {
    std::ostringstream out;
    for (const auto& c : checks)
        out << (c.passed ? "pass " : "FAIL ") << suite << '.' << c.name << " measured "
            << fmt17(c.measured) << " threshold " << fmt17(c.threshold) << '\n';
    out << (passed ? "PASS " : "FAIL ") << suite << " (seed " << seed << ")\n";
    return out.str();
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> kNames{
        "svd",           "init_identity", "merge_identity", "expectation_alignment",
        "gradient_exact", "fd",           "theorem1",       "balance_loss"};
    return kNames;
}

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
    SuiteResult r;
    if (name == "svd")
        r = suite_svd(seed);
    else if (name == "init_identity")
        r = suite_init_identity(seed);
    else if (name == "merge_identity")
        r = suite_merge_identity(seed);
    else if (name == "expectation_alignment")
        r = suite_expectation_alignment(seed);
    else if (name == "gradient_exact")
        r = suite_gradient_exact(seed);
    else if (name == "fd")
        r = suite_fd(seed);
    else if (name == "theorem1")
        r = suite_theorem1(seed);
    else if (name == "balance_loss")
        r = suite_balance_loss(seed);
    else
        throw std::invalid_argument("run_suite: unknown suite '" + name + "'");
    r.suite = name;
    r.seed = seed;
    r.passed = !r.checks.empty() &&
               std::all_of(r.checks.begin(), r.checks.end(),
                           [](const CheckLine& c) { return c.passed; });
    return r;
}

}  // namespace gse

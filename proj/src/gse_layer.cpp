#include "gse/gse_layer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gse {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_svd_init: return "no_svd_init";
        case Variant::no_generalized: return "no_generalized";
        case Variant::no_specialized: return "no_specialized";
        case Variant::no_grad_scaling: return "no_grad_scaling";
    }
    return "full";
}

Variant variant_from_string(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "no_svd_init") return Variant::no_svd_init;
    if (s == "no_generalized") return Variant::no_generalized;
    if (s == "no_specialized") return Variant::no_specialized;
    if (s == "no_grad_scaling") return Variant::no_grad_scaling;
    throw std::invalid_argument("unknown variant: " + s);
}

void GseConfig::validate() const {
    if (num_experts < 1) throw std::invalid_argument("config: num_experts must be >= 1");
    if (top_k < 1 || top_k > num_experts)
        throw std::invalid_argument("config: require 1 <= top_k <= num_experts");
    if (d < 1) throw std::invalid_argument("config: d must be >= 1");
    if (alpha < 0.0) throw std::invalid_argument("config: alpha must be >= 0");
    if (!(s_g > 0.0)) throw std::invalid_argument("config: s_g must be > 0");
    if (!(s_base > 0.0)) throw std::invalid_argument("config: s_base must be > 0");
    if (!(router_std > 0.0)) throw std::invalid_argument("config: router_std must be > 0");
}

double SpectralSegment::trace_sigma() const {
    return std::accumulate(sigma.begin(), sigma.end(), 0.0);
}

Matrix SpectralSegment::assemble() const {
    Matrix w(u.rows(), v.rows());
    for (std::size_t k = 0; k < sigma.size(); ++k)
        for (std::size_t i = 0; i < u.rows(); ++i) {
            const double us = u(i, k) * sigma[k];
            for (std::size_t j = 0; j < v.rows(); ++j) w(i, j) += us * v(j, k);
        }
    return w;
}

Matrix GeneralizedExpert::effective_weight() const { return scale * matmul(b, a); }
Matrix SpecializedExpert::effective_weight() const { return scale * matmul(b, a); }

namespace {

SpectralSegment slice(const SpectralDecomposition& decomp, std::size_t lo, std::size_t hi) {
    const std::size_t m = decomp.u.rows();
    const std::size_t n = decomp.v.rows();
    SpectralSegment seg;
    seg.index_lo = lo;
    seg.index_hi = hi;
    seg.u = Matrix(m, hi - lo);
    seg.v = Matrix(n, hi - lo);
    seg.sigma.assign(decomp.sigma.begin() + static_cast<std::ptrdiff_t>(lo),
                     decomp.sigma.begin() + static_cast<std::ptrdiff_t>(hi));
    for (std::size_t k = lo; k < hi; ++k) {
        for (std::size_t i = 0; i < m; ++i) seg.u(i, k - lo) = decomp.u(i, k);
        for (std::size_t i = 0; i < n; ++i) seg.v(i, k - lo) = decomp.v(i, k);
    }
    return seg;
}

/// sqrt(1/s) * U * Sigma^{1/2} and sqrt(1/s) * Sigma^{1/2} * V^T.
std::pair<Matrix, Matrix> spectral_factors(const SpectralSegment& seg, double s) {
    const double root = std::sqrt(1.0 / s);
    Matrix b(seg.u.rows(), seg.width());
    Matrix a(seg.width(), seg.v.rows());
    for (std::size_t k = 0; k < seg.width(); ++k) {
        const double sr = std::sqrt(seg.sigma[k]);
        for (std::size_t i = 0; i < seg.u.rows(); ++i) b(i, k) = root * seg.u(i, k) * sr;
        for (std::size_t j = 0; j < seg.v.rows(); ++j) a(k, j) = root * sr * seg.v(j, k);
    }
    return {std::move(b), std::move(a)};
}

std::vector<double> softmax(const std::vector<double>& z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - zmax);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

}  // namespace

std::pair<SpectralSegment, std::vector<SpectralSegment>> partition_spectrum(
    const SpectralDecomposition& decomp, std::size_t r_g, std::size_t d,
    std::size_t num_experts) {
    const std::size_t needed = r_g + d * num_experts;
    if (needed > decomp.rank())
        throw std::invalid_argument("partition_spectrum: needs rank " + std::to_string(needed) +
                                    ", decomposition has " + std::to_string(decomp.rank()));
    SpectralSegment gen = slice(decomp, 0, r_g);
    std::vector<SpectralSegment> specs;
    specs.reserve(num_experts);
    for (std::size_t i = 0; i < num_experts; ++i)
        specs.push_back(slice(decomp, r_g + i * d, r_g + (i + 1) * d));
    return {std::move(gen), std::move(specs)};
}

std::vector<double> scaling_factors(const std::vector<SpectralSegment>& specs, double s_base,
                                    Variant variant) {
    if (variant == Variant::no_grad_scaling)
        return std::vector<double>(specs.size(), s_base);
    double mean_trace = 0.0;
    for (const auto& seg : specs) {
        const double t = seg.trace_sigma();
        if (!(t > 0.0))
            throw std::invalid_argument(
                "scaling_factors: zero-trace spectral segment (degenerate spectrum)");
        mean_trace += t;
    }
    mean_trace /= static_cast<double>(specs.size());
    std::vector<double> s(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
        s[i] = s_base * mean_trace / specs[i].trace_sigma();
    return s;
}

GeneralizedExpert init_generalized(const SpectralSegment& seg, double s_g) {
    if (!(s_g > 0.0)) throw std::invalid_argument("init_generalized: s_g must be > 0");
    GeneralizedExpert e;
    auto [b, a] = spectral_factors(seg, s_g);
    e.b = std::move(b);
    e.a = std::move(a);
    e.scale = s_g;
    return e;
}

SpecializedExpert init_specialized(const SpectralSegment& seg, double s_s, Variant variant,
                                   RngStream& rng) {
    if (!(s_s > 0.0)) throw std::invalid_argument("init_specialized: s_s must be > 0");
    SpecializedExpert e;
    e.scale = s_s;
    e.trace_sigma = seg.trace_sigma();
    if (variant == Variant::no_svd_init) {
        e.b = gaussian_matrix(seg.u.rows(), seg.width(), 0.02, rng);
        e.a = Matrix(seg.width(), seg.v.rows());  // zero, so the initial contribution vanishes
    } else {
        auto [b, a] = spectral_factors(seg, s_s);
        e.b = std::move(b);
        e.a = std::move(a);
    }
    return e;
}

Matrix residual_shift(const GeneralizedExpert& gen, const std::vector<SpecializedExpert>& specs) {
    Matrix res = gen.effective_weight();
    const double inv_e = 1.0 / static_cast<double>(specs.size());
    for (const auto& e : specs) res += inv_e * e.effective_weight();
    return res;
}

GseLayer build_layer(const Matrix& w0, const GseConfig& config) {
    config.validate();
    ensure_finite(w0, "build_layer");

    // no_generalized folds the generalized rank into one extra routed expert
    std::size_t r_g = config.r_g;
    std::size_t num_experts = config.num_experts;
    if (config.variant == Variant::no_generalized) {
        r_g = 0;
        num_experts = config.num_experts + 1;
    }

    GseLayer layer;
    layer.config = config;
    layer.w0_original = w0;

    const SpectralDecomposition decomp = svd(w0);
    auto [gen_seg, spec_segs] = partition_spectrum(decomp, r_g, config.d, num_experts);
    const std::vector<double> scales = scaling_factors(spec_segs, config.s_base, config.variant);

    RngStream rng(config.seed, 0);
    layer.generalized = init_generalized(gen_seg, config.s_g);
    layer.specialized.reserve(num_experts);
    for (std::size_t i = 0; i < num_experts; ++i)
        layer.specialized.push_back(
            init_specialized(spec_segs[i], scales[i], config.variant, rng));

    layer.w0_adjusted = w0 - residual_shift(layer.generalized, layer.specialized);

    if (config.variant == Variant::no_specialized) {
        layer.router.w_z = Matrix(0, w0.cols());  // always-on uniform mixing, no router
    } else {
        RngStream router_rng = rng.substream(1);
        layer.router.w_z =
            gaussian_matrix(num_experts, w0.cols(), config.router_std, router_rng);
    }

    layer.generalized_segment = std::move(gen_seg);
    layer.segments = std::move(spec_segs);
    return layer;
}

RoutingResult route(const Router& router, const Vector& x, std::size_t k) {
    const std::size_t num_experts = router.w_z.rows();
    if (k < 1 || k > num_experts) throw std::invalid_argument("route: require 1 <= k <= E");
    RoutingResult r;
    r.logits = matvec(router.w_z, x);
    r.full_probs = softmax(r.logits);

    // top-k by logit, ties toward the lowest index
    std::vector<std::size_t> order(num_experts);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.logits[a] > r.logits[b]; });
    r.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(r.selected.begin(), r.selected.end());

    std::vector<double> zsel(k);
    for (std::size_t i = 0; i < k; ++i) zsel[i] = r.logits[r.selected[i]];
    const std::vector<double> wsel = softmax(zsel);
    r.weights.assign(num_experts, 0.0);
    for (std::size_t i = 0; i < k; ++i) r.weights[r.selected[i]] = wsel[i];
    return r;
}

namespace {

RoutingResult uniform_routing(std::size_t num_experts) {
    RoutingResult r;
    r.logits.assign(num_experts, 0.0);
    r.full_probs.assign(num_experts, 1.0 / static_cast<double>(num_experts));
    r.selected.resize(num_experts);
    std::iota(r.selected.begin(), r.selected.end(), 0);
    r.weights.assign(num_experts, 1.0 / static_cast<double>(num_experts));
    return r;
}

}  // namespace

std::pair<Vector, RoutingResult> forward(const GseLayer& layer, const Vector& x) {
    if (x.size() != layer.in_dim()) throw std::invalid_argument("forward: input length mismatch");
    RoutingResult routing = layer.routed() ? route(layer.router, x, layer.config.top_k)
                                           : uniform_routing(layer.num_experts());
    Vector y = matvec(layer.w0_adjusted, x);
    if (layer.generalized.b.cols() > 0) {
        const Vector ax = matvec(layer.generalized.a, x);
        const Vector bax = matvec(layer.generalized.b, ax);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.generalized.scale * bax[i];
    }
    for (std::size_t idx : routing.selected) {
        const auto& e = layer.specialized[idx];
        const double w = routing.weights[idx];
        const Vector ax = matvec(e.a, x);
        const Vector bax = matvec(e.b, ax);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += w * e.scale * bax[i];
    }
    return {std::move(y), std::move(routing)};
}

Matrix equivalent_weight_from_routing(const GseLayer& layer, const RoutingResult& routing) {
    Matrix w = layer.w0_adjusted + layer.generalized.effective_weight();
    for (std::size_t idx : routing.selected)
        w += routing.weights[idx] * layer.specialized[idx].effective_weight();
    return w;
}

Matrix equivalent_weight(const GseLayer& layer, const Vector& x) {
    const RoutingResult routing = layer.routed()
                                      ? route(layer.router, x, layer.config.top_k)
                                      : uniform_routing(layer.num_experts());
    return equivalent_weight_from_routing(layer, routing);
}

}  // namespace gse

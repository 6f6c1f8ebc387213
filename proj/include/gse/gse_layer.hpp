#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gse/matrix.hpp"
#include "gse/rng.hpp"
#include "gse/svd.hpp"

namespace gse {

/// Ablation switches. `full` is the complete method; the rest disable one
/// ingredient each:
///  - no_svd_init: specialized factors start Gaussian/zero instead of spectral
///  - no_generalized: r_g = 0 and one extra specialized expert
///  - no_specialized: all experts always on with fixed uniform 1/E weights, no router
///  - no_grad_scaling: constant s_s^i = s_base instead of trace-inverse scaling
enum class Variant { full, no_svd_init, no_generalized, no_specialized, no_grad_scaling };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct GseConfig {
    std::size_t r_g = 2;          ///< rank of the generalized expert
    std::size_t d = 2;            ///< rank per specialized expert
    std::size_t num_experts = 7;  ///< E
    std::size_t top_k = 2;        ///< k
    double s_g = 2.0;             ///< generalized scaling factor
    double s_base = 2.0;          ///< base specialized scaling
    double alpha = 0.01;          ///< auxiliary-loss weight
    double router_std = 0.02;     ///< router init std
    std::uint64_t seed = 0;
    Variant variant = Variant::full;

    void validate() const;  ///< throws std::invalid_argument on violated invariants
};

/// Contiguous slice of the descending spectrum; index_lo/index_hi are
/// zero-based [lo, hi) positions into the global singular-value ordering.
struct SpectralSegment {
    Matrix u;                   // m x width
    std::vector<double> sigma;  // length width, descending
    Matrix v;                   // n x width
    std::size_t index_lo = 0;
    std::size_t index_hi = 0;

    std::size_t width() const { return sigma.size(); }
    double trace_sigma() const;
    /// u * diag(sigma) * v^T of just this slice.
    Matrix assemble() const;
};

struct GeneralizedExpert {
    Matrix b;  // m x r_g
    Matrix a;  // r_g x n
    double scale = 1.0;

    Matrix effective_weight() const;  ///< scale * b * a
};

struct SpecializedExpert {
    Matrix b;  // m x d
    Matrix a;  // d x n
    double scale = 1.0;
    double trace_sigma = 0.0;  // Tr(Sigma_i) recorded at init

    Matrix effective_weight() const;  ///< scale * b * a
};

struct Router {
    Matrix w_z;  // E x n
};

struct RoutingResult {
    std::vector<double> logits;           // length E
    std::vector<double> full_probs;       // softmax over all logits
    std::vector<std::size_t> selected;    // sorted top-k indices
    std::vector<double> weights;          // renormalized over selected, 0 elsewhere
};

struct GseLayer {
    Matrix w0_adjusted;
    Matrix w0_original;
    GeneralizedExpert generalized;
    std::vector<SpecializedExpert> specialized;
    Router router;
    GseConfig config;

    std::vector<SpectralSegment> segments;  // per-expert spectral slices, kept for diagnostics
    SpectralSegment generalized_segment;

    std::size_t out_dim() const { return w0_adjusted.rows(); }
    std::size_t in_dim() const { return w0_adjusted.cols(); }
    /// E after variant adjustment (no_generalized adds one expert).
    std::size_t num_experts() const { return specialized.size(); }
    bool routed() const { return config.variant != Variant::no_specialized; }
};

std::pair<SpectralSegment, std::vector<SpectralSegment>> partition_spectrum(
    const SpectralDecomposition& decomp, std::size_t r_g, std::size_t d, std::size_t num_experts);

/// Trace-inverse rule s_s^i = s_base * C / Tr(Sigma_i) with C the mean trace.
/// Under Variant::no_grad_scaling every factor is s_base.
std::vector<double> scaling_factors(const std::vector<SpectralSegment>& specs, double s_base,
                                    Variant variant = Variant::full);

GeneralizedExpert init_generalized(const SpectralSegment& seg, double s_g);

SpecializedExpert init_specialized(const SpectralSegment& seg, double s_s, Variant variant,
                                   RngStream& rng);

/// W_res = s_g B_g A_g + (1/E) sum_i s_s^i B_s^i A_s^i.
Matrix residual_shift(const GeneralizedExpert& gen, const std::vector<SpecializedExpert>& specs);

GseLayer build_layer(const Matrix& w0, const GseConfig& config);

RoutingResult route(const Router& router, const Vector& x, std::size_t k);

/// Factored forward pass: never materializes m x n expert products.
std::pair<Vector, RoutingResult> forward(const GseLayer& layer, const Vector& x);

/// Materialized input-dependent equivalent weight; diagnostics/tests only.
Matrix equivalent_weight(const GseLayer& layer, const Vector& x);

Matrix equivalent_weight_from_routing(const GseLayer& layer, const RoutingResult& routing);

}  // namespace gse

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gse/gse_layer.hpp"
#include "gse/matrix.hpp"

namespace gse {

/// All loss gradients for one batch through a GSE layer.
struct GradientBundle {
    Matrix g_upstream;               // m x n, dL/dW_eq summed over the batch
    std::vector<Matrix> g_a_spec;    // per specialized expert
    std::vector<Matrix> g_b_spec;
    Matrix g_a_gen;
    Matrix g_b_gen;
    Matrix g_router;                 // E x n

    static GradientBundle zeros_like(const GseLayer& layer);
};

/// dL/dW_eq for one sample: the outer product dL_dy * x^T.
Matrix upstream_gradient(const Vector& dl_dy, const Vector& x);

/// Batch version: sum of per-sample outer products.
Matrix upstream_gradient(std::span<const Vector> dl_dys, std::span<const Vector> xs);

/// g_A = w s B^T g, g_B = w s g A^T. The generalized expert uses the same
/// formulas with w = 1 and its own scale.
std::pair<Matrix, Matrix> expert_gradients(const Matrix& g, double w,
                                           const SpecializedExpert& expert);
std::pair<Matrix, Matrix> expert_gradients(const Matrix& g, double w, double scale,
                                           const Matrix& b, const Matrix& a);

/// Task-loss gradient w.r.t. the router weights, flowing only through the
/// renormalized softmax over the selected set (the discrete top-k selection
/// receives no gradient). Rows for unselected experts are zero.
Matrix router_gradients(const Matrix& g, const Vector& x, const RoutingResult& routing,
                        const std::vector<SpecializedExpert>& specs);

/// Accumulate one sample's gradients into `bundle` in factored form
/// (never materializing the m x n upstream gradient).
void accumulate_sample_gradients(const GseLayer& layer, const Vector& x, const Vector& dl_dy,
                                 const RoutingResult& routing, GradientBundle& bundle,
                                 bool with_upstream = false);

/// Finite-difference verification report for one (layer, x, target) triple
/// under the smooth loss 0.5 * ||forward(x) - target||^2.
struct FdReport {
    double max_rel_a_spec = 0.0;
    double max_rel_b_spec = 0.0;
    double max_rel_a_gen = 0.0;
    double max_rel_b_gen = 0.0;
    double max_rel_router = 0.0;
    bool router_probeable = true;  ///< false if every probed entry flipped the selection

    double max_factor_error() const {
        return std::max(std::max(max_rel_a_spec, max_rel_b_spec),
                        std::max(max_rel_a_gen, max_rel_b_gen));
    }
};

FdReport fd_check(const GseLayer& layer, const Vector& x, const Vector& target, double eps);

/// Minimal optimizer over a flat parameter list with decoupled learning rates.
enum class OptimKind { sgd, adam };

struct ParamGrad {
    Matrix* param = nullptr;
    const Matrix* grad = nullptr;
    double lr = 0.0;
};

struct OptimConfig {
    OptimKind kind = OptimKind::sgd;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class OptimState {
public:
    explicit OptimState(OptimConfig config = {}) : config_(config) {}

    /// One update step. The parameter list must keep a stable order across calls.
    void apply_step(std::span<ParamGrad> params);

    std::size_t step() const { return step_; }
    const OptimConfig& config() const { return config_; }

private:
    OptimConfig config_;
    std::size_t step_ = 0;
    std::vector<Matrix> m_;  // first moments (adam)
    std::vector<Matrix> v_;  // second moments (adam)
};

}  // namespace gse

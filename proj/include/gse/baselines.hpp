#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gse/autograd.hpp"
#include "gse/gse_layer.hpp"
#include "gse/losses.hpp"
#include "gse/matrix.hpp"
#include "gse/rng.hpp"

namespace gse {

enum class AdapterKind { gse, lora, pissa_style, full_ft };

std::string to_string(AdapterKind k);
AdapterKind adapter_kind_from_string(const std::string& s);

/// Common trainable-adapter surface for the training harness. Adapters are
/// immutable outside of zero_grad/backward/params (single-writer contract).
class Adapter {
public:
    virtual ~Adapter() = default;

    virtual AdapterKind kind() const = 0;
    virtual std::size_t out_dim() const = 0;
    virtual std::size_t in_dim() const = 0;
    virtual std::size_t trainable_count() const = 0;

    /// Forward one sample. Routed adapters record the routing for the batch's
    /// statistics; call begin_batch() first and end_batch() after backward.
    virtual Vector forward(const Vector& x) = 0;

    virtual void begin_batch() {}
    virtual void zero_grad() = 0;

    /// Accumulate gradients for one sample already passed through forward in
    /// the current batch. `dl_dy` is the task-loss gradient w.r.t. the output.
    virtual void backward(const Vector& x, const Vector& dl_dy) = 0;

    /// Finish the batch: routed adapters add the auxiliary-loss router
    /// gradient scaled by alpha. Returns the batch's balance loss (0 when the
    /// adapter has no router).
    virtual double end_batch(double alpha) {
        (void)alpha;
        return 0.0;
    }

    /// Per-expert selection frequencies of the last finished batch; empty for
    /// unrouted adapters.
    virtual std::vector<double> expert_frequencies() const { return {}; }

    /// Stable parameter/gradient list for the optimizer.
    virtual std::vector<ParamGrad> params(double lr) = 0;
};

/// GSE layer behind the Adapter surface.
class GseAdapter final : public Adapter {
public:
    GseAdapter(const Matrix& w0, const GseConfig& config);
    explicit GseAdapter(GseLayer layer);

    AdapterKind kind() const override { return AdapterKind::gse; }
    std::size_t out_dim() const override { return layer_.out_dim(); }
    std::size_t in_dim() const override { return layer_.in_dim(); }
    std::size_t trainable_count() const override;

    Vector forward(const Vector& x) override;
    void begin_batch() override;
    void zero_grad() override;
    void backward(const Vector& x, const Vector& dl_dy) override;
    double end_batch(double alpha) override;
    std::vector<double> expert_frequencies() const override;
    std::vector<ParamGrad> params(double lr) override;

    const GseLayer& layer() const { return layer_; }
    GseLayer& layer() { return layer_; }

private:
    GseLayer layer_;
    GradientBundle grads_;
    std::vector<Vector> batch_inputs_;
    std::vector<RoutingResult> batch_routings_;
    RoutingBatchStats last_stats_;
};

/// Zero-init low-rank adapter: W_0 x + scale * B (A x), B Gaussian, A zero.
class LoraAdapter final : public Adapter {
public:
    LoraAdapter(const Matrix& w0, std::size_t rank, double scale, RngStream& rng);
    /// Rehydrate from snapshot parts.
    LoraAdapter(Matrix w0, Matrix b, Matrix a, double scale);

    AdapterKind kind() const override { return AdapterKind::lora; }
    std::size_t out_dim() const override { return w0_.rows(); }
    std::size_t in_dim() const override { return w0_.cols(); }
    std::size_t trainable_count() const override { return a_.size() + b_.size(); }

    Vector forward(const Vector& x) override;
    void zero_grad() override;
    void backward(const Vector& x, const Vector& dl_dy) override;
    std::vector<ParamGrad> params(double lr) override;

    const Matrix& backbone() const { return w0_; }
    const Matrix& factor_a() const { return a_; }
    const Matrix& factor_b() const { return b_; }
    double scale() const { return scale_; }
    Matrix equivalent() const;  ///< W_0 + scale * B * A

private:
    Matrix w0_;
    Matrix b_;  // m x rank
    Matrix a_;  // rank x n
    double scale_;
    Matrix g_a_, g_b_;
};

/// Single adapter from the top-rank singular components; the backbone is
/// replaced by the residual W_0 - B A so the equivalent weight starts at W_0.
class PissaStyleAdapter final : public Adapter {
public:
    PissaStyleAdapter(const Matrix& w0, std::size_t rank);
    /// Rehydrate from snapshot parts.
    PissaStyleAdapter(Matrix residual, Matrix b, Matrix a);

    AdapterKind kind() const override { return AdapterKind::pissa_style; }
    std::size_t out_dim() const override { return residual_.rows(); }
    std::size_t in_dim() const override { return residual_.cols(); }
    std::size_t trainable_count() const override { return a_.size() + b_.size(); }

    Vector forward(const Vector& x) override;
    void zero_grad() override;
    void backward(const Vector& x, const Vector& dl_dy) override;
    std::vector<ParamGrad> params(double lr) override;

    const Matrix& residual() const { return residual_; }
    const Matrix& factor_a() const { return a_; }
    const Matrix& factor_b() const { return b_; }
    Matrix equivalent() const;  ///< residual + B * A

private:
    Matrix residual_;
    Matrix b_;  // m x rank
    Matrix a_;  // rank x n
    Matrix g_a_, g_b_;
};

/// Trains the whole weight; out-of-budget by definition, kept as the anchor.
class FullFtAdapter final : public Adapter {
public:
    explicit FullFtAdapter(const Matrix& w0) : w_(w0), g_(w0.rows(), w0.cols()) {}

    AdapterKind kind() const override { return AdapterKind::full_ft; }
    std::size_t out_dim() const override { return w_.rows(); }
    std::size_t in_dim() const override { return w_.cols(); }
    std::size_t trainable_count() const override { return w_.size(); }

    Vector forward(const Vector& x) override { return matvec(w_, x); }
    void zero_grad() override { g_ = Matrix(w_.rows(), w_.cols()); }
    void backward(const Vector& x, const Vector& dl_dy) override;
    std::vector<ParamGrad> params(double lr) override;

    const Matrix& weight() const { return w_; }

private:
    Matrix w_;
    Matrix g_;
};

std::size_t gse_trainable_count(std::size_t m, std::size_t n, const GseConfig& config);

struct AdapterSpec {
    AdapterKind kind = AdapterKind::gse;
    std::size_t rank = 0;            ///< low-rank budget (unused for gse/full_ft)
    std::size_t param_count = 0;     ///< exact trainable count
    double budget_deviation = 0.0;   ///< relative deviation from the GSE count
    bool within_budget = true;       ///< |deviation| <= 3% (full_ft is flagged out)
};

/// Rank choices for each baseline so trainable counts match the GSE adapter
/// within 3%. full_ft is included but flagged out-of-budget.
std::vector<AdapterSpec> match_budget(std::size_t m, std::size_t n, const GseConfig& config);

std::unique_ptr<Adapter> make_adapter(const AdapterSpec& spec, const Matrix& w0,
                                      const GseConfig& gse_config, double lora_scale,
                                      RngStream& rng);

}  // namespace gse

#include "gse/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace gse {

std::string to_string(AdapterKind k) {
    switch (k) {
        case AdapterKind::gse: return "gse";
        case AdapterKind::lora: return "lora";
        case AdapterKind::pissa_style: return "pissa_style";
        case AdapterKind::full_ft: return "full_ft";
    }
    return "gse";
}

AdapterKind adapter_kind_from_string(const std::string& s) {
    if (s == "gse") return AdapterKind::gse;
    if (s == "lora") return AdapterKind::lora;
    if (s == "pissa_style") return AdapterKind::pissa_style;
    if (s == "full_ft") return AdapterKind::full_ft;
    throw std::invalid_argument("unknown adapter kind: " + s);
}

// ---------------------------------------------------------------------------
// GseAdapter

GseAdapter::GseAdapter(const Matrix& w0, const GseConfig& config)
    : GseAdapter(build_layer(w0, config)) {}

GseAdapter::GseAdapter(GseLayer layer)
    : layer_(std::move(layer)), grads_(GradientBundle::zeros_like(layer_)) {}

std::size_t GseAdapter::trainable_count() const {
    std::size_t count = layer_.generalized.a.size() + layer_.generalized.b.size();
    for (const auto& e : layer_.specialized) count += e.a.size() + e.b.size();
    count += layer_.router.w_z.size();
    return count;
}

Vector GseAdapter::forward(const Vector& x) {
    auto [y, routing] = gse::forward(layer_, x);
    batch_inputs_.push_back(x);
    batch_routings_.push_back(std::move(routing));
    return y;
}

void GseAdapter::begin_batch() {
    batch_inputs_.clear();
    batch_routings_.clear();
}

void GseAdapter::zero_grad() { grads_ = GradientBundle::zeros_like(layer_); }

void GseAdapter::backward(const Vector& x, const Vector& dl_dy) {
    // forward() recorded this batch's routings in call order
    for (std::size_t t = batch_routings_.size(); t-- > 0;) {
        if (batch_inputs_[t] == x) {
            accumulate_sample_gradients(layer_, x, dl_dy, batch_routings_[t], grads_);
            return;
        }
    }
    throw std::invalid_argument("GseAdapter::backward: sample not seen in this batch");
}

double GseAdapter::end_batch(double alpha) {
    if (!layer_.routed() || batch_routings_.empty()) return 0.0;
    last_stats_ = accumulate_stats(batch_routings_);
    const double bal = balance_loss(last_stats_, layer_.num_experts());
    if (alpha > 0.0) {
        for (std::size_t t = 0; t < batch_routings_.size(); ++t) {
            const Vector dz = balance_logit_gradient(batch_routings_[t].full_probs, last_stats_);
            const Vector& x = batch_inputs_[t];
            for (std::size_t i = 0; i < dz.size(); ++i) {
                if (dz[i] == 0.0) continue;
                for (std::size_t j = 0; j < x.size(); ++j)
                    grads_.g_router(i, j) += alpha * dz[i] * x[j];
            }
        }
    }
    return bal;
}

std::vector<double> GseAdapter::expert_frequencies() const {
    if (last_stats_.tokens == 0) return {};
    std::vector<double> f(last_stats_.selection_counts.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = last_stats_.selection_frequency(i);
    return f;
}

std::vector<ParamGrad> GseAdapter::params(double lr) {
    std::vector<ParamGrad> p;
    for (std::size_t i = 0; i < layer_.specialized.size(); ++i) {
        p.push_back({&layer_.specialized[i].a, &grads_.g_a_spec[i], lr});
        p.push_back({&layer_.specialized[i].b, &grads_.g_b_spec[i], lr});
    }
    p.push_back({&layer_.generalized.a, &grads_.g_a_gen, lr});
    p.push_back({&layer_.generalized.b, &grads_.g_b_gen, lr});
    if (layer_.routed()) p.push_back({&layer_.router.w_z, &grads_.g_router, lr});
    return p;
}

// ---------------------------------------------------------------------------
// LoraAdapter

LoraAdapter::LoraAdapter(const Matrix& w0, std::size_t rank, double scale, RngStream& rng)
    : w0_(w0), scale_(scale) {
    if (rank > std::min(w0.rows(), w0.cols()))
        throw std::invalid_argument("LoraAdapter: rank exceeds min(m, n)");
    b_ = gaussian_matrix(w0.rows(), rank, 0.02, rng);
    a_ = Matrix(rank, w0.cols());
    zero_grad();
}

LoraAdapter::LoraAdapter(Matrix w0, Matrix b, Matrix a, double scale)
    : w0_(std::move(w0)), b_(std::move(b)), a_(std::move(a)), scale_(scale) {
    if (b_.rows() != w0_.rows() || a_.cols() != w0_.cols() || b_.cols() != a_.rows())
        throw std::invalid_argument("LoraAdapter: inconsistent factor shapes");
    zero_grad();
}

Vector LoraAdapter::forward(const Vector& x) {
    Vector y = matvec(w0_, x);
    const Vector ax = matvec(a_, x);
    const Vector bax = matvec(b_, ax);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale_ * bax[i];
    return y;
}

void LoraAdapter::zero_grad() {
    g_a_ = Matrix(a_.rows(), a_.cols());
    g_b_ = Matrix(b_.rows(), b_.cols());
}

void LoraAdapter::backward(const Vector& x, const Vector& dl_dy) {
    const Vector bt_dl = matvec_transposed(b_, dl_dy);
    const Vector ax = matvec(a_, x);
    for (std::size_t k = 0; k < bt_dl.size(); ++k)
        for (std::size_t j = 0; j < x.size(); ++j) g_a_(k, j) += scale_ * bt_dl[k] * x[j];
    for (std::size_t i = 0; i < dl_dy.size(); ++i)
        for (std::size_t k = 0; k < ax.size(); ++k) g_b_(i, k) += scale_ * dl_dy[i] * ax[k];
}

std::vector<ParamGrad> LoraAdapter::params(double lr) {
    return {{&a_, &g_a_, lr}, {&b_, &g_b_, lr}};
}

Matrix LoraAdapter::equivalent() const { return w0_ + scale_ * matmul(b_, a_); }

// ---------------------------------------------------------------------------
// PissaStyleAdapter

PissaStyleAdapter::PissaStyleAdapter(const Matrix& w0, std::size_t rank) {
    if (rank > std::min(w0.rows(), w0.cols()))
        throw std::invalid_argument("PissaStyleAdapter: rank exceeds min(m, n)");
    const SpectralDecomposition decomp = svd(w0);
    b_ = Matrix(w0.rows(), rank);
    a_ = Matrix(rank, w0.cols());
    for (std::size_t k = 0; k < rank; ++k) {
        const double sr = std::sqrt(decomp.sigma[k]);
        for (std::size_t i = 0; i < w0.rows(); ++i) b_(i, k) = decomp.u(i, k) * sr;
        for (std::size_t j = 0; j < w0.cols(); ++j) a_(k, j) = sr * decomp.v(j, k);
    }
    residual_ = w0 - matmul(b_, a_);
    zero_grad();
}

PissaStyleAdapter::PissaStyleAdapter(Matrix residual, Matrix b, Matrix a)
    : residual_(std::move(residual)), b_(std::move(b)), a_(std::move(a)) {
    if (b_.rows() != residual_.rows() || a_.cols() != residual_.cols() ||
        b_.cols() != a_.rows())
        throw std::invalid_argument("PissaStyleAdapter: inconsistent factor shapes");
    zero_grad();
}

Vector PissaStyleAdapter::forward(const Vector& x) {
    Vector y = matvec(residual_, x);
    const Vector bax = matvec(b_, matvec(a_, x));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bax[i];
    return y;
}

void PissaStyleAdapter::zero_grad() {
    g_a_ = Matrix(a_.rows(), a_.cols());
    g_b_ = Matrix(b_.rows(), b_.cols());
}

void PissaStyleAdapter::backward(const Vector& x, const Vector& dl_dy) {
    const Vector bt_dl = matvec_transposed(b_, dl_dy);
    const Vector ax = matvec(a_, x);
    for (std::size_t k = 0; k < bt_dl.size(); ++k)
        for (std::size_t j = 0; j < x.size(); ++j) g_a_(k, j) += bt_dl[k] * x[j];
    for (std::size_t i = 0; i < dl_dy.size(); ++i)
        for (std::size_t k = 0; k < ax.size(); ++k) g_b_(i, k) += dl_dy[i] * ax[k];
}

std::vector<ParamGrad> PissaStyleAdapter::params(double lr) {
    return {{&a_, &g_a_, lr}, {&b_, &g_b_, lr}};
}

Matrix PissaStyleAdapter::equivalent() const { return residual_ + matmul(b_, a_); }

// ---------------------------------------------------------------------------
// FullFtAdapter

void FullFtAdapter::backward(const Vector& x, const Vector& dl_dy) {
    for (std::size_t i = 0; i < dl_dy.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) g_(i, j) += dl_dy[i] * x[j];
}

std::vector<ParamGrad> FullFtAdapter::params(double lr) { return {{&w_, &g_, lr}}; }

// ---------------------------------------------------------------------------
// Budget matching

std::size_t gse_trainable_count(std::size_t m, std::size_t n, const GseConfig& config) {
    std::size_t r_g = config.r_g;
    std::size_t num_experts = config.num_experts;
    if (config.variant == Variant::no_generalized) {
        r_g = 0;
        num_experts = config.num_experts + 1;
    }
    std::size_t count = (r_g + num_experts * config.d) * (m + n);
    if (config.variant != Variant::no_specialized) count += num_experts * n;
    return count;
}

std::vector<AdapterSpec> match_budget(std::size_t m, std::size_t n, const GseConfig& config) {
    const std::size_t gse_count = gse_trainable_count(m, n, config);
    const double target = static_cast<double>(gse_count);

    // low-rank count is r * (m + n); pick the closer of floor/ceil, ties down
    const std::size_t r_lo = std::max<std::size_t>(1, gse_count / (m + n));
    const std::size_t r_hi = r_lo + 1;
    auto deviation = [&](std::size_t r) {
        return (static_cast<double>(r * (m + n)) - target) / target;
    };
    const std::size_t rank =
        (std::abs(deviation(r_lo)) <= std::abs(deviation(r_hi))) ? r_lo : r_hi;

    std::vector<AdapterSpec> table;
    table.push_back({AdapterKind::gse, 0, gse_count, 0.0, true});
    for (AdapterKind k : {AdapterKind::lora, AdapterKind::pissa_style}) {
        AdapterSpec spec;
        spec.kind = k;
        spec.rank = rank;
        spec.param_count = rank * (m + n);
        spec.budget_deviation = deviation(rank);
        spec.within_budget = std::abs(spec.budget_deviation) <= 0.03;
        table.push_back(spec);
    }
    AdapterSpec fft;
    fft.kind = AdapterKind::full_ft;
    fft.param_count = m * n;
    fft.budget_deviation = (static_cast<double>(m * n) - target) / target;
    fft.within_budget = false;  // out-of-budget by definition
    table.push_back(fft);
    return table;
}

std::unique_ptr<Adapter> make_adapter(const AdapterSpec& spec, const Matrix& w0,
                                      const GseConfig& gse_config, double lora_scale,
                                      RngStream& rng) {
    switch (spec.kind) {
        case AdapterKind::gse:
            return std::make_unique<GseAdapter>(w0, gse_config);
        case AdapterKind::lora:
            return std::make_unique<LoraAdapter>(w0, spec.rank, lora_scale, rng);
        case AdapterKind::pissa_style:
            return std::make_unique<PissaStyleAdapter>(w0, spec.rank);
        case AdapterKind::full_ft:
            return std::make_unique<FullFtAdapter>(w0);
    }
    throw std::invalid_argument("make_adapter: unknown kind");
}

}  // namespace gse

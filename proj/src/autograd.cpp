#include "gse/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gse {

GradientBundle GradientBundle::zeros_like(const GseLayer& layer) {
    GradientBundle b;
    b.g_upstream = Matrix(layer.out_dim(), layer.in_dim());
    for (const auto& e : layer.specialized) {
        b.g_a_spec.emplace_back(e.a.rows(), e.a.cols());
        b.g_b_spec.emplace_back(e.b.rows(), e.b.cols());
    }
    b.g_a_gen = Matrix(layer.generalized.a.rows(), layer.generalized.a.cols());
    b.g_b_gen = Matrix(layer.generalized.b.rows(), layer.generalized.b.cols());
    b.g_router = Matrix(layer.router.w_z.rows(), layer.router.w_z.cols());
    return b;
}

Matrix upstream_gradient(const Vector& dl_dy, const Vector& x) { return outer(dl_dy, x); }

Matrix upstream_gradient(std::span<const Vector> dl_dys, std::span<const Vector> xs) {
    if (dl_dys.size() != xs.size() || dl_dys.empty())
        throw std::invalid_argument("upstream_gradient: batch size mismatch");
    Matrix g = outer(dl_dys[0], xs[0]);
    for (std::size_t t = 1; t < xs.size(); ++t) g += outer(dl_dys[t], xs[t]);
    return g;
}

std::pair<Matrix, Matrix> expert_gradients(const Matrix& g, double w, double scale,
                                           const Matrix& b, const Matrix& a) {
    const double c = w * scale;
    Matrix g_a = matmul(b.transpose(), g);
    g_a *= c;
    Matrix g_b = matmul(g, a.transpose());
    g_b *= c;
    return {std::move(g_a), std::move(g_b)};
}

std::pair<Matrix, Matrix> expert_gradients(const Matrix& g, double w,
                                           const SpecializedExpert& expert) {
    return expert_gradients(g, w, expert.scale, expert.b, expert.a);
}

Matrix router_gradients(const Matrix& g, const Vector& x, const RoutingResult& routing,
                        const std::vector<SpecializedExpert>& specs) {
    const std::size_t num_experts = specs.size();
    Matrix g_router(num_experts, x.size());
    // dL/dw_j = <g, s_j B_j A_j>_F, factored as sum_k (B_j^T g)_{k,:} . (A_j)_{k,:}
    std::vector<double> dl_dw(num_experts, 0.0);
    for (std::size_t j : routing.selected) {
        const Matrix btg = matmul(specs[j].b.transpose(), g);
        double acc = 0.0;
        for (std::size_t i = 0; i < btg.size(); ++i) acc += btg.data()[i] * specs[j].a.data()[i];
        dl_dw[j] = specs[j].scale * acc;
    }
    // renormalized-softmax backward over the selected set only
    for (std::size_t i : routing.selected) {
        double dl_dz = 0.0;
        for (std::size_t j : routing.selected) {
            const double delta = (i == j) ? 1.0 : 0.0;
            dl_dz += dl_dw[j] * routing.weights[j] * (delta - routing.weights[i]);
        }
        for (std::size_t c = 0; c < x.size(); ++c) g_router(i, c) = dl_dz * x[c];
    }
    return g_router;
}

void accumulate_sample_gradients(const GseLayer& layer, const Vector& x, const Vector& dl_dy,
                                 const RoutingResult& routing, GradientBundle& bundle,
                                 bool with_upstream) {
    // specialized experts, factored: g_A += w s (B^T dl) x^T, g_B += w s dl (A x)^T
    for (std::size_t idx : routing.selected) {
        const auto& e = layer.specialized[idx];
        const double c = routing.weights[idx] * e.scale;
        if (c == 0.0) continue;
        const Vector bt_dl = matvec_transposed(e.b, dl_dy);
        const Vector ax = matvec(e.a, x);
        Matrix& ga = bundle.g_a_spec[idx];
        for (std::size_t k = 0; k < bt_dl.size(); ++k)
            for (std::size_t j = 0; j < x.size(); ++j) ga(k, j) += c * bt_dl[k] * x[j];
        Matrix& gb = bundle.g_b_spec[idx];
        for (std::size_t i = 0; i < dl_dy.size(); ++i)
            for (std::size_t k = 0; k < ax.size(); ++k) gb(i, k) += c * dl_dy[i] * ax[k];
    }

    if (layer.generalized.b.cols() > 0) {
        const auto& e = layer.generalized;
        const Vector bt_dl = matvec_transposed(e.b, dl_dy);
        const Vector ax = matvec(e.a, x);
        for (std::size_t k = 0; k < bt_dl.size(); ++k)
            for (std::size_t j = 0; j < x.size(); ++j)
                bundle.g_a_gen(k, j) += e.scale * bt_dl[k] * x[j];
        for (std::size_t i = 0; i < dl_dy.size(); ++i)
            for (std::size_t k = 0; k < ax.size(); ++k)
                bundle.g_b_gen(i, k) += e.scale * dl_dy[i] * ax[k];
    }

    if (layer.routed()) {
        // dL/dw_j = s_j * (dl_dy^T B_j)(A_j x), no m x n product needed
        std::vector<double> dl_dw(layer.num_experts(), 0.0);
        for (std::size_t j : routing.selected) {
            const auto& e = layer.specialized[j];
            dl_dw[j] = e.scale * dot(matvec_transposed(e.b, dl_dy), matvec(e.a, x));
        }
        for (std::size_t i : routing.selected) {
            double dl_dz = 0.0;
            for (std::size_t j : routing.selected) {
                const double delta = (i == j) ? 1.0 : 0.0;
                dl_dz += dl_dw[j] * routing.weights[j] * (delta - routing.weights[i]);
            }
            if (dl_dz == 0.0) continue;
            for (std::size_t c = 0; c < x.size(); ++c) bundle.g_router(i, c) += dl_dz * x[c];
        }
    }

    if (with_upstream) {
        for (std::size_t i = 0; i < dl_dy.size(); ++i)
            for (std::size_t j = 0; j < x.size(); ++j)
                bundle.g_upstream(i, j) += dl_dy[i] * x[j];
    }
}

namespace {

double quadratic_loss(const GseLayer& layer, const Vector& x, const Vector& target) {
    const auto [y, routing] = forward(layer, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - target[i];
        acc += d * d;
    }
    return 0.5 * acc;
}

/// max |ana - fd| over the group, scaled by the group's largest magnitude.
struct GroupError {
    double max_diff = 0.0;
    double scale = 0.0;

    void add(double ana, double fd) {
        max_diff = std::max(max_diff, std::abs(ana - fd));
        scale = std::max({scale, std::abs(ana), std::abs(fd)});
    }
    double relative() const { return scale > 0.0 ? max_diff / scale : 0.0; }
};

double fd_probe(GseLayer& layer, Matrix& param, std::size_t flat, const Vector& x,
                const Vector& target, double eps) {
    const double saved = param.data()[flat];
    param.data()[flat] = saved + eps;
    const double lp = quadratic_loss(layer, x, target);
    param.data()[flat] = saved - eps;
    const double lm = quadratic_loss(layer, x, target);
    param.data()[flat] = saved;
    return (lp - lm) / (2.0 * eps);
}

}  // namespace

FdReport fd_check(const GseLayer& layer_in, const Vector& x, const Vector& target, double eps) {
    if (!(eps >= 1e-8 && eps <= 1e-4))
        throw std::invalid_argument("fd_check: eps must lie in [1e-8, 1e-4]");

    GseLayer layer = layer_in;  // local copy; probes mutate parameters in place
    const auto [y, routing] = forward(layer, x);
    Vector dl_dy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dl_dy[i] = y[i] - target[i];
    const Matrix g = upstream_gradient(dl_dy, x);

    GradientBundle bundle = GradientBundle::zeros_like(layer);
    accumulate_sample_gradients(layer, x, dl_dy, routing, bundle);

    FdReport report;
    GroupError a_spec, b_spec, a_gen, b_gen, router_err;

    for (std::size_t e = 0; e < layer.num_experts(); ++e) {
        Matrix& a = layer.specialized[e].a;
        for (std::size_t f = 0; f < a.size(); ++f)
            a_spec.add(bundle.g_a_spec[e].data()[f], fd_probe(layer, a, f, x, target, eps));
        Matrix& b = layer.specialized[e].b;
        for (std::size_t f = 0; f < b.size(); ++f)
            b_spec.add(bundle.g_b_spec[e].data()[f], fd_probe(layer, b, f, x, target, eps));
    }
    {
        Matrix& a = layer.generalized.a;
        for (std::size_t f = 0; f < a.size(); ++f)
            a_gen.add(bundle.g_a_gen.data()[f], fd_probe(layer, a, f, x, target, eps));
        Matrix& b = layer.generalized.b;
        for (std::size_t f = 0; f < b.size(); ++f)
            b_gen.add(bundle.g_b_gen.data()[f], fd_probe(layer, b, f, x, target, eps));
    }

    if (layer.routed()) {
        std::size_t probed = 0;
        Matrix& wz = layer.router.w_z;
        for (std::size_t f = 0; f < wz.size(); ++f) {
            // skip entries whose perturbation flips the top-k selection
            const double saved = wz.data()[f];
            wz.data()[f] = saved + eps;
            const auto sel_p = route(layer.router, x, layer.config.top_k).selected;
            wz.data()[f] = saved - eps;
            const auto sel_m = route(layer.router, x, layer.config.top_k).selected;
            wz.data()[f] = saved;
            if (sel_p != routing.selected || sel_m != routing.selected) continue;
            router_err.add(bundle.g_router.data()[f], fd_probe(layer, wz, f, x, target, eps));
            ++probed;
        }
        report.router_probeable = probed > 0;
        report.max_rel_router = router_err.relative();
    }

    (void)g;
    report.max_rel_a_spec = a_spec.relative();
    report.max_rel_b_spec = b_spec.relative();
    report.max_rel_a_gen = a_gen.relative();
    report.max_rel_b_gen = b_gen.relative();
    return report;
}

void OptimState::apply_step(std::span<ParamGrad> params) {
    if (config_.kind == OptimKind::adam && m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.emplace_back(p.param->rows(), p.param->cols());
            v_.emplace_back(p.param->rows(), p.param->cols());
        }
    }
    if (config_.kind == OptimKind::adam && m_.size() != params.size())
        throw std::invalid_argument("apply_step: parameter list changed size");

    ++step_;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Matrix& p = *params[pi].param;
        const Matrix& g = *params[pi].grad;
        if (p.rows() != g.rows() || p.cols() != g.cols())
            throw std::invalid_argument("apply_step: gradient shape mismatch");
        const double lr = params[pi].lr;
        if (config_.kind == OptimKind::sgd) {
            for (std::size_t i = 0; i < p.size(); ++i)
                p.data()[i] -= lr * g.data()[i];
        } else {
            const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
            const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
            Matrix& m = m_[pi];
            Matrix& v = v_[pi];
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g.data()[i];
                m.data()[i] = config_.beta1 * m.data()[i] + (1.0 - config_.beta1) * gi;
                v.data()[i] = config_.beta2 * v.data()[i] + (1.0 - config_.beta2) * gi * gi;
                const double mhat = m.data()[i] / bc1;
                const double vhat = v.data()[i] / bc2;
                p.data()[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
            }
        }
    }
}

}  // namespace gse

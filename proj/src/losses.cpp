#include "gse/losses.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gse {

double RoutingBatchStats::selection_entropy() const {
    const double total = static_cast<double>(tokens * k);
    double h = 0.0;
    for (std::size_t c : selection_counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

std::pair<double, Matrix> l1_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("l1_loss: shape mismatch");
    const double count = static_cast<double>(pred.size());
    Matrix sub(pred.rows(), pred.cols());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        acc += std::abs(d);
        sub.data()[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / count;
    }
    return {acc / count, std::move(sub)};
}

std::pair<double, Vector> l1_loss(const Vector& pred, const Vector& target) {
    if (pred.size() != target.size()) throw std::invalid_argument("l1_loss: length mismatch");
    const double count = static_cast<double>(pred.size());
    Vector sub(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += std::abs(d);
        sub[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / count;
    }
    return {acc / count, std::move(sub)};
}

RoutingBatchStats accumulate_stats(std::span<const RoutingResult> routings) {
    if (routings.empty()) throw std::invalid_argument("accumulate_stats: empty batch");
    const std::size_t num_experts = routings[0].full_probs.size();
    const std::size_t k = routings[0].selected.size();
    RoutingBatchStats stats;
    stats.tokens = routings.size();
    stats.k = k;
    stats.selection_counts.assign(num_experts, 0);
    stats.prob_sums.assign(num_experts, 0.0);
    for (const auto& r : routings) {
        if (r.selected.size() != k || r.full_probs.size() != num_experts)
            throw std::invalid_argument("accumulate_stats: mixed layer shapes or k");
        for (std::size_t i : r.selected) ++stats.selection_counts[i];
        for (std::size_t i = 0; i < num_experts; ++i) stats.prob_sums[i] += r.full_probs[i];
    }
    return stats;
}

RoutingBatchStats merge_stats(const RoutingBatchStats& a, const RoutingBatchStats& b) {
    if (a.k != b.k || a.selection_counts.size() != b.selection_counts.size())
        throw std::invalid_argument("merge_stats: incompatible shards");
    RoutingBatchStats out = a;
    out.tokens += b.tokens;
    for (std::size_t i = 0; i < out.selection_counts.size(); ++i) {
        out.selection_counts[i] += b.selection_counts[i];
        out.prob_sums[i] += b.prob_sums[i];
    }
    return out;
}

double balance_loss(const RoutingBatchStats& stats, std::size_t num_experts) {
    if (stats.tokens == 0) throw std::invalid_argument("balance_loss: empty batch");
    if (stats.selection_counts.size() != num_experts)
        throw std::invalid_argument("balance_loss: expert count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < num_experts; ++i)
        acc += stats.selection_frequency(i) * stats.routing_mass(i);
    return static_cast<double>(num_experts) * acc;
}

LossReport total_loss(double task, std::span<const double> balances, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("total_loss: alpha must be >= 0");
    LossReport r;
    r.task_term = task;
    r.balance_terms.assign(balances.begin(), balances.end());
    r.alpha = alpha;
    r.total = task + alpha * std::accumulate(balances.begin(), balances.end(), 0.0);
    return r;
}

Vector balance_logit_gradient(const std::vector<double>& token_probs,
                              const RoutingBatchStats& stats) {
    const std::size_t num_experts = token_probs.size();
    if (stats.selection_counts.size() != num_experts)
        throw std::invalid_argument("balance_logit_gradient: expert count mismatch");
    const double e_over_t =
        static_cast<double>(num_experts) / static_cast<double>(stats.tokens);
    double f_dot_p = 0.0;
    for (std::size_t i = 0; i < num_experts; ++i)
        f_dot_p += stats.selection_frequency(i) * token_probs[i];
    Vector dz(num_experts);
    for (std::size_t j = 0; j < num_experts; ++j)
        dz[j] = e_over_t * token_probs[j] * (stats.selection_frequency(j) - f_dot_p);
    return dz;
}

}  // namespace gse

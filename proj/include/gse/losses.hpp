#pragma once

#include <span>
#include <vector>

#include "gse/gse_layer.hpp"
#include "gse/matrix.hpp"

namespace gse {

/// Per-batch routing statistics of one GSE layer: hard selection counts and
/// soft routing mass per expert.
struct RoutingBatchStats {
    std::size_t tokens = 0;                    // T
    std::vector<std::size_t> selection_counts; // length E
    std::vector<double> prob_sums;             // length E
    std::size_t k = 0;

    double selection_frequency(std::size_t i) const {
        return static_cast<double>(selection_counts[i]) / static_cast<double>(tokens);
    }
    double routing_mass(std::size_t i) const {
        return prob_sums[i] / static_cast<double>(tokens);
    }
    /// Shannon entropy (nats) of the normalized selection frequencies.
    double selection_entropy() const;
};

struct LossReport {
    double task_term = 0.0;
    std::vector<double> balance_terms;  // one per GSE layer
    double total = 0.0;
    double alpha = 0.0;
};

/// Mean absolute error plus its minimum-norm subgradient (sign(0) = 0).
std::pair<double, Matrix> l1_loss(const Matrix& pred, const Matrix& target);
std::pair<double, Vector> l1_loss(const Vector& pred, const Vector& target);

RoutingBatchStats accumulate_stats(std::span<const RoutingResult> routings);

/// Merge two shards computed over disjoint token sets.
RoutingBatchStats merge_stats(const RoutingBatchStats& a, const RoutingBatchStats& b);

/// L_bal = E * sum_i f_i * P_i.
double balance_loss(const RoutingBatchStats& stats, std::size_t num_experts);

LossReport total_loss(double task, std::span<const double> balances, double alpha);

/// d(balance_loss)/dz for one token's full softmax probs. Selection counts f_i
/// are treated as constants; only the routing mass P_i carries gradient.
/// Returns dL_bal/dz_j for the token, to be scaled by alpha and outer-multiplied
/// with x by the caller.
Vector balance_logit_gradient(const std::vector<double>& token_probs,
                              const RoutingBatchStats& stats);

}  // namespace gse

#pragma once

#include <cstdint>
#include <vector>

#include "gse/matrix.hpp"

namespace gse {

/// Clustered linear-regression task: targets come from W_0 plus a per-cluster
/// low-rank shift, inputs from per-cluster shifted Gaussians.
struct TaskSpec {
    std::size_t m = 64;
    std::size_t n = 64;
    std::size_t num_clusters = 7;
    std::size_t cluster_rank = 2;
    double noise_std = 0.01;
    std::size_t samples_train = 2048;
    std::size_t samples_val = 512;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    Matrix w0;
    std::vector<Matrix> shifts;         // per-cluster low-rank deltas
    std::vector<Vector> cluster_means;  // input means, one per cluster
    std::vector<Vector> train_inputs;
    std::vector<Vector> train_targets;
    std::vector<std::size_t> train_cluster_ids;
    std::vector<Vector> val_inputs;
    std::vector<Vector> val_targets;
    std::vector<std::size_t> val_cluster_ids;
    TaskSpec spec;
};

Dataset make_task(const TaskSpec& spec);

/// Validation L1 of the cheating predictor that applies the true W_0 + delta_c
/// for each sample's cluster; this is the task's noise floor.
double oracle_val_loss(const Dataset& data);

}  // namespace gse

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gse/autograd.hpp"
#include "gse/baselines.hpp"
#include "gse/task.hpp"

namespace gse {

struct TrainSpec {
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    OptimConfig optim;          // sgd by default; adam hides the scaling ablation
    double lr = 0.05;
    double lr_final = -1.0;  // linear decay target; < 0 keeps lr constant
    double lora_scale = 1.0;
    std::uint64_t seed = 0;     // batch-sampling stream
};

struct StepMetrics {
    std::size_t step = 0;
    double task_loss = 0.0;
    double balance_loss_sum = 0.0;
    double total_loss = 0.0;
    std::vector<double> expert_freq;  // per-expert selection frequency, empty if unrouted
};

struct RunRecord {
    std::size_t schema_version = 1;
    AdapterKind kind = AdapterKind::gse;
    std::size_t rank = 0;
    std::size_t param_count = 0;
    GseConfig gse_config;
    TaskSpec task;
    TrainSpec train_spec;
    std::vector<StepMetrics> history;
    double initial_val_loss = 0.0;
    double final_val_loss = 0.0;
    double final_val_entropy = 0.0;  // selection entropy over the validation split
    double wall_seconds = 0.0;
    bool diverged = false;
    std::size_t divergence_step = 0;
};

/// Mean per-sample L1 over the validation split. Resets the adapter's batch
/// recording state.
double validation_loss(Adapter& adapter, const Dataset& data);

/// Selection entropy (nats, of f_i / k) over the validation split; 0 for
/// unrouted adapters.
double validation_entropy(Adapter& adapter, const Dataset& data);

/// Mini-batch loop over the train split. Divergence (non-finite loss) stops
/// the run with the offending step recorded.
RunRecord train(Adapter& adapter, const Dataset& data, const TrainSpec& spec, double alpha);

struct TrialResult {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    RunRecord record;
};

struct KindSummary {
    AdapterSpec spec;
    std::vector<double> final_losses;  // per successful trial, trial order
    double median = 0.0;
    double iqr = 0.0;
    std::size_t wins_vs_gse = 0;   // paired trials with strictly lower final loss
    std::size_t paired_trials = 0; // trials where both this kind and gse finished
};

struct ComparisonReport {
    std::size_t schema_version = 1;
    TaskSpec task;
    GseConfig gse_config;
    TrainSpec train_spec;
    std::uint64_t master_seed = 0;
    std::size_t trials = 0;
    std::vector<AdapterKind> kinds;
    std::vector<std::vector<TrialResult>> results;  // [kind][trial]
    std::vector<KindSummary> summaries;             // kind order
};

/// Paired-seed sweep: trial t builds one dataset and one seed, shared by every
/// kind. Trials run concurrently; failed trials are isolated and enumerated.
ComparisonReport compare(const TaskSpec& task, const GseConfig& gse_config,
                         const std::vector<AdapterKind>& kinds, std::size_t trials,
                         const TrainSpec& train_spec, double alpha, std::uint64_t master_seed,
                         std::size_t max_threads = 0);

double median_of(std::vector<double> values);
double iqr_of(std::vector<double> values);

}  // namespace gse

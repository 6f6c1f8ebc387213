#include "gse/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "gse/losses.hpp"
#include "gse/rng.hpp"

namespace gse {

namespace {

double entropy_of_frequencies(const std::vector<double>& freqs, std::size_t k) {
    if (freqs.empty() || k == 0) return 0.0;
    double h = 0.0;
    for (double f : freqs) {
        const double p = f / static_cast<double>(k);
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

std::size_t adapter_k(const Adapter& adapter) {
    if (adapter.kind() != AdapterKind::gse) return 0;
    const auto& layer = dynamic_cast<const GseAdapter&>(adapter).layer();
    return layer.routed() ? layer.config.top_k : 0;
}

}  // namespace

double validation_loss(Adapter& adapter, const Dataset& data) {
    if (data.val_inputs.empty()) throw std::invalid_argument("validation_loss: empty split");
    adapter.begin_batch();
    double acc = 0.0;
    for (std::size_t t = 0; t < data.val_inputs.size(); ++t)
        acc += l1_loss(adapter.forward(data.val_inputs[t]), data.val_targets[t]).first;
    adapter.begin_batch();
    return acc / static_cast<double>(data.val_inputs.size());
}

double validation_entropy(Adapter& adapter, const Dataset& data) {
    const std::size_t k = adapter_k(adapter);
    if (k == 0) return 0.0;
    adapter.begin_batch();
    for (const auto& x : data.val_inputs) (void)adapter.forward(x);
    adapter.end_batch(0.0);
    const double h = entropy_of_frequencies(adapter.expert_frequencies(), k);
    adapter.begin_batch();
    return h;
}

RunRecord train(Adapter& adapter, const Dataset& data, const TrainSpec& spec, double alpha) {
    if (data.train_inputs.empty()) throw std::invalid_argument("train: empty train split");
    if (spec.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    const auto start = std::chrono::steady_clock::now();

    RunRecord rec;
    rec.kind = adapter.kind();
    rec.param_count = adapter.trainable_count();
    rec.task = data.spec;
    rec.train_spec = spec;
    rec.history.reserve(spec.steps);
    rec.initial_val_loss = validation_loss(adapter, data);

    OptimState opt(spec.optim);
    RngStream batch_rng(spec.seed, 7);
    const std::size_t pool = data.train_inputs.size();
    const double inv_batch = 1.0 / static_cast<double>(spec.batch_size);

    for (std::size_t step = 0; step < spec.steps; ++step) {
        std::vector<std::size_t> batch(spec.batch_size);
        for (auto& idx : batch) idx = static_cast<std::size_t>(batch_rng.next_u64() % pool);

        adapter.begin_batch();
        adapter.zero_grad();
        double task_acc = 0.0;
        std::vector<Vector> grads(spec.batch_size);
        for (std::size_t b = 0; b < spec.batch_size; ++b) {
            const Vector y = adapter.forward(data.train_inputs[batch[b]]);
            auto [loss, dl_dy] = l1_loss(y, data.train_targets[batch[b]]);
            task_acc += loss;
            for (double& g : dl_dy) g *= inv_batch;
            grads[b] = std::move(dl_dy);
        }
        for (std::size_t b = 0; b < spec.batch_size; ++b)
            adapter.backward(data.train_inputs[batch[b]], grads[b]);
        const double balance = adapter.end_batch(alpha);

        StepMetrics m;
        m.step = step;
        m.task_loss = task_acc * inv_batch;
        m.balance_loss_sum = balance;
        m.total_loss = m.task_loss + alpha * balance;
        m.expert_freq = adapter.expert_frequencies();
        rec.history.push_back(std::move(m));

        if (!std::isfinite(rec.history.back().total_loss)) {
            rec.diverged = true;
            rec.divergence_step = step;
            break;
        }
        double lr = spec.lr;
        if (spec.lr_final >= 0.0 && spec.steps > 1) {
            const double frac = static_cast<double>(step) / static_cast<double>(spec.steps - 1);
            lr = spec.lr + (spec.lr_final - spec.lr) * frac;
        }
        auto params = adapter.params(lr);
        opt.apply_step(params);
    }

    rec.final_val_loss = rec.diverged ? rec.history.back().total_loss
                                      : validation_loss(adapter, data);
    rec.final_val_entropy = rec.diverged ? 0.0 : validation_entropy(adapter, data);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median_of: empty");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return (values.size() % 2) ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double iqr_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("iqr_of: empty");
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        if (lo + 1 >= values.size()) return values.back();
        return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
    };
    return quantile(0.75) - quantile(0.25);
}

ComparisonReport compare(const TaskSpec& task, const GseConfig& gse_config,
                         const std::vector<AdapterKind>& kinds, std::size_t trials,
                         const TrainSpec& train_spec, double alpha, std::uint64_t master_seed,
                         std::size_t max_threads) {
    if (trials == 0) throw std::invalid_argument("compare: trials must be >= 1");
    if (kinds.empty()) throw std::invalid_argument("compare: no adapter kinds");

    ComparisonReport report;
    report.task = task;
    report.gse_config = gse_config;
    report.train_spec = train_spec;
    report.master_seed = master_seed;
    report.trials = trials;
    report.kinds = kinds;
    report.results.assign(kinds.size(), std::vector<TrialResult>(trials));

    const auto budget_table = match_budget(task.m, task.n, gse_config);
    auto spec_for = [&](AdapterKind kind) -> const AdapterSpec& {
        for (const auto& s : budget_table)
            if (s.kind == kind) return s;
        throw std::invalid_argument("compare: kind missing from budget table");
    };

    auto run_trial = [&](std::size_t trial) {
        RngStream seeder(master_seed, 100 + trial);
        const std::uint64_t trial_seed = seeder.next_u64();
        TaskSpec trial_task = task;
        trial_task.seed = trial_seed;
        Dataset data;
        try {
            data = make_task(trial_task);
        } catch (const std::exception& e) {
            for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
                auto& slot = report.results[ki][trial];
                slot.trial = trial;
                slot.seed = trial_seed;
                slot.failed = true;
                slot.error = e.what();
            }
            return;
        }
        for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
            auto& slot = report.results[ki][trial];
            slot.trial = trial;
            slot.seed = trial_seed;
            try {
                GseConfig trial_config = gse_config;
                trial_config.seed = trial_seed;
                RngStream init_rng(trial_seed, 13);
                auto adapter = make_adapter(spec_for(kinds[ki]), data.w0, trial_config,
                                            train_spec.lora_scale, init_rng);
                TrainSpec trial_train = train_spec;
                trial_train.seed = trial_seed;
                slot.record = train(*adapter, data, trial_train, alpha);
                slot.record.gse_config = trial_config;
                slot.record.rank = spec_for(kinds[ki]).rank;
                if (slot.record.diverged) {
                    slot.failed = true;
                    slot.error = "diverged at step " +
                                 std::to_string(slot.record.divergence_step);
                }
            } catch (const std::exception& e) {
                slot.failed = true;
                slot.error = e.what();
            }
        }
    };

    std::size_t workers = max_threads ? max_threads : std::thread::hardware_concurrency();
    workers = std::max<std::size_t>(1, std::min(workers, trials));
    if (workers == 1) {
        for (std::size_t t = 0; t < trials; ++t) run_trial(t);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t t = w; t < trials; t += workers) run_trial(t);
            });
        for (auto& th : pool) th.join();
    }

    // summaries against the gse column when present
    const auto gse_it = std::find(kinds.begin(), kinds.end(), AdapterKind::gse);
    const std::size_t gse_index =
        gse_it == kinds.end() ? kinds.size() : static_cast<std::size_t>(gse_it - kinds.begin());
    for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
        KindSummary s;
        s.spec = spec_for(kinds[ki]);
        for (std::size_t t = 0; t < trials; ++t) {
            const auto& slot = report.results[ki][t];
            if (slot.failed) continue;
            s.final_losses.push_back(slot.record.final_val_loss);
            if (gse_index < kinds.size() && ki != gse_index &&
                !report.results[gse_index][t].failed) {
                ++s.paired_trials;
                if (report.results[gse_index][t].record.final_val_loss <
                    slot.record.final_val_loss)
                    ++s.wins_vs_gse;  // wins counted for gse over this kind
            }
        }
        if (!s.final_losses.empty()) {
            s.median = median_of(s.final_losses);
            s.iqr = iqr_of(s.final_losses);
        }
        report.summaries.push_back(std::move(s));
    }
    return report;
}

}  // namespace gse

#include "gse/report.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gse/snapshot.hpp"

namespace gse {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot write " + path.string());
    return out;
}

std::size_t expert_columns(const RunRecord& rec) {
    for (const auto& m : rec.history)
        if (!m.expert_freq.empty()) return m.expert_freq.size();
    return 0;
}

void echo_config(std::ostream& out, const RunRecord& rec) {
    out << "schema_version " << rec.schema_version << '\n';
    out << "kind " << to_string(rec.kind) << '\n';
    out << "rank " << rec.rank << '\n';
    out << "param_count " << rec.param_count << '\n';
    out << "task.m " << rec.task.m << '\n';
    out << "task.n " << rec.task.n << '\n';
    out << "task.num_clusters " << rec.task.num_clusters << '\n';
    out << "task.cluster_rank " << rec.task.cluster_rank << '\n';
    out << "task.noise_std " << fmt17(rec.task.noise_std) << '\n';
    out << "task.samples_train " << rec.task.samples_train << '\n';
    out << "task.samples_val " << rec.task.samples_val << '\n';
    out << "task.seed " << rec.task.seed << '\n';
    const GseConfig& c = rec.gse_config;
    out << "gse.variant " << to_string(c.variant) << '\n';
    out << "gse.r_g " << c.r_g << '\n';
    out << "gse.d " << c.d << '\n';
    out << "gse.num_experts " << c.num_experts << '\n';
    out << "gse.top_k " << c.top_k << '\n';
    out << "gse.s_g " << fmt17(c.s_g) << '\n';
    out << "gse.s_base " << fmt17(c.s_base) << '\n';
    out << "gse.alpha " << fmt17(c.alpha) << '\n';
    out << "gse.router_std " << fmt17(c.router_std) << '\n';
    out << "gse.seed " << c.seed << '\n';
    out << "train.steps " << rec.train_spec.steps << '\n';
    out << "train.batch_size " << rec.train_spec.batch_size << '\n';
    out << "train.optim "
        << (rec.train_spec.optim.kind == OptimKind::sgd ? "sgd" : "adam") << '\n';
    out << "train.lr " << fmt17(rec.train_spec.lr) << '\n';
    out << "train.lr_final " << fmt17(rec.train_spec.lr_final) << '\n';
    out << "train.lora_scale " << fmt17(rec.train_spec.lora_scale) << '\n';
    out << "train.seed " << rec.train_spec.seed << '\n';
}

}  // namespace

void write_run_csv(const std::filesystem::path& path, const RunRecord& rec) {
    auto out = open_out(path);
    out << "# schema_version " << rec.schema_version << '\n';
    out << "# task_seed " << rec.task.seed << " gse_seed " << rec.gse_config.seed
        << " train_seed " << rec.train_spec.seed << '\n';
    const std::size_t experts = expert_columns(rec);
    out << "step,task_loss,balance_loss_sum,total_loss";
    for (std::size_t i = 0; i < experts; ++i) out << ",expert_freq_" << i;
    out << '\n';
    for (const auto& m : rec.history) {
        out << m.step << ',' << fmt17(m.task_loss) << ',' << fmt17(m.balance_loss_sum) << ','
            << fmt17(m.total_loss);
        for (std::size_t i = 0; i < experts; ++i)
            out << ',' << fmt17(i < m.expert_freq.size() ? m.expert_freq[i] : 0.0);
        out << '\n';
    }
    if (!out) throw std::runtime_error("report: write failed for " + path.string());
}

std::vector<StepMetrics> read_run_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report: cannot read " + path.string());
    std::vector<StepMetrics> metrics;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;  // column header
            continue;
        }
        std::stringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() < 4) throw std::runtime_error("report: short row in " + path.string());
        StepMetrics m;
        m.step = static_cast<std::size_t>(std::stoull(cells[0]));
        m.task_loss = parse_double(cells[1]);
        m.balance_loss_sum = parse_double(cells[2]);
        m.total_loss = parse_double(cells[3]);
        for (std::size_t i = 4; i < cells.size(); ++i)
            m.expert_freq.push_back(parse_double(cells[i]));
        metrics.push_back(std::move(m));
    }
    return metrics;
}

void write_run_summary(const std::filesystem::path& path, const RunRecord& rec) {
    auto out = open_out(path);
    out << "run summary\n";
    echo_config(out, rec);
    out << "steps_completed " << rec.history.size() << '\n';
    out << "initial_val_loss " << fmt17(rec.initial_val_loss) << '\n';
    out << "final_val_loss " << fmt17(rec.final_val_loss) << '\n';
    out << "final_val_entropy " << fmt17(rec.final_val_entropy) << '\n';
    out << "diverged " << (rec.diverged ? 1 : 0) << '\n';
    if (rec.diverged) out << "divergence_step " << rec.divergence_step << '\n';
    out << "wall_seconds " << fmt17(rec.wall_seconds) << '\n';
    if (!out) throw std::runtime_error("report: write failed for " + path.string());
}

void write_run_report(const std::filesystem::path& dir, const RunRecord& rec) {
    std::filesystem::create_directories(dir);
    write_run_csv(dir / "metrics.csv", rec);
    write_run_summary(dir / "summary.txt", rec);
}

void write_comparison_report(const std::filesystem::path& dir,
                             const ComparisonReport& report) {
    std::filesystem::create_directories(dir);
    for (std::size_t ki = 0; ki < report.kinds.size(); ++ki) {
        for (std::size_t t = 0; t < report.trials; ++t) {
            const auto& slot = report.results[ki][t];
            if (slot.failed) continue;
            const auto name = to_string(report.kinds[ki]) + "_trial" + std::to_string(t);
            write_run_csv(dir / (name + ".csv"), slot.record);
        }
    }

    auto out = open_out(dir / "comparison.txt");
    out << "comparison summary\n";
    out << "schema_version " << report.schema_version << '\n';
    out << "master_seed " << report.master_seed << '\n';
    out << "trials " << report.trials << '\n';
    out << "task.m " << report.task.m << " task.n " << report.task.n << " task.num_clusters "
        << report.task.num_clusters << " task.cluster_rank " << report.task.cluster_rank
        << " task.noise_std " << fmt17(report.task.noise_std) << '\n';
    out << "train.steps " << report.train_spec.steps << " train.batch_size "
        << report.train_spec.batch_size << " train.lr " << fmt17(report.train_spec.lr) << '\n';
    for (std::size_t ki = 0; ki < report.kinds.size(); ++ki) {
        const auto& s = report.summaries[ki];
        out << "kind " << to_string(report.kinds[ki]) << " rank " << s.spec.rank
            << " param_count " << s.spec.param_count << " budget_deviation "
            << fmt17(s.spec.budget_deviation) << " within_budget "
            << (s.spec.within_budget ? 1 : 0) << '\n';
        if (s.final_losses.empty()) {
            out << "  no finished trials\n";
            continue;
        }
        out << "  median_final_val_loss " << fmt17(s.median) << " iqr " << fmt17(s.iqr)
            << '\n';
        if (report.kinds[ki] != AdapterKind::gse)
            out << "  gse_wins " << s.wins_vs_gse << " of " << s.paired_trials
                << " paired trials\n";
        out << "  finals";
        for (double v : s.final_losses) out << ' ' << fmt17(v);
        out << '\n';
    }
    out << "failed_trials\n";
    bool any_failed = false;
    for (std::size_t ki = 0; ki < report.kinds.size(); ++ki)
        for (std::size_t t = 0; t < report.trials; ++t)
            if (report.results[ki][t].failed) {
                any_failed = true;
                out << "  " << to_string(report.kinds[ki]) << " trial " << t << ": "
                    << report.results[ki][t].error << '\n';
            }
    if (!any_failed) out << "  none\n";
    if (!out) throw std::runtime_error("report: write failed for comparison");
}

}  // namespace gse

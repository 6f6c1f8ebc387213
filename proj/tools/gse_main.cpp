#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "gse/config.hpp"
#include "gse/report.hpp"
#include "gse/snapshot.hpp"
#include "gse/train.hpp"
#include "gse/verify.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitRuntime = 3;

std::filesystem::path output_root() {
    if (const char* env = std::getenv("GSE_OUTPUT_ROOT")) return env;
    return "gse-out";
}

gse::HarnessConfig merged_config(const std::string& path,
                                 const std::vector<std::string>& overrides) {
    gse::HarnessConfig config = gse::load_config(path);
    for (const auto& assignment : overrides) gse::apply_override(config, assignment);
    config.validate();
    return config;
}

int cmd_inspect(const std::string& config_path, const std::string& weight_path,
                const std::vector<std::string>& overrides) {
    const gse::HarnessConfig config = merged_config(config_path, overrides);
    const gse::Matrix w0 = gse::load_matrix(weight_path);
    const gse::GseLayer layer = gse::build_layer(w0, config.gse);

    std::cout << "layer " << layer.out_dim() << "x" << layer.in_dim() << " variant "
              << gse::to_string(layer.config.variant) << "\n";
    std::cout << "spectrum partition\n";
    std::cout << "  generalized [" << layer.generalized_segment.index_lo << ", "
              << layer.generalized_segment.index_hi << ") trace "
              << gse::fmt17(layer.generalized_segment.trace_sigma()) << " scale "
              << gse::fmt17(layer.generalized.scale) << "\n";
    for (std::size_t i = 0; i < layer.num_experts(); ++i) {
        std::cout << "  expert_" << i;
        if (i < layer.segments.size())
            std::cout << " [" << layer.segments[i].index_lo << ", "
                      << layer.segments[i].index_hi << ")";
        std::cout << " trace " << gse::fmt17(layer.specialized[i].trace_sigma) << " scale "
                  << gse::fmt17(layer.specialized[i].scale) << "\n";
    }
    std::cout << "parameter counts\n";
    for (const auto& spec : gse::match_budget(w0.rows(), w0.cols(), config.gse)) {
        std::cout << "  " << gse::to_string(spec.kind);
        if (spec.rank) std::cout << " rank " << spec.rank;
        std::cout << " params " << spec.param_count << " deviation "
                  << gse::fmt17(spec.budget_deviation)
                  << (spec.within_budget ? "" : " (out of budget)") << "\n";
    }
    return kExitPass;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
    const gse::SuiteResult result = gse::run_suite(suite, seed);
    std::cout << result.summary();
    return result.passed ? kExitPass : kExitVerifyFail;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& kind_name) {
    const gse::HarnessConfig config = merged_config(config_path, overrides);
    const gse::AdapterKind kind = gse::adapter_kind_from_string(kind_name);
    const gse::Dataset data = gse::make_task(config.task);

    const auto budget = gse::match_budget(config.task.m, config.task.n, config.gse);
    const auto spec_it =
        std::find_if(budget.begin(), budget.end(),
                     [&](const gse::AdapterSpec& s) { return s.kind == kind; });
    gse::RngStream init_rng(config.gse.seed, 13);
    auto adapter =
        gse::make_adapter(*spec_it, data.w0, config.gse, config.train.lora_scale, init_rng);

    gse::RunRecord rec = gse::train(*adapter, data, config.train, config.gse.alpha);
    rec.gse_config = config.gse;
    rec.rank = spec_it->rank;

    const auto dir = output_root() / config.label;
    gse::write_run_report(dir, rec);
    gse::save_adapter(dir / "adapter.snapshot", *adapter);
    std::cout << "wrote " << dir.string() << "\n";
    std::cout << "final_val_loss " << gse::fmt17(rec.final_val_loss) << "\n";
    if (rec.diverged) {
        std::cout << "diverged at step " << rec.divergence_step << "\n";
        return kExitRuntime;
    }
    return kExitPass;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& overrides) {
    const gse::HarnessConfig config = merged_config(config_path, overrides);
    const gse::ComparisonReport report =
        gse::compare(config.task, config.gse, config.kinds, config.trials, config.train,
                     config.gse.alpha, config.task.seed, config.max_threads);
    const auto dir = output_root() / config.label;
    gse::write_comparison_report(dir, report);
    std::cout << "wrote " << dir.string() << "\n";
    bool any_kind_dead = false;
    for (const auto& s : report.summaries) {
        std::cout << gse::to_string(s.spec.kind) << " median "
                  << (s.final_losses.empty() ? "n/a" : gse::fmt17(s.median)) << "\n";
        if (s.final_losses.empty()) any_kind_dead = true;
    }
    return any_kind_dead ? kExitRuntime : kExitPass;
}

int cmd_report(const std::string& from_dir) {
    const std::filesystem::path dir(from_dir);
    if (!std::filesystem::is_directory(dir))
        throw std::invalid_argument("report: not a directory: " + from_dir);
    bool any = false;
    std::vector<std::filesystem::path> csvs;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
    std::sort(csvs.begin(), csvs.end());
    for (const auto& path : csvs) {
        const auto metrics = gse::read_run_csv(path);
        any = true;
        std::cout << path.filename().string() << " steps " << metrics.size();
        if (!metrics.empty())
            std::cout << " first_task_loss " << gse::fmt17(metrics.front().task_loss)
                      << " last_task_loss " << gse::fmt17(metrics.back().task_loss);
        std::cout << "\n";
    }
    if (!any) throw std::invalid_argument("report: no metrics CSV in " + from_dir);
    return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GSE adapter toolkit"};
    app.require_subcommand(1);

    std::string config_path, weight_path, suite, from_dir, kind_name = "gse";
    std::uint64_t seed = 0;
    std::vector<std::string> overrides;

    auto* inspect = app.add_subcommand("inspect", "print spectrum partition and budgets");
    inspect->add_option("config", config_path)->required();
    inspect->add_option("weight-file", weight_path)->required();
    inspect->add_option("--set", overrides, "key=value config override");

    auto* verify = app.add_subcommand("verify", "run an invariant suite");
    verify->add_option("--suite", suite)->required();
    verify->add_option("--seed", seed);

    auto* train = app.add_subcommand("train", "train one adapter on the synthetic task");
    train->add_option("--config", config_path)->required();
    train->add_option("--set", overrides, "key=value config override");
    train->add_option("--kind", kind_name, "gse, lora, pissa_style, or full_ft");

    auto* compare = app.add_subcommand("compare", "paired-seed sweep across adapter kinds");
    compare->add_option("--config", config_path)->required();
    compare->add_option("--set", overrides, "key=value config override");
    compare->add_option("--kinds", [&](const std::vector<std::string>& vals) {
        overrides.push_back("compare.kinds=" + vals.back());
        return true;
    }, "comma-separated adapter kinds");
    compare->add_option("--trials", [&](const std::vector<std::string>& vals) {
        overrides.push_back("compare.trials=" + vals.back());
        return true;
    }, "independent paired trials");

    auto* report = app.add_subcommand("report", "summarize metrics CSVs from a run dir");
    report->add_option("--from", from_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitBadInput;
    }

    try {
        if (inspect->parsed()) return cmd_inspect(config_path, weight_path, overrides);
        if (verify->parsed()) return cmd_verify(suite, seed);
        if (train->parsed()) return cmd_train(config_path, overrides, kind_name);
        if (compare->parsed()) return cmd_compare(config_path, overrides);
        return cmd_report(from_dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

#pragma once

#include <filesystem>
#include <vector>

#include "gse/train.hpp"

namespace gse {

/// Per-step metrics CSV with columns step,task_loss,balance_loss_sum,
/// total_loss,expert_freq_0..E-1; schema version and seeds ride in leading
/// comment lines. Decimals carry 17 significant digits.
void write_run_csv(const std::filesystem::path& path, const RunRecord& rec);

/// Parses a metrics CSV back; ignores comment lines.
std::vector<StepMetrics> read_run_csv(const std::filesystem::path& path);

/// Structured-text run summary: config echo plus headline numbers.
void write_run_summary(const std::filesystem::path& path, const RunRecord& rec);

/// Full run report into `dir` (metrics.csv + summary.txt).
void write_run_report(const std::filesystem::path& dir, const RunRecord& rec);

/// Comparison report into `dir`: per-kind metrics CSVs, a comparison summary
/// with budgets, medians, IQRs, and paired wins, and the failed-trial list.
void write_comparison_report(const std::filesystem::path& dir, const ComparisonReport& report);

}  // namespace gse

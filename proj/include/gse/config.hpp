#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gse/gse_layer.hpp"
#include "gse/task.hpp"
#include "gse/train.hpp"

namespace gse {

/// Everything the CLI needs for one run, mergeable from an INI-style file plus
/// --set overrides (flags win). Keys are section-qualified: task.m, gse.r_g,
/// train.lr, compare.trials, ...
struct HarnessConfig {
    TaskSpec task;
    GseConfig gse;
    TrainSpec train;
    std::size_t trials = 10;
    std::vector<AdapterKind> kinds{AdapterKind::gse, AdapterKind::lora,
                                   AdapterKind::pissa_style};
    std::size_t max_threads = 0;  // 0 = hardware default
    std::string label = "run";

    void validate() const;
};

HarnessConfig load_config(const std::filesystem::path& path);

/// Applies one "section.key=value" override. Throws std::invalid_argument for
/// unknown keys or malformed values.
void apply_override(HarnessConfig& config, const std::string& assignment);

std::string echo_config(const HarnessConfig& config);

}  // namespace gse

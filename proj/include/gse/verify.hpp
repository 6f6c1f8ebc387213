#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gse {

struct CheckLine {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    bool passed = false;
};

struct SuiteResult {
    std::string suite;
    std::uint64_t seed = 0;
    bool passed = false;
    std::vector<CheckLine> checks;

    std::string summary() const;  ///< one line per check plus a verdict
};

const std::vector<std::string>& suite_names();

/// Runs one named invariant suite at fixed desk scale. Throws
/// std::invalid_argument for unknown names.
SuiteResult run_suite(const std::string& name, std::uint64_t seed);

}  // namespace gse

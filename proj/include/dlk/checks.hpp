#pragma once

// Registered gradient-check suites. Each suite draws random instances of one
// backward pass and compares it with central differences. Instances whose
// probe point lands near a ReLU or max kink are redrawn.

#include <cstdint>
#include <string>
#include <vector>

#include "dlk/gradcheck.hpp"

namespace dlk {

inline constexpr std::size_t kDefaultCheckInstances = 20;

struct SuiteResult {
  std::string name;
  std::size_t instances = 0;
  std::size_t redraws = 0;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Individual suites in a fixed order.
const std::vector<std::string>& check_suite_names();
/// Expands a suite or group name (linear, recurrent, all) to suite names.
/// Throws std::invalid_argument for unknown names.
std::vector<std::string> resolve_suites(const std::string& name);
/// Relative tolerance used by a suite.
double suite_tolerance(const std::string& name);

SuiteResult run_check_suite(const std::string& name, std::size_t instances = kDefaultCheckInstances,
                            std::uint64_t seed = 0);

}  // namespace dlk

#pragma once

#include <functional>
#include <string>
#include <vector>

namespace raftlab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs the invariant suite (distributions, gradients, ranking, bounds,
/// metrics, determinism). `progress` is called after each check.
std::vector<CheckResult> run_selftest(
    const std::function<void(const CheckResult&)>& progress = {});

}  // namespace raftlab

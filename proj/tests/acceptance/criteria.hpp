#pragma once

#include <filesystem>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace retstat::acceptance {

struct CriterionResult {
  int id = 0;
  bool pass = false;
  std::string name;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  /// Scratch space for the harness runs of the determinism criterion.
  std::filesystem::path output_root = "results/acceptance";
  /// Criteria to run; empty means all of them.
  std::set<int> only;
};

inline constexpr int kCriterionCount = 13;

/// Runs the selected criteria in order and prints one line per criterion to
/// `out` as soon as it finishes.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

std::string format_line(const CriterionResult& r);

}  // namespace retstat::acceptance

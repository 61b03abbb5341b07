#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "retstat/config.hpp"
#include "retstat/error.hpp"
#include "retstat/interval.hpp"

namespace retstat {

/// An error inside one pipeline stage; the message is prefixed by the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunOptions {
  /// Directory under which `config.output` is created.
  std::filesystem::path output_root = "results";
  std::optional<std::uint64_t> seed_override;
  std::optional<unsigned> workers_override;
};

/// Output root from RETSTAT_OUTPUT_ROOT, falling back to "results".
std::filesystem::path default_output_root();

struct RunReport {
  nlohmann::json summary;  ///< deterministic numerical content
  nlohmann::json timings;  ///< wall-clock seconds per stage
  std::filesystem::path output_dir;
};

/// The target set of a config: a ball, or the dyadic cylinder of the given
/// depth containing the center.
IntervalSet target_set(const ExperimentConfig& cfg);

/// Runs the configured analyses and writes summary.json, timings.json and
/// the CSV artifacts. On failure a FAILED marker and the partial summary are
/// written before the StageError propagates.
RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

struct SweepRow {
  double radius = 0.0;
  double mu_U = 0.0;
  double ks_distance = 0.0;
  std::optional<std::uint64_t> short_return;
  double censored_fraction = 0.0;
  std::string error;  ///< empty on success
};

struct SweepTable {
  std::vector<SweepRow> rows;
  /// Spearman rank correlation of ks_distance against radius over the
  /// successful rows; positive when ks shrinks with r.
  double spearman = 0.0;
  std::filesystem::path output_dir;
};

/// One KS experiment per radius, each in its own subdirectory r<i>; writes
/// sweep.csv and sweep.json into the config's output directory.
SweepTable radius_sweep(const ExperimentConfig& cfg, const std::vector<double>& radii,
                        const RunOptions& options = {});

/// Branch partition and certificate of the configured induced system only.
nlohmann::json induce_report(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Spearman correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace retstat

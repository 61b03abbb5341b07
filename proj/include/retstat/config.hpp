#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "retstat/interval.hpp"

namespace retstat {

/// Evaluates a constant arithmetic expression: numbers, + - * / ^, unary
/// minus, parentheses, the constants `pi` and `e`, and sqrt/log/exp.
/// Throws ConfigError.
double parse_expression(std::string_view text);

/// Interval text whose endpoints are expressions, e.g. "[1/2, 1)".
Interval parse_interval_expr(std::string_view text);

enum class Analysis { ks, poisson, sandwich, certificate, hsv, decay };

std::string_view to_string(Analysis a);
Analysis parse_analysis(std::string_view name);

enum class MeasureSource { birkhoff, lebesgue };

/// One experiment, read from a flat `key = value` file.
///
/// Lines are `key = value`; `#` starts a comment. A block
/// `name { k = v, k2 = v2 }` (on one line or spread over several) is
/// flattened to the keys `name.k` and `name.k2`. Lists are written
/// `[a, b, c]`.
struct ExperimentConfig {
  std::string map_spec;
  std::uint64_t seed = 0;

  double center = 0.0;
  std::optional<double> radius;
  std::optional<int> cylinder_depth;

  std::optional<Interval> induce_domain;
  std::uint64_t induce_max_steps = 10'000'000;

  std::size_t samples = 20'000;
  std::uint64_t n_max = 10'000'000;
  std::uint64_t burn_in = 10'000;
  std::size_t streams = 8;
  unsigned workers = 0;
  std::string output = "experiment";

  std::set<Analysis> analyses;

  MeasureSource measure = MeasureSource::birkhoff;
  std::uint64_t measure_steps = 1'000'000;
  std::size_t measure_bins = 1024;

  std::uint64_t short_return_scan = 1'000;
  std::size_t short_return_grid = 4096;

  double poisson_t = 1.0;
  std::size_t poisson_windows = 10'000;

  double sandwich_epsilon = 0.05;
  std::uint64_t kac_entries = 100'000;

  std::uint64_t certificate_p_max = 20;
  std::size_t certificate_grid = 256;

  std::uint64_t hsv_N = 40;
  int hsv_depth = 8;
  std::size_t hsv_samples = 100'000;

  std::size_t decay_lags = 20;
  std::uint64_t decay_orbit = 4'000'000;

  /// Every key as written, in file order, for the report's config echo.
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(Analysis a) const { return analyses.count(a) != 0; }
};

/// Parses config text; `origin` names the source in error messages.
ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::string& path);

}  // namespace retstat

#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "retstat/interval.hpp"
#include "retstat/maps.hpp"
#include "retstat/measures.hpp"

namespace retstat {

/// One return (or hitting) time observation.
struct ReturnSample {
  double start = 0.0;
  std::uint64_t raw_time = 0;  ///< the cutoff when censored
  bool censored = false;
  double normalized = 0.0;  ///< raw_time * mu(U)
};

struct SamplingOptions {
  std::uint64_t burn_in = 10'000;
  std::size_t streams = 8;
  unsigned workers = 0;
  /// Global iteration budget over all streams; 0 picks a budget from the
  /// expected cost n_samples / mu(U).
  std::uint64_t max_total_steps = 0;
  /// Fresh start and burn-in for every sample instead of one orbit per stream.
  bool independent = false;
  /// Decorrelation steps between hitting-time samples along one orbit.
  std::uint64_t segment = 1'000;
};

/// Return times to U from successive entries of typical orbits into U.
std::vector<ReturnSample> sample_return_times(const PiecewiseMap& map, const IntervalSet& U,
                                              double mu_U, std::size_t n_samples,
                                              std::uint64_t n_max, std::uint64_t seed,
                                              const SamplingOptions& options = {});

/// Hitting times of U from mu-distributed starts.
std::vector<ReturnSample> sample_hitting_times(const PiecewiseMap& map, const IntervalSet& U,
                                               double mu_U, std::size_t n_samples,
                                               std::uint64_t n_max, std::uint64_t seed,
                                               const SamplingOptions& options = {});

/// Empirical survival function of the normalized times, compared with e^{-t}.
struct EDFReport {
  std::vector<double> jumps;            ///< distinct sorted normalized times
  std::vector<double> survival;         ///< S(t) at each jump (right value)
  std::vector<double> survival_before;  ///< S(t-) at each jump
  double ks_distance = 0.0;             ///< sup_t |S(t) - e^{-t}|
  double ks_location = 0.0;
  std::size_t n_effective = 0;
  double censored_fraction = 0.0;

  /// Right-continuous S(t) = fraction of times > t.
  double survival_at(double t) const;
  /// Left limit S(t-) = fraction of times >= t.
  double survival_left(double t) const;
};

EDFReport edf(std::span<const ReturnSample> samples);
/// EDF of plain normalized values (all uncensored).
EDFReport edf_from_values(std::span<const double> values);

/// Least first-return time over a grid of U with local refinement around the
/// smallest values. Throws Censored if every scanned point exceeds n_max_scan.
std::uint64_t short_return(const PiecewiseMap& map, const IntervalSet& U,
                           std::uint64_t n_max_scan, std::size_t grid);

struct HsvQuantities {
  std::uint64_t N = 0;
  int depth = 0;
  double mu_U = 0.0;
  double a_N = 0.0;
  double a_N_stderr = 0.0;
  double b_N = 0.0;
  double b_N_noise = 0.0;  ///< expected b_N from sampling noise alone
  double c_sup = 0.0;
  double c_noise = 0.0;
  std::uint64_t k_max = 0;
};

struct HsvOptions {
  SamplingOptions sampling;
  /// Largest k in the supremum defining c(U); 0 means ceil(10 / mu(U)).
  std::uint64_t k_max = 0;
};

/// Monte Carlo estimates of a_N(U), b_N(U) over the depth-d dyadic algebra,
/// and c(U) from paired return/hitting samples.
HsvQuantities hsv_quantities(const PiecewiseMap& map, const IntervalSet& U,
                             const EmpiricalMeasure& mu, std::uint64_t N, int partition_depth,
                             std::size_t n_mc, std::uint64_t seed, const HsvOptions& options = {});

struct SandwichInputs {
  double mu_U = 0.0;   ///< invariant mass of U under T
  double kac_c = 1.0;  ///< mean return time to X-hat (= 1 / mu(X-hat))
  std::uint64_t n_max = 10'000'000;
};

struct SandwichReport {
  bool holds = false;
  double lower_margin = 0.0;  ///< min over t of F(t) - (Fhat(t/(1-e/c)) - 2e - slack)
  double upper_margin = 0.0;  ///< min over t of Fhat(t/(1+e/c)) + 2e + slack - F(t)
  double worst_t = 0.0;
  double slack = 0.0;
  double epsilon = 0.0;
  double kac_c = 1.0;
  std::vector<ReturnSample> base;     ///< tau_U under T, normalized by mu(U)
  std::vector<ReturnSample> induced;  ///< tau-hat_U under T-hat, normalized by mu-hat(U)
  EDFReport base_edf;
  EDFReport induced_edf;
};

/// Compares the return-time law of U under T with the one under the first
/// return map to X-hat, both sampled along the same typical orbits.
SandwichReport sandwich_check(const PiecewiseMap& map, const IntervalSet& X_hat,
                              const IntervalSet& U, double epsilon, std::size_t n_samples,
                              std::uint64_t seed, const SandwichInputs& inputs,
                              const SamplingOptions& options = {});

struct VisitHistogram {
  std::vector<std::uint64_t> counts;  ///< counts[k] = windows with k visits
  std::uint64_t window = 0;
  std::uint64_t n_windows = 0;
  double mean = 0.0;
};

/// Visits to U in disjoint windows of round(t / mu_U) steps along typical orbits.
VisitHistogram visit_counts(const PiecewiseMap& map, const IntervalSet& U, double mu_U, double t,
                            std::size_t n_windows, std::uint64_t seed,
                            const SamplingOptions& options = {});

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

/// Pearson chi-square of a visit histogram against Poisson(t), with classes
/// 0, 1, ..., pooled-1 and ">= pooled".
ChiSquare poisson_gof(const VisitHistogram& hist, double t, std::size_t pooled = 3);

struct ChebyshevResult {
  bool ok = true;
  double worst_t = 0.0;
  double worst_value = 0.0;  ///< sup of t * S(t-)
  double bound = 0.0;        ///< 1 + 5 / sqrt(n)
};

ChebyshevResult chebyshev_check(const EDFReport& report);

/// Mean of the uncensored normalized times.
double mean_normalized(std::span<const ReturnSample> samples);

void write_samples_csv(std::ostream& out, std::span<const ReturnSample> samples);

}  // namespace retstat

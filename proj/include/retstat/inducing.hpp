#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "retstat/interval.hpp"
#include "retstat/maps.hpp"
#include "json.hpp"

namespace retstat {

/// Result of a return/hitting time search. When censored, `steps` holds the
/// cutoff and no iterate up to it entered the target.
struct ReturnTime {
  std::uint64_t steps = 0;
  bool censored = false;
  double landing = 0.0;  ///< T^steps(x) when not censored
};

/// Least n in [1, n_max] with T^n(x) in U (exact evaluation).
ReturnTime first_return_time(const PiecewiseMap& map, const IntervalSet& U, double x,
                             std::uint64_t n_max);

/// The first-return system (T-hat, X-hat).
struct InducedSystem {
  PiecewiseMap base;
  IntervalSet domain;
  std::uint64_t max_steps = 10'000'000;
};

struct InducedStep {
  double image;
  std::uint64_t time;
};

/// T-hat(x) and the return time n(x). Throws Censored past sys.max_steps.
InducedStep induced_step(const InducedSystem& sys, double x);

/// |(T^p)'(x)| by the chain rule along the orbit.
double orbit_derivative(const PiecewiseMap& map, double x, std::uint64_t p);

struct ReturnBranch {
  Interval domain;            ///< endpoints located to within the bisection tolerance
  std::uint64_t return_time;  ///< p
  Interval image;             ///< T^p of the innermost located points
  double inner_lo;            ///< leftmost point known to have return time p
  double inner_hi;            ///< rightmost point known to have return time p
};

struct BranchPartition {
  std::vector<ReturnBranch> branches;  ///< sorted by position
  /// Pieces of the domain whose return time exceeds p_max (or is censored).
  std::vector<Interval> remainder;
};

/// Partition of a single-interval domain into the level sets Z_p of the
/// return time, p <= p_max. Boundaries between grid samples with different
/// return times are located by bisection to `tol`.
BranchPartition return_branches(const InducedSystem& sys, std::uint64_t p_max, double tol = 1e-12,
                                std::size_t grid = 4096);

struct KacOptions {
  std::uint64_t burn_in = 10'000;
  std::size_t streams = 8;
  unsigned workers = 0;
  std::size_t batches = 64;
};

struct KacEstimate {
  double mean_return = 0.0;
  double standard_error = 0.0;
  std::uint64_t entries = 0;
  std::uint64_t censored = 0;
};

/// Mean first-return time to X-hat along typical orbits (Kac: -> 1/mu(X-hat)).
/// Standard error by batch means. Throws TooManyCensored above 1%.
KacEstimate kac_constant(const InducedSystem& sys, std::uint64_t n_entries, std::uint64_t seed,
                         const KacOptions& options = {});

struct MarkovNeighborhood {
  Interval U;
  std::uint64_t n;
};

/// Maximal interval U containing x on which T^n maps monotonically onto Y,
/// with n the least iterate such that T^n(x) lies in Y. `postcritical` is the
/// (finite) closure of the critical orbit; Y must be a component of its
/// complement in [0,1].
MarkovNeighborhood markov_neighborhood(const PiecewiseMap& map, double x, const Interval& Y,
                                       std::uint64_t n_max, std::span<const double> postcritical);

struct BranchCertificate {
  std::uint64_t return_time;
  Interval domain;
  double min_derivative;
  double max_derivative;
  double distortion;   ///< max / min of |T-hat'|
  double sup_weight;   ///< 1 / min |T-hat'|
  double variation;    ///< discrete total variation of 1/|T-hat'| on the grid
};

struct CertificateReport {
  double expansion_inf = 0.0;
  double distortion_K = 0.0;
  double variation_estimate = 0.0;
  std::vector<double> weight_tail;  ///< partial sums over p of sup_{Z_p} 1/|T-hat'|
  std::size_t branches_checked = 0;
  double koebe_variation_bound = 0.0;  ///< K (2 + log K)
  std::vector<BranchCertificate> rows;
};

/// Numerical evidence that the induced map is expanding with bounded
/// distortion and summable weights.
CertificateReport rmap_certificate(const InducedSystem& sys, std::uint64_t p_max,
                                   std::size_t grid, double tol = 1e-12);

nlohmann::json to_json(const CertificateReport& report);
nlohmann::json to_json(const BranchPartition& partition);

}  // namespace retstat

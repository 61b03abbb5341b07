#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "retstat/interval.hpp"
#include "retstat/maps.hpp"

namespace retstat {

enum class MeasureKind { birkhoff, ulam, analytic };

std::string_view to_string(MeasureKind kind);

/// A probability measure on [0,1], constant density inside each bin.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<double> bin_edges, std::vector<double> masses,
                   std::uint64_t n_samples, MeasureKind kind);

  /// Equal-width bins on [0,1].
  static EmpiricalMeasure from_masses(std::vector<double> masses, std::uint64_t n_samples,
                                      MeasureKind kind);
  static EmpiricalMeasure lebesgue(std::size_t n_bins);
  /// Bin masses of an absolutely continuous measure with the given CDF.
  static EmpiricalMeasure from_cdf(const std::function<double(double)>& cdf, std::size_t n_bins);

  const std::vector<double>& bin_edges() const { return edges_; }
  const std::vector<double>& masses() const { return masses_; }
  std::size_t n_bins() const { return masses_.size(); }
  std::uint64_t n_samples() const { return n_samples_; }
  MeasureKind kind() const { return kind_; }

  std::size_t bin_of(double x) const;
  double density(std::size_t bin) const;
  /// Mass of an interval, interpolating linearly inside partially covered bins.
  double mass(const Interval& iv) const;
  double mass(const IntervalSet& set) const;
  /// Integral of a per-bin observable.
  double integrate(std::span<const double> per_bin) const;

 private:
  std::vector<double> edges_;
  std::vector<double> masses_;
  std::uint64_t n_samples_;
  MeasureKind kind_;
};

/// Sum of |m1 - m2| over bins; the measures must share bin edges.
double l1_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// Normalized orbit histogram of T^k(x0), burn_in <= k < burn_in + n.
EmpiricalMeasure birkhoff_measure(const PiecewiseMap& map, double x0, std::uint64_t n,
                                  std::uint64_t burn_in, std::size_t n_bins,
                                  std::uint64_t seed = 0);

struct MassEstimate {
  double mass = 0.0;
  double standard_error = 0.0;
  std::uint64_t steps = 0;
};

struct BirkhoffOptions {
  std::uint64_t burn_in = 10'000;
  std::size_t streams = 8;
  unsigned workers = 0;
  std::size_t batches = 64;
};

/// Fraction of time typical orbits spend in U, over independently seeded
/// streams merged in stream order; batch-means standard error.
MassEstimate birkhoff_mass(const PiecewiseMap& map, const IntervalSet& U, std::uint64_t n,
                           std::uint64_t seed, const BirkhoffOptions& options = {});

/// Ulam discretization of the transfer operator: row i holds the fractions of
/// a uniform sample grid in bin i whose images land in each bin j.
class UlamOperator {
 public:
  struct Entry {
    std::uint32_t col;
    double value;
  };

  UlamOperator(std::size_t n_bins, std::vector<std::vector<Entry>> rows);

  std::size_t n_bins() const { return n_bins_; }
  const std::vector<Entry>& row(std::size_t i) const { return rows_.at(i); }
  double at(std::size_t i, std::size_t j) const;
  double row_sum(std::size_t i) const;
  /// Row vector times matrix: v P.
  std::vector<double> push_forward(std::span<const double> v) const;

  /// Dense CSV for n_bins <= 1024, (row,col,value) triplets above.
  void write_csv(std::ostream& out) const;

 private:
  std::size_t n_bins_;
  std::vector<std::vector<Entry>> rows_;
};

UlamOperator ulam_operator(const PiecewiseMap& map, std::size_t n_bins,
                           std::size_t samples_per_bin, unsigned workers = 0);

/// Left fixed vector of the operator by power iteration from uniform.
EmpiricalMeasure invariant_density(const UlamOperator& op, double tol, std::uint64_t max_iters);

/// A piecewise-constant observable on equal-width bins of [0,1].
struct BinnedObservable {
  std::vector<double> values;

  static BinnedObservable from_function(const std::function<double(double)>& f,
                                        std::size_t n_bins);
  double operator()(double x) const;
};

struct CorrelationEstimate {
  std::vector<double> values;  ///< C_0 .. C_{n_max}
  std::vector<double> noise;   ///< batch-means standard error of each C_n
};

/// C_n = <phi(T^{t+n} x) psi(T^t x)>_t - (int phi dmu)(int psi dmu), along one
/// typical orbit of length orbit_len after burn_in.
CorrelationEstimate correlation_sequence(const PiecewiseMap& map, const EmpiricalMeasure& mu,
                                         const BinnedObservable& phi, const BinnedObservable& psi,
                                         std::size_t n_max, std::uint64_t orbit_len,
                                         std::uint64_t seed, std::uint64_t burn_in = 10'000,
                                         std::size_t batches = 32);

struct DecayFit {
  double theta = 0.0;
  double r_squared = 0.0;
  std::size_t points_used = 0;
};

/// Least-squares fit of log|C_n| against n. With a noise vector the sequence
/// is truncated at the first n where |C_n| < 3 noise_n. Zero entries end the
/// usable range as well. Throws InsufficientDecay with fewer than 4 points.
DecayFit decay_rate(std::span<const double> C, std::span<const double> noise = {});

void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu);

}  // namespace retstat

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retstat/interval.hpp"
#include "retstat/rng.hpp"

namespace retstat {

/// One monotone piece of an interval map.
struct Branch {
  Interval domain;
  std::function<double(double)> value;
  std::function<double(double)> slope;
  /// +1 increasing, -1 decreasing.
  int orientation = 1;
};

/// A piecewise-monotone map of [0,1]. Immutable after construction.
///
/// Branch domains carry explicit endpoint closure so that every point of
/// [0,1] covered by some domain evaluates deterministically, including the
/// points of the singular set S. Evaluation never consults S; S is metadata
/// (branch endpoints and critical points) used by the inducing machinery.
class PiecewiseMap {
 public:
  PiecewiseMap(std::string label, std::vector<Branch> branches, std::vector<double> singular,
               std::vector<double> critical = {}, bool lossy = false);

  double evaluate(double x) const;
  double derivative(double x) const;
  double operator()(double x) const { return evaluate(x); }

  /// Index of the branch whose domain contains x.
  std::optional<std::size_t> branch_index(double x) const;
  const Branch& branch(std::size_t i) const { return branches_.at(i); }
  std::size_t branch_count() const { return branches_.size(); }

  const std::vector<double>& singular_set() const { return singular_; }
  const std::vector<double>& critical_set() const { return critical_; }
  bool on_singular_set(double x) const;
  const std::string& label() const { return label_; }

  /// True when floating evaluation is exact and therefore discards one or
  /// more low-order bits per step (doubling, tent, dyadic piecewise-linear).
  /// Long orbits of such maps collapse onto 0 unless fresh bits are supplied;
  /// see TypicalOrbit.
  bool lossy() const { return lossy_; }

 private:
  const Branch& branch_for(double x) const;

  std::string label_;
  std::vector<Branch> branches_;
  std::vector<double> singular_;
  std::vector<double> critical_;
  bool lossy_;
};

struct Orbit {
  double start = 0.0;
  std::vector<double> points;
  std::size_t length() const { return points.empty() ? 0 : points.size() - 1; }
};

/// points[0] = x and points[k+1] = T(points[k]) for k < n. Throws
/// OrbitHitsSingularSet when an iterate is not claimed by any branch.
Orbit orbit(const PiecewiseMap& map, double x, std::size_t n);

/// One row of a custom piecewise-linear map: x in [left, right) -> slope*x + intercept.
struct LinearPiece {
  double left, right, slope, intercept;
};

PiecewiseMap doubling_map();
PiecewiseMap tent_map();
PiecewiseMap logistic_map(double a);
/// x(1 + (2x)^alpha) on [0,1/2], 2x - 1 on (1/2,1].
PiecewiseMap lsv_map(double alpha);
/// The default piecewise-linear Markov map on quarters, or one built from rows.
PiecewiseMap piecewise_linear_map(std::span<const LinearPiece> pieces,
                                  std::string label = "piecewise_linear_markov");
PiecewiseMap piecewise_linear_markov_map();

/// Built-in constructor by name: doubling, tent, logistic, lsv_alpha,
/// piecewise_linear_markov. For the latter, params are flattened rows
/// (left, right, slope, intercept)...; empty params give the default map.
PiecewiseMap builtin(std::string_view name, std::span<const double> params);

/// Parses `name(p1,p2,...)` or a bare `name`.
PiecewiseMap parse_map_spec(std::string_view spec);

/// Forward orbit of the critical set, provided it is finite (every critical
/// orbit becomes periodic, by exact equality, within max_steps).
std::optional<std::vector<double>> finite_critical_orbit(const PiecewiseMap& map,
                                                         std::size_t max_steps = 64);

/// Solves branch(i).value(u) = y by bisection; y must lie in the closed image.
std::optional<double> branch_preimage(const PiecewiseMap& map, std::size_t branch, double y);

/// Closed image [min, max] of a branch (endpoint values).
Interval branch_image(const PiecewiseMap& map, std::size_t branch);

/// A mu-typical orbit generator for sampling.
///
/// For lossy maps each step returns T(x + d) where d is uniform on the
/// floating-point cell below x, implemented as T(x) + |T'(x)| * d. This is
/// the orbit of a point drawn uniformly from the cell of x, which refills the
/// bits that exact doubling shifts out. For other maps the step is plain
/// evaluation and the generator is untouched.
class TypicalOrbit {
 public:
  TypicalOrbit(const PiecewiseMap& map, double x0, CounterRng rng);

  double step();
  double position() const { return x_; }
  void advance(std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) step();
  }

 private:
  const PiecewiseMap* map_;
  double x_;
  CounterRng rng_;
};

/// A seeded start point in [1e-6, 1), away from a neutral fixed point at 0.
double random_start(CounterRng& rng);

}  // namespace retstat

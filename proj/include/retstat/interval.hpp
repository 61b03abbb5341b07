#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace retstat {

/// An interval of the real line with explicit endpoint closure. Defaults to
/// the half-open [lo, hi) used throughout for branch domains and balls.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = true;
  bool hi_closed = false;

  static Interval half_open(double lo, double hi) { return {lo, hi, true, false}; }
  static Interval closed(double lo, double hi) { return {lo, hi, true, true}; }
  static Interval open(double lo, double hi) { return {lo, hi, false, false}; }
  static Interval left_open(double lo, double hi) { return {lo, hi, false, true}; }

  bool contains(double x) const {
    if (x < lo || x > hi) return false;
    if (x == lo && !lo_closed) return false;
    if (x == hi && !hi_closed) return false;
    return true;
  }
  bool empty() const { return hi < lo || (hi == lo && !(lo_closed && hi_closed)); }
  double length() const { return empty() ? 0.0 : hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }

  /// "[a,b)", "(a,b]", ... with round-trip precision.
  std::string to_string() const;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Parses "[a,b)", "(a,b]", "[a,b]" or "(a,b)". Throws ConfigError.
Interval parse_interval(std::string_view text);

/// A finite union of sorted, pairwise disjoint intervals in [0,1].
class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(std::vector<Interval> components);
  IntervalSet(Interval single) : IntervalSet(std::vector<Interval>{single}) {}  // NOLINT

  /// The ball U_r(z) = [z - r, z + r), clipped to [0,1].
  static IntervalSet ball(double center, double radius);
  static IntervalSet unit() { return IntervalSet(Interval::closed(0.0, 1.0)); }

  bool contains(double x) const;
  const std::vector<Interval>& components() const { return components_; }
  double total_length() const { return total_length_; }
  bool empty() const { return components_.empty(); }
  /// True when every component of `inner` lies inside some component here.
  bool includes(const IntervalSet& inner) const;
  std::string to_string() const;

 private:
  std::vector<Interval> components_;
  double total_length_ = 0.0;
};

}  // namespace retstat

#include "retstat/interval.hpp"

#include <algorithm>

#include "retstat/csv.hpp"
#include "retstat/error.hpp"

namespace retstat {

std::string Interval::to_string() const {
  return std::string(lo_closed ? "[" : "(") + format_double(lo) + "," + format_double(hi) +
         (hi_closed ? "]" : ")");
}

Interval parse_interval(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.size() < 5) throw ConfigError("malformed interval: '" + std::string(text) + "'");
  const char open = text.front();
  const char close = text.back();
  if ((open != '[' && open != '(') || (close != ']' && close != ')'))
    throw ConfigError("interval must look like [a,b) or (a,b]: '" + std::string(text) + "'");
  const auto body = text.substr(1, text.size() - 2);
  const auto comma = body.find(',');
  if (comma == std::string_view::npos || body.find(',', comma + 1) != std::string_view::npos)
    throw ConfigError("interval needs exactly two endpoints: '" + std::string(text) + "'");
  Interval iv{parse_double(body.substr(0, comma)), parse_double(body.substr(comma + 1)),
              open == '[', close == ']'};
  if (!(iv.lo <= iv.hi)) throw ConfigError("interval endpoints out of order: " + iv.to_string());
  return iv;
}

IntervalSet::IntervalSet(std::vector<Interval> components) {
  components.erase(std::remove_if(components.begin(), components.end(),
                                  [](const Interval& iv) { return iv.empty(); }),
                   components.end());
  std::sort(components.begin(), components.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (c.lo < 0.0 || c.hi > 1.0)
      throw InvalidParameter("interval outside [0,1]: " + c.to_string());
    if (i > 0) {
      const auto& prev = components[i - 1];
      if (prev.hi > c.lo || (prev.hi == c.lo && prev.hi_closed && c.lo_closed))
        throw InvalidParameter("overlapping intervals: " + prev.to_string() + " and " +
                               c.to_string());
    }
    total_length_ += c.length();
  }
  components_ = std::move(components);
}

IntervalSet IntervalSet::ball(double center, double radius) {
  if (!(radius > 0.0)) throw InvalidParameter("ball radius must be positive");
  const double lo = std::max(0.0, center - radius);
  const double hi = std::min(1.0, center + radius);
  // A ball reaching the right end of the space keeps the point 1.
  return IntervalSet(Interval{lo, hi, true, hi == 1.0});
}

bool IntervalSet::contains(double x) const {
  // Last component whose lo is <= x.
  auto it = std::upper_bound(components_.begin(), components_.end(), x,
                             [](double v, const Interval& iv) { return v < iv.lo; });
  if (it == components_.begin()) return false;
  return std::prev(it)->contains(x);
}

bool IntervalSet::includes(const IntervalSet& inner) const {
  for (const auto& c : inner.components()) {
    const bool inside = std::any_of(components_.begin(), components_.end(), [&](const Interval& o) {
      const bool lo_ok = o.lo < c.lo || (o.lo == c.lo && (o.lo_closed || !c.lo_closed));
      const bool hi_ok = c.hi < o.hi || (o.hi == c.hi && (o.hi_closed || !c.hi_closed));
      return lo_ok && hi_ok;
    });
    if (!inside) return false;
  }
  return true;
}

std::string IntervalSet::to_string() const {
  if (components_.empty()) return "{}";
  std::string out;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (i) out += " u ";
    out += components_[i].to_string();
  }
  return out;
}

}  // namespace retstat

#include "retstat/maps.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "retstat/csv.hpp"
#include "retstat/error.hpp"

namespace retstat {

namespace {

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool is_power_of_two(double v) {
  int exp = 0;
  return v != 0.0 && std::frexp(std::fabs(v), &exp) == 0.5;
}

bool is_coarse_dyadic(double v) { return std::ldexp(v, 8) == std::trunc(std::ldexp(v, 8)); }

}  // namespace

PiecewiseMap::PiecewiseMap(std::string label, std::vector<Branch> branches,
                           std::vector<double> singular, std::vector<double> critical, bool lossy)
    : label_(std::move(label)),
      branches_(std::move(branches)),
      singular_(sorted_unique(std::move(singular))),
      critical_(sorted_unique(std::move(critical))),
      lossy_(lossy) {
  if (branches_.empty()) throw InvalidParameter("a map needs at least one branch");
  std::sort(branches_.begin(), branches_.end(),
            [](const Branch& a, const Branch& b) { return a.domain.lo < b.domain.lo; });
  if (branches_.front().domain.lo != 0.0 || branches_.back().domain.hi != 1.0)
    throw InvalidParameter("branch domains must cover [0,1]");
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto& b = branches_[i];
    if (!(b.domain.lo < b.domain.hi)) throw InvalidParameter("empty branch domain");
    if (!b.value || !b.slope) throw InvalidParameter("branch without formula");
    if (b.orientation != 1 && b.orientation != -1)
      throw InvalidParameter("branch orientation must be +1 or -1");
    if (i > 0) {
      const auto& prev = branches_[i - 1].domain;
      if (prev.hi != b.domain.lo) throw InvalidParameter("branch domains leave a gap");
      if (prev.hi_closed && b.domain.lo_closed)
        throw InvalidParameter("branch domains overlap at " + format_double(prev.hi));
    }
  }
}

std::optional<std::size_t> PiecewiseMap::branch_index(double x) const {
  auto it = std::upper_bound(branches_.begin(), branches_.end(), x,
                             [](double v, const Branch& b) { return v < b.domain.lo; });
  // x may sit on the shared endpoint owned by the left neighbour.
  for (int back = 1; back <= 2 && it != branches_.begin(); ++back) {
    --it;
    if (it->domain.contains(x)) return static_cast<std::size_t>(it - branches_.begin());
  }
  return std::nullopt;
}

const Branch& PiecewiseMap::branch_for(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidParameter("point outside [0,1]: " + format_double(x));
  const auto i = branch_index(x);
  if (!i) throw PointOnSingularSet(x);
  return branches_[*i];
}

double PiecewiseMap::evaluate(double x) const { return branch_for(x).value(x); }

double PiecewiseMap::derivative(double x) const { return branch_for(x).slope(x); }

bool PiecewiseMap::on_singular_set(double x) const {
  return std::binary_search(singular_.begin(), singular_.end(), x);
}

Orbit orbit(const PiecewiseMap& map, double x, std::size_t n) {
  Orbit o;
  o.start = x;
  o.points.reserve(n + 1);
  o.points.push_back(x);
  for (std::size_t k = 0; k < n; ++k) {
    try {
      x = map.evaluate(x);
    } catch (const PointOnSingularSet&) {
      throw OrbitHitsSingularSet(k, x);
    }
    o.points.push_back(x);
  }
  return o;
}

PiecewiseMap doubling_map() {
  std::vector<Branch> b{
      {Interval::half_open(0.0, 0.5), [](double x) { return 2.0 * x; },
       [](double) { return 2.0; }, 1},
      {Interval::closed(0.5, 1.0), [](double x) { return 2.0 * x - 1.0; },
       [](double) { return 2.0; }, 1},
  };
  return PiecewiseMap("doubling", std::move(b), {0.0, 0.5, 1.0}, {}, true);
}

PiecewiseMap tent_map() {
  std::vector<Branch> b{
      {Interval::half_open(0.0, 0.5), [](double x) { return 2.0 * x; },
       [](double) { return 2.0; }, 1},
      {Interval::closed(0.5, 1.0), [](double x) { return 2.0 * (1.0 - x); },
       [](double) { return -2.0; }, -1},
  };
  return PiecewiseMap("tent", std::move(b), {0.0, 0.5, 1.0}, {}, true);
}

PiecewiseMap logistic_map(double a) {
  if (!(a > 0.0 && a <= 4.0)) throw InvalidParameter("logistic parameter must lie in (0,4]");
  auto value = [a](double x) { return a * x * (1.0 - x); };
  auto slope = [a](double x) { return a * (1.0 - 2.0 * x); };
  std::vector<Branch> b{
      {Interval::half_open(0.0, 0.5), value, slope, 1},
      {Interval::closed(0.5, 1.0), value, slope, -1},
  };
  return PiecewiseMap("logistic(" + format_double(a) + ")", std::move(b), {0.0, 0.5, 1.0}, {0.5});
}

PiecewiseMap lsv_map(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("lsv_alpha needs alpha in (0,1)");
  std::vector<Branch> b{
      {Interval::closed(0.0, 0.5),
       [alpha](double x) { return x * (1.0 + std::pow(2.0 * x, alpha)); },
       [alpha](double x) { return 1.0 + (1.0 + alpha) * std::pow(2.0 * x, alpha); }, 1},
      {Interval::left_open(0.5, 1.0), [](double x) { return 2.0 * x - 1.0; },
       [](double) { return 2.0; }, 1},
  };
  return PiecewiseMap("lsv_alpha(" + format_double(alpha) + ")", std::move(b), {0.0, 0.5, 1.0});
}

PiecewiseMap piecewise_linear_map(std::span<const LinearPiece> pieces, std::string label) {
  if (pieces.empty()) throw InvalidParameter("piecewise-linear map needs at least one row");
  std::vector<LinearPiece> rows(pieces.begin(), pieces.end());
  std::sort(rows.begin(), rows.end(),
            [](const LinearPiece& a, const LinearPiece& b) { return a.left < b.left; });
  std::vector<Branch> branches;
  std::vector<double> singular;
  bool lossy = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r.slope == 0.0) throw InvalidParameter("piecewise-linear row with zero slope");
    const double y0 = r.slope * r.left + r.intercept;
    const double y1 = r.slope * r.right + r.intercept;
    constexpr double slack = 1e-12;
    if (std::min(y0, y1) < -slack || std::max(y0, y1) > 1.0 + slack)
      throw InvalidParameter("piecewise-linear row maps outside [0,1]");
    const bool last = i + 1 == rows.size();
    branches.push_back({Interval{r.left, r.right, true, last && r.right == 1.0},
                        [r](double x) { return std::clamp(r.slope * x + r.intercept, 0.0, 1.0); },
                        [r](double) { return r.slope; }, r.slope > 0 ? 1 : -1});
    singular.push_back(r.left);
    singular.push_back(r.right);
    lossy = lossy && is_power_of_two(r.slope) && is_coarse_dyadic(r.intercept);
  }
  return PiecewiseMap(std::move(label), std::move(branches), std::move(singular), {}, lossy);
}

PiecewiseMap piecewise_linear_markov_map() {
  const LinearPiece rows[] = {
      {0.0, 0.25, 4.0, 0.0},
      {0.25, 0.5, 2.0, -0.5},
      {0.5, 1.0, 2.0, -1.0},
  };
  return piecewise_linear_map(rows);
}

PiecewiseMap builtin(std::string_view name, std::span<const double> params) {
  auto expect = [&](std::size_t n) {
    if (params.size() != n)
      throw InvalidParameter(std::string(name) + " expects " + std::to_string(n) +
                             " parameter(s), got " + std::to_string(params.size()));
  };
  if (name == "doubling") {
    expect(0);
    return doubling_map();
  }
  if (name == "tent") {
    expect(0);
    return tent_map();
  }
  if (name == "logistic") {
    expect(1);
    return logistic_map(params[0]);
  }
  if (name == "lsv_alpha") {
    expect(1);
    return lsv_map(params[0]);
  }
  if (name == "piecewise_linear_markov") {
    if (params.empty()) return piecewise_linear_markov_map();
    if (params.size() % 4 != 0)
      throw InvalidParameter("piecewise_linear_markov rows need 4 numbers each");
    std::vector<LinearPiece> rows;
    for (std::size_t i = 0; i < params.size(); i += 4)
      rows.push_back({params[i], params[i + 1], params[i + 2], params[i + 3]});
    return piecewise_linear_map(rows);
  }
  throw UnknownMap(std::string(name));
}

PiecewiseMap parse_map_spec(std::string_view spec) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  spec = trim(spec);
  const auto open = spec.find('(');
  if (open == std::string_view::npos) return builtin(spec, {});
  if (spec.back() != ')') throw InvalidParameter("map spec must end with ')': " + std::string(spec));
  const auto name = trim(spec.substr(0, open));
  auto body = trim(spec.substr(open + 1, spec.size() - open - 2));
  std::vector<double> params;
  while (!body.empty()) {
    const auto comma = body.find(',');
    const auto token = body.substr(0, comma);
    try {
      params.push_back(parse_double(token));
    } catch (const ConfigError& e) {
      throw InvalidParameter(e.what());
    }
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  return builtin(name, params);
}

std::optional<std::vector<double>> finite_critical_orbit(const PiecewiseMap& map,
                                                         std::size_t max_steps) {
  std::set<double> out;
  for (double c : map.critical_set()) {
    std::set<double> seen;
    double x = c;
    bool closed = false;
    for (std::size_t k = 0; k <= max_steps; ++k) {
      if (!seen.insert(x).second) {
        closed = true;
        break;
      }
      x = map.evaluate(x);
    }
    if (!closed) return std::nullopt;
    out.insert(seen.begin(), seen.end());
  }
  return std::vector<double>(out.begin(), out.end());
}

Interval branch_image(const PiecewiseMap& map, std::size_t i) {
  const auto& b = map.branch(i);
  const double a = b.value(b.domain.lo);
  const double c = b.value(b.domain.hi);
  return Interval::closed(std::min(a, c), std::max(a, c));
}

std::optional<double> branch_preimage(const PiecewiseMap& map, std::size_t i, double y) {
  const auto& b = map.branch(i);
  if (!branch_image(map, i).contains(y)) return std::nullopt;
  double lo = b.domain.lo;
  double hi = b.domain.hi;
  // Invariant: orientation * (f(lo) - y) <= 0 <= orientation * (f(hi) - y).
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (b.orientation * (b.value(mid) - y) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  // Pick whichever bracket end is closer in value.
  return std::fabs(b.value(lo) - y) <= std::fabs(b.value(hi) - y) ? lo : hi;
}

TypicalOrbit::TypicalOrbit(const PiecewiseMap& map, double x0, CounterRng rng)
    : map_(&map), x_(x0), rng_(rng) {
  if (!(x0 >= 0.0 && x0 <= 1.0)) throw InvalidParameter("orbit start outside [0,1]");
}

double TypicalOrbit::step() {
  double y = map_->evaluate(x_);
  if (map_->lossy()) {
    const double jittered = y + std::fabs(map_->derivative(x_)) * rng_.uniform() * 0x1.0p-53;
    if (jittered < 1.0) y = jittered;
  }
  x_ = y;
  return y;
}

double random_start(CounterRng& rng) { return 1e-6 + (1.0 - 1e-6) * rng.uniform(); }

}  // namespace retstat

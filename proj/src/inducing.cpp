#include "retstat/inducing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "retstat/error.hpp"
#include "retstat/parallel.hpp"

namespace retstat {

ReturnTime first_return_time(const PiecewiseMap& map, const IntervalSet& U, double x,
                             std::uint64_t n_max) {
  if (n_max == 0) throw InvalidParameter("n_max must be positive");
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    try {
      x = map.evaluate(x);
    } catch (const PointOnSingularSet&) {
      throw OrbitHitsSingularSet(n - 1, x);
    }
    if (U.contains(x)) return {n, false, x};
  }
  return {n_max, true, x};
}

InducedStep induced_step(const InducedSystem& sys, double x) {
  if (!sys.domain.contains(x))
    throw InvalidParameter("induced_step: start point outside the inducing domain");
  const auto rt = first_return_time(sys.base, sys.domain, x, sys.max_steps);
  if (rt.censored) throw Censored(sys.max_steps);
  return {rt.landing, rt.steps};
}

double orbit_derivative(const PiecewiseMap& map, double x, std::uint64_t p) {
  double d = 1.0;
  for (std::uint64_t k = 0; k < p; ++k) {
    d *= std::fabs(map.derivative(x));
    x = map.evaluate(x);
  }
  return d;
}

namespace {

struct Boundary {
  double lo, hi;  // bracket: lo has class `left`, hi has class `right`
  std::uint64_t left, right;
};

class BranchScanner {
 public:
  BranchScanner(const InducedSystem& sys, std::uint64_t p_max, double tol)
      : sys_(sys), p_max_(p_max), tol_(tol) {}

  std::uint64_t classify(double x) const {
    const auto rt = first_return_time(sys_.base, sys_.domain, x, p_max_);
    return rt.censored ? p_max_ + 1 : rt.steps;
  }

  void resolve(double lo, std::uint64_t clo, double hi, std::uint64_t chi,
               std::vector<Boundary>& out) const {
    while (hi - lo > tol_) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi)
        throw ResolutionExceeded("return-time boundary near " + std::to_string(lo) +
                                 " cannot be resolved to the requested tolerance");
      const auto cm = classify(mid);
      if (cm == clo) {
        lo = mid;
      } else if (cm == chi) {
        hi = mid;
      } else {
        resolve(lo, clo, mid, cm, out);
        lo = mid;
        clo = cm;
      }
    }
    out.push_back({lo, hi, clo, chi});
  }

 private:
  const InducedSystem& sys_;
  std::uint64_t p_max_;
  double tol_;
};

}  // namespace

BranchPartition return_branches(const InducedSystem& sys, std::uint64_t p_max, double tol,
                                std::size_t grid) {
  if (sys.domain.components().size() != 1)
    throw InvalidParameter("return_branches needs a single-interval domain");
  if (!(tol > 0.0) || grid < 2) throw InvalidParameter("return_branches: bad tolerance or grid");
  const Interval dom = sys.domain.components().front();
  const BranchScanner scan(sys, p_max, tol);

  const double first = dom.lo_closed ? dom.lo : std::nextafter(dom.lo, dom.hi);
  const double last = dom.hi_closed ? dom.hi : std::nextafter(dom.hi, dom.lo);
  std::vector<double> xs(grid + 1);
  for (std::size_t i = 0; i <= grid; ++i)
    xs[i] = dom.lo + (dom.hi - dom.lo) * static_cast<double>(i) / static_cast<double>(grid);
  xs.front() = first;
  xs.back() = last;

  std::vector<std::uint64_t> cls(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) cls[i] = scan.classify(xs[i]);

  std::vector<Boundary> bounds;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i)
    if (cls[i] != cls[i + 1]) scan.resolve(xs[i], cls[i], xs[i + 1], cls[i + 1], bounds);

  BranchPartition out;
  auto emit = [&](double lo, bool lo_closed, double hi, bool hi_closed, std::uint64_t c,
                  double inner_lo, double inner_hi) {
    const Interval domain{lo, hi, lo_closed, hi_closed};
    if (c > p_max) {
      out.remainder.push_back(domain);
      return;
    }
    const double a = sys.base.evaluate(inner_lo);
    const double b = sys.base.evaluate(inner_hi);
    double ya = a, yb = b;
    for (std::uint64_t k = 1; k < c; ++k) {
      ya = sys.base.evaluate(ya);
      yb = sys.base.evaluate(yb);
    }
    out.branches.push_back({domain, c, Interval::closed(std::min(ya, yb), std::max(ya, yb)),
                            inner_lo, inner_hi});
  };

  double seg_lo = dom.lo;
  bool seg_lo_closed = dom.lo_closed;
  double inner_lo = first;
  std::uint64_t seg_class = cls.front();
  for (const auto& b : bounds) {
    const double cut = 0.5 * (b.lo + b.hi);
    emit(seg_lo, seg_lo_closed, cut, false, seg_class, inner_lo, b.lo);
    seg_lo = cut;
    seg_lo_closed = true;
    inner_lo = b.hi;
    seg_class = b.right;
  }
  emit(seg_lo, seg_lo_closed, dom.hi, dom.hi_closed, seg_class, inner_lo, last);
  return out;
}

KacEstimate kac_constant(const InducedSystem& sys, std::uint64_t n_entries, std::uint64_t seed,
                         const KacOptions& options) {
  if (n_entries < 100) throw InvalidParameter("kac_constant needs at least 100 entries");
  const std::size_t streams = std::max<std::size_t>(1, options.streams);
  const auto quota = split_evenly(n_entries, streams);
  std::vector<std::vector<std::uint64_t>> times(streams);
  std::vector<std::uint64_t> censored(streams, 0);

  for_each_task(streams, options.workers, [&](std::size_t s) {
    CounterRng rng(seed, stream_id("kac_constant", s));
    const double x0 = random_start(rng);
    TypicalOrbit walk(sys.base, x0, rng);
    walk.advance(options.burn_in);
    // Reach the domain first; the entry point starts the first excursion.
    std::uint64_t guard = 0;
    while (!sys.domain.contains(walk.position())) {
      walk.step();
      if (++guard > std::max<std::uint64_t>(10 * sys.max_steps, 1'000'000'000))
        throw TooFewEntries("orbit never enters the inducing domain");
    }
    auto& out = times[s];
    out.reserve(quota[s]);
    std::uint64_t recorded = 0;
    while (recorded < quota[s]) {
      std::uint64_t n = 0;
      bool cut = false;
      do {
        walk.step();
        ++n;
        if (n == sys.max_steps && !cut) {
          cut = true;
          ++censored[s];
        }
        if (n > std::max<std::uint64_t>(10 * sys.max_steps, 1'000'000'000))
          throw TooFewEntries("orbit stopped returning to the domain");
      } while (!sys.domain.contains(walk.position()));
      if (!cut) out.push_back(n);
      ++recorded;
    }
  });

  std::vector<std::uint64_t> all;
  all.reserve(n_entries);
  std::uint64_t n_censored = 0;
  for (std::size_t s = 0; s < streams; ++s) {
    all.insert(all.end(), times[s].begin(), times[s].end());
    n_censored += censored[s];
  }
  if (static_cast<double>(n_censored) > 0.01 * static_cast<double>(n_entries))
    throw TooManyCensored("kac_constant: " + std::to_string(n_censored) + " of " +
                          std::to_string(n_entries) + " returns censored");
  if (all.empty()) throw AllCensored();

  KacEstimate est;
  est.entries = all.size();
  est.censored = n_censored;
  long double sum = 0.0L;
  for (auto t : all) sum += static_cast<long double>(t);
  est.mean_return = static_cast<double>(sum / static_cast<long double>(all.size()));

  const std::size_t batches = std::min<std::size_t>(options.batches, all.size() / 2);
  const auto sizes = split_evenly(all.size(), batches);
  long double ss = 0.0L;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    long double bs = 0.0L;
    for (std::size_t i = 0; i < sizes[b]; ++i) bs += static_cast<long double>(all[pos + i]);
    pos += sizes[b];
    const long double dev = bs / static_cast<long double>(sizes[b]) - est.mean_return;
    ss += dev * dev;
  }
  est.standard_error =
      batches > 1 ? static_cast<double>(std::sqrt(ss / static_cast<long double>(batches - 1) /
                                                  static_cast<long double>(batches)))
                  : 0.0;
  return est;
}

MarkovNeighborhood markov_neighborhood(const PiecewiseMap& map, double x, const Interval& Y,
                                       std::uint64_t n_max, std::span<const double> postcritical) {
  if (!(Y.lo >= 0.0 && Y.hi <= 1.0 && Y.lo < Y.hi))
    throw InvalidParameter("markov_neighborhood: Y must be a nonempty interval in [0,1]");
  for (double c : postcritical) {
    if (c == x) throw InvalidParameter("markov_neighborhood: x lies on the critical orbit");
    if (c > Y.lo && c < Y.hi)
      throw InvalidParameter("markov_neighborhood: Y meets the critical orbit closure");
  }

  std::vector<double> path{x};
  std::uint64_t n = 0;
  for (std::uint64_t k = 1; k <= n_max; ++k) {
    path.push_back(map.evaluate(path.back()));
    if (Y.contains(path.back())) {
      n = k;
      break;
    }
  }
  if (n == 0) throw NoVisit("orbit misses Y within " + std::to_string(n_max) + " steps");

  double lo = Y.lo;
  double hi = Y.hi;
  for (std::uint64_t k = n; k-- > 0;) {
    const double xk = path[k];
    const auto b = map.branch_index(xk);
    if (!b) throw OrbitHitsSingularSet(k, xk);
    const auto img = branch_image(map, *b);
    if (lo < img.lo || hi > img.hi)
      throw PullbackDegenerate("pullback of Y leaves the image of the branch at step " +
                               std::to_string(k));
    const double u1 = *branch_preimage(map, *b, lo);
    const double u2 = *branch_preimage(map, *b, hi);
    lo = std::min(u1, u2);
    hi = std::max(u1, u2);
    const double scale = std::max({std::fabs(lo), std::fabs(hi), 1e-300});
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * scale || !(lo < xk && xk < hi))
      throw PullbackDegenerate("neighborhood collapsed below machine resolution at step " +
                               std::to_string(k));
  }
  return {Interval::open(lo, hi), n};
}

CertificateReport rmap_certificate(const InducedSystem& sys, std::uint64_t p_max,
                                   std::size_t grid, double tol) {
  if (grid < 2) throw InvalidParameter("rmap_certificate needs a grid of at least 2 points");
  const auto partition = return_branches(sys, p_max, tol);

  CertificateReport rep;
  rep.expansion_inf = std::numeric_limits<double>::infinity();
  rep.distortion_K = 1.0;
  std::vector<double> increments(p_max, 0.0);
  double total_variation = 0.0;
  double total_weight = 0.0;

  for (const auto& br : partition.branches) {
    BranchCertificate row{br.return_time, br.domain, std::numeric_limits<double>::infinity(), 0.0,
                          1.0, 0.0, 0.0};
    double prev_g = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(grid - 1);
      const double x = br.inner_lo + (br.inner_hi - br.inner_lo) * t;
      const double d = orbit_derivative(sys.base, x, br.return_time);
      row.min_derivative = std::min(row.min_derivative, d);
      row.max_derivative = std::max(row.max_derivative, d);
      const double g = 1.0 / d;
      if (i > 0) row.variation += std::fabs(g - prev_g);
      prev_g = g;
    }
    row.distortion = row.max_derivative / row.min_derivative;
    row.sup_weight = 1.0 / row.min_derivative;
    rep.expansion_inf = std::min(rep.expansion_inf, row.min_derivative);
    rep.distortion_K = std::max(rep.distortion_K, row.distortion);
    increments[br.return_time - 1] += row.sup_weight;
    total_variation += row.variation;
    total_weight += row.sup_weight;
    rep.rows.push_back(row);
  }
  rep.branches_checked = rep.rows.size();
  rep.variation_estimate = total_variation + 2.0 * total_weight;
  double acc = 0.0;
  for (double w : increments) {
    acc += w;
    rep.weight_tail.push_back(acc);
  }
  rep.koebe_variation_bound = rep.distortion_K * (2.0 + std::log(rep.distortion_K));
  return rep;
}

namespace {
nlohmann::json interval_json(const Interval& iv) {
  return {{"lo", iv.lo}, {"hi", iv.hi}, {"text", iv.to_string()}};
}
}  // namespace

nlohmann::json to_json(const CertificateReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"return_time", row.return_time},
                    {"domain", interval_json(row.domain)},
                    {"min_derivative", row.min_derivative},
                    {"max_derivative", row.max_derivative},
                    {"distortion", row.distortion},
                    {"sup_weight", row.sup_weight},
                    {"variation", row.variation}});
  }
  return {{"expansion_inf", r.expansion_inf},
          {"distortion_K", r.distortion_K},
          {"variation_estimate", r.variation_estimate},
          {"weight_tail", r.weight_tail},
          {"branches_checked", r.branches_checked},
          {"koebe_variation_bound", r.koebe_variation_bound},
          {"branches", rows}};
}

nlohmann::json to_json(const BranchPartition& p) {
  nlohmann::json branches = nlohmann::json::array();
  for (const auto& b : p.branches) {
    branches.push_back({{"return_time", b.return_time},
                        {"domain", interval_json(b.domain)},
                        {"image", interval_json(b.image)}});
  }
  nlohmann::json rest = nlohmann::json::array();
  for (const auto& iv : p.remainder) rest.push_back(interval_json(iv));
  return {{"branches", branches}, {"remainder", rest}};
}

}  // namespace retstat

#include "retstat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "retstat/csv.hpp"
#include "retstat/error.hpp"
#include "retstat/inducing.hpp"
#include "retstat/parallel.hpp"

namespace retstat {

namespace {

void check_target(const IntervalSet& U, double mu_U) {
  if (U.empty()) throw InvalidParameter("target set U is empty");
  if (!(mu_U > 0.0) || mu_U > 1.0) throw InvalidParameter("mu(U) must lie in (0,1]");
}

std::size_t stream_count(const SamplingOptions& o, std::size_t n_samples) {
  return std::max<std::size_t>(1, std::min(o.streams, n_samples));
}

std::uint64_t stream_budget(const SamplingOptions& o, std::size_t quota, double mu_U,
                            std::size_t streams) {
  if (o.max_total_steps != 0) return std::max<std::uint64_t>(1, o.max_total_steps / streams);
  const double expected = static_cast<double>(quota) / mu_U;
  return static_cast<std::uint64_t>(std::min(2e18, 50.0 * expected + 1e6));
}

ReturnSample make_sample(double start, std::uint64_t n, std::uint64_t n_max, double scale) {
  ReturnSample s;
  s.start = start;
  s.censored = n > n_max;
  s.raw_time = s.censored ? n_max : n;
  s.normalized = static_cast<double>(s.raw_time) * scale;
  return s;
}

/// Walks one typical orbit and records successive excursions between entries
/// into U. Optionally counts visits to X-hat along each excursion and the
/// position `offset` steps after each start.
struct ExcursionWalk {
  const IntervalSet& U;
  const IntervalSet* X_hat = nullptr;
  std::uint64_t offset = 0;
  bool want_image = false;

  struct Result {
    std::vector<double> starts;
    std::vector<std::uint64_t> steps;
    std::vector<std::uint64_t> hat_steps;
    std::vector<double> images;
  };

  Result run(const PiecewiseMap& map, CounterRng rng, std::uint64_t burn_in, std::size_t quota,
             std::uint64_t budget) const {
    Result r;
    r.starts.reserve(quota);
    r.steps.reserve(quota);
    if (want_image) r.images.assign(quota, 0.0);
    TypicalOrbit walk(map, random_start(rng), rng);
    walk.advance(burn_in);
    std::uint64_t used = 0;
    auto step = [&] {
      if (++used > budget)
        throw TooFewEntries("iteration budget of " + std::to_string(budget) +
                            " steps exhausted after " + std::to_string(r.starts.size()) +
                            " entries");
      return walk.step();
    };
    double x = walk.position();
    while (!U.contains(x)) x = step();

    std::deque<std::pair<std::size_t, std::uint64_t>> pending;
    std::uint64_t clock = 0;
    auto settle = [&](double y) {
      while (!pending.empty() && pending.front().second == clock) {
        r.images[pending.front().first] = y;
        pending.pop_front();
      }
    };
    for (std::size_t i = 0; i < quota; ++i) {
      r.starts.push_back(x);
      if (want_image) {
        pending.emplace_back(i, clock + offset);
        settle(x);
      }
      std::uint64_t n = 0, hat = 0;
      do {
        x = step();
        ++clock;
        ++n;
        if (X_hat != nullptr && X_hat->contains(x)) ++hat;
        if (want_image) settle(x);
      } while (!U.contains(x));
      r.steps.push_back(n);
      if (X_hat != nullptr) r.hat_steps.push_back(hat);
    }
    while (!pending.empty()) {
      x = step();
      ++clock;
      settle(x);
    }
    return r;
  }
};

/// Runs the excursion walk over the configured streams (or one independent
/// orbit per sample) and concatenates results in stream order.
ExcursionWalk::Result collect_excursions(const PiecewiseMap& map, const ExcursionWalk& walk,
                                         double mu_U, std::size_t n_samples, std::uint64_t seed,
                                         const char* stage, const SamplingOptions& o) {
  const bool independent = o.independent;
  const std::size_t tasks = independent ? n_samples : stream_count(o, n_samples);
  const auto quotas = independent ? std::vector<std::size_t>(n_samples, 1)
                                  : split_evenly(n_samples, tasks);
  const std::size_t budget_streams = independent ? 1 : tasks;
  std::vector<ExcursionWalk::Result> parts(tasks);
  for_each_task(tasks, o.workers, [&](std::size_t s) {
    const std::uint64_t budget = stream_budget(o, quotas[s], mu_U, budget_streams);
    parts[s] = walk.run(map, CounterRng(seed, stream_id(stage, s)), o.burn_in, quotas[s], budget);
  });
  ExcursionWalk::Result all;
  for (auto& p : parts) {
    all.starts.insert(all.starts.end(), p.starts.begin(), p.starts.end());
    all.steps.insert(all.steps.end(), p.steps.begin(), p.steps.end());
    all.hat_steps.insert(all.hat_steps.end(), p.hat_steps.begin(), p.hat_steps.end());
    all.images.insert(all.images.end(), p.images.begin(), p.images.end());
  }
  return all;
}

}  // namespace

std::vector<ReturnSample> sample_return_times(const PiecewiseMap& map, const IntervalSet& U,
                                              double mu_U, std::size_t n_samples,
                                              std::uint64_t n_max, std::uint64_t seed,
                                              const SamplingOptions& options) {
  check_target(U, mu_U);
  if (n_samples == 0) throw InvalidParameter("n_samples must be positive");
  const ExcursionWalk walk{U};
  const auto r = collect_excursions(map, walk, mu_U, n_samples, seed,
                                    options.independent ? "return_times_independent"
                                                        : "return_times",
                                    options);
  std::vector<ReturnSample> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < r.starts.size(); ++i)
    out.push_back(make_sample(r.starts[i], r.steps[i], n_max, mu_U));
  return out;
}

std::vector<ReturnSample> sample_hitting_times(const PiecewiseMap& map, const IntervalSet& U,
                                               double mu_U, std::size_t n_samples,
                                               std::uint64_t n_max, std::uint64_t seed,
                                               const SamplingOptions& options) {
  check_target(U, mu_U);
  if (n_samples == 0) throw InvalidParameter("n_samples must be positive");
  const bool independent = options.independent;
  const std::size_t tasks = independent ? n_samples : stream_count(options, n_samples);
  const auto quotas = independent ? std::vector<std::size_t>(n_samples, 1)
                                  : split_evenly(n_samples, tasks);
  const char* stage = independent ? "hitting_times_independent" : "hitting_times";
  std::vector<std::vector<ReturnSample>> parts(tasks);

  for_each_task(tasks, options.workers, [&](std::size_t s) {
    CounterRng rng(seed, stream_id(stage, s));
    TypicalOrbit walk(map, random_start(rng), rng);
    walk.advance(options.burn_in);
    auto& out = parts[s];
    out.reserve(quotas[s]);
    for (std::size_t i = 0; i < quotas[s]; ++i) {
      if (i > 0) walk.advance(options.segment);
      const double start = walk.position();
      std::uint64_t n = 0;
      bool hit = false;
      while (n < n_max) {
        ++n;
        if (U.contains(walk.step())) {
          hit = true;
          break;
        }
      }
      out.push_back(make_sample(start, hit ? n : n_max + 1, n_max, mu_U));
    }
  });

  std::vector<ReturnSample> out;
  out.reserve(n_samples);
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

double EDFReport::survival_at(double t) const {
  const auto it = std::upper_bound(jumps.begin(), jumps.end(), t);
  if (it == jumps.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - jumps.begin()) - 1];
}

double EDFReport::survival_left(double t) const {
  const auto it = std::lower_bound(jumps.begin(), jumps.end(), t);
  if (it == jumps.end()) return 0.0;
  return survival_before[static_cast<std::size_t>(it - jumps.begin())];
}

namespace {

EDFReport build_edf(std::vector<double> values, std::size_t total) {
  if (values.empty()) throw AllCensored();
  std::sort(values.begin(), values.end());
  EDFReport rep;
  const std::size_t n = values.size();
  const double dn = static_cast<double>(n);
  rep.n_effective = n;
  rep.censored_fraction = static_cast<double>(total - n) / static_cast<double>(total);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[j] == values[i]) ++j;
    const double t = values[i];
    const double before = static_cast<double>(n - i) / dn;
    const double after = static_cast<double>(n - j) / dn;
    rep.jumps.push_back(t);
    rep.survival_before.push_back(before);
    rep.survival.push_back(after);
    const double e = std::exp(-t);
    for (double s : {before, after}) {
      const double d = std::fabs(s - e);
      if (d > rep.ks_distance) {
        rep.ks_distance = d;
        rep.ks_location = t;
      }
    }
    i = j;
  }
  return rep;
}

}  // namespace

EDFReport edf(std::span<const ReturnSample> samples) {
  std::vector<double> values;
  values.reserve(samples.size());
  for (const auto& s : samples)
    if (!s.censored) values.push_back(s.normalized);
  if (samples.empty()) throw AllCensored();
  return build_edf(std::move(values), samples.size());
}

EDFReport edf_from_values(std::span<const double> values) {
  return build_edf(std::vector<double>(values.begin(), values.end()), values.size());
}

std::uint64_t short_return(const PiecewiseMap& map, const IntervalSet& U,
                           std::uint64_t n_max_scan, std::size_t grid) {
  if (U.empty()) throw InvalidParameter("short_return: empty set");
  if (grid < 2) throw InvalidParameter("short_return: grid needs at least two points");
  const std::uint64_t miss = n_max_scan + 1;
  auto time_at = [&](double x) {
    const auto rt = first_return_time(map, U, x, n_max_scan);
    return rt.censored ? miss : rt.steps;
  };

  std::uint64_t best = miss;
  for (const auto& c : U.components()) {
    if (c.empty()) continue;
    const double w = c.length();
    std::vector<double> xs;
    xs.reserve(grid + 2);
    if (c.lo_closed) xs.push_back(c.lo);
    for (std::size_t i = 0; i < grid; ++i)
      xs.push_back(c.lo + w * (static_cast<double>(i) + 0.5) / static_cast<double>(grid));
    if (c.hi_closed) xs.push_back(c.hi);
    std::vector<std::uint64_t> ts(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) ts[i] = time_at(xs[i]);

    // Local minima of the coarse scan, smallest first, each refined on a
    // dense subgrid spanning its two neighbouring cells.
    std::vector<std::size_t> minima;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const bool left_ok = i == 0 || ts[i] <= ts[i - 1];
      const bool right_ok = i + 1 == xs.size() || ts[i] <= ts[i + 1];
      if (left_ok && right_ok) minima.push_back(i);
      best = std::min(best, ts[i]);
    }
    std::stable_sort(minima.begin(), minima.end(),
                     [&](std::size_t a, std::size_t b) { return ts[a] < ts[b]; });
    if (minima.size() > 8) minima.resize(8);
    const std::size_t sub = 256;
    for (std::size_t m : minima) {
      const double a = m == 0 ? xs[m] : xs[m - 1];
      const double b = m + 1 == xs.size() ? xs[m] : xs[m + 1];
      for (std::size_t k = 1; k < sub; ++k) {
        const double x = a + (b - a) * static_cast<double>(k) / static_cast<double>(sub);
        if (c.contains(x)) best = std::min(best, time_at(x));
      }
    }
  }
  if (best > n_max_scan) throw Censored(n_max_scan);
  return best;
}

HsvQuantities hsv_quantities(const PiecewiseMap& map, const IntervalSet& U,
                             const EmpiricalMeasure& mu, std::uint64_t N, int partition_depth,
                             std::size_t n_mc, std::uint64_t seed, const HsvOptions& options) {
  if (partition_depth < 0 || partition_depth > 24)
    throw InvalidParameter("partition depth must lie in [0,24]");
  if (n_mc < 2) throw InvalidParameter("hsv_quantities needs at least two samples");
  HsvQuantities q;
  q.N = N;
  q.depth = partition_depth;
  q.mu_U = mu.mass(U);
  check_target(U, q.mu_U);
  q.k_max = options.k_max != 0 ? options.k_max
                               : static_cast<std::uint64_t>(std::ceil(10.0 / q.mu_U));

  ExcursionWalk walk{U};
  walk.offset = N;
  walk.want_image = true;
  auto sampling = options.sampling;
  sampling.independent = false;
  const auto r = collect_excursions(map, walk, q.mu_U, n_mc, seed, "hsv_returns", sampling);
  const double n = static_cast<double>(n_mc);

  std::uint64_t within = 0;
  for (auto s : r.steps)
    if (s <= N) ++within;
  q.a_N = static_cast<double>(within) / n;
  q.a_N_stderr = std::sqrt(q.a_N * (1.0 - q.a_N) / n);

  const std::size_t bins = std::size_t{1} << partition_depth;
  std::vector<double> image_mass(bins, 0.0);
  for (double y : r.images)
    image_mass[std::min<std::size_t>(static_cast<std::size_t>(y * static_cast<double>(bins)),
                                     bins - 1)] += 1.0 / n;
  double pos = 0.0, neg = 0.0;
  for (std::size_t j = 0; j < bins; ++j) {
    const double lo = static_cast<double>(j) / static_cast<double>(bins);
    const double hi = static_cast<double>(j + 1) / static_cast<double>(bins);
    const double target = mu.mass(Interval::half_open(lo, hi));
    const double d = image_mass[j] - target;
    (d > 0 ? pos : neg) += std::fabs(d);
    q.b_N_noise += 0.5 * std::sqrt(2.0 * target * (1.0 - target) / (M_PI * n));
  }
  q.b_N = std::max(pos, neg);

  const auto hits = sample_hitting_times(map, U, q.mu_U, n_mc, q.k_max, seed ^ 0x9e3779b97f4a7c15ULL,
                                         sampling);
  std::vector<std::uint64_t> ret(r.steps), hit;
  hit.reserve(hits.size());
  for (const auto& h : hits) hit.push_back(h.censored ? q.k_max + 1 : h.raw_time);
  std::sort(ret.begin(), ret.end());
  std::sort(hit.begin(), hit.end());
  // Survival at k changes only at observed times; scan the merged jump set.
  std::vector<std::uint64_t> ks;
  ks.push_back(0);
  for (auto t : ret)
    if (t <= q.k_max) ks.push_back(t);
  for (auto t : hit)
    if (t <= q.k_max) ks.push_back(t);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const double nh = static_cast<double>(hit.size());
  for (auto k : ks) {
    const auto above_r = static_cast<double>(ret.end() - std::upper_bound(ret.begin(), ret.end(), k));
    const auto above_h = static_cast<double>(hit.end() - std::upper_bound(hit.begin(), hit.end(), k));
    q.c_sup = std::max(q.c_sup, std::fabs(above_r / n - above_h / nh));
  }
  q.c_noise = std::sqrt(1.0 / n + 1.0 / nh);
  return q;
}

SandwichReport sandwich_check(const PiecewiseMap& map, const IntervalSet& X_hat,
                              const IntervalSet& U, double epsilon, std::size_t n_samples,
                              std::uint64_t seed, const SandwichInputs& inputs,
                              const SamplingOptions& options) {
  check_target(U, inputs.mu_U);
  if (!X_hat.includes(U)) throw InvalidParameter("sandwich_check: U must lie inside X-hat");
  if (!(epsilon > 0.0)) throw InvalidParameter("sandwich_check: epsilon must be positive");
  if (!(inputs.kac_c >= 1.0)) throw InvalidParameter("sandwich_check: Kac constant below 1");
  const double c = inputs.kac_c;
  const double delta = epsilon / c;
  if (delta >= 1.0) throw InvalidParameter("sandwich_check: epsilon / c must be below 1");

  ExcursionWalk walk{U};
  walk.X_hat = &X_hat;
  const auto r = collect_excursions(map, walk, inputs.mu_U, n_samples, seed, "sandwich", options);

  SandwichReport rep;
  rep.epsilon = epsilon;
  rep.kac_c = c;
  const double mu_hat = inputs.mu_U * c;
  for (std::size_t i = 0; i < r.starts.size(); ++i) {
    auto base = make_sample(r.starts[i], r.steps[i], inputs.n_max, inputs.mu_U);
    auto ind = make_sample(r.starts[i], r.hat_steps[i], inputs.n_max, mu_hat);
    // A censored base excursion censors its induced counterpart too.
    if (base.censored) {
      ind.censored = true;
      ind.raw_time = std::min(ind.raw_time, inputs.n_max);
      ind.normalized = static_cast<double>(ind.raw_time) * mu_hat;
    }
    rep.base.push_back(base);
    rep.induced.push_back(ind);
  }
  rep.base_edf = edf(rep.base);
  rep.induced_edf = edf(rep.induced);
  rep.slack = 3.0 / std::sqrt(static_cast<double>(rep.base_edf.n_effective));

  const auto& F = rep.base_edf;
  const auto& G = rep.induced_edf;
  std::vector<double> points(F.jumps);
  for (double s : G.jumps) {
    points.push_back(s * (1.0 - delta));
    points.push_back(s * (1.0 + delta));
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  const double band = 2.0 * epsilon + rep.slack;
  rep.lower_margin = std::numeric_limits<double>::infinity();
  rep.upper_margin = std::numeric_limits<double>::infinity();
  double worst = std::numeric_limits<double>::infinity();
  for (double t : points) {
    const double lo_arg = t / (1.0 - delta);
    const double hi_arg = t / (1.0 + delta);
    const double lower = std::min(F.survival_at(t) - (G.survival_at(lo_arg) - band),
                                  F.survival_left(t) - (G.survival_left(lo_arg) - band));
    const double upper = std::min(G.survival_at(hi_arg) + band - F.survival_at(t),
                                  G.survival_left(hi_arg) + band - F.survival_left(t));
    rep.lower_margin = std::min(rep.lower_margin, lower);
    rep.upper_margin = std::min(rep.upper_margin, upper);
    if (std::min(lower, upper) < worst) {
      worst = std::min(lower, upper);
      rep.worst_t = t;
    }
  }
  rep.holds = rep.lower_margin >= 0.0 && rep.upper_margin >= 0.0;
  return rep;
}

VisitHistogram visit_counts(const PiecewiseMap& map, const IntervalSet& U, double mu_U, double t,
                            std::size_t n_windows, std::uint64_t seed,
                            const SamplingOptions& options) {
  check_target(U, mu_U);
  if (!(t > 0.0)) throw InvalidParameter("visit_counts: t must be positive");
  if (n_windows == 0) throw InvalidParameter("visit_counts: no windows");
  VisitHistogram h;
  h.window = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(t / mu_U)));
  h.n_windows = n_windows;
  const std::size_t tasks = stream_count(options, n_windows);
  const auto quotas = split_evenly(n_windows, tasks);
  std::vector<std::vector<std::uint64_t>> parts(tasks);
  for_each_task(tasks, options.workers, [&](std::size_t s) {
    CounterRng rng(seed, stream_id("visit_counts", s));
    TypicalOrbit walk(map, random_start(rng), rng);
    walk.advance(options.burn_in);
    parts[s].reserve(quotas[s]);
    for (std::size_t w = 0; w < quotas[s]; ++w) {
      std::uint64_t visits = 0;
      for (std::uint64_t k = 0; k < h.window; ++k)
        if (U.contains(walk.step())) ++visits;
      parts[s].push_back(visits);
    }
  });
  std::uint64_t total = 0;
  for (const auto& p : parts)
    for (auto v : p) {
      if (v >= h.counts.size()) h.counts.resize(v + 1, 0);
      ++h.counts[v];
      total += v;
    }
  h.mean = static_cast<double>(total) / static_cast<double>(n_windows);
  return h;
}

ChiSquare poisson_gof(const VisitHistogram& hist, double t, std::size_t pooled) {
  if (pooled < 1) throw InvalidParameter("poisson_gof: need at least two classes");
  if (!(t > 0.0)) throw InvalidParameter("poisson_gof: t must be positive");
  const double n = static_cast<double>(hist.n_windows);
  ChiSquare out;
  double pmf = std::exp(-t), cum = 0.0;
  std::uint64_t seen = 0;
  for (std::size_t k = 0; k <= pooled; ++k) {
    double p;
    std::uint64_t observed;
    if (k < pooled) {
      p = pmf;
      observed = k < hist.counts.size() ? hist.counts[k] : 0;
      cum += pmf;
      pmf *= t / static_cast<double>(k + 1);
      seen += observed;
    } else {
      p = std::max(0.0, 1.0 - cum);
      observed = hist.n_windows - seen;
    }
    const double expected = n * p;
    if (expected > 0.0) {
      const double d = static_cast<double>(observed) - expected;
      out.statistic += d * d / expected;
    }
  }
  out.dof = static_cast<int>(pooled);
  out.p_value = boost::math::gamma_q(0.5 * out.dof, 0.5 * out.statistic);
  return out;
}

ChebyshevResult chebyshev_check(const EDFReport& report) {
  ChebyshevResult res;
  res.bound = 1.0 + 5.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, report.n_effective)));
  for (std::size_t i = 0; i < report.jumps.size(); ++i) {
    const double v = report.jumps[i] * report.survival_before[i];
    if (v > res.worst_value) {
      res.worst_value = v;
      res.worst_t = report.jumps[i];
    }
  }
  res.ok = res.worst_value <= res.bound;
  return res;
}

double mean_normalized(std::span<const ReturnSample> samples) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples)
    if (!s.censored) {
      sum += s.normalized;
      ++n;
    }
  if (n == 0) throw AllCensored();
  return sum / static_cast<double>(n);
}

void write_samples_csv(std::ostream& out, std::span<const ReturnSample> samples) {
  CsvWriter csv(out);
  csv.header({"start", "raw_time", "censored", "normalized"});
  for (const auto& s : samples)
    csv.field(s.start)
        .field(static_cast<unsigned long long>(s.raw_time))
        .field(s.censored ? 1 : 0)
        .field(s.normalized)
        .end_row();
}

}  // namespace retstat

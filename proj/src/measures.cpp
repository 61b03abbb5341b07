#include "retstat/measures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "retstat/csv.hpp"
#include "retstat/error.hpp"
#include "retstat/parallel.hpp"

namespace retstat {

std::string_view to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::birkhoff:
      return "birkhoff";
    case MeasureKind::ulam:
      return "ulam";
    case MeasureKind::analytic:
      return "analytic";
  }
  return "unknown";
}

namespace {

std::vector<double> uniform_edges(std::size_t n_bins) {
  std::vector<double> e(n_bins + 1);
  for (std::size_t i = 0; i <= n_bins; ++i)
    e[i] = static_cast<double>(i) / static_cast<double>(n_bins);
  return e;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> bin_edges, std::vector<double> masses,
                                   std::uint64_t n_samples, MeasureKind kind)
    : edges_(std::move(bin_edges)), masses_(std::move(masses)), n_samples_(n_samples), kind_(kind) {
  if (masses_.empty() || edges_.size() != masses_.size() + 1)
    throw InvalidParameter("measure needs one more edge than bins");
  if (edges_.front() != 0.0 || edges_.back() != 1.0 || !std::is_sorted(edges_.begin(), edges_.end()))
    throw InvalidParameter("bin edges must increase from 0 to 1");
  long double total = 0.0L;
  for (double m : masses_) {
    if (!(m >= 0.0)) throw InvalidParameter("negative or NaN bin mass");
    total += m;
  }
  if (!(total > 0.0L)) throw InvalidParameter("measure with zero total mass");
  for (double& m : masses_) m = static_cast<double>(m / total);
}

EmpiricalMeasure EmpiricalMeasure::from_masses(std::vector<double> masses, std::uint64_t n_samples,
                                               MeasureKind kind) {
  auto edges = uniform_edges(masses.size());
  return EmpiricalMeasure(std::move(edges), std::move(masses), n_samples, kind);
}

EmpiricalMeasure EmpiricalMeasure::lebesgue(std::size_t n_bins) {
  return from_masses(std::vector<double>(n_bins, 1.0), 0, MeasureKind::analytic);
}

EmpiricalMeasure EmpiricalMeasure::from_cdf(const std::function<double(double)>& cdf,
                                            std::size_t n_bins) {
  const auto edges = uniform_edges(n_bins);
  std::vector<double> masses(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) masses[i] = cdf(edges[i + 1]) - cdf(edges[i]);
  return EmpiricalMeasure(edges, std::move(masses), 0, MeasureKind::analytic);
}

std::size_t EmpiricalMeasure::bin_of(double x) const {
  auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
  if (it == edges_.begin()) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(it - edges_.begin()) - 1,
                               masses_.size() - 1);
}

double EmpiricalMeasure::density(std::size_t bin) const {
  return masses_.at(bin) / (edges_[bin + 1] - edges_[bin]);
}

double EmpiricalMeasure::mass(const Interval& iv) const {
  if (iv.empty()) return 0.0;
  const double lo = std::max(0.0, iv.lo);
  const double hi = std::min(1.0, iv.hi);
  if (!(lo < hi)) return 0.0;
  double total = 0.0;
  for (std::size_t b = bin_of(lo); b < masses_.size() && edges_[b] < hi; ++b) {
    const double a = std::max(lo, edges_[b]);
    const double c = std::min(hi, edges_[b + 1]);
    if (c > a) total += masses_[b] * (c - a) / (edges_[b + 1] - edges_[b]);
  }
  return total;
}

double EmpiricalMeasure::mass(const IntervalSet& set) const {
  double total = 0.0;
  for (const auto& c : set.components()) total += mass(c);
  return total;
}

double EmpiricalMeasure::integrate(std::span<const double> per_bin) const {
  // per_bin lives on its own equal-width bins; integrate bin by bin under
  // this measure's piecewise-constant density.
  const std::size_t m = per_bin.size();
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double lo = static_cast<double>(k) / static_cast<double>(m);
    const double hi = static_cast<double>(k + 1) / static_cast<double>(m);
    total += per_bin[k] * mass(Interval::half_open(lo, hi));
  }
  return total;
}

double l1_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.bin_edges() != b.bin_edges()) throw InvalidParameter("l1_distance: different bins");
  double d = 0.0;
  for (std::size_t i = 0; i < a.n_bins(); ++i) d += std::fabs(a.masses()[i] - b.masses()[i]);
  return d;
}

EmpiricalMeasure birkhoff_measure(const PiecewiseMap& map, double x0, std::uint64_t n,
                                  std::uint64_t burn_in, std::size_t n_bins, std::uint64_t seed) {
  if (n == 0 || n_bins == 0) throw InvalidParameter("birkhoff_measure: empty orbit or histogram");
  std::vector<std::uint64_t> counts(n_bins, 0);
  TypicalOrbit walk(map, x0, CounterRng(seed, stream_id("birkhoff_measure", 0)));
  walk.advance(burn_in);
  const double scale = static_cast<double>(n_bins);
  for (std::uint64_t k = 0; k < n; ++k) {
    const double x = walk.position();
    const auto b = std::min<std::size_t>(static_cast<std::size_t>(x * scale), n_bins - 1);
    ++counts[b];
    walk.step();
  }
  std::vector<double> masses(counts.begin(), counts.end());
  return EmpiricalMeasure::from_masses(std::move(masses), n, MeasureKind::birkhoff);
}

MassEstimate birkhoff_mass(const PiecewiseMap& map, const IntervalSet& U, std::uint64_t n,
                           std::uint64_t seed, const BirkhoffOptions& options) {
  const std::size_t streams = std::max<std::size_t>(1, options.streams);
  const std::size_t per_stream_batches = std::max<std::size_t>(2, options.batches / streams);
  if (n < streams * per_stream_batches) throw InvalidParameter("birkhoff_mass: orbit too short");
  const auto lengths = split_evenly(n, streams);
  std::vector<std::vector<std::uint64_t>> hits(streams);

  for_each_task(streams, options.workers, [&](std::size_t s) {
    CounterRng rng(seed, stream_id("birkhoff_mass", s));
    TypicalOrbit walk(map, random_start(rng), rng);
    walk.advance(options.burn_in);
    const auto chunks = split_evenly(lengths[s], per_stream_batches);
    hits[s].assign(per_stream_batches, 0);
    for (std::size_t b = 0; b < per_stream_batches; ++b)
      for (std::size_t k = 0; k < chunks[b]; ++k)
        if (U.contains(walk.step())) ++hits[s][b];
  });

  std::uint64_t total = 0;
  std::vector<double> fractions;
  for (std::size_t s = 0; s < streams; ++s) {
    const auto chunks = split_evenly(lengths[s], per_stream_batches);
    for (std::size_t b = 0; b < per_stream_batches; ++b) {
      total += hits[s][b];
      fractions.push_back(static_cast<double>(hits[s][b]) / static_cast<double>(chunks[b]));
    }
  }
  MassEstimate est;
  est.steps = n;
  est.mass = static_cast<double>(total) / static_cast<double>(n);
  double ss = 0.0;
  for (double f : fractions) ss += (f - est.mass) * (f - est.mass);
  const double k = static_cast<double>(fractions.size());
  est.standard_error = std::sqrt(ss / (k - 1.0) / k);
  return est;
}

UlamOperator::UlamOperator(std::size_t n_bins, std::vector<std::vector<Entry>> rows)
    : n_bins_(n_bins), rows_(std::move(rows)) {
  if (rows_.size() != n_bins_) throw InvalidParameter("ulam operator: row count mismatch");
}

double UlamOperator::at(std::size_t i, std::size_t j) const {
  for (const auto& e : rows_.at(i))
    if (e.col == j) return e.value;
  return 0.0;
}

double UlamOperator::row_sum(std::size_t i) const {
  double s = 0.0;
  for (const auto& e : rows_.at(i)) s += e.value;
  return s;
}

std::vector<double> UlamOperator::push_forward(std::span<const double> v) const {
  if (v.size() != n_bins_) throw InvalidParameter("push_forward: size mismatch");
  std::vector<double> out(n_bins_, 0.0);
  for (std::size_t i = 0; i < n_bins_; ++i)
    for (const auto& e : rows_[i]) out[e.col] += v[i] * e.value;
  return out;
}

void UlamOperator::write_csv(std::ostream& out) const {
  CsvWriter csv(out);
  if (n_bins_ <= 1024) {
    for (std::size_t i = 0; i < n_bins_; ++i) {
      std::vector<double> dense(n_bins_, 0.0);
      for (const auto& e : rows_[i]) dense[e.col] = e.value;
      for (double d : dense) csv.field(d);
      csv.end_row();
    }
    return;
  }
  csv.header({"row", "col", "value"});
  for (std::size_t i = 0; i < n_bins_; ++i)
    for (const auto& e : rows_[i])
      csv.field(static_cast<unsigned long long>(i))
          .field(static_cast<unsigned long long>(e.col))
          .field(e.value)
          .end_row();
}

UlamOperator ulam_operator(const PiecewiseMap& map, std::size_t n_bins,
                           std::size_t samples_per_bin, unsigned workers) {
  if (n_bins == 0 || samples_per_bin == 0) throw InvalidParameter("ulam_operator: empty grid");
  std::vector<std::vector<UlamOperator::Entry>> rows(n_bins);
  const std::size_t chunk = 256;
  const std::size_t tasks = (n_bins + chunk - 1) / chunk;
  const double width = 1.0 / static_cast<double>(n_bins);
  for_each_task(tasks, workers, [&](std::size_t t) {
    std::map<std::uint32_t, std::uint64_t> counts;
    for (std::size_t i = t * chunk; i < std::min(n_bins, (t + 1) * chunk); ++i) {
      counts.clear();
      const double lo = static_cast<double>(i) * width;
      for (std::size_t j = 0; j < samples_per_bin; ++j) {
        const double x =
            lo + width * (static_cast<double>(j) + 0.5) / static_cast<double>(samples_per_bin);
        const double y = map.evaluate(x);
        const auto col = std::min<std::size_t>(static_cast<std::size_t>(y * static_cast<double>(n_bins)),
                                               n_bins - 1);
        ++counts[static_cast<std::uint32_t>(col)];
      }
      auto& row = rows[i];
      for (const auto& [col, c] : counts)
        row.push_back({col, static_cast<double>(c) / static_cast<double>(samples_per_bin)});
    }
  });
  return UlamOperator(n_bins, std::move(rows));
}

EmpiricalMeasure invariant_density(const UlamOperator& op, double tol, std::uint64_t max_iters) {
  const std::size_t n = op.n_bins();
  std::vector<double> v(n, 1.0 / static_cast<double>(n));
  for (std::uint64_t it = 0; it < max_iters; ++it) {
    auto w = op.push_forward(v);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] /= total;
      diff += std::fabs(w[i] - v[i]);
    }
    v = std::move(w);
    if (diff < tol) return EmpiricalMeasure::from_masses(std::move(v), it + 1, MeasureKind::ulam);
  }
  throw NoConvergence(max_iters);
}

BinnedObservable BinnedObservable::from_function(const std::function<double(double)>& f,
                                                 std::size_t n_bins) {
  BinnedObservable obs;
  obs.values.resize(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i)
    obs.values[i] = f((static_cast<double>(i) + 0.5) / static_cast<double>(n_bins));
  return obs;
}

double BinnedObservable::operator()(double x) const {
  const auto n = values.size();
  const auto b = std::min<std::size_t>(static_cast<std::size_t>(x * static_cast<double>(n)), n - 1);
  return values[b];
}

CorrelationEstimate correlation_sequence(const PiecewiseMap& map, const EmpiricalMeasure& mu,
                                         const BinnedObservable& phi, const BinnedObservable& psi,
                                         std::size_t n_max, std::uint64_t orbit_len,
                                         std::uint64_t seed, std::uint64_t burn_in,
                                         std::size_t batches) {
  if (phi.values.empty() || psi.values.empty()) throw InvalidParameter("empty observable");
  if (batches < 2 || orbit_len < batches * (n_max + 1))
    throw InvalidParameter("correlation_sequence: orbit too short for the lag range");
  const double mean_phi = mu.integrate(phi.values);
  const double mean_psi = mu.integrate(psi.values);

  CounterRng rng(seed, stream_id("correlation_sequence", 0));
  TypicalOrbit walk(map, random_start(rng), rng);
  walk.advance(burn_in);

  const std::size_t ring = n_max + 1;
  std::vector<double> past_psi(ring, 0.0);
  std::vector<std::vector<double>> acc(batches, std::vector<double>(ring, 0.0));
  std::vector<std::vector<std::uint64_t>> cnt(batches, std::vector<std::uint64_t>(ring, 0));
  for (std::uint64_t t = 0; t < orbit_len; ++t) {
    const double x = walk.position();
    const double ph = phi(x);
    past_psi[t % ring] = psi(x);
    const std::size_t b = static_cast<std::size_t>(t * batches / orbit_len);
    const std::size_t lags = static_cast<std::size_t>(std::min<std::uint64_t>(t, n_max));
    for (std::size_t n = 0; n <= lags; ++n) {
      acc[b][n] += ph * past_psi[(t - n) % ring];
      ++cnt[b][n];
    }
    walk.step();
  }

  CorrelationEstimate est;
  const double centre = mean_phi * mean_psi;
  for (std::size_t n = 0; n < ring; ++n) {
    double sum = 0.0;
    std::uint64_t count = 0;
    std::vector<double> per_batch(batches);
    for (std::size_t b = 0; b < batches; ++b) {
      sum += acc[b][n];
      count += cnt[b][n];
      per_batch[b] = acc[b][n] / static_cast<double>(cnt[b][n]) - centre;
    }
    const double value = sum / static_cast<double>(count) - centre;
    double ss = 0.0;
    for (double v : per_batch) ss += (v - value) * (v - value);
    const double k = static_cast<double>(batches);
    est.values.push_back(value);
    est.noise.push_back(std::sqrt(ss / (k - 1.0) / k));
  }
  return est;
}

DecayFit decay_rate(std::span<const double> C, std::span<const double> noise) {
  std::vector<double> xs, ys;
  for (std::size_t n = 0; n < C.size(); ++n) {
    const double a = std::fabs(C[n]);
    if (!(a > 0.0)) break;
    if (!noise.empty() && n < noise.size() && a < 3.0 * noise[n]) break;
    xs.push_back(static_cast<double>(n));
    ys.push_back(std::log(a));
  }
  if (xs.size() < 4)
    throw InsufficientDecay("only " + std::to_string(xs.size()) +
                            " correlation values above the noise floor");
  const double k = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / k;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  DecayFit fit;
  fit.theta = std::exp(slope);
  fit.points_used = xs.size();
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu) {
  CsvWriter csv(out);
  csv.header({"bin_left", "bin_right", "mass"});
  for (std::size_t i = 0; i < mu.n_bins(); ++i)
    csv.field(mu.bin_edges()[i]).field(mu.bin_edges()[i + 1]).field(mu.masses()[i]).end_row();
}

}  // namespace retstat

#include "acceptance/criteria.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "oracles/oracles.hpp"
#include "retstat/config.hpp"
#include "retstat/harness.hpp"
#include "retstat/inducing.hpp"
#include "retstat/maps.hpp"
#include "retstat/measures.hpp"
#include "retstat/stats.hpp"

namespace fs = std::filesystem;

namespace retstat::acceptance {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Compact "key=value" detail text.
class Detail {
 public:
  Detail& add(const std::string& key, double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return add(key, s.str());
  }
  Detail& add(const std::string& key, const std::string& v) {
    if (!text_.empty()) text_ += ' ';
    text_ += key + '=' + v;
    return *this;
  }
  Detail& flag(const std::string& key, bool ok) { return add(key, ok ? "ok" : "FAIL"); }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

constexpr std::uint64_t kNMax = 10'000'000;
constexpr std::size_t kSamples = 20'000;

const double kZ = 1.0 / std::sqrt(2.0);

/// Sample sets shared between criteria, built on first use.
class Fixtures {
 public:
  const PiecewiseMap doubling = doubling_map();
  const PiecewiseMap lsv = lsv_map(0.5);
  const IntervalSet dbl_U = IntervalSet::ball(kZ, std::ldexp(1.0, -10));
  const IntervalSet dbl_X = IntervalSet(Interval::half_open(0.5, 1.0));
  const IntervalSet lsv_U = IntervalSet::ball(0.7, 1e-3);
  const IntervalSet lsv_X = IntervalSet(Interval::left_open(0.5, 1.0));

  double dbl_mu() const { return dbl_U.total_length(); }

  SamplingOptions lsv_sampling() const {
    SamplingOptions o;
    o.burn_in = 100'000;
    return o;
  }

  const std::vector<ReturnSample>& dbl_returns() {
    return lazy(dbl_returns_, [&] {
      return sample_return_times(doubling, dbl_U, dbl_mu(), kSamples, kNMax, 3001);
    });
  }
  const std::vector<ReturnSample>& dbl_hitting() {
    return lazy(dbl_hitting_, [&] {
      return sample_hitting_times(doubling, dbl_U, dbl_mu(), kSamples, kNMax, 3001);
    });
  }
  const std::vector<ReturnSample>& cylinder_returns() {
    return lazy(cyl_returns_, [&] {
      return sample_return_times(doubling, cylinder(), std::ldexp(1.0, -12), kSamples, kNMax,
                                 3002);
    });
  }
  IntervalSet cylinder() const {
    const double cells = std::ldexp(1.0, 12);
    const double k = std::floor(kZ * cells);
    return IntervalSet(Interval::half_open(k / cells, (k + 1) / cells));
  }

  const MassEstimate& lsv_mu() {
    return lazy(lsv_mu_, [&] {
      BirkhoffOptions bo;
      bo.burn_in = 100'000;
      return birkhoff_mass(lsv, lsv_U, 50'000'000, 4001, bo);
    });
  }
  const std::vector<ReturnSample>& lsv_returns() {
    return lazy(lsv_returns_, [&] {
      return sample_return_times(lsv, lsv_U, lsv_mu().mass, kSamples, kNMax, 4002,
                                 lsv_sampling());
    });
  }
  const std::vector<ReturnSample>& lsv_hitting() {
    return lazy(lsv_hitting_, [&] {
      return sample_hitting_times(lsv, lsv_U, lsv_mu().mass, kSamples, kNMax, 4002,
                                  lsv_sampling());
    });
  }

  double kac(const PiecewiseMap& map, const IntervalSet& X, std::uint64_t seed) {
    KacOptions ko;
    ko.burn_in = 100'000;
    return kac_constant(InducedSystem{map, X}, 1'000'000, seed, ko).mean_return;
  }

  const SandwichReport& dbl_sandwich() {
    return lazy(dbl_sw_, [&] {
      const SandwichInputs in{dbl_mu(), kac(doubling, dbl_X, 6001), kNMax};
      return sandwich_check(doubling, dbl_X, dbl_U, 0.05, kSamples, 6002, in);
    });
  }
  const SandwichReport& lsv_sandwich() {
    return lazy(lsv_sw_, [&] {
      const SandwichInputs in{lsv_mu().mass, kac(lsv, lsv_X, 6003), kNMax};
      return sandwich_check(lsv, lsv_X, lsv_U, 0.05, kSamples, 6004, in, lsv_sampling());
    });
  }
  const SandwichReport& full_sandwich() {
    return lazy(full_sw_, [&] {
      const SandwichInputs in{dbl_mu(), 1.0, kNMax};
      return sandwich_check(doubling, IntervalSet::unit(), dbl_U, 0.05, kSamples, 6005, in);
    });
  }

 private:
  template <class T, class Fn>
  static const T& lazy(std::optional<T>& slot, Fn&& make) {
    if (!slot) slot.emplace(make());
    return *slot;
  }

  std::optional<std::vector<ReturnSample>> dbl_returns_, dbl_hitting_, cyl_returns_;
  std::optional<MassEstimate> lsv_mu_;
  std::optional<std::vector<ReturnSample>> lsv_returns_, lsv_hitting_;
  std::optional<SandwichReport> dbl_sw_, lsv_sw_, full_sw_;
};

struct Outcome {
  bool pass;
  std::string detail;
};

Outcome kac_criterion(Fixtures& fx) {
  const auto t0 = Clock::now();
  const auto est = kac_constant(InducedSystem{fx.doubling, fx.dbl_X}, 1'000'000, 101);
  const double secs = since(t0);
  const bool close = std::fabs(est.mean_return - 2.0) <= 3.0 * est.standard_error;
  const auto full = kac_constant(InducedSystem{fx.doubling, IntervalSet::unit()}, 100'000, 102);
  const bool exact = full.mean_return == 1.0;
  Detail d;
  d.add("mean", est.mean_return).add("stderr", est.standard_error).add("seconds", secs);
  d.add("full_space_mean", full.mean_return);
  return {close && secs < 10.0 && exact && est.censored == 0, d.str()};
}

Outcome hsv_oracle_criterion(Fixtures& fx) {
  const double exact = oracle::dyadic_a_N(0, 2, 2);
  const auto q = hsv_quantities(fx.doubling, IntervalSet(Interval::half_open(0.0, 0.25)),
                                EmpiricalMeasure::lebesgue(256), 2, 8, 100'000, 201);
  Detail d;
  d.add("oracle", exact).add("mc", q.a_N).add("stderr", q.a_N_stderr);
  return {exact == 0.5 && std::fabs(q.a_N - exact) <= 3.0 * q.a_N_stderr, d.str()};
}

Outcome hyperbolic_criterion(Fixtures& fx) {
  const auto& r = fx.dbl_returns();
  const auto e = edf(r);
  const auto& c = fx.cylinder_returns();
  const auto ec = edf(c);
  const auto exact = oracle::cylinder_return_survival(oracle::cylinder_word(kZ, 12), 200'000);
  const double w = std::ldexp(1.0, -12);
  double sup = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k)
    sup = std::max(sup, std::fabs(ec.survival_at(static_cast<double>(k) * w) - exact[k]));
  Detail d;
  d.add("ks", e.ks_distance).add("uncensored", static_cast<double>(e.n_effective));
  d.add("censored_fraction", e.censored_fraction).add("oracle_sup", sup);
  d.add("cylinder_censored", ec.censored_fraction);
  return {e.ks_distance <= 0.05 && e.n_effective >= kSamples && e.censored_fraction < 1e-3 &&
              sup <= 0.03 && ec.censored_fraction < 1e-3,
          d.str()};
}

Outcome parabolic_criterion(Fixtures& fx) {
  const auto t0 = Clock::now();
  const auto& mu = fx.lsv_mu();
  const auto& r = fx.lsv_returns();
  const double secs = since(t0);
  const auto e = edf(r);
  Detail d;
  d.add("ks", e.ks_distance).add("mu_U", mu.mass).add("mu_U_stderr", mu.standard_error);
  d.add("uncensored", static_cast<double>(e.n_effective));
  d.add("censored_fraction", e.censored_fraction).add("seconds", secs);
  return {e.ks_distance <= 0.08 && e.n_effective >= kSamples && e.censored_fraction < 1e-3 &&
              secs < 300.0,
          d.str()};
}

Outcome abramov_criterion(Fixtures& fx) {
  const auto L = logistic_map(4.0);
  const std::vector<double> post{0.0, 0.5, 1.0};
  const auto hood = markov_neighborhood(L, 0.75, Interval::open(0.5, 1.0), 10, post);
  struct Case {
    std::string name;
    PiecewiseMap map;
    IntervalSet X;
    IntervalSet U;
  };
  const std::vector<Case> cases{
      {"doubling", fx.doubling, fx.dbl_X, IntervalSet(Interval::half_open(0.5, 0.625))},
      {"lsv", fx.lsv, fx.lsv_X, IntervalSet::ball(0.7, 0.05)},
      {"logistic", L, IntervalSet(hood.U), IntervalSet(Interval::open(0.7, 0.8))},
  };
  Detail d;
  bool ok = true;
  CounterRng rng(501, 0);
  for (const auto& c : cases) {
    const InducedSystem sys{c.map, c.X, 1'000'000};
    const auto& u = c.U.components().front();
    int checked = 0, failures = 0;
    while (checked < 10'000) {
      const double x = rng.uniform(u.lo, u.hi);
      if (!c.U.contains(x)) continue;
      ++checked;
      const auto direct = first_return_time(c.map, c.U, x, 1'000'000);
      if (direct.censored) {
        ++failures;
        continue;
      }
      try {
        std::uint64_t sum = 0;
        double y = x;
        do {
          const auto s = induced_step(sys, y);
          sum += s.time;
          y = s.image;
        } while (!c.U.contains(y));
        if (sum != direct.steps) ++failures;
      } catch (const Error&) {
        ++failures;
      }
    }
    d.add(c.name + "_failures", static_cast<double>(failures));
    ok = ok && failures == 0;
  }
  return {ok, d.str()};
}

bool identical(const SandwichReport& r) {
  if (r.base.size() != r.induced.size()) return false;
  for (std::size_t i = 0; i < r.base.size(); ++i)
    if (r.base[i].raw_time != r.induced[i].raw_time ||
        r.base[i].normalized != r.induced[i].normalized || r.base[i].start != r.induced[i].start)
      return false;
  return r.base_edf.jumps == r.induced_edf.jumps && r.base_edf.survival == r.induced_edf.survival;
}

Outcome sandwich_criterion(Fixtures& fx) {
  const auto& a = fx.dbl_sandwich();
  const auto& b = fx.lsv_sandwich();
  const auto& f = fx.full_sandwich();
  const bool same = identical(f);
  Detail d;
  d.flag("doubling", a.holds).add("doubling_margin", std::min(a.lower_margin, a.upper_margin));
  d.flag("lsv", b.holds).add("lsv_margin", std::min(b.lower_margin, b.upper_margin));
  d.add("lsv_c", b.kac_c).flag("full_space_identical", same);
  return {a.holds && b.holds && f.holds && same, d.str()};
}

Outcome branch_criterion(Fixtures& fx) {
  const InducedSystem sys{fx.lsv, fx.lsv_X};
  const auto part = return_branches(sys, 20);
  double worst_image = 0.0;
  int bad_mid = 0;
  std::set<std::uint64_t> seen;
  for (const auto& b : part.branches) {
    worst_image = std::max({worst_image, b.image.lo - 0.5, 1.0 - b.image.hi});
    const double mid = b.domain.midpoint();
    if (induced_step(sys, mid).time != b.return_time) ++bad_mid;
    seen.insert(b.return_time);
  }
  Detail d;
  d.add("branches", static_cast<double>(part.branches.size()));
  d.add("image_gap", worst_image).add("midpoint_mismatches", static_cast<double>(bad_mid));
  return {part.branches.size() == 20 && seen.size() == 20 && worst_image <= 1e-6 && bad_mid == 0,
          d.str()};
}

Outcome certificate_criterion(Fixtures& fx) {
  const auto c = rmap_certificate(InducedSystem{fx.lsv, fx.lsv_X}, 30, 256);
  std::vector<double> inc;
  for (std::size_t i = 0; i < c.weight_tail.size(); ++i)
    inc.push_back(c.weight_tail[i] - (i ? c.weight_tail[i - 1] : 0.0));
  double min_ratio = INFINITY;
  int first_bad = 0;
  for (std::size_t p = 11; p <= inc.size(); ++p) {
    const double ratio = inc[p - 2] / inc[p - 1];
    min_ratio = std::min(min_ratio, ratio);
    if (ratio < 1.2 && first_bad == 0) first_bad = static_cast<int>(p);
  }
  const bool lsv_ok = c.expansion_inf > 1.0 && std::isfinite(c.distortion_K);
  const bool ratio_ok = inc.size() == 30 && min_ratio >= 1.2;

  const auto dc = rmap_certificate(InducedSystem{fx.doubling, fx.dbl_X}, 30, 64);
  bool dbl_ok = dc.distortion_K == 1.0 && !dc.rows.empty();
  for (const auto& row : dc.rows) {
    const double want = std::ldexp(1.0, static_cast<int>(row.return_time));
    dbl_ok = dbl_ok && row.min_derivative == want && row.max_derivative == want;
  }
  Detail d;
  d.add("expansion_inf", c.expansion_inf).add("distortion_K", c.distortion_K);
  d.flag("lsv_expanding_bounded", lsv_ok);
  d.add("min_increment_ratio", min_ratio);
  if (first_bad) d.add("ratio_below_1.2_from_p", static_cast<double>(first_bad));
  d.flag("doubling_exact", dbl_ok);
  return {lsv_ok && ratio_ok && dbl_ok, d.str()};
}

Outcome correlation_criterion(Fixtures& fx) {
  const auto f = [](double x) { return x - 0.5; };
  const double c1 = oracle::doubling_correlation(1, f, f);
  const auto phi = BinnedObservable::from_function(f, 1024);
  const auto C = correlation_sequence(fx.doubling, EmpiricalMeasure::lebesgue(1024), phi, phi, 20,
                                      4'000'000, 901);
  const auto fit = decay_rate(C.values, C.noise);
  const double rel = std::fabs(C.values[1] - c1) / c1;
  Detail d;
  d.add("C1", C.values[1]).add("oracle_C1", c1).add("rel_err", rel);
  d.add("theta", fit.theta).add("r_squared", fit.r_squared);
  return {rel <= 0.1 && fit.theta >= 0.45 && fit.theta <= 0.55 && fit.r_squared >= 0.98, d.str()};
}

Outcome poisson_criterion(Fixtures& fx) {
  int failures = 0;
  Detail d;
  for (std::uint64_t seed = 1001; seed <= 1005; ++seed) {
    const auto h = visit_counts(fx.doubling, fx.dbl_U, fx.dbl_mu(), 1.0, 10'000, seed);
    const auto g = poisson_gof(h, 1.0);
    if (g.p_value < 0.01) ++failures;
    d.add("p" + std::to_string(seed - 1000), g.p_value);
  }
  d.add("failures", static_cast<double>(failures));
  return {failures <= 1, d.str()};
}

Outcome chebyshev_criterion(Fixtures& fx) {
  std::vector<std::pair<std::string, const std::vector<ReturnSample>*>> sets{
      {"doubling_returns", &fx.dbl_returns()},
      {"doubling_hitting", &fx.dbl_hitting()},
      {"cylinder_returns", &fx.cylinder_returns()},
      {"lsv_returns", &fx.lsv_returns()},
      {"lsv_hitting", &fx.lsv_hitting()},
      {"sandwich_doubling_base", &fx.dbl_sandwich().base},
      {"sandwich_doubling_induced", &fx.dbl_sandwich().induced},
      {"sandwich_lsv_base", &fx.lsv_sandwich().base},
      {"sandwich_lsv_induced", &fx.lsv_sandwich().induced},
      {"sandwich_full_base", &fx.full_sandwich().base},
  };
  bool ok = true;
  double worst = -INFINITY;
  std::string worst_name;
  std::string failed;
  for (const auto& [name, samples] : sets) {
    const auto c = chebyshev_check(edf(*samples));
    if (c.worst_value - c.bound > worst) {
      worst = c.worst_value - c.bound;
      worst_name = name;
    }
    if (!c.ok) {
      ok = false;
      failed += (failed.empty() ? "" : ",") + name;
    }
  }
  Detail d;
  d.add("sets", static_cast<double>(sets.size())).add("worst_set", worst_name);
  d.add("worst_minus_bound", worst);
  if (!failed.empty()) d.add("failed", failed);
  return {ok, d.str()};
}

Outcome density_criterion(Fixtures&) {
  const auto L = logistic_map(4.0);
  const auto mu = birkhoff_measure(L, 0.1234567, 1'000'000, 10'000, 256, 1201);
  const auto pushed = oracle::arcsine_pushforward_masses(10'000'000, 256, 1202);
  const auto exact = oracle::arcsine_bin_masses(256);
  double l1 = 0.0, l1_exact = 0.0;
  for (std::size_t i = 0; i < 256; ++i) {
    l1 += std::fabs(mu.masses()[i] - pushed[i]);
    l1_exact += std::fabs(mu.masses()[i] - exact[i]);
  }
  Detail d;
  d.add("l1_vs_conjugacy_oracle", l1).add("l1_vs_closed_form", l1_exact);
  return {l1 <= 0.05, d.str()};
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = s.str();
  }
  return out;
}

const char* const kDeterminismConfigs[] = {
    R"(map = doubling
seed = 3001
ball.center = 1/sqrt(2)
ball.radius = 2^-10
samples = 20000
measure = lebesgue
analyses = [ks, poisson, decay, hsv]
hsv.samples = 20000
output = doubling_ball
)",
    R"(map = doubling
seed = 6002
ball.center = 1/sqrt(2)
ball.radius = 2^-10
samples = 20000
measure = lebesgue
induce { domain = [1/2, 1) }
kac.entries = 1000000
analyses = [sandwich, certificate]
output = doubling_sandwich
)",
    R"(map = lsv_alpha(0.5)
seed = 4002
ball.center = 0.7
ball.radius = 1e-3
samples = 20000
burn_in = 100000
measure.steps = 20000000
induce { domain = (1/2, 1] }
analyses = [ks, sandwich]
output = lsv_ball
)",
};

Outcome determinism_criterion(Fixtures&, const fs::path& root) {
  const fs::path base = root / "determinism";
  fs::remove_all(base);
  std::size_t compared = 0;
  std::string mismatched;
  for (const char* text : kDeterminismConfigs) {
    const auto cfg = parse_config(text, "acceptance");
    std::vector<std::map<std::string, std::string>> runs;
    int k = 0;
    for (unsigned workers : {1u, 4u, 1u}) {
      const fs::path out = base / ("run" + std::to_string(k++));
      const auto rep = run_experiment(cfg, RunOptions{out, {}, workers});
      runs.push_back(csv_files(rep.output_dir));
    }
    for (std::size_t i = 1; i < runs.size(); ++i) {
      if (runs[i].size() != runs[0].size()) mismatched += cfg.output + ":file_set ";
      for (const auto& [name, bytes] : runs[0]) {
        const auto it = runs[i].find(name);
        if (it == runs[i].end() || it->second != bytes) mismatched += cfg.output + "/" + name + " ";
      }
    }
    compared += runs[0].size();
  }
  Detail d;
  d.add("configs", static_cast<double>(std::size(kDeterminismConfigs)));
  d.add("csv_files_per_run", static_cast<double>(compared)).add("runs_per_config", "3(workers=1,4,1)");
  if (!mismatched.empty()) d.add("mismatch", mismatched);
  return {mismatched.empty() && compared > 0, d.str()};
}

}  // namespace

std::string format_line(const CriterionResult& r) {
  std::ostringstream s;
  s << "criterion " << (r.id < 10 ? " " : "") << r.id << ": " << (r.pass ? "PASS" : "FAIL") << "  "
    << r.name << "  [" << r.detail << "]";
  s.precision(3);
  s << std::fixed << " (" << r.seconds << " s)";
  return s.str();
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out) {
  Fixtures fx;
  using Fn = std::function<Outcome()>;
  const std::vector<std::pair<std::string, Fn>> table{
      {"Kac mean return time", [&] { return kac_criterion(fx); }},
      {"HSV a_N against the dyadic enumeration", [&] { return hsv_oracle_criterion(fx); }},
      {"exponential law, doubling ball", [&] { return hyperbolic_criterion(fx); }},
      {"exponential law, parabolic ball", [&] { return parabolic_criterion(fx); }},
      {"Abramov tower identity", [&] { return abramov_criterion(fx); }},
      {"sandwich inequality", [&] { return sandwich_criterion(fx); }},
      {"full branches of the induced parabolic map", [&] { return branch_criterion(fx); }},
      {"R-map certificate", [&] { return certificate_criterion(fx); }},
      {"correlation decay", [&] { return correlation_criterion(fx); }},
      {"Poisson visit counts", [&] { return poisson_criterion(fx); }},
      {"Chebyshev bound on every sample set", [&] { return chebyshev_criterion(fx); }},
      {"logistic density against the arcsine law", [&] { return density_criterion(fx); }},
      {"byte-identical artifacts across worker counts",
       [&] { return determinism_criterion(fx, options.output_root); }},
  };
  std::vector<CriterionResult> results;
  for (int id = 1; id <= kCriterionCount; ++id) {
    if (!options.only.empty() && options.only.count(id) == 0) continue;
    CriterionResult r;
    r.id = id;
    r.name = table[id - 1].first;
    const auto t0 = Clock::now();
    try {
      const auto o = table[id - 1].second();
      r.pass = o.pass;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = since(t0);
    out << format_line(r) << std::endl;
    results.push_back(r);
  }
  return results;
}

}  // namespace retstat::acceptance

#include "retstat/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "retstat/csv.hpp"
#include "retstat/inducing.hpp"
#include "retstat/maps.hpp"
#include "retstat/measures.hpp"
#include "retstat/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace retstat {

StageError::StageError(std::string stage, const std::string& message)
    : Error(stage + ": " + message), stage_(std::move(stage)) {}

fs::path default_output_root() {
  if (const char* env = std::getenv("RETSTAT_OUTPUT_ROOT"); env != nullptr && *env != '\0')
    return env;
  return "results";
}

IntervalSet target_set(const ExperimentConfig& cfg) {
  if (cfg.cylinder_depth) {
    const double cells = std::ldexp(1.0, *cfg.cylinder_depth);
    const double k = std::min(std::floor(cfg.center * cells), cells - 1.0);
    return IntervalSet(Interval::half_open(k / cells, (k + 1.0) / cells));
  }
  if (!cfg.radius) throw ConfigError("no target set: give ball.radius or cylinder.depth");
  return IntervalSet::ball(cfg.center, *cfg.radius);
}

namespace {

std::string hex_id(std::string_view prefix, std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(prefix);
  out += '-';
  for (int i = 15; i >= 0; --i) out += digits[(h >> (4 * i)) & 0xf];
  return out;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

template <class Fn>
void write_csv(const fs::path& path, Fn&& fill) {
  std::ostringstream out;
  fill(out);
  write_text_file(path, out.str());
}

fs::path prepare_output(const ExperimentConfig& cfg, const RunOptions& options) {
  const fs::path dir = options.output_root / cfg.output;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream p(probe);
    if (!p || !(p << "ok")) throw ConfigError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
  fs::remove(dir / "FAILED", ec);
  return dir;
}

double two_sample_ks(const EDFReport& a, const EDFReport& b) {
  double d = 0.0;
  for (const auto* r : {&a, &b})
    for (double t : r->jumps) {
      d = std::max(d, std::fabs(a.survival_at(t) - b.survival_at(t)));
      d = std::max(d, std::fabs(a.survival_left(t) - b.survival_left(t)));
    }
  return d;
}

json edf_json(const EDFReport& e) {
  return {{"ks_distance", e.ks_distance},
          {"ks_location", e.ks_location},
          {"n_effective", e.n_effective},
          {"censored_fraction", e.censored_fraction}};
}

/// Holds the state shared by the stages of one run.
class Pipeline {
 public:
  Pipeline(const ExperimentConfig& cfg, const RunOptions& options, fs::path dir)
      : cfg_(cfg), dir_(std::move(dir)), map_(parse_map_spec(cfg.map_spec)) {
    if (options.seed_override) cfg_.seed = *options.seed_override;
    if (options.workers_override) cfg_.workers = *options.workers_override;
    sampling_.burn_in = cfg_.burn_in;
    sampling_.streams = cfg_.streams;
    sampling_.workers = cfg_.workers;

    json echo = json::object();
    for (const auto& [k, v] : cfg.entries) echo[k] = v;
    echo["seed"] = std::to_string(cfg_.seed);
    summary_ = {{"software", {{"name", "retstat"}, {"version", RETSTAT_VERSION}}},
                {"status", "running"},
                {"config", echo},
                {"map", map_.label()},
                {"analyses", json::object()},
                {"provenance", json::object()}};
    for (const char* k : {"U", "mu_U", "n", "censored_fraction", "ks_distance", "kac_mean",
                          "chebyshev_ok"})
      summary_[k] = nullptr;
  }

  RunReport run() {
    try {
      execute();
    } catch (const StageError& e) {
      summary_["status"] = "failed";
      summary_["failed_stage"] = e.stage();
      summary_["error"] = e.what();
      write_json(dir_ / "summary.json", summary_);
      write_json(dir_ / "timings.json", timings_);
      write_text_file(dir_ / "FAILED", std::string(e.what()) + "\n");
      throw;
    }
    summary_["status"] = "ok";
    write_json(dir_ / "summary.json", summary_);
    write_json(dir_ / "timings.json", timings_);
    return {summary_, timings_, dir_};
  }

 private:
  template <class Fn>
  void stage(const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    timings_[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void execute() {
    if (cfg_.analyses.empty()) return;
    stage("target", [&] {
      U_ = target_set(cfg_);
      summary_["U"] = U_.to_string();
    });
    stage("measure", [&] { measure(); });
    if (cfg_.has(Analysis::ks)) stage("ks", [&] { ks(); });
    if (cfg_.has(Analysis::poisson)) stage("poisson", [&] { poisson(); });
    if (cfg_.has(Analysis::decay)) stage("decay", [&] { decay(); });
    if (cfg_.has(Analysis::hsv)) stage("hsv", [&] { hsv(); });
    if (cfg_.has(Analysis::certificate)) stage("certificate", [&] { certificate(); });
    if (cfg_.has(Analysis::sandwich)) {
      stage("kac", [&] { kac(); });
      stage("sandwich", [&] { sandwich(); });
    }
  }

  void measure() {
    json m;
    if (cfg_.measure == MeasureSource::lebesgue) {
      mu_U_ = U_.total_length();
      m = {{"source", "lebesgue"}, {"mu_U", mu_U_}, {"standard_error", 0.0}};
    } else {
      BirkhoffOptions bo;
      bo.burn_in = cfg_.burn_in;
      bo.streams = cfg_.streams;
      bo.workers = cfg_.workers;
      const auto est = birkhoff_mass(map_, U_, cfg_.measure_steps, cfg_.seed, bo);
      if (!(est.mass > 0.0))
        throw InvalidParameter("the Birkhoff estimate of mu(U) is zero; raise measure.steps");
      mu_U_ = est.mass;
      m = {{"source", "birkhoff"},
           {"mu_U", mu_U_},
           {"standard_error", est.standard_error},
           {"steps", est.steps}};
    }
    m["lebesgue_U"] = U_.total_length();
    measure_id_ = hex_id("measure", cfg_.map_spec + "|" + U_.to_string() + "|" +
                                        std::to_string(cfg_.seed) + "|" +
                                        std::to_string(cfg_.measure_steps) + "|" +
                                        std::string(m["source"].get<std::string>()));
    m["id"] = measure_id_;
    summary_["mu_U"] = mu_U_;
    summary_["analyses"]["measure"] = m;
    summary_["provenance"]["measure"] = measure_id_;
  }

  const EmpiricalMeasure& histogram() {
    if (!mu_hist_) {
      if (cfg_.measure == MeasureSource::lebesgue) {
        mu_hist_ = EmpiricalMeasure::lebesgue(cfg_.measure_bins);
      } else {
        CounterRng rng(cfg_.seed, stream_id("harness_histogram", 0));
        const std::size_t bins =
            std::max<std::size_t>(cfg_.measure_bins, std::size_t{1} << cfg_.hsv_depth);
        mu_hist_ = birkhoff_measure(map_, random_start(rng), cfg_.measure_steps, cfg_.burn_in,
                                    bins, cfg_.seed);
      }
      write_csv(dir_ / "measure.csv", [&](std::ostream& o) { write_measure_csv(o, *mu_hist_); });
    }
    return *mu_hist_;
  }

  void ks() {
    const auto returns =
        sample_return_times(map_, U_, mu_U_, cfg_.samples, cfg_.n_max, cfg_.seed, sampling_);
    const auto hitting =
        sample_hitting_times(map_, U_, mu_U_, cfg_.samples, cfg_.n_max, cfg_.seed, sampling_);
    write_csv(dir_ / "returns.csv", [&](std::ostream& o) { write_samples_csv(o, returns); });
    write_csv(dir_ / "hitting.csv", [&](std::ostream& o) { write_samples_csv(o, hitting); });
    const auto er = edf(returns);
    const auto eh = edf(hitting);
    const auto cheb = chebyshev_check(er);

    json k = edf_json(er);
    k["n"] = returns.size();
    k["mean_normalized"] = mean_normalized(returns);
    k["hitting"] = edf_json(eh);
    k["hitting"]["mean_normalized"] = mean_normalized(hitting);
    k["return_vs_hitting_ks"] = two_sample_ks(er, eh);
    k["chebyshev"] = {{"ok", cheb.ok},
                      {"worst_t", cheb.worst_t},
                      {"worst_value", cheb.worst_value},
                      {"bound", cheb.bound}};
    try {
      tau_U_ = short_return(map_, U_, cfg_.short_return_scan, cfg_.short_return_grid);
      k["short_return"] = *tau_U_;
      k["short_return_normalized"] = static_cast<double>(*tau_U_) * mu_U_;
    } catch (const Censored&) {
      k["short_return"] = nullptr;
    }
    k["mu_U_id"] = measure_id_;
    summary_["analyses"]["ks"] = k;
    summary_["n"] = returns.size();
    summary_["censored_fraction"] = er.censored_fraction;
    summary_["ks_distance"] = er.ks_distance;
    summary_["chebyshev_ok"] = cheb.ok;
    summary_["provenance"]["ks.mu_U"] = measure_id_;
  }

  void poisson() {
    const auto h = visit_counts(map_, U_, mu_U_, cfg_.poisson_t, cfg_.poisson_windows,
                                cfg_.seed, sampling_);
    const auto gof = poisson_gof(h, cfg_.poisson_t);
    write_csv(dir_ / "visits.csv", [&](std::ostream& o) {
      CsvWriter csv(o);
      csv.header({"visits", "windows"});
      for (std::size_t k = 0; k < h.counts.size(); ++k)
        csv.field(static_cast<unsigned long long>(k))
            .field(static_cast<unsigned long long>(h.counts[k]))
            .end_row();
    });
    summary_["analyses"]["poisson"] = {{"t", cfg_.poisson_t},
                                       {"window", h.window},
                                       {"windows", h.n_windows},
                                       {"mean_visits", h.mean},
                                       {"chi_square", gof.statistic},
                                       {"dof", gof.dof},
                                       {"p_value", gof.p_value},
                                       {"mu_U_id", measure_id_}};
    summary_["provenance"]["poisson.mu_U"] = measure_id_;
  }

  void decay() {
    const auto& mu = histogram();
    const auto phi =
        BinnedObservable::from_function([](double x) { return x - 0.5; }, cfg_.measure_bins);
    const auto C = correlation_sequence(map_, mu, phi, phi, cfg_.decay_lags, cfg_.decay_orbit,
                                        cfg_.seed, cfg_.burn_in);
    write_csv(dir_ / "correlations.csv", [&](std::ostream& o) {
      CsvWriter csv(o);
      csv.header({"n", "C", "noise"});
      for (std::size_t n = 0; n < C.values.size(); ++n)
        csv.field(static_cast<unsigned long long>(n)).field(C.values[n]).field(C.noise[n]).end_row();
    });
    json d = {{"lags", cfg_.decay_lags}, {"orbit", cfg_.decay_orbit}};
    try {
      const auto fit = decay_rate(C.values, C.noise);
      theta_ = fit.theta;
      d["theta"] = fit.theta;
      d["r_squared"] = fit.r_squared;
      d["points_used"] = fit.points_used;
    } catch (const InsufficientDecay& e) {
      d["theta"] = nullptr;
      d["fit_error"] = e.what();
    }
    summary_["analyses"]["decay"] = d;
  }

  void hsv() {
    const auto& mu = histogram();
    HsvOptions ho;
    ho.sampling = sampling_;
    const auto q =
        hsv_quantities(map_, U_, mu, cfg_.hsv_N, cfg_.hsv_depth, cfg_.hsv_samples, cfg_.seed, ho);
    if (!tau_U_) {
      try {
        tau_U_ = short_return(map_, U_, cfg_.short_return_scan, cfg_.short_return_grid);
      } catch (const Censored&) {
      }
    }
    json h = {{"N", q.N},
              {"depth", q.depth},
              {"mu_U_histogram", q.mu_U},
              {"a_N", q.a_N},
              {"a_N_stderr", q.a_N_stderr},
              {"b_N", q.b_N},
              {"b_N_noise", q.b_N_noise},
              {"c_sup", q.c_sup},
              {"c_noise", q.c_noise},
              {"k_max", q.k_max}};
    // Ingredients of the implied bounds; the constants are not certified.
    h["ingredients"] = {{"m_U", U_.total_length()},
                        {"mu_U", mu_U_},
                        {"tau_U", tau_U_ ? json(*tau_U_) : json(nullptr)},
                        {"theta", theta_ ? json(*theta_) : json(nullptr)}};
    if (theta_ && tau_U_)
      h["ingredients"]["m_over_mu_theta_tau"] =
          U_.total_length() / mu_U_ * std::pow(*theta_, static_cast<double>(*tau_U_));
    summary_["analyses"]["hsv"] = h;
  }

  InducedSystem induced() const {
    return InducedSystem{map_, IntervalSet(*cfg_.induce_domain), cfg_.induce_max_steps};
  }

  void certificate() {
    const auto sys = induced();
    const auto part = return_branches(sys, cfg_.certificate_p_max);
    const auto cert = rmap_certificate(sys, cfg_.certificate_p_max, cfg_.certificate_grid);
    write_json(dir_ / "branches.json", to_json(part));
    write_json(dir_ / "certificate.json", to_json(cert));
    summary_["analyses"]["certificate"] = {{"p_max", cfg_.certificate_p_max},
                                           {"branches", part.branches.size()},
                                           {"expansion_inf", cert.expansion_inf},
                                           {"distortion_K", cert.distortion_K},
                                           {"variation_estimate", cert.variation_estimate},
                                           {"koebe_variation_bound", cert.koebe_variation_bound}};
  }

  void kac() {
    KacOptions ko;
    ko.burn_in = cfg_.burn_in;
    ko.streams = cfg_.streams;
    ko.workers = cfg_.workers;
    const auto est = kac_constant(induced(), cfg_.kac_entries, cfg_.seed, ko);
    kac_c_ = est.mean_return;
    summary_["kac_mean"] = est.mean_return;
    summary_["analyses"]["kac"] = {{"mean_return", est.mean_return},
                                   {"standard_error", est.standard_error},
                                   {"entries", est.entries},
                                   {"censored", est.censored}};
  }

  void sandwich() {
    const IntervalSet X_hat(*cfg_.induce_domain);
    SandwichInputs in{mu_U_, kac_c_, cfg_.n_max};
    const auto rep = sandwich_check(map_, X_hat, U_, cfg_.sandwich_epsilon, cfg_.samples,
                                    cfg_.seed, in, sampling_);
    write_csv(dir_ / "sandwich_base.csv", [&](std::ostream& o) { write_samples_csv(o, rep.base); });
    write_csv(dir_ / "sandwich_induced.csv",
              [&](std::ostream& o) { write_samples_csv(o, rep.induced); });
    summary_["analyses"]["sandwich"] = {{"holds", rep.holds},
                                        {"epsilon", rep.epsilon},
                                        {"kac_c", rep.kac_c},
                                        {"lower_margin", rep.lower_margin},
                                        {"upper_margin", rep.upper_margin},
                                        {"worst_t", rep.worst_t},
                                        {"slack", rep.slack},
                                        {"base_ks", rep.base_edf.ks_distance},
                                        {"induced_ks", rep.induced_edf.ks_distance},
                                        {"mu_U_id", measure_id_}};
    summary_["provenance"]["sandwich.mu_U"] = measure_id_;
  }

  ExperimentConfig cfg_;
  fs::path dir_;
  PiecewiseMap map_;
  SamplingOptions sampling_;
  IntervalSet U_;
  double mu_U_ = 0.0;
  double kac_c_ = 1.0;
  std::string measure_id_;
  std::optional<EmpiricalMeasure> mu_hist_;
  std::optional<std::uint64_t> tau_U_;
  std::optional<double> theta_;
  json summary_;
  json timings_ = json::object();
};

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = avg;
    i = j;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidParameter("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  const auto dir = prepare_output(cfg, options);
  Pipeline p(cfg, options, dir);
  return p.run();
}

SweepTable radius_sweep(const ExperimentConfig& cfg, const std::vector<double>& radii,
                        const RunOptions& options) {
  if (radii.empty()) throw ConfigError("sweep needs at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ConfigError("sweep radii must be positive");
    if (i > 0 && !(radii[i] < radii[i - 1])) throw ConfigError("sweep radii must decrease");
  }
  SweepTable table;
  table.output_dir = prepare_output(cfg, options);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    ExperimentConfig sub = cfg;
    sub.radius = radii[i];
    sub.cylinder_depth.reset();
    sub.analyses = {Analysis::ks};
    sub.output = (fs::path(cfg.output) / ("r" + std::to_string(i))).string();
    SweepRow row;
    row.radius = radii[i];
    try {
      const auto rep = run_experiment(sub, options);
      const auto& s = rep.summary;
      row.mu_U = s["mu_U"].get<double>();
      row.ks_distance = s["ks_distance"].get<double>();
      row.censored_fraction = s["censored_fraction"].get<double>();
      const auto& sr = s["analyses"]["ks"]["short_return"];
      if (!sr.is_null()) row.short_return = sr.get<std::uint64_t>();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      row.error = e.what();
    }
    table.rows.push_back(row);
  }

  std::vector<double> r, k;
  for (const auto& row : table.rows)
    if (row.error.empty()) {
      r.push_back(row.radius);
      k.push_back(row.ks_distance);
    }
  table.spearman = spearman(r, k);

  write_csv(table.output_dir / "sweep.csv", [&](std::ostream& o) {
    CsvWriter csv(o);
    csv.header({"radius", "mu_U", "ks_distance", "short_return", "censored_fraction", "failed"});
    for (const auto& row : table.rows) {
      csv.field(row.radius).field(row.mu_U).field(row.ks_distance);
      if (row.short_return) csv.field(static_cast<unsigned long long>(*row.short_return));
      else csv.field(std::string_view("NA"));
      csv.field(row.censored_fraction).field(row.error.empty() ? 0 : 1).end_row();
    }
  });
  json rows = json::array();
  for (const auto& row : table.rows)
    rows.push_back({{"radius", row.radius},
                    {"mu_U", row.mu_U},
                    {"ks_distance", row.ks_distance},
                    {"short_return", row.short_return ? json(*row.short_return) : json(nullptr)},
                    {"censored_fraction", row.censored_fraction},
                    {"error", row.error.empty() ? json(nullptr) : json(row.error)}});
  write_json(table.output_dir / "sweep.json",
             {{"software", {{"name", "retstat"}, {"version", RETSTAT_VERSION}}},
              {"rows", rows},
              {"spearman_ks_vs_radius", table.spearman}});
  return table;
}

json induce_report(const ExperimentConfig& cfg, const RunOptions& options) {
  if (!cfg.induce_domain) throw ConfigError("induce needs an induce { domain = ... } block");
  const auto dir = prepare_output(cfg, options);
  const InducedSystem sys{parse_map_spec(cfg.map_spec), IntervalSet(*cfg.induce_domain),
                          cfg.induce_max_steps};
  json out;
  try {
    const auto part = return_branches(sys, cfg.certificate_p_max);
    const auto cert = rmap_certificate(sys, cfg.certificate_p_max, cfg.certificate_grid);
    out = {{"domain", cfg.induce_domain->to_string()},
           {"p_max", cfg.certificate_p_max},
           {"partition", to_json(part)},
           {"certificate", to_json(cert)}};
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    write_text_file(dir / "FAILED", std::string("induce: ") + e.what() + "\n");
    throw StageError("induce", e.what());
  }
  write_json(dir / "branches.json", out["partition"]);
  write_json(dir / "certificate.json", out["certificate"]);
  return out;
}

}  // namespace retstat

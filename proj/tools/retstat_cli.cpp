// retstat: command-line front end for return-time experiments.
//
//   retstat run <config>                     run the configured analyses
//   retstat sweep <config> --radii r1 r2 ... KS distance over shrinking balls
//   retstat induce <config>                  branch partition + certificate only
//   retstat accept [--criterion N ...]       acceptance suite, one line per criterion
//
// Global options: --output-root (default $RETSTAT_OUTPUT_ROOT, else "results"),
// --seed (overrides the config), --workers.
//
// Exit codes: 0 success, 1 analysis failure or failed criterion, 2 config error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "acceptance/criteria.hpp"
#include "retstat/config.hpp"
#include "retstat/error.hpp"
#include "retstat/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kAnalysisFailure = 1;
constexpr int kConfigError = 2;

retstat::RunOptions run_options(const std::string& root, std::optional<std::uint64_t> seed,
                                std::optional<unsigned> workers) {
  retstat::RunOptions o;
  o.output_root = root.empty() ? retstat::default_output_root() : std::filesystem::path(root);
  o.seed_override = seed;
  o.workers_override = workers;
  return o;
}

void print_summary(const nlohmann::json& s, const std::filesystem::path& dir) {
  std::cout << "status: " << s.value("status", "?") << "\n";
  for (const char* k : {"map", "U", "mu_U", "n", "ks_distance", "censored_fraction", "kac_mean",
                        "chebyshev_ok"})
    if (s.contains(k) && !s[k].is_null()) std::cout << k << ": " << s[k].dump() << "\n";
  if (s.contains("analyses"))
    for (const auto& [name, block] : s["analyses"].items())
      std::cout << "analysis " << name << ": " << block.dump() << "\n";
  std::cout << "output: " << dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Return-time statistics for interval maps"};
  app.require_subcommand(1);

  std::string output_root;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  app.add_option("--output-root", output_root, "directory for all outputs")
      ->envname("RETSTAT_OUTPUT_ROOT");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--workers", workers, "worker threads (results do not depend on it)");

  std::string config_path;
  auto* run = app.add_subcommand("run", "run the analyses of a config");
  run->add_option("config", config_path, "config file")->required();

  auto* sweep = app.add_subcommand("sweep", "KS distance over a decreasing list of radii");
  std::vector<std::string> radii_text;
  sweep->add_option("config", config_path, "config file")->required();
  sweep->add_option("--radii", radii_text, "radii, largest first (expressions like 2^-8)")
      ->required();

  auto* induce = app.add_subcommand("induce", "branch partition and certificate of the induced map");
  induce->add_option("config", config_path, "config file")->required();

  auto* accept = app.add_subcommand("accept", "run the acceptance suite");
  std::vector<int> criteria;
  accept->add_option("--criterion", criteria, "criterion number (repeatable)")
      ->check(CLI::Range(1, retstat::acceptance::kCriterionCount));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  const auto options = run_options(output_root, seed, workers);
  try {
    if (*run) {
      const auto cfg = retstat::load_config(config_path);
      const auto rep = retstat::run_experiment(cfg, options);
      print_summary(rep.summary, rep.output_dir);
      return kOk;
    }
    if (*sweep) {
      const auto cfg = retstat::load_config(config_path);
      std::vector<double> radii;
      for (const auto& r : radii_text) radii.push_back(retstat::parse_expression(r));
      const auto table = retstat::radius_sweep(cfg, radii, options);
      std::cout << "radius,mu_U,ks_distance,short_return,censored_fraction,error\n";
      bool failed = false;
      for (const auto& row : table.rows) {
        std::cout << row.radius << ',' << row.mu_U << ',' << row.ks_distance << ','
                  << (row.short_return ? std::to_string(*row.short_return) : "NA") << ','
                  << row.censored_fraction << ',' << row.error << "\n";
        failed = failed || !row.error.empty();
      }
      std::cout << "spearman(ks, radius): " << table.spearman << "\n";
      std::cout << "output: " << table.output_dir.string() << "\n";
      return failed ? kAnalysisFailure : kOk;
    }
    if (*induce) {
      auto cfg = retstat::load_config(config_path);
      if (seed) cfg.seed = *seed;
      const auto j = retstat::induce_report(cfg, options);
      std::cout << "domain: " << j["domain"].get<std::string>() << "\n";
      std::cout << "branches: " << j["partition"]["branches"].size() << "\n";
      for (const char* k : {"expansion_inf", "distortion_K", "variation_estimate",
                            "koebe_variation_bound"})
        std::cout << k << ": " << j["certificate"][k].dump() << "\n";
      std::cout << "output: " << (options.output_root / cfg.output).string() << "\n";
      return kOk;
    }
    if (*accept) {
      retstat::acceptance::AcceptanceOptions ao;
      ao.output_root = options.output_root / "acceptance";
      ao.only.insert(criteria.begin(), criteria.end());
      const auto results = retstat::acceptance::run_acceptance(ao, std::cout);
      int failed = 0;
      for (const auto& r : results) failed += r.pass ? 0 : 1;
      std::cout << results.size() - failed << "/" << results.size() << " criteria passed\n";
      return failed == 0 ? kOk : kAnalysisFailure;
    }
  } catch (const retstat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "analysis failed: " << e.what() << "\n";
    return kAnalysisFailure;
  }
  return kOk;
}

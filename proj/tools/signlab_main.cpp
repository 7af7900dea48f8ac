// signlab: desk-scale experiments for sign-based stochastic optimization.
//
// Subcommands mirror the experiment kinds; each takes a JSON config plus
// --seed / --out / --trials overrides. Exit codes: 0 success, 1 usage or
// config error, 2 when a configured expectation fails.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "signlab/lab.hpp"

namespace {

using namespace signlab;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::int64_t> trials;
};

ExperimentConfig load_config(const std::string& path, ExperimentKind expected,
                             const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j = json::parse(in);
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  if (cfg.kind != expected) {
    throw std::runtime_error("config kind '" + to_string(cfg.kind) +
                             "' does not match this subcommand");
  }
  if (overrides.seed) cfg.base_seed = *overrides.seed;
  if (overrides.out) cfg.out = *overrides.out;
  if (overrides.trials) {
    if (*overrides.trials < 1) throw std::runtime_error("--trials must be >= 1");
    cfg.trials = *overrides.trials;
  }
  if (cfg.out.empty()) cfg.out = to_string(cfg.kind);
  return cfg;
}

std::vector<std::string> check_toy_expect(const ExperimentConfig& cfg,
                                          const ToyResult& result) {
  std::vector<std::string> failures;
  if (cfg.expect.value("signsgd_beats_sgd", false) &&
      !result.signsgd_below_sgd) {
    failures.push_back("expected signsgd best final loss below sgd's");
  }
  return failures;
}

std::vector<std::string> check_sweep_expect(const ExperimentConfig& cfg,
                                            const SweepResult& result) {
  std::vector<std::string> failures;
  const double min_r2 = cfg.expect.value("min_r2", 0.9);
  if (cfg.expect.contains("slope")) {
    const double want = cfg.expect.at("slope").get<double>();
    const double tol = cfg.expect.value("slope_tol", 0.1);
    if (result.r2 < min_r2) {
      failures.push_back("fit inconclusive: r2 = " + format_double(result.r2) +
                         " < " + format_double(min_r2));
    } else if (std::abs(result.slope - want) > tol) {
      failures.push_back("slope " + format_double(result.slope) +
                         " outside " + format_double(want) + " +- " +
                         format_double(tol));
    }
  } else if (cfg.expect.contains("min_r2") && result.r2 < min_r2) {
    failures.push_back("r2 = " + format_double(result.r2) + " < " +
                       format_double(min_r2));
  }
  return failures;
}

std::vector<std::string> check_equiv_expect(const ExperimentConfig& cfg,
                                            const EquivalenceResult& result) {
  std::vector<std::string> failures;
  if (cfg.expect.contains("max_deviation") &&
      result.max_deviation > cfg.expect.at("max_deviation").get<double>()) {
    failures.push_back("trajectory deviation " +
                       format_double(result.max_deviation) + " above bound");
  }
  if (cfg.expect.contains("max_norm_gap_rel") &&
      result.max_norm_gap_rel >
          cfg.expect.at("max_norm_gap_rel").get<double>()) {
    failures.push_back("nuclear/l1 gap " +
                       format_double(result.max_norm_gap_rel) + " above bound");
  }
  return failures;
}

std::vector<std::string> check_density_expect(const ExperimentConfig& cfg,
                                              const DensityTrace& trace) {
  std::vector<std::string> failures;
  if (!cfg.expect.contains("phi_last_min") &&
      !cfg.expect.contains("phi_last_max")) {
    return failures;
  }
  if (trace.checkpoints.empty() || !trace.checkpoints.back().phi) {
    failures.push_back("no defined density at the last checkpoint");
    return failures;
  }
  const double phi = *trace.checkpoints.back().phi;
  if (cfg.expect.contains("phi_last_min") &&
      phi < cfg.expect.at("phi_last_min").get<double>()) {
    failures.push_back("final phi " + format_double(phi) + " below bound");
  }
  if (cfg.expect.contains("phi_last_max") &&
      phi > cfg.expect.at("phi_last_max").get<double>()) {
    failures.push_back("final phi " + format_double(phi) + " above bound");
  }
  return failures;
}

std::vector<std::string> check_compare_expect(
    const ExperimentConfig& cfg, const std::vector<CompareRow>& rows) {
  std::vector<std::string> failures;
  if (!cfg.expect.value("check_identities", false)) return failures;
  for (const auto& r : rows) {
    if (r.pattern == "one_hot" && r.signsgd.stochastic > 0.0) {
      const double ratio = r.sgd_lower.stochastic / r.signsgd.stochastic;
      if (ratio != static_cast<double>(r.d)) {
        failures.push_back("one-hot stochastic ratio at d=" + format_int(r.d) +
                           " is " + format_double(ratio) + ", want exactly d");
      }
    }
    if (r.pattern == "uniform" && r.signsgd.stochastic > 0.0 &&
        r.sgd_lower.stochastic != r.signsgd.stochastic) {
      failures.push_back("uniform stochastic ratio at d=" + format_int(r.d) +
                         " is not exactly 1");
    }
    if (r.d == 1 && r.sgd_lower.total() != r.signsgd.total()) {
      failures.push_back("d=1 total ratio is not exactly 1");
    }
  }
  return failures;
}

int finish(const ExperimentConfig& cfg, const json& summary,
           const std::vector<std::string>& failures) {
  std::cout << "wrote " << cfg.out << ".csv and " << cfg.out << ".meta.json\n";
  std::cout << "summary: " << summary.dump() << "\n";
  for (const auto& f : failures) {
    std::cout << "expectation failed: " << f << "\n";
  }
  return failures.empty() ? 0 : 2;
}

int dispatch(ExperimentKind kind, const std::string& config_path,
             const Overrides& overrides) {
  const ExperimentConfig cfg = load_config(config_path, kind, overrides);
  switch (kind) {
    case ExperimentKind::toy_deterministic:
    case ExperimentKind::toy_sparse_noise: {
      const ToyResult result = run_toy(cfg);
      return finish(cfg, write_toy_outputs(cfg, result),
                    check_toy_expect(cfg, result));
    }
    case ExperimentKind::rate_sweep: {
      const SweepResult result = rate_sweep(cfg);
      return finish(cfg, write_sweep_outputs(cfg, result),
                    check_sweep_expect(cfg, result));
    }
    case ExperimentKind::equivalence: {
      const EquivalenceResult result = equivalence_check(cfg);
      return finish(cfg, write_equivalence_outputs(cfg, result),
                    check_equiv_expect(cfg, result));
    }
    case ExperimentKind::certify: {
      const auto outcomes = run_certify(cfg);
      std::vector<std::string> failures;
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!outcomes[i].matches_expectation) {
          failures.push_back("check " + format_int(static_cast<std::int64_t>(i)) +
                             " (" + to_string(outcomes[i].check.assumption) +
                             ") did not match its expectation");
        }
      }
      return finish(cfg, write_certify_outputs(cfg, outcomes), failures);
    }
    case ExperimentKind::density: {
      const DensityTrace trace = run_density(cfg);
      return finish(cfg, write_density_outputs(cfg, trace),
                    check_density_expect(cfg, trace));
    }
    case ExperimentKind::complexity_compare: {
      const auto rows = complexity_compare(cfg);
      return finish(cfg, write_compare_outputs(cfg, rows),
                    check_compare_expect(cfg, rows));
    }
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"signlab: sign-based optimization experiments"};
  app.require_subcommand(1);

  struct SubSpec {
    const char* name;
    const char* help;
    ExperimentKind kind;
  };
  const std::vector<SubSpec> specs = {
      {"toy-det", "imbalanced-curvature quadratic comparison",
       ExperimentKind::toy_deterministic},
      {"toy-noise", "sparse-noise quadratic comparison",
       ExperimentKind::toy_sparse_noise},
      {"sweep", "signsgd rate sweep over total oracle budgets",
       ExperimentKind::rate_sweep},
      {"equiv", "muon vs signsgd trajectory collapse on the matrix lift",
       ExperimentKind::equivalence},
      {"certify", "sampled smoothness / variance certificates",
       ExperimentKind::certify},
      {"density", "gradient noise density trace along a run",
       ExperimentKind::density},
      {"compare", "closed-form complexity comparison table",
       ExperimentKind::complexity_compare},
  };

  struct SubState {
    std::string config;
    Overrides overrides;
    ExperimentKind kind;
    CLI::App* cmd = nullptr;
  };
  std::vector<SubState> states(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto* cmd = app.add_subcommand(specs[i].name, specs[i].help);
    states[i].kind = specs[i].kind;
    states[i].cmd = cmd;
    cmd->add_option("--config", states[i].config, "JSON config path")
        ->required();
    cmd->add_option("--seed", states[i].overrides.seed, "base seed override");
    cmd->add_option("--out", states[i].overrides.out, "output prefix override");
    cmd->add_option("--trials", states[i].overrides.trials,
                    "trial count override");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& s : states) {
      if (s.cmd->parsed()) return dispatch(s.kind, s.config, s.overrides);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

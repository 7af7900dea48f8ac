#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "signlab/csv.hpp"
#include "signlab/geometry.hpp"
#include "signlab/hard_instances.hpp"
#include "signlab/optimizers.hpp"
#include "signlab/probes.hpp"
#include "signlab/problems.hpp"
#include "signlab/rng.hpp"
#include "signlab/version.hpp"

namespace signlab {

// ---------------------------------------------------------------------------
// Deterministic trial parallelism
// ---------------------------------------------------------------------------

/// Runs fn(0..count-1) across up to `threads` workers (0 = hardware count).
/// Work items own disjoint output slots, so scheduling cannot change results.
inline void parallel_for(std::int64_t count, int threads,
                         const std::function<void(std::int64_t)>& fn) {
  if (count <= 0) return;
  int workers = threads > 0
                    ? threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = static_cast<int>(
      std::min<std::int64_t>(workers, count));
  if (workers == 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Config vocabulary
// ---------------------------------------------------------------------------

enum class ExperimentKind {
  toy_deterministic,
  toy_sparse_noise,
  rate_sweep,
  equivalence,
  certify,
  density,
  complexity_compare,
};

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::toy_deterministic: return "toy_deterministic";
    case ExperimentKind::toy_sparse_noise: return "toy_sparse_noise";
    case ExperimentKind::rate_sweep: return "rate_sweep";
    case ExperimentKind::equivalence: return "equivalence";
    case ExperimentKind::certify: return "certify";
    case ExperimentKind::density: return "density";
    case ExperimentKind::complexity_compare: return "complexity_compare";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  for (ExperimentKind k :
       {ExperimentKind::toy_deterministic, ExperimentKind::toy_sparse_noise,
        ExperimentKind::rate_sweep, ExperimentKind::equivalence,
        ExperimentKind::certify, ExperimentKind::density,
        ExperimentKind::complexity_compare}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown experiment kind: " + s);
}

struct SigmaSpec {
  enum class Pattern { zero, uniform, one_hot };
  Pattern pattern = Pattern::zero;
  double value = 0.0;

  VectorXd materialize(Eigen::Index d) const {
    VectorXd s = VectorXd::Zero(d);
    switch (pattern) {
      case Pattern::zero: break;
      case Pattern::uniform: s.setConstant(value); break;
      case Pattern::one_hot: s(0) = value; break;
    }
    return s;
  }

  static std::string pattern_name(Pattern p) {
    switch (p) {
      case Pattern::zero: return "zero";
      case Pattern::uniform: return "uniform";
      case Pattern::one_hot: return "one_hot";
    }
    return "?";
  }

  static Pattern parse_pattern(const std::string& s) {
    if (s == "zero") return Pattern::zero;
    if (s == "uniform") return Pattern::uniform;
    if (s == "one_hot") return Pattern::one_hot;
    throw std::invalid_argument("unknown sigma pattern: " + s);
  }
};

struct CurvatureSpec {
  enum class Pattern { uniform, spiked };
  Pattern pattern = Pattern::uniform;
  double value = 1.0;  // every coordinate (uniform) or the non-spike level
  double top = 1.0;    // first coordinate when spiked

  VectorXd materialize(Eigen::Index d) const {
    VectorXd c = VectorXd::Constant(d, value);
    if (pattern == Pattern::spiked && d > 0) c(0) = top;
    return c;
  }

  static std::string pattern_name(Pattern p) {
    return p == Pattern::uniform ? "uniform" : "spiked";
  }

  static Pattern parse_pattern(const std::string& s) {
    if (s == "uniform") return Pattern::uniform;
    if (s == "spiked") return Pattern::spiked;
    throw std::invalid_argument("unknown curvature pattern: " + s);
  }
};

inline std::string to_string(Allocation a) {
  return a == Allocation::deterministic ? "deterministic" : "stochastic";
}

inline Allocation parse_allocation(const std::string& s) {
  if (s == "deterministic") return Allocation::deterministic;
  if (s == "stochastic") return Allocation::stochastic;
  throw std::invalid_argument("unknown allocation: " + s);
}

inline std::string to_string(MsignMethod m) {
  return m == MsignMethod::exact_svd ? "exact_svd" : "newton_schulz";
}

inline MsignMethod parse_msign_method(const std::string& s) {
  if (s == "exact_svd") return MsignMethod::exact_svd;
  if (s == "newton_schulz") return MsignMethod::newton_schulz;
  throw std::invalid_argument("unknown msign method: " + s);
}

struct CertifyCheckConfig {
  AssumptionKind assumption = AssumptionKind::linf_smooth;
  std::string target = "quadratic";  // quadratic | lift | hard
  std::int64_t pairs = 1000;
  double radius = 1.0;
  double constant_scale = 1.0;
  bool expect_certified = true;
};

// ---------------------------------------------------------------------------
// Experiment configuration (JSON-mirrored, unknown keys rejected)
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::toy_deterministic;

  // instance
  std::int64_t d = 0;  // 0 = kind default
  std::int64_t m = 8;
  std::int64_t n = 0;  // 0 = square
  double linf = 1.0;
  double delta = 1.0;
  CurvatureSpec curvature;
  SigmaSpec sigma;
  std::string alloc = "auto";  // auto | deterministic | stochastic
  double start_value = 1.0;

  // optimization
  std::vector<std::string> optimizers = {"sgd", "signsgd"};
  std::vector<double> eta_grid;
  double eta = 0.0;  // 0 = kind default
  std::int64_t iterations = 0;
  std::int64_t batch = 1;
  std::vector<std::int64_t> n_list;
  MsignConfig msign;

  // harness
  std::int64_t trials = 0;
  std::uint64_t base_seed = 12345;
  std::string out;
  int threads = 0;
  std::int64_t every = 10;
  std::int64_t samples_per_checkpoint = 1000;

  // certify
  std::vector<CertifyCheckConfig> certify_checks;

  // complexity comparison grid
  std::vector<std::int64_t> d_list = {1, 10, 100, 1000};
  std::vector<double> eps_list = {0.1, 0.01};
  std::vector<std::string> sigma_patterns = {"one_hot", "uniform"};
  double sigma_value = 1.0;

  // optional pass/fail expectations, evaluated by the CLI
  json expect = json::object();

  Allocation allocation_for(const VectorXd& sig) const {
    if (alloc == "deterministic") return Allocation::deterministic;
    if (alloc == "stochastic") return Allocation::stochastic;
    return sig.cwiseAbs().sum() == 0.0 ? Allocation::deterministic
                                       : Allocation::stochastic;
  }

  static ExperimentConfig from_json(const json& j);
  json to_json() const;
  void apply_kind_defaults();
};

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: " + where + " must be an object");
  }
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw std::invalid_argument("config: unknown key '" + item.key() +
                                  "' in " + where);
    }
  }
}

inline SigmaSpec sigma_from_json(const json& j) {
  require_keys(j, {"pattern", "value"}, "sigma");
  SigmaSpec s;
  s.pattern = SigmaSpec::parse_pattern(j.at("pattern").get<std::string>());
  if (s.pattern != SigmaSpec::Pattern::zero) {
    s.value = j.at("value").get<double>();
    if (s.value < 0.0) throw std::invalid_argument("config: sigma value < 0");
  }
  return s;
}

inline CurvatureSpec curvature_from_json(const json& j) {
  require_keys(j, {"pattern", "value", "top"}, "curvature");
  CurvatureSpec c;
  c.pattern = CurvatureSpec::parse_pattern(j.at("pattern").get<std::string>());
  c.value = j.value("value", 1.0);
  c.top = j.value("top", c.value);
  if (c.value < 0.0 || c.top < 0.0) {
    throw std::invalid_argument("config: curvature must be >= 0");
  }
  return c;
}

inline MsignConfig msign_from_json(const json& j) {
  require_keys(j, {"method", "iterations", "coefficients"}, "msign");
  MsignConfig cfg;
  if (j.contains("method")) {
    cfg.method = parse_msign_method(j.at("method").get<std::string>());
  }
  if (j.contains("iterations")) {
    cfg.ns_iterations = j.at("iterations").get<int>();
    if (cfg.ns_iterations < 1) {
      throw std::invalid_argument("config: msign iterations must be >= 1");
    }
  }
  if (j.contains("coefficients")) {
    const auto c = j.at("coefficients").get<std::vector<double>>();
    if (c.size() != 3) {
      throw std::invalid_argument("config: msign coefficients need 3 entries");
    }
    cfg.ns_coefficients = {c[0], c[1], c[2]};
  }
  return cfg;
}

inline CertifyCheckConfig check_from_json(const json& j) {
  require_keys(j,
               {"assumption", "target", "pairs", "radius", "constant_scale",
                "expect_certified"},
               "checks[]");
  CertifyCheckConfig c;
  c.assumption = parse_assumption(j.at("assumption").get<std::string>());
  c.target = j.value("target", std::string("quadratic"));
  if (c.target != "quadratic" && c.target != "lift" && c.target != "hard") {
    throw std::invalid_argument("config: unknown certify target " + c.target);
  }
  c.pairs = j.value("pairs", std::int64_t{1000});
  c.radius = j.value("radius", 1.0);
  c.constant_scale = j.value("constant_scale", 1.0);
  c.expect_certified = j.value("expect_certified", true);
  if (c.pairs < 1 || c.radius <= 0.0 || c.constant_scale <= 0.0) {
    throw std::invalid_argument("config: bad certify check parameters");
  }
  return c;
}

}  // namespace detail

inline void ExperimentConfig::apply_kind_defaults() {
  switch (kind) {
    case ExperimentKind::toy_deterministic:
      if (d == 0) d = 5000;
      if (iterations == 0) iterations = 2000;
      if (trials == 0) trials = 1;
      if (eta_grid.empty()) eta_grid = {1e-2, 1e-3, 1e-4};
      break;
    case ExperimentKind::toy_sparse_noise:
      if (d == 0) d = 100;
      if (iterations == 0) iterations = 5000;
      if (trials == 0) trials = 10;
      if (eta_grid.empty()) eta_grid = {1e-2, 1e-3, 1e-4};
      break;
    case ExperimentKind::rate_sweep:
      if (d == 0) d = 1;
      if (trials == 0) trials = 64;
      break;
    case ExperimentKind::equivalence:
      if (n == 0) n = m;
      if (iterations == 0) iterations = 1000;
      if (eta == 0.0) eta = 0.01;
      if (trials == 0) trials = 1;
      break;
    case ExperimentKind::certify:
      if (d == 0) d = 8;
      if (iterations == 0) iterations = 1000;
      if (eta == 0.0) eta = 0.05;
      if (trials == 0) trials = 1;
      break;
    case ExperimentKind::density:
      if (d == 0) d = 10000;
      if (iterations == 0) iterations = 100;
      if (eta == 0.0) eta = 1e-3;
      if (trials == 0) trials = 1;
      break;
    case ExperimentKind::complexity_compare:
      if (trials == 0) trials = 1;
      break;
  }
}

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  detail::require_keys(
      j,
      {"kind",       "d",          "m",          "n",           "linf",
       "delta",      "curvature",  "sigma",      "alloc",       "start_value",
       "optimizers", "eta_grid",   "eta",        "T",           "B",
       "N_list",     "msign",      "trials",     "base_seed",   "out",
       "threads",    "every",      "samples_per_checkpoint",    "checks",
       "d_list",     "eps_list",   "sigma_patterns",            "sigma_value",
       "expect"},
      "config");
  ExperimentConfig cfg;
  cfg.kind = parse_experiment_kind(j.at("kind").get<std::string>());
  cfg.d = j.value("d", std::int64_t{0});
  cfg.m = j.value("m", std::int64_t{8});
  cfg.n = j.value("n", std::int64_t{0});
  cfg.linf = j.value("linf", 1.0);
  cfg.delta = j.value("delta", 1.0);
  if (j.contains("curvature")) {
    cfg.curvature = detail::curvature_from_json(j.at("curvature"));
  }
  if (j.contains("sigma")) cfg.sigma = detail::sigma_from_json(j.at("sigma"));
  cfg.alloc = j.value("alloc", std::string("auto"));
  if (cfg.alloc != "auto" && cfg.alloc != "deterministic" &&
      cfg.alloc != "stochastic") {
    throw std::invalid_argument("config: unknown alloc mode " + cfg.alloc);
  }
  cfg.start_value = j.value("start_value", 1.0);
  if (j.contains("optimizers")) {
    cfg.optimizers = j.at("optimizers").get<std::vector<std::string>>();
    if (cfg.optimizers.empty()) {
      throw std::invalid_argument("config: optimizers must be nonempty");
    }
    for (const auto& o : cfg.optimizers) parse_optimizer(o);
  }
  if (j.contains("eta_grid")) {
    cfg.eta_grid = j.at("eta_grid").get<std::vector<double>>();
    const bool toy = cfg.kind == ExperimentKind::toy_deterministic ||
                     cfg.kind == ExperimentKind::toy_sparse_noise;
    if (toy && cfg.eta_grid.empty()) {
      throw std::invalid_argument("config: toy kinds need a nonempty eta_grid");
    }
    for (double e : cfg.eta_grid) {
      if (e <= 0.0) throw std::invalid_argument("config: eta_grid entries > 0");
    }
  }
  cfg.eta = j.value("eta", 0.0);
  cfg.iterations = j.value("T", std::int64_t{0});
  cfg.batch = j.value("B", std::int64_t{1});
  if (j.contains("N_list")) {
    cfg.n_list = j.at("N_list").get<std::vector<std::int64_t>>();
    for (std::size_t i = 0; i + 1 < cfg.n_list.size(); ++i) {
      if (cfg.n_list[i] >= cfg.n_list[i + 1]) {
        throw std::invalid_argument("config: N_list must be strictly increasing");
      }
    }
  }
  if (j.contains("msign")) cfg.msign = detail::msign_from_json(j.at("msign"));
  cfg.trials = j.value("trials", std::int64_t{0});
  if (cfg.trials < 0) throw std::invalid_argument("config: trials must be >= 1");
  cfg.base_seed = j.value("base_seed", std::uint64_t{12345});
  cfg.out = j.value("out", std::string());
  cfg.threads = j.value("threads", 0);
  cfg.every = j.value("every", std::int64_t{10});
  cfg.samples_per_checkpoint =
      j.value("samples_per_checkpoint", std::int64_t{1000});
  if (j.contains("checks")) {
    for (const auto& c : j.at("checks")) {
      cfg.certify_checks.push_back(detail::check_from_json(c));
    }
  }
  if (j.contains("d_list")) {
    cfg.d_list = j.at("d_list").get<std::vector<std::int64_t>>();
  }
  if (j.contains("eps_list")) {
    cfg.eps_list = j.at("eps_list").get<std::vector<double>>();
  }
  if (j.contains("sigma_patterns")) {
    cfg.sigma_patterns =
        j.at("sigma_patterns").get<std::vector<std::string>>();
    for (const auto& p : cfg.sigma_patterns) SigmaSpec::parse_pattern(p);
  }
  cfg.sigma_value = j.value("sigma_value", 1.0);
  if (j.contains("expect")) {
    cfg.expect = j.at("expect");
    if (!cfg.expect.is_object()) {
      throw std::invalid_argument("config: expect must be an object");
    }
  }
  cfg.apply_kind_defaults();

  // cross-field validation
  if (cfg.kind == ExperimentKind::rate_sweep && cfg.n_list.empty()) {
    throw std::invalid_argument("config: rate_sweep needs N_list");
  }
  if (cfg.kind == ExperimentKind::certify && cfg.certify_checks.empty()) {
    throw std::invalid_argument("config: certify needs a checks list");
  }
  if (cfg.trials < 1 || cfg.batch < 1) {
    throw std::invalid_argument("config: trials and B must be >= 1");
  }
  return cfg;
}

inline json ExperimentConfig::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  j["d"] = d;
  j["m"] = m;
  j["n"] = n;
  j["linf"] = linf;
  j["delta"] = delta;
  j["curvature"] = {{"pattern", CurvatureSpec::pattern_name(curvature.pattern)},
                    {"value", curvature.value},
                    {"top", curvature.top}};
  j["sigma"] = {{"pattern", SigmaSpec::pattern_name(sigma.pattern)},
                {"value", sigma.value}};
  j["alloc"] = alloc;
  j["start_value"] = start_value;
  j["optimizers"] = optimizers;
  j["eta_grid"] = eta_grid;
  j["eta"] = eta;
  j["T"] = iterations;
  j["B"] = batch;
  j["N_list"] = n_list;
  j["msign"] = {{"method", to_string(msign.method)},
                {"iterations", msign.ns_iterations},
                {"coefficients", std::vector<double>{msign.ns_coefficients[0],
                                                     msign.ns_coefficients[1],
                                                     msign.ns_coefficients[2]}}};
  j["trials"] = trials;
  j["base_seed"] = base_seed;
  j["out"] = out;
  j["threads"] = threads;
  j["every"] = every;
  j["samples_per_checkpoint"] = samples_per_checkpoint;
  json checks = json::array();
  for (const auto& c : certify_checks) {
    checks.push_back({{"assumption", to_string(c.assumption)},
                      {"target", c.target},
                      {"pairs", c.pairs},
                      {"radius", c.radius},
                      {"constant_scale", c.constant_scale},
                      {"expect_certified", c.expect_certified}});
  }
  j["checks"] = checks;
  j["d_list"] = d_list;
  j["eps_list"] = eps_list;
  j["sigma_patterns"] = sigma_patterns;
  j["sigma_value"] = sigma_value;
  j["expect"] = expect;
  return j;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ToyCurve {
  Optimizer optimizer = Optimizer::sgd;
  double eta = 0.0;
  std::vector<double> loss;  // trial-averaged, indexed by step, length T+1
};

struct ToyResult {
  std::vector<ToyCurve> curves;
  double best_final_sgd = std::numeric_limits<double>::quiet_NaN();
  double best_eta_sgd = 0.0;
  double best_final_signsgd = std::numeric_limits<double>::quiet_NaN();
  double best_eta_signsgd = 0.0;
  bool signsgd_below_sgd = false;
};

struct SweepRow {
  std::int64_t n_actual = 0;
  std::int64_t trial = 0;
  double min_grad_l1 = 0.0;
  double final_objective = 0.0;
};

struct SweepPoint {
  std::int64_t n_target = 0;
  std::int64_t n_actual = 0;
  std::int64_t iterations = 0;
  std::int64_t batch = 0;
  double eta = 0.0;
  double mean_min_grad = 0.0;
  json instance;  // full description of the hard instance at this point
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool conclusive = false;  // r2 >= 0.9 gate for slope assertions
};

struct EquivalenceStep {
  std::int64_t step = 0;
  double deviation = 0.0;      // max abs diagonal mismatch at this iterate
  double norm_gap_rel = std::numeric_limits<double>::quiet_NaN();
};

struct EquivalenceResult {
  std::vector<EquivalenceStep> steps;  // indexed 0..T (gap undefined at T)
  double max_deviation = 0.0;
  double max_norm_gap_rel = 0.0;
};

struct CertifyOutcome {
  CertifyCheckConfig check;
  CertificateReport report;
  bool matches_expectation = false;
};

struct CompareRow {
  std::int64_t d = 0;
  std::string pattern;
  double eps = 0.0;
  double phi = std::numeric_limits<double>::quiet_NaN();
  ComplexityTerms signsgd;
  ComplexityTerms sgd_lower;
};

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace detail {

inline double final_or_inf(double v) {
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Shared engine for the two toy comparisons: every (optimizer, eta) pair in
/// the grid is run `trials` times; curves are trial averages and each
/// optimizer's best eta is the one with the lowest final loss (ties to the
/// smaller eta).
inline ToyResult run_toy(const ExperimentConfig& cfg) {
  const Eigen::Index d = cfg.d;
  const DiagonalQuadratic problem(cfg.curvature.materialize(d),
                                  VectorXd::Constant(d, cfg.start_value),
                                  cfg.sigma.materialize(d));
  std::vector<std::pair<Optimizer, double>> tasks;
  for (const auto& name : cfg.optimizers) {
    for (double eta : cfg.eta_grid) {
      tasks.emplace_back(parse_optimizer(name), eta);
    }
  }
  const std::int64_t steps = cfg.iterations;
  const std::int64_t trials = cfg.trials;
  const std::int64_t total = static_cast<std::int64_t>(tasks.size()) * trials;
  std::vector<std::vector<double>> curve_acc(
      tasks.size(), std::vector<double>(static_cast<std::size_t>(steps) + 1));
  std::vector<std::vector<double>> per_trial(
      static_cast<std::size_t>(total));

  parallel_for(total, cfg.threads, [&](std::int64_t idx) {
    const std::size_t task = static_cast<std::size_t>(idx / trials);
    const auto [opt, eta] = tasks[task];
    const auto rec = run(problem, opt,
                         ProblemBudget::make(cfg.delta, steps, cfg.batch, eta),
                         derive_seed(cfg.base_seed, static_cast<std::uint64_t>(idx)));
    auto& curve = per_trial[static_cast<std::size_t>(idx)];
    curve.resize(static_cast<std::size_t>(steps) + 1);
    for (std::size_t t = 0; t < rec.steps.size(); ++t) {
      curve[t] = rec.steps[t].objective;
    }
    curve.back() = rec.final_objective;
  });

  // deterministic reduction in trial order
  for (std::size_t task = 0; task < tasks.size(); ++task) {
    for (std::int64_t k = 0; k < trials; ++k) {
      const auto& curve =
          per_trial[task * static_cast<std::size_t>(trials) +
                    static_cast<std::size_t>(k)];
      for (std::size_t t = 0; t < curve.size(); ++t) {
        curve_acc[task][t] += curve[t];
      }
    }
    for (auto& v : curve_acc[task]) v /= static_cast<double>(trials);
  }

  ToyResult result;
  for (std::size_t task = 0; task < tasks.size(); ++task) {
    ToyCurve c;
    c.optimizer = tasks[task].first;
    c.eta = tasks[task].second;
    c.loss = std::move(curve_acc[task]);
    result.curves.push_back(std::move(c));
  }

  auto pick_best = [&](Optimizer opt, double& best_loss, double& best_eta) {
    best_loss = std::numeric_limits<double>::infinity();
    best_eta = 0.0;
    for (const auto& c : result.curves) {
      if (c.optimizer != opt) continue;
      const double final_loss = detail::final_or_inf(c.loss.back());
      if (final_loss < best_loss ||
          (final_loss == best_loss && c.eta < best_eta)) {
        best_loss = final_loss;
        best_eta = c.eta;
      }
    }
  };
  pick_best(Optimizer::sgd, result.best_final_sgd, result.best_eta_sgd);
  pick_best(Optimizer::signsgd, result.best_final_signsgd,
            result.best_eta_signsgd);
  result.signsgd_below_sgd = result.best_final_signsgd < result.best_final_sgd;
  return result;
}

/// SignSGD on freshly built hard instances across the total-budget grid.
/// For each target N the iteration count is solved from the batch schedule
/// (T = N when the batch stays at 1, T ~ sqrt(N*delta*linf)/|sigma|_1 in the
/// noise-dominated branch) and the realized N = B*T is what enters the fit.
inline SweepResult rate_sweep(const ExperimentConfig& cfg) {
  const VectorXd sig = cfg.sigma.materialize(cfg.d);
  const double sigma_l1 = sig.cwiseAbs().sum();
  SweepResult result;
  result.rows.reserve(cfg.n_list.size() * static_cast<std::size_t>(cfg.trials));

  for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
    const std::int64_t n_target = cfg.n_list[ni];
    std::int64_t iterations = n_target;
    if (sigma_l1 > 0.0) {
      const double t_noise =
          std::sqrt(static_cast<double>(n_target) * cfg.delta * cfg.linf) /
          sigma_l1;
      iterations = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(std::floor(t_noise)), 1, n_target);
    }
    const Schedule sched =
        schedule_signsgd(cfg.delta, cfg.linf, sigma_l1, iterations);
    const std::int64_t n_actual = iterations * sched.batch;
    const auto instance = build_separable_hard_for_total(
        cfg.d, cfg.linf, sig, cfg.delta, sched.eta, n_actual,
        cfg.allocation_for(sig));
    const auto budget =
        ProblemBudget::make(cfg.delta, iterations, sched.batch, sched.eta);

    std::vector<SweepRow> rows(static_cast<std::size_t>(cfg.trials));
    parallel_for(cfg.trials, cfg.threads, [&](std::int64_t k) {
      const auto rec = run(
          instance, Optimizer::signsgd, budget,
          derive_seed(cfg.base_seed,
                      static_cast<std::uint64_t>(ni) * 1000003ull +
                          static_cast<std::uint64_t>(k)));
      rows[static_cast<std::size_t>(k)] =
          SweepRow{n_actual, k, rec.min_grad_l1(), rec.final_objective};
    });

    double acc = 0.0;
    for (const auto& r : rows) acc += r.min_grad_l1;
    SweepPoint point;
    point.n_target = n_target;
    point.n_actual = n_actual;
    point.iterations = iterations;
    point.batch = sched.batch;
    point.eta = sched.eta;
    point.mean_min_grad = acc / static_cast<double>(cfg.trials);
    point.instance = instance.describe();
    result.points.push_back(point);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }

  // least-squares fit of log(mean min grad) against log(N)
  const std::size_t n_pts = result.points.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : result.points) {
    const double x = std::log(static_cast<double>(p.n_actual));
    const double y = std::log(std::max(p.mean_min_grad, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n_pts * sxx - sx * sx;
  if (n_pts >= 2 && denom > 0.0) {
    result.slope = (n_pts * sxy - sx * sy) / denom;
    result.intercept = (sy - result.slope * sx) / n_pts;
    double ss_res = 0.0, ss_tot = 0.0;
    const double y_mean = sy / n_pts;
    for (const auto& p : result.points) {
      const double x = std::log(static_cast<double>(p.n_actual));
      const double y = std::log(std::max(p.mean_min_grad, 1e-300));
      const double fit = result.intercept + result.slope * x;
      ss_res += (y - fit) * (y - fit);
      ss_tot += (y - y_mean) * (y - y_mean);
    }
    result.r2 = ss_tot == 0.0 ? (ss_res == 0.0 ? 1.0 : 0.0)
                              : 1.0 - ss_res / ss_tot;
  }
  result.conclusive = n_pts >= 2 && result.r2 >= 0.9;
  return result;
}

/// Muon (per cfg.msign) on the lifted instance against SignSGD on the inner
/// one, both driven by the same oracle stream; reports the diagonal
/// trajectory mismatch and the nuclear-vs-l1 gradient norm gap per step.
inline EquivalenceResult equivalence_check(const ExperimentConfig& cfg) {
  if (cfg.n < cfg.m) {
    throw std::invalid_argument("equivalence_check: need n >= m");
  }
  const VectorXd sig = cfg.sigma.materialize(cfg.m);
  const auto inner = build_separable_hard_for_total(
      cfg.m, cfg.linf, sig, cfg.delta, cfg.eta, cfg.iterations * cfg.batch,
      cfg.allocation_for(sig));
  const auto lift =
      build_matrix_lift(inner, cfg.n, derive_seed(cfg.base_seed, 0xFACEull));
  const auto budget =
      ProblemBudget::make(cfg.delta, cfg.iterations, cfg.batch, cfg.eta);
  const std::uint64_t seed = derive_seed(cfg.base_seed, 0x0D15EA5Eull);

  RunOptions vec_opts;
  vec_opts.record_iterates = true;
  const auto rec_v = run(inner, Optimizer::signsgd, budget, seed, vec_opts);
  RunOptions mat_opts;
  mat_opts.record_iterates = true;
  mat_opts.msign = cfg.msign;
  const auto rec_m = run(lift, Optimizer::muon, budget, seed, mat_opts);

  EquivalenceResult result;
  result.steps.resize(rec_v.iterates.size());
  for (std::size_t t = 0; t < rec_v.iterates.size(); ++t) {
    const VectorXd diag = lift.inner_point(rec_m.matrix_iterates[t]);
    EquivalenceStep s;
    s.step = static_cast<std::int64_t>(t);
    s.deviation = (diag - rec_v.iterates[t]).cwiseAbs().maxCoeff();
    if (t < rec_v.steps.size()) {
      const double l1 = *rec_v.steps[t].grad_l1;
      const double nuc = *rec_m.steps[t].grad_nuclear;
      s.norm_gap_rel = std::abs(nuc - l1) / (1.0 + l1);
      result.max_norm_gap_rel = std::max(result.max_norm_gap_rel,
                                         s.norm_gap_rel);
    }
    result.max_deviation = std::max(result.max_deviation, s.deviation);
    result.steps[t] = s;
  }
  return result;
}

/// Builds the per-check instance and runs the sampled certificate.
inline std::vector<CertifyOutcome> run_certify(const ExperimentConfig& cfg) {
  std::vector<CertifyOutcome> outcomes;
  for (std::size_t i = 0; i < cfg.certify_checks.size(); ++i) {
    const auto& check = cfg.certify_checks[i];
    Rng rng(derive_seed(cfg.base_seed, 0xCE27ull + i));
    CertifyOptions opt;
    opt.radius = check.radius;
    opt.constant_scale = check.constant_scale;
    CertificateReport report;
    if (check.target == "quadratic") {
      const DiagonalQuadratic q(cfg.curvature.materialize(cfg.d),
                                VectorXd::Constant(cfg.d, cfg.start_value),
                                cfg.sigma.materialize(cfg.d));
      report = certify(check.assumption, q, check.pairs, rng, opt);
    } else if (check.target == "lift") {
      const DiagonalQuadratic innerq(cfg.curvature.materialize(cfg.m),
                                     VectorXd::Constant(cfg.m, cfg.start_value),
                                     cfg.sigma.materialize(cfg.m));
      const auto lift = build_matrix_lift(
          innerq, cfg.n >= cfg.m ? cfg.n : cfg.m,
          derive_seed(cfg.base_seed, 0x11F7ull + i));
      report = certify(check.assumption, lift, check.pairs, rng, opt);
    } else {  // hard
      const VectorXd sig = cfg.sigma.materialize(cfg.d);
      const auto inst = build_separable_hard_for_total(
          cfg.d, cfg.linf, sig, cfg.delta, cfg.eta,
          cfg.iterations * cfg.batch, cfg.allocation_for(sig));
      report = certify(check.assumption, inst, check.pairs, rng, opt);
    }
    CertifyOutcome out;
    out.check = check;
    out.report = report;
    out.matches_expectation = report.certified() == check.expect_certified;
    outcomes.push_back(std::move(out));
  }
  return outcomes;
}

/// SignSGD run on a noisy quadratic with the oracle probed along the way.
inline DensityTrace run_density(const ExperimentConfig& cfg) {
  const DiagonalQuadratic problem(cfg.curvature.materialize(cfg.d),
                                  VectorXd::Constant(cfg.d, cfg.start_value),
                                  cfg.sigma.materialize(cfg.d));
  RunOptions opts;
  opts.record_iterates = true;
  const auto rec = run(problem, Optimizer::signsgd,
                       ProblemBudget::make(cfg.delta, cfg.iterations,
                                           cfg.batch, cfg.eta),
                       derive_seed(cfg.base_seed, 0xD3ull), opts);
  Rng probe_rng(derive_seed(cfg.base_seed, 0xD4ull));
  return track_density(problem, rec.iterates, cfg.every,
                       cfg.samples_per_checkpoint, probe_rng);
}

/// Closed-form cost table over the (d, sigma pattern, eps) grid.
inline std::vector<CompareRow> complexity_compare(const ExperimentConfig& cfg) {
  std::vector<CompareRow> rows;
  for (std::int64_t d : cfg.d_list) {
    for (const auto& pattern : cfg.sigma_patterns) {
      SigmaSpec spec;
      spec.pattern = SigmaSpec::parse_pattern(pattern);
      spec.value = cfg.sigma_value;
      const VectorXd sig = spec.materialize(d);
      for (double eps : cfg.eps_list) {
        CompareRow row;
        row.d = d;
        row.pattern = pattern;
        row.eps = eps;
        if (sig.cwiseAbs().sum() > 0.0) row.phi = density(sig);
        row.signsgd = complexity_signsgd_terms(cfg.linf, cfg.delta, sig, eps);
        row.sgd_lower =
            complexity_sgd_lower_terms(cfg.linf, cfg.delta, sig, eps, d);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

namespace detail {

inline void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

}  // namespace detail

/// Writes <out>.meta.json next to the CSV: version string, full config echo
/// and a per-kind summary, so a sweep is reproducible from its sidecar.
inline void write_meta(const ExperimentConfig& cfg, const json& summary) {
  detail::ensure_parent_dir(cfg.out);
  json j;
  j["version"] = std::string(kVersion);
  j["config"] = cfg.to_json();
  j["summary"] = summary;
  std::ofstream out(cfg.out + ".meta.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + cfg.out + ".meta.json");
  out << j.dump(2) << '\n';
}

inline json write_toy_outputs(const ExperimentConfig& cfg,
                              const ToyResult& result) {
  detail::ensure_parent_dir(cfg.out);
  CsvWriter csv(cfg.out + ".csv", {"optimizer", "eta", "step", "loss"});
  for (const auto& curve : result.curves) {
    for (std::size_t t = 0; t < curve.loss.size(); ++t) {
      csv.row({to_string(curve.optimizer), format_double(curve.eta),
               format_int(static_cast<std::int64_t>(t)),
               format_double(curve.loss[t])});
    }
  }
  json summary;
  summary["best_final_sgd"] = result.best_final_sgd;
  summary["best_eta_sgd"] = result.best_eta_sgd;
  summary["best_final_signsgd"] = result.best_final_signsgd;
  summary["best_eta_signsgd"] = result.best_eta_signsgd;
  summary["signsgd_below_sgd"] = result.signsgd_below_sgd;
  write_meta(cfg, summary);
  return summary;
}

inline json write_sweep_outputs(const ExperimentConfig& cfg,
                                const SweepResult& result) {
  detail::ensure_parent_dir(cfg.out);
  CsvWriter csv(cfg.out + ".csv",
                {"n", "trial", "optimizer", "min_grad_l1", "final_objective"});
  for (const auto& r : result.rows) {
    csv.row({format_int(r.n_actual), format_int(r.trial), "signsgd",
             format_double(r.min_grad_l1), format_double(r.final_objective)});
  }
  json pts = json::array();
  for (const auto& p : result.points) {
    pts.push_back({{"n_target", p.n_target},
                   {"n_actual", p.n_actual},
                   {"T", p.iterations},
                   {"B", p.batch},
                   {"eta", p.eta},
                   {"mean_min_grad", p.mean_min_grad},
                   {"instance", p.instance}});
  }
  json summary;
  summary["points"] = pts;
  summary["slope"] = result.slope;
  summary["intercept"] = result.intercept;
  summary["r2"] = result.r2;
  summary["conclusive"] = result.conclusive;
  write_meta(cfg, summary);
  return summary;
}

inline json write_equivalence_outputs(const ExperimentConfig& cfg,
                                      const EquivalenceResult& result) {
  detail::ensure_parent_dir(cfg.out);
  CsvWriter csv(cfg.out + ".csv",
                {"step", "max_abs_deviation", "nuclear_l1_gap_rel"});
  for (const auto& s : result.steps) {
    csv.row({format_int(s.step), format_double(s.deviation),
             format_double(s.norm_gap_rel)});
  }
  json summary;
  summary["max_deviation"] = result.max_deviation;
  summary["max_norm_gap_rel"] = result.max_norm_gap_rel;
  summary["msign_method"] = to_string(cfg.msign.method);
  write_meta(cfg, summary);
  return summary;
}

inline json write_certify_outputs(const ExperimentConfig& cfg,
                                  const std::vector<CertifyOutcome>& outcomes) {
  detail::ensure_parent_dir(cfg.out);
  CsvWriter csv(cfg.out + ".csv",
                {"check", "assumption", "target", "constant_scale", "pairs",
                 "radius", "worst_violation", "stat_allowance", "certified",
                 "expected_certified"});
  json reports = json::array();
  bool all_ok = true;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    csv.row({format_int(static_cast<std::int64_t>(i)),
             to_string(o.check.assumption), o.check.target,
             format_double(o.check.constant_scale),
             format_int(o.report.pairs_tested), format_double(o.check.radius),
             format_double(o.report.worst_violation),
             format_double(o.report.stat_allowance),
             o.report.certified() ? "true" : "false",
             o.check.expect_certified ? "true" : "false"});
    reports.push_back(o.report.to_json());
    all_ok = all_ok && o.matches_expectation;
  }
  json summary;
  summary["reports"] = reports;
  summary["all_match_expectations"] = all_ok;
  write_meta(cfg, summary);
  return summary;
}

inline json write_density_outputs(const ExperimentConfig& cfg,
                                  const DensityTrace& trace) {
  detail::ensure_parent_dir(cfg.out);
  std::ofstream out(cfg.out + ".csv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + cfg.out + ".csv");
  trace.to_csv(out);
  out.close();
  json summary;
  if (!trace.checkpoints.empty()) {
    const auto& last = trace.checkpoints.back();
    summary["checkpoints"] = trace.checkpoints.size();
    summary["phi_last"] =
        last.phi ? json(*last.phi) : json(nullptr);
  }
  write_meta(cfg, summary);
  return summary;
}

inline json write_compare_outputs(const ExperimentConfig& cfg,
                                  const std::vector<CompareRow>& rows) {
  detail::ensure_parent_dir(cfg.out);
  CsvWriter csv(cfg.out + ".csv",
                {"d", "sigma_pattern", "eps", "phi", "signsgd_total",
                 "sgd_lower_total", "ratio_total", "ratio_deterministic",
                 "ratio_stochastic"});
  for (const auto& r : rows) {
    const double ratio_det = r.sgd_lower.deterministic / r.signsgd.deterministic;
    const double ratio_sto =
        r.signsgd.stochastic == 0.0
            ? std::numeric_limits<double>::quiet_NaN()
            : r.sgd_lower.stochastic / r.signsgd.stochastic;
    csv.row({format_int(r.d), r.pattern, format_double(r.eps),
             format_double(r.phi), format_double(r.signsgd.total()),
             format_double(r.sgd_lower.total()),
             format_double(r.sgd_lower.total() / r.signsgd.total()),
             format_double(ratio_det), format_double(ratio_sto)});
  }
  json summary;
  summary["rows"] = rows.size();
  write_meta(cfg, summary);
  return summary;
}

}  // namespace signlab

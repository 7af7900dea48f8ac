// Acceptance suite: end-to-end checks of the laboratory's headline claims,
// one pass/fail line per criterion. Criterion 11 exercises the CLI binary,
// whose path comes from argv[1] or the SIGNLAB_CLI environment variable.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "signlab/lab.hpp"

namespace fs = std::filesystem;
using namespace signlab;

namespace {

struct Criterion {
  int index;
  std::string name;
  double time_limit_s;
  std::function<void(std::ostream&)> body;  // throws on failure
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string cli_path;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Resisting-function certificate
// ---------------------------------------------------------------------------

void criterion_resisting(std::ostream& log) {
  for (std::int64_t n : {16, 256, 4096}) {
    const double eps = 1.0 / (2.0 * std::sqrt(static_cast<double>(n)));
    const auto f = build_resisting(1.0, eps, n, 1.0);

    // (a) derivative is exactly -eps on the query grid
    double worst_grid = 0.0;
    for (std::int64_t t = 1; t <= n; ++t) {
      const double x = 1.0 + static_cast<double>(t - 1);
      worst_grid = std::max(worst_grid, std::abs(f.derivative(x) + eps));
    }
    require(worst_grid <= 1e-12,
            "query-grid derivative off by " + format_double(worst_grid));

    // (b)+(c) dense scan: 1e4 points per segment plus 10-spacing tails
    const int per_segment = 10000;
    const double h = f.eta / per_segment;
    const std::int64_t total = (n + 20) * per_segment;
    const double x0 = f.anchor - 10.0 * f.eta;
    double min_value = std::numeric_limits<double>::infinity();
    double max_second = 0.0;
    double max_slope_mismatch = 0.0;
    double v_prev = 0.0, d_prev = 0.0, v_cur = 0.0, d_cur = 0.0;
    for (std::int64_t k = 0; k <= total; ++k) {
      const PointEval e = f.eval_unscaled(x0 + static_cast<double>(k) * h);
      min_value = std::min(min_value, e.value);
      if (k >= 2) {
        max_second =
            std::max(max_second, std::abs((e.derivative - d_prev) / (2.0 * h)));
        max_slope_mismatch =
            std::max(max_slope_mismatch,
                     std::abs((e.value - v_prev) / (2.0 * h) - d_cur));
      }
      v_prev = v_cur;
      d_prev = d_cur;
      v_cur = e.value;
      d_cur = e.derivative;
    }
    const double gap = f.value(f.anchor) - min_value;
    require(gap <= 1.0 + 1e-9, "gap " + format_double(gap) + " exceeds 1");
    require(max_second <= 1.0 + 1e-6,
            "curvature estimate " + format_double(max_second) + " exceeds 1");
    require(max_slope_mismatch <= h * (1.0 + 1e-6) + 1e-9,
            "value/derivative mismatch " + format_double(max_slope_mismatch));
    log << "n=" << n << " gap=" << format_double(gap)
        << " |p''|max=" << format_double(max_second) << "  ";
  }
}

// ---------------------------------------------------------------------------
// 2. Bimodal oracle moments
// ---------------------------------------------------------------------------

void criterion_bimodal_moments(std::ostream& log) {
  const BimodalOracleSpec spec{1.0, 0.1};
  const double true_grad = -0.2;  // magnitude 2*eps, where the variance is exact
  Rng rng(20250803);
  const std::int64_t draws = 1000000;
  double acc = 0.0, acc2 = 0.0;
  for (std::int64_t i = 0; i < draws; ++i) {
    const double g = sample_bimodal(spec, true_grad, rng);
    acc += g;
    acc2 += g * g;
  }
  const double mean = acc / static_cast<double>(draws);
  const double var = acc2 / static_cast<double>(draws) - mean * mean;
  log << "mean=" << format_double(mean) << " var=" << format_double(var);
  require(std::abs(mean - true_grad) <= 3e-3,
          "sample mean " + format_double(mean) + " off by more than 3e-3");
  require(std::abs(var - 1.0) <= 0.01,
          "sample variance " + format_double(var) + " off by more than 1%");
}

// ---------------------------------------------------------------------------
// 3. Stall dynamics
// ---------------------------------------------------------------------------

void criterion_stall_dynamics(std::ostream& log) {
  // unit spacing with a power-of-two gradient floor keeps iterates exact
  const double eps = 1.0 / 128.0;
  const double sigma = 6.0 * eps;  // stall probability 0.9 exactly
  const std::int64_t segments = 1024;
  const std::int64_t steps = 1000;
  const auto p = build_resisting(1.0, 2.0 * eps, segments, 1.0);
  const auto inst = SeparableHardInstance::single(p, {sigma, eps});
  const double move_prob =
      4.0 * eps * eps / (sigma * sigma + 4.0 * eps * eps);

  const std::int64_t trials = 10000;
  double sum_m = 0.0, sum_m2 = 0.0;
  RunOptions opts;
  opts.record_iterates = true;
  for (std::int64_t k = 0; k < trials; ++k) {
    const auto rec = run(inst, Optimizer::signsgd,
                         ProblemBudget::make(1.0, steps, 1, 1.0),
                         derive_seed(97531, static_cast<std::uint64_t>(k)),
                         opts);
    std::int64_t moves = 0;
    for (std::size_t t = 0; t < rec.steps.size(); ++t) {
      require(rec.iterates[t](0) == 1.0 + static_cast<double>(moves),
              "iterate identity broke at trial " + format_int(k) + " step " +
                  format_int(static_cast<std::int64_t>(t)));
      const double delta = rec.iterates[t + 1](0) - rec.iterates[t](0);
      require(delta == 0.0 || delta == 1.0,
              "iterate retreated or skipped at trial " + format_int(k));
      moves += rec.steps[t].moved ? 1 : 0;
    }
    sum_m += static_cast<double>(moves);
    sum_m2 += static_cast<double>(moves) * static_cast<double>(moves);
  }
  const double mean_m = sum_m / static_cast<double>(trials);
  const double var_m =
      sum_m2 / static_cast<double>(trials) - mean_m * mean_m;
  const double se_mean = std::sqrt(var_m / static_cast<double>(trials));
  const double bound =
      move_prob * static_cast<double>(steps) + 3.0 * se_mean;
  log << "mean moves=" << format_double(mean_m)
      << " bound=" << format_double(bound);
  require(mean_m <= bound, "mean move count " + format_double(mean_m) +
                               " above " + format_double(bound));
}

// ---------------------------------------------------------------------------
// 4. Rate exponents
// ---------------------------------------------------------------------------

void criterion_rate_exponents(std::ostream& log) {
  auto sweep_cfg = [&](bool noisy) {
    json j;
    j["kind"] = "rate_sweep";
    j["d"] = 1;
    j["N_list"] = {256, 512, 1024, 2048, 4096, 8192, 16384, 32768, 65536};
    j["trials"] = 64;
    j["base_seed"] = noisy ? 1009u : 1013u;
    if (noisy) {
      j["sigma"] = {{"pattern", "uniform"}, {"value", 1.0}};
    } else {
      j["sigma"] = {{"pattern", "zero"}};
    }
    return ExperimentConfig::from_json(j);
  };

  const SweepResult clean = rate_sweep(sweep_cfg(false));
  log << "clean slope=" << format_double(clean.slope)
      << " r2=" << format_double(clean.r2);
  require(clean.r2 >= 0.9, "noiseless fit inconclusive, r2 = " +
                               format_double(clean.r2));
  require(std::abs(clean.slope + 0.5) <= 0.1,
          "noiseless slope " + format_double(clean.slope) +
              " outside -0.5 +- 0.1");

  const SweepResult noisy = rate_sweep(sweep_cfg(true));
  log << "  noisy slope=" << format_double(noisy.slope)
      << " r2=" << format_double(noisy.r2);
  require(noisy.r2 >= 0.9,
          "noise-dominated fit inconclusive, r2 = " + format_double(noisy.r2));
  require(std::abs(noisy.slope + 0.25) <= 0.1,
          "noise-dominated slope " + format_double(noisy.slope) +
              " outside -0.25 +- 0.1");
}

// ---------------------------------------------------------------------------
// 5. Muon <-> SignSGD trajectory collapse
// ---------------------------------------------------------------------------

void criterion_collapse(std::ostream& log) {
  for (std::int64_t m : {4, 8, 32}) {
    json j;
    j["kind"] = "equivalence";
    j["m"] = m;
    j["n"] = m;
    j["sigma"] = {{"pattern", "uniform"}, {"value", 0.1}};
    j["T"] = 1000;
    j["eta"] = 0.01;
    j["base_seed"] = 4242u + static_cast<unsigned>(m);
    const auto cfg = ExperimentConfig::from_json(j);
    const EquivalenceResult result = equivalence_check(cfg);
    log << "m=" << m << " dev=" << format_double(result.max_deviation)
        << " gap=" << format_double(result.max_norm_gap_rel) << "  ";
    require(result.max_deviation <= 1e-8,
            "trajectory deviation " + format_double(result.max_deviation) +
                " above 1e-8 at m = " + format_int(m));
    require(result.max_norm_gap_rel <= 1e-10,
            "nuclear/l1 gap " + format_double(result.max_norm_gap_rel) +
                " above 1e-10 at m = " + format_int(m));
  }
}

// ---------------------------------------------------------------------------
// 6. Matrix covariance bound
// ---------------------------------------------------------------------------

void criterion_matrix_covariance(std::ostream& log) {
  VectorXd sig(8);
  sig << 0.45, 0.6, 0.5, 0.7, 0.3, 0.55, 0.65, 0.4;
  const auto inner = build_separable_hard_for_total(8, 1.0, sig, 1.0, 0.05,
                                                    2000,
                                                    Allocation::stochastic);
  const auto lift = build_matrix_lift(inner, 8, 808);
  Rng rng(606060);
  const auto b1 = check_matrix_covariance(lift, lift.start(), 100000, 1, rng);
  const auto b4 = check_matrix_covariance(lift, lift.start(), 100000, 4, rng);
  const double ratio = b4.observed_scale / b1.observed_scale;
  log << "viol(B=1)=" << format_double(b1.worst_violation)
      << " viol(B=4)=" << format_double(b4.worst_violation)
      << " envelope ratio=" << format_double(ratio);
  require(b1.certified(), "B=1 residual above the statistical allowance");
  require(b4.certified(), "B=4 residual above the statistical allowance");
  require(std::abs(ratio - 0.25) <= 0.05,
          "moment envelope ratio " + format_double(ratio) + " not near 1/4");
}

// ---------------------------------------------------------------------------
// 7. Smoothness certificates
// ---------------------------------------------------------------------------

void criterion_smoothness_certificates(std::ostream& log) {
  VectorXd curv(8);
  curv << 10.0, 1.0, 0.5, 2.0, 1.5, 0.25, 3.0, 0.75;
  const DiagonalQuadratic q(curv, VectorXd::Zero(8));

  Rng rng(777);
  const auto agg = certify(AssumptionKind::linf_smooth, q, 1000, rng);
  require(agg.certified() && agg.worst_violation <= 1e-10,
          "aggregate sup-norm certificate failed, worst violation " +
              format_double(agg.worst_violation));

  Rng rng_half(777);
  CertifyOptions under;
  under.constant_scale = 0.5;
  const auto bad = certify(AssumptionKind::linf_smooth, q, 1000, rng_half, under);
  require(!bad.certified() && bad.witness.has_value(),
          "under-reported sup-norm constant was not refuted");

  const auto lift = build_matrix_lift(q, 10, 5150);
  Rng rng_m(778);
  const auto spec = certify(AssumptionKind::spectral_smooth, lift, 1000, rng_m);
  require(spec.certified() && spec.worst_violation <= 1e-10,
          "spectral certificate failed, worst violation " +
              format_double(spec.worst_violation));

  Rng rng_m2(778);
  const auto bad_m =
      certify(AssumptionKind::spectral_smooth, lift, 1000, rng_m2, under);
  require(!bad_m.certified() && bad_m.witness.has_value(),
          "under-reported spectral constant was not refuted");
  log << "worst certified violation="
      << format_double(std::max(agg.worst_violation, spec.worst_violation));
}

// ---------------------------------------------------------------------------
// 8. Toy reproductions
// ---------------------------------------------------------------------------

void criterion_toys(std::ostream& log) {
  {
    json j;
    j["kind"] = "toy_deterministic";
    j["base_seed"] = 860u;
    const auto cfg = ExperimentConfig::from_json(j);  // d=5000, spiked default?
    ExperimentConfig fixed = cfg;
    fixed.curvature.pattern = CurvatureSpec::Pattern::spiked;
    fixed.curvature.top = 1000.0;
    fixed.curvature.value = 1.0;
    const ToyResult det = run_toy(fixed);
    log << "det best sgd=" << format_double(det.best_final_sgd)
        << " signsgd=" << format_double(det.best_final_signsgd);
    require(det.signsgd_below_sgd,
            "imbalanced quadratic: signsgd did not beat sgd");
  }
  {
    json j;
    j["kind"] = "toy_sparse_noise";
    j["sigma"] = {{"pattern", "one_hot"}, {"value", 100.0}};
    j["trials"] = 10;
    j["base_seed"] = 861u;
    j["threads"] = 4;
    const auto cfg = ExperimentConfig::from_json(j);
    const ToyResult sto = run_toy(cfg);
    log << "  sparse best sgd=" << format_double(sto.best_final_sgd)
        << " signsgd=" << format_double(sto.best_final_signsgd);
    require(sto.signsgd_below_sgd,
            "sparse-noise quadratic: signsgd did not beat sgd");
  }
}

// ---------------------------------------------------------------------------
// 9. Density baseline
// ---------------------------------------------------------------------------

void criterion_density_baseline(std::ostream& log) {
  const Eigen::Index d = 10000;
  const int samples = 1000;
  Rng rng(909090);
  double acc = 0.0;
  VectorXd g(d);
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < d; ++i) g(i) = rng.normal();
    acc += density(g);
  }
  const double mean_phi = acc / samples;
  log << "gaussian phi=" << format_double(mean_phi);
  require(std::abs(mean_phi - 2.0 / M_PI) <= 0.01,
          "gaussian density " + format_double(mean_phi) +
              " not within 0.01 of 2/pi");

  // one-hot noise: every draw carries density exactly 1/d
  const Eigen::Index d2 = 256;
  VectorXd sig = VectorXd::Zero(d2);
  sig(17) = 3.0;
  DiagonalQuadratic hot(VectorXd::Ones(d2), VectorXd::Ones(d2), sig);
  std::vector<VectorXd> iterates = {hot.start()};
  Rng rng2(909091);
  const auto trace = track_density(hot, iterates, 1, 200, rng2);
  require(trace.checkpoints.size() == 1 && trace.checkpoints[0].phi.has_value(),
          "one-hot trace missing a density value");
  const double phi_hot = *trace.checkpoints[0].phi;
  log << " one-hot phi=" << format_double(phi_hot);
  require(std::abs(phi_hot - 1.0 / static_cast<double>(d2)) <= 1e-12,
          "one-hot density " + format_double(phi_hot) + " not at 1/d");
}

// ---------------------------------------------------------------------------
// 10. Complexity calculator identities
// ---------------------------------------------------------------------------

void criterion_complexity_identities(std::ostream& log) {
  const double eps = 0.25;
  for (std::int64_t d : {2, 10, 1000}) {
    VectorXd onehot = VectorXd::Zero(d);
    onehot(0) = 1.0;
    const auto sgd = complexity_sgd_lower_terms(1.0, 1.0, onehot, eps, d);
    const auto sign = complexity_signsgd_terms(1.0, 1.0, onehot, eps);
    require(sgd.stochastic / sign.stochastic == static_cast<double>(d),
            "one-hot stochastic ratio not exactly d at d = " + format_int(d));

    VectorXd uniform = VectorXd::Ones(d);
    const auto sgd_u = complexity_sgd_lower_terms(1.0, 1.0, uniform, eps, d);
    const auto sign_u = complexity_signsgd_terms(1.0, 1.0, uniform, eps);
    require(sgd_u.stochastic == sign_u.stochastic,
            "uniform stochastic ratio not exactly 1 at d = " + format_int(d));
  }
  VectorXd one = VectorXd::Ones(1);
  require(complexity_sgd_lower(1.0, 1.0, one, eps, 1) ==
              complexity_signsgd(1.0, 1.0, one, eps),
          "d = 1 total ratio not exactly 1");
  log << "one-hot ratio=d, uniform ratio=1, d=1 ratio=1 (exact)";
}

// ---------------------------------------------------------------------------
// 11. CLI determinism
// ---------------------------------------------------------------------------

void criterion_cli_determinism(std::ostream& log) {
  require(!cli_path.empty(),
          "CLI path not provided (argv[1] or SIGNLAB_CLI)");
  const fs::path dir = fs::temp_directory_path() / "signlab_acceptance";
  fs::create_directories(dir);

  struct Case {
    std::string name;
    std::string subcommand;
    json config;
  };
  std::vector<Case> cases;
  {
    json j;
    j["kind"] = "rate_sweep";
    j["N_list"] = {256, 1024, 4096};
    j["sigma"] = {{"pattern", "uniform"}, {"value", 1.0}};
    j["trials"] = 16;
    j["threads"] = 4;  // parallel trials on purpose
    j["base_seed"] = 12001u;
    cases.push_back({"sweep_par", "sweep", j});
  }
  {
    json j;
    j["kind"] = "toy_sparse_noise";
    j["d"] = 20;
    j["sigma"] = {{"pattern", "one_hot"}, {"value", 25.0}};
    j["eta_grid"] = {1e-2, 1e-3};
    j["T"] = 300;
    j["trials"] = 8;
    j["threads"] = 4;
    j["base_seed"] = 12002u;
    cases.push_back({"toy_par", "toy-noise", j});
  }
  {
    json j;
    j["kind"] = "density";
    j["d"] = 100;
    j["sigma"] = {{"pattern", "uniform"}, {"value", 1.0}};
    j["T"] = 20;
    j["every"] = 5;
    j["samples_per_checkpoint"] = 50;
    j["base_seed"] = 12003u;
    cases.push_back({"density", "density", j});
  }

  for (auto& c : cases) {
    const fs::path cfg_path = dir / (c.name + ".json");
    const fs::path out_prefix = dir / (c.name + "_out");
    c.config["out"] = out_prefix.string();
    {
      std::ofstream out(cfg_path);
      out << c.config.dump(2);
    }
    const std::string cmd = cli_path + " " + c.subcommand + " --config " +
                            cfg_path.string() + " > /dev/null 2>&1";
    require(std::system(cmd.c_str()) == 0, c.name + ": first run failed");
    const std::string csv_first = slurp(out_prefix.string() + ".csv");
    const std::string meta_first = slurp(out_prefix.string() + ".meta.json");
    require(std::system(cmd.c_str()) == 0, c.name + ": second run failed");
    require(csv_first == slurp(out_prefix.string() + ".csv"),
            c.name + ": CSV bytes differ between identical runs");
    require(meta_first == slurp(out_prefix.string() + ".meta.json"),
            c.name + ": sidecar bytes differ between identical runs");
  }
  log << cases.size() << " commands byte-identical on rerun";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    cli_path = argv[1];
  } else if (const char* env = std::getenv("SIGNLAB_CLI")) {
    cli_path = env;
  }

  const std::vector<Criterion> criteria = {
      {1, "resisting-function certificate (n = 16, 256, 4096)", 5.0,
       criterion_resisting},
      {2, "bimodal oracle moments (1e6 draws)", 2.0, criterion_bimodal_moments},
      {3, "stall dynamics (1e4 trials, T = 1e3)", 30.0,
       criterion_stall_dynamics},
      {4, "rate exponents (N = 2^8..2^16, 64 trials)", 600.0,
       criterion_rate_exponents},
      {5, "muon/signsgd collapse (m = 4, 8, 32)", 60.0, criterion_collapse},
      {6, "matrix covariance bound (B = 1, 4)", 60.0,
       criterion_matrix_covariance},
      {7, "smoothness certificates", 10.0, criterion_smoothness_certificates},
      {8, "toy reproductions", 120.0, criterion_toys},
      {9, "density baseline (2/pi and 1/d)", 10.0, criterion_density_baseline},
      {10, "complexity calculator identities", 10.0,
       criterion_complexity_identities},
      {11, "CLI determinism with parallel trials", 120.0,
       criterion_cli_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::ostringstream detail;
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      c.body(detail);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    bool pass = error.empty();
    if (pass && elapsed > c.time_limit_s) {
      error = "runtime " + format_double(elapsed) + "s exceeds " +
              format_double(c.time_limit_s) + "s";
      pass = false;
    }
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.index << ": "
              << c.name << "  [" << format_double(elapsed) << "s]";
    if (!detail.str().empty()) std::cout << "  (" << detail.str() << ")";
    if (!pass) std::cout << "  -- " << error;
    std::cout << "\n";
    if (!pass) ++failures;
  }
  if (failures > 0) {
    std::cout << failures << " criterion(s) failed\n";
    return 1;
  }
  std::cout << "all criteria passed\n";
  return 0;
}

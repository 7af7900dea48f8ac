#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "signlab/geometry.hpp"
#include "signlab/problems.hpp"
#include "signlab/rng.hpp"

namespace signlab {

enum class Optimizer { sgd, signsgd, muon };

inline std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::sgd: return "sgd";
    case Optimizer::signsgd: return "signsgd";
    case Optimizer::muon: return "muon";
  }
  return "?";
}

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "signsgd") return Optimizer::signsgd;
  if (s == "muon") return Optimizer::muon;
  throw std::invalid_argument("unknown optimizer: " + s);
}

/// sign with sign(0) = 0. Coordinates with a zero gradient must not move.
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// ---------------------------------------------------------------------------
// Single-step update rules
// ---------------------------------------------------------------------------

inline VectorXd sgd_step(const VectorXd& x, const VectorXd& g, double eta) {
  if (x.size() != g.size()) {
    throw std::invalid_argument("sgd_step: dimension mismatch");
  }
  return x - eta * g;
}

/// Each coordinate moves by exactly -eta, 0 or +eta.
inline VectorXd signsgd_step(const VectorXd& x, const VectorXd& g, double eta) {
  if (x.size() != g.size()) {
    throw std::invalid_argument("signsgd_step: dimension mismatch");
  }
  VectorXd out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) -= eta * sign(g(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix sign
// ---------------------------------------------------------------------------

enum class MsignMethod { exact_svd, newton_schulz };

struct MsignConfig {
  MsignMethod method = MsignMethod::exact_svd;
  int ns_iterations = 5;
  // Quintic update X <- aX + (b*A + c*A^2)X with A = XX^T, after Frobenius
  // pre-normalization. The defaults bring singular values near 1 in few
  // iterations at the cost of a residual band around 1; pass the classical
  // cubic (1.5, -0.5, 0) with more iterations for high accuracy.
  std::array<double, 3> ns_coefficients{3.4445, -4.7750, 2.0315};
  double zero_singular_tol = 1e-12;
};

namespace detail {

inline MatrixXd msign_exact(const MatrixXd& g, double zero_tol) {
  Eigen::JacobiSVD<MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  MatrixXd out = MatrixXd::Zero(g.rows(), g.cols());
  if (s.size() == 0 || s(0) <= 0.0) return out;
  const double cut = zero_tol * s(0);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) {
      out.noalias() += svd.matrixU().col(i) * svd.matrixV().col(i).transpose();
    }
  }
  return out;
}

inline MatrixXd msign_newton_schulz(const MatrixXd& g, int iterations,
                                    const std::array<double, 3>& coeff) {
  const double fro = g.norm();
  if (fro == 0.0) return MatrixXd::Zero(g.rows(), g.cols());
  MatrixXd x = g / fro;
  const auto [a, b, c] = coeff;
  for (int it = 0; it < iterations; ++it) {
    const MatrixXd xxt = x * x.transpose();
    x = a * x + (b * xxt + c * xxt * xxt) * x;
  }
  return x;
}

}  // namespace detail

/// Orthogonal polar factor U V^T of the compact SVD, with singular values
/// below zero_singular_tol (relative to the largest) treated as exact zeros.
/// This extends sign(0) = 0 to matrices: directions carrying no gradient do
/// not move. Inputs wider than tall are handled by transposition.
inline MatrixXd msign(const MatrixXd& g, const MsignConfig& cfg = {}) {
  if (!g.allFinite()) {
    throw std::invalid_argument("msign: non-finite entries");
  }
  if (g.rows() > g.cols()) {
    return msign(MatrixXd(g.transpose()), cfg).transpose();
  }
  switch (cfg.method) {
    case MsignMethod::exact_svd:
      return detail::msign_exact(g, cfg.zero_singular_tol);
    case MsignMethod::newton_schulz:
      return detail::msign_newton_schulz(g, cfg.ns_iterations,
                                         cfg.ns_coefficients);
  }
  throw std::logic_error("msign: unreachable");
}

inline MatrixXd muon_step(const MatrixXd& w, const MatrixXd& g, double eta,
                          const MsignConfig& cfg = {}) {
  if (w.rows() != g.rows() || w.cols() != g.cols()) {
    throw std::invalid_argument("muon_step: dimension mismatch");
  }
  return w - eta * msign(g, cfg);
}

// ---------------------------------------------------------------------------
// Step-size / batch schedules
// ---------------------------------------------------------------------------

struct Schedule {
  double eta = 0.0;
  std::int64_t batch = 1;
};

/// eta = sqrt(2*delta / (linf*T)), B = max{1, ceil(|sigma|_1^2 * T / (delta*linf))}.
inline Schedule schedule_signsgd(double delta, double linf, double sigma_l1,
                                 std::int64_t iterations) {
  if (delta <= 0.0 || linf <= 0.0 || iterations <= 0 || sigma_l1 < 0.0) {
    throw std::invalid_argument("schedule_signsgd: invalid inputs");
  }
  Schedule s;
  s.eta = std::sqrt(2.0 * delta / (linf * static_cast<double>(iterations)));
  const double b =
      sigma_l1 * sigma_l1 * static_cast<double>(iterations) / (delta * linf);
  s.batch = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(b)));
  return s;
}

/// Same schedule with the spectral smoothness constant and the nuclear norm
/// of the covariance bound in place of (linf, |sigma|_1).
inline Schedule schedule_muon(double delta, double lstar, double sigma_nuclear,
                              std::int64_t iterations) {
  return schedule_signsgd(delta, lstar, sigma_nuclear, iterations);
}

// ---------------------------------------------------------------------------
// Trajectory runner
// ---------------------------------------------------------------------------

struct StepStats {
  std::int64_t step = 0;
  double objective = 0.0;
  std::optional<double> grad_l1;       // vector runs
  std::optional<double> grad_nuclear;  // matrix runs
  bool moved = false;                  // did any coordinate move this step
};

struct RunOptions {
  bool record_iterates = false;
  MsignConfig msign{};
};

/// Per-step metrics of one optimization run. Entries are indexed t = 0..T-1
/// and describe the iterate before step t together with the step taken from
/// it; `final_objective` is evaluated at the post-run iterate.
struct TrajectoryRecord {
  std::vector<StepStats> steps;
  std::vector<VectorXd> iterates;         // x_0..x_T when recording is on
  std::vector<MatrixXd> matrix_iterates;  // W_0..W_T for matrix runs
  double final_objective = std::numeric_limits<double>::quiet_NaN();

  double min_grad_l1() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : steps) {
      if (s.grad_l1 && *s.grad_l1 < m) m = *s.grad_l1;
    }
    return m;
  }

  double min_grad_nuclear() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : steps) {
      if (s.grad_nuclear && *s.grad_nuclear < m) m = *s.grad_nuclear;
    }
    return m;
  }

  std::int64_t move_count() const {
    std::int64_t n = 0;
    for (const auto& s : steps) n += s.moved ? 1 : 0;
    return n;
  }
};

/// Runs `budget.iterations` steps from the problem's start point. The
/// minibatch gradient is the arithmetic mean of `budget.batch` consecutive
/// oracle draws from the run's own stream, so a (seed, batch) pair fully
/// determines the trajectory.
template <VectorProblem P>
TrajectoryRecord run(const P& problem, Optimizer opt,
                     const ProblemBudget& budget, std::uint64_t seed,
                     const RunOptions& options = {}) {
  if (opt == Optimizer::muon) {
    throw std::invalid_argument("run: muon requires a matrix problem");
  }
  Rng rng(seed);
  VectorXd x = problem.start();
  TrajectoryRecord rec;
  rec.steps.reserve(static_cast<std::size_t>(budget.iterations));
  if (options.record_iterates) rec.iterates.push_back(x);
  VectorXd gbar(problem.dim());
  for (std::int64_t t = 0; t < budget.iterations; ++t) {
    gbar.setZero();
    for (std::int64_t b = 0; b < budget.batch; ++b) {
      gbar += problem.sample_gradient(x, rng);
    }
    gbar /= static_cast<double>(budget.batch);
    const bool moved = (gbar.array() != 0.0).any();
    rec.steps.push_back({t, problem.value(x), l1_norm(problem.gradient(x)),
                         std::nullopt, moved});
    x = opt == Optimizer::sgd ? sgd_step(x, gbar, budget.step)
                              : signsgd_step(x, gbar, budget.step);
    if (options.record_iterates) rec.iterates.push_back(x);
  }
  rec.final_objective = problem.value(x);
  return rec;
}

template <MatrixProblem P>
TrajectoryRecord run(const P& problem, Optimizer opt,
                     const ProblemBudget& budget, std::uint64_t seed,
                     const RunOptions& options = {}) {
  if (opt != Optimizer::muon) {
    throw std::invalid_argument(
        "run: vector optimizers cannot drive a matrix problem");
  }
  Rng rng(seed);
  MatrixXd w = problem.start();
  TrajectoryRecord rec;
  rec.steps.reserve(static_cast<std::size_t>(budget.iterations));
  if (options.record_iterates) rec.matrix_iterates.push_back(w);
  MatrixXd gbar(problem.rows(), problem.cols());
  for (std::int64_t t = 0; t < budget.iterations; ++t) {
    gbar.setZero();
    for (std::int64_t b = 0; b < budget.batch; ++b) {
      gbar += problem.sample_gradient(w, rng);
    }
    gbar /= static_cast<double>(budget.batch);
    const MatrixXd direction = msign(gbar, options.msign);
    const bool moved = (direction.array() != 0.0).any();
    rec.steps.push_back({t, problem.value(w), std::nullopt,
                         nuclear_norm(problem.gradient(w)), moved});
    w -= budget.step * direction;
    if (options.record_iterates) rec.matrix_iterates.push_back(w);
  }
  rec.final_objective = problem.value(w);
  return rec;
}

}  // namespace signlab

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "signlab/geometry.hpp"
#include "signlab/optimizers.hpp"
#include "signlab/problems.hpp"
#include "signlab/rng.hpp"

namespace signlab {

// ---------------------------------------------------------------------------
// 1D resisting function
// ---------------------------------------------------------------------------
//
// A piecewise-quadratic function built against sign descent with step eta.
// On the query grid x_t = anchor + (t-1)*eta, t = 1..segments, the derivative
// is exactly -eps, so an optimizer walking the grid keeps seeing gradient
// magnitude eps until it leaves the resisting region. In its unscaled form
// the derivative is 1-Lipschitz and the gap from the anchor to the infimum is
// at most 1 whenever eps <= 1/(2*sqrt(segments)).
//
// Layout in unscaled coordinates u, relative to the anchor:
//   u <= 0:                    linear ramp of slope -eps
//   u in ((t-1)eta, t*eta]:    bump phi_t (two quadratic arcs) plus offset c_t
//   u > segments*eta:          quadratic tail, minimized eps past its start
//
// The offsets c_t = (t-1)*(eta^2/4 - eta*eps) make the function continuous.
//
// An instance with target curvature L and gap Delta evaluates
//   p_{L,Delta}(x) = Delta * p(x * sqrt(L/Delta)),
// which has an L-Lipschitz derivative, gap at most Delta, query spacing
// eta*sqrt(Delta/L) and query-point gradient magnitude sqrt(L*Delta)*eps.

struct PointEval {
  double value = 0.0;
  double derivative = 0.0;
};

class ResistingFunction1D {
 public:
  double eta = 1.0;            // unscaled query spacing
  double eps = 0.0;            // unscaled query-point gradient magnitude
  std::int64_t segments = 0;   // number of bump pieces
  double anchor = 0.0;         // unscaled first query point
  std::vector<double> constants;  // c_1..c_{segments+1}
  double scale_L = 1.0;
  double scale_Delta = 1.0;

  PointEval eval_unscaled(double u) const {
    const double v = u - anchor;
    if (v <= 0.0) {
      return {-eps * v, -eps};
    }
    const double span = static_cast<double>(segments) * eta;
    if (v <= span) {
      auto t = static_cast<std::int64_t>(std::ceil(v / eta));
      if (t < 1) t = 1;
      if (t > segments) t = segments;
      const double left = static_cast<double>(t - 1) * eta;
      const double mid = left + 0.5 * eta;
      const double c = constants[static_cast<std::size_t>(t - 1)];
      if (v <= mid) {
        const double dv = v - left;
        return {0.5 * dv * dv - eps * dv + c, dv - eps};
      }
      const double dv = v - (left + eta);
      return {-0.5 * dv * dv - eps * dv + 0.25 * eta * eta - eta * eps + c,
              -dv - eps};
    }
    const double w = v - span;
    const double c = constants[static_cast<std::size_t>(segments)];
    return {0.5 * w * w - eps * w + c, w - eps};
  }

  PointEval eval(double x) const {
    const double to_unscaled = std::sqrt(scale_L / scale_Delta);
    const PointEval e = eval_unscaled(x * to_unscaled);
    return {scale_Delta * e.value,
            std::sqrt(scale_L * scale_Delta) * e.derivative};
  }

  double value(double x) const { return eval(x).value; }
  double derivative(double x) const { return eval(x).derivative; }

  double scaled_spacing() const {
    return eta * std::sqrt(scale_Delta / scale_L);
  }
  double scaled_anchor() const {
    return anchor * std::sqrt(scale_Delta / scale_L);
  }
  /// t-th query point in scaled coordinates, t = 1..segments+1.
  double query_point(std::int64_t t) const {
    return scaled_anchor() + static_cast<double>(t - 1) * scaled_spacing();
  }

  ResistingFunction1D scaled(double L, double Delta) const {
    if (L <= 0.0 || Delta <= 0.0) {
      throw std::invalid_argument("ResistingFunction1D: scales must be > 0");
    }
    ResistingFunction1D out = *this;
    out.scale_L = L;
    out.scale_Delta = Delta;
    return out;
  }

  nlohmann::json describe() const {
    return {{"eta", eta},       {"eps", eps},
            {"segments", segments}, {"anchor", anchor},
            {"scale_L", scale_L},   {"scale_Delta", scale_Delta}};
  }
};

/// Builds the unscaled function. Requires eps <= 1/(2*sqrt(segments)), which
/// caps the anchor-to-infimum gap at 1.
inline ResistingFunction1D build_resisting(double eta, double eps,
                                           std::int64_t segments,
                                           double anchor) {
  if (eta <= 0.0 || eps <= 0.0 || segments < 1) {
    throw std::invalid_argument("build_resisting: invalid parameters");
  }
  const double eps_cap = 1.0 / (2.0 * std::sqrt(static_cast<double>(segments)));
  if (eps > eps_cap * (1.0 + 1e-12)) {
    throw std::invalid_argument(
        "build_resisting: eps too large for the segment count");
  }
  ResistingFunction1D f;
  f.eta = eta;
  f.eps = eps;
  f.segments = segments;
  f.anchor = anchor;
  f.constants.resize(static_cast<std::size_t>(segments) + 1);
  const double per_segment = 0.25 * eta * eta - eta * eps;
  for (std::int64_t t = 0; t <= segments; ++t) {
    f.constants[static_cast<std::size_t>(t)] =
        static_cast<double>(t) * per_segment;
  }
  return f;
}

inline std::pair<double, double> eval_resisting(const ResistingFunction1D& f,
                                                double x) {
  const PointEval e = f.eval(x);
  return {e.value, e.derivative};
}

// ---------------------------------------------------------------------------
// Bimodal stochastic gradient oracle
// ---------------------------------------------------------------------------

/// Two-point oracle: returns 0 with the stall probability
/// sigma^2/(sigma^2+4*eps^2), otherwise the true derivative inflated by
/// (sigma^2+4*eps^2)/(4*eps^2). Unbiased at every point; its variance equals
/// grad^2*sigma^2/(4*eps^2), hence exactly sigma^2 where |grad| = 2*eps.
struct BimodalOracleSpec {
  double sigma = 0.0;
  double eps = 1.0;

  double stall_probability() const {
    const double s2 = sigma * sigma;
    return s2 / (s2 + 4.0 * eps * eps);
  }
  double gain() const {
    const double s2 = sigma * sigma;
    return (s2 + 4.0 * eps * eps) / (4.0 * eps * eps);
  }
};

inline double sample_bimodal(const BimodalOracleSpec& spec, double true_grad,
                             Rng& rng) {
  const double u = rng.uniform();
  return u < spec.stall_probability() ? 0.0 : spec.gain() * true_grad;
}

// ---------------------------------------------------------------------------
// Separable hard instance
// ---------------------------------------------------------------------------

enum class Allocation { deterministic, stochastic };

/// f(x) = sum_i p_i(x_i): one scaled resisting function with an attached
/// bimodal oracle per coordinate. Per-coordinate budgets (L_i, Delta_i) are
/// allocated from the global constants so that sum L_i = linf and
/// sum Delta_i = delta; coordinates with zero allocation are flat.
class SeparableHardInstance {
 public:
  using domain = vector_domain;

  std::vector<std::optional<ResistingFunction1D>> coords;
  std::vector<BimodalOracleSpec> oracles;
  VectorXd alloc_L;
  VectorXd alloc_Delta;
  VectorXd alloc_sigma;
  Allocation mode = Allocation::deterministic;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(coords.size()); }

  VectorXd start() const {
    VectorXd x = VectorXd::Zero(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const auto& c = coords[static_cast<std::size_t>(i)];
      if (c) x(i) = c->scaled_anchor();
    }
    return x;
  }

  double value(const VectorXd& x) const {
    double v = 0.0;
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const auto& c = coords[static_cast<std::size_t>(i)];
      if (c) v += c->value(x(i));
    }
    return v;
  }

  VectorXd gradient(const VectorXd& x) const {
    VectorXd g = VectorXd::Zero(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const auto& c = coords[static_cast<std::size_t>(i)];
      if (c) g(i) = c->derivative(x(i));
    }
    return g;
  }

  /// One oracle draw. Every coordinate consumes exactly one uniform variate,
  /// flat coordinates included, so the stream layout does not depend on the
  /// allocation.
  VectorXd sample_gradient(const VectorXd& x, Rng& rng) const {
    VectorXd g = gradient(x);
    for (Eigen::Index i = 0; i < dim(); ++i) {
      g(i) = sample_bimodal(oracles[static_cast<std::size_t>(i)], g(i), rng);
    }
    return g;
  }

  double linf() const { return alloc_L.sum(); }
  const VectorXd& curvature() const { return alloc_L; }
  const VectorXd& noise_sigma() const { return alloc_sigma; }

  /// Full JSON description: dims, allocations and every coordinate's
  /// resisting-function and oracle parameters. Enough to rebuild the
  /// instance, so sweep sidecars make runs reproducible.
  nlohmann::json describe() const {
    nlohmann::json j;
    j["kind"] = "separable_hard";
    j["dim"] = dim();
    j["mode"] = mode == Allocation::deterministic ? "deterministic"
                                                  : "stochastic";
    j["L"] = std::vector<double>(alloc_L.data(), alloc_L.data() + alloc_L.size());
    j["Delta"] = std::vector<double>(alloc_Delta.data(),
                                     alloc_Delta.data() + alloc_Delta.size());
    j["sigma"] = std::vector<double>(alloc_sigma.data(),
                                     alloc_sigma.data() + alloc_sigma.size());
    nlohmann::json cs = nlohmann::json::array();
    nlohmann::json os = nlohmann::json::array();
    for (Eigen::Index i = 0; i < dim(); ++i) {
      const auto& c = coords[static_cast<std::size_t>(i)];
      cs.push_back(c ? c->describe() : nlohmann::json(nullptr));
      const auto& o = oracles[static_cast<std::size_t>(i)];
      os.push_back({{"sigma", o.sigma}, {"eps", o.eps}});
    }
    j["coords"] = cs;
    j["oracles"] = os;
    return j;
  }

  /// Wraps a single prebuilt coordinate; handy for 1D studies.
  static SeparableHardInstance single(ResistingFunction1D f,
                                      BimodalOracleSpec oracle) {
    SeparableHardInstance inst;
    inst.alloc_L = VectorXd::Constant(1, f.scale_L);
    inst.alloc_Delta = VectorXd::Constant(1, f.scale_Delta);
    inst.alloc_sigma = VectorXd::Constant(1, oracle.sigma);
    inst.coords.emplace_back(std::move(f));
    inst.oracles.push_back(oracle);
    inst.mode = Allocation::deterministic;
    return inst;
  }
};

/// Builds the d-dimensional instance against a total oracle budget of
/// `total_draws` = B*T. Per coordinate, the gradient floor is
/// eps_i = max{ sqrt(L_i*Delta_i/(32*N)), (L_i*Delta_i*sigma_i^2/(128*N))^(1/4) },
/// the resisting slope is 2*eps_i, and the segment count is the largest
/// feasible one, floor(1/(16*eps_unscaled^2)).
inline SeparableHardInstance build_separable_hard_for_total(
    std::int64_t d, double linf, const VectorXd& sigma, double delta,
    double eta, std::int64_t total_draws, Allocation mode) {
  if (d < 1 || linf <= 0.0 || delta <= 0.0 || eta <= 0.0 || total_draws < 1) {
    throw std::invalid_argument("build_separable_hard: invalid parameters");
  }
  if (sigma.size() != d || (sigma.array() < 0.0).any()) {
    throw std::invalid_argument("build_separable_hard: bad sigma vector");
  }

  const double dd = static_cast<double>(d);
  VectorXd L(d), Delta(d);
  if (mode == Allocation::deterministic) {
    L.setConstant(linf / dd);
    Delta.setConstant(delta / dd);  // Delta_i = L_i * delta / |L|_1
  } else {
    const double sigma_l1 = sigma.sum();
    if (sigma_l1 == 0.0) {
      throw std::invalid_argument(
          "build_separable_hard: stochastic allocation needs nonzero sigma");
    }
    double weight_sum = 0.0;
    VectorXd weight(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      L(i) = sigma(i) / sigma_l1 * linf;
      weight(i) = std::pow(sigma(i), 2.0 / 3.0) * std::cbrt(L(i));
      weight_sum += weight(i);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      Delta(i) = weight(i) / weight_sum * delta;
    }
  }

  SeparableHardInstance inst;
  inst.mode = mode;
  inst.alloc_L = L;
  inst.alloc_Delta = Delta;
  inst.alloc_sigma = sigma;
  inst.coords.resize(static_cast<std::size_t>(d));
  inst.oracles.resize(static_cast<std::size_t>(d));

  const double n_total = static_cast<double>(total_draws);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (L(i) == 0.0 || Delta(i) == 0.0) {
      inst.oracles[static_cast<std::size_t>(i)] = {sigma(i), 1.0};
      continue;  // flat coordinate
    }
    const double ld = L(i) * Delta(i);
    const double eps_det = std::sqrt(ld / (32.0 * n_total));
    const double eps_sto =
        std::pow(ld * sigma(i) * sigma(i) / (128.0 * n_total), 0.25);
    const double eps_scaled = std::max(eps_det, eps_sto);
    const double eps_unscaled = eps_scaled / std::sqrt(ld);
    const auto segments = static_cast<std::int64_t>(
        std::floor(1.0 / (16.0 * eps_unscaled * eps_unscaled)));
    if (segments < 1) {
      throw std::invalid_argument(
          "build_separable_hard: infeasible gradient floor for this budget");
    }
    const double eta_unscaled = eta * std::sqrt(L(i) / Delta(i));
    inst.coords[static_cast<std::size_t>(i)] =
        build_resisting(eta_unscaled, 2.0 * eps_unscaled, segments,
                        eta_unscaled)
            .scaled(L(i), Delta(i));
    inst.oracles[static_cast<std::size_t>(i)] = {sigma(i), eps_scaled};
  }
  return inst;
}

/// Convenience wrapper that derives the batch size from the step-budget
/// schedule and takes N = B*T as the total draw count.
inline SeparableHardInstance build_separable_hard(std::int64_t d, double linf,
                                                  const VectorXd& sigma,
                                                  double delta, double eta,
                                                  std::int64_t iterations,
                                                  Allocation mode) {
  if (iterations < 1) {
    throw std::invalid_argument("build_separable_hard: iterations must be >= 1");
  }
  const Schedule sched =
      schedule_signsgd(delta, linf, sigma.cwiseAbs().sum(), iterations);
  return build_separable_hard_for_total(d, linf, sigma, delta, eta,
                                        iterations * sched.batch, mode);
}

// ---------------------------------------------------------------------------
// Matrix lift
// ---------------------------------------------------------------------------

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the R
/// diagonal signs folded into Q.
inline MatrixXd haar_orthogonal(Eigen::Index m, Rng& rng) {
  MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m, m);
  const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  return q;
}

/// F(W) = f(diag(Q W P^T)) for an orthogonal Q and the projector P = [I, 0].
/// The oracle G = Q^T diag(g) P carries the inner oracle's draws, so a muon
/// run on the lift and a signsgd run on the inner problem driven by the same
/// stream produce matching trajectories on the extracted diagonal. Gradient
/// singular values equal the inner gradient magnitudes, which ties the
/// nuclear norm of the matrix gradient to the l1 norm of the inner gradient.
template <class Inner>
class MatrixLiftInstance {
 public:
  using domain = matrix_domain;

  MatrixLiftInstance(Inner inner, Eigen::Index cols, MatrixXd q)
      : inner_(std::move(inner)), n_(cols), q_(std::move(q)) {
    m_ = inner_.dim();
    if (n_ < m_) {
      throw std::invalid_argument("MatrixLiftInstance: cols must be >= rows");
    }
    if (q_.rows() != m_ || q_.cols() != m_) {
      throw std::invalid_argument("MatrixLiftInstance: Q shape mismatch");
    }
  }

  Eigen::Index rows() const { return m_; }
  Eigen::Index cols() const { return n_; }
  const MatrixXd& q() const { return q_; }
  const Inner& inner() const { return inner_; }

  /// Embeds a vector as Q^T diag(v) P: column j of the left m-by-m block is
  /// v_j times the j-th row of Q; the right block is zero.
  MatrixXd lift(const VectorXd& v) const {
    MatrixXd out = MatrixXd::Zero(m_, n_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      out.col(j) = v(j) * q_.row(j).transpose();
    }
    return out;
  }

  /// diag(Q W P^T): the inner coordinates represented by W.
  VectorXd inner_point(const MatrixXd& w) const {
    VectorXd x(m_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      x(i) = q_.row(i).dot(w.col(i));
    }
    return x;
  }

  MatrixXd start() const { return lift(inner_.start()); }

  double value(const MatrixXd& w) const { return inner_.value(inner_point(w)); }

  MatrixXd gradient(const MatrixXd& w) const {
    return lift(inner_.gradient(inner_point(w)));
  }

  MatrixXd sample_gradient(const MatrixXd& w, Rng& rng) const {
    return lift(inner_.sample_gradient(inner_point(w), rng));
  }

  /// Covariance bound Sigma = Q^T diag(sigma) Q; trace equals |sigma|_1.
  MatrixXd sigma_matrix() const {
    return q_.transpose() * inner_.noise_sigma().asDiagonal() * q_;
  }

  MatrixXd sigma_matrix_squared() const {
    const VectorXd s2 = inner_.noise_sigma().array().square();
    return q_.transpose() * s2.asDiagonal() * q_;
  }

  double sigma_nuclear() const { return inner_.noise_sigma().cwiseAbs().sum(); }

  /// Spectral smoothness constant; equals the inner sup-norm constant.
  double spectral() const { return inner_.linf(); }

  nlohmann::json describe() const {
    nlohmann::json j;
    j["kind"] = "matrix_lift";
    j["rows"] = m_;
    j["cols"] = n_;
    j["q_seed"] = q_seed_ ? nlohmann::json(*q_seed_) : nlohmann::json(nullptr);
    if constexpr (requires(const Inner& p) { p.describe(); }) {
      j["inner"] = inner_.describe();
    }
    return j;
  }

 private:
  Inner inner_;
  Eigen::Index m_ = 0;
  Eigen::Index n_ = 0;
  MatrixXd q_;
  std::optional<std::uint64_t> q_seed_;  // set when Q was Haar-sampled

  template <class I>
  friend MatrixLiftInstance<I> build_matrix_lift(I inner, Eigen::Index cols,
                                                 std::uint64_t q_seed);
};

template <class Inner>
MatrixLiftInstance<Inner> build_matrix_lift(Inner inner, Eigen::Index cols,
                                            std::uint64_t q_seed) {
  const Eigen::Index m = inner.dim();
  if (cols < m) {
    throw std::invalid_argument("build_matrix_lift: cols must be >= inner dim");
  }
  Rng rng(q_seed);
  MatrixXd q = haar_orthogonal(m, rng);
  MatrixLiftInstance<Inner> lift(std::move(inner), cols, std::move(q));
  lift.q_seed_ = q_seed;
  return lift;
}

}  // namespace signlab

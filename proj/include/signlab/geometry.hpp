#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>

namespace signlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Domain tags. Every problem type declares one so that generic code can tell
// vector objectives from matrix objectives without relying on Eigen's
// implicit cross-shape conversions.
struct vector_domain {};
struct matrix_domain {};

template <class F>
concept ScalarField = std::same_as<typename F::domain, vector_domain> &&
    requires(const F& f, const VectorXd& x) {
      { f.value(x) } -> std::convertible_to<double>;
      { f.gradient(x) } -> std::convertible_to<VectorXd>;
    };

template <class F>
concept MatrixFieldLike = std::same_as<typename F::domain, matrix_domain> &&
    requires(const F& f, const MatrixXd& w) {
      { f.value(w) } -> std::convertible_to<double>;
      { f.gradient(w) } -> std::convertible_to<MatrixXd>;
    };

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

inline double l1_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.template lpNorm<1>();
}

inline double linf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.template lpNorm<Eigen::Infinity>();
}

/// Sum of singular values.
inline double nuclear_norm(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return svd.singularValues().sum();
}

/// Largest singular value.
inline double operator_norm(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// Noise density
// ---------------------------------------------------------------------------

/// Density of a noise scale vector: phi(sigma) = |sigma|_1^2 / (d |sigma|_2^2),
/// always in [1/d, 1]. One-hot vectors give exactly 1/d, constant-magnitude
/// vectors give exactly 1. Negative entries are folded by absolute value since
/// sigma is a vector of standard deviations.
inline double density(const VectorXd& sigma) {
  if (sigma.size() == 0) {
    throw std::domain_error("density: empty vector");
  }
  const double l1 = sigma.cwiseAbs().sum();
  const double l2sq = sigma.squaredNorm();
  if (l2sq == 0.0) {
    throw std::domain_error("density: undefined for the all-zero vector");
  }
  return (l1 * l1) / (static_cast<double>(sigma.size()) * l2sq);
}

// ---------------------------------------------------------------------------
// Bregman divergence
// ---------------------------------------------------------------------------

/// D_f(x, y) = f(y) - f(x) - <grad f(x), y - x>.
template <ScalarField F>
double bregman(const F& f, const VectorXd& x, const VectorXd& y) {
  return f.value(y) - f.value(x) - f.gradient(x).dot(y - x);
}

/// Matrix form with the Frobenius inner product.
template <MatrixFieldLike F>
double bregman(const F& f, const MatrixXd& x, const MatrixXd& y) {
  return f.value(y) - f.value(x) -
         (f.gradient(x).array() * (y - x).array()).sum();
}

// ---------------------------------------------------------------------------
// Smoothness / noise data models
// ---------------------------------------------------------------------------

/// Per-coordinate curvature vector together with its aggregate constants.
/// A separable-smooth function with curvature vector L is also sup-norm
/// smooth with constant |L|_1, which is how `linf` is filled in.
struct SmoothnessProfile {
  VectorXd per_coord;  // empty when only the aggregate constant is known
  double linf = 0.0;
  std::optional<double> spectral;  // matrix problems; equals linf when set

  static SmoothnessProfile separable(VectorXd per_coord) {
    SmoothnessProfile p;
    p.linf = per_coord.sum();
    p.per_coord = std::move(per_coord);
    return p;
  }

  static SmoothnessProfile aggregate(double linf) {
    SmoothnessProfile p;
    p.linf = linf;
    return p;
  }

  void validate(double tol = 1e-12) const {
    if (linf < 0.0) throw std::invalid_argument("SmoothnessProfile: linf < 0");
    if (per_coord.size() > 0) {
      if ((per_coord.array() < 0.0).any()) {
        throw std::invalid_argument("SmoothnessProfile: negative curvature");
      }
      if (std::abs(per_coord.sum() - linf) > tol * (1.0 + linf)) {
        throw std::invalid_argument(
            "SmoothnessProfile: linf must equal the curvature sum");
      }
    }
    if (spectral && std::abs(*spectral - linf) > tol * (1.0 + linf)) {
      throw std::invalid_argument(
          "SmoothnessProfile: spectral constant must equal linf");
    }
  }
};

/// Per-coordinate noise scales, optionally with the PSD covariance bound of a
/// lifted matrix problem. For lifted instances trace(matrix_sigma) = |sigma|_1.
struct NoiseProfile {
  VectorXd per_coord_sigma;
  std::optional<MatrixXd> matrix_sigma;

  void validate(double tol = 1e-9) const {
    if ((per_coord_sigma.array() < 0.0).any()) {
      throw std::invalid_argument("NoiseProfile: negative sigma entry");
    }
    if (matrix_sigma) {
      const MatrixXd& s = *matrix_sigma;
      if (s.rows() != s.cols()) {
        throw std::invalid_argument("NoiseProfile: matrix_sigma not square");
      }
      const double scale = 1.0 + s.cwiseAbs().maxCoeff();
      if ((s - s.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
        throw std::invalid_argument("NoiseProfile: matrix_sigma not symmetric");
      }
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
      if (eig.eigenvalues().minCoeff() < -tol * scale) {
        throw std::invalid_argument("NoiseProfile: matrix_sigma not PSD");
      }
    }
  }
};

/// Run budget: T iterations of minibatch size B, N = B*T oracle draws total,
/// constant step eta, against an initial objective gap delta.
struct ProblemBudget {
  double delta = 1.0;
  std::int64_t iterations = 1;
  std::int64_t batch = 1;
  std::int64_t total = 1;
  double step = 1.0;

  static ProblemBudget make(double delta, std::int64_t iterations,
                            std::int64_t batch, double step) {
    if (delta <= 0.0 || iterations <= 0 || batch <= 0 || step <= 0.0) {
      throw std::invalid_argument("ProblemBudget: all fields must be positive");
    }
    ProblemBudget b;
    b.delta = delta;
    b.iterations = iterations;
    b.batch = batch;
    b.total = iterations * batch;
    b.step = step;
    return b;
  }
};

// ---------------------------------------------------------------------------
// Closed-form complexity calculators
// ---------------------------------------------------------------------------
//
// Oracle-call counts needed to reach an eps-stationary point in the l1 norm,
// with all leading constants set to 1. The calculators exist for ratio
// comparisons, where any shared constant cancels.

struct ComplexityTerms {
  double deterministic = 0.0;
  double stochastic = 0.0;
  double total() const { return deterministic + stochastic; }
};

/// SignSGD: L_inf*delta/eps^2 + |sigma|_1^2*L_inf*delta/eps^4.
inline ComplexityTerms complexity_signsgd_terms(double linf, double delta,
                                                const VectorXd& sigma,
                                                double eps) {
  if (eps <= 0.0) throw std::invalid_argument("complexity: eps must be > 0");
  const double sigma_l1 = sigma.cwiseAbs().sum();
  ComplexityTerms t;
  t.deterministic = linf * delta / (eps * eps);
  t.stochastic = sigma_l1 == 0.0
                     ? 0.0
                     : sigma_l1 * sigma_l1 * linf * delta / (eps * eps * eps * eps);
  return t;
}

inline double complexity_signsgd(double linf, double delta,
                                 const VectorXd& sigma, double eps) {
  return complexity_signsgd_terms(linf, delta, sigma, eps).total();
}

/// SGD floor: d*L_inf*delta/eps^2 + |sigma|_1^2*L_inf*delta/(phi(sigma)*eps^4).
/// The stochastic term is evaluated as d*|sigma|_2^2*L_inf*delta/eps^4, which
/// is the same quantity with the density unfolded and stays finite when sigma
/// is the zero vector (the term is dropped).
inline ComplexityTerms complexity_sgd_lower_terms(double linf, double delta,
                                                  const VectorXd& sigma,
                                                  double eps, std::int64_t d) {
  if (eps <= 0.0) throw std::invalid_argument("complexity: eps must be > 0");
  if (d != sigma.size()) {
    throw std::invalid_argument("complexity: d must match sigma dimension");
  }
  const double sigma_l2sq = sigma.squaredNorm();
  ComplexityTerms t;
  t.deterministic = static_cast<double>(d) * linf * delta / (eps * eps);
  t.stochastic = sigma_l2sq == 0.0
                     ? 0.0
                     : static_cast<double>(d) * sigma_l2sq * linf * delta /
                           (eps * eps * eps * eps);
  return t;
}

inline double complexity_sgd_lower(double linf, double delta,
                                   const VectorXd& sigma, double eps,
                                   std::int64_t d) {
  return complexity_sgd_lower_terms(linf, delta, sigma, eps, d).total();
}

/// Aggregate sup-norm smoothness constant of a separable-smooth function:
/// the l1 norm of its curvature vector.
inline double separable_to_linf(const VectorXd& per_coord) {
  return per_coord.size() == 0 ? 0.0 : per_coord.sum();
}

}  // namespace signlab

#pragma once

#include <concepts>
#include <stdexcept>
#include <utility>

#include "signlab/geometry.hpp"
#include "signlab/rng.hpp"

namespace signlab {

// A problem bundles an objective with its stochastic first-order oracle.
// Gradients are analytic; `sample_gradient` draws one unbiased oracle sample
// and is the only member that touches the random stream.

template <class P>
concept VectorProblem = std::same_as<typename P::domain, vector_domain> &&
    requires(const P& p, const VectorXd& x, Rng& rng) {
      { p.dim() } -> std::convertible_to<Eigen::Index>;
      { p.start() } -> std::convertible_to<VectorXd>;
      { p.value(x) } -> std::convertible_to<double>;
      { p.gradient(x) } -> std::convertible_to<VectorXd>;
      { p.sample_gradient(x, rng) } -> std::convertible_to<VectorXd>;
    };

template <class P>
concept MatrixProblem = std::same_as<typename P::domain, matrix_domain> &&
    requires(const P& p, const MatrixXd& w, Rng& rng) {
      { p.rows() } -> std::convertible_to<Eigen::Index>;
      { p.cols() } -> std::convertible_to<Eigen::Index>;
      { p.start() } -> std::convertible_to<MatrixXd>;
      { p.value(w) } -> std::convertible_to<double>;
      { p.gradient(w) } -> std::convertible_to<MatrixXd>;
      { p.sample_gradient(w, rng) } -> std::convertible_to<MatrixXd>;
    };

/// f(x) = 1/2 sum_i L_i x_i^2 with independent Gaussian gradient noise of
/// scale noise_sigma_i per coordinate. Coordinates with zero noise scale do
/// not consume random draws, so the stream layout is fixed per sample.
class DiagonalQuadratic {
 public:
  using domain = vector_domain;

  DiagonalQuadratic(VectorXd curvature, VectorXd start_point,
                    VectorXd noise_sigma = VectorXd())
      : curvature_(std::move(curvature)),
        start_(std::move(start_point)),
        noise_sigma_(std::move(noise_sigma)) {
    if (noise_sigma_.size() == 0) {
      noise_sigma_ = VectorXd::Zero(curvature_.size());
    }
    if (start_.size() != curvature_.size() ||
        noise_sigma_.size() != curvature_.size()) {
      throw std::invalid_argument("DiagonalQuadratic: dimension mismatch");
    }
    if ((curvature_.array() < 0.0).any() ||
        (noise_sigma_.array() < 0.0).any()) {
      throw std::invalid_argument(
          "DiagonalQuadratic: curvature and noise scales must be >= 0");
    }
  }

  Eigen::Index dim() const { return curvature_.size(); }
  const VectorXd& start() const { return start_; }

  double value(const VectorXd& x) const {
    return 0.5 * (curvature_.array() * x.array().square()).sum();
  }

  VectorXd gradient(const VectorXd& x) const {
    return curvature_.cwiseProduct(x);
  }

  VectorXd sample_gradient(const VectorXd& x, Rng& rng) const {
    VectorXd g = gradient(x);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (noise_sigma_(i) > 0.0) g(i) += noise_sigma_(i) * rng.normal();
    }
    return g;
  }

  const VectorXd& curvature() const { return curvature_; }
  const VectorXd& noise_sigma() const { return noise_sigma_; }
  double linf() const { return curvature_.sum(); }

 private:
  VectorXd curvature_;
  VectorXd start_;
  VectorXd noise_sigma_;
};

}  // namespace signlab

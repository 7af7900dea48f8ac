#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "signlab/geometry.hpp"
#include "signlab/hard_instances.hpp"
#include "signlab/problems.hpp"
#include "signlab/rng.hpp"

using namespace signlab;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// 1D scalar-field adapter for bregman checks on a resisting function.
struct Scalar1D {
  using domain = vector_domain;
  const ResistingFunction1D& f;
  double value(const VectorXd& x) const { return f.value(x(0)); }
  VectorXd gradient(const VectorXd& x) const {
    return VectorXd::Constant(1, f.derivative(x(0)));
  }
};

}  // namespace

TEST_CASE("l1 norm basics", "[geometry]") {
  CHECK(l1_norm(vec({0, 0, 0})) == 0.0);
  CHECK(l1_norm(vec({1, -2, 3})) == 6.0);
  const double e = 1e-3;
  CHECK(l1_norm(VectorXd::Constant(7, -e)) == Catch::Approx(7 * e).epsilon(1e-15));
  CHECK(l1_norm(VectorXd()) == 0.0);
}

TEST_CASE("matrix norms from singular values", "[geometry]") {
  MatrixXd a = MatrixXd::Zero(2, 3);
  a(0, 0) = 3.0;
  a(1, 1) = -4.0;
  CHECK(nuclear_norm(a) == Catch::Approx(7.0).margin(1e-12));
  CHECK(operator_norm(a) == Catch::Approx(4.0).margin(1e-12));
  CHECK(nuclear_norm(MatrixXd::Zero(3, 3)) == 0.0);
}

TEST_CASE("density one-hot and uniform extremes", "[geometry]") {
  CHECK(density(vec({1, 0, 0, 0})) == Catch::Approx(0.25).margin(1e-15));
  for (double c : {0.3, 1.0, 17.5}) {
    CHECK(density(VectorXd::Constant(6, c)) == Catch::Approx(1.0).margin(1e-14));
  }
  // sign-insensitive: sigma is a vector of standard deviations
  CHECK(density(vec({-2, 2, -2})) == Catch::Approx(1.0).margin(1e-14));
  CHECK_THROWS_AS(density(VectorXd::Zero(5)), std::domain_error);
  CHECK_THROWS_AS(density(VectorXd()), std::domain_error);
}

TEST_CASE("density of Gaussian draws concentrates at 2/pi", "[geometry]") {
  const Eigen::Index d = 10000;
  const int samples = 200;
  Rng rng(20240811);
  double acc = 0.0;
  VectorXd g(d);
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < d; ++i) g(i) = rng.normal();
    acc += density(g);
  }
  CHECK(acc / samples == Catch::Approx(2.0 / M_PI).margin(0.01));
}

TEST_CASE("density range property", "[geometry]") {
  Rng rng(7);
  for (int rep = 0; rep < 300; ++rep) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.next_u64() % 40);
    VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
    if (v.cwiseAbs().maxCoeff() == 0.0) continue;
    const double phi = density(v);
    CHECK(phi >= 1.0 / static_cast<double>(d) - 1e-15);
    CHECK(phi <= 1.0 + 1e-15);
  }
}

TEST_CASE("bregman identities on quadratics", "[geometry]") {
  DiagonalQuadratic f(vec({1.0}), vec({0.0}));
  CHECK(bregman(f, vec({0.0}), vec({2.0})) == Catch::Approx(2.0).margin(1e-15));
  CHECK(bregman(f, vec({1.3}), vec({1.3})) == 0.0);

  // For diagonal quadratics the divergence is 1/2 |y-x|_L^2, symmetric in x,y.
  DiagonalQuadratic q(vec({3, 1, 0.5}), VectorXd::Zero(3));
  Rng rng(42);
  for (int rep = 0; rep < 200; ++rep) {
    VectorXd x(3), y(3);
    for (int i = 0; i < 3; ++i) {
      x(i) = rng.normal();
      y(i) = rng.normal();
    }
    const double dxy = bregman(q, x, y);
    const double dyx = bregman(q, y, x);
    const VectorXd delta = y - x;
    const double expected =
        0.5 * (q.curvature().array() * delta.array().square()).sum();
    CHECK(dxy == Catch::Approx(expected).margin(1e-12));
    CHECK(dxy == Catch::Approx(dyx).margin(1e-12));
  }
}

TEST_CASE("separable smoothness implies sup-norm smoothness", "[geometry]") {
  // |D_f(x,y)| <= (|L|_1 / 2) * |y-x|_inf^2, sampled.
  const Eigen::Index d = 12;
  Rng rng(99);
  VectorXd curv(d);
  for (Eigen::Index i = 0; i < d; ++i) curv(i) = 0.1 + 3.0 * rng.uniform();
  DiagonalQuadratic q(curv, VectorXd::Zero(d));
  const double linf = separable_to_linf(curv);
  for (int rep = 0; rep < 10000; ++rep) {
    VectorXd x(d), y(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      x(i) = 2.0 * rng.uniform() - 1.0;
      y(i) = x(i) + 2.0 * rng.uniform() - 1.0;
    }
    const double lhs = std::abs(bregman(q, x, y));
    const double rhs = 0.5 * linf * std::pow(linf_norm(y - x), 2);
    CHECK(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("bregman of the resisting function obeys the curvature cap",
          "[geometry]") {
  const ResistingFunction1D p = build_resisting(1.0, 0.1, 16, 1.0);
  const Scalar1D f{p};
  Rng rng(3);
  for (int rep = 0; rep < 2000; ++rep) {
    const double a = 30.0 * rng.uniform() - 5.0;
    const double b = 30.0 * rng.uniform() - 5.0;
    const double lhs = std::abs(bregman(f, VectorXd::Constant(1, a),
                                        VectorXd::Constant(1, b)));
    CHECK(lhs <= 0.5 * (b - a) * (b - a) + 1e-12);
  }
}

TEST_CASE("signsgd complexity calculator", "[geometry]") {
  CHECK(complexity_signsgd(1.0, 1.0, VectorXd::Zero(3), 1.0) == 1.0);
  CHECK(complexity_signsgd(1.0, 1.0, vec({1.0}), 0.1) ==
        Catch::Approx(10100.0).epsilon(1e-12));
  // stochastic term is quadratic in |sigma|_1
  const auto t1 = complexity_signsgd_terms(2.0, 0.5, vec({1, 2}), 0.3);
  const auto t2 = complexity_signsgd_terms(2.0, 0.5, vec({2, 4}), 0.3);
  CHECK(t2.stochastic == Catch::Approx(4.0 * t1.stochastic).epsilon(1e-12));
  CHECK(t2.deterministic == t1.deterministic);
  CHECK_THROWS_AS(complexity_signsgd(1, 1, vec({1.0}), 0.0),
                  std::invalid_argument);
}

TEST_CASE("sgd lower-bound calculator and ratios", "[geometry]") {
  // dimension-1 degeneracy
  CHECK(complexity_sgd_lower(1.5, 2.0, vec({0.7}), 0.2, 1) ==
        Catch::Approx(complexity_signsgd(1.5, 2.0, vec({0.7}), 0.2))
            .epsilon(1e-15));

  // one-hot noise: stochastic-term ratio is exactly d
  for (std::int64_t d : {2, 4, 16, 100}) {
    VectorXd s = VectorXd::Zero(d);
    s(0) = 1.0;
    const auto sgd = complexity_sgd_lower_terms(1.0, 1.0, s, 0.1, d);
    const auto sign = complexity_signsgd_terms(1.0, 1.0, s, 0.1);
    CHECK(sgd.stochastic / sign.stochastic == static_cast<double>(d));
  }

  // uniform noise: stochastic-term ratio is exactly 1
  for (std::int64_t d : {2, 8, 32}) {
    VectorXd s = VectorXd::Constant(d, 0.5);
    const auto sgd = complexity_sgd_lower_terms(1.0, 1.0, s, 0.1, d);
    const auto sign = complexity_signsgd_terms(1.0, 1.0, s, 0.1);
    CHECK(sgd.stochastic == sign.stochastic);
    CHECK(sgd.deterministic / sign.deterministic == static_cast<double>(d));
  }

  // all-zero sigma drops the stochastic term instead of dividing by zero
  CHECK(complexity_sgd_lower_terms(1, 1, VectorXd::Zero(4), 0.5, 4).stochastic ==
        0.0);

  // SGD floor / SignSGD cost >= 1 for random positive inputs
  Rng rng(11);
  for (int rep = 0; rep < 500; ++rep) {
    const std::int64_t d = 1 + static_cast<std::int64_t>(rng.next_u64() % 10);
    VectorXd s(d);
    for (Eigen::Index i = 0; i < d; ++i) s(i) = rng.uniform();
    const double linf = 0.1 + rng.uniform();
    const double delta = 0.1 + rng.uniform();
    const double eps = 0.05 + rng.uniform();
    CHECK(complexity_sgd_lower(linf, delta, s, eps, d) >=
          complexity_signsgd(linf, delta, s, eps) * (1.0 - 1e-12));
  }
}

TEST_CASE("separable curvature aggregates by l1", "[geometry]") {
  VectorXd L = VectorXd::Ones(5000);
  L(0) = 1000.0;
  CHECK(separable_to_linf(L) == 5999.0);
  CHECK(separable_to_linf(VectorXd::Zero(8)) == 0.0);

  // proportional allocation sums back to the aggregate
  VectorXd s = vec({0.2, 0.5, 0.3});
  const double linf = 7.0;
  VectorXd alloc = s / s.sum() * linf;
  CHECK(separable_to_linf(alloc) == Catch::Approx(linf).epsilon(1e-14));
}

TEST_CASE("profiles validate their invariants", "[geometry]") {
  auto p = SmoothnessProfile::separable(vec({1, 2, 3}));
  CHECK(p.linf == 6.0);
  CHECK_NOTHROW(p.validate());
  p.spectral = 6.0;
  CHECK_NOTHROW(p.validate());
  p.spectral = 5.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.spectral.reset();
  p.linf = 4.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  NoiseProfile noise;
  noise.per_coord_sigma = vec({1, 0, 2});
  CHECK_NOTHROW(noise.validate());
  noise.matrix_sigma = MatrixXd::Identity(3, 3);
  CHECK_NOTHROW(noise.validate());
  (*noise.matrix_sigma)(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(noise.validate(), std::invalid_argument);
  noise.matrix_sigma = -MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(noise.validate(), std::invalid_argument);

  CHECK_THROWS_AS(ProblemBudget::make(1.0, 0, 1, 0.1), std::invalid_argument);
  const auto b = ProblemBudget::make(1.0, 10, 4, 0.1);
  CHECK(b.total == 40);
}

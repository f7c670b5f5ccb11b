#include <doctest.h>

#include <cmath>
#include <random>

#include <omp.h>

#include "croco/error.hpp"
#include "croco/noise.hpp"
#include "croco/robustness.hpp"
#include "support/oracle.hpp"

using namespace croco;

namespace {

// Gaussian-weighted trapezoid of 1 - logistic(a * (x + e) + b) over e, 12 sigma wide.
double theta_1d(double a, double b, double x, double sigma) {
  const int n = 200000;
  const double lo = -12.0 * sigma;
  const double h = 24.0 * sigma / n;
  double sum = 0.0;
  double mass = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double e = lo + i * h;
    const double w = (i == 0 || i == n ? 0.5 : 1.0) * std::exp(-0.5 * e * e / (sigma * sigma));
    sum += w * (1.0 - oracle::sigmoid(a * (x + e) + b));
    mass += w;
  }
  return sum / mass;
}

}  // namespace

TEST_SUITE("robustness") {

TEST_CASE("constant classifiers") {
  const auto spec = NoiseSpec::gaussian(0.05, 2, 1);
  const Vector x = Vector::Constant(2, 0.3);
  CHECK(invalidation_rate_mc(oracle::constant(2, 3.0), x, spec, 1000) == 0.0);
  CHECK(invalidation_rate_mc(oracle::constant(2, -3.0), x, spec, 1000) == 1.0);
  const double z = std::log(0.2 / 0.8);
  CHECK(soft_invalidation_mc(oracle::constant(2, z), x, spec, 1000) ==
        doctest::Approx(0.8).epsilon(1e-12));
  CHECK(soft_invalidation_mc(oracle::constant(2, 800.0), x, spec, 1000) < 1e-12);
}

TEST_CASE("gamma is one half on a symmetric boundary") {
  const auto model = oracle::line_1d(10.0);
  const double g = invalidation_rate_mc(model, Vector::Zero(1), NoiseSpec::gaussian(0.01, 1, 3),
                                        100000);
  CHECK(std::abs(g - 0.5) <= 0.01);
  const double gb = invalidation_rate_mc(model, Vector::Zero(1),
                                         NoiseSpec::uniform_ball(0.2, 1, 3), 100000);
  CHECK(std::abs(gb - 0.5) <= 0.01);
}

TEST_CASE("gamma takes values on the 1/K lattice") {
  const std::vector<int> dims{2, 6, 1};
  const auto model = MlpClassifier::random(dims, 4);
  const std::size_t k = 37;
  const double g = invalidation_rate_mc(model, Vector::Zero(2), NoiseSpec::gaussian(1.0, 2), k);
  CHECK(std::abs(g * k - std::round(g * k)) < 1e-12);
}

TEST_CASE("theta tends to 1 - f as the noise vanishes") {
  std::mt19937_64 rng(8);
  const std::vector<int> dims{3, 8, 8, 1};
  for (int trial = 0; trial < 10; ++trial) {
    const auto model = MlpClassifier::random(dims, 50 + trial);
    const Vector x = oracle::random_point(rng, 3);
    const double theta = soft_invalidation_mc(model, x, NoiseSpec::gaussian(1e-12, 3), 200);
    CHECK(std::abs(theta - (1.0 - oracle::forward(model, x))) < 1e-6);
  }
}

TEST_CASE("upper bound arithmetic") {
  CHECK(upper_bound(0.05, 0.1, 0.5) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(upper_bound(0.0, 0.1, 0.5) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(upper_bound(0.1, 0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(upper_bound(0.1, 0.0, 0.5), ConfigError);
}

TEST_CASE("confidence formula") {
  CHECK(confidence(0.1, 500) == doctest::Approx(1.0 - std::exp(-10.0)).epsilon(1e-14));
  CHECK(confidence(0.1, 500) >= 0.999);
  CHECK(confidence(0.05, 1000) == doctest::Approx(0.993262053).epsilon(1e-9));
  CHECK(confidence(1e-9, 500) < 1e-12);
}

TEST_CASE("sample counts for a required confidence") {
  CHECK(min_samples(0.1, 0.999) == 346);
  CHECK(min_samples(0.1, 0.99995) == 496);
  CHECK(min_samples(0.1, 0.99995) <= 500);
  CHECK(min_samples(0.1, 1e-12) == 1);
  CHECK_THROWS_AS(min_samples(0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(min_samples(0.1, 0.0), ConfigError);
  CHECK_THROWS_AS(min_samples(0.0, 0.9), ConfigError);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> m_dist(0.01, 0.5);
  std::uniform_real_distribution<double> c_dist(0.01, 0.99999);
  for (int i = 0; i < 1000; ++i) {
    const double m = m_dist(rng);
    const double c = c_dist(rng);
    const auto k = min_samples(m, c);
    CHECK(confidence(m, k) >= c);
    if (k > 1) CHECK(confidence(m, k - 1) < c);
  }
}

TEST_CASE("quadrature of constant and symmetric cases") {
  const double z = std::log(0.3 / 0.7);
  const auto flat = brute_force_invalidation(oracle::constant(2, z), Vector::Zero(2),
                                             NoiseSpec::gaussian(0.02, 2), 2);
  CHECK(flat.theta == doctest::Approx(0.7).epsilon(1e-13));

  const auto line = oracle::line_1d(10.0);
  const auto g = brute_force_invalidation(line, Vector::Zero(1), NoiseSpec::gaussian(0.01, 1), 4);
  CHECK(g.gamma == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(g.truncation_mass < 1e-8);
  const auto b = brute_force_invalidation(line, Vector::Zero(1), NoiseSpec::uniform_ball(0.3, 1), 4);
  CHECK(b.gamma == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("quadrature matches closed forms for linear classifiers") {
  // Gamma for a linear boundary under isotropic Gaussian noise is
  // Phi(-(w.x + b) / (sigma |w|)).
  Vector w(2);
  w << 3.0, -4.0;
  const double b = 0.5;
  const auto model = MlpClassifier::logistic_regression(w, b);
  const double variance = 0.04;
  for (const double shift : {-0.2, 0.0, 0.1, 0.3}) {
    Vector x(2);
    x << shift, 0.1;
    const auto q = brute_force_invalidation(model, x, NoiseSpec::gaussian(variance, 2), 64);
    const double margin = w.dot(x) + b;
    const double want = oracle::normal_cdf(-margin / (std::sqrt(variance) * w.norm()));
    CHECK(std::abs(q.gamma - want) < 1e-3);  // the indicator is cut across panels
  }

  // Theta for 1D logistic against an independent trapezoid.
  const auto line = oracle::line_1d(5.0, 0.1);
  for (const double x0 : {-0.2, 0.1, 0.4}) {
    const auto q = brute_force_invalidation(line, Vector::Constant(1, x0),
                                            NoiseSpec::gaussian(0.02, 1), 8);
    CHECK(q.theta == doctest::Approx(theta_1d(5.0, -0.5, x0, std::sqrt(0.02))).epsilon(1e-8));
  }
}

TEST_CASE("quadrature rejects high dimensions") {
  const std::vector<int> dims{4, 3, 1};
  CHECK_THROWS_AS(brute_force_invalidation(MlpClassifier::zeros(dims), Vector::Zero(4),
                                           NoiseSpec::gaussian(0.01, 4), 2),
                  ConfigError);
  auto spec = NoiseSpec::gaussian(0.01, 4);
  spec.frozen = {true, false, false, false};
  CHECK_NOTHROW(brute_force_invalidation(MlpClassifier::zeros(dims), Vector::Zero(4), spec, 1));
}

TEST_CASE("parallel kernels reproduce the serial reference") {
  const std::vector<int> dims{3, 16, 16, 1};
  const auto model = MlpClassifier::random(dims, 21);
  const Vector x = Vector::Constant(3, 0.1);
  const auto draws = sample(NoiseSpec::gaussian(0.3, 3, 2), 5000);

  const auto ref = serial::draw_statistics(model, x, draws, true);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = draw_statistics(model, x, draws, true);
  omp_set_num_threads(4);
  const auto four = draw_statistics(model, x, draws, true);
  omp_set_num_threads(saved);

  // bitwise identical across thread counts
  CHECK(one.gamma_tilde == four.gamma_tilde);
  CHECK(one.theta_tilde == four.theta_tilde);
  CHECK(one.theta_gradient == four.theta_gradient);
  // same sums as the serial loop up to summation order
  CHECK(one.gamma_tilde == ref.gamma_tilde);
  CHECK(one.theta_tilde == doctest::Approx(ref.theta_tilde).epsilon(1e-12));
  CHECK((one.theta_gradient - ref.theta_gradient).norm() < 1e-12);
  CHECK(invalidation_rate(model, x, draws) == serial::invalidation_rate(model, x, draws));
  CHECK(soft_invalidation(model, x, draws) ==
        doctest::Approx(serial::soft_invalidation(model, x, draws)).epsilon(1e-12));
}

TEST_CASE("theta gradient matches finite differences on fixed draws") {
  std::mt19937_64 rng(30);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<int> dims{2, 5, 1};
    const auto model = MlpClassifier::random(dims, 300 + trial);
    const auto draws = sample(NoiseSpec::gaussian(0.01, 2, trial), 20);
    Vector x;
    std::vector<Vector> stencil;
    do {  // finite differences are meaningless across a ReLU kink
      x = oracle::random_point(rng, 2);
      stencil.clear();
      for (Eigen::Index k = 0; k < draws.cols(); ++k) stencil.push_back(x + draws.col(k));
    } while (oracle::stencil_crosses_kink(model, stencil));
    const auto stats = draw_statistics(model, x, draws, true);
    const Vector fd = oracle::finite_difference(
        [&](const Vector& p) {
          double s = 0.0;
          for (Eigen::Index k = 0; k < draws.cols(); ++k) {
            s += 1.0 - oracle::forward(model, p + draws.col(k));
          }
          return s / draws.cols();
        },
        x);
    worst = std::max(worst, oracle::max_relative_error(stats.theta_gradient, fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("estimate summary fields") {
  const std::vector<int> dims{2, 5, 1};
  const auto model = MlpClassifier::random(dims, 2);
  const auto est = estimate_robustness(model, Vector::Zero(2), NoiseSpec::gaussian(0.1, 2), 500,
                                       0.1, 7);
  CHECK(est.samples == 500);
  CHECK(est.tightness == 0.1);
  CHECK(est.upper_bound == doctest::Approx(0.2 + 2.0 * est.theta_tilde).epsilon(1e-14));
  CHECK(est.upper_bound >= 0.2);
  CHECK(est.confidence == confidence(0.1, 500));
  CHECK(est.gamma_tilde >= 0.0);
  CHECK(est.gamma_tilde <= 1.0);
}

}  // TEST_SUITE

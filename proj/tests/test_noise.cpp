#include <doctest.h>

#include <cmath>

#include "croco/error.hpp"
#include "croco/noise.hpp"

using namespace croco;

TEST_SUITE("noise") {

TEST_CASE("invalid specs are rejected") {
  auto spec = NoiseSpec::gaussian(0.01, 3);
  spec.frozen = {true, true, true};
  CHECK_THROWS_AS(sample(spec, 10), ConfigError);
  CHECK_THROWS_AS(sample(NoiseSpec::gaussian(0.0, 3), 10), ConfigError);
  CHECK_THROWS_AS(sample(NoiseSpec::uniform_ball(-1.0, 3), 10), ConfigError);
  CHECK_THROWS_AS(sample(NoiseSpec::gaussian(0.01, 3), 0), ConfigError);
}

TEST_CASE("Gaussian marginals have the requested moments") {
  const double variance = 0.01;
  const std::size_t k = 100000;
  const auto draws = sample(NoiseSpec::gaussian(variance, 3, 17), k);
  const double sigma = std::sqrt(variance);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double mean = draws.row(j).mean();
    const double var = (draws.row(j).array() - mean).square().sum() / (k - 1.0);
    CHECK(std::abs(mean) < 4.0 * sigma / std::sqrt(static_cast<double>(k)));
    CHECK(std::abs(var - variance) < 0.05 * variance);
  }
}

TEST_CASE("frozen coordinates receive no noise") {
  for (const auto kind : {NoiseKind::Gaussian, NoiseKind::UniformBall}) {
    auto spec = kind == NoiseKind::Gaussian ? NoiseSpec::gaussian(0.02, 4, 3)
                                            : NoiseSpec::uniform_ball(0.3, 4, 3);
    spec.frozen = {false, true, false, true};
    const auto draws = sample(spec, 500);
    CHECK(draws.row(1).isZero(0.0));
    CHECK(draws.row(3).isZero(0.0));
    CHECK(draws.row(0).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("uniform ball stays inside its radius and fills it") {
  const double r = 0.25;
  const std::size_t k = 20000;
  const auto draws = sample(NoiseSpec::uniform_ball(r, 2, 8), k);
  std::size_t inner = 0;
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    const double norm = draws.col(c).norm();
    CHECK(norm <= r);
    inner += norm <= r / 2.0;
  }
  // area fraction of the inner disc is 1/4
  const double frac = static_cast<double>(inner) / k;
  CHECK(std::abs(frac - 0.25) < 4.0 * std::sqrt(0.25 * 0.75 / k));
}

TEST_CASE("draws are reproducible and addressable by index") {
  const auto spec = NoiseSpec::gaussian(0.01, 3, 99);
  const auto a = sample(spec, 300, 5);
  CHECK(a == sample(spec, 300, 5));
  CHECK_FALSE(a == sample(spec, 300, 6));
  auto other_seed = spec;
  other_seed.seed = 100;
  CHECK_FALSE(a == sample(other_seed, 300, 5));
  // columns 100..199 generated on their own equal the middle of the full block
  CHECK(sample(spec, 100, 5, 100) == a.middleCols(100, 100));
}

TEST_CASE("stream keys separate their parts") {
  CHECK(stream_key({1, 2}) != stream_key({2, 1}));
  CHECK(stream_key({1, 2}) != stream_key({1, 2, 0}));
  CHECK(stream_key({7}) == stream_key({7}));
}

}  // TEST_SUITE

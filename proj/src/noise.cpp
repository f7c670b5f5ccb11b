#include "croco/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "croco/error.hpp"

namespace croco {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// SplitMix64 stream seeded from a (key, index) pair.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t state) : state_(state) {}

  std::uint64_t next() { return mix64(state_ += kGolden); }

  /// Uniform in (0, 1].
  double uniform() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

NoiseSpec NoiseSpec::gaussian(double variance, std::size_t dimension, std::uint64_t seed) {
  return {NoiseKind::Gaussian, variance, std::vector<bool>(dimension, false), seed};
}

NoiseSpec NoiseSpec::uniform_ball(double radius, std::size_t dimension, std::uint64_t seed) {
  return {NoiseKind::UniformBall, radius, std::vector<bool>(dimension, false), seed};
}

std::size_t NoiseSpec::free_dimensions() const {
  return static_cast<std::size_t>(std::count(frozen.begin(), frozen.end(), false));
}

double NoiseSpec::sigma() const { return std::sqrt(scale); }

void NoiseSpec::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw ConfigError("noise", kind == NoiseKind::Gaussian ? "variance" : "radius",
                      fmt::format("must be positive and finite, got {}", scale));
  }
  if (frozen.empty()) throw ConfigError("noise", "frozen_mask", "dimension must be at least 1");
  if (free_dimensions() == 0) {
    throw ConfigError("noise", "frozen_mask", "every dimension is frozen",
                      "leave at least one mutable feature");
  }
}

std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (const auto p : parts) h = mix64(h ^ mix64(p + kGolden));
  return h;
}

Eigen::MatrixXd sample(const NoiseSpec& spec, std::size_t count, std::uint64_t stream,
                       std::size_t first) {
  spec.validate();
  if (count == 0) throw ConfigError("noise", "K", "sample count must be at least 1");
  const auto n = static_cast<Eigen::Index>(spec.dimension());
  const std::size_t free = spec.free_dimensions();
  const std::uint64_t key = stream_key({spec.seed, stream});
  const double sigma = spec.sigma();

  Eigen::MatrixXd draws = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(count));
  Eigen::VectorXd z(static_cast<Eigen::Index>(free));
  for (std::size_t k = 0; k < count; ++k) {
    CounterRng rng(mix64(key ^ mix64(first + k)));
    for (auto& v : z) v = rng.normal();
    if (spec.kind == NoiseKind::Gaussian) {
      z *= sigma;
    } else {
      // Uniform direction, radius scaled by u^(1/d) for a uniform volume.
      const double norm = z.norm();
      const double radius = spec.scale * std::pow(rng.uniform(), 1.0 / static_cast<double>(free));
      z *= norm > 0.0 ? radius / norm : 0.0;
    }
    Eigen::Index f = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!spec.frozen[j]) draws(j, static_cast<Eigen::Index>(k)) = z(f++);
    }
  }
  return draws;
}

}  // namespace croco

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace croco {

enum class NoiseKind { Gaussian, UniformBall };

/// Perturbation distribution applied around a counterfactual.
///
/// `scale` is the per-coordinate variance for Gaussian noise and the radius
/// for the uniform ball, both in normalized feature units. Frozen coordinates
/// always receive exactly zero noise; the ball lives in the free subspace.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::Gaussian;
  double scale = 0.01;
  std::vector<bool> frozen;
  std::uint64_t seed = 0;

  static NoiseSpec gaussian(double variance, std::size_t dimension, std::uint64_t seed = 0);
  static NoiseSpec uniform_ball(double radius, std::size_t dimension, std::uint64_t seed = 0);

  std::size_t dimension() const { return frozen.size(); }
  std::size_t free_dimensions() const;
  double sigma() const;
  void validate() const;
};

/// Mixes any number of integers into one stream identifier.
std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts);

/// Draws `count` perturbations as the columns of an (n x count) matrix.
///
/// Column k depends only on (spec.seed, stream, first + k), so sub-ranges can
/// be generated independently and any thread split reproduces the same draws.
Eigen::MatrixXd sample(const NoiseSpec& spec, std::size_t count, std::uint64_t stream = 0,
                       std::size_t first = 0);

}  // namespace croco

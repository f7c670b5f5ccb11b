#pragma once

#include <cstddef>
#include <cstdint>

#include "croco/model.hpp"
#include "croco/noise.hpp"

namespace croco {

/// Monte-Carlo robustness summary of a counterfactual.
struct RobustnessEstimate {
  double gamma_tilde = 0.0;  // fraction of perturbed points classified 0
  double theta_tilde = 0.0;  // mean class-0 probability of perturbed points
  std::size_t samples = 0;   // K
  double tightness = 0.0;    // m
  double upper_bound = 0.0;  // (m + theta_tilde) / (1 - t)
  double confidence = 0.0;   // 1 - exp(-2 m^2 K)
};

/// Everything one pass over a set of draws yields.
struct DrawStatistics {
  double gamma_tilde = 0.0;
  double theta_tilde = 0.0;
  Vector theta_gradient;  // d theta_tilde / d x_cf; empty unless requested
};

// Kernels over pre-drawn perturbations (columns of `draws`). Samples are
// processed in fixed-size chunks spread over OpenMP threads; per-chunk
// partial sums are combined in chunk order, so results do not depend on the
// thread count.
DrawStatistics draw_statistics(const MlpClassifier& model, const Vector& x_cf,
                               const Matrix& draws, bool with_gradient);
double invalidation_rate(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws);
double soft_invalidation(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws);

/// Sample-at-a-time reference implementations of the kernels above.
namespace serial {
DrawStatistics draw_statistics(const MlpClassifier& model, const Vector& x_cf,
                               const Matrix& draws, bool with_gradient);
double invalidation_rate(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws);
double soft_invalidation(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws);
}  // namespace serial

/// Gamma-tilde with K fresh draws from `spec` on `stream`.
double invalidation_rate_mc(const MlpClassifier& model, const Vector& x_cf,
                            const NoiseSpec& spec, std::size_t samples, std::uint64_t stream = 0);

/// Theta-tilde with K fresh draws from `spec` on `stream`.
double soft_invalidation_mc(const MlpClassifier& model, const Vector& x_cf,
                            const NoiseSpec& spec, std::size_t samples, std::uint64_t stream = 0);

/// Both estimators on one set of draws plus the high-probability bound.
RobustnessEstimate estimate_robustness(const MlpClassifier& model, const Vector& x_cf,
                                       const NoiseSpec& spec, std::size_t samples,
                                       double tightness, std::uint64_t stream = 0);

RobustnessEstimate summarize(const DrawStatistics& stats, std::size_t samples, double tightness,
                             double threshold);

/// (m + theta) / (1 - t). Throws ConfigError for t >= 1 or m <= 0.
double upper_bound(double theta_tilde, double tightness, double threshold);

/// 1 - exp(-2 m^2 K): probability that upper_bound() really bounds Gamma.
double confidence(double tightness, std::size_t samples);

/// Smallest K with confidence(m, K) >= required.
std::size_t min_samples(double tightness, double required_confidence);

struct QuadratureResult {
  double gamma = 0.0;
  double theta = 0.0;
  double truncation_mass = 0.0;  // probability mass outside the integrated box
  std::size_t nodes = 0;
};

/// Dense tensor-product Gauss-Legendre quadrature of Gamma and Theta over the
/// free coordinates (at most 3). Gaussian noise is truncated at 6 sigma per
/// coordinate. `panels` is the number of sub-intervals per axis, each carrying
/// an 8-point rule. Test oracle; cost grows as (8 * panels)^d.
QuadratureResult brute_force_invalidation(const MlpClassifier& model, const Vector& x_cf,
                                          const NoiseSpec& spec, std::size_t panels);

}  // namespace croco

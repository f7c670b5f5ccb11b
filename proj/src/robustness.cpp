#include "croco/robustness.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>
#include <omp.h>

#include "croco/error.hpp"

namespace croco {

namespace {

constexpr Eigen::Index kChunk = 128;

struct ChunkSums {
  double invalid = 0.0;
  double soft = 0.0;
  Vector gradient;
};

void check_draws(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws) {
  if (x_cf.size() != model.input_dim() || draws.rows() != model.input_dim()) {
    throw ShapeError("robustness", "x_cf",
                     fmt::format("point has {} and draws {} coordinates, model expects {}",
                                 x_cf.size(), draws.rows(), model.input_dim()));
  }
  if (draws.cols() == 0) throw ConfigError("robustness", "K", "need at least one draw");
}

}  // namespace

DrawStatistics draw_statistics(const MlpClassifier& model, const Vector& x_cf,
                               const Matrix& draws, bool with_gradient) {
  check_draws(model, x_cf, draws);
  const Eigen::Index total = draws.cols();
  const Eigen::Index chunks = (total + kChunk - 1) / kChunk;
  const double t = model.threshold();
  std::vector<ChunkSums> partial(static_cast<std::size_t>(chunks));

#pragma omp parallel for schedule(static) if (chunks > 1)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunk;
    const Eigen::Index width = std::min(kChunk, total - begin);
    Matrix points = draws.middleCols(begin, width);
    points.colwise() += x_cf;
    const auto eval =
        with_gradient ? model.evaluate_summed_gradient(points) : model.evaluate(points, false);
    auto& sums = partial[static_cast<std::size_t>(c)];
    for (Eigen::Index j = 0; j < width; ++j) {
      const double p = eval.probabilities(j);
      sums.invalid += p > t ? 0.0 : 1.0;
      sums.soft += 1.0 - p;
    }
    if (with_gradient) sums.gradient = -eval.logit_gradients.col(0);
  }

  DrawStatistics out;
  double invalid = 0.0;
  double soft = 0.0;
  if (with_gradient) out.theta_gradient = Vector::Zero(model.input_dim());
  for (const auto& sums : partial) {
    invalid += sums.invalid;
    soft += sums.soft;
    if (with_gradient) out.theta_gradient += sums.gradient;
  }
  const auto k = static_cast<double>(total);
  out.gamma_tilde = invalid / k;
  out.theta_tilde = soft / k;
  if (with_gradient) out.theta_gradient /= k;
  return out;
}

double invalidation_rate(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws) {
  return draw_statistics(model, x_cf, draws, false).gamma_tilde;
}

double soft_invalidation(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws) {
  return draw_statistics(model, x_cf, draws, false).theta_tilde;
}

namespace serial {

DrawStatistics draw_statistics(const MlpClassifier& model, const Vector& x_cf,
                               const Matrix& draws, bool with_gradient) {
  check_draws(model, x_cf, draws);
  DrawStatistics out;
  double invalid = 0.0;
  double soft = 0.0;
  if (with_gradient) out.theta_gradient = Vector::Zero(model.input_dim());
  for (Eigen::Index k = 0; k < draws.cols(); ++k) {
    const Vector point = x_cf + draws.col(k);
    invalid += model.predict_class(point) == 0 ? 1.0 : 0.0;
    soft += 1.0 - model.forward(point);
    if (with_gradient) out.theta_gradient -= model.input_gradient(point);
  }
  const auto k = static_cast<double>(draws.cols());
  out.gamma_tilde = invalid / k;
  out.theta_tilde = soft / k;
  if (with_gradient) out.theta_gradient /= k;
  return out;
}

double invalidation_rate(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws) {
  return serial::draw_statistics(model, x_cf, draws, false).gamma_tilde;
}

double soft_invalidation(const MlpClassifier& model, const Vector& x_cf, const Matrix& draws) {
  return serial::draw_statistics(model, x_cf, draws, false).theta_tilde;
}

}  // namespace serial

double invalidation_rate_mc(const MlpClassifier& model, const Vector& x_cf,
                            const NoiseSpec& spec, std::size_t samples, std::uint64_t stream) {
  return invalidation_rate(model, x_cf, sample(spec, samples, stream));
}

double soft_invalidation_mc(const MlpClassifier& model, const Vector& x_cf,
                            const NoiseSpec& spec, std::size_t samples, std::uint64_t stream) {
  return soft_invalidation(model, x_cf, sample(spec, samples, stream));
}

RobustnessEstimate summarize(const DrawStatistics& stats, std::size_t samples, double tightness,
                             double threshold) {
  RobustnessEstimate est;
  est.gamma_tilde = stats.gamma_tilde;
  est.theta_tilde = stats.theta_tilde;
  est.samples = samples;
  est.tightness = tightness;
  est.upper_bound = upper_bound(stats.theta_tilde, tightness, threshold);
  est.confidence = confidence(tightness, samples);
  return est;
}

RobustnessEstimate estimate_robustness(const MlpClassifier& model, const Vector& x_cf,
                                       const NoiseSpec& spec, std::size_t samples,
                                       double tightness, std::uint64_t stream) {
  const auto stats = draw_statistics(model, x_cf, sample(spec, samples, stream), false);
  return summarize(stats, samples, tightness, model.threshold());
}

double upper_bound(double theta_tilde, double tightness, double threshold) {
  if (!(threshold < 1.0)) {
    throw ConfigError("robustness", "t", fmt::format("threshold {} must be below 1", threshold));
  }
  if (!(tightness > 0.0)) {
    throw ConfigError("robustness", "m", fmt::format("tightness {} must be positive", tightness));
  }
  return (tightness + theta_tilde) / (1.0 - threshold);
}

double confidence(double tightness, std::size_t samples) {
  return -std::expm1(-2.0 * tightness * tightness * static_cast<double>(samples));
}

std::size_t min_samples(double tightness, double required_confidence) {
  if (!(tightness > 0.0)) {
    throw ConfigError("robustness", "m", fmt::format("tightness {} must be positive", tightness));
  }
  if (!(required_confidence > 0.0 && required_confidence < 1.0)) {
    throw ConfigError("robustness", "confidence",
                      fmt::format("{} is outside (0, 1)", required_confidence));
  }
  const double exact = -std::log1p(-required_confidence) / (2.0 * tightness * tightness);
  auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(exact)));
  // ceil() of a rounded quotient can land one off; settle on the formula itself.
  while (k > 1 && confidence(tightness, k - 1) >= required_confidence) --k;
  while (confidence(tightness, k) < required_confidence) ++k;
  return k;
}

}  // namespace croco

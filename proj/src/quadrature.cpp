#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include <fmt/format.h>

#include "croco/error.hpp"
#include "croco/robustness.hpp"

namespace croco {

namespace {

constexpr std::size_t kRuleOrder = 8;
constexpr double kTruncationSigmas = 6.0;
constexpr Eigen::Index kBatch = 4096;

struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Composite Gauss-Legendre rule on [-half_width, half_width].
AxisRule composite_rule(double half_width, std::size_t panels) {
  using Rule = boost::math::quadrature::gauss<double, kRuleOrder>;
  std::vector<double> ref_nodes;
  std::vector<double> ref_weights;
  const auto& abscissa = Rule::abscissa();
  const auto& weights = Rule::weights();
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    ref_nodes.push_back(abscissa[i]);
    ref_weights.push_back(weights[i]);
    if (abscissa[i] != 0.0) {
      ref_nodes.push_back(-abscissa[i]);
      ref_weights.push_back(weights[i]);
    }
  }
  AxisRule rule;
  const double width = 2.0 * half_width / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double center = -half_width + (static_cast<double>(p) + 0.5) * width;
    for (std::size_t i = 0; i < ref_nodes.size(); ++i) {
      rule.nodes.push_back(center + 0.5 * width * ref_nodes[i]);
      rule.weights.push_back(0.5 * width * ref_weights[i]);
    }
  }
  return rule;
}

}  // namespace

QuadratureResult brute_force_invalidation(const MlpClassifier& model, const Vector& x_cf,
                                          const NoiseSpec& spec, std::size_t panels) {
  spec.validate();
  if (x_cf.size() != model.input_dim() ||
      spec.dimension() != static_cast<std::size_t>(model.input_dim())) {
    throw ShapeError("robustness", "x_cf", "point, noise and model dimensions disagree");
  }
  const std::size_t dims = spec.free_dimensions();
  if (dims > 3) {
    throw ConfigError("robustness", "dimension",
                      fmt::format("quadrature oracle supports at most 3 free coordinates, got {}", dims));
  }
  if (panels == 0) throw ConfigError("robustness", "grid_resolution", "must be at least 1");

  const bool gaussian = spec.kind == NoiseKind::Gaussian;
  const double sigma = spec.sigma();
  const double half_width = gaussian ? kTruncationSigmas * sigma : spec.scale;
  const AxisRule axis = composite_rule(half_width, panels);
  const std::size_t per_axis = axis.nodes.size();

  std::vector<double> axis_density(per_axis, 1.0);
  if (gaussian) {
    for (std::size_t i = 0; i < per_axis; ++i) {
      const double u = axis.nodes[i] / sigma;
      axis_density[i] = std::exp(-0.5 * u * u) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    }
  }
  const double ball_density =
      gaussian ? 1.0
               : 1.0 / (std::pow(std::numbers::pi, dims / 2.0) * std::pow(spec.scale, dims) /
                        boost::math::tgamma(dims / 2.0 + 1.0));

  std::vector<Eigen::Index> free_coords;
  for (std::size_t j = 0; j < spec.dimension(); ++j) {
    if (!spec.frozen[j]) free_coords.push_back(static_cast<Eigen::Index>(j));
  }

  std::size_t total = 1;
  for (std::size_t d = 0; d < dims; ++d) total *= per_axis;
  const auto batches = static_cast<Eigen::Index>((total + kBatch - 1) / kBatch);
  struct Partial {
    double mass = 0.0;
    double gamma = 0.0;
    double theta = 0.0;
  };
  std::vector<Partial> partial(static_cast<std::size_t>(batches));
  const double t = model.threshold();

#pragma omp parallel for schedule(static) if (batches > 1)
  for (Eigen::Index b = 0; b < batches; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * kBatch;
    const std::size_t width = std::min<std::size_t>(kBatch, total - begin);
    Matrix points = x_cf.replicate(1, static_cast<Eigen::Index>(width));
    std::vector<double> weight(width);
    for (std::size_t j = 0; j < width; ++j) {
      std::size_t index = begin + j;
      double w = 1.0;
      double radius2 = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const std::size_t i = index % per_axis;
        index /= per_axis;
        points(free_coords[d], static_cast<Eigen::Index>(j)) += axis.nodes[i];
        w *= axis.weights[i] * axis_density[i];
        radius2 += axis.nodes[i] * axis.nodes[i];
      }
      if (!gaussian) w = radius2 <= spec.scale * spec.scale ? w * ball_density : 0.0;
      weight[j] = w;
    }
    const auto eval = model.evaluate(points, false);
    auto& acc = partial[static_cast<std::size_t>(b)];
    for (std::size_t j = 0; j < width; ++j) {
      const double p = eval.probabilities(static_cast<Eigen::Index>(j));
      acc.mass += weight[j];
      acc.gamma += p > t ? 0.0 : weight[j];
      acc.theta += weight[j] * (1.0 - p);
    }
  }

  Partial sum;
  for (const auto& p : partial) {
    sum.mass += p.mass;
    sum.gamma += p.gamma;
    sum.theta += p.theta;
  }
  QuadratureResult out;
  // Normalizing by the integrated mass conditions on the truncated support.
  out.gamma = sum.gamma / sum.mass;
  out.theta = sum.theta / sum.mass;
  out.truncation_mass =
      gaussian ? 1.0 - std::pow(std::erf(kTruncationSigmas / std::numbers::sqrt2), dims) : 0.0;
  out.nodes = total;
  return out;
}

}  // namespace croco

#include "croco/generators.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>

#include <fmt/format.h>

#include "croco/error.hpp"

namespace croco {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMinGradientNorm = 1e-12;
constexpr std::uint64_t kFinalDrawTag = 0xF17A1ULL;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vector l1_subgradient(const Vector& delta) { return delta.unaryExpr(&sign); }

void apply_mask(Vector& v, const std::vector<bool>& frozen) {
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (frozen[static_cast<std::size_t>(j)]) v(j) = 0.0;
  }
}

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

double normal_pdf(double u) {
  return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
}

/// One evaluation of a generator objective at x + delta.
struct Step {
  double robustness = 0.0;
  double validity = 0.0;
  double proximity = 0.0;
  double probability = 0.0;
  double estimate = kNaN;
  double bound = kNaN;
  bool done = false;
  Vector gradient;
  std::optional<DrawStatistics> stats;  // draws fresh at this point, if taken
};

using Objective =
    std::function<Step(const Vector& delta, double lambda, int iteration, bool with_gradient)>;

Matrix draws_for(const GenerationConfig& config, int iteration) {
  const std::uint64_t index =
      config.draw_mode == DrawMode::Fixed ? 0 : static_cast<std::uint64_t>(iteration);
  return sample(config.noise, config.samples, stream_key({config.stream, index}));
}

/// Gradient descent on delta with the lambda schedule shared by all three
/// methods: max_inner_iters steps per lambda value, lambda lowered by
/// lambda_decrement (floored at 0) between rounds, max_outer_steps rounds.
GenerationResult descend(const MlpClassifier& model, const Vector& x,
                         const GenerationConfig& config, const Objective& objective) {
  config.validate(model);
  if (x.size() != model.input_dim()) {
    throw ShapeError("generators", "x",
                     fmt::format("instance has {} features, model expects {}", x.size(),
                                 model.input_dim()));
  }
  if (model.predict_class(x) != 0) {
    throw PreconditionError("generators", "x",
                            "instance is already classified 1; counterfactuals are generated for "
                            "class-0 instances only");
  }

  GenerationResult result;
  result.method = config.method;
  result.probe_estimate = kNaN;
  Vector delta = Vector::Zero(x.size());
  int iteration = 0;
  double lambda = config.lambda_init;
  std::optional<Step> last;

  auto record = [&](const Step& step, int outer) {
    if (!config.record_trace) return;
    TraceEntry e;
    e.iteration = iteration;
    e.outer_step = outer;
    e.lambda = lambda;
    e.robustness = step.robustness;
    e.validity = step.validity;
    e.proximity = step.proximity;
    e.total = step.robustness + step.validity + step.proximity;
    e.probability = step.probability;
    e.estimate = step.estimate;
    e.bound = step.bound;
    result.trace.push_back(e);
  };

  bool converged = false;
  for (int outer = 0; outer < config.max_outer_steps && !converged; ++outer) {
    lambda = std::max(config.lambda_init - outer * config.lambda_decrement, 0.0);
    for (int inner = 0; inner < config.max_inner_iters; ++inner) {
      Step step = objective(delta, lambda, iteration, true);
      record(step, outer);
      if (step.done) {
        converged = true;
        last = std::move(step);
        break;
      }
      apply_mask(step.gradient, config.noise.frozen);
      delta -= config.learning_rate * step.gradient;
      ++iteration;
    }
  }
  if (!converged) {
    // Budget spent: judge the final iterate once more.
    Step step = objective(delta, lambda, iteration, false);
    record(step, config.max_outer_steps);
    converged = step.done;
    last = std::move(step);
  }

  result.delta = delta;
  result.x_cf = x + delta;
  result.converged = converged;
  result.lambda = lambda;
  result.iterations = iteration;
  if (config.method == Method::Probe) result.probe_estimate = last->estimate;
  if (last->stats) {
    result.estimate = summarize(*last->stats, config.samples, config.tightness, model.threshold());
  } else {
    result.estimate = estimate_robustness(model, result.x_cf, config.noise, config.samples,
                                          config.tightness,
                                          stream_key({config.stream, kFinalDrawTag}));
  }
  return result;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Wachter:
      return "wachter";
    case Method::Probe:
      return "probe";
    case Method::Croco:
      return "croco";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "wachter") return Method::Wachter;
  if (name == "probe") return Method::Probe;
  if (name == "croco") return Method::Croco;
  throw ConfigError("generators", "method", fmt::format("unknown method '{}'", name),
                    "use wachter, probe or croco");
}

std::string_view to_string(ValidityLoss loss) {
  return loss == ValidityLoss::Squared ? "squared" : "cross-entropy";
}

ValidityLoss parse_validity_loss(std::string_view name) {
  if (name == "squared") return ValidityLoss::Squared;
  if (name == "cross-entropy") return ValidityLoss::CrossEntropy;
  throw ConfigError("generators", "validity_loss", fmt::format("unknown loss '{}'", name),
                    "use squared or cross-entropy");
}

void GenerationConfig::validate(const MlpClassifier& model) const {
  noise.validate();
  if (noise.dimension() != static_cast<std::size_t>(model.input_dim())) {
    throw ShapeError("generators", "noise",
                     fmt::format("noise has {} coordinates, model expects {}", noise.dimension(),
                                 model.input_dim()));
  }
  if (!(learning_rate > 0.0)) throw ConfigError("generators", "learning_rate", "must be > 0");
  if (!(lambda_init >= 0.0)) throw ConfigError("generators", "lambda_init", "must be >= 0");
  if (!(lambda_decrement >= 0.0)) {
    throw ConfigError("generators", "lambda_decrement", "must be >= 0");
  }
  if (max_inner_iters < 1 || max_outer_steps < 1) {
    throw ConfigError("generators", "max_inner_iters", "iteration budgets must be >= 1");
  }
  if (samples < 1) throw ConfigError("generators", "K", "must be >= 1");
  if (!(tightness > 0.0)) throw ConfigError("generators", "m", "must be > 0");
  if (method != Method::Wachter && !(target > 0.0 && target < 1.0)) {
    throw ConfigError("generators", "target", fmt::format("{} is outside (0, 1)", target));
  }
  if (method == Method::Probe && noise.kind != NoiseKind::Gaussian) {
    throw ConfigError("generators", "noise", "PROBE's approximation needs Gaussian noise");
  }
  const double t = model.threshold();
  if (!(t < 1.0)) throw ConfigError("generators", "t", "threshold must be below 1");
  if (method == Method::Croco && !allow_unreachable_target) {
    const double floor = tightness / (1.0 - t);
    if (!(target > floor)) {
      throw ConfigError(
          "generators", "target",
          fmt::format("target {} is unreachable: the bound (m + theta) / (1 - t) is at least "
                      "m / (1 - t) = {}",
                      target, floor),
          "raise the target or lower m (and raise K to keep the confidence)");
    }
  }
}

LossValue validity_loss(double p_hat, int target_class, ValidityLoss kind) {
  const double y = target_class == 1 ? 1.0 : 0.0;
  if (kind == ValidityLoss::Squared) return {(p_hat - y) * (p_hat - y), 2.0 * (p_hat - y)};
  if (target_class == 1) return {-std::log(p_hat), -1.0 / p_hat};
  return {-std::log1p(-p_hat), 1.0 / (1.0 - p_hat)};
}

ProbeEstimate probe_first_order_estimate(const MlpClassifier& model, const Vector& x_cf,
                                         double variance, const std::vector<bool>& frozen) {
  if (!(variance > 0.0)) {
    throw ConfigError("generators", "variance", fmt::format("must be > 0, got {}", variance));
  }
  if (!frozen.empty() && frozen.size() != static_cast<std::size_t>(x_cf.size())) {
    throw ShapeError("generators", "frozen", "mask length does not match the point");
  }
  const double sigma = std::sqrt(variance);
  const double t = model.threshold();
  const double p = logistic(model.logit(x_cf));
  const Vector g = model.logit_gradient(x_cf);
  Vector g_free = g;
  if (!frozen.empty()) apply_mask(g_free, frozen);

  const double slope = p * (1.0 - p);          // logistic'
  const double curvature = slope * (1.0 - 2.0 * p);  // logistic''
  const double logit_norm = g_free.norm();
  const double f_grad_norm = slope * logit_norm;

  double spread = sigma * f_grad_norm;
  Vector spread_gradient = sigma * curvature * logit_norm * g;
  if (f_grad_norm < kMinGradientNorm) {
    // Flat region: collapse to the step 1(f <= t) with a tiny fixed width.
    spread = sigma * kMinGradientNorm;
    spread_gradient.setZero();
  }
  const double u = (t - p) / spread;
  const Vector du = (-slope * g * spread - (t - p) * spread_gradient) / (spread * spread);
  return {normal_cdf(u), normal_pdf(u) * du};
}

CrocoLoss croco_loss(const MlpClassifier& model, const Vector& x, const Vector& delta,
                     const GenerationConfig& config, const Matrix& draws, double lambda) {
  const double t = model.threshold();
  const Vector point = x + delta;
  CrocoLoss out;
  out.stats = draw_statistics(model, point, draws, true);
  out.bound = upper_bound(out.stats.theta_tilde, config.tightness, t);
  const double gap = out.bound - config.target;
  out.robustness = gap * gap;

  const double z = model.logit(point);
  out.probability = logistic(z);
  const auto loss = validity_loss(out.probability, 1, config.validity_loss);
  out.validity = loss.value;
  out.proximity = lambda * delta.lpNorm<1>();
  out.total = out.robustness + out.validity + out.proximity;

  const Vector f_gradient =
      out.probability * (1.0 - out.probability) * model.logit_gradient(point);
  out.gradient = (2.0 * gap / (1.0 - t)) * out.stats.theta_gradient +
                 loss.derivative * f_gradient + lambda * l1_subgradient(delta);
  apply_mask(out.gradient, config.noise.frozen);
  return out;
}

GenerationResult wachter_generate(const MlpClassifier& model, const Vector& x,
                                  const GenerationConfig& config) {
  const double t = model.threshold();
  Objective objective = [&](const Vector& delta, double lambda, int, bool with_gradient) {
    const Vector point = x + delta;
    Step step;
    step.probability = model.forward(point);
    const auto loss = validity_loss(step.probability, 1, config.validity_loss);
    step.validity = loss.value;
    step.proximity = lambda * delta.lpNorm<1>();
    step.done = step.probability > t;
    if (with_gradient && !step.done) {
      step.gradient = loss.derivative * model.input_gradient(point) + lambda * l1_subgradient(delta);
    }
    return step;
  };
  GenerationConfig cfg = config;
  cfg.method = Method::Wachter;
  return descend(model, x, cfg, objective);
}

GenerationResult probe_generate(const MlpClassifier& model, const Vector& x,
                                const GenerationConfig& config) {
  const double t = model.threshold();
  Objective objective = [&](const Vector& delta, double lambda, int, bool with_gradient) {
    const Vector point = x + delta;
    Step step;
    const auto approx =
        probe_first_order_estimate(model, point, config.noise.scale, config.noise.frozen);
    step.estimate = approx.value;
    step.robustness = std::max(approx.value - config.target, 0.0);
    step.probability = model.forward(point);
    const auto loss = validity_loss(step.probability, 1, config.validity_loss);
    step.validity = loss.value;
    step.proximity = lambda * delta.lpNorm<1>();
    step.done = step.probability > t && approx.value <= config.target;
    if (with_gradient && !step.done) {
      step.gradient = loss.derivative * model.input_gradient(point) + lambda * l1_subgradient(delta);
      if (approx.value > config.target) step.gradient += approx.gradient;
    }
    return step;
  };
  GenerationConfig cfg = config;
  cfg.method = Method::Probe;
  return descend(model, x, cfg, objective);
}

GenerationResult croco_generate(const MlpClassifier& model, const Vector& x,
                                const GenerationConfig& config) {
  const double t = model.threshold();
  std::optional<Matrix> fixed;
  if (config.draw_mode == DrawMode::Fixed) fixed = draws_for(config, 0);
  Objective objective = [&](const Vector& delta, double lambda, int iteration, bool) {
    const Matrix draws = fixed ? *fixed : draws_for(config, iteration);
    auto loss = croco_loss(model, x, delta, config, draws, lambda);
    Step step;
    step.robustness = loss.robustness;
    step.validity = loss.validity;
    step.proximity = loss.proximity;
    step.probability = loss.probability;
    step.estimate = loss.stats.theta_tilde;
    step.bound = loss.bound;
    step.done = loss.probability > t && loss.bound <= config.target;
    step.gradient = std::move(loss.gradient);
    step.stats = std::move(loss.stats);
    return step;
  };
  GenerationConfig cfg = config;
  cfg.method = Method::Croco;
  return descend(model, x, cfg, objective);
}

GenerationResult generate(const MlpClassifier& model, const Vector& x,
                          const GenerationConfig& config) {
  switch (config.method) {
    case Method::Wachter:
      return wachter_generate(model, x, config);
    case Method::Probe:
      return probe_generate(model, x, config);
    case Method::Croco:
      return croco_generate(model, x, config);
  }
  throw ConfigError("generators", "method", "unknown method");
}

}  // namespace croco

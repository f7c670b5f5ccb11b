#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "croco/model.hpp"
#include "croco/noise.hpp"
#include "croco/robustness.hpp"

namespace croco {

enum class Method { Wachter, Probe, Croco };
enum class ValidityLoss { Squared, CrossEntropy };

/// Fresh: new noise draws every iteration. Fixed: one set of draws for the
/// whole run (used to check gradients against finite differences).
enum class DrawMode { Fresh, Fixed };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);
std::string_view to_string(ValidityLoss loss);
ValidityLoss parse_validity_loss(std::string_view name);

struct GenerationConfig {
  Method method = Method::Croco;
  double target = 0.35;  // Gamma_t for PROBE, bound target for CROCO
  NoiseSpec noise;       // its frozen mask also marks the non-mutable coordinates
  std::size_t samples = 500;
  double tightness = 0.1;
  double learning_rate = 0.001;
  double lambda_init = 1.0;
  double lambda_decrement = 0.25;
  int max_inner_iters = 1000;
  int max_outer_steps = 5;  // lambda = 1, 0.75, 0.5, 0.25, 0 with the defaults
  ValidityLoss validity_loss = ValidityLoss::CrossEntropy;
  DrawMode draw_mode = DrawMode::Fresh;
  // CROCO cannot satisfy bound <= target when target <= m / (1 - t). By
  // default that is rejected up front; when allowed, the run spends its full
  // budget and reports converged = false together with the achieved bound.
  bool allow_unreachable_target = false;
  bool record_trace = true;
  std::uint64_t stream = 0;  // per-instance noise stream

  /// Throws ConfigError / ShapeError for a config unusable with `model`.
  void validate(const MlpClassifier& model) const;
};

struct TraceEntry {
  int iteration = 0;
  int outer_step = 0;
  double lambda = 0.0;
  double robustness = 0.0;
  double validity = 0.0;
  double proximity = 0.0;
  double total = 0.0;
  double probability = 0.0;  // f(x + delta)
  double estimate = 0.0;     // theta-tilde (CROCO), PROBE estimate (PROBE), NaN (Wachter)
  double bound = 0.0;        // (m + theta-tilde) / (1 - t) for CROCO, NaN otherwise
};

struct GenerationResult {
  Method method = Method::Croco;
  Vector delta;
  Vector x_cf;
  bool converged = false;
  double lambda = 0.0;
  int iterations = 0;  // gradient steps taken
  RobustnessEstimate estimate;   // at x_cf, with draws fresh at exit
  double probe_estimate = 0.0;   // PROBE only, NaN otherwise
  std::vector<TraceEntry> trace;
};

struct LossValue {
  double value = 0.0;
  double derivative = 0.0;  // d value / d p_hat
};

/// Squared: (p - y)^2. Cross-entropy: -log p for y = 1, -log(1 - p) for y = 0.
LossValue validity_loss(double p_hat, int target_class, ValidityLoss kind);

struct ProbeEstimate {
  double value = 0.0;
  Vector gradient;
};

/// First-order Gaussian approximation of the invalidation rate:
/// Phi((t - f(x)) / (sigma * ||grad f(x)||)), with the gradient norm taken
/// over the coordinates that receive noise. Its gradient is exact almost
/// everywhere for ReLU networks, whose logit Hessian vanishes between kinks.
ProbeEstimate probe_first_order_estimate(const MlpClassifier& model, const Vector& x_cf,
                                         double variance, const std::vector<bool>& frozen = {});

struct CrocoLoss {
  double robustness = 0.0;  // ((theta + m) / (1 - t) - target)^2
  double validity = 0.0;
  double proximity = 0.0;  // lambda * ||delta||_1
  double total = 0.0;
  double probability = 0.0;
  DrawStatistics stats;
  double bound = 0.0;
  Vector gradient;  // w.r.t. delta, zero on frozen coordinates
};

/// CROCO objective and its gradient for one fixed set of draws.
CrocoLoss croco_loss(const MlpClassifier& model, const Vector& x, const Vector& delta,
                     const GenerationConfig& config, const Matrix& draws, double lambda);

GenerationResult wachter_generate(const MlpClassifier& model, const Vector& x,
                                  const GenerationConfig& config);
GenerationResult probe_generate(const MlpClassifier& model, const Vector& x,
                                const GenerationConfig& config);
GenerationResult croco_generate(const MlpClassifier& model, const Vector& x,
                                const GenerationConfig& config);

/// Dispatches on config.method.
GenerationResult generate(const MlpClassifier& model, const Vector& x,
                          const GenerationConfig& config);

}  // namespace croco

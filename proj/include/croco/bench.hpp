#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "croco/generators.hpp"

namespace croco {

/// Metrics of one counterfactual in one (method, variance, target) cell.
/// Wachter has no target, so `target` is empty for its records.
struct SweepRecord {
  Method method = Method::Croco;
  std::optional<double> variance;
  std::optional<double> target;
  std::size_t instance = 0;
  int validity = 0;         // 1 iff the predicted class flipped
  double distance = 0.0;    // ||delta||_1
  double gamma_eval = 0.0;  // gamma-tilde on fresh evaluation draws
  double bound = 0.0;       // (m + theta-tilde_final) / (1 - t)
  bool converged = false;
};

/// Validity, distance and a fresh-draw invalidation rate for `result`.
/// Evaluation draws come from `stream`, independent of the generation draws.
SweepRecord evaluate(const MlpClassifier& model, const Vector& x, const GenerationResult& result,
                     std::size_t k_eval, const NoiseSpec& spec, std::uint64_t stream);

struct SweepGrid {
  std::vector<double> variances{0.005, 0.01, 0.015, 0.02};
  std::vector<double> targets{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35};
};

struct SweepOptions {
  GenerationConfig base;  // method, target, noise scale and stream are overridden per cell
  SweepGrid grid;
  std::vector<Method> methods{Method::Wachter, Method::Probe, Method::Croco};
  std::uint64_t base_seed = 0;
  std::size_t k_eval = 10000;
  int jobs = 1;
};

/// Runs every (method, variance, target, instance) cell. Wachter is generated
/// once per instance and evaluated under each variance. Output is sorted by
/// (method, variance, target, instance) and independent of `jobs`.
std::vector<SweepRecord> run_sweep(const MlpClassifier& model, std::span<const Vector> instances,
                                   const SweepOptions& options);

// CSV emitters. Floats use 6 significant digits; absent values are "NA".
// Each throws ConfigError on empty input.

/// method,variance,target,count,mean_distance,sd_distance,mean_gamma,sd_gamma
void write_tradeoff(std::span<const SweepRecord> records, std::ostream& out);
/// method,target,<one column per variance> holding percent validity.
void write_validity_heatmap(std::span<const SweepRecord> records, std::ostream& out);
/// method,variance,target,instance,gamma_eval for records that have a target.
void write_target_comparison(std::span<const SweepRecord> records, std::ostream& out);
/// method,variance,target,instance,bound,gamma_eval,converged
void write_bound_check(std::span<const SweepRecord> records, std::ostream& out);

void emit_tradeoff(std::span<const SweepRecord> records, const std::filesystem::path& path);
void emit_validity_heatmap(std::span<const SweepRecord> records, const std::filesystem::path& path);
void emit_target_comparison(std::span<const SweepRecord> records,
                            const std::filesystem::path& path);
void emit_bound_check(std::span<const SweepRecord> records, const std::filesystem::path& path);

/// Sort order shared by run_sweep and the emitters.
bool record_less(const SweepRecord& a, const SweepRecord& b);

}  // namespace croco

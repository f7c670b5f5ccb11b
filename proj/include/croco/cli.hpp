#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "croco/bench.hpp"
#include "croco/data.hpp"
#include "croco/generators.hpp"
#include "croco/model.hpp"

namespace croco {

struct SyntheticSpec {
  std::size_t rows = 2000;
  double separation = 6.0;
  std::uint64_t seed = 0;
};

/// Everything a CLI run needs, parsed from one JSON document. Defaults follow
/// the published experimental setup (t = 0.5, K = 500, m = 0.1, alpha = 0.001,
/// lambda from 1 down by 0.25).
struct RunConfig {
  // data: exactly one of csv+schema or synthetic
  std::optional<std::filesystem::path> csv;
  std::optional<std::filesystem::path> schema;
  std::optional<SyntheticSpec> synthetic;
  double split_fraction = 0.75;

  // model: exactly one of a weight file or training hyperparameters
  std::optional<std::filesystem::path> model_path;
  std::optional<TrainParams> train;
  double threshold = 0.5;

  std::vector<Method> methods{Method::Wachter, Method::Probe, Method::Croco};
  NoiseKind noise_kind = NoiseKind::Gaussian;
  std::vector<double> noise_scales{0.005, 0.01, 0.015, 0.02};  // variances or radii
  std::vector<double> targets{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35};

  std::size_t samples = 500;
  double tightness = 0.1;
  double learning_rate = 0.001;
  double lambda_init = 1.0;
  double lambda_decrement = 0.25;
  int max_inner_iters = 1000;
  int max_outer_steps = 5;
  ValidityLoss validity_loss = ValidityLoss::CrossEntropy;
  bool allow_unreachable_targets = false;

  std::size_t instances = 100;
  std::size_t k_eval = 10000;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path out = "out";

  /// Checks cross-field invariants. Unreachable CROCO targets are rejected
  /// here, before any data is loaded, unless explicitly allowed.
  void validate() const;
  GenerationConfig generation_config(std::size_t dimension, const std::vector<bool>& frozen) const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Normalized data, its split, and the classifier.
struct Workspace {
  Dataset data;
  Dataset train;
  Dataset test;
  MlpClassifier model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

Workspace prepare_workspace(const RunConfig& config);

/// Test-set rows the model classifies 0, in test-set order, at most `limit`.
std::vector<std::size_t> negative_instances(const Workspace& ws, std::size_t limit);

struct TrainSummary {
  std::filesystem::path weights;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

TrainSummary cmd_train(const RunConfig& config);

/// Generates counterfactuals for the first variance/target of the grids.
/// `instance` selects a test-set row; otherwise config.instances negative rows
/// are used. Writes <out>/counterfactuals.json and returns its path.
std::filesystem::path cmd_generate(const RunConfig& config, std::optional<std::size_t> instance);

/// Writes tradeoff.csv, validity_heatmap.csv, target_comparison.csv and
/// bound_check.csv into config.out.
std::vector<SweepRecord> cmd_sweep(const RunConfig& config);

/// CSV of the sample count needed for each (m, confidence) pair.
void cmd_bound_table(const std::vector<double>& tightness, const std::vector<double>& levels,
                     std::ostream& out);

/// Re-scores a counterfactuals.json file with fresh draws; writes
/// <out>/evaluation.csv.
std::filesystem::path cmd_evaluate(const RunConfig& config, const std::filesystem::path& results);

/// Exit code for an exception escaping a command: 2 config, 3 runtime.
int exit_code_for(const std::exception& e);

}  // namespace croco

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace croco {

enum class FeatureKind { Continuous, Categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  bool is_mutable = true;
};

/// Raw-column description, as read from the JSON sidecar.
struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::string label;
};

/// One column of the encoded feature matrix. Categorical features expand to
/// one column per level (one-hot); those columns are never mutable.
struct EncodedColumn {
  std::string name;
  std::size_t feature = 0;  // index into FeatureSchema::features
  std::string level;        // empty for continuous columns
  bool is_mutable = false;
  double min = 0.0;  // raw-unit range, filled by normalize()
  double max = 1.0;
};

struct Dataset {
  Eigen::MatrixXd features;  // rows x encoded columns
  std::vector<int> labels;
  FeatureSchema schema;
  std::vector<EncodedColumn> columns;
  bool normalized = false;

  std::size_t rows() const { return labels.size(); }
  std::size_t dimension() const { return columns.size(); }
  /// true = column excluded from perturbation and optimization.
  std::vector<bool> frozen_mask() const;
  Eigen::VectorXd row(std::size_t i) const { return features.row(i).transpose(); }
};

FeatureSchema load_schema(const std::filesystem::path& path);

/// Reads a header-row CSV. Categorical columns are one-hot encoded with
/// levels in lexicographic order. Empty, non-numeric and non-finite cells in
/// continuous columns are rejected.
Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema);

/// Parses CSV text into rows of fields (RFC 4180 quoting).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Min-max scales continuous columns to [0, 1] and records the ranges.
Dataset normalize(const Dataset& dataset);

/// Maps a normalized point back to raw units using the recorded ranges.
Eigen::VectorXd denormalize(const Dataset& dataset, const Eigen::VectorXd& x);

/// Maps a raw point into normalized units.
Eigen::VectorXd normalize_point(const Dataset& dataset, const Eigen::VectorXd& x);

/// Deterministic shuffled partition; the first round(fraction * rows) shuffled
/// rows go to the training set.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction = 0.75,
                                  std::uint64_t seed = 0);

/// Two unit-variance isotropic 2D Gaussian blobs whose means are `separation`
/// apart. The first n/2 rows are class 0. Returned in raw units.
Dataset synth_two_gaussians(std::size_t n, double separation, std::uint64_t seed);

}  // namespace croco

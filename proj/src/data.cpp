#include "croco/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include "json.hpp"

#include "croco/error.hpp"

namespace croco {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("data", "path", "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = first + cell.size();
  while (first != last && *first == ' ') ++first;
  while (last != first && *(last - 1) == ' ') --last;
  if (first == last) return false;
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

void validate_schema(const FeatureSchema& schema) {
  if (schema.label.empty()) throw ConfigError("data", "label", "schema has no label column");
  bool has_mutable_continuous = false;
  std::set<std::string> seen;
  for (const auto& f : schema.features) {
    if (!seen.insert(f.name).second) {
      throw ConfigError("data", "features", "duplicate feature '" + f.name + "'");
    }
    if (f.name == schema.label) {
      throw ConfigError("data", "features", "label '" + f.name + "' also listed as a feature");
    }
    has_mutable_continuous |= f.kind == FeatureKind::Continuous && f.is_mutable;
  }
  if (!has_mutable_continuous) {
    throw ConfigError("data", "features", "at least one continuous mutable feature is required");
  }
}

}  // namespace

std::vector<bool> Dataset::frozen_mask() const {
  std::vector<bool> frozen(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) frozen[j] = !columns[j].is_mutable;
  return frozen;
}

FeatureSchema load_schema(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("data", "schema", e.what());
  }
  FeatureSchema schema;
  if (!doc.contains("label") || !doc["label"].is_string()) {
    throw ParseError("data", "label", "schema needs a string 'label'");
  }
  schema.label = doc["label"].get<std::string>();
  if (!doc.contains("features") || !doc["features"].is_array()) {
    throw ParseError("data", "features", "schema needs a 'features' array");
  }
  for (const auto& f : doc["features"]) {
    FeatureSpec spec;
    if (!f.contains("name") || !f["name"].is_string()) {
      throw ParseError("data", "features[].name", "missing feature name");
    }
    spec.name = f["name"].get<std::string>();
    const std::string kind = f.value("kind", "continuous");
    if (kind == "continuous") {
      spec.kind = FeatureKind::Continuous;
    } else if (kind == "categorical") {
      spec.kind = FeatureKind::Categorical;
    } else {
      throw ParseError("data", "features[" + spec.name + "].kind", "unknown kind '" + kind + "'");
    }
    spec.is_mutable = f.value("mutable", spec.kind == FeatureKind::Continuous);
    schema.features.push_back(std::move(spec));
  }
  validate_schema(schema);
  return schema;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        field.clear();
        row.clear();
        row_has_content = false;
        break;
      default:
        field += c;
        row_has_content = true;
    }
  }
  if (quoted) throw ParseError("data", "csv", "unterminated quoted field");
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  validate_schema(schema);
  const auto table = parse_csv(read_file(path));
  if (table.empty()) throw ParseError("data", "header", "CSV has no header row");
  const auto& header = table.front();

  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ConfigError("data", name, "column missing from " + path.filename().string(),
                        "check the schema against the CSV header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column_of(schema.label);
  std::vector<std::size_t> source_cols;
  for (const auto& f : schema.features) source_cols.push_back(column_of(f.name));

  const std::size_t n_rows = table.size() - 1;
  for (std::size_t r = 1; r < table.size(); ++r) {
    if (table[r].size() != header.size()) {
      throw ParseError("data", fmt::format("row {}", r),
                       fmt::format("has {} fields, header has {}", table[r].size(), header.size()));
    }
  }

  Dataset ds;
  ds.schema = schema;
  std::vector<std::map<std::string, std::size_t>> level_columns(schema.features.size());
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& spec = schema.features[f];
    if (spec.kind == FeatureKind::Continuous) {
      ds.columns.push_back({spec.name, f, {}, spec.is_mutable, 0.0, 1.0});
      continue;
    }
    std::set<std::string> levels;
    for (std::size_t r = 1; r < table.size(); ++r) {
      const auto& cell = table[r][source_cols[f]];
      if (cell.empty()) {
        throw ParseError("data", spec.name, fmt::format("empty cell at row {}", r));
      }
      levels.insert(cell);
    }
    for (const auto& level : levels) {
      level_columns[f][level] = ds.columns.size();
      ds.columns.push_back({spec.name + "=" + level, f, level, false, 0.0, 1.0});
    }
  }

  ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_rows),
                                      static_cast<Eigen::Index>(ds.columns.size()));
  ds.labels.resize(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto& cells = table[r + 1];
    double label = 0.0;
    if (!parse_double(cells[label_col], label) || (label != 0.0 && label != 1.0)) {
      throw ConfigError("data", schema.label,
                        fmt::format("row {} has non-binary label '{}'", r + 1, cells[label_col]));
    }
    ds.labels[r] = static_cast<int>(label);
  }
  std::size_t col = 0;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& spec = schema.features[f];
    if (spec.kind == FeatureKind::Continuous) {
      for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& cell = table[r + 1][source_cols[f]];
        double value = 0.0;
        if (!parse_double(cell, value)) {
          throw ParseError("data", spec.name,
                           fmt::format("row {}: '{}' is not a number", r + 1, cell));
        }
        if (!std::isfinite(value)) {
          throw ParseError("data", spec.name, fmt::format("row {}: non-finite value", r + 1));
        }
        ds.features(r, col) = value;
      }
      ++col;
    } else {
      for (std::size_t r = 0; r < n_rows; ++r) {
        ds.features(r, level_columns[f].at(table[r + 1][source_cols[f]])) = 1.0;
      }
      col += level_columns[f].size();
    }
  }
  return ds;
}

Dataset normalize(const Dataset& dataset) {
  if (dataset.normalized) return dataset;
  Dataset out = dataset;
  std::vector<std::string> constant;
  for (std::size_t j = 0; j < out.columns.size(); ++j) {
    auto& column = out.columns[j];
    if (!column.level.empty()) continue;  // one-hot, already in [0, 1]
    if (out.features.rows() == 0) {
      throw ConfigError("data", "dataset", "cannot normalize an empty dataset");
    }
    column.min = out.features.col(j).minCoeff();
    column.max = out.features.col(j).maxCoeff();
    if (!(column.min < column.max)) {
      constant.push_back(column.name);
      continue;
    }
    out.features.col(j).array() = (out.features.col(j).array() - column.min) / (column.max - column.min);
  }
  if (!constant.empty()) {
    throw ConfigError("data", fmt::format("{}", fmt::join(constant, ", ")),
                      "constant feature(s) cannot be min-max normalized",
                      "drop the column or mark it categorical");
  }
  out.normalized = true;
  return out;
}

Eigen::VectorXd denormalize(const Dataset& dataset, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != dataset.columns.size()) {
    throw ShapeError("data", "x", "point dimension does not match the dataset");
  }
  Eigen::VectorXd raw = x;
  for (std::size_t j = 0; j < dataset.columns.size(); ++j) {
    const auto& c = dataset.columns[j];
    raw(j) = c.min + x(j) * (c.max - c.min);
  }
  return raw;
}

Eigen::VectorXd normalize_point(const Dataset& dataset, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != dataset.columns.size()) {
    throw ShapeError("data", "x", "point dimension does not match the dataset");
  }
  Eigen::VectorXd out = x;
  for (std::size_t j = 0; j < dataset.columns.size(); ++j) {
    const auto& c = dataset.columns[j];
    out(j) = (x(j) - c.min) / (c.max - c.min);
  }
  return out;
}

namespace {

Dataset take_rows(const Dataset& dataset, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.schema = dataset.schema;
  out.columns = dataset.columns;
  out.normalized = dataset.normalized;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dataset.features.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(i) = dataset.features.row(rows[i]);
    out.labels[i] = dataset.labels[rows[i]];
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("data", "fraction", fmt::format("{} is outside (0, 1]", fraction));
  }
  std::vector<std::size_t> order(dataset.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * order.size()));
  std::vector<std::size_t> train_rows(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test_rows(order.begin() + n_train, order.end());
  if (test_rows.empty()) spdlog::warn("data: split fraction {} leaves an empty test set", fraction);
  return {take_rows(dataset, train_rows), take_rows(dataset, test_rows)};
}

Dataset synth_two_gaussians(std::size_t n, double separation, std::uint64_t seed) {
  if (n == 0) throw ConfigError("data", "n", "synthetic dataset needs at least one row");
  Dataset ds;
  ds.schema.label = "y";
  ds.schema.features = {{"x1", FeatureKind::Continuous, true}, {"x2", FeatureKind::Continuous, true}};
  ds.columns = {{"x1", 0, {}, true, 0.0, 1.0}, {"x2", 1, {}, true, 0.0, 1.0}};
  ds.features.resize(static_cast<Eigen::Index>(n), 2);
  ds.labels.resize(n);
  // Means sit on the diagonal so both coordinates carry signal.
  const double offset = separation / std::sqrt(2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 0 : 1;
    ds.labels[i] = label;
    ds.features(i, 0) = normal(rng) + label * offset;
    ds.features(i, 1) = normal(rng) + label * offset;
  }
  return ds;
}

}  // namespace croco

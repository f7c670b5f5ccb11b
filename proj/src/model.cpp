#include "croco/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <fmt/format.h>
#include "json.hpp"

#include "croco/error.hpp"

namespace croco {

namespace {

constexpr double kMinProbability = std::numeric_limits<double>::min();
const double kMaxProbability = std::nextafter(1.0, 0.0);
constexpr int kWeightFileVersion = 1;

void validate_layers(const std::vector<DenseLayer>& layers, double threshold) {
  if (layers.size() < 2) {
    throw ConfigError("nnmodel", "layer_dims", "at least one hidden layer is required");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.rows() == 0 || layer.weights.cols() == 0) {
      throw ConfigError("nnmodel", fmt::format("weights[{}]", l), "empty weight matrix");
    }
    if (layer.bias.size() != layer.weights.rows()) {
      throw ConfigError("nnmodel", fmt::format("biases[{}]", l),
                        fmt::format("expected {} entries, got {}", layer.weights.rows(),
                                    layer.bias.size()));
    }
    if (l > 0 && layer.weights.cols() != layers[l - 1].weights.rows()) {
      throw ConfigError("nnmodel", fmt::format("weights[{}]", l),
                        fmt::format("expects {} inputs but previous layer has {} units",
                                    layer.weights.cols(), layers[l - 1].weights.rows()));
    }
  }
  if (layers.back().weights.rows() != 1) {
    throw ConfigError("nnmodel", "layer_dims", "output layer must have exactly one unit");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("nnmodel", "threshold", fmt::format("{} is outside [0, 1]", threshold));
  }
}

std::vector<DenseLayer> empty_layers(std::span<const int> dims) {
  if (dims.size() < 3) {
    throw ConfigError("nnmodel", "layer_dims",
                      "need input, at least one hidden layer, and output dims");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] <= 0 || dims[l + 1] <= 0) {
      throw ConfigError("nnmodel", "layer_dims", "dims must be positive");
    }
    layers.push_back({Matrix::Zero(dims[l + 1], dims[l]), Vector::Zero(dims[l + 1])});
  }
  return layers;
}

}  // namespace

double logistic(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, kMinProbability, kMaxProbability);
}

MlpClassifier::MlpClassifier(std::vector<DenseLayer> layers, double threshold)
    : layers_(std::move(layers)), threshold_(threshold) {
  validate_layers(layers_, threshold_);
}

MlpClassifier MlpClassifier::zeros(std::span<const int> layer_dims, double threshold) {
  return MlpClassifier(empty_layers(layer_dims), threshold);
}

MlpClassifier MlpClassifier::random(std::span<const int> layer_dims, std::uint64_t seed,
                                    double threshold) {
  auto layers = empty_layers(layer_dims);
  std::mt19937_64 rng(seed);
  for (auto& layer : layers) {
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / layer.weights.cols()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = init(rng);
    }
  }
  return MlpClassifier(std::move(layers), threshold);
}

MlpClassifier MlpClassifier::logistic_regression(const Vector& w, double b, double threshold) {
  const auto n = w.size();
  DenseLayer hidden{Matrix::Zero(2 * n, n), Vector::Zero(2 * n)};
  DenseLayer output{Matrix::Zero(1, 2 * n), Vector::Constant(1, b)};
  for (Eigen::Index i = 0; i < n; ++i) {
    hidden.weights(2 * i, i) = 1.0;
    hidden.weights(2 * i + 1, i) = -1.0;
    output.weights(0, 2 * i) = w(i);
    output.weights(0, 2 * i + 1) = -w(i);
  }
  return MlpClassifier({std::move(hidden), std::move(output)}, threshold);
}

std::vector<int> MlpClassifier::layer_dims() const {
  std::vector<int> dims{input_dim()};
  for (const auto& layer : layers_) dims.push_back(static_cast<int>(layer.weights.rows()));
  return dims;
}

void MlpClassifier::check_input(Eigen::Index rows) const {
  if (rows != input_dim()) {
    throw ShapeError("nnmodel", "x",
                     fmt::format("input has {} features, model expects {}", rows, input_dim()));
  }
}

BatchEvaluation MlpClassifier::evaluate(const Matrix& points, bool with_gradients) const {
  check_input(points.rows());
  std::vector<Matrix> active;  // ReLU derivative masks of hidden layers
  if (with_gradients) active.reserve(layers_.size() - 1);

  Matrix a = points;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Matrix z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    if (with_gradients) active.push_back((z.array() > 0.0).cast<double>().matrix());
    a = z.cwiseMax(0.0);
  }

  BatchEvaluation out;
  out.logits = layers_.back().weights * a;
  out.logits.array() += layers_.back().bias(0);
  out.probabilities = out.logits.unaryExpr([](double z) { return logistic(z); });

  if (with_gradients) {
    const auto batch = points.cols();
    Matrix g = layers_.back().weights.transpose().replicate(1, batch);
    for (std::size_t l = layers_.size() - 1; l-- > 0;) {
      g.array() *= active[l].array();
      g = layers_[l].weights.transpose() * g;
    }
    out.logit_gradients = std::move(g);
  }
  return out;
}

BatchEvaluation MlpClassifier::evaluate_summed_gradient(const Matrix& points) const {
  check_input(points.rows());
  const std::size_t hidden = layers_.size() - 1;
  std::vector<Matrix> pre(hidden);
  Matrix a = points;
  for (std::size_t l = 0; l < hidden; ++l) {
    pre[l].noalias() = layers_[l].weights * a;
    pre[l].colwise() += layers_[l].bias;
    a = pre[l].cwiseMax(0.0);
  }

  BatchEvaluation out;
  out.logits.noalias() = layers_.back().weights * a;
  out.logits.array() += layers_.back().bias(0);
  out.probabilities = out.logits.unaryExpr([](double z) { return logistic(z); });
  const Eigen::RowVectorXd slope =
      out.probabilities.array() * (1.0 - out.probabilities.array());

  // Backpropagate the per-column weights; the input layer is linear, so the
  // column sum can be taken before the last product.
  Matrix g = layers_.back().weights.transpose() * slope;
  for (std::size_t l = hidden; l-- > 0;) {
    g.array() *= (pre[l].array() > 0.0).cast<double>();
    if (l == 0) break;
    Matrix next;
    next.noalias() = layers_[l].weights.transpose() * g;
    g.swap(next);
  }
  out.logit_gradients = layers_.front().weights.transpose() * g.rowwise().sum();
  return out;
}

double MlpClassifier::logit(const Vector& x) const {
  check_input(x.size());
  Vector a = x;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    a = (layers_[l].weights * a + layers_[l].bias).cwiseMax(0.0);
  }
  return layers_.back().weights.row(0).dot(a) + layers_.back().bias(0);
}

double MlpClassifier::forward(const Vector& x) const { return logistic(logit(x)); }

int MlpClassifier::predict_class(const Vector& x) const {
  return forward(x) > threshold_ ? 1 : 0;
}

Vector MlpClassifier::logit_gradient(const Vector& x) const {
  check_input(x.size());
  std::vector<Vector> active;
  Vector a = x;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Vector z = layers_[l].weights * a + layers_[l].bias;
    active.push_back((z.array() > 0.0).cast<double>().matrix());
    a = z.cwiseMax(0.0);
  }
  Vector g = layers_.back().weights.row(0).transpose();
  for (std::size_t l = layers_.size() - 1; l-- > 0;) {
    g = layers_[l].weights.transpose() * g.cwiseProduct(active[l]);
  }
  return g;
}

Vector MlpClassifier::input_gradient(const Vector& x) const {
  const double p = forward(x);
  return p * (1.0 - p) * logit_gradient(x);
}

// ---------------------------------------------------------------------------
// Training

namespace {

void check_labels(const Matrix& features, std::span<const int> labels) {
  if (features.rows() == 0) throw ConfigError("nnmodel", "dataset", "empty dataset");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("nnmodel", "labels",
                     fmt::format("{} rows but {} labels", features.rows(), labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw ConfigError("nnmodel", "labels",
                        fmt::format("row {} has non-binary label {}", i, labels[i]));
    }
  }
}

}  // namespace

TrainResult train(const Matrix& features, std::span<const int> labels,
                  const TrainParams& params) {
  check_labels(features, labels);
  if (params.learning_rate <= 0.0 || params.epochs < 0 || params.batch_size <= 0) {
    throw ConfigError("nnmodel", "train", "learning_rate, epochs and batch_size must be positive");
  }
  std::vector<int> dims{static_cast<int>(features.cols())};
  dims.insert(dims.end(), params.hidden.begin(), params.hidden.end());
  dims.push_back(1);
  auto layers = MlpClassifier::random(dims, params.seed, params.threshold).layers();

  const auto rows = static_cast<std::size_t>(features.rows());
  const auto n_layers = layers.size();
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffler(params.seed ^ 0x5DEECE66DULL);

  std::vector<Matrix> acts(n_layers);  // input of each layer
  std::vector<Matrix> active(n_layers - 1);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    for (std::size_t start = 0; start < rows; start += params.batch_size) {
      const auto batch = std::min<std::size_t>(params.batch_size, rows - start);
      Matrix x(features.cols(), batch);
      Eigen::RowVectorXd y(batch);
      for (std::size_t j = 0; j < batch; ++j) {
        x.col(j) = features.row(order[start + j]).transpose();
        y(j) = labels[order[start + j]];
      }

      acts[0] = std::move(x);
      for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        Matrix z = layers[l].weights * acts[l];
        z.colwise() += layers[l].bias;
        active[l] = (z.array() > 0.0).cast<double>().matrix();
        acts[l + 1] = z.cwiseMax(0.0);
      }
      Eigen::RowVectorXd z_out = layers.back().weights * acts.back();
      z_out.array() += layers.back().bias(0);

      // d(BCE)/d(logit) = p - y
      Matrix delta = (z_out.unaryExpr([](double z) { return logistic(z); }) - y);
      const double scale = params.learning_rate / static_cast<double>(batch);
      for (std::size_t l = n_layers; l-- > 0;) {
        Matrix grad_w = delta * acts[l].transpose();
        Vector grad_b = delta.rowwise().sum();
        if (l > 0) {
          delta = (layers[l].weights.transpose() * delta).cwiseProduct(active[l - 1]);
        }
        layers[l].weights -= scale * grad_w;
        layers[l].bias -= scale * grad_b;
      }
    }
  }

  MlpClassifier model(std::move(layers), params.threshold);
  const double acc = accuracy(model, features, labels);
  const double loss = cross_entropy(model, features, labels);
  return {std::move(model), acc, loss};
}

double accuracy(const MlpClassifier& model, const Matrix& features,
                std::span<const int> labels) {
  if (features.rows() == 0) return 0.0;
  const auto eval = model.evaluate(features.transpose(), false);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int predicted = eval.probabilities(i) > model.threshold() ? 1 : 0;
    hits += predicted == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double cross_entropy(const MlpClassifier& model, const Matrix& features,
                     std::span<const int> labels) {
  if (features.rows() == 0) return 0.0;
  const auto eval = model.evaluate(features.transpose(), false);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = eval.probabilities(i);
    total -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Weight files

using nlohmann::json;

void save_weights(const MlpClassifier& model, const std::filesystem::path& path) {
  json doc;
  doc["version"] = kWeightFileVersion;
  doc["layer_dims"] = model.layer_dims();
  doc["hidden_activation"] = "relu";
  doc["output_activation"] = "logistic";
  doc["threshold"] = model.threshold();
  json weights = json::array();
  json biases = json::array();
  for (const auto& layer : model.layers()) {
    std::vector<double> flat;
    flat.reserve(layer.weights.size());
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat.push_back(layer.weights(r, c));
    }
    weights.push_back(flat);
    biases.push_back(std::vector<double>(layer.bias.begin(), layer.bias.end()));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);

  std::ofstream out(path);
  if (!out) throw ConfigError("nnmodel", "path", "cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

namespace {

const json& require(const json& doc, const char* field, json::value_t type) {
  if (!doc.contains(field)) throw ParseError("nnmodel", field, "missing field");
  const auto& value = doc.at(field);
  const bool ok = type == json::value_t::number_float ? value.is_number() : value.type() == type;
  if (!ok) throw ParseError("nnmodel", field, std::string("unexpected type ") + value.type_name());
  return value;
}

std::vector<double> number_array(const json& value, const std::string& field) {
  if (!value.is_array()) throw ParseError("nnmodel", field, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(value.size());
  for (const auto& v : value) {
    if (!v.is_number()) throw ParseError("nnmodel", field, "non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

MlpClassifier load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("nnmodel", "path", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("nnmodel", "document", e.what());
  }
  if (!doc.is_object()) throw ParseError("nnmodel", "document", "expected a JSON object");

  const int version = require(doc, "version", json::value_t::number_unsigned).get<int>();
  if (version != kWeightFileVersion) {
    throw ParseError("nnmodel", "version", fmt::format("unsupported version {}", version));
  }
  if (require(doc, "hidden_activation", json::value_t::string) != "relu") {
    throw ParseError("nnmodel", "hidden_activation", "only relu is supported");
  }
  if (require(doc, "output_activation", json::value_t::string) != "logistic") {
    throw ParseError("nnmodel", "output_activation", "only logistic is supported");
  }
  const double threshold = require(doc, "threshold", json::value_t::number_float).get<double>();
  const auto& dims_json = require(doc, "layer_dims", json::value_t::array);
  std::vector<int> dims;
  for (const auto& d : dims_json) {
    if (!d.is_number_integer() || d.get<int>() <= 0) {
      throw ParseError("nnmodel", "layer_dims", "entries must be positive integers");
    }
    dims.push_back(d.get<int>());
  }
  const auto& weights = require(doc, "weights", json::value_t::array);
  const auto& biases = require(doc, "biases", json::value_t::array);
  if (dims.size() < 3) throw ParseError("nnmodel", "layer_dims", "need at least 3 entries");
  if (weights.size() != dims.size() - 1 || biases.size() != dims.size() - 1) {
    throw ParseError("nnmodel", "layer_dims",
                     fmt::format("declares {} layers but file has {} weight and {} bias arrays",
                                 dims.size() - 1, weights.size(), biases.size()));
  }

  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto w = number_array(weights[l], fmt::format("weights[{}]", l));
    const auto b = number_array(biases[l], fmt::format("biases[{}]", l));
    const auto rows = static_cast<std::size_t>(dims[l + 1]);
    const auto cols = static_cast<std::size_t>(dims[l]);
    if (w.size() != rows * cols) {
      throw ParseError("nnmodel", fmt::format("weights[{}]", l),
                       fmt::format("layer_dims imply {} values, found {}", rows * cols, w.size()));
    }
    if (b.size() != rows) {
      throw ParseError("nnmodel", fmt::format("biases[{}]", l),
                       fmt::format("layer_dims imply {} values, found {}", rows, b.size()));
    }
    DenseLayer layer{Matrix(rows, cols), Vector(rows)};
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) layer.weights(r, c) = w[r * cols + c];
      layer.bias(r) = b[r];
    }
    layers.push_back(std::move(layer));
  }
  try {
    return MlpClassifier(std::move(layers), threshold);
  } catch (const ConfigError& e) {
    throw ParseError("nnmodel", e.field(), e.what());
  }
}

}  // namespace croco

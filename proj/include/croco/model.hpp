#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace croco {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One affine layer; `weights` is (outputs x inputs).
struct DenseLayer {
  Matrix weights;
  Vector bias;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights == b.weights && a.bias == b.bias;
  }
};

/// Logistic function clamped to the open interval (0, 1).
double logistic(double z);

/// Column-batched evaluation: column j of the input produces entry j of each
/// output row / column j of `logit_gradients`.
struct BatchEvaluation {
  Eigen::RowVectorXd logits;
  Eigen::RowVectorXd probabilities;
  Matrix logit_gradients;  // empty unless requested
};

/// Dense feed-forward binary classifier. ReLU hidden layers, one logistic
/// output unit giving the class-1 probability, and a decision threshold.
/// Immutable after construction.
class MlpClassifier {
 public:
  MlpClassifier(std::vector<DenseLayer> layers, double threshold);

  /// All-zero weights for the given dims (input first, 1 last).
  static MlpClassifier zeros(std::span<const int> layer_dims, double threshold = 0.5);

  /// He-normal weights, zero biases.
  static MlpClassifier random(std::span<const int> layer_dims, std::uint64_t seed,
                              double threshold = 0.5);

  /// A network that computes exactly logistic(w.x + b). Uses one hidden layer
  /// of 2n units holding relu(x_i) and relu(-x_i).
  static MlpClassifier logistic_regression(const Vector& w, double b,
                                           double threshold = 0.5);

  int input_dim() const { return static_cast<int>(layers_.front().weights.cols()); }
  std::vector<int> layer_dims() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  double threshold() const { return threshold_; }

  double logit(const Vector& x) const;
  double forward(const Vector& x) const;
  int predict_class(const Vector& x) const;
  Vector input_gradient(const Vector& x) const;
  /// Gradient of the pre-logistic output w.r.t. the input.
  Vector logit_gradient(const Vector& x) const;

  /// Evaluates every column of `points`.
  BatchEvaluation evaluate(const Matrix& points, bool with_gradients) const;

  /// Like evaluate(), but `logit_gradients` is the single column
  /// sum_j p_j (1 - p_j) grad logit(x_j), i.e. the summed probability gradient.
  BatchEvaluation evaluate_summed_gradient(const Matrix& points) const;

  friend bool operator==(const MlpClassifier& a, const MlpClassifier& b) {
    return a.threshold_ == b.threshold_ && a.layers_ == b.layers_;
  }

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<DenseLayer> layers_;
  double threshold_;
};

struct TrainParams {
  std::vector<int> hidden{50, 50};
  double learning_rate = 0.1;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double threshold = 0.5;
};

struct TrainResult {
  MlpClassifier model;
  double train_accuracy;
  double final_loss;  // mean binary cross-entropy over the training set
};

/// Mini-batch gradient descent on binary cross-entropy. `features` is
/// (rows x n); labels must be 0 or 1. Deterministic for a given seed.
TrainResult train(const Matrix& features, std::span<const int> labels,
                  const TrainParams& params);

/// Fraction of rows whose predicted class equals the label.
double accuracy(const MlpClassifier& model, const Matrix& features,
                std::span<const int> labels);

/// Mean binary cross-entropy.
double cross_entropy(const MlpClassifier& model, const Matrix& features,
                     std::span<const int> labels);

void save_weights(const MlpClassifier& model, const std::filesystem::path& path);
MlpClassifier load_weights(const std::filesystem::path& path);

}  // namespace croco

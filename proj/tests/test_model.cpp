#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

#include "croco/data.hpp"
#include "croco/error.hpp"
#include "croco/model.hpp"
#include "support/oracle.hpp"

using namespace croco;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "croco_test_model";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("zero weights give probability one half") {
  const std::vector<int> dims{3, 5, 1};
  const auto model = MlpClassifier::zeros(dims);
  CHECK(model.forward(Vector::Constant(3, 7.0)) == 0.5);
  CHECK(model.input_gradient(Vector::Constant(3, -2.0)).isZero(0.0));
}

TEST_CASE("single hidden unit with zero pre-activation") {
  std::vector<DenseLayer> layers(2);
  layers[0].weights = Matrix::Constant(1, 2, 1.0);
  layers[0].bias = Vector::Constant(1, -3.0);
  layers[1].weights = Matrix::Constant(1, 1, 2.0);
  layers[1].bias = Vector::Zero(1);
  const MlpClassifier model(std::move(layers), 0.5);
  Vector x(2);
  x << 1.0, 2.0;  // 1 + 2 - 3 = 0
  CHECK(model.forward(x) == 0.5);
}

TEST_CASE("forward matches a hand-rolled evaluation") {
  std::mt19937_64 rng(1);
  const std::vector<int> dims{2, 4, 1};
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = MlpClassifier::random(dims, 100 + trial);
    const Vector x = oracle::random_point(rng, 2, -3.0, 3.0);
    CHECK(model.forward(x) == doctest::Approx(oracle::forward(model, x)).epsilon(1e-12));
  }
}

TEST_CASE("batched evaluation agrees with single-point calls") {
  std::mt19937_64 rng(2);
  const std::vector<int> dims{3, 7, 6, 1};
  const auto model = MlpClassifier::random(dims, 9);
  Matrix points(3, 11);
  for (Eigen::Index j = 0; j < points.cols(); ++j) points.col(j) = oracle::random_point(rng, 3);
  const auto batch = model.evaluate(points, true);
  const auto summed = model.evaluate_summed_gradient(points);
  Vector sum = Vector::Zero(3);
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    CHECK(batch.probabilities(j) == doctest::Approx(model.forward(points.col(j))).epsilon(1e-14));
    CHECK((batch.logit_gradients.col(j) - model.logit_gradient(points.col(j))).norm() < 1e-12);
    sum += model.input_gradient(points.col(j));
    CHECK(summed.probabilities(j) == batch.probabilities(j));
  }
  CHECK((summed.logit_gradients.col(0) - sum).norm() < 1e-12);
}

TEST_CASE("output stays strictly inside (0, 1)") {
  const std::vector<int> dims{2, 8, 1};
  const auto model = MlpClassifier::random(dims, 3);
  for (const double s : {1e3, 1e6, 1e12, -1e3, -1e6, -1e12}) {
    for (const double sign : {1.0, -1.0}) {
      Vector x(2);
      x << s, sign * s;
      const double p = model.forward(x);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
}

TEST_CASE("class decision uses a strict threshold") {
  Vector w(1);
  w << 1.0;
  const Vector origin = Vector::Zero(1);
  CHECK(MlpClassifier::zeros(std::vector<int>{1, 1, 1}, 0.5).predict_class(origin) == 0);

  const auto above = MlpClassifier::logistic_regression(w, std::log(0.7 / 0.3));
  CHECK(above.forward(origin) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(above.predict_class(origin) == 1);

  const double p = 0.5 - 1e-9;
  const auto below = MlpClassifier::logistic_regression(w, std::log(p / (1.0 - p)));
  CHECK(below.forward(origin) < 0.5);
  CHECK(below.predict_class(origin) == 0);
}

TEST_CASE("predict_class agrees with forward > t") {
  std::mt19937_64 rng(4);
  const std::vector<int> dims{2, 6, 1};
  for (const double t : {0.0, 0.3, 0.5, 0.9, 1.0}) {
    const auto model = MlpClassifier::random(dims, 5, t);
    for (int i = 0; i < 50; ++i) {
      const Vector x = oracle::random_point(rng, 2, -2.0, 2.0);
      CHECK(model.predict_class(x) == (model.forward(x) > t ? 1 : 0));
    }
  }
}

TEST_CASE("logistic regression gradient at the boundary is w / 4") {
  Vector w(3);
  w << 0.5, -2.0, 1.5;
  const auto model = MlpClassifier::logistic_regression(w, 0.0);
  // coordinates stay off zero, where the relu(x) - relu(-x) encoding has kinks
  Vector x(3);
  x << 2.0, 1.1, 0.8;  // w.x = 1 - 2.2 + 1.2 = 0
  CHECK((model.input_gradient(x) - 0.25 * w).norm() < 1e-15);
  Vector on_plane(3);
  on_plane << 1.0, 1.0, 1.0 / 3.0;  // w.x = -1 cancels the bias
  const auto shifted = MlpClassifier::logistic_regression(w, 1.0);
  CHECK((shifted.input_gradient(on_plane) - 0.25 * w).norm() < 1e-15);
}

TEST_CASE("input gradient matches finite differences on random models") {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 4;
    const std::vector<int> dims{n, 6, 5, 1};
    const auto model = MlpClassifier::random(dims, 1000 + trial);
    Vector x = oracle::random_point(rng, n);
    while (oracle::stencil_crosses_kink(model, {x})) x = oracle::random_point(rng, n);
    const Vector fd =
        oracle::finite_difference([&](const Vector& p) { return oracle::forward(model, p); }, x);
    worst = std::max(worst, oracle::max_relative_error(model.input_gradient(x), fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("constructor validates structure") {
  std::vector<DenseLayer> one(1);
  one[0].weights = Matrix::Zero(1, 2);
  one[0].bias = Vector::Zero(1);
  CHECK_THROWS_AS(MlpClassifier(one, 0.5), ConfigError);

  const std::vector<int> dims{2, 3, 1};
  auto layers = MlpClassifier::zeros(dims).layers();
  CHECK_THROWS_AS(MlpClassifier(layers, 1.5), ConfigError);
  CHECK_THROWS_AS(MlpClassifier(layers, -0.1), ConfigError);
  layers[1].weights = Matrix::Zero(1, 4);
  CHECK_THROWS_AS(MlpClassifier(layers, 0.5), ConfigError);

  const auto model = MlpClassifier::zeros(dims);
  CHECK_THROWS_AS(model.forward(Vector::Zero(3)), ShapeError);
}

TEST_CASE("training separates two Gaussian blobs") {
  const auto data = normalize(synth_two_gaussians(800, 6.0, 11));
  const auto [tr, te] = split(data, 0.75, 11);
  TrainParams p;
  p.hidden = {10, 10};
  p.epochs = 40;
  p.seed = 3;
  const auto result = train(tr.features, tr.labels, p);
  CHECK(accuracy(result.model, te.features, te.labels) >= 0.95);
  CHECK(result.train_accuracy >= 0.95);
}

TEST_CASE("a single point is memorized") {
  Matrix x(1, 2);
  x << 0.2, 0.8;
  const std::vector<int> y{1};
  TrainParams p;
  p.hidden = {4};
  p.epochs = 3000;
  p.batch_size = 1;
  p.learning_rate = 0.5;
  p.seed = 1;
  CHECK(train(x, y, p).final_loss < 1e-3);
}

TEST_CASE("training is bit-for-bit deterministic per seed") {
  const auto data = normalize(synth_two_gaussians(200, 4.0, 2));
  TrainParams p;
  p.hidden = {8, 8};
  p.epochs = 5;
  p.seed = 42;
  const auto a = train(data.features, data.labels, p).model;
  const auto b = train(data.features, data.labels, p).model;
  CHECK(a == b);
  p.seed = 43;
  CHECK_FALSE(a == train(data.features, data.labels, p).model);
}

TEST_CASE("training rejects bad datasets") {
  TrainParams p;
  CHECK_THROWS_AS(train(Matrix(0, 2), std::vector<int>{}, p), ConfigError);
  Matrix x = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(train(x, std::vector<int>{0, 2}, p), ConfigError);
}

TEST_CASE("weight files round-trip exactly") {
  const std::vector<int> dims{4, 9, 3, 1};
  const auto model = MlpClassifier::random(dims, 77, 0.37);
  const auto path = scratch("roundtrip.json");
  save_weights(model, path);
  CHECK(load_weights(path) == model);
}

TEST_CASE("malformed weight files name the offending field") {
  const std::vector<int> dims{2, 3, 1};
  const auto path = scratch("model.json");
  save_weights(MlpClassifier::random(dims, 1), path);
  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }

  const auto bad = scratch("bad.json");
  std::ofstream(bad) << text.substr(0, text.size() / 2);
  try {
    load_weights(bad);
    FAIL("truncated file loaded");
  } catch (const ParseError& e) {
    CHECK(e.field() == "document");
  }

  auto doc = nlohmann::json::parse(text);
  doc["layer_dims"] = {2, 4, 1};
  std::ofstream(bad, std::ios::trunc) << doc.dump();
  try {
    load_weights(bad);
    FAIL("mismatched dims loaded");
  } catch (const ParseError& e) {
    CHECK(e.field() == "weights[0]");
  }

  doc = nlohmann::json::parse(text);
  doc.erase("threshold");
  std::ofstream(bad, std::ios::trunc) << doc.dump();
  try {
    load_weights(bad);
    FAIL("missing threshold loaded");
  } catch (const ParseError& e) {
    CHECK(e.field() == "threshold");
  }
}

}  // TEST_SUITE

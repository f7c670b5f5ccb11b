#pragma once

#include <vector>

#include "croco/data.hpp"
#include "croco/model.hpp"

namespace fixtures {

/// Two-Gaussian benchmark: normalized data, 75/25 split, small ReLU model.
struct Synthetic {
  croco::Dataset train;
  croco::Dataset test;
  croco::MlpClassifier model;
  std::vector<croco::Vector> negatives;  // test rows the model puts in class 0
};

inline Synthetic make_synthetic(std::uint64_t seed = 7, std::size_t rows = 2000) {
  const auto data = croco::normalize(croco::synth_two_gaussians(rows, 6.0, seed));
  auto [train, test] = croco::split(data, 0.75, seed);
  croco::TrainParams p;
  p.hidden = {10, 10};
  p.epochs = 50;
  p.seed = seed;
  auto model = croco::train(train.features, train.labels, p).model;
  std::vector<croco::Vector> negatives;
  for (std::size_t i = 0; i < test.rows(); ++i) {
    if (model.predict_class(test.row(i)) == 0) negatives.push_back(test.row(i));
  }
  return {std::move(train), std::move(test), std::move(model), std::move(negatives)};
}

inline const Synthetic& synthetic() {
  static const Synthetic s = make_synthetic();
  return s;
}

}  // namespace fixtures

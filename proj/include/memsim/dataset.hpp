#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "memsim/rng.hpp"

namespace memsim {

/// Labelled samples, one row per sample, features scaled to [0, 1].
struct LabelledSet {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int n_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  Eigen::VectorXd sample(int i) const { return features.row(i).transpose(); }
};

struct TrainTestSplit {
  LabelledSet train;
  LabelledSet test;
};

/// MNIST in the IDX format: {train,t10k}-{images-idx3,labels-idx1}-ubyte under `dir`.
TrainTestSplit load_mnist(const std::string& dir);

/// Reads one IDX image file and its label file.
LabelledSet load_idx(const std::string& images_path, const std::string& labels_path);

/// Bundled 8x8 digits (CSV: 64 values in 0..16, then the label), shuffled with
/// `seed` and split with `test_fraction` held out.
TrainTestSplit load_digits8x8(const std::string& path, double test_fraction = 0.2,
                              std::uint64_t seed = 0);

/// Path of the bundled digits file.
std::string bundled_digits_path();

/// MNIST if `dir` holds it, otherwise the bundled digits.
TrainTestSplit load_digits_or_mnist(const std::string& dir, std::uint64_t seed = 0);

}  // namespace memsim

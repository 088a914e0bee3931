#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "memsim/crossbar.hpp"
#include "memsim/dataset.hpp"

namespace memsim::dnn {

enum class Activation { Relu, Sigmoid, SoftmaxOut };
enum class LossKind { CrossEntropy, Mse };

/// softmax_out layers are linear; the softmax lives in the loss.
Eigen::VectorXd activate(Activation a, const Eigen::VectorXd& z);
Eigen::VectorXd activate_derivative(Activation a, const Eigen::VectorXd& z);

/// Loss of one sample and its gradient with respect to the logits.
struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};
LossGrad loss_and_grad(LossKind kind, const Eigen::VectorXd& logits, int label);

/// Weights and biases of a dense feed-forward net, row-major (out x in).
struct Parameters {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Xavier-uniform weights, zero biases.
Parameters init_parameters(const std::vector<int>& sizes, Rng& rng);

struct TrainConfig {
  double lr = 0.05;
  int epochs = 20;
  int batch_size = 16;
  LossKind loss = LossKind::CrossEntropy;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::uint64_t pulses = 0;
  std::uint64_t clamps = 0;
  double chi_peak = 0.0;  ///< largest |chi| / epsilon seen after any update of the epoch
};

struct TrainingReport {
  std::vector<EpochStats> epochs;
};

/// Full-precision reference network (no devices). Same topology conventions
/// as MixedPrecisionNet: hidden layers use `hidden`, the last layer is linear.
class FloatNet {
 public:
  FloatNet(Parameters params, Activation hidden);

  Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
  /// Gradients of one sample's loss.
  Parameters gradients(const Eigen::VectorXd& x, int label, LossKind loss) const;
  double loss(const Eigen::VectorXd& x, int label, LossKind loss) const;
  void sgd_step(const Parameters& mean_grad, double lr);

  TrainingReport train(const TrainTestSplit& data, const TrainConfig& cfg);
  double accuracy(const LabelledSet& set) const;

  const Parameters& params() const { return p_; }
  Parameters& params() { return p_; }
  Activation hidden() const { return hidden_; }

 private:
  Parameters p_;
  Activation hidden_;
};

struct NetConfig {
  DeviceParams device = DeviceParams::ideal();
  ProgrammingMode programming = ProgrammingMode::iterative(0.002, 100);
  int tile_dim = 256;
  double w_max = 1.0;
  double epsilon = 0.001;  ///< flush threshold in weight units
  Activation hidden = Activation::Relu;
};

struct Layer {
  TiledMatrix weights;
  Eigen::MatrixXd chi;  ///< high-precision accumulator, same shape as weights
  Eigen::VectorXd bias;
  Activation activation;
};

struct ForwardCache {
  std::vector<Eigen::VectorXd> activations;  ///< a_0 (input) .. a_L
  std::vector<Eigen::VectorXd> pre;          ///< z_1 .. z_L
};

struct ForwardResult {
  Eigen::VectorXd logits;
  ForwardCache cache;
};

/// Per-layer weight and bias gradients.
using Deltas = Parameters;

/// Conductance step that corresponds to one epsilon of weight.
struct PulseCalibration {
  double delta_g = 0.0;               ///< epsilon * (g_max - g_min) / w_max
  double mid_range_amplitude = 0.0;   ///< amplitude giving delta_g at mid-range conductance
};
PulseCalibration calibrate_pulse(const DeviceParams& p, double epsilon, double w_max);

/// Layered network whose weights live on crossbars, with weight changes
/// accumulated in high precision (chi) and transferred as device pulses once
/// they reach epsilon.
class MixedPrecisionNet {
 public:
  MixedPrecisionNet(const NetConfig& cfg, const Parameters& init, Rng& rng, double now = 0.0);

  int n_layers() const { return static_cast<int>(layers_.size()); }
  const Layer& layer(int l) const { return layers_[l]; }
  Layer& layer(int l) { return layers_[l]; }
  const NetConfig& config() const { return cfg_; }
  const PulseCalibration& calibration() const { return calib_; }

  ForwardResult forward(const Eigen::VectorXd& x, Rng& rng) const;
  /// grad_out is dLoss/dlogits. Errors travel through the same arrays via
  /// the transpose read; outer products are formed digitally.
  Deltas backward(const ForwardCache& cache, const Eigen::VectorXd& grad_out, Rng& rng) const;
  void apply_update(const Deltas& deltas, double lr, Rng& rng);

  TrainingReport train(const TrainTestSplit& data, const TrainConfig& cfg);
  double accuracy(const LabelledSet& set, Rng& rng) const;

  /// Noise-free decode of every layer at the current clock.
  Parameters decoded() const;

  void advance_time(double dt);
  double now() const { return layers_.front().weights.now(); }

  std::uint64_t pulses() const { return pulses_; }
  std::uint64_t clamps() const { return clamps_; }
  std::uint64_t refreshes() const { return refreshes_; }

 private:
  void flush_entry(Layer& layer, int i, int j, Rng& rng);

  NetConfig cfg_;
  PulseCalibration calib_;
  std::vector<Layer> layers_;
  std::uint64_t pulses_ = 0;
  std::uint64_t clamps_ = 0;
  std::uint64_t refreshes_ = 0;
};

struct DriftPoint {
  double t = 0.0;
  double accuracy = 0.0;
};

/// For each time point (seconds after programming, strictly increasing) the
/// arrays are advanced to that age and the test accuracy is measured. Every
/// point reuses a stream seeded from `read_seed`, so successive points see
/// the same read-noise realization and differ only by drift.
std::vector<DriftPoint> infer_with_drift(MixedPrecisionNet& net, const LabelledSet& test,
                                         const std::vector<double>& time_points,
                                         std::uint64_t read_seed);

}  // namespace memsim::dnn

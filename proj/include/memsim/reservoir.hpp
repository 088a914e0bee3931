#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "memsim/devices.hpp"
#include "memsim/rng.hpp"

namespace memsim::reservoir {

enum class NodeKind { Tanh, VolatileDevice };

NodeKind parse_node_kind(const std::string& s);

struct ReservoirConfig {
  int n_nodes = 200;
  int n_inputs = 1;
  double connectivity = 0.1;
  double rho = 0.9;
  double leak = 0.3;
  double input_scale = 1.0;
  NodeKind node_kind = NodeKind::Tanh;
  // volatile nodes
  DeviceParams device{};
  double decay_tau = 2.0;   ///< in steps
  double drive_gain = 0.05;

  void validate() const;
};

/// Fixed random recurrent network. Weights are set once in the constructor.
class Reservoir {
 public:
  Reservoir(const ReservoirConfig& cfg, Rng& rng);

  const ReservoirConfig& config() const { return cfg_; }
  int n_nodes() const { return cfg_.n_nodes; }
  const Eigen::MatrixXd& w_in() const { return w_in_; }
  const Eigen::MatrixXd& w_rec() const { return w_rec_; }

  /// One update of the node states r given input x.
  Eigen::VectorXd step(const Eigen::VectorXd& r, const Eigen::VectorXd& x) const;

 private:
  ReservoirConfig cfg_;
  Eigen::MatrixXd w_in_;
  Eigen::MatrixXd w_rec_;
};

/// Largest eigenvalue modulus (dense eigendecomposition).
double spectral_radius(const Eigen::MatrixXd& m);

/// Runs from the zero state over `inputs` (one row per step) and returns the
/// states after the first `washout` steps, one row per step.
Eigen::MatrixXd collect_states(const Reservoir& res, const Eigen::MatrixXd& inputs, int washout);

struct Readout {
  Eigen::MatrixXd w_out;  ///< (n_features + 1) x n_outputs, bias in the last row
  double ridge_lambda = 0.0;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

/// Ridge regression on [features, 1]; lambda = 0 solves least squares and
/// raises SingularSystemError when the design is rank-deficient.
Readout fit_readout(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double ridge_lambda);

/// Sum of squared residuals plus lambda * ||w_out||^2.
double ridge_loss(const Readout& r, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets);

Eigen::MatrixXd predict(const Reservoir& res, const Readout& readout, const Eigen::MatrixXd& inputs,
                        int washout);

/// Normalized RMSE: rms(prediction - target) / std(target).
double nrmse(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target);

/// NARMA-10 series: u ~ U[0, 0.5] and
/// y(t+1) = 0.3 y(t) + 0.05 y(t) sum_{i<10} y(t-i) + 1.5 u(t-9) u(t) + 0.1.
/// target(t) = y(t+1), so it is predictable from inputs up to t.
struct Narma {
  Eigen::VectorXd input;
  Eigen::VectorXd target;
};
Narma narma10(int length, std::uint64_t seed);

/// [u(t), u(t-1), ..., u(t-lags+1)] rows (zeros before the start).
Eigen::MatrixXd lagged_inputs(const Eigen::VectorXd& u, int lags);

/// ||r_t - r'_t|| after `steps` steps from two random initial states under the
/// same input drive.
double echo_state_distance(const Reservoir& res, const Eigen::MatrixXd& inputs, int steps, Rng& rng);

struct NarmaResult {
  double train_nrmse = 0.0;
  double test_nrmse = 0.0;
  double linear_test_nrmse = 0.0;
  double echo_distance = 0.0;
  double spectral_radius = 0.0;
};

struct NarmaConfig {
  ReservoirConfig reservoir;
  int train_length = 2000;
  int test_length = 1000;
  int washout = 100;
  double ridge_lambda = 1e-6;
  int linear_lags = 10;
};

/// Fits the reservoir readout and the lagged linear baseline on one NARMA-10
/// series and scores both on the held-out tail.
NarmaResult run_narma(const NarmaConfig& cfg, std::uint64_t seed);

}  // namespace memsim::reservoir

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "memsim/rng.hpp"
#include "memsim/snn.hpp"

namespace memsim::psnn {

using snn::SpikeRaster;

/// Generalized-linear spiking network. Units are hidden units followed by
/// output units; unit u sees the inputs and (if recurrent) the past spikes of
/// every other unit through the synaptic kernel, plus its own past spikes
/// through the refractory kernel.
///
/// Kernel taps start at lag 1: (alpha * s)(t) = sum_k alpha[k] s(t - 1 - k).
struct GlmNetwork {
  int n_in = 0;
  int n_hidden = 0;
  int n_out = 0;
  bool recurrent = true;
  Eigen::MatrixXd w;  ///< n_units x (n_in + n_units); self and masked columns stay 0
  Eigen::VectorXd b;  ///< n_units
  std::vector<double> alpha{1.0, 0.6, 0.36, 0.216, 0.1296};
  std::vector<double> beta{-2.0};

  GlmNetwork() = default;
  GlmNetwork(int n_in, int n_hidden, int n_out, bool recurrent = true);

  int n_units() const { return n_hidden + n_out; }
  int n_cols() const { return n_in + n_units(); }
  /// Whether column j feeds unit u.
  bool connected(int u, int j) const;
  void validate() const;
};

/// Geometric kernel: taps[k] = decay^k for k < n_taps.
std::vector<double> geometric_kernel(double decay, int n_taps);

/// Small random weights on the allowed connections, zero biases.
void randomize(GlmNetwork& net, double scale, Rng& rng);

/// Per-parameter gradient of log P(Y | X); same shapes as (w, b).
struct Eligibility {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;

  static Eligibility zeros_like(const GlmNetwork& net);
  Eligibility& operator+=(const Eligibility& o);
  Eligibility& operator*=(double s);
};

/// Membrane potential of `unit` at step t given the input raster and the
/// network's own raster (only steps before t are looked at).
double membrane(const GlmNetwork& net, int unit, int t, const SpikeRaster& input,
                const SpikeRaster& own);

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

struct Rollout {
  SpikeRaster output;  ///< n_units x T
  double log_prob = 0.0;
  Eligibility elig;
};

/// Samples outputs over the input's horizon.
Rollout rollout(const GlmNetwork& net, const SpikeRaster& input, Rng& rng);

/// log P(Y | X) and its gradient for a given output raster.
Rollout score(const GlmNetwork& net, const SpikeRaster& input, const SpikeRaster& output);

/// Exact expectation of f and its gradient by summing over every output
/// raster; only for n_units * T <= 20.
struct ExactGradient {
  double expected_f = 0.0;
  double total_prob = 0.0;
  Eligibility grad;
};
using OutputLoss = std::function<double(const SpikeRaster& y)>;
ExactGradient enumerate_gradient(const GlmNetwork& net, const SpikeRaster& input, const OutputLoss& f);

enum class BaselineMode { None, RunningMean };

struct Baseline {
  BaselineMode mode = BaselineMode::RunningMean;
  double momentum = 0.9;
  double value = 0.0;
  bool primed = false;

  double current() const { return mode == BaselineMode::None || !primed ? 0.0 : value; }
  void observe(double f);
};

/// f(X, Y) for sample i of a batch.
using SampleLoss = std::function<double(int sample, const SpikeRaster& y)>;

struct StepStats {
  double mean_f = 0.0;
  double output_spikes = 0.0;  ///< per sample
};

/// One score-function update: theta <- theta - lr * mean_i (f_i - b) e_i.
StepStats reinforce_step(GlmNetwork& net, const std::vector<SpikeRaster>& inputs,
                         const SampleLoss& f, double lr, Baseline& baseline, Rng& rng);

enum class ReadoutLoss { Hamming, VanRossum, SpikeCount };

/// Distance between the output units' spikes (rows n_hidden.. of y) and the
/// target, restricted to steps >= from_step.
double readout_loss(ReadoutLoss kind, const GlmNetwork& net, const SpikeRaster& y,
                    const SpikeRaster& target, int from_step = 0, double tau = 2.0);

struct Sample {
  SpikeRaster input;
  SpikeRaster target;  ///< n_out x T
};

struct TrainConfig {
  int epochs = 100;
  double lr = 0.05;
  int batch_size = 8;
  BaselineMode baseline = BaselineMode::RunningMean;
  ReadoutLoss loss = ReadoutLoss::Hamming;
  int loss_from_step = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> loss;           ///< mean f per epoch
  std::vector<double> output_spikes;  ///< mean output spikes per sample per epoch
  double input_spikes = 0.0;          ///< mean input spikes per sample
};

TrainReport train_supervised(GlmNetwork& net, const std::vector<Sample>& data, const TrainConfig& cfg);

/// Mean readout loss over `reps` rollouts per sample.
double evaluate(const GlmNetwork& net, const std::vector<Sample>& data, ReadoutLoss kind,
                int from_step, int reps, Rng& rng);

/// Fixed random input raster and teacher output raster.
struct TargetTask {
  SpikeRaster input;
  SpikeRaster target;
};
TargetTask make_target_task(int n_in, int n_out, int t_steps, double density, std::uint64_t seed);

enum class Encoder { Rate, Grf };

struct EncodingTaskConfig {
  int n_samples = 40;
  int n_values = 2;        ///< values per sample
  int delta_t = 20;        ///< encoding window
  int readout_steps = 4;   ///< silent steps after the window where the label is read
  int n_fields = 5;
  double sigma_field = 0.15;
  double class_gap = 0.04; ///< half-distance between class ranges around 0.5
  double class_width = 0.16;

  void validate() const;
};

/// Two-class task: each sample's values are drawn from a range just below or
/// just above 0.5 and encoded by `enc`; the target asks the output unit of
/// the class to fire on every readout step and the other to stay silent.
std::vector<Sample> make_encoding_task(const EncodingTaskConfig& cfg, Encoder enc, std::uint64_t seed);

Encoder parse_encoder(const std::string& s);

}  // namespace memsim::psnn

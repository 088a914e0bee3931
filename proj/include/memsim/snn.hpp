#pragma once

#include <cstdint>
#include <vector>

#include "memsim/crossbar.hpp"
#include "memsim/devices.hpp"
#include "memsim/rng.hpp"

namespace memsim::snn {

/// Binary events, unit-major: events[u * n_steps + t].
class SpikeRaster {
 public:
  SpikeRaster() = default;
  SpikeRaster(int n_units, int n_steps, double dt = 1.0);

  int n_units() const { return n_units_; }
  int n_steps() const { return n_steps_; }
  double dt() const { return dt_; }

  bool at(int unit, int t) const { return events_[index(unit, t)] != 0; }
  void set(int unit, int t, bool spike = true) { events_[index(unit, t)] = spike ? 1 : 0; }

  std::int64_t count() const;
  std::int64_t count_unit(int unit) const;
  /// Steps at which `unit` fired, ascending.
  std::vector<int> spike_times(int unit) const;

 private:
  std::size_t index(int unit, int t) const;

  int n_units_ = 0;
  int n_steps_ = 0;
  double dt_ = 1.0;
  std::vector<std::uint8_t> events_;
};

struct LifNeuron {
  double v = 0.0;
  double v_thresh = 1.0;
  double v_reset = 0.0;
  double leak_lambda = 0.9;  ///< per-step decay, in [0, 1)

  void validate() const;
};

/// v <- lambda * v + input; spikes (and resets) when v >= v_thresh.
bool lif_step(LifNeuron& n, double input_current);

/// Independent Bernoulli(value) per step for each value.
SpikeRaster encode_rate(const std::vector<double>& values, int t_steps, Rng& rng);

/// Gaussian receptive fields: value i drives units i*n_fields .. i*n_fields + n_fields-1,
/// each firing at most once inside a delta_t-step window.
SpikeRaster encode_grf(const std::vector<double>& values, int n_fields, int delta_t,
                       double sigma_field, double cutoff = 0.05);

/// Round-robin selector shared by every synapse that points at it.
class Arbiter {
 public:
  explicit Arbiter(int n_devices);
  int n_devices() const { return n_; }
  int counter() const { return next_; }
  /// Device index for the next programming event; advances the counter.
  int select();

 private:
  int n_;
  int next_ = 0;
};

struct MultiMemristiveSynapse {
  std::vector<DeviceState> devices;

  MultiMemristiveSynapse() = default;
  MultiMemristiveSynapse(int n_devices, double g_init, double now = 0.0);
  int size() const { return static_cast<int>(devices.size()); }
};

enum class Direction { Potentiate, Depress };

/// Sum of one read of every device; the synapse is not modified.
double synapse_read(const MultiMemristiveSynapse& s, const DeviceParams& p, double now, Rng& rng);
/// Noise-free sum at `now`.
double synapse_conductance(const MultiMemristiveSynapse& s, const DeviceParams& p, double now);

/// Programs the device picked by the arbiter: SET pulses to potentiate, RESET to depress.
void synapse_program(MultiMemristiveSynapse& s, Arbiter& arbiter, const DeviceParams& p,
                     Direction dir, int pulses, double now, Rng& rng);

struct StdpRule {
  int window_steps = 5;
  int dw_plus = 1;   ///< SET pulses per potentiation
  int dw_minus = 1;  ///< RESET pulses per depression

  void validate() const;
};

/// What the rectangular rule asks for at step t.
struct StdpDecision {
  bool potentiate = false;
  bool depress = false;
};
StdpDecision stdp_decide(const StdpRule& rule, const SpikeRaster& pre, int pre_unit,
                         const SpikeRaster& post, int post_unit, int t);

/// Applies stdp_decide's outcome at step t to the synapse.
void stdp_update(const StdpRule& rule, const SpikeRaster& pre, int pre_unit, const SpikeRaster& post,
                 int post_unit, int t, MultiMemristiveSynapse& s, Arbiter& arbiter,
                 const DeviceParams& p, double now, Rng& rng);

/// Column currents I_k = sum_j (G+_kj - G-_kj) * V_j for a spike vector applied
/// at the read voltage (units of conductance x voltage).
Eigen::VectorXd spike_currents(const CrossbarArray& xbar, const std::vector<std::uint8_t>& spikes,
                               Rng& rng);

struct CorrelationConfig {
  int n_synapses = 1000;
  double frac_correlated = 0.1;
  int n_per_synapse = 1;
  double rate = 0.02;     ///< spikes per step
  double corr_c = 0.75;   ///< pairwise correlation within the correlated group
  int steps = 5000;
  StdpRule rule{5, 3, 1};
  DeviceParams device = DeviceParams::ideal();
  bool shared_arbiter = true;
  double g_init_fraction = 0.5;  ///< initial device conductance, fraction of the range
  double v_thresh = 20.0;
  double leak_lambda = 0.2;
  double dt = 1e-3;

  void validate() const;
};

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;
};

struct SeparationReport {
  double mean_corr = 0.0;
  double std_corr = 0.0;
  double mean_unc = 0.0;
  double std_unc = 0.0;
  double d = 0.0;
  std::int64_t post_spikes = 0;
  std::int64_t potentiations = 0;
  std::int64_t depressions = 0;
  std::vector<double> final_conductance;  ///< summed per synapse; correlated ones first
  int n_correlated = 0;
  Histogram hist_corr;
  Histogram hist_unc;
};

/// One LIF neuron driven by n_synapses multi-device synapses under STDP. The
/// first round(frac * n) inputs share a master Poisson train.
SeparationReport correlation_experiment(const CorrelationConfig& cfg, std::uint64_t seed);

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins);

struct EfficiencyModel {
  double c_add = 1.0;
  double c_mul = 4.0;
  double p = 0.01;
  double ratio_t_dt = 100.0;

  void validate() const;
};

struct EfficiencyVerdict {
  bool favorable = false;
  double margin = 0.0;  ///< c_mul - c_add * p * ratio
};
EfficiencyVerdict snn_efficiency_favorable(const EfficiencyModel& m);

}  // namespace memsim::snn

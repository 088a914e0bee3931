#include "memsim/snn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "memsim/errors.hpp"

namespace memsim::snn {

SpikeRaster::SpikeRaster(int n_units, int n_steps, double dt)
    : n_units_(n_units), n_steps_(n_steps), dt_(dt) {
  if (n_units < 0 || n_steps < 0) throw DomainError("raster: negative size");
  if (!(dt > 0.0)) throw DomainError("raster: dt must be positive");
  events_.assign(static_cast<std::size_t>(n_units) * n_steps, 0);
}

std::size_t SpikeRaster::index(int unit, int t) const {
  if (unit < 0 || unit >= n_units_ || t < 0 || t >= n_steps_)
    throw DimensionError("raster: (" + std::to_string(unit) + ", " + std::to_string(t) +
                         ") out of range");
  return static_cast<std::size_t>(unit) * n_steps_ + t;
}

std::int64_t SpikeRaster::count() const {
  std::int64_t n = 0;
  for (auto e : events_) n += e;
  return n;
}

std::int64_t SpikeRaster::count_unit(int unit) const {
  std::int64_t n = 0;
  for (int t = 0; t < n_steps_; ++t) n += at(unit, t);
  return n;
}

std::vector<int> SpikeRaster::spike_times(int unit) const {
  std::vector<int> out;
  for (int t = 0; t < n_steps_; ++t)
    if (at(unit, t)) out.push_back(t);
  return out;
}

void LifNeuron::validate() const {
  if (!(v_reset < v_thresh)) throw DomainError("lif: v_reset must be below v_thresh");
  if (!(leak_lambda >= 0.0 && leak_lambda < 1.0)) throw DomainError("lif: leak must lie in [0, 1)");
}

bool lif_step(LifNeuron& n, double input_current) {
  n.v = n.leak_lambda * n.v + input_current;
  if (n.v >= n.v_thresh) {
    n.v = n.v_reset;
    return true;
  }
  return false;
}

namespace {
void check_unit_interval(const std::vector<double>& values, const char* what) {
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + ": values must lie in [0, 1]");
}
}  // namespace

SpikeRaster encode_rate(const std::vector<double>& values, int t_steps, Rng& rng) {
  check_unit_interval(values, "encode_rate");
  if (t_steps < 1) throw DomainError("encode_rate: t_steps must be >= 1");
  SpikeRaster r(static_cast<int>(values.size()), t_steps);
  for (std::size_t i = 0; i < values.size(); ++i)
    for (int t = 0; t < t_steps; ++t)
      if (uniform01(rng) < values[i]) r.set(static_cast<int>(i), t);
  return r;
}

SpikeRaster encode_grf(const std::vector<double>& values, int n_fields, int delta_t,
                       double sigma_field, double cutoff) {
  check_unit_interval(values, "encode_grf");
  if (n_fields < 2) throw DomainError("encode_grf: n_fields must be >= 2");
  if (delta_t < 1) throw DomainError("encode_grf: delta_t must be >= 1");
  if (!(sigma_field > 0.0)) throw DomainError("encode_grf: sigma must be positive");
  SpikeRaster r(static_cast<int>(values.size()) * n_fields, delta_t);
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (int f = 0; f < n_fields; ++f) {
      const double c = static_cast<double>(f) / (n_fields - 1);
      const double d = values[i] - c;
      const double resp = std::exp(-d * d / (2.0 * sigma_field * sigma_field));
      if (resp < cutoff) continue;
      const int step = static_cast<int>(std::lround((1.0 - resp) * (delta_t - 1)));
      r.set(static_cast<int>(i) * n_fields + f, step);
    }
  }
  return r;
}

Arbiter::Arbiter(int n_devices) : n_(n_devices) {
  if (n_devices < 1) throw DomainError("arbiter: need at least one device");
}

int Arbiter::select() {
  const int k = next_;
  next_ = (next_ + 1) % n_;
  return k;
}

MultiMemristiveSynapse::MultiMemristiveSynapse(int n_devices, double g_init, double now) {
  if (n_devices < 1) throw DomainError("synapse: need at least one device");
  devices.assign(n_devices, DeviceState{g_init, now});
}

double synapse_read(const MultiMemristiveSynapse& s, const DeviceParams& p, double now, Rng& rng) {
  double g = 0.0;
  for (const auto& d : s.devices) g += read(p, d, now, rng);
  return g;
}

double synapse_conductance(const MultiMemristiveSynapse& s, const DeviceParams& p, double now) {
  double g = 0.0;
  for (const auto& d : s.devices) g += drifted_conductance(p, d, now);
  return g;
}

void synapse_program(MultiMemristiveSynapse& s, Arbiter& arbiter, const DeviceParams& p,
                     Direction dir, int pulses, double now, Rng& rng) {
  if (pulses < 1) throw DomainError("synapse_program: pulses must be >= 1");
  if (arbiter.n_devices() != s.size())
    throw DimensionError("synapse_program: arbiter and synapse disagree on N");
  auto& d = s.devices[arbiter.select()];
  d = apply_pulse(p, d, {dir == Direction::Potentiate ? Polarity::Set : Polarity::Reset, pulses}, now,
                  rng);
}

void StdpRule::validate() const {
  if (window_steps < 1) throw DomainError("stdp: window_steps must be >= 1");
  if (dw_plus < 0 || dw_minus < 0) throw DomainError("stdp: magnitudes must be >= 0");
}

StdpDecision stdp_decide(const StdpRule& rule, const SpikeRaster& pre, int pre_unit,
                         const SpikeRaster& post, int post_unit, int t) {
  rule.validate();
  auto any_in_window = [&](const SpikeRaster& r, int unit) {
    for (int u = std::max(0, t - rule.window_steps + 1); u <= t; ++u)
      if (r.at(unit, u)) return true;
    return false;
  };
  StdpDecision d;
  if (post.at(post_unit, t) && any_in_window(pre, pre_unit)) d.potentiate = rule.dw_plus > 0;
  if (pre.at(pre_unit, t) && !any_in_window(post, post_unit)) d.depress = rule.dw_minus > 0;
  return d;
}

void stdp_update(const StdpRule& rule, const SpikeRaster& pre, int pre_unit, const SpikeRaster& post,
                 int post_unit, int t, MultiMemristiveSynapse& s, Arbiter& arbiter,
                 const DeviceParams& p, double now, Rng& rng) {
  const StdpDecision d = stdp_decide(rule, pre, pre_unit, post, post_unit, t);
  if (d.potentiate) synapse_program(s, arbiter, p, Direction::Potentiate, rule.dw_plus, now, rng);
  if (d.depress) synapse_program(s, arbiter, p, Direction::Depress, rule.dw_minus, now, rng);
}

Eigen::VectorXd spike_currents(const CrossbarArray& xbar, const std::vector<std::uint8_t>& spikes,
                               Rng& rng) {
  if (static_cast<int>(spikes.size()) != xbar.cols())
    throw DimensionError("spike_currents: spike vector width mismatch");
  Eigen::VectorXd x(xbar.cols());
  for (int j = 0; j < xbar.cols(); ++j) x[j] = spikes[j] ? 1.0 : 0.0;
  const double to_current = xbar.params().range() / xbar.w_max() * xbar.v_read();
  return xbar.mvm(x, rng) * to_current;
}

void CorrelationConfig::validate() const {
  if (n_synapses < 1) throw DomainError("correlation: n_synapses must be >= 1");
  if (!(frac_correlated > 0.0 && frac_correlated < 1.0))
    throw DomainError("correlation: frac_correlated must lie in (0, 1)");
  if (n_per_synapse < 1) throw DomainError("correlation: n_per_synapse must be >= 1");
  if (!(rate > 0.0 && rate < 1.0)) throw DomainError("correlation: rate must lie in (0, 1)");
  if (!(corr_c >= 0.0 && corr_c <= 1.0)) throw DomainError("correlation: corr_c must lie in [0, 1]");
  if (steps < 1) throw DomainError("correlation: steps must be >= 1");
  if (!(g_init_fraction >= 0.0 && g_init_fraction <= 1.0))
    throw DomainError("correlation: g_init_fraction must lie in [0, 1]");
  if (!(dt > 0.0)) throw DomainError("correlation: dt must be positive");
  rule.validate();
  device.validate();
  LifNeuron{0.0, v_thresh, 0.0, leak_lambda}.validate();
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw DomainError("histogram: need bins >= 1 and hi > lo");
  Histogram h{lo, hi, std::vector<std::int64_t>(bins, 0)};
  for (double v : values) {
    int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    h.counts[std::clamp(b, 0, bins - 1)]++;
  }
  return h;
}

namespace {
void mean_std(const std::vector<double>& v, std::size_t from, std::size_t to, double& mean, double& sd) {
  const double n = static_cast<double>(to - from);
  mean = 0.0;
  for (std::size_t i = from; i < to; ++i) mean += v[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = from; i < to; ++i) ss += (v[i] - mean) * (v[i] - mean);
  sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
}
}  // namespace

SeparationReport correlation_experiment(const CorrelationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const DeviceParams& p = cfg.device;
  const int n_syn = cfg.n_synapses;
  const int n_corr = std::clamp(static_cast<int>(std::lround(cfg.frac_correlated * n_syn)), 1, n_syn);
  const int n_dev = cfg.n_per_synapse;

  // Spike generation and device noise draw from separate streams, so runs
  // that differ only in N or device profile see identical input trains.
  Rng input_rng(derive_seed(seed, "inputs"));
  Rng device_rng(derive_seed(seed, "devices"));

  const double g_init = p.g_min + cfg.g_init_fraction * p.range();
  std::vector<MultiMemristiveSynapse> syn(n_syn, MultiMemristiveSynapse(n_dev, g_init));
  Arbiter shared(n_dev);
  std::vector<Arbiter> own(cfg.shared_arbiter ? 0 : n_syn, Arbiter(n_dev));
  auto arbiter_for = [&](int s) -> Arbiter& { return cfg.shared_arbiter ? shared : own[s]; };

  const double copy_p = std::sqrt(cfg.corr_c);
  const double fill_p = (cfg.rate - copy_p * cfg.rate) / (1.0 - copy_p * cfg.rate);

  LifNeuron neuron{0.0, cfg.v_thresh, 0.0, cfg.leak_lambda};
  const int never = std::numeric_limits<int>::min() / 2;
  std::vector<int> last_pre(n_syn, never);
  int last_post = never;
  std::vector<int> active;
  SeparationReport rep;
  rep.n_correlated = n_corr;

  auto weight = [&](int s, double now) {
    const double g = p.read_noise_rel > 0.0 ? synapse_read(syn[s], p, now, device_rng)
                                            : synapse_conductance(syn[s], p, now);
    return (g / n_dev - p.g_min) / p.range();
  };

  for (int t = 0; t < cfg.steps; ++t) {
    const double now = t * cfg.dt;
    const bool master = uniform01(input_rng) < cfg.rate;
    active.clear();
    for (int s = 0; s < n_syn; ++s) {
      bool spike;
      if (s < n_corr) {
        const bool copied = master && uniform01(input_rng) < copy_p;
        const bool filled = uniform01(input_rng) < fill_p;
        spike = copied || filled;
      } else {
        spike = uniform01(input_rng) < cfg.rate;
      }
      if (spike) active.push_back(s);
    }

    double current = 0.0;
    for (int s : active) current += weight(s, now);
    for (int s : active) last_pre[s] = t;

    if (lif_step(neuron, current)) {
      last_post = t;
      ++rep.post_spikes;
      if (cfg.rule.dw_plus > 0) {
        for (int s = 0; s < n_syn; ++s) {
          if (last_pre[s] > t - cfg.rule.window_steps) {
            synapse_program(syn[s], arbiter_for(s), p, Direction::Potentiate, cfg.rule.dw_plus, now,
                            device_rng);
            ++rep.potentiations;
          }
        }
      }
    }
    if (cfg.rule.dw_minus > 0 && last_post <= t - cfg.rule.window_steps) {
      for (int s : active) {
        synapse_program(syn[s], arbiter_for(s), p, Direction::Depress, cfg.rule.dw_minus, now,
                        device_rng);
        ++rep.depressions;
      }
    }
  }

  const double t_end = (cfg.steps - 1) * cfg.dt;
  rep.final_conductance.resize(n_syn);
  for (int s = 0; s < n_syn; ++s) rep.final_conductance[s] = synapse_conductance(syn[s], p, t_end);
  mean_std(rep.final_conductance, 0, n_corr, rep.mean_corr, rep.std_corr);
  mean_std(rep.final_conductance, n_corr, n_syn, rep.mean_unc, rep.std_unc);
  const double spread = std::sqrt(rep.std_corr * rep.std_corr + rep.std_unc * rep.std_unc);
  // Spreads at rounding level mean both groups sit on the same value.
  rep.d = spread > 1e-9 * n_dev * p.g_max ? (rep.mean_corr - rep.mean_unc) / spread : 0.0;

  const double lo = n_dev * p.g_min, hi = n_dev * p.g_max;
  std::vector<double> corr(rep.final_conductance.begin(), rep.final_conductance.begin() + n_corr);
  std::vector<double> unc(rep.final_conductance.begin() + n_corr, rep.final_conductance.end());
  rep.hist_corr = histogram(corr, lo, hi, 20);
  rep.hist_unc = histogram(unc, lo, hi, 20);
  return rep;
}

void EfficiencyModel::validate() const {
  if (!(c_add > 0.0) || !(c_mul > 0.0)) throw DomainError("efficiency: costs must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("efficiency: p must lie in [0, 1]");
  if (!(ratio_t_dt >= 1.0)) throw DomainError("efficiency: T/dt must be >= 1");
}

EfficiencyVerdict snn_efficiency_favorable(const EfficiencyModel& m) {
  m.validate();
  const double lhs = m.c_add * m.p * m.ratio_t_dt;
  return {lhs < m.c_mul, m.c_mul - lhs};
}

}  // namespace memsim::snn

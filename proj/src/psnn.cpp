#include "memsim/psnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memsim/errors.hpp"

namespace memsim::psnn {

GlmNetwork::GlmNetwork(int n_in_, int n_hidden_, int n_out_, bool recurrent_)
    : n_in(n_in_), n_hidden(n_hidden_), n_out(n_out_), recurrent(recurrent_) {
  if (n_in < 0 || n_hidden < 0 || n_out < 0 || n_units() < 1)
    throw DomainError("glm: need at least one unit and non-negative sizes");
  w = Eigen::MatrixXd::Zero(n_units(), n_cols());
  b = Eigen::VectorXd::Zero(n_units());
}

bool GlmNetwork::connected(int u, int j) const {
  if (j < n_in) return true;
  return recurrent && j - n_in != u;
}

void GlmNetwork::validate() const {
  if (alpha.empty() || beta.empty()) throw DomainError("glm: kernels need at least one tap");
  if (w.rows() != n_units() || w.cols() != n_cols() || b.size() != n_units())
    throw DimensionError("glm: parameter shapes do not match unit counts");
  if (!w.allFinite() || !b.allFinite()) throw DomainError("glm: parameters must be finite");
  for (double a : alpha)
    if (!std::isfinite(a)) throw DomainError("glm: kernel taps must be finite");
  for (double a : beta)
    if (!std::isfinite(a)) throw DomainError("glm: kernel taps must be finite");
}

std::vector<double> geometric_kernel(double decay, int n_taps) {
  if (n_taps < 1) throw DomainError("kernel: need at least one tap");
  std::vector<double> k(n_taps);
  double v = 1.0;
  for (auto& x : k) {
    x = v;
    v *= decay;
  }
  return k;
}

void randomize(GlmNetwork& net, double scale, Rng& rng) {
  for (int u = 0; u < net.n_units(); ++u) {
    for (int j = 0; j < net.n_cols(); ++j)
      net.w(u, j) = net.connected(u, j) ? scale * standard_normal(rng) : 0.0;
    net.b[u] = 0.0;
  }
}

Eligibility Eligibility::zeros_like(const GlmNetwork& net) {
  return {Eigen::MatrixXd::Zero(net.n_units(), net.n_cols()), Eigen::VectorXd::Zero(net.n_units())};
}

Eligibility& Eligibility::operator+=(const Eligibility& o) {
  w += o.w;
  b += o.b;
  return *this;
}

Eligibility& Eligibility::operator*=(double s) {
  w *= s;
  b *= s;
  return *this;
}

namespace {

double filtered(const std::vector<double>& kernel, const SpikeRaster& r, int unit, int t) {
  double acc = 0.0;
  const int taps = static_cast<int>(kernel.size());
  for (int k = 0; k < taps && t - 1 - k >= 0; ++k)
    if (r.at(unit, t - 1 - k)) acc += kernel[k];
  return acc;
}

// log sigma(u) and log(1 - sigma(u)) without overflow.
double log_sigmoid(double u) { return u >= 0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u)); }

Rollout walk(const GlmNetwork& net, const SpikeRaster& input, const SpikeRaster* given, Rng* rng) {
  net.validate();
  if (input.n_units() != net.n_in)
    throw DimensionError("glm: input raster has " + std::to_string(input.n_units()) + " units, expected " +
                         std::to_string(net.n_in));
  const int T = input.n_steps();
  const int n_units = net.n_units();
  if (given && (given->n_units() != n_units || given->n_steps() != T))
    throw DimensionError("glm: output raster shape mismatch");

  Rollout out{SpikeRaster(n_units, std::max(T, 0) , input.dt()), 0.0, Eligibility::zeros_like(net)};
  Eigen::VectorXd reg(net.n_cols());
  Eigen::VectorXd prob(n_units);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < net.n_in; ++j) reg[j] = filtered(net.alpha, input, j, t);
    for (int v = 0; v < n_units; ++v) reg[net.n_in + v] = filtered(net.alpha, out.output, v, t);
    for (int u = 0; u < n_units; ++u) {
      double m = net.b[u] + filtered(net.beta, out.output, u, t);
      for (int j = 0; j < net.n_cols(); ++j)
        if (net.connected(u, j)) m += net.w(u, j) * reg[j];
      const bool y = given ? given->at(u, t) : uniform01(*rng) < sigmoid(m);
      prob[u] = sigmoid(m);
      out.log_prob += y ? log_sigmoid(m) : log_sigmoid(-m);
      const double g = (y ? 1.0 : 0.0) - prob[u];
      out.elig.b[u] += g;
      for (int j = 0; j < net.n_cols(); ++j)
        if (net.connected(u, j)) out.elig.w(u, j) += g * reg[j];
      if (y) out.output.set(u, t);
    }
  }
  return out;
}

}  // namespace

double membrane(const GlmNetwork& net, int unit, int t, const SpikeRaster& input, const SpikeRaster& own) {
  if (unit < 0 || unit >= net.n_units()) throw DimensionError("membrane: unit out of range");
  if (t < 0 || t >= input.n_steps()) throw DimensionError("membrane: step out of range");
  if (input.n_units() != net.n_in || own.n_units() != net.n_units())
    throw DimensionError("membrane: raster shape mismatch");
  double u = net.b[unit] + filtered(net.beta, own, unit, t);
  for (int j = 0; j < net.n_in; ++j) u += net.w(unit, j) * filtered(net.alpha, input, j, t);
  for (int v = 0; v < net.n_units(); ++v)
    if (net.connected(unit, net.n_in + v)) u += net.w(unit, net.n_in + v) * filtered(net.alpha, own, v, t);
  return u;
}

Rollout rollout(const GlmNetwork& net, const SpikeRaster& input, Rng& rng) {
  return walk(net, input, nullptr, &rng);
}

Rollout score(const GlmNetwork& net, const SpikeRaster& input, const SpikeRaster& output) {
  return walk(net, input, &output, nullptr);
}

ExactGradient enumerate_gradient(const GlmNetwork& net, const SpikeRaster& input, const OutputLoss& f) {
  const int n_units = net.n_units(), T = input.n_steps();
  const int bits = n_units * T;
  if (bits > 20) throw DomainError("enumerate_gradient: output space too large");
  ExactGradient ex{0.0, 0.0, Eligibility::zeros_like(net)};
  SpikeRaster y(n_units, T, input.dt());
  for (std::uint32_t code = 0; code < (1u << bits); ++code) {
    for (int i = 0; i < bits; ++i) y.set(i / T, i % T, (code >> i) & 1u);
    Rollout r = score(net, input, y);
    const double p = std::exp(r.log_prob);
    const double fy = f(y);
    ex.total_prob += p;
    ex.expected_f += p * fy;
    r.elig *= p * fy;
    ex.grad += r.elig;
  }
  return ex;
}

void Baseline::observe(double f) {
  if (!primed) {
    value = f;
    primed = true;
  } else {
    value = momentum * value + (1.0 - momentum) * f;
  }
}

StepStats reinforce_step(GlmNetwork& net, const std::vector<SpikeRaster>& inputs, const SampleLoss& f,
                         double lr, Baseline& baseline, Rng& rng) {
  if (!(lr >= 0.0)) throw DomainError("reinforce: lr must be non-negative");
  if (inputs.empty()) throw DomainError("reinforce: empty batch");
  const double b = baseline.current();
  Eligibility step = Eligibility::zeros_like(net);
  StepStats stats;
  std::vector<double> fs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rollout r = rollout(net, inputs[i], rng);
    const double fi = f(static_cast<int>(i), r.output);
    if (!std::isfinite(fi)) throw DomainError("reinforce: loss is not finite");
    fs.push_back(fi);
    stats.mean_f += fi;
    stats.output_spikes += static_cast<double>(r.output.count());
    r.elig *= fi - b;
    step += r.elig;
  }
  const double n = static_cast<double>(inputs.size());
  step *= -lr / n;
  net.w += step.w;
  net.b += step.b;
  for (double fi : fs) baseline.observe(fi);
  stats.mean_f /= n;
  stats.output_spikes /= n;
  return stats;
}

double readout_loss(ReadoutLoss kind, const GlmNetwork& net, const SpikeRaster& y, const SpikeRaster& target,
                    int from_step, double tau) {
  if (y.n_units() != net.n_units()) throw DimensionError("readout_loss: output raster shape mismatch");
  const int T = y.n_steps();
  if (kind != ReadoutLoss::SpikeCount && (target.n_units() != net.n_out || target.n_steps() != T))
    throw DimensionError("readout_loss: target raster shape mismatch");
  double loss = 0.0;
  const double decay = std::exp(-1.0 / tau);
  for (int o = 0; o < net.n_out; ++o) {
    const int u = net.n_hidden + o;
    double ty = 0.0, tt = 0.0;
    for (int t = 0; t < T; ++t) {
      const double a = y.at(u, t) ? 1.0 : 0.0;
      switch (kind) {
        case ReadoutLoss::Hamming:
          if (t >= from_step) loss += a != (target.at(o, t) ? 1.0 : 0.0);
          break;
        case ReadoutLoss::SpikeCount:
          if (t >= from_step) loss += a;
          break;
        case ReadoutLoss::VanRossum:
          ty = decay * ty + a;
          tt = decay * tt + (target.at(o, t) ? 1.0 : 0.0);
          if (t >= from_step) loss += (ty - tt) * (ty - tt) / tau;
          break;
      }
    }
  }
  return loss;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("psnn train: epochs must be >= 1");
  if (!(lr >= 0.0)) throw DomainError("psnn train: lr must be non-negative");
  if (batch_size < 1) throw DomainError("psnn train: batch_size must be >= 1");
  if (loss_from_step < 0) throw DomainError("psnn train: loss_from_step must be >= 0");
}

TrainReport train_supervised(GlmNetwork& net, const std::vector<Sample>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DomainError("psnn train: empty dataset");
  for (const auto& s : data)
    if (s.input.n_units() != net.n_in || s.target.n_units() != net.n_out ||
        s.target.n_steps() != s.input.n_steps())
      throw DimensionError("psnn train: sample shapes do not match the network");

  TrainReport rep;
  for (const auto& s : data) rep.input_spikes += static_cast<double>(s.input.count());
  rep.input_spikes /= static_cast<double>(data.size());

  Rng rng(derive_seed(cfg.seed, "rollouts"));
  Rng order_rng(derive_seed(cfg.seed, "order"));
  Baseline baseline;
  baseline.mode = cfg.baseline;
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0, spikes = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<SpikeRaster> inputs;
      std::vector<int> idx;
      for (std::size_t k = start; k < stop; ++k) {
        inputs.push_back(data[order[k]].input);
        idx.push_back(order[k]);
      }
      auto f = [&](int i, const SpikeRaster& y) {
        return readout_loss(cfg.loss, net, y, data[idx[i]].target, cfg.loss_from_step);
      };
      const StepStats st = reinforce_step(net, inputs, f, cfg.lr, baseline, rng);
      total += st.mean_f * static_cast<double>(stop - start);
      spikes += st.output_spikes * static_cast<double>(stop - start);
    }
    rep.loss.push_back(total / static_cast<double>(data.size()));
    rep.output_spikes.push_back(spikes / static_cast<double>(data.size()));
  }
  return rep;
}

double evaluate(const GlmNetwork& net, const std::vector<Sample>& data, ReadoutLoss kind, int from_step,
                int reps, Rng& rng) {
  if (data.empty() || reps < 1) throw DomainError("evaluate: need samples and reps >= 1");
  double total = 0.0;
  for (const auto& s : data)
    for (int r = 0; r < reps; ++r)
      total += readout_loss(kind, net, rollout(net, s.input, rng).output, s.target, from_step);
  return total / (static_cast<double>(data.size()) * reps);
}

TargetTask make_target_task(int n_in, int n_out, int t_steps, double density, std::uint64_t seed) {
  if (n_in < 1 || n_out < 1 || t_steps < 1) throw DomainError("target task: sizes must be positive");
  if (!(density >= 0.0 && density <= 1.0)) throw DomainError("target task: density must lie in [0, 1]");
  Rng rng(derive_seed(seed, "target-task"));
  TargetTask task{SpikeRaster(n_in, t_steps), SpikeRaster(n_out, t_steps)};
  for (int j = 0; j < n_in; ++j)
    for (int t = 0; t < t_steps; ++t)
      if (uniform01(rng) < density) task.input.set(j, t);
  // The teacher is a feed-forward network of the same family read out at its
  // most likely spike, so the target is reachable by a student.
  GlmNetwork teacher(n_in, 0, n_out, false);
  randomize(teacher, 2.0, rng);
  for (int o = 0; o < n_out; ++o) teacher.b[o] = standard_normal(rng);
  for (int t = 0; t < t_steps; ++t)
    for (int o = 0; o < n_out; ++o)
      if (membrane(teacher, o, t, task.input, task.target) > 0.0) task.target.set(o, t);
  return task;
}

void EncodingTaskConfig::validate() const {
  if (n_samples < 1 || n_values < 1) throw DomainError("encoding task: need samples and values");
  if (delta_t < 1 || readout_steps < 1) throw DomainError("encoding task: window lengths must be >= 1");
  if (n_fields < 2) throw DomainError("encoding task: n_fields must be >= 2");
  if (!(sigma_field > 0.0)) throw DomainError("encoding task: sigma must be positive");
  if (!(class_gap >= 0.0 && class_width > 0.0 && class_gap + class_width <= 0.5))
    throw DomainError("encoding task: class ranges must fit in [0, 1]");
}

std::vector<Sample> make_encoding_task(const EncodingTaskConfig& cfg, Encoder enc, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, "encoding-task"));
  Rng spike_rng(derive_seed(seed, "rate-spikes"));
  const int T = cfg.delta_t + cfg.readout_steps;
  std::vector<Sample> out;
  for (int i = 0; i < cfg.n_samples; ++i) {
    const int label = i % 2;
    std::vector<double> values(cfg.n_values);
    for (auto& v : values) {
      const double off = cfg.class_gap + cfg.class_width * uniform01(rng);
      v = label == 0 ? 0.5 - off : 0.5 + off;
    }
    SpikeRaster window = enc == Encoder::Rate
                             ? snn::encode_rate(values, cfg.delta_t, spike_rng)
                             : snn::encode_grf(values, cfg.n_fields, cfg.delta_t, cfg.sigma_field);
    Sample s{SpikeRaster(window.n_units(), T), SpikeRaster(2, T)};
    for (int j = 0; j < window.n_units(); ++j)
      for (int t = 0; t < cfg.delta_t; ++t)
        if (window.at(j, t)) s.input.set(j, t);
    for (int t = cfg.delta_t; t < T; ++t) s.target.set(label, t);
    out.push_back(std::move(s));
  }
  return out;
}

Encoder parse_encoder(const std::string& s) {
  if (s == "rate") return Encoder::Rate;
  if (s == "grf") return Encoder::Grf;
  throw DomainError("unknown encoder '" + s + "' (expected rate or grf)");
}

}  // namespace memsim::psnn

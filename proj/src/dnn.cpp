#include "memsim/dnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "memsim/errors.hpp"

namespace memsim::dnn {
namespace {

std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(derive_seed(seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

int argmax(const Eigen::VectorXd& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

Parameters zeros_like(const Parameters& p) {
  Parameters z;
  for (const auto& w : p.weights) z.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : p.biases) z.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  return z;
}

void accumulate(Parameters& acc, const Parameters& g) {
  for (std::size_t l = 0; l < acc.weights.size(); ++l) {
    acc.weights[l] += g.weights[l];
    acc.biases[l] += g.biases[l];
  }
}

void scale(Parameters& p, double s) {
  for (auto& w : p.weights) w *= s;
  for (auto& b : p.biases) b *= s;
}

void check_sample(const Eigen::VectorXd& x, Eigen::Index expected) {
  if (x.size() != expected)
    throw DimensionError("forward: input width " + std::to_string(x.size()) + " != " +
                         std::to_string(expected));
}

}  // namespace

Eigen::VectorXd activate(Activation a, const Eigen::VectorXd& z) {
  switch (a) {
    case Activation::Relu:
      return z.cwiseMax(0.0);
    case Activation::Sigmoid:
      return (1.0 + (-z.array()).exp()).inverse().matrix();
    case Activation::SoftmaxOut:
      return z;
  }
  return z;
}

Eigen::VectorXd activate_derivative(Activation a, const Eigen::VectorXd& z) {
  switch (a) {
    case Activation::Relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::Sigmoid: {
      const Eigen::ArrayXd s = (1.0 + (-z.array()).exp()).inverse();
      return (s * (1.0 - s)).matrix();
    }
    case Activation::SoftmaxOut:
      return Eigen::VectorXd::Ones(z.size());
  }
  return Eigen::VectorXd::Ones(z.size());
}

LossGrad loss_and_grad(LossKind kind, const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) throw DomainError("loss: label out of range");
  LossGrad out;
  if (kind == LossKind::CrossEntropy) {
    const double peak = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - peak).exp().matrix();
    const double sum = e.sum();
    out.grad = e / sum;
    out.loss = -(logits[label] - peak - std::log(sum));
    out.grad[label] -= 1.0;
  } else {
    Eigen::VectorXd target = Eigen::VectorXd::Zero(logits.size());
    target[label] = 1.0;
    out.grad = logits - target;
    out.loss = 0.5 * out.grad.squaredNorm();
  }
  return out;
}

Parameters init_parameters(const std::vector<int>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw DomainError("network needs at least an input and an output size");
  Parameters p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    if (in < 1 || out < 1) throw DomainError("layer sizes must be positive");
    const double limit = std::sqrt(6.0 / (in + out));
    Eigen::MatrixXd w(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = limit * (2.0 * uniform01(rng) - 1.0);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return p;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw DomainError("train: lr must be non-negative");
  if (epochs < 1) throw DomainError("train: epochs must be >= 1");
  if (batch_size < 1) throw DomainError("train: batch_size must be >= 1");
}

// --- FloatNet ---------------------------------------------------------------

FloatNet::FloatNet(Parameters params, Activation hidden) : p_(std::move(params)), hidden_(hidden) {}

Eigen::VectorXd FloatNet::logits(const Eigen::VectorXd& x) const {
  check_sample(x, p_.weights.front().cols());
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < p_.weights.size(); ++l) {
    Eigen::VectorXd z = p_.weights[l] * a + p_.biases[l];
    a = l + 1 == p_.weights.size() ? z : activate(hidden_, z);
  }
  return a;
}

double FloatNet::loss(const Eigen::VectorXd& x, int label, LossKind loss) const {
  return loss_and_grad(loss, logits(x), label).loss;
}

Parameters FloatNet::gradients(const Eigen::VectorXd& x, int label, LossKind loss) const {
  check_sample(x, p_.weights.front().cols());
  const std::size_t n = p_.weights.size();
  std::vector<Eigen::VectorXd> acts{x}, pre;
  for (std::size_t l = 0; l < n; ++l) {
    pre.push_back(p_.weights[l] * acts.back() + p_.biases[l]);
    acts.push_back(l + 1 == n ? pre.back() : activate(hidden_, pre.back()));
  }
  Parameters g = zeros_like(p_);
  Eigen::VectorXd delta = loss_and_grad(loss, acts.back(), label).grad;
  for (std::size_t l = n; l-- > 0;) {
    g.weights[l] = delta * acts[l].transpose();
    g.biases[l] = delta;
    if (l > 0)
      delta = (p_.weights[l].transpose() * delta).cwiseProduct(activate_derivative(hidden_, pre[l - 1]));
  }
  return g;
}

void FloatNet::sgd_step(const Parameters& mean_grad, double lr) {
  for (std::size_t l = 0; l < p_.weights.size(); ++l) {
    p_.weights[l] -= lr * mean_grad.weights[l];
    p_.biases[l] -= lr * mean_grad.biases[l];
  }
}

double FloatNet::accuracy(const LabelledSet& set) const {
  if (set.size() == 0) return 0.0;
  int correct = 0;
  for (int i = 0; i < set.size(); ++i) correct += argmax(logits(set.sample(i))) == set.labels[i];
  return static_cast<double>(correct) / set.size();
}

TrainingReport FloatNet::train(const TrainTestSplit& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.size() == 0) throw DomainError("train: empty dataset");
  TrainingReport report;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.train.size(), cfg.seed, epoch);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Parameters acc = zeros_like(p_);
      for (std::size_t s = start; s < stop; ++s) {
        const int i = order[s];
        const Eigen::VectorXd x = data.train.sample(i);
        total += loss(x, data.train.labels[i], cfg.loss);
        accumulate(acc, gradients(x, data.train.labels[i], cfg.loss));
      }
      scale(acc, 1.0 / static_cast<double>(stop - start));
      sgd_step(acc, cfg.lr);
    }
    report.epochs.push_back({total / data.train.size(), accuracy(data.test), 0, 0, 0.0});
  }
  return report;
}

// --- MixedPrecisionNet --------------------------------------------------------

PulseCalibration calibrate_pulse(const DeviceParams& p, double epsilon, double w_max) {
  if (!(epsilon > 0.0)) throw DomainError("calibrate_pulse: epsilon must be positive");
  PulseCalibration c;
  c.delta_g = epsilon * p.range() / w_max;
  const double g_mid = 0.5 * (p.g_min + p.g_max);
  c.mid_range_amplitude = c.delta_g / (p.set_step_fraction * (p.g_max - g_mid));
  return c;
}

MixedPrecisionNet::MixedPrecisionNet(const NetConfig& cfg, const Parameters& init, Rng& rng,
                                     double now)
    : cfg_(cfg), calib_(calibrate_pulse(cfg.device, cfg.epsilon, cfg.w_max)) {
  if (!(cfg.epsilon > 0.0)) throw DomainError("mixed-precision net: epsilon must be positive");
  if (init.weights.empty() || init.weights.size() != init.biases.size())
    throw DimensionError("mixed-precision net: malformed parameters");
  for (std::size_t l = 0; l < init.weights.size(); ++l) {
    const auto& w = init.weights[l];
    if (l > 0 && w.cols() != init.weights[l - 1].rows())
      throw DimensionError("mixed-precision net: layer widths do not chain");
    TiledMatrix tm(static_cast<int>(w.rows()), static_cast<int>(w.cols()), cfg.tile_dim, cfg.device,
                   cfg.w_max);
    tm.program(w.cwiseMax(-cfg.w_max).cwiseMin(cfg.w_max), cfg.programming, now, rng);
    const bool last = l + 1 == init.weights.size();
    layers_.push_back(Layer{std::move(tm), Eigen::MatrixXd::Zero(w.rows(), w.cols()),
                            init.biases[l], last ? Activation::SoftmaxOut : cfg.hidden});
  }
}

ForwardResult MixedPrecisionNet::forward(const Eigen::VectorXd& x, Rng& rng) const {
  check_sample(x, layers_.front().weights.n_cols());
  ForwardResult r;
  r.cache.activations.push_back(x);
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.weights.multiply(r.cache.activations.back(), rng) + layer.bias;
    r.cache.activations.push_back(activate(layer.activation, z));
    r.cache.pre.push_back(std::move(z));
  }
  r.logits = r.cache.pre.back();
  return r;
}

Deltas MixedPrecisionNet::backward(const ForwardCache& cache, const Eigen::VectorXd& grad_out,
                                   Rng& rng) const {
  const std::size_t n = layers_.size();
  if (cache.pre.size() != n || cache.activations.size() != n + 1)
    throw DimensionError("backward: cache does not match the network");
  if (grad_out.size() != layers_.back().weights.n_rows())
    throw DimensionError("backward: gradient width mismatch");
  Deltas d;
  d.weights.resize(n);
  d.biases.resize(n);
  Eigen::VectorXd delta = grad_out.cwiseProduct(activate_derivative(layers_.back().activation, cache.pre.back()));
  for (std::size_t l = n; l-- > 0;) {
    if (cache.activations[l].size() != layers_[l].weights.n_cols())
      throw DimensionError("backward: stale cache");
    d.weights[l] = delta * cache.activations[l].transpose();
    d.biases[l] = delta;
    if (l > 0) {
      delta = layers_[l].weights.multiply_transpose(delta, rng)
                  .cwiseProduct(activate_derivative(layers_[l - 1].activation, cache.pre[l - 1]));
    }
  }
  return d;
}

void MixedPrecisionNet::flush_entry(Layer& layer, int i, int j, Rng& rng) {
  const double eps = cfg_.epsilon;
  double& chi = layer.chi(i, j);
  const int n = static_cast<int>(std::floor(std::abs(chi) / eps));
  if (n == 0) return;
  const double sign = chi > 0.0 ? 1.0 : -1.0;
  const PairSide side = chi > 0.0 ? PairSide::Plus : PairSide::Minus;
  const DeviceParams& p = cfg_.device;
  const double g = drifted_conductance(p, layer.weights.device(i, j, side), layer.weights.now());
  const double headroom = p.g_max - g;
  const double wanted = n * calib_.delta_g;
  if (wanted < headroom) {
    // One train of n equal pulses whose nominal steps add up to n * delta_g.
    const double per_pulse_gain = -std::expm1(std::log1p(-wanted / headroom) / n);
    layer.weights.pulse(i, j, side, {Polarity::Set, n, per_pulse_gain / p.set_step_fraction}, rng);
    pulses_ += static_cast<std::uint64_t>(n);
  } else {
    // Active device would saturate: re-program the pair to the weight it
    // should now hold.
    ++clamps_;
    double target = layer.weights.decoded_weight(i, j) + sign * n * eps;
    if (std::abs(target) > cfg_.w_max) target = std::clamp(target, -cfg_.w_max, cfg_.w_max);
    layer.weights.program_entry(i, j, target, cfg_.programming, rng);
    ++refreshes_;
  }
  chi -= sign * n * eps;
}

void MixedPrecisionNet::apply_update(const Deltas& deltas, double lr, Rng& rng) {
  if (deltas.weights.size() != layers_.size() || deltas.biases.size() != layers_.size())
    throw DimensionError("apply_update: deltas do not match the network");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    if (deltas.weights[l].rows() != layer.chi.rows() || deltas.weights[l].cols() != layer.chi.cols())
      throw DimensionError("apply_update: weight delta shape mismatch");
    layer.chi -= lr * deltas.weights[l];
    layer.bias -= lr * deltas.biases[l];
    for (int j = 0; j < layer.chi.cols(); ++j)
      for (int i = 0; i < layer.chi.rows(); ++i)
        if (std::abs(layer.chi(i, j)) >= cfg_.epsilon) flush_entry(layer, i, j, rng);
  }
}

double MixedPrecisionNet::accuracy(const LabelledSet& set, Rng& rng) const {
  if (set.size() == 0) return 0.0;
  int correct = 0;
  for (int i = 0; i < set.size(); ++i)
    correct += argmax(forward(set.sample(i), rng).logits) == set.labels[i];
  return static_cast<double>(correct) / set.size();
}

TrainingReport MixedPrecisionNet::train(const TrainTestSplit& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.size() == 0) throw DomainError("train: empty dataset");
  Rng rng(derive_seed(cfg.seed, "devices"));
  TrainingReport report;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t pulses_before = pulses_, clamps_before = clamps_;
    const auto order = epoch_order(data.train.size(), cfg.seed, epoch);
    double total = 0.0, chi_peak = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Deltas acc;
      for (std::size_t s = start; s < stop; ++s) {
        const int i = order[s];
        auto fw = forward(data.train.sample(i), rng);
        auto lg = loss_and_grad(cfg.loss, fw.logits, data.train.labels[i]);
        total += lg.loss;
        Deltas d = backward(fw.cache, lg.grad, rng);
        if (acc.weights.empty()) {
          acc = std::move(d);
        } else {
          accumulate(acc, d);
        }
      }
      scale(acc, 1.0 / static_cast<double>(stop - start));
      apply_update(acc, cfg.lr, rng);
      for (const auto& layer : layers_)
        chi_peak = std::max(chi_peak, layer.chi.cwiseAbs().maxCoeff() / cfg_.epsilon);
    }
    report.epochs.push_back({total / data.train.size(), accuracy(data.test, rng),
                             pulses_ - pulses_before, clamps_ - clamps_before, chi_peak});
  }
  return report;
}

Parameters MixedPrecisionNet::decoded() const {
  Parameters p;
  for (const auto& layer : layers_) {
    p.weights.push_back(layer.weights.decoded_weights());
    p.biases.push_back(layer.bias);
  }
  return p;
}

void MixedPrecisionNet::advance_time(double dt) {
  for (auto& layer : layers_) layer.weights.advance_time(dt);
}

std::vector<DriftPoint> infer_with_drift(MixedPrecisionNet& net, const LabelledSet& test,
                                         const std::vector<double>& time_points,
                                         std::uint64_t read_seed) {
  for (std::size_t i = 1; i < time_points.size(); ++i)
    if (!(time_points[i] > time_points[i - 1]))
      throw DomainError("infer_with_drift: time points must be strictly increasing");
  if (!time_points.empty() && time_points.front() < 0.0)
    throw DomainError("infer_with_drift: time points must be non-negative");
  std::vector<DriftPoint> curve;
  double age = 0.0;
  for (double t : time_points) {
    net.advance_time(t - age);
    age = t;
    Rng rng(read_seed);
    curve.push_back({t, net.accuracy(test, rng)});
  }
  return curve;
}

}  // namespace memsim::dnn

#include "memsim/reservoir.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "memsim/errors.hpp"

namespace memsim::reservoir {

NodeKind parse_node_kind(const std::string& s) {
  if (s == "tanh") return NodeKind::Tanh;
  if (s == "volatile" || s == "volatile_device") return NodeKind::VolatileDevice;
  throw DomainError("unknown node kind '" + s + "' (expected tanh or volatile)");
}

void ReservoirConfig::validate() const {
  if (n_nodes < 1 || n_inputs < 1) throw DomainError("reservoir: sizes must be positive");
  if (!(connectivity > 0.0 && connectivity <= 1.0))
    throw DomainError("reservoir: connectivity must lie in (0, 1]");
  if (!(rho > 0.0)) throw DomainError("reservoir: rho must be positive");
  if (!(leak > 0.0 && leak <= 1.0)) throw DomainError("reservoir: leak must lie in (0, 1]");
  if (!(decay_tau > 0.0) || !(drive_gain >= 0.0))
    throw DomainError("reservoir: volatile node constants out of range");
  device.validate();
}

double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("spectral_radius: matrix must be square");
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Reservoir::Reservoir(const ReservoirConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const int n = cfg.n_nodes;
  w_in_.resize(n, cfg.n_inputs);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.n_inputs; ++j) w_in_(i, j) = cfg.input_scale * (2.0 * uniform01(rng) - 1.0);
  w_rec_ = Eigen::MatrixXd::Zero(n, n);
  // Draw until the sparse matrix has a non-zero spectrum (only matters for
  // very small or very sparse reservoirs).
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        w_rec_(i, j) = uniform01(rng) < cfg.connectivity ? 2.0 * uniform01(rng) - 1.0 : 0.0;
    const double r = spectral_radius(w_rec_);
    if (r > 1e-9) {
      w_rec_ *= cfg.rho / r;
      return;
    }
  }
  throw SingularSystemError("reservoir: could not draw a recurrent matrix with non-zero spectrum");
}

Eigen::VectorXd Reservoir::step(const Eigen::VectorXd& r, const Eigen::VectorXd& x) const {
  if (r.size() != cfg_.n_nodes) throw DimensionError("reservoir: state width mismatch");
  if (x.size() != cfg_.n_inputs) throw DimensionError("reservoir: input width mismatch");
  const Eigen::VectorXd drive = w_rec_ * r + w_in_ * x;
  if (cfg_.node_kind == NodeKind::Tanh)
    return (1.0 - cfg_.leak) * r + cfg_.leak * drive.array().tanh().matrix();

  const DeviceParams& p = cfg_.device;
  Eigen::VectorXd next(r.size());
  for (int i = 0; i < r.size(); ++i) {
    VolatileDeviceState s{p.g_min + r[i] * p.range(), cfg_.decay_tau, cfg_.drive_gain, p};
    s = volatile_step(s, drive[i], 1.0);
    next[i] = (s.g - p.g_min) / p.range();
  }
  return next;
}

Eigen::MatrixXd collect_states(const Reservoir& res, const Eigen::MatrixXd& inputs, int washout) {
  const int len = static_cast<int>(inputs.rows());
  if (washout < 0 || washout >= len) throw DomainError("collect_states: washout must lie in [0, length)");
  Eigen::MatrixXd states(len - washout, res.n_nodes());
  Eigen::VectorXd r = Eigen::VectorXd::Zero(res.n_nodes());
  for (int t = 0; t < len; ++t) {
    r = res.step(r, inputs.row(t).transpose());
    if (t >= washout) states.row(t - washout) = r.transpose();
  }
  return states;
}

namespace {
Eigen::MatrixXd with_bias(const Eigen::MatrixXd& f) {
  Eigen::MatrixXd a(f.rows(), f.cols() + 1);
  a << f, Eigen::VectorXd::Ones(f.rows());
  return a;
}
}  // namespace

Eigen::MatrixXd Readout::apply(const Eigen::MatrixXd& features) const {
  if (features.cols() + 1 != w_out.rows()) throw DimensionError("readout: feature width mismatch");
  return with_bias(features) * w_out;
}

Readout fit_readout(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double ridge_lambda) {
  if (features.rows() != targets.rows()) throw DimensionError("fit_readout: row counts differ");
  if (features.rows() == 0) throw DomainError("fit_readout: no samples");
  if (!(ridge_lambda >= 0.0)) throw DomainError("fit_readout: lambda must be non-negative");
  const Eigen::MatrixXd a = with_bias(features);
  Readout out;
  out.ridge_lambda = ridge_lambda;
  if (ridge_lambda == 0.0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    if (cod.rank() < a.cols())
      throw SingularSystemError("fit_readout: design matrix is rank-deficient (rank " +
                                std::to_string(cod.rank()) + " of " + std::to_string(a.cols()) +
                                "); use ridge_lambda > 0");
    out.w_out = cod.solve(targets);
    return out;
  }
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += ridge_lambda;
  out.w_out = gram.ldlt().solve(a.transpose() * targets);
  return out;
}

double ridge_loss(const Readout& r, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets) {
  return (r.apply(features) - targets).squaredNorm() + r.ridge_lambda * r.w_out.squaredNorm();
}

Eigen::MatrixXd predict(const Reservoir& res, const Readout& readout, const Eigen::MatrixXd& inputs,
                        int washout) {
  return readout.apply(collect_states(res, inputs, washout));
}

double nrmse(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target) {
  if (prediction.size() != target.size() || target.size() < 2) throw DimensionError("nrmse: size mismatch");
  const double var = (target.array() - target.mean()).square().mean();
  if (!(var > 0.0)) throw DomainError("nrmse: target has zero variance");
  return std::sqrt((prediction - target).squaredNorm() / target.size() / var);
}

Narma narma10(int length, std::uint64_t seed) {
  if (length < 1) throw DomainError("narma10: length must be positive");
  const int warm = 200;
  const int total = length + warm;
  // The recurrence occasionally blows up for unlucky input draws; those draws
  // are discarded and the next substream is tried.
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(derive_seed(seed, "narma10"), attempt));
    Eigen::VectorXd u(total), y = Eigen::VectorXd::Zero(total + 1);
    for (int t = 0; t < total; ++t) u[t] = 0.5 * uniform01(rng);
    bool ok = true;
    for (int t = 0; t < total && ok; ++t) {
      double sum = 0.0;
      for (int i = 0; i < 10 && t - i >= 0; ++i) sum += y[t - i];
      const double u9 = t >= 9 ? u[t - 9] : 0.0;
      y[t + 1] = 0.3 * y[t] + 0.05 * y[t] * sum + 1.5 * u9 * u[t] + 0.1;
      ok = std::isfinite(y[t + 1]) && std::abs(y[t + 1]) < 10.0;
    }
    if (ok) return {u.tail(length), y.segment(warm + 1, length)};
  }
  throw DivergenceError("narma10: every draw diverged", 100);
}

Eigen::MatrixXd lagged_inputs(const Eigen::VectorXd& u, int lags) {
  if (lags < 1) throw DomainError("lagged_inputs: lags must be >= 1");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(u.size(), lags);
  for (int t = 0; t < u.size(); ++t)
    for (int k = 0; k < lags && t - k >= 0; ++k) m(t, k) = u[t - k];
  return m;
}

double echo_state_distance(const Reservoir& res, const Eigen::MatrixXd& inputs, int steps, Rng& rng) {
  if (steps < 1 || steps > inputs.rows()) throw DomainError("echo_state_distance: bad step count");
  const int n = res.n_nodes();
  const bool unit_range = res.config().node_kind == NodeKind::VolatileDevice;
  Eigen::VectorXd a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = unit_range ? uniform01(rng) : 2.0 * uniform01(rng) - 1.0;
    b[i] = unit_range ? uniform01(rng) : 2.0 * uniform01(rng) - 1.0;
  }
  for (int t = 0; t < steps; ++t) {
    const Eigen::VectorXd x = inputs.row(t).transpose();
    a = res.step(a, x);
    b = res.step(b, x);
  }
  return (a - b).norm();
}

NarmaResult run_narma(const NarmaConfig& cfg, std::uint64_t seed) {
  if (cfg.train_length <= cfg.washout || cfg.test_length < 2)
    throw DomainError("narma: train length must exceed washout and test length must be >= 2");
  ReservoirConfig rc = cfg.reservoir;
  rc.n_inputs = 1;
  Rng rng(derive_seed(seed, "reservoir"));
  const Reservoir res(rc, rng);
  const int total = cfg.train_length + cfg.test_length;
  const Narma series = narma10(total, seed);
  const Eigen::MatrixXd u = series.input;

  // One pass keeps the reservoir state continuous across the split.
  const Eigen::MatrixXd states = collect_states(res, u, cfg.washout);
  const int n_train = cfg.train_length - cfg.washout;
  const Eigen::MatrixXd s_train = states.topRows(n_train), s_test = states.bottomRows(cfg.test_length);
  const Eigen::VectorXd y_train = series.target.segment(cfg.washout, n_train);
  const Eigen::VectorXd y_test = series.target.tail(cfg.test_length);

  NarmaResult out;
  const Readout ro = fit_readout(s_train, y_train, cfg.ridge_lambda);
  out.train_nrmse = nrmse(ro.apply(s_train).col(0), y_train);
  out.test_nrmse = nrmse(ro.apply(s_test).col(0), y_test);

  const Eigen::MatrixXd lags = lagged_inputs(series.input, cfg.linear_lags);
  const Readout lin = fit_readout(lags.middleRows(cfg.washout, n_train), y_train, cfg.ridge_lambda);
  out.linear_test_nrmse = nrmse(lin.apply(lags.bottomRows(cfg.test_length)).col(0), y_test);

  Rng echo_rng(derive_seed(seed, "echo"));
  out.echo_distance = echo_state_distance(res, u, std::min<int>(500, total), echo_rng);
  out.spectral_radius = spectral_radius(res.w_rec());
  return out;
}

}  // namespace memsim::reservoir

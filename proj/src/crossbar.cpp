#include "memsim/crossbar.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memsim/errors.hpp"

namespace memsim {
namespace {

constexpr double kInputSlack = 1e-12;

void check_peak(const Eigen::VectorXd& v, const char* what) {
  if (v.size() > 0 && v.cwiseAbs().maxCoeff() > 1.0 + kInputSlack)
    throw RangeError(std::string(what) + ": input amplitude exceeds 1; normalize before the array");
}

}  // namespace

CrossbarArray::CrossbarArray(int rows, int cols, const DeviceParams& params, double w_max,
                             double v_read)
    : rows_(rows), cols_(cols), params_(params), w_max_(w_max), v_read_(v_read) {
  if (rows < 1 || cols < 1 || rows > kMaxArrayDim || cols > kMaxArrayDim)
    throw DomainError("crossbar: dimensions must lie in [1, " + std::to_string(kMaxArrayDim) +
                      "], got " + std::to_string(rows) + "x" + std::to_string(cols));
  if (!(w_max > 0.0)) throw DomainError("crossbar: w_max must be positive");
  if (!(v_read > 0.0)) throw DomainError("crossbar: v_read must be positive");
  params_.validate();
  const auto n = static_cast<std::size_t>(rows) * cols;
  plus_.assign(n, DeviceState::at_floor(params_));
  minus_.assign(n, DeviceState::at_floor(params_));
}

void CrossbarArray::check_index(int k, int j) const {
  if (k < 0 || k >= rows_ || j < 0 || j >= cols_)
    throw DimensionError("crossbar: index (" + std::to_string(k) + ", " + std::to_string(j) +
                         ") out of range");
}

double CrossbarArray::target_conductance(double w_magnitude) const {
  return params_.g_min + (w_magnitude / w_max_) * params_.range();
}

DeviceState CrossbarArray::program_device(DeviceState s, double g_target,
                                          const ProgrammingMode& mode, double now,
                                          Rng& rng) const {
  const DeviceParams& p = params_;
  if (mode.kind == ProgrammingMode::Kind::Iterative) {
    return program_iterative(p, s, g_target, mode.tol_fraction * p.range(), mode.max_iter, now,
                             rng)
        .state;
  }
  // Open loop: RESET, then the SET train the nominal staircase needs to reach
  // the target, finishing with one partial-amplitude pulse.
  s = apply_pulse(p, s, {Polarity::Reset, 1, 1.0}, now, rng);
  if (g_target <= p.g_min) return s;
  const double alpha = p.set_step_fraction;
  int n_full = 0;
  double g_nominal = p.g_min;
  if (alpha < 1.0) {
    const double gap = std::max(p.g_max - g_target, 0.0);
    const double k_real = std::log(gap / p.range()) / std::log1p(-alpha);
    n_full = std::isfinite(k_real) ? static_cast<int>(std::floor(k_real)) : 0;
    g_nominal = p.g_max - p.range() * std::pow(1.0 - alpha, n_full);
  } else {
    g_nominal = p.g_min;
  }
  if (n_full > 0) s = apply_pulse(p, s, {Polarity::Set, n_full, 1.0}, now, rng);
  const double headroom = alpha * (p.g_max - g_nominal);
  if (headroom > 0.0) {
    const double amplitude = (g_target - g_nominal) / headroom;
    if (amplitude > 1e-12) {
      s = apply_pulse(p, s, {Polarity::Set, 1, std::min(amplitude, 1.0 / alpha)}, now, rng);
    }
  }
  return s;
}

void CrossbarArray::program(const Eigen::MatrixXd& a, const ProgrammingMode& mode, double now,
                            Rng& rng) {
  if (a.rows() != rows_ || a.cols() != cols_)
    throw DimensionError("program_matrix: matrix is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", array is " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  if (a.size() > 0 && a.cwiseAbs().maxCoeff() > w_max_ * (1.0 + 1e-12))
    throw RangeError("program_matrix: |A| exceeds w_max; rescale before programming");
  if (now < now_) throw ClockError("program_matrix: time moves backwards");
  for (int k = 0; k < rows_; ++k) {
    for (int j = 0; j < cols_; ++j) {
      const double w = std::clamp(a(k, j), -w_max_, w_max_);
      const double g_active = target_conductance(std::abs(w));
      const std::size_t i = index(k, j);
      if (w >= 0.0) {
        plus_[i] = program_device(plus_[i], g_active, mode, now, rng);
        minus_[i] = program_device(minus_[i], params_.g_min, mode, now, rng);
      } else {
        plus_[i] = program_device(plus_[i], params_.g_min, mode, now, rng);
        minus_[i] = program_device(minus_[i], g_active, mode, now, rng);
      }
    }
  }
  now_ = now;
}

void CrossbarArray::program_entry(int k, int j, double w, const ProgrammingMode& mode, Rng& rng) {
  check_index(k, j);
  w = std::clamp(w, -w_max_, w_max_);
  const double g_active = target_conductance(std::abs(w));
  const std::size_t i = index(k, j);
  plus_[i] = program_device(plus_[i], w >= 0.0 ? g_active : params_.g_min, mode, now_, rng);
  minus_[i] = program_device(minus_[i], w >= 0.0 ? params_.g_min : g_active, mode, now_, rng);
}

double CrossbarArray::read_pair(std::size_t idx, Rng& rng, DriftCache& cache) const {
  const DeviceParams& p = params_;
  auto observe = [&](const DeviceState& s) {
    double g = s.g_programmed;
    if (p.drift_nu != 0.0 && s.t_last_program != now_) {
      if (s.t_last_program != cache.t || s.nu_scale != cache.nu_scale) {
        cache.t = s.t_last_program;
        cache.nu_scale = s.nu_scale;
        cache.factor = std::pow((now_ - cache.t + p.drift_t0) / p.drift_t0, -p.drift_nu * s.nu_scale);
      }
      g = std::clamp(g * cache.factor, p.g_min, p.g_max);
    }
    if (p.read_noise_rel != 0.0)
      g = std::clamp(g * (1.0 + p.read_noise_rel * standard_normal(rng)), p.g_min, p.g_max);
    return g;
  };
  const double gp = observe(plus_[idx]);
  const double gm = observe(minus_[idx]);
  return gp - gm;
}

Eigen::VectorXd CrossbarArray::mvm(const Eigen::VectorXd& x, Rng& rng) const {
  if (x.size() != cols_)
    throw DimensionError("mvm: input length " + std::to_string(x.size()) + " != cols " +
                         std::to_string(cols_));
  check_peak(x, "mvm");
  mvm_count_.add();
  Eigen::VectorXd current = Eigen::VectorXd::Zero(rows_);
  DriftCache cache;
  for (int k = 0; k < rows_; ++k) {
    double i_k = 0.0;
    for (int j = 0; j < cols_; ++j) {
      const double v = x[j] * v_read_;
      if (v == 0.0) continue;  // no voltage, no current
      i_k += read_pair(index(k, j), rng, cache) * v;
    }
    current[k] = i_k;
  }
  return current * (w_max_ / (v_read_ * params_.range()));
}

Eigen::VectorXd CrossbarArray::mvm_transpose(const Eigen::VectorXd& y, Rng& rng) const {
  if (y.size() != rows_)
    throw DimensionError("mvm_transpose: input length " + std::to_string(y.size()) +
                         " != rows " + std::to_string(rows_));
  check_peak(y, "mvm_transpose");
  mvm_count_.add();
  Eigen::VectorXd current = Eigen::VectorXd::Zero(cols_);
  DriftCache cache;
  for (int k = 0; k < rows_; ++k) {
    const double v = y[k] * v_read_;
    if (v == 0.0) continue;
    for (int j = 0; j < cols_; ++j) {
      current[j] += read_pair(index(k, j), rng, cache) * v;
    }
  }
  return current * (w_max_ / (v_read_ * params_.range()));
}

void CrossbarArray::advance_time(double dt) {
  if (!(dt >= 0.0)) throw DomainError("advance_time: dt must be non-negative");
  now_ += dt;
}

void CrossbarArray::pulse(int k, int j, PairSide side, const Pulse& p, Rng& rng) {
  check_index(k, j);
  auto& grid = side == PairSide::Plus ? plus_ : minus_;
  grid[index(k, j)] = apply_pulse(params_, grid[index(k, j)], p, now_, rng);
}

double CrossbarArray::decoded_weight(int k, int j) const {
  check_index(k, j);
  const std::size_t i = index(k, j);
  const double gp = drifted_conductance(params_, plus_[i], now_);
  const double gm = drifted_conductance(params_, minus_[i], now_);
  return (gp - gm) * w_max_ / params_.range();
}

Eigen::MatrixXd CrossbarArray::decoded_weights() const {
  Eigen::MatrixXd w(rows_, cols_);
  for (int k = 0; k < rows_; ++k)
    for (int j = 0; j < cols_; ++j) w(k, j) = decoded_weight(k, j);
  return w;
}

const DeviceState& CrossbarArray::device(int k, int j, PairSide side) const {
  check_index(k, j);
  return side == PairSide::Plus ? plus_[index(k, j)] : minus_[index(k, j)];
}

// ---------------------------------------------------------------------------

TiledMatrix::TiledMatrix(int n_rows, int n_cols, int tile_dim, const DeviceParams& params,
                         double w_max, double v_read)
    : n_rows_(n_rows), n_cols_(n_cols), tile_dim_(tile_dim) {
  if (n_rows < 1 || n_cols < 1) throw DomainError("tiled matrix: empty shape");
  if (tile_dim < 1 || tile_dim > kMaxArrayDim)
    throw DomainError("tiled matrix: tile_dim must lie in [1, " + std::to_string(kMaxArrayDim) +
                      "]");
  tile_h_ = std::min(tile_dim, n_rows);
  tile_w_ = std::min(tile_dim, n_cols);
  tile_rows_ = (n_rows + tile_h_ - 1) / tile_h_;
  tile_cols_ = (n_cols + tile_w_ - 1) / tile_w_;
  tiles_.reserve(static_cast<std::size_t>(tile_rows_) * tile_cols_);
  for (int t = 0; t < tile_rows_ * tile_cols_; ++t)
    tiles_.emplace_back(tile_h_, tile_w_, params, w_max, v_read);
}

CrossbarArray& TiledMatrix::tile_at(int i, int j, int& li, int& lj) {
  if (i < 0 || i >= n_rows_ || j < 0 || j >= n_cols_)
    throw DimensionError("tiled matrix: index out of range");
  li = i % tile_h_;
  lj = j % tile_w_;
  return tiles_[(i / tile_h_) * tile_cols_ + j / tile_w_];
}

const CrossbarArray& TiledMatrix::tile_at(int i, int j, int& li, int& lj) const {
  return const_cast<TiledMatrix*>(this)->tile_at(i, j, li, lj);
}

void TiledMatrix::program(const Eigen::MatrixXd& a, const ProgrammingMode& mode, double now,
                          Rng& rng) {
  if (a.rows() != n_rows_ || a.cols() != n_cols_)
    throw DimensionError("program_matrix: shape mismatch for tiled matrix");
  if (a.size() > 0 && a.cwiseAbs().maxCoeff() > w_max() * (1.0 + 1e-12))
    throw RangeError("program_matrix: |A| exceeds w_max; rescale before programming");
  Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(tile_rows_ * tile_h_, tile_cols_ * tile_w_);
  padded.topLeftCorner(n_rows_, n_cols_) = a;
  for (int tr = 0; tr < tile_rows_; ++tr)
    for (int tc = 0; tc < tile_cols_; ++tc)
      tiles_[tr * tile_cols_ + tc].program(padded.block(tr * tile_h_, tc * tile_w_, tile_h_, tile_w_),
                                           mode, now, rng);
}

void TiledMatrix::program_entry(int i, int j, double w, const ProgrammingMode& mode, Rng& rng) {
  int li = 0, lj = 0;
  tile_at(i, j, li, lj).program_entry(li, lj, w, mode, rng);
}

Eigen::VectorXd TiledMatrix::mvm(const Eigen::VectorXd& x, Rng& rng) const {
  if (x.size() != n_cols_)
    throw DimensionError("tiled_mvm: input length " + std::to_string(x.size()) + " != " +
                         std::to_string(n_cols_));
  mvm_count_.add();
  Eigen::VectorXd xp = Eigen::VectorXd::Zero(tile_cols_ * tile_w_);
  xp.head(n_cols_) = x;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(tile_rows_ * tile_h_);
  for (int tr = 0; tr < tile_rows_; ++tr)
    for (int tc = 0; tc < tile_cols_; ++tc)
      out.segment(tr * tile_h_, tile_h_) +=
          tiles_[tr * tile_cols_ + tc].mvm(xp.segment(tc * tile_w_, tile_w_), rng);
  return out.head(n_rows_);
}

Eigen::VectorXd TiledMatrix::mvm_transpose(const Eigen::VectorXd& y, Rng& rng) const {
  if (y.size() != n_rows_)
    throw DimensionError("tiled_mvm_transpose: input length " + std::to_string(y.size()) +
                         " != " + std::to_string(n_rows_));
  mvm_count_.add();
  Eigen::VectorXd yp = Eigen::VectorXd::Zero(tile_rows_ * tile_h_);
  yp.head(n_rows_) = y;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(tile_cols_ * tile_w_);
  for (int tr = 0; tr < tile_rows_; ++tr)
    for (int tc = 0; tc < tile_cols_; ++tc)
      out.segment(tc * tile_w_, tile_w_) +=
          tiles_[tr * tile_cols_ + tc].mvm_transpose(yp.segment(tr * tile_h_, tile_h_), rng);
  return out.head(n_cols_);
}

Eigen::VectorXd TiledMatrix::multiply(const Eigen::VectorXd& x, Rng& rng) const {
  const double peak = x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
  if (peak == 0.0) return mvm(x, rng);
  return peak * mvm(x / peak, rng);
}

Eigen::VectorXd TiledMatrix::multiply_transpose(const Eigen::VectorXd& y, Rng& rng) const {
  const double peak = y.size() > 0 ? y.cwiseAbs().maxCoeff() : 0.0;
  if (peak == 0.0) return mvm_transpose(y, rng);
  return peak * mvm_transpose(y / peak, rng);
}

void TiledMatrix::advance_time(double dt) {
  for (auto& t : tiles_) t.advance_time(dt);
}

void TiledMatrix::pulse(int i, int j, PairSide side, const Pulse& p, Rng& rng) {
  int li = 0, lj = 0;
  tile_at(i, j, li, lj).pulse(li, lj, side, p, rng);
}

const DeviceState& TiledMatrix::device(int i, int j, PairSide side) const {
  int li = 0, lj = 0;
  return tile_at(i, j, li, lj).device(li, lj, side);
}

double TiledMatrix::decoded_weight(int i, int j) const {
  int li = 0, lj = 0;
  return tile_at(i, j, li, lj).decoded_weight(li, lj);
}

Eigen::MatrixXd TiledMatrix::decoded_weights() const {
  Eigen::MatrixXd w(n_rows_, n_cols_);
  for (int i = 0; i < n_rows_; ++i)
    for (int j = 0; j < n_cols_; ++j) w(i, j) = decoded_weight(i, j);
  return w;
}

}  // namespace memsim

#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <vector>

#include "memsim/devices.hpp"
#include "memsim/rng.hpp"

namespace memsim {

/// Largest array edge that can be fabricated and operated reliably.
inline constexpr int kMaxArrayDim = 2048;

struct ProgrammingMode {
  enum class Kind { SingleShot, Iterative };
  Kind kind = Kind::Iterative;
  double tol_fraction = 0.005;  ///< verify tolerance as a fraction of g_max - g_min
  int max_iter = 100;

  static ProgrammingMode single_shot() { return {Kind::SingleShot, 0.0, 1}; }
  static ProgrammingMode iterative(double tol_fraction, int max_iter = 100) {
    return {Kind::Iterative, tol_fraction, max_iter};
  }
};

enum class PairSide : std::uint8_t { Plus, Minus };

/// Copyable event counter.
class Counter {
 public:
  Counter() = default;
  Counter(const Counter& o) : n_(o.get()) {}
  Counter& operator=(const Counter& o) {
    n_ = o.get();
    return *this;
  }
  void add(std::uint64_t k = 1) const { n_.fetch_add(k, std::memory_order_relaxed); }
  std::uint64_t get() const { return n_.load(std::memory_order_relaxed); }
  void reset() const { n_ = 0; }

 private:
  mutable std::atomic<std::uint64_t> n_{0};
};

/// rows x cols grid of differential device pairs. Entry (k, j) stores the
/// signed weight w = (G+ - G-) * w_max / (g_max - g_min); rows are outputs,
/// columns are inputs, so mvm computes b = A x with len(x) == cols.
///
/// The array keeps its own clock: programming sets it, advance_time moves it,
/// and every read uses it.
class CrossbarArray {
 public:
  CrossbarArray(int rows, int cols, const DeviceParams& params, double w_max = 1.0,
                double v_read = 0.2);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double w_max() const { return w_max_; }
  double v_read() const { return v_read_; }
  double now() const { return now_; }
  const DeviceParams& params() const { return params_; }

  /// Maps A linearly onto the pairs (one active device, the other parked at
  /// g_min) and programs every device at time `now`.
  void program(const Eigen::MatrixXd& a, const ProgrammingMode& mode, double now, Rng& rng);

  /// Reprograms a single pair to weight w at the array clock.
  void program_entry(int k, int j, double w, const ProgrammingMode& mode, Rng& rng);

  /// b_k = sum_j (G+_kj - G-_kj) V_j, rescaled to weight units. Requires max|x| <= 1.
  Eigen::VectorXd mvm(const Eigen::VectorXd& x, Rng& rng) const;
  /// Same physics with rows and columns exchanged. Requires max|y| <= 1.
  Eigen::VectorXd mvm_transpose(const Eigen::VectorXd& y, Rng& rng) const;

  /// Moves the read clock forward; conductances are not touched.
  void advance_time(double dt);

  /// Applies a pulse train to one device of pair (k, j) at the array clock.
  void pulse(int k, int j, PairSide side, const Pulse& p, Rng& rng);

  /// Noise-free decode at the array clock.
  double decoded_weight(int k, int j) const;
  Eigen::MatrixXd decoded_weights() const;

  const DeviceState& device(int k, int j, PairSide side) const;

  /// Number of analog products (mvm + mvm_transpose) performed so far.
  std::uint64_t mvm_count() const { return mvm_count_.get(); }

 private:
  std::size_t index(int k, int j) const { return static_cast<std::size_t>(k) * cols_ + j; }
  void check_index(int k, int j) const;
  double target_conductance(double w_magnitude) const;
  DeviceState program_device(DeviceState s, double g_target, const ProgrammingMode& mode,
                             double now, Rng& rng) const;
  /// Conductance difference of pair (k, j) as seen by one analog read.
  struct DriftCache {
    double t = -1.0;
    double nu_scale = -1.0;
    double factor = 1.0;
  };
  double read_pair(std::size_t idx, Rng& rng, DriftCache& cache) const;

  int rows_;
  int cols_;
  DeviceParams params_;
  double w_max_;
  double v_read_;
  double now_ = 0.0;
  std::vector<DeviceState> plus_;
  std::vector<DeviceState> minus_;
  Counter mvm_count_;
};

/// Matrix larger than one array, split into a grid of equally sized tiles.
/// Edge tiles are zero-padded; partial results are summed digitally and exactly.
class TiledMatrix {
 public:
  TiledMatrix(int n_rows, int n_cols, int tile_dim, const DeviceParams& params,
              double w_max = 1.0, double v_read = 0.2);

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  int tile_dim() const { return tile_dim_; }
  int tile_rows() const { return tile_rows_; }
  int tile_cols() const { return tile_cols_; }
  double w_max() const { return tiles_.front().w_max(); }
  double now() const { return tiles_.front().now(); }
  const DeviceParams& params() const { return tiles_.front().params(); }
  const CrossbarArray& tile(int tr, int tc) const { return tiles_[tr * tile_cols_ + tc]; }

  void program(const Eigen::MatrixXd& a, const ProgrammingMode& mode, double now, Rng& rng);
  void program_entry(int i, int j, double w, const ProgrammingMode& mode, Rng& rng);

  /// Analog product; requires max|x| <= 1 and len(x) == n_cols.
  Eigen::VectorXd mvm(const Eigen::VectorXd& x, Rng& rng) const;
  Eigen::VectorXd mvm_transpose(const Eigen::VectorXd& y, Rng& rng) const;

  /// Analog product on an arbitrary-amplitude input: the input is scaled to
  /// unit peak amplitude before it reaches the rows and the result is scaled
  /// back digitally. Still exactly one analog pass.
  Eigen::VectorXd multiply(const Eigen::VectorXd& x, Rng& rng) const;
  Eigen::VectorXd multiply_transpose(const Eigen::VectorXd& y, Rng& rng) const;

  void advance_time(double dt);
  void pulse(int i, int j, PairSide side, const Pulse& p, Rng& rng);
  const DeviceState& device(int i, int j, PairSide side) const;

  double decoded_weight(int i, int j) const;
  Eigen::MatrixXd decoded_weights() const;

  /// Tiled products performed (one per mvm/mvm_transpose call, whatever the tile count).
  std::uint64_t mvm_count() const { return mvm_count_.get(); }

 private:
  CrossbarArray& tile_at(int i, int j, int& li, int& lj);
  const CrossbarArray& tile_at(int i, int j, int& li, int& lj) const;

  int n_rows_;
  int n_cols_;
  int tile_dim_;
  int tile_rows_;
  int tile_cols_;
  int tile_h_;
  int tile_w_;
  std::vector<CrossbarArray> tiles_;
  Counter mvm_count_;
};

}  // namespace memsim

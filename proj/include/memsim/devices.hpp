#pragma once

#include <cstdint>

#include "memsim/rng.hpp"

namespace memsim {

/// Phenomenological parameters of an analog non-volatile memory cell.
///
/// SET is gradual and saturating (each pulse closes a fraction `set_step_fraction`
/// of the gap to g_max), RESET is abrupt (back to g_min), programming and read
/// noise are multiplicative Gaussian, and the programmed conductance drifts as a
/// power law of the time since programming. Conductances are in microsiemens,
/// times in seconds. The defaults are order-of-magnitude PCM placeholders, not
/// measured values.
struct DeviceParams {
  double g_min = 0.1;
  double g_max = 25.0;
  double set_step_fraction = 0.05;  ///< alpha, per-pulse gain in (0, 1]
  double prog_noise_rel = 0.1;
  double read_noise_rel = 0.02;
  double drift_nu = 0.05;
  double drift_t0 = 1.0;
  double drift_nu_cv = 0.0;  ///< device-to-device spread of nu, relative; redrawn at each programming
  double kappa_reset = 0.5;  ///< scale of the (one-sided) RESET noise

  double range() const { return g_max - g_min; }

  /// Throws DomainError when an invariant is violated.
  void validate() const;

  /// Noise-free, drift-free cell with the default conductance window.
  static DeviceParams ideal();
};

/// One programmed cell. Drift is evaluated lazily at read time from the pair
/// (g_programmed, t_last_program), so reads never mutate the state.
struct DeviceState {
  double g_programmed = 0.0;
  double t_last_program = 0.0;
  double nu_scale = 1.0;  ///< this device's drift exponent is drift_nu * nu_scale

  /// Freshly RESET cell at time `t`.
  static DeviceState at_floor(const DeviceParams& p, double t = 0.0) { return {p.g_min, t}; }
};

enum class Polarity : std::uint8_t { Set, Reset };

/// A train of `count` identical pulses. `amplitude` scales the SET gain
/// (amplitude * alpha <= 1) so programmers can issue partial or strong
/// corrective pulses; it has no effect on RESET.
struct Pulse {
  Polarity polarity = Polarity::Set;
  int count = 1;
  double amplitude = 1.0;
};

/// Noise-free conductance of `state` observed at time `now` (drift applied, clamped).
double drifted_conductance(const DeviceParams& p, const DeviceState& state, double now);

/// Applies a pulse train at time `now`. Throws ClockError if now < t_last_program.
DeviceState apply_pulse(const DeviceParams& p, DeviceState state, const Pulse& pulse, double now,
                        Rng& rng);

/// Noisy, drifted read. Throws ClockError if now < t_last_program.
double read(const DeviceParams& p, const DeviceState& state, double now, Rng& rng);

struct ProgramResult {
  DeviceState state;
  double achieved = 0.0;  ///< last verify read
  int iterations = 0;     ///< equals max_iter when the loop did not converge
};

/// Closed-loop program-and-verify. Each iteration reads the cell; within
/// `tol` of the target it stops, below target it issues one SET pulse whose
/// amplitude is sized from the nominal device response, and above target it
/// RESETs and starts climbing again.
ProgramResult program_iterative(const DeviceParams& p, DeviceState state, double g_target,
                                double tol, int max_iter, double now, Rng& rng);

/// Volatile cell used as a reservoir node: relaxes to g_min with time constant
/// `decay_tau` and is driven towards g_max by |input|.
struct VolatileDeviceState {
  double g = 0.1;
  double decay_tau = 1.0;
  double drive_gain = 1.0;  ///< beta, 1/(V s)
  DeviceParams params{};
};

/// One explicit Euler step of length dt (> 0). Deterministic.
VolatileDeviceState volatile_step(VolatileDeviceState state, double input, double dt);

}  // namespace memsim

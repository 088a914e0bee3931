#include "memsim/devices.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memsim/errors.hpp"

namespace memsim {
namespace {

double clamp_g(const DeviceParams& p, double g) { return std::clamp(g, p.g_min, p.g_max); }

void check_clock(const DeviceState& s, double now) {
  if (now < s.t_last_program) {
    throw ClockError("device accessed at t=" + std::to_string(now) +
                     " before its last programming event at t=" +
                     std::to_string(s.t_last_program));
  }
}

}  // namespace

void DeviceParams::validate() const {
  if (!(g_min > 0.0 && g_min < g_max)) throw DomainError("device: require 0 < g_min < g_max");
  if (!(set_step_fraction > 0.0 && set_step_fraction <= 1.0))
    throw DomainError("device: set_step_fraction must lie in (0, 1]");
  if (!(prog_noise_rel >= 0.0) || !(read_noise_rel >= 0.0))
    throw DomainError("device: noise levels must be non-negative");
  if (!(drift_nu >= 0.0)) throw DomainError("device: drift_nu must be non-negative");
  if (!(drift_t0 > 0.0)) throw DomainError("device: drift_t0 must be positive");
  if (!(drift_nu_cv >= 0.0)) throw DomainError("device: drift_nu_cv must be non-negative");
  if (!(kappa_reset >= 0.0)) throw DomainError("device: kappa_reset must be non-negative");
}

DeviceParams DeviceParams::ideal() {
  DeviceParams p;
  p.prog_noise_rel = 0.0;
  p.read_noise_rel = 0.0;
  p.drift_nu = 0.0;
  return p;
}

double drifted_conductance(const DeviceParams& p, const DeviceState& state, double now) {
  const double elapsed = now - state.t_last_program;
  if (p.drift_nu == 0.0 || elapsed == 0.0) return state.g_programmed;
  const double factor = std::pow((elapsed + p.drift_t0) / p.drift_t0, -p.drift_nu * state.nu_scale);
  return clamp_g(p, state.g_programmed * factor);
}

DeviceState apply_pulse(const DeviceParams& p, DeviceState state, const Pulse& pulse, double now,
                        Rng& rng) {
  check_clock(state, now);
  if (pulse.count < 1) throw DomainError("pulse count must be >= 1");
  if (!(pulse.amplitude > 0.0 && pulse.amplitude * p.set_step_fraction <= 1.0 + 1e-12))
    throw DomainError("pulse amplitude must be positive with amplitude * alpha <= 1");

  double g = drifted_conductance(p, state, now);
  for (int i = 0; i < pulse.count; ++i) {
    if (pulse.polarity == Polarity::Set) {
      const double eta = p.prog_noise_rel > 0.0 ? p.prog_noise_rel * standard_normal(rng) : 0.0;
      const double gain = std::min(1.0, pulse.amplitude * p.set_step_fraction);
      g = clamp_g(p, g + gain * (p.g_max - g) * (1.0 + eta));
    } else {
      const double z = p.prog_noise_rel > 0.0 ? std::abs(standard_normal(rng)) : 0.0;
      g = clamp_g(p, p.g_min * (1.0 + z * p.prog_noise_rel * p.kappa_reset));
    }
  }
  state.g_programmed = g;
  state.t_last_program = now;
  if (p.drift_nu_cv > 0.0) state.nu_scale = std::max(0.0, 1.0 + p.drift_nu_cv * standard_normal(rng));
  return state;
}

double read(const DeviceParams& p, const DeviceState& state, double now, Rng& rng) {
  check_clock(state, now);
  const double g = drifted_conductance(p, state, now);
  if (p.read_noise_rel == 0.0) return g;
  return clamp_g(p, g * (1.0 + p.read_noise_rel * standard_normal(rng)));
}

ProgramResult program_iterative(const DeviceParams& p, DeviceState state, double g_target,
                                double tol, int max_iter, double now, Rng& rng) {
  if (g_target < p.g_min || g_target > p.g_max)
    throw DomainError("program_iterative: target " + std::to_string(g_target) +
                      " outside [g_min, g_max]");
  if (!(tol > 0.0)) throw DomainError("program_iterative: tol must be positive");
  if (max_iter < 1) throw DomainError("program_iterative: max_iter must be >= 1");

  double r = 0.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    r = read(p, state, now, rng);
    if (std::abs(r - g_target) <= tol) return {state, r, iter};
    if (iter == max_iter) break;
    if (r < g_target) {
      const double headroom = p.set_step_fraction * (p.g_max - r);
      double amplitude = headroom > 0.0 ? (g_target - r) / headroom : 1.0;
      amplitude = std::clamp(amplitude, 1e-9, 1.0 / p.set_step_fraction);
      state = apply_pulse(p, state, {Polarity::Set, 1, amplitude}, now, rng);
    } else {
      state = apply_pulse(p, state, {Polarity::Reset, 1, 1.0}, now, rng);
    }
  }
  return {state, r, max_iter};
}

VolatileDeviceState volatile_step(VolatileDeviceState state, double input, double dt) {
  if (!(dt > 0.0)) throw DomainError("volatile_step: dt must be positive");
  const DeviceParams& p = state.params;
  const double dg = -(state.g - p.g_min) / state.decay_tau +
                    state.drive_gain * std::abs(input) * (p.g_max - state.g);
  state.g = clamp_g(p, state.g + dt * dg);
  return state;
}

}  // namespace memsim

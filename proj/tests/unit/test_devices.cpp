#include <cmath>
#include <vector>

#include "doctest.h"
#include "memsim/devices.hpp"
#include "memsim/errors.hpp"

using namespace memsim;

namespace {

DeviceParams noiseless(double g_min, double g_max, double alpha) {
  DeviceParams p = DeviceParams::ideal();
  p.g_min = g_min;
  p.g_max = g_max;
  p.set_step_fraction = alpha;
  return p;
}

}  // namespace

TEST_CASE("SET at g_max is a fixed point") {
  auto p = noiseless(1.0, 11.0, 0.1);
  Rng rng(1);
  DeviceState s{p.g_max, 0.0};
  s = apply_pulse(p, s, {Polarity::Set, 1}, 0.0, rng);
  CHECK(s.g_programmed == p.g_max);
}

TEST_CASE("single noiseless SET from g_min") {
  auto p = noiseless(1.0, 11.0, 0.1);
  Rng rng(1);
  auto s = apply_pulse(p, DeviceState::at_floor(p), {Polarity::Set, 1}, 0.0, rng);
  CHECK(s.g_programmed == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("SET staircase matches the accumulative closed form") {
  auto p = noiseless(1.0, 11.0, 0.1);
  Rng rng(1);
  DeviceState s = DeviceState::at_floor(p);
  double prev = s.g_programmed;
  for (int k = 1; k <= 20; ++k) {
    s = apply_pulse(p, s, {Polarity::Set, 1}, 0.0, rng);
    const double closed = p.g_max - (p.g_max - p.g_min) * std::pow(1.0 - 0.1, k);
    CHECK(s.g_programmed > prev);
    CHECK(std::abs(s.g_programmed - closed) <= 1e-12 * closed);
    prev = s.g_programmed;
  }
  // same staircase issued as a single train of 20 pulses
  auto t = apply_pulse(p, DeviceState::at_floor(p), {Polarity::Set, 20}, 0.0, rng);
  CHECK(t.g_programmed == s.g_programmed);
}

TEST_CASE("accumulative closed form from arbitrary starting points") {
  Rng gen(42);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = noiseless(0.1 + uniform01(gen), 20.0 + 10.0 * uniform01(gen), 0.01 + 0.5 * uniform01(gen));
    const double g0 = p.g_min + uniform01(gen) * p.range();
    const int k = 1 + static_cast<int>(uniform01(gen) * 30);
    auto s = apply_pulse(p, DeviceState{g0, 0.0}, {Polarity::Set, k}, 0.0, gen);
    const double closed = p.g_max - (p.g_max - g0) * std::pow(1.0 - p.set_step_fraction, k);
    CHECK(std::abs(s.g_programmed - closed) <= 1e-12 * closed);
  }
}

TEST_CASE("noiseless RESET returns to g_min") {
  auto p = noiseless(1.0, 11.0, 0.1);
  Rng rng(3);
  auto s = apply_pulse(p, DeviceState{7.3, 0.0}, {Polarity::Reset, 1}, 0.0, rng);
  CHECK(s.g_programmed == p.g_min);
}

TEST_CASE("noisy RESET lands at or just above g_min") {
  DeviceParams p;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto s = apply_pulse(p, DeviceState{20.0, 0.0}, {Polarity::Reset, 1}, 0.0, rng);
    CHECK(s.g_programmed >= p.g_min);
    CHECK(s.g_programmed < p.g_min * 2.0);
  }
}

TEST_CASE("pulses and reads reject a clock running backwards") {
  DeviceParams p;
  Rng rng(1);
  DeviceState s{5.0, 10.0};
  CHECK_THROWS_AS(apply_pulse(p, s, {Polarity::Set, 1}, 9.0, rng), ClockError);
  CHECK_THROWS_AS(read(p, s, 9.0, rng), ClockError);
  auto t = apply_pulse(p, s, {Polarity::Set, 1}, 12.0, rng);
  CHECK(t.t_last_program == 12.0);
}

TEST_CASE("read: zero elapsed time and zero drift return the programmed value") {
  DeviceParams p = DeviceParams::ideal();
  p.drift_nu = 0.3;
  Rng rng(1);
  DeviceState s{10.0, 4.0};
  CHECK(read(p, s, 4.0, rng) == 10.0);
  p.drift_nu = 0.0;
  CHECK(read(p, s, 1e6, rng) == 10.0);
}

TEST_CASE("read: power-law drift after nine reference times") {
  DeviceParams p = DeviceParams::ideal();
  p.drift_nu = 0.05;
  p.drift_t0 = 2.0;
  Rng rng(1);
  DeviceState s{10.0, 1.0};
  const double expected = 10.0 * std::pow(10.0, -0.05);  // 8.9125...
  CHECK(read(p, s, 1.0 + 9.0 * p.drift_t0, rng) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(8.913).epsilon(1e-4));
}

TEST_CASE("drift is monotone non-increasing in time") {
  DeviceParams p = DeviceParams::ideal();
  p.drift_nu = 0.07;
  Rng rng(1);
  DeviceState s{18.0, 0.0};
  double prev = read(p, s, 0.0, rng);
  for (double t = 0.5; t < 1e5; t *= 1.7) {
    const double r = read(p, s, t, rng);
    CHECK(r <= prev);
    prev = r;
  }
}

TEST_CASE("read does not mutate the device") {
  DeviceParams p;
  Rng rng(5);
  const DeviceState s{12.0, 0.0};
  DeviceState copy = s;
  for (int i = 0; i < 10; ++i) (void)read(p, copy, 100.0, rng);
  CHECK(copy.g_programmed == s.g_programmed);
  CHECK(copy.t_last_program == s.t_last_program);
}

TEST_CASE("iterative programming to the floor needs at most two iterations") {
  DeviceParams p;
  p.read_noise_rel = 0.0;
  Rng rng(9);
  for (double tol : {0.05, 0.5, 2.0}) {
    auto res = program_iterative(p, DeviceState{17.0, 0.0}, p.g_min, tol, 20, 0.0, rng);
    CHECK(res.iterations <= 2);
    CHECK(std::abs(res.achieved - p.g_min) <= tol);
  }
}

TEST_CASE("noiseless iterative programming meets the staircase bound") {
  auto p = noiseless(1.0, 11.0, 0.1);
  const double tol = 0.01 * p.range();
  const int bound =
      static_cast<int>(std::ceil(std::log(tol / p.range()) / std::log(1.0 - 0.1))) + 1;
  Rng rng(1);
  for (double frac : {0.25, 0.5, 0.6, 0.75}) {
    const double target = p.g_min + frac * p.range();
    auto res = program_iterative(p, DeviceState::at_floor(p), target, tol, 1000, 0.0, rng);
    CHECK(std::abs(res.achieved - target) <= tol);
    CHECK(res.iterations <= bound);
  }
}

TEST_CASE("iterative programming rejects targets outside the window") {
  DeviceParams p;
  Rng rng(1);
  CHECK_THROWS_AS(program_iterative(p, DeviceState::at_floor(p), p.g_max + 1, 0.1, 10, 0, rng),
                  DomainError);
  CHECK_THROWS_AS(program_iterative(p, DeviceState::at_floor(p), 0.0, 0.1, 10, 0, rng),
                  DomainError);
}

TEST_CASE("iterative programming spread over 1000 noisy devices") {
  DeviceParams p;
  p.prog_noise_rel = 0.05;
  const double tol = 0.01 * p.range();
  const double target = p.g_min + 0.4 * p.range();
  Rng rng(77);
  std::vector<double> achieved;
  int not_converged = 0;
  for (int d = 0; d < 1000; ++d) {
    auto res = program_iterative(p, DeviceState::at_floor(p), target, tol, 100, 0.0, rng);
    achieved.push_back(res.achieved);
    if (std::abs(res.achieved - target) > tol) ++not_converged;
  }
  double mean = 0.0;
  for (double a : achieved) mean += a;
  mean /= achieved.size();
  double var = 0.0;
  for (double a : achieved) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / (achieved.size() - 1));
  CHECK(sd <= 1.5 * tol);
  CHECK(not_converged == 0);
}

TEST_CASE("property: conductance stays within the window under random pulse sequences") {
  Rng gen(2024);
  for (int trial = 0; trial < 100; ++trial) {
    DeviceParams p;
    p.prog_noise_rel = 0.5 * uniform01(gen);
    p.read_noise_rel = 0.2 * uniform01(gen);
    p.set_step_fraction = 0.01 + 0.99 * uniform01(gen);
    DeviceState s = DeviceState::at_floor(p);
    double t = 0.0;
    for (int step = 0; step < 50; ++step) {
      t += uniform01(gen) * 10.0;
      Pulse pulse{uniform01(gen) < 0.7 ? Polarity::Set : Polarity::Reset,
                  1 + static_cast<int>(uniform01(gen) * 5), 0.05 + 0.95 * uniform01(gen)};
      s = apply_pulse(p, s, pulse, t, gen);
      REQUIRE(s.g_programmed >= p.g_min);
      REQUIRE(s.g_programmed <= p.g_max);
      const double r = read(p, s, t + uniform01(gen) * 100.0, gen);
      REQUIRE(r >= p.g_min);
      REQUIRE(r <= p.g_max);
    }
  }
}

TEST_CASE("property: noiseless SET is strictly increasing below g_max") {
  Rng gen(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = noiseless(0.1, 25.0, 0.01 + 0.5 * uniform01(gen));
    DeviceState s{p.g_min + uniform01(gen) * (p.range() - 1.0), 0.0};
    auto t = apply_pulse(p, s, {Polarity::Set, 1}, 0.0, gen);
    CHECK(t.g_programmed > s.g_programmed);
  }
}

TEST_CASE("identical seeds give bit-identical trajectories") {
  DeviceParams p;
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> trace;
    DeviceState s = DeviceState::at_floor(p);
    for (int i = 0; i < 100; ++i) {
      s = apply_pulse(p, s, {i % 7 == 6 ? Polarity::Reset : Polarity::Set, 1}, i, rng);
      trace.push_back(s.g_programmed);
      trace.push_back(read(p, s, i + 0.5, rng));
    }
    return trace;
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("volatile node: rest state and pure decay") {
  VolatileDeviceState v;
  v.g = v.params.g_min;
  CHECK(volatile_step(v, 0.0, 0.01).g == v.params.g_min);
  v.g = 10.0;
  double prev = v.g;
  for (int i = 0; i < 100; ++i) {
    v = volatile_step(v, 0.0, 0.05);
    CHECK(v.g < prev);
    CHECK(v.g >= v.params.g_min);
    prev = v.g;
  }
  CHECK_THROWS_AS(volatile_step(v, 0.0, 0.0), DomainError);
}

TEST_CASE("volatile node: Euler at tau/100 tracks a fine-step reference") {
  VolatileDeviceState v;
  v.decay_tau = 2.0;
  v.drive_gain = 0.05;
  v.g = v.params.g_min;
  const double u = 1.5;
  auto integrate = [&](double dt) {
    VolatileDeviceState s = v;
    const int steps = static_cast<int>(std::lround(5.0 * v.decay_tau / dt));
    for (int i = 0; i < steps; ++i) s = volatile_step(s, u, dt);
    return s.g;
  };
  const double fine = integrate(v.decay_tau / 1e4);
  const double coarse = integrate(v.decay_tau / 100.0);
  CHECK(std::abs(coarse - fine) / fine < 0.02);
}

TEST_CASE("device-to-device drift spread") {
  DeviceParams p = DeviceParams::ideal();
  p.drift_nu = 0.05;
  p.drift_nu_cv = 0.3;
  Rng rng(77);
  double lo = 1e9, hi = 0, sum = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    DeviceState s = apply_pulse(p, DeviceState::at_floor(p), {Polarity::Set, 3}, 0.0, rng);
    CHECK(s.nu_scale >= 0.0);
    lo = std::min(lo, s.nu_scale);
    hi = std::max(hi, s.nu_scale);
    sum += s.nu_scale;
    const double want = s.g_programmed * std::pow(101.0, -0.05 * s.nu_scale);
    CHECK(drifted_conductance(p, s, 100.0) == doctest::Approx(std::max(want, p.g_min)));
  }
  CHECK(sum / n == doctest::Approx(1.0).epsilon(0.03));
  CHECK(hi - lo > 1.0);

  p.drift_nu = 0.0;
  DeviceState s = apply_pulse(p, DeviceState::at_floor(p), {Polarity::Set, 3}, 0.0, rng);
  CHECK(drifted_conductance(p, s, 1e4) == s.g_programmed);
  p.drift_nu_cv = -0.1;
  CHECK_THROWS_AS(p.validate(), DomainError);
}

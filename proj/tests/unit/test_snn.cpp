#include <cmath>

#include "doctest.h"
#include "memsim/errors.hpp"
#include "memsim/snn.hpp"

using namespace memsim;
using namespace memsim::snn;

TEST_CASE("lif decays without input") {
  LifNeuron n{0.8, 1.0, 0.0, 0.9};
  for (int t = 0; t < 50; ++t) {
    double before = n.v;
    CHECK_FALSE(lif_step(n, 0.0));
    CHECK(n.v == doctest::Approx(0.9 * before));
  }
}

TEST_CASE("lif period under constant drive") {
  const double lambda = 0.8, input = 0.3, thresh = 1.0;
  // smallest k with I (1 - lambda^k) / (1 - lambda) >= thresh
  int k = 1;
  while (input * (1 - std::pow(lambda, k)) / (1 - lambda) < thresh) ++k;
  LifNeuron n{0.0, thresh, 0.0, lambda};
  std::vector<int> spikes;
  for (int t = 1; t <= 60; ++t)
    if (lif_step(n, input)) spikes.push_back(t);
  REQUIRE(spikes.size() >= 3);
  CHECK(spikes[0] == k);
  for (std::size_t i = 1; i < spikes.size(); ++i) CHECK(spikes[i] - spikes[i - 1] == k);
}

TEST_CASE("lif threshold is inclusive and never left above threshold") {
  LifNeuron n{0.0, 1.0, -0.2, 0.5};
  CHECK(lif_step(n, 1.0));
  CHECK(n.v == -0.2);
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    lif_step(n, 2.0 * uniform01(rng));
    CHECK(n.v < n.v_thresh);
  }
  CHECK_THROWS_AS((LifNeuron{0, 1, 1, 0.5}.validate()), DomainError);
  CHECK_THROWS_AS((LifNeuron{0, 1, 0, 1.0}.validate()), DomainError);
}

TEST_CASE("rate encoding") {
  Rng rng(2);
  auto r = encode_rate({0.0, 1.0, 0.25}, 10000, rng);
  CHECK(r.count_unit(0) == 0);
  CHECK(r.count_unit(1) == 10000);
  // 3 sigma binomial bound
  CHECK(std::abs(r.count_unit(2) / 1e4 - 0.25) <= 3 * std::sqrt(0.25 * 0.75 / 1e4));
  Rng a(3), b(3);
  auto ra = encode_rate({0.4, 0.6}, 50, a), rb = encode_rate({0.4, 0.6}, 50, b);
  for (int u = 0; u < 2; ++u)
    for (int t = 0; t < 50; ++t) CHECK(ra.at(u, t) == rb.at(u, t));
  CHECK_THROWS_AS(encode_rate({1.2}, 10, rng), DomainError);
}

TEST_CASE("gaussian receptive fields") {
  auto r = encode_grf({0.5}, 3, 10, 0.5);
  CHECK(r.n_units() == 3);
  CHECK(r.spike_times(0) == std::vector<int>{4});
  CHECK(r.spike_times(1) == std::vector<int>{0});
  CHECK(r.spike_times(2) == std::vector<int>{4});

  auto peak = encode_grf({0.0, 1.0}, 5, 8, 0.1);
  CHECK(peak.spike_times(0) == std::vector<int>{0});
  CHECK(peak.spike_times(9) == std::vector<int>{0});

  // narrow fields far from the value fall under the cutoff
  auto sparse = encode_grf({0.5}, 2, 10, 0.05);
  CHECK(sparse.count() == 0);
  CHECK_THROWS_AS(encode_grf({-0.1}, 3, 10, 0.5), DomainError);
  CHECK_THROWS_AS(encode_grf({0.1}, 1, 10, 0.5), DomainError);
}

TEST_CASE("synapse reads") {
  DeviceParams p = DeviceParams::ideal();
  MultiMemristiveSynapse one(1, 3.0);
  Rng rng(4);
  CHECK(synapse_read(one, p, 0.0, rng) == read(p, one.devices[0], 0.0, rng));
  MultiMemristiveSynapse floor(4, p.g_min);
  CHECK(synapse_read(floor, p, 0.0, rng) == doctest::Approx(4 * p.g_min));

  DeviceParams noisy;
  MultiMemristiveSynapse seven(7, 1.0);
  Rng init(5);
  for (auto& d : seven.devices) d.g_programmed = p.g_min + uniform01(init) * p.range();
  Rng r1(6), r2(6);
  double want = 0;
  for (const auto& d : seven.devices) want += read(noisy, d, 2.0, r2);
  CHECK(synapse_read(seven, noisy, 2.0, r1) == doctest::Approx(want));
}

TEST_CASE("arbitration round robin") {
  DeviceParams p = DeviceParams::ideal();
  MultiMemristiveSynapse s(3, p.g_min);
  Arbiter arb(3);
  Rng rng(7);
  std::vector<int> picks;
  for (int i = 0; i < 6; ++i) {
    picks.push_back(arb.counter());
    synapse_program(s, arb, p, Direction::Potentiate, 1, 0.0, rng);
  }
  CHECK(picks == std::vector<int>{0, 1, 2, 0, 1, 2});
  // two identical SET pulses per device
  const double two = p.g_max - (p.g_max - p.g_min) * std::pow(1 - p.set_step_fraction, 2);
  for (const auto& d : s.devices) CHECK(d.g_programmed == doctest::Approx(two));

  MultiMemristiveSynapse single(1, 5.0);
  Arbiter a1(1);
  for (int i = 0; i < 4; ++i) {
    CHECK(arb.n_devices() == 3);
    CHECK(a1.select() == 0);
  }
  synapse_program(single, a1, p, Direction::Depress, 1, 0.0, rng);
  CHECK(single.devices[0].g_programmed == p.g_min);

  // a shared arbiter keeps counting across synapses
  Arbiter shared(2);
  MultiMemristiveSynapse x(2, p.g_min), y(2, p.g_min);
  synapse_program(x, shared, p, Direction::Potentiate, 1, 0.0, rng);
  synapse_program(y, shared, p, Direction::Potentiate, 1, 0.0, rng);
  CHECK(x.devices[0].g_programmed > p.g_min);
  CHECK(y.devices[1].g_programmed > p.g_min);
  CHECK(y.devices[0].g_programmed == p.g_min);
  CHECK_THROWS_AS(synapse_program(x, a1, p, Direction::Depress, 1, 0.0, rng), DimensionError);
}

TEST_CASE("stdp rule") {
  StdpRule rule{4, 1, 1};
  SpikeRaster pre(1, 20), post(1, 20);
  pre.set(0, 5);
  post.set(0, 7);
  auto d = stdp_decide(rule, pre, 0, post, 0, 7);
  CHECK(d.potentiate);
  CHECK_FALSE(d.depress);

  SpikeRaster lone(1, 20), quiet(1, 20);
  lone.set(0, 9);
  d = stdp_decide(rule, lone, 0, quiet, 0, 9);
  CHECK(d.depress);
  CHECK_FALSE(d.potentiate);

  DeviceParams p = DeviceParams::ideal();
  MultiMemristiveSynapse s(2, 10.0);
  Arbiter arb(2);
  Rng rng(8);
  for (int t = 0; t < 20; ++t) stdp_update(rule, quiet, 0, quiet, 0, t, s, arb, p, 0.0, rng);
  CHECK(s.devices[0].g_programmed == 10.0);
  CHECK(s.devices[1].g_programmed == 10.0);

  // sign property
  double g0 = synapse_conductance(s, p, 0.0);
  stdp_update(rule, pre, 0, post, 0, 7, s, arb, p, 0.0, rng);
  double g1 = synapse_conductance(s, p, 0.0);
  CHECK(g1 >= g0);
  stdp_update(rule, lone, 0, quiet, 0, 9, s, arb, p, 0.0, rng);
  CHECK(synapse_conductance(s, p, 0.0) <= g1);
}

TEST_CASE("spike propagation through the crossbar") {
  DeviceParams p = DeviceParams::ideal();
  CrossbarArray xbar(2, 3, p, 1.0, 0.2);
  Eigen::MatrixXd w(2, 3);
  w << 0.5, -0.25, 1.0, 0.0, 0.75, -1.0;
  Rng rng(9);
  xbar.program(w, ProgrammingMode::single_shot(), 0.0, rng);
  auto i = spike_currents(xbar, {1, 0, 1}, rng);
  // I_k = sum_j (G+ - G-) V_j with V = v_read on spiking columns
  for (int k = 0; k < 2; ++k) {
    double want = 0;
    for (int j : {0, 2}) {
      double gp = xbar.device(k, j, PairSide::Plus).g_programmed;
      double gm = xbar.device(k, j, PairSide::Minus).g_programmed;
      want += (gp - gm) * 0.2;
    }
    CHECK(i[k] == doctest::Approx(want));
  }
  CHECK_THROWS_AS(spike_currents(xbar, {1, 0}, rng), DimensionError);
}

TEST_CASE("correlation experiment") {
  CorrelationConfig cfg;
  cfg.steps = 3000;
  auto a = correlation_experiment(cfg, 11), b = correlation_experiment(cfg, 11);
  CHECK(a.final_conductance == b.final_conductance);
  CHECK(a.n_correlated == 100);
  CHECK(a.d > 1.0);
  std::int64_t total = 0;
  for (auto c : a.hist_corr.counts) total += c;
  CHECK(total == 100);

  cfg.corr_c = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) CHECK(std::abs(correlation_experiment(cfg, seed).d) < 0.5);

  cfg.frac_correlated = 1.0;
  CHECK_THROWS_AS(correlation_experiment(cfg, 1), DomainError);
}

TEST_CASE("efficiency predicate") {
  auto v = snn_efficiency_favorable({1.0, 4.0, 0.01, 100.0});
  CHECK(v.favorable);
  CHECK(v.margin == doctest::Approx(3.0));
  v = snn_efficiency_favorable({1.0, 4.0, 1.0, 4.0});
  CHECK_FALSE(v.favorable);
  CHECK(v.margin == 0.0);
  v = snn_efficiency_favorable({1.0, 4.0, 0.0, 1000.0});
  CHECK(v.favorable);
  CHECK(v.margin == 4.0);
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    EfficiencyModel m{0.1 + uniform01(rng), 0.1 + 4 * uniform01(rng), uniform01(rng), 1 + 50 * uniform01(rng)};
    double k = 0.01 + 100 * uniform01(rng);
    EfficiencyModel scaled{m.c_add * k, m.c_mul * k, m.p, m.ratio_t_dt};
    CHECK(snn_efficiency_favorable(m).favorable == snn_efficiency_favorable(scaled).favorable);
  }
  CHECK_THROWS_AS(snn_efficiency_favorable({0.0, 1.0, 0.5, 2.0}), DomainError);
}

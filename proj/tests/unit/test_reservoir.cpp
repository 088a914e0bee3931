#include <cmath>

#include "doctest.h"
#include "memsim/errors.hpp"
#include "memsim/reservoir.hpp"

using namespace memsim;
using namespace memsim::reservoir;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Largest eigenvalue modulus by power iteration on M^T M of M^k, used as an
// independent check of the dense eigensolver.
double power_radius(const MatrixXd& m) {
  const int k = 400;
  VectorXd v = VectorXd::Ones(m.rows()).normalized();
  double log_growth = 0;
  for (int i = 0; i < k; ++i) {
    v = m * v;
    double n = v.norm();
    log_growth += std::log(n);
    v /= n;
  }
  return std::exp(log_growth / k);
}

ReservoirConfig small(double rho = 0.9) {
  ReservoirConfig c;
  c.n_nodes = 50;
  c.rho = rho;
  return c;
}

}  // namespace

TEST_CASE("recurrent matrix is scaled to the requested spectral radius") {
  for (double rho : {0.5, 0.9, 1.5}) {
    Rng rng(1);
    Reservoir res(small(rho), rng);
    CHECK(std::abs(spectral_radius(res.w_rec()) - rho) < 1e-6);
    CHECK(power_radius(res.w_rec()) == doctest::Approx(rho).epsilon(0.05));
  }
  MatrixXd rot(2, 2);
  rot << 0, -2, 2, 0;
  CHECK(spectral_radius(rot) == doctest::Approx(2.0));
}

TEST_CASE("reservoir step") {
  Rng rng(2);
  Reservoir res(small(), rng);
  CHECK(res.step(VectorXd::Zero(50), VectorXd::Zero(1)).norm() == 0.0);

  // contraction without input
  ReservoirConfig c = small();
  c.leak = 1.0;
  Rng r2(3);
  Reservoir fast(c, r2);
  VectorXd r0 = VectorXd::Random(50);
  VectorXd r = r0;
  for (int t = 0; t < 200; ++t) r = fast.step(r, VectorXd::Zero(1));
  CHECK(r.norm() < 1e-3 * r0.norm());

  CHECK_THROWS_AS(res.step(VectorXd::Zero(49), VectorXd::Zero(1)), DimensionError);
  CHECK_THROWS_AS(res.step(VectorXd::Zero(50), VectorXd::Zero(2)), DimensionError);
}

TEST_CASE("memoryless reservoir") {
  ReservoirConfig c = small();
  c.leak = 1.0;
  Rng rng(4);
  Reservoir res(c, rng);
  // zero recurrence isolates the input path: compare against tanh(w_in x)
  VectorXd x(1);
  x << 0.37;
  VectorXd want = (res.w_in() * x).array().tanh().matrix();
  VectorXd got = res.step(VectorXd::Zero(50), x);
  CHECK((got - want).norm() < 1e-14);
}

TEST_CASE("collect states") {
  Rng rng(5);
  Reservoir res(small(), rng);
  MatrixXd u = MatrixXd::Random(30, 1);
  CHECK(collect_states(res, u, 29).rows() == 1);
  CHECK(collect_states(res, MatrixXd::Zero(20, 1), 5).cwiseAbs().maxCoeff() == 0.0);
  CHECK(collect_states(res, u, 3) == collect_states(res, u, 3));
  CHECK_THROWS_AS(collect_states(res, u, 30), DomainError);
}

TEST_CASE("ridge readout") {
  Rng rng(6);
  MatrixXd s(80, 6);
  for (int i = 0; i < s.size(); ++i) s.data()[i] = standard_normal(rng);
  CHECK(fit_readout(s, MatrixXd::Zero(80, 2), 1e-3).w_out.cwiseAbs().maxCoeff() == 0.0);

  MatrixXd w_star(7, 1);
  w_star << 0.5, -1.0, 2.0, 0.0, 0.3, -0.7, 0.25;
  MatrixXd a(80, 7);
  a << s, VectorXd::Ones(80);
  MatrixXd y = a * w_star;
  Readout exact = fit_readout(s, y, 0.0);
  CHECK(std::sqrt((exact.apply(s) - y).squaredNorm() / 80) <= 1e-8);

  double prev = fit_readout(s, y, 1.0).w_out.norm();
  for (double lam : {10.0, 100.0}) {
    double n = fit_readout(s, y, lam).w_out.norm();
    CHECK(n < prev);
    prev = n;
  }

  // local optimality of the ridge solution
  MatrixXd noisy_y = y + MatrixXd::Random(80, 1);
  Readout fitted = fit_readout(s, noisy_y, 0.5);
  const double opt = ridge_loss(fitted, s, noisy_y);
  for (int k = 0; k < 100; ++k) {
    Readout p = fitted;
    p.w_out += 1e-3 * MatrixXd::Random(7, 1);
    CHECK(ridge_loss(p, s, noisy_y) >= opt);
  }

  MatrixXd rank_def(10, 2);
  rank_def.col(0) = VectorXd::LinSpaced(10, 0, 1);
  rank_def.col(1) = 2 * rank_def.col(0);
  CHECK_THROWS_AS(fit_readout(rank_def, MatrixXd::Zero(10, 1), 0.0), SingularSystemError);
  CHECK_NOTHROW(fit_readout(rank_def, MatrixXd::Zero(10, 1), 1e-6));
  CHECK_THROWS_AS(fit_readout(rank_def, MatrixXd::Zero(9, 1), 1e-6), DimensionError);
}

TEST_CASE("prediction on zero input is the bias") {
  Rng rng(7);
  Reservoir res(small(), rng);
  Readout ro;
  ro.w_out = MatrixXd::Random(51, 1);
  MatrixXd out = predict(res, ro, MatrixXd::Zero(15, 1), 0);
  for (int t = 0; t < 15; ++t) CHECK(out(t, 0) == doctest::Approx(ro.w_out(50, 0)));
}

TEST_CASE("weights are fixed by training") {
  NarmaConfig cfg;
  cfg.reservoir.n_nodes = 40;
  cfg.train_length = 400;
  cfg.test_length = 100;
  Rng rng(derive_seed(3, "reservoir"));
  Reservoir res(cfg.reservoir, rng);
  MatrixXd w_rec = res.w_rec(), w_in = res.w_in();
  Narma s = narma10(300, 3);
  MatrixXd states = collect_states(res, s.input, 50);
  fit_readout(states, s.target.tail(250), 1e-6);
  CHECK(res.w_rec() == w_rec);
  CHECK(res.w_in() == w_in);
}

TEST_CASE("narma series") {
  Narma a = narma10(500, 1), b = narma10(500, 1);
  CHECK(a.target == b.target);
  CHECK(a.input.minCoeff() >= 0.0);
  CHECK(a.input.maxCoeff() <= 0.5);
  // the recurrence holds between consecutive targets
  for (int t = 10; t < 499; ++t) {
    double y = a.target[t - 1];
    double sum = 0;
    for (int i = 0; i < 10; ++i) sum += a.target[t - 1 - i];
    double want = 0.3 * y + 0.05 * y * sum + 1.5 * a.input[t - 9] * a.input[t] + 0.1;
    CHECK(a.target[t] == doctest::Approx(want));
  }
  MatrixXd lags = lagged_inputs(a.input, 3);
  CHECK(lags(0, 1) == 0.0);
  CHECK(lags(5, 2) == a.input[3]);
}

TEST_CASE("echo state property") {
  Narma s = narma10(600, 2);
  for (double rho : {0.5, 0.9}) {
    Rng rng(8), er(9);
    ReservoirConfig c = small(rho);
    c.n_nodes = 100;
    Reservoir res(c, rng);
    CHECK(echo_state_distance(res, s.input, 500, er) < 1e-6);
  }
  Rng rng(8), er(9);
  ReservoirConfig c = small(1.5);
  c.n_nodes = 100;
  Reservoir res(c, rng);
  CHECK(echo_state_distance(res, s.input, 500, er) > 1e-6);
}

TEST_CASE("volatile nodes stay in range and give a finite score") {
  NarmaConfig cfg;
  cfg.reservoir.node_kind = NodeKind::VolatileDevice;
  cfg.reservoir.n_nodes = 60;
  cfg.train_length = 600;
  cfg.test_length = 200;
  auto r = run_narma(cfg, 4);
  CHECK(std::isfinite(r.test_nrmse));
  Rng rng(10);
  Reservoir res(cfg.reservoir, rng);
  MatrixXd st = collect_states(res, narma10(100, 1).input, 0);
  CHECK(st.minCoeff() >= 0.0);
  CHECK(st.maxCoeff() <= 1.0);
  CHECK(parse_node_kind("volatile") == NodeKind::VolatileDevice);
  CHECK_THROWS_AS(parse_node_kind("relu"), DomainError);
}

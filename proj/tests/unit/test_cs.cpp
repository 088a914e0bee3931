#include <cmath>

#include "doctest.h"
#include "memsim/cs.hpp"
#include "memsim/errors.hpp"

using namespace memsim;
using namespace memsim::cs;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Reference AMP in plain floating point, written independently of the crossbar path.
std::vector<double> float_amp(const MatrixXd& a, const VectorXd& y, const VectorXd& truth,
                              int iters, double lambda, std::vector<VectorXd>* estimates = nullptr) {
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
  VectorXd x = VectorXd::Zero(n), z_old = VectorXd::Zero(m);
  double b = 0.0;
  std::vector<double> curve;
  for (int t = 0; t < iters; ++t) {
    VectorXd z = y - a * x + b * z_old;
    double theta = lambda * z.norm() / std::sqrt(double(m));
    VectorXd r = x + a.transpose() * z;
    int nz = 0;
    for (int i = 0; i < n; ++i) {
      double v = std::abs(r[i]) - theta;
      x[i] = v > 0 ? (r[i] > 0 ? v : -v) : 0.0;
      nz += v > 0;
    }
    b = double(nz) / m;
    z_old = z;
    if (estimates) estimates->push_back(x);
    double e = (x - truth).squaredNorm() / truth.squaredNorm();
    curve.push_back(e > 0 ? std::max(-300.0, 10 * std::log10(e)) : -300.0);
  }
  return curve;
}

}  // namespace

TEST_CASE("nmse reference values") {
  VectorXd t(2), h(2);
  t << 1, 0;
  h << 0, 1;
  CHECK(nmse_db(t, h) == doctest::Approx(10 * std::log10(2.0)));
  CHECK(nmse_db(t, h) == doctest::Approx(3.0103).epsilon(1e-4));
  CHECK(nmse_db(t, t) <= -300.0);
  CHECK(nmse_db(t, VectorXd::Zero(2)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(nmse_db(VectorXd::Zero(2), h), DomainError);
  CHECK_THROWS_AS(nmse_db(t, VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("compress: zero signal, selector matrix, Gaussian matrix") {
  Rng rng(1);
  SUBCASE("selector") {
    MatrixXd sel = MatrixXd::Zero(4, 10);
    sel.leftCols(4) = MatrixXd::Identity(4, 4);
    auto p = make_problem(sel, 2, {}, rng);
    VectorXd x = VectorXd::LinSpaced(10, -3, 6);
    CHECK((compress(p, x, rng) - x.head(4)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(compress(p, VectorXd::Zero(10), rng).norm() == 0.0);
    CHECK_THROWS_AS(compress(p, VectorXd::Zero(9), rng), DimensionError);
  }
  SUBCASE("gaussian") {
    MatrixXd a = gaussian_matrix(32, 64, rng);
    ProblemOptions o;
    o.programming = ProgrammingMode::iterative(1e-4, 200);
    auto p = make_problem(a, 4, o, rng);
    VectorXd x = sparse_signal(64, 4, rng);
    // bound: per-entry programming error tol * range maps to tol * scale in weight units
    const double bound = 1e-4 * p.matrix_scale * x.cwiseAbs().sum();
    CHECK((compress(p, x, rng) - a * x).cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("sparse_signal has exactly k nonzeros") {
  Rng rng(3);
  for (int k : {0, 1, 10, 64}) {
    VectorXd x = sparse_signal(64, k, rng);
    CHECK((x.array() != 0.0).count() == k);
  }
}

TEST_CASE("identity sensing with a zero threshold recovers exactly in one iteration") {
  Rng rng(2);
  auto p = make_problem(MatrixXd::Identity(16, 16), 3, {}, rng);
  VectorXd x = sparse_signal(16, 3, rng);
  VectorXd y = compress(p, x, rng);
  auto tr = amp_recover(p, y, 1, LambdaSchedule::constant(0.0), rng, x);
  CHECK(tr.iterations_run == 1);
  CHECK(tr.nmse_db.back() <= -100.0);
}

TEST_CASE("crossbar AMP tracks the float oracle on n=256, m=128, k=10") {
  Rng rng(11);
  MatrixXd a = gaussian_matrix(128, 256, rng);
  VectorXd x = sparse_signal(256, 10, rng);
  auto p = make_problem(a, 10, {}, rng);
  const std::uint64_t before = p.measurement.mvm_count();
  VectorXd y = compress(p, x, rng);
  auto tr = amp_recover(p, y, 50, LambdaSchedule::constant(1.5), rng, x);
  CHECK(p.measurement.mvm_count() - before == 1 + 2 * 50);

  std::vector<VectorXd> ref_est;
  auto ref = float_amp(a, a * x, x, 50, 1.5, &ref_est);
  MESSAGE("final NMSE crossbar " << tr.nmse_db.back() << " dB, float " << ref.back() << " dB");
  CHECK(tr.nmse_db.back() <= -30.0);
  CHECK(std::abs(tr.nmse_db.back() - ref.back()) <= 1.0);
  // elementwise trajectory agreement while the iterate is well above round-off
  for (int t = 0; t < 50; ++t) {
    if (ref[t] < -120.0) break;
    const double rel = (tr.estimates[t] - ref_est[t]).norm() / ref_est[t].norm();
    CHECK(rel <= 1e-6);
  }
  // non-increasing after the transient
  for (int t = 3; t + 1 < 50; ++t) {
    if (tr.nmse_db[t] < -250.0) break;
    CHECK(tr.nmse_db[t + 1] <= tr.nmse_db[t] + 1e-9);
  }
}

TEST_CASE("static programming error alone is absorbed when compression and recovery share the array") {
  Rng rng(5);
  MatrixXd a = gaussian_matrix(128, 256, rng);
  VectorXd x = sparse_signal(256, 10, rng);
  ProblemOptions o;
  o.device.prog_noise_rel = 0.1;
  o.programming = ProgrammingMode::single_shot();
  auto p = make_problem(a, 10, o, rng);
  CHECK((p.measurement.decoded_weights() * p.matrix_scale - a).norm() > 1e-3);
  auto tr = amp_recover(p, compress(p, x, rng), 50, {}, rng, x);
  CHECK(tr.nmse_db.back() < -100.0);
}

TEST_CASE("PCM profile (prog_noise_rel = 0.1 with read noise and drift) raises the error floor") {
  Rng rng(5);
  MatrixXd a = gaussian_matrix(128, 256, rng);
  VectorXd x = sparse_signal(256, 10, rng);
  auto ideal = make_problem(a, 10, {}, rng);
  ProblemOptions noisy_opts;
  noisy_opts.device = DeviceParams{};
  noisy_opts.programming = ProgrammingMode::single_shot();
  auto noisy = make_problem(a, 10, noisy_opts, rng);
  noisy.measurement.advance_time(60.0);
  auto ti = amp_recover(ideal, compress(ideal, x, rng), 50, {}, rng, x);
  auto tn = amp_recover(noisy, compress(noisy, x, rng), 50, {}, rng, x);
  MESSAGE("ideal " << ti.nmse_db.back() << " dB, noisy " << tn.nmse_db.back() << " dB");
  CHECK(tn.nmse_db.back() > ti.nmse_db.back() + 50.0);
  // plateau: the last 10 iterations move by less than 1.5 dB
  CHECK(std::abs(tn.nmse_db[49] - tn.nmse_db[39]) < 1.5);
}

TEST_CASE("amp_recover input validation") {
  Rng rng(1);
  auto p = make_problem(gaussian_matrix(8, 16, rng), 2, {}, rng);
  CHECK_THROWS_AS(amp_recover(p, VectorXd::Zero(7), 5, {}, rng), DimensionError);
  CHECK_THROWS_AS(amp_recover(p, VectorXd::Zero(8), 0, {}, rng), DomainError);
  CHECK_THROWS_AS(make_problem(gaussian_matrix(17, 16, rng), 2, {}, rng), DomainError);
  VectorXd y = VectorXd::Constant(8, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(amp_recover(p, y, 3, {}, rng), DivergenceError);
}

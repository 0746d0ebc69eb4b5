#include <cmath>
#include <numbers>

#include "doctest.h"
#include "feller/errors.hpp"
#include "feller/heat1d.hpp"

using namespace feller;
using std::numbers::pi;

TEST_CASE("model construction") {
  CHECK_THROWS_AS(SpectralHeatModel(0), InvalidArgument);
  CHECK_THROWS_AS(SpectralHeatModel(8, -1.0), InvalidArgument);
  CHECK_THROWS_AS(SpectralHeatModel(8, 1.0, -0.5), InvalidArgument);
  const SpectralHeatModel m(4, 2.0);
  CHECK(m.lambda(3) == doctest::Approx(2.0 * 9.0 * pi * pi));
  CHECK(m.eigenvalues().size() == 4);
}

TEST_CASE("single mode matches the scalar OU norm") {
  const SpectralHeatModel m(1, 1.0);
  const double l = pi * pi, t = 0.05;
  const OUModel ou = OUModel::scalar(-l, 1.0);
  CHECK(heat_sf_norm(m, t) == doctest::Approx(sf_norm(ou, t)).epsilon(1e-12));
}

TEST_CASE("sf norm asymptotics") {
  const SpectralHeatModel m(64, 1.0);
  for (double t : {1e-6, 1e-8}) CHECK(heat_sf_norm(m, t) * std::sqrt(t) == doctest::Approx(1.0).epsilon(1e-2));
  const double t = 2.0, l1 = pi * pi;
  CHECK(heat_sf_norm(m, t) == doctest::Approx(std::exp(-l1 * t) * std::sqrt(2.0 * l1)).epsilon(1e-12));
}

TEST_CASE("hypothesis integrals") {
  const HypCheck h = hyp_check(SpectralHeatModel(64, 1.0), 1.0);
  CHECK(h.i1 == doctest::Approx(0.7070834975723057).epsilon(1e-10));
  CHECK(h.i2 == doctest::Approx(0.05066059168563721).epsilon(1e-12));
  CHECK(h.i2 == doctest::Approx((1.0 - std::exp(-2.0 * pi * pi)) / (2.0 * pi * pi)).epsilon(1e-12));
  CHECK(h.stable_under_n);
  CHECK(h.i1_doubled == doctest::Approx(h.i1).epsilon(1e-10));
}

TEST_CASE("sine transform round trip and Parseval") {
  const SineTransform st(16, 64);
  Vec u = Vec::Zero(16);
  for (int k = 0; k < 16; ++k) u[k] = std::cos(0.7 * k) / (k + 1.0);
  const Vec v = st.synthesis(u);
  CHECK((st.analysis(v) - u).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(v.squaredNorm() / (st.points() + 1.0) == doctest::Approx(u.squaredNorm()).epsilon(1e-12));
  CHECK(st.grid()[0] == doctest::Approx(1.0 / 65.0));
}

TEST_CASE("constant nonlinearity projects onto odd modes") {
  const SpectralHeatModel m(8, 1.0);
  const HeatStepper stepper(m, 1e-3, 1024);
  const Vec inc = stepper.drift_increment(ScalarDrift::constant(1.0), Vec::Zero(8));
  for (int k = 1; k <= 8; ++k) {
    const double l = m.lambda(k), factor = (1.0 - std::exp(-l * 1e-3)) / l;
    const double coeff = std::sqrt(2.0) * (1.0 - std::pow(-1.0, k)) / (k * pi);
    CHECK(std::abs(inc[k - 1] / factor - coeff) <= 2e-3);
  }
}

TEST_CASE("alias risk") {
  const SpectralHeatModel m(16, 1.0);
  CHECK(HeatStepper(m, 1e-3, 16).alias_risk());
  CHECK_FALSE(HeatStepper(m, 1e-3, 32).alias_risk());
}

TEST_CASE("invariant covariance") {
  const Vec q = heat_invariant(SpectralHeatModel(4, 1.0));
  CHECK(q[0] == doctest::Approx(0.05066059182116889).epsilon(1e-14));
  const Vec qa = heat_invariant(SpectralHeatModel(4, 1.0, 0.5));
  for (int k = 1; k <= 4; ++k) {
    const double l = k * k * pi * pi;
    CHECK(qa[k - 1] == doctest::Approx(1.0 / (2.0 * l * l)).epsilon(1e-13));
  }
}

TEST_CASE("stationary statistics of the linear model") {
  const SpectralHeatModel m(8, 1.0);
  MCConfig c;
  c.dt = 2e-3;
  c.n_paths = 1000;
  c.seed = 4;
  const HeatStationary s = heat_stationary(m, ScalarDrift::zero(), c, 1.0, 200.0);
  CHECK(std::abs(s.cov(0, 0) - 0.05066059182116889) <= 4.0 * s.cov_err(0, 0));
  CHECK(std::abs(s.mean[0]) <= 4.0 * s.mean_err[0]);
}

TEST_CASE("drift stability gaps vanish at the limit") {
  const SpectralHeatModel m(8, 1.0);
  MCConfig c;
  c.dt = 1e-2;
  c.n_paths = 1000;
  const HeatObservable f = [](const SpectralState& u) { return u[0]; };
  const auto rows = heat_drift_stability(m, {ScalarDrift::sign(1.0)}, ScalarDrift::sign(1.0), f,
                                         Vec::Zero(8), 0.1, c);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].gap == 0.0);
}

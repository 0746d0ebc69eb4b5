#include <cmath>

#include "doctest.h"
#include "feller/errors.hpp"
#include "feller/ou_model.hpp"

using namespace feller;

namespace {
OUModel integrator_chain() {
  Mat a(2, 2), g(2, 1);
  a << 0.0, 1.0, 0.0, 0.0;
  g << 0.0, 1.0;
  return OUModel(a, g);
}
OUModel coupled() {
  Mat a(2, 2);
  a << -1.0, 0.5, 0.0, -2.0;
  return OUModel(a, Mat::Identity(2, 2));
}
}  // namespace

TEST_CASE("flow") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  CHECK(flow(s, 1.0)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(flow(s, 1.0)(0, 0) == doctest::Approx(0.3678794).epsilon(1e-7));
  CHECK((flow(coupled(), 0.0) - Mat::Identity(2, 2)).norm() == 0.0);
  const Mat f = flow(integrator_chain(), 2.5);
  Mat expected(2, 2);
  expected << 1.0, 2.5, 0.0, 1.0;
  CHECK((f - expected).norm() <= 1e-14);
}

TEST_CASE("flow is a semigroup") {
  const OUModel m = coupled();
  for (auto [t, s] : {std::pair{0.3, 1.1}, {2.0, 0.05}, {0.7, 0.7}}) {
    const Mat lhs = flow(m, t + s);
    CHECK((lhs - flow(m, t) * flow(m, s)).norm() <= 1e-10 * lhs.norm());
  }
}

TEST_CASE("gramian closed forms") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  const double q1 = (1.0 - std::exp(-2.0)) / 2.0;
  CHECK(q1 == doctest::Approx(0.43233235838169365).epsilon(1e-15));
  CHECK(gramian(s, 1.0)(0, 0) == doctest::Approx(q1).epsilon(1e-13));
  CHECK(gramian(s, 0.0).norm() == 0.0);
  const double t = 0.8;
  Mat expected(2, 2);
  expected << t * t * t / 3.0, t * t / 2.0, t * t / 2.0, t;
  CHECK((gramian(integrator_chain(), t) - expected).norm() <= 1e-13);
}

TEST_CASE("Gauss-Legendre and Lyapunov ODE Gramians agree") {
  const OUModel m = coupled();
  GramianOptions ode;
  ode.rule = GramianRule::kLyapunovOde;
  ode.step = 1e-3;
  const Mat a = gramian(m, 1.3), b = gramian(m, 1.3, ode);
  CHECK((a - b).norm() <= 1e-10 * a.norm());
}

TEST_CASE("Gramian cocycle") {
  const OUModel m = coupled();
  const double t = 0.4, s = 0.9;
  const Mat lhs = gramian(m, t + s);
  const Mat ss = flow(m, s);
  const Mat rhs = gramian(m, s) + ss * gramian(m, t) * ss.transpose();
  CHECK((lhs - rhs).norm() <= 1e-8 * lhs.norm());
}

TEST_CASE("ou_expect") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  Vec x(1);
  x << 2.0;
  const Estimate mean = ou_expect(s, 1.0, [](const Vec& z) { return z[0]; }, x, Hermite{8});
  CHECK(mean.value == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-13));
  CHECK(mean.value == doctest::Approx(0.7357589).epsilon(1e-7));
  CHECK(ou_expect(s, 1.0, [](const Vec&) { return 1.0; }, x, Hermite{4}).value ==
        doctest::Approx(1.0).epsilon(1e-14));
  const Estimate second =
      ou_expect(s, 1.0, [](const Vec& z) { return z[0] * z[0]; }, Vec::Zero(1), Hermite{4});
  CHECK(second.value == doctest::Approx(0.43233235838169365).epsilon(1e-12));
}

TEST_CASE("ou_gradient") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  Vec x(1), y(1);
  x << -0.7;
  y << 1.0;
  CHECK(std::abs(ou_gradient(s, 0.5, [](const Vec&) { return 1.0; }, x, y, Hermite{6}).value) < 1e-14);
  CHECK(ou_gradient(s, 0.5, [](const Vec& z) { return z[0]; }, x, y, Hermite{6}).value ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("ou_gradient agrees with central differences") {
  const OUModel m = coupled();
  const double t = 0.5, h = 1e-4;
  auto f = [](const Vec& z) { return std::sin(z[0] + z[1]); };
  Vec x(2), y(2);
  x << 0.3, -1.2;
  y << 0.8, 0.5;
  const double g = ou_gradient(m, t, f, x, y, Hermite{32}).value;
  const double fd = (ou_expect(m, t, f, x + h * y, Hermite{32}).value -
                     ou_expect(m, t, f, x - h * y, Hermite{32}).value) /
                    (2.0 * h);
  CHECK(std::abs(g - fd) <= 1e-4);
}

TEST_CASE("ou_gradient Monte Carlo stays within three standard errors") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  Vec x(1), y(1);
  x << 0.2;
  y << 1.0;
  auto f = [](const Vec& z) { return std::tanh(z[0]); };
  const double exact = ou_gradient(s, 0.5, f, x, y, Hermite{40}).value;
  const Estimate mc = ou_gradient(s, 0.5, f, x, y, MonteCarlo{200000, 4});
  CHECK(std::abs(mc.value - exact) <= 3.0 * mc.std_error);
}

TEST_CASE("gradient bound by the strong Feller norm") {
  const OUModel m = coupled();
  Vec x(2), y(2);
  x << 1.0, 0.0;
  y << 0.6, -0.8;
  for (double t : {0.05, 0.3, 1.0}) {
    const double g = ou_gradient(m, t, [](const Vec& z) { return z[0] > 0.0 ? 1.0 : -1.0; },
                                 x, y, Hermite{40})
                         .value;
    CHECK(std::abs(g) <= sf_norm(m, t) * y.norm() * 1.0 + 1e-3);
  }
}

TEST_CASE("sf_norm") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  const double oracle = std::exp(-1.0) * std::sqrt(2.0 / (1.0 - std::exp(-2.0)));
  CHECK(oracle == doctest::Approx(0.55949556343132097).epsilon(1e-15));
  CHECK(sf_norm(s, 1.0) == doctest::Approx(oracle).epsilon(1e-12));
  // t^{-1/2} blow-up near zero.
  CHECK(sf_norm(s, 1e-6) * std::sqrt(1e-6) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(std::isfinite(sf_norm(integrator_chain(), 1e-3)));
}

TEST_CASE("sf_norm is nonincreasing for a stable model") {
  const OUModel m = coupled();
  double prev = sf_norm(m, 1e-3);
  for (double t : log_spaced(1e-3, 5.0, 25)) {
    const double v = sf_norm(m, t);
    CHECK(v <= prev * (1.0 + 1e-12));
    prev = v;
  }
}

TEST_CASE("sf_norm reports a direction when the range condition fails") {
  Mat a = Mat::Zero(2, 2), g(2, 1);
  g << 1.0, 0.0;
  try {
    (void)sf_norm(OUModel(a, g), 0.5);
    FAIL("expected NotStrongFeller");
  } catch (const NotStrongFeller& e) {
    CHECK(e.direction().size() == 2);
  }
}

TEST_CASE("kalman_index") {
  CHECK(kalman_index(coupled()) == 0);
  CHECK(kalman_index(integrator_chain()) == 1);
  Mat g(2, 1);
  g << 1.0, 0.0;
  CHECK_THROWS_AS(kalman_index(OUModel(Mat::Zero(2, 2), g)), NotControllable);
}

TEST_CASE("scaling fit recovers -(k + 1/2)") {
  const auto ts = log_spaced(1e-4, 1e-1, 12);
  Mat a(2, 2);
  a << 0.0, 1.0, 0.0, 0.0;
  const ScalingFit k0 = sf_scaling_fit(OUModel(a, Mat::Identity(2, 2)), ts);
  CHECK(k0.kalman_index == 0);
  CHECK(std::abs(k0.slope + 0.5) <= 0.1);
  CHECK(k0.r2 >= 0.999);
  const ScalingFit k1 = sf_scaling_fit(integrator_chain(), ts);
  CHECK(k1.kalman_index == 1);
  CHECK(std::abs(k1.slope + 1.5) <= 0.1);
  CHECK(k1.r2 >= 0.999);
  Mat g(2, 1);
  g << 1.0, 0.0;
  CHECK_THROWS_AS(sf_scaling_fit(OUModel(Mat::Zero(2, 2), g), ts), NotControllable);
}

TEST_CASE("stationary covariance") {
  CHECK(stationary_covariance(OUModel::scalar(-1.0, 1.0))(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  const OUModel m = coupled();
  const Mat q = stationary_covariance(m);
  CHECK((m.A * q + q * m.A.transpose() + m.G * m.G.transpose()).norm() <= 1e-12);
  CHECK_THROWS_AS(stationary_covariance(OUModel::scalar(1.0, 1.0)), Unstable);
}

TEST_CASE("flow overflow is reported") {
  CHECK_THROWS_AS(flow(OUModel::scalar(1.0, 1.0), 1e4), Overflow);
}

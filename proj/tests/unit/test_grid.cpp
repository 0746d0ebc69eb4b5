#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "feller/errors.hpp"
#include "feller/grid.hpp"
#include "feller/ou_model.hpp"

using namespace feller;

namespace {
GridPtr line(int n, double w = 6.0) { return build_grid({-w}, {w}, {n}); }
}  // namespace

TEST_CASE("grid construction") {
  const GridPtr g = build_grid({-4.0}, {4.0}, {64});
  CHECK(g->size() == 64);
  for (int j = 0; j < 64; ++j) CHECK(g->node(j)[0] == doctest::Approx(-3.9375 + j * 0.125).epsilon(1e-15));
  const GridPtr g2 = build_grid({-1.0, -2.0}, {1.0, 2.0}, {32, 32});
  CHECK(g2->size() == 1024);
  // Row-major: axis 0 slowest.
  CHECK(g2->node(1)[0] == g2->node(0)[0]);
  CHECK(g2->node(32)[0] > g2->node(0)[0]);
  CHECK_THROWS_AS(build_grid({-1.0}, {1.0}, {4}), BadBounds);
  CHECK_THROWS_AS(build_grid({1.0}, {-1.0}, {16}), BadBounds);
  CHECK_THROWS_AS(build_grid({0, 0, 0}, {1, 1, 1}, {8, 8, 8}), BadBounds);
}

TEST_CASE("locate puts shared faces in the lower cell") {
  const GridPtr g = line(8, 4.0);
  Vec x(1);
  x << 0.0;
  CHECK(*g->locate(x) == 3);
  x << -4.0;
  CHECK(*g->locate(x) == 0);
  x << 4.0;
  CHECK(*g->locate(x) == 7);
  x << 4.5;
  CHECK_FALSE(g->locate(x).has_value());
}

TEST_CASE("OU kernel mass, leak and mean") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  const GridPtr g = line(128);
  const KernelOp k = build_ou_kernel(s, 1.0, g);
  const Vec mass = k.weights.rowwise().sum() + k.row_leak;
  CHECK((mass - Vec::Ones(g->size())).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(k.weights.minCoeff() >= 0.0);
  const double h = g->spacing(0);
  const GridFunction one = GridFunction::constant(g, 1.0);
  const GridFunction y = GridFunction::sample(g, [](const Vec& z) { return z[0]; });
  const Vec k1 = apply(k, one).values;
  const Vec ky = apply(k, y).values;
  for (int i = 0; i < g->size(); ++i) {
    const double x = g->node(i)[0];
    CHECK(k1[i] == doctest::Approx(1.0 - k.row_leak[i]).epsilon(1e-12));
    if (std::abs(x) <= 2.0) {
      CHECK(k.row_leak[i] <= 1e-6);
      CHECK(std::abs(ky[i] - std::exp(-1.0) * x) <= 2.0 * h + k.row_leak[i] * 6.0);
    }
  }
}

TEST_CASE("identity and signed kernels") {
  const GridPtr g = line(32);
  const GridFunction f = GridFunction::sample(g, [](const Vec& z) { return std::sin(z[0]); });
  CHECK((apply(dirac_kernel(g), f).values - f.values).norm() == 0.0);

  KernelOp signed_k{g, RowMat::Zero(32, 32), Vec::Zero(32), Vec::Zero(32), 0.0, true};
  for (int i = 0; i + 1 < 32; ++i) {
    signed_k.weights(i, i) = 0.3 * (i + 1);
    signed_k.weights(i, i + 1) = -0.3 * (i + 1);
  }
  CHECK(apply(signed_k, GridFunction::constant(g, 2.0)).values.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Markov kernels preserve positivity") {
  const OUModel s = OUModel::scalar(-0.5, 1.3);
  const GridPtr g = line(64);
  const GridFunction f = GridFunction::sample(g, [](const Vec& z) { return z[0] > 1.0 ? 1.0 : 0.0; });
  CHECK(apply(build_ou_kernel(s, 0.2, g), f).values.minCoeff() >= 0.0);
}

TEST_CASE("composition") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  const GridPtr g = line(128);
  const KernelOp k = build_ou_kernel(s, 0.5, g);
  const KernelOp kd = compose(k, dirac_kernel(g));
  CHECK((kd.weights - k.weights).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((kd.row_leak - k.row_leak).cwiseAbs().maxCoeff() <= 1e-15);

  const KernelOp kk = compose(k, build_ou_kernel(s, 0.7, g));
  const KernelOp direct = build_ou_kernel(s, 1.2, g);
  const Vec mass = kk.weights.rowwise().sum() + kk.row_leak;
  CHECK(mass.maxCoeff() <= 1.0 + 1e-6);
  const GridFunction f = GridFunction::sample(g, [](const Vec& z) { return std::exp(-z[0] * z[0]); });
  const Vec a = apply(kk, f).values, b = apply(direct, f).values;
  double worst = 0.0;
  for (int i = 0; i < g->size(); ++i) {
    if (std::abs(g->node(i)[0]) <= 3.0) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  CHECK(worst <= 2e-3);
}

TEST_CASE("composition errors are first order in the cell size") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  auto err = [&](int n) {
    const GridPtr g = line(n);
    const KernelOp kk = compose(build_ou_kernel(s, 0.3, g), build_ou_kernel(s, 0.3, g));
    const KernelOp direct = build_ou_kernel(s, 0.6, g);
    const GridFunction f = GridFunction::sample(g, [](const Vec& z) { return std::tanh(z[0]); });
    const Vec d = apply(kk, f).values - apply(direct, f).values;
    double worst = 0.0;
    for (int i = 0; i < g->size(); ++i) {
      if (std::abs(g->node(i)[0]) <= 2.0) worst = std::max(worst, std::abs(d[i]));
    }
    return worst;
  };
  const double e1 = err(64), e2 = err(128), e3 = err(256);
  CHECK(std::log2(e1 / e2) >= 0.9);
  CHECK(std::log2(e2 / e3) >= 0.9);
}

TEST_CASE("total variation between rows") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  const GridPtr g = line(128);
  const KernelOp k = build_ou_kernel(s, 1.0, g);
  CHECK(tv_row_distance(k, 40, 40) == 0.0);
  const double h = g->spacing(0);
  double max_leak = k.row_leak.cwiseAbs().maxCoeff();
  for (int i = 32; i < 96; ++i) {
    CHECK(tv_row_distance(k, i, i + 1) <= sf_norm(s, 1.0) * h + 2.0 * max_leak + 1e-9);
  }
  const KernelOp fast = build_ou_kernel(s, 0.05, g);
  const int a = g->nearest_node(Vec::Constant(1, -3.0)), b = g->nearest_node(Vec::Constant(1, 3.0));
  CHECK(tv_row_distance(fast, a, b) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("irreducibility on the central window") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  const GridPtr g = line(64);
  const KernelOp k = build_ou_kernel(s, 2.0, g);
  for (int i = 0; i < g->size(); ++i) {
    for (int j = 0; j < g->size(); ++j) {
      if (std::abs(g->node(j)[0]) <= 2.0) CHECK(k.weights(i, j) >= 1e-8);
    }
  }
}

TEST_CASE("2-D OU kernel with correlated noise") {
  Mat a(2, 2), gm(2, 2);
  a << -1.0, 0.5, 0.0, -2.0;
  gm << 1.0, 0.0, 0.6, 0.8;
  const OUModel m(a, gm);
  const Box box = default_box(m, 0.0);
  const GridPtr g = build_grid(box.lo, box.hi, {48, 48});
  const KernelOp k = build_ou_kernel(m, 0.5, g);
  const Vec mass = k.weights.rowwise().sum() + k.row_leak;
  CHECK((mass - Vec::Ones(g->size())).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(k.weights.minCoeff() >= -1e-15);
  // Mean of the first coordinate at a central node.
  const int c = g->nearest_node(Vec::Zero(2));
  const Vec x = g->node(c);
  const Vec mean = flow(m, 0.5) * x;
  const GridFunction y0 = GridFunction::sample(g, [](const Vec& z) { return z[0]; });
  CHECK(std::abs(apply(k, y0).values[c] - mean[0]) <= 2.0 * g->spacing(0));
}

TEST_CASE("rank-deficient covariance is rejected") {
  Mat a = Mat::Zero(2, 2), gm(2, 1);
  gm << 1.0, 0.0;
  const GridPtr g = build_grid({-3.0, -3.0}, {3.0, 3.0}, {16, 16});
  CHECK_THROWS_AS(build_ou_kernel(OUModel(a, gm), 0.5, g), DegenerateCovariance);
}

TEST_CASE("grid mismatch") {
  const OUModel s = OUModel::scalar(-1.0, 1.0);
  const KernelOp a = build_ou_kernel(s, 0.5, line(32));
  const KernelOp b = build_ou_kernel(s, 0.5, line(64));
  CHECK_THROWS_AS(compose(a, b), GridMismatch);
}

TEST_CASE("CSV export") {
  const GridPtr g = line(16);
  std::ostringstream os;
  export_csv(dirac_kernel(g), os);
  const std::string s = os.str();
  CHECK(s.rfind("#", 0) == 0);
  CHECK(s.find("leak") != std::string::npos);
  CHECK(std::count(s.begin(), s.end(), '\n') == 2 + 16);
}

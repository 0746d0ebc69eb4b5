#include <cmath>
#include <random>

#include "doctest.h"
#include "feller/errors.hpp"
#include "feller/perturbation.hpp"

using namespace feller;

namespace {
const OUModel kScalar = OUModel::scalar(-1.0, 1.0);
GridPtr line(int n, double w = 8.0) { return build_grid({-w}, {w}, {n}); }
DriftField unit_drift() { return DriftField::constant(Vec::Ones(1)); }
Vec sample(const GridPtr& g, const ScalarField& f) { return GridFunction::sample(g, f).values; }
}  // namespace

TEST_CASE("drift fields") {
  Vec x(2);
  x << -0.3, 0.0;
  const DriftField s = DriftField::sign(0.5, 2);
  CHECK(s(x)[0] == -0.5);
  CHECK(s(x)[1] == 0.0);
  CHECK(s.sup() == doctest::Approx(0.5 * std::sqrt(2.0)));
  CHECK(DriftField::zero(2).is_zero());
  Mat k = Mat::Identity(1, 1);
  const DriftField c = DriftField::clipped_linear(k, 0.7);
  CHECK(c(Vec::Constant(1, 3.0))[0] == 0.7);
  CHECK(c(Vec::Constant(1, -0.2))[0] == -0.2);
  const DriftField liar(
      [](const Vec& z) { return z; }, 1.0, "liar");
  CHECK_THROWS_AS(liar.check_on(*line(32)), InvalidArgument);
}

TEST_CASE("bt_kernel rows sum to zero and vanish for zero drift") {
  const GridPtr g = line(128);
  const KernelOp k = bt_kernel(kScalar, unit_drift(), 0.3, g);
  CHECK(k.is_signed);
  const Vec mass = k.weights.rowwise().sum() + k.row_leak;
  CHECK(mass.cwiseAbs().maxCoeff() <= 1e-12);
  const KernelOp z = bt_kernel(kScalar, DriftField::zero(1), 0.3, g);
  CHECK(z.weights.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bt_kernel on a linear function") {
  // F = 1, f(y) = y: ⟨F, D T(s) f⟩ = e^{-s}.
  const GridPtr g = line(256);
  const Vec f = sample(g, [](const Vec& z) { return z[0]; });
  for (BtRule rule : {BtRule::kCellAveraged, BtRule::kNodalWeight}) {
    const KernelOp k = bt_kernel(kScalar, unit_drift(), 0.5, g, rule);
    const Vec v = k.weights * f;
    for (int i : core_nodes(*g)) CHECK(v[i] == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
  }
  CHECK(std::exp(-0.5) == doctest::Approx(0.6065306597126334).epsilon(1e-15));
}

TEST_CASE("cell-averaged and nodal rules agree for wide kernels") {
  const GridPtr g = line(256);
  const DriftField d = DriftField::sign(0.5);
  const Vec f = sample(g, [](const Vec& z) { return std::cos(z[0]); });
  const Vec a = bt_kernel(kScalar, d, 0.8, g, BtRule::kCellAveraged).weights * f;
  const Vec b = bt_kernel(kScalar, d, 0.8, g, BtRule::kNodalWeight).weights * f;
  CHECK(core_sup_diff(*g, a, b) <= 5e-3);
}

TEST_CASE("bt_kernel total variation is bounded by phi") {
  const GridPtr g = line(256);
  const DriftField d = DriftField::sign(0.7);
  for (double s : {0.01, 0.1, 1.0}) {
    const KernelOp k = bt_kernel(kScalar, d, s, g);
    double worst = 0.0;
    for (int i : core_nodes(*g)) worst = std::max(worst, k.weights.row(i).cwiseAbs().sum());
    CHECK(worst <= phi_bound(kScalar, s) * d.sup() * (1.0 + 1e-6));
  }
}

TEST_CASE("phi integral and t0 choice") {
  CHECK(phi_integral(kScalar, 1.0, 0.0625, 16) == doctest::Approx(0.4948083046169964).epsilon(1e-10));
  CHECK(phi_integral(kScalar, 1.0, 0.125, 16) == doctest::Approx(0.6924715382420304).epsilon(1e-10));
  CHECK(phi_integral(kScalar, 1.0, 0.0625, 32) ==
        doctest::Approx(phi_integral(kScalar, 1.0, 0.0625, 16)).epsilon(1e-8));
  const T0Choice c = choose_t0(kScalar, unit_drift());
  CHECK(c.t0 == 0.0625);
  CHECK(c.rho == doctest::Approx(0.4948083046169964).epsilon(1e-10));
  // Dyadic choice sits just below the bisected threshold 0.0638472027774735.
  CHECK(c.t0 <= 0.0638472027774735);
  CHECK(2.0 * c.t0 > 0.0638472027774735);
  const T0Choice half = choose_t0(kScalar, DriftField::sign(0.5));
  CHECK(half.t0 == 0.25);
  CHECK(half.rho == doctest::Approx(0.4794499235780187).epsilon(1e-10));
  const T0Choice zero = choose_t0(kScalar, DriftField::zero(1));
  CHECK(zero.rho == 0.0);
}

TEST_CASE("t0 choice fails for non-integrable phi") {
  Mat a(2, 2), g(2, 1);
  a << 0.0, 1.0, 0.0, 0.0;
  g << 0.0, 1.0;
  const OUModel chain(a, g);
  Vec c(2);
  c << 1.0, 1.0;
  CHECK_THROWS_AS(choose_t0(chain, DriftField::constant(c)), NoContraction);
}

TEST_CASE("Volterra nodes") {
  const VolterraNodes v = volterra_nodes(0.25, 16);
  CHECK(v.size() == 16);
  double total = 0.0;
  for (int j = 0; j < v.size(); ++j) {
    CHECK(v.s[j] == doctest::Approx(v.u[j] * v.u[j]).epsilon(1e-15));
    CHECK(v.s[j] > 0.0);
    CHECK(v.s[j] < 0.25);
    total += v.weights[j];
  }
  CHECK(total == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("Volterra operator is a contraction") {
  const GridPtr g = line(64);
  const DriftField d = DriftField::sign(0.5);
  const T0Choice c = choose_t0(kScalar, d, 0.5, 8);
  std::vector<KernelOp> bt;
  for (double s : c.nodes.s) bt.push_back(bt_kernel(kScalar, d, s, g));
  const VolterraOperator v(c.nodes, bt);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto random_family = [&] {
    std::vector<KernelOp> fam;
    for (int t = 0; t < v.targets(); ++t) {
      KernelOp k = dirac_kernel(g);
      for (int i = 0; i < g->size(); ++i)
        for (int j = 0; j < g->size(); ++j) k.weights(i, j) = unif(rng) / g->size();
      k.is_signed = true;
      fam.push_back(std::move(k));
    }
    return fam;
  };
  for (int trial = 0; trial < 5; ++trial) {
    const auto p1 = random_family(), p2 = random_family();
    const auto v1 = v.apply(p1), v2 = v.apply(p2);
    double num = 0.0, den = 0.0;
    for (int t = 0; t < v.targets(); ++t) {
      num = std::max(num, (v1[t].weights - v2[t].weights).rowwise().lpNorm<1>().maxCoeff());
      den = std::max(den, (p1[t].weights - p2[t].weights).rowwise().lpNorm<1>().maxCoeff());
    }
    CHECK(num <= c.rho * den * (1.0 + 1e-9));
  }
}

TEST_CASE("zero drift reproduces the OU semigroup") {
  const GridPtr g = line(128);
  const PerturbedSemigroup ps = solve_perturbed(kScalar, DriftField::zero(1), g, 0.25);
  CHECK(ps.report().rho == 0.0);
  const Vec f = sample(g, [](const Vec& z) { return z[0]; });
  const Vec p = ps.apply(1.0, GridFunction{g, f, 8.0}).values;
  for (int i : core_nodes(*g)) CHECK(p[i] == doctest::Approx(std::exp(-1.0) * g->node(i)[0]).epsilon(1e-3));
}

TEST_CASE("constant drift") {
  // dX = (1 − X)dt + dW: E X_t = e^{-t} x + 1 − e^{-t}.
  const GridPtr g = line(128);
  const T0Choice c = choose_t0(kScalar, unit_drift());
  SolveOptions opts;
  const PerturbedSemigroup ps = solve_perturbed(kScalar, unit_drift(), g, c.t0, opts);
  const IterationReport& r = ps.report();
  CHECK(r.final_change <= opts.tol);
  CHECK(r.iterations <= std::log(opts.tol) / std::log(r.rho) + 2.0);
  CHECK(r.residual <= 1e-8);
  for (std::size_t k = 1; k < r.change_history.size(); ++k)
    CHECK(r.change_history[k] <= r.rho * r.change_history[k - 1] * (1.0 + 1e-6) + 1e-14);
  const Vec f = sample(g, [](const Vec& z) { return z[0]; });
  for (double t : {c.t0, 4.0 * c.t0, 16.0 * c.t0}) {
    const Vec p = ps.apply(t, GridFunction{g, f, 8.0}).values;
    for (int i : core_nodes(*g)) {
      if (std::abs(g->node(i)[0]) > 2.0) continue;
      const double exact = std::exp(-t) * g->node(i)[0] + 1.0 - std::exp(-t);
      CHECK(std::abs(p[i] - exact) <= 5e-3);
    }
  }
}

TEST_CASE("perturbed semigroup is Markov up to leak and positive") {
  const GridPtr g = line(128);
  const DriftField d = DriftField::sign(0.5);
  const PerturbedSemigroup ps = solve_perturbed(kScalar, d, g, choose_t0(kScalar, d).t0);
  const GridFunction one = GridFunction::constant(g, 1.0);
  for (double t : {ps.t0(), 1.0}) {
    const Vec p1 = ps.apply(t, one).values;
    const Vec leak = ps.leak(t);
    CHECK(((p1 - Vec::Ones(g->size())).cwiseAbs() - leak.cwiseAbs()).maxCoeff() <= 1e-6);
    const Vec pi = ps.apply(t, GridFunction::sample(g, [](const Vec& z) { return z[0] > 0.5 ? 1.0 : 0.0; })).values;
    CHECK(pi.minCoeff() >= -1e-8);
  }
}

TEST_CASE("Chapman-Kolmogorov on the core") {
  const GridPtr g = line(128);
  const DriftField d = DriftField::sign(0.5);
  const PerturbedSemigroup ps = solve_perturbed(kScalar, d, g, choose_t0(kScalar, d).t0);
  const GridFunction f = GridFunction::sample(g, [](const Vec& z) { return std::tanh(z[0]); });
  const Vec twice = ps.apply(ps.t0(), ps.apply(ps.t0(), f)).values;
  const Vec direct = ps.apply(2.0 * ps.t0(), f).values;
  CHECK(core_sup_diff(*g, twice, direct) <= 1e-6);
}

TEST_CASE("strong Feller modulus of P(t0)") {
  const GridPtr g = line(256);
  const DriftField d = DriftField::sign(0.5);
  const PerturbedSemigroup ps = solve_perturbed(kScalar, d, g, choose_t0(kScalar, d).t0);
  const KernelOp& k = ps.at_t0();
  const double h = g->spacing(0);
  const double bound = sf_norm(kScalar, ps.t0()) / (1.0 - ps.report().rho);
  for (int i : core_nodes(*g)) {
    const double tv = (k.weights.row(i) - k.weights.row(i + 1)).lpNorm<1>();
    CHECK(tv <= 2.0 * bound * h);
  }
}

TEST_CASE("solve rejects rho >= 1") {
  CHECK_THROWS_AS(solve_perturbed(kScalar, DriftField::sign(5.0), line(32), 1.0), NoContraction);
}

TEST_CASE("B R(lambda) shrinks as lambda grows") {
  const GridPtr g = line(128);
  const DriftField d = DriftField::sign(0.5);
  CHECK(br_lambda(kScalar, DriftField::zero(1), 5.0, g).norm == 0.0);
  double prev = 1e300;
  for (double lambda : {5.0, 10.0, 20.0, 40.0}) {
    const LaplaceKernel b = br_lambda(kScalar, d, lambda, g);
    CHECK(b.norm < prev);
    CHECK(b.norm <= b.phi_bound * (1.0 + 1e-6));
    CHECK(b.contraction);
    prev = b.norm;
  }
}

TEST_CASE("OU resolvent of a constant") {
  const GridPtr g = line(128);
  const KernelOp r = ou_resolvent(kScalar, 2.0, g);
  const Vec v = r.weights * Vec::Ones(g->size());
  for (int i : core_nodes(*g)) CHECK(v[i] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("resolvent identity") {
  const GridPtr g = line(128);
  const DriftField d = DriftField::sign(0.5);
  const PerturbedSemigroup ps = solve_perturbed(kScalar, d, g, choose_t0(kScalar, d).t0);
  const GridFunction f = GridFunction::sample(g, [](const Vec& z) { return std::exp(-z[0] * z[0]); });
  const ResolventCheck rc = resolvent_check(ps, 5.0, f, 16);
  CHECK(rc.residual <= 1e-4);
  CHECK(rc.br_norm < 1.0);
}

TEST_CASE("drift stability for mollified sign") {
  const GridPtr g = line(128);
  std::vector<DriftField> seq;
  for (double n : {2.0, 8.0, 32.0}) seq.push_back(DriftField::mollified_sign(n, 0.5));
  const auto rows = drift_stability(kScalar, seq, DriftField::sign(0.5), g, 0.5,
                                    [](const Vec& z) { return z[0] > 0.0 ? 1.0 : 0.0; });
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].gap > rows[1].gap);
  CHECK(rows[1].gap > rows[2].gap);
}

TEST_CASE("default test family") {
  const auto fam = default_test_family(1);
  CHECK(fam.size() == 5);
  Vec x(1);
  x << 0.3;
  for (const auto& [name, f] : fam) CHECK(std::abs(f(x)) <= 1e3);
}

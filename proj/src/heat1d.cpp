#include "feller/heat1d.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

#include "feller/errors.hpp"
#include "feller/quadrature.hpp"

namespace feller {

namespace {

double sf_mode(double lambda, double alpha, double t) {
  // e^{-λt} sqrt(2λ / (1 − e^{-2λt})) λ^α, stable for small and large λt.
  const double x = lambda * t;
  const double denom = -std::expm1(-2.0 * x);
  return std::exp(-x) * std::sqrt(2.0 * lambda / denom) * std::pow(lambda, alpha);
}

double substituted(const std::function<double(double)>& g, double horizon, int n) {
  return sqrt_substituted(n, horizon).integrate(g);
}

int resolve_phys(const SpectralHeatModel& model, int phys_n) {
  return phys_n > 0 ? phys_n : 2 * model.N;
}

}  // namespace

SpectralHeatModel::SpectralHeatModel(int n, double a_, double alpha_) : N(n), a(a_), alpha(alpha_) {
  if (N < 1) throw InvalidArgument("mode count must be positive");
  if (!(a > 0.0)) throw InvalidArgument("diffusivity must be positive");
  if (!(alpha >= 0.0)) throw InvalidArgument("noise exponent must be nonnegative");
}

double SpectralHeatModel::lambda(int k) const {
  const double kp = k * std::numbers::pi;
  return a * kp * kp;
}

Vec SpectralHeatModel::eigenvalues() const {
  Vec out(N);
  for (int k = 1; k <= N; ++k) out[k - 1] = lambda(k);
  return out;
}

double heat_sf_norm(const SpectralHeatModel& model, double t) {
  if (!(t > 0.0)) throw InvalidArgument("heat_sf_norm needs t > 0");
  double best = 0.0;
  for (int k = 1; k <= model.N; ++k) best = std::max(best, sf_mode(model.lambda(k), model.alpha, t));
  return best;
}

HypCheck hyp_check(const SpectralHeatModel& model, double horizon) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  const SpectralHeatModel doubled(2 * model.N, model.a, model.alpha);
  const double l1 = model.lambda(1);
  auto i1 = [&](const SpectralHeatModel& m, int n) {
    return substituted([&](double t) { return heat_sf_norm(m, t); }, horizon, n);
  };
  auto i2 = [&](int n) {
    return substituted([&](double t) { return std::exp(-2.0 * l1 * t); }, horizon, n);
  };
  HypCheck out;
  double prev = i1(model, 16);
  for (int n = 32; n <= 4096; n *= 2) {
    const double cur = i1(model, n);
    if (std::abs(cur - prev) <= 1e-12 * std::abs(cur)) {
      out.i1 = cur;
      out.nodes = n;
      out.i1_doubled = i1(doubled, n);
      out.i2 = i2(n);
      out.stable_under_n =
          std::abs(out.i1_doubled - out.i1) <= 1e-6 * std::abs(out.i1);
      return out;
    }
    prev = cur;
  }
  throw QuadratureDiverged("strong Feller norm integral does not settle under node doubling");
}

SineTransform::SineTransform(int modes, int points) : basis_(points, modes) {
  if (modes < 1 || points < 1) throw InvalidArgument("sine transform needs modes, points >= 1");
  const double h = 1.0 / (points + 1.0);
  for (int j = 0; j < points; ++j) {
    for (int k = 0; k < modes; ++k) {
      basis_(j, k) = std::numbers::sqrt2 * std::sin((k + 1) * std::numbers::pi * (j + 1) * h);
    }
  }
}

Vec SineTransform::grid() const {
  Vec x(points());
  for (int j = 0; j < points(); ++j) x[j] = (j + 1.0) / (points() + 1.0);
  return x;
}

ScalarDrift ScalarDrift::zero() {
  return {[](double) { return 0.0; }, 0.0, "zero"};
}

ScalarDrift ScalarDrift::constant(double c) {
  return {[c](double) { return c; }, std::abs(c), "constant"};
}

ScalarDrift ScalarDrift::sign(double scale) {
  return {[scale](double v) { return v > 0.0 ? scale : (v < 0.0 ? -scale : 0.0); },
          std::abs(scale), "sign"};
}

ScalarDrift ScalarDrift::mollified_sign(double n, double scale) {
  return {[n, scale](double v) { return scale * std::tanh(n * v); }, std::abs(scale),
          "tanh(" + std::to_string(static_cast<int>(n)) + "x)"};
}

HeatStepper::HeatStepper(const SpectralHeatModel& model, double dt, int phys_n)
    : dt_(dt),
      decay_(model.N),
      drift_factor_(model.N),
      noise_std_(model.N),
      transform_(model.N, resolve_phys(model, phys_n)),
      alias_risk_(resolve_phys(model, phys_n) < 2 * model.N) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  for (int k = 1; k <= model.N; ++k) {
    const double l = model.lambda(k);
    decay_[k - 1] = std::exp(-l * dt);
    drift_factor_[k - 1] = -std::expm1(-l * dt) / l;
    noise_std_[k - 1] =
        std::sqrt(-std::expm1(-2.0 * l * dt) / (2.0 * l)) * std::pow(l, -model.alpha);
  }
}

Vec HeatStepper::drift_increment(const ScalarDrift& g, const SpectralState& u) const {
  Vec phys = transform_.synthesis(u);
  for (Eigen::Index j = 0; j < phys.size(); ++j) phys[j] = g.g(phys[j]);
  return drift_factor_.cwiseProduct(transform_.analysis(phys));
}

void HeatStepper::step(const ScalarDrift& g, SpectralState& u, const Vec& xi) const {
  Vec next = decay_.cwiseProduct(u) + noise_std_.cwiseProduct(xi);
  if (!g.is_zero()) next += drift_increment(g, u);
  u = std::move(next);
}

void HeatStepper::step(const ScalarDrift& g, SpectralState& u, Rng& rng) const {
  step(g, u, standard_normal(rng, u.size()));
}

SpectralState heat_step(const SpectralHeatModel& model, const ScalarDrift& g,
                        const SpectralState& u, double dt, Rng& rng, int phys_n) {
  const HeatStepper stepper(model, dt, phys_n);
  if (stepper.alias_risk()) {
    std::clog << "warning: AliasRisk: physical grid of " << stepper.transform().points()
              << " points for " << model.N << " modes\n";
  }
  SpectralState out = u;
  stepper.step(g, out, rng);
  return out;
}

Vec heat_invariant(const SpectralHeatModel& model) {
  Vec out(model.N);
  for (int k = 1; k <= model.N; ++k) {
    const double l = model.lambda(k);
    out[k - 1] = std::pow(l, -2.0 * model.alpha) / (2.0 * l);
  }
  return out;
}

HeatStationary heat_stationary(const SpectralHeatModel& model, const ScalarDrift& g,
                               const MCConfig& cfg, double burn_in, double horizon, int phys_n,
                               int batches) {
  if (batches < 2) throw InvalidArgument("need at least two batches");
  const HeatStepper stepper(model, cfg.dt, phys_n);
  const int n = model.N;
  const long burn_steps = static_cast<long>(std::ceil(burn_in / cfg.dt));
  const long per_batch = static_cast<long>(std::ceil(horizon / cfg.dt / batches));
  if (per_batch < 1) throw InvalidArgument("horizon too short for the batch count");

  Rng rng = make_stream(cfg.seed, 0);
  SpectralState u = Vec::Zero(n);
  for (long k = 0; k < burn_steps; ++k) stepper.step(g, u, rng);

  std::vector<Vec> b1;
  std::vector<Mat> b2;
  for (int b = 0; b < batches; ++b) {
    Vec s1 = Vec::Zero(n);
    Mat s2 = Mat::Zero(n, n);
    for (long k = 0; k < per_batch; ++k) {
      stepper.step(g, u, rng);
      s1 += u;
      s2.selfadjointView<Eigen::Lower>().rankUpdate(u);
    }
    s2.triangularView<Eigen::StrictlyUpper>() = s2.transpose();
    b1.push_back(s1 / static_cast<double>(per_batch));
    b2.push_back(s2 / static_cast<double>(per_batch));
  }

  const double nb = batches;
  HeatStationary out;
  out.samples = static_cast<std::size_t>(per_batch) * batches;
  out.mean = Vec::Zero(n);
  Mat second = Mat::Zero(n, n);
  for (int b = 0; b < batches; ++b) {
    out.mean += b1[b] / nb;
    second += b2[b] / nb;
  }
  out.cov = second - out.mean * out.mean.transpose();
  Vec mean_ss = Vec::Zero(n);
  Mat cov_ss = Mat::Zero(n, n);
  for (int b = 0; b < batches; ++b) {
    mean_ss += (b1[b] - out.mean).cwiseAbs2();
    const Mat cb = b2[b] - b1[b] * b1[b].transpose();
    cov_ss += (cb - out.cov).cwiseAbs2();
  }
  out.mean_err = (mean_ss / (nb - 1.0) / nb).cwiseSqrt();
  out.cov_err = (cov_ss / (nb - 1.0) / nb).cwiseSqrt();
  return out;
}

std::vector<HeatGapRow> heat_drift_stability(const SpectralHeatModel& model,
                                             const std::vector<ScalarDrift>& seq,
                                             const ScalarDrift& limit, const HeatObservable& f,
                                             const SpectralState& u0, double t,
                                             const MCConfig& cfg, int phys_n) {
  cfg.validate();
  if (u0.size() != model.N) throw InvalidArgument("initial state has the wrong mode count");
  const HeatStepper stepper(model, cfg.dt, phys_n);
  const double r = t / cfg.dt;
  const int steps = static_cast<int>(std::round(r));
  if (std::abs(r - steps) > 1e-9 * std::max(1.0, r)) {
    throw InvalidArgument("t must be a multiple of dt");
  }
  auto run = [&](const ScalarDrift& g) {
    std::vector<double> out(cfg.n_paths);
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
      Rng rng = make_stream(cfg.seed, p);
      SpectralState u = u0;
      for (int k = 0; k < steps; ++k) stepper.step(g, u, rng);
      out[p] = f(u);
    }
    return out;
  };
  const std::vector<double> ref = run(limit);
  std::vector<HeatGapRow> rows;
  const double n = static_cast<double>(cfg.n_paths);
  for (const auto& g : seq) {
    const std::vector<double> vals = run(g);
    double mean = 0.0, diff = 0.0;
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
      mean += vals[p];
      diff += vals[p] - ref[p];
    }
    mean /= n;
    diff /= n;
    double ss = 0.0;
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
      const double d = vals[p] - ref[p] - diff;
      ss += d * d;
    }
    rows.push_back({g.label, mean, std::abs(diff), std::sqrt(ss / (n - 1.0) / n)});
  }
  return rows;
}

}  // namespace feller

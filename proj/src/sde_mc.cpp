#include "feller/sde_mc.hpp"

#include <cmath>

#include "feller/errors.hpp"
#include "feller/gaussian.hpp"

namespace feller {

namespace {

MCEstimate summarize(const std::vector<double>& values) {
  const std::size_t n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(n)), n};
}

int step_count(double t, double dt) {
  const double r = t / dt;
  const double k = std::round(r);
  if (std::abs(r - k) > 1e-9 * std::max(1.0, r)) {
    throw InvalidArgument("t must be a multiple of dt");
  }
  return static_cast<int>(k);
}

double mean_and_err(const std::vector<double>& batch, double& err) {
  const double b = static_cast<double>(batch.size());
  double m = 0.0;
  for (double v : batch) m += v;
  m /= b;
  double ss = 0.0;
  for (double v : batch) ss += (v - m) * (v - m);
  err = std::sqrt(ss / (b - 1.0) / b);
  return m;
}

}  // namespace

void MCConfig::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (n_paths < 1000) throw InvalidArgument("n_paths must be at least 1000");
}

ExpEuler::ExpEuler(const OUModel& model, double dt)
    : dt_(dt), s_(flow(model, dt)), m_(flow_integral(model, dt)) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  noise_ = psd_factor(gramian(model, dt)).sqrt_factor();
}

void ExpEuler::step(const DriftField& drift, Vec& x, Rng& rng) const {
  Vec next = s_ * x;
  if (!drift.is_zero()) next += m_ * drift(x);
  if (noise_.cols() > 0) next += noise_ * standard_normal(rng, noise_.cols());
  x = std::move(next);
}

Vec euler_step(const OUModel& model, const DriftField& drift, const Vec& x, double dt,
               Rng& rng) {
  Vec y = x;
  ExpEuler(model, dt).step(drift, y, rng);
  return y;
}

std::vector<MCEstimate> mc_transition(const OUModel& model, const DriftField& drift,
                                      const Vec& x, double t,
                                      const std::vector<ScalarField>& fs, const MCConfig& cfg) {
  cfg.validate();
  if (x.size() != model.dim()) throw InvalidArgument("start point dimension differs from model");
  const int steps = step_count(t, cfg.dt);
  const ExpEuler stepper(model, cfg.dt);
  std::vector<std::vector<double>> values(fs.size(), std::vector<double>(cfg.n_paths));
  Vec y(x.size());
  for (std::size_t p = 0; p < cfg.n_paths; ++p) {
    Rng rng = make_stream(cfg.seed, p);
    y = x;
    for (int k = 0; k < steps; ++k) stepper.step(drift, y, rng);
    for (std::size_t i = 0; i < fs.size(); ++i) values[i][p] = fs[i](y);
  }
  std::vector<MCEstimate> out;
  for (const auto& v : values) out.push_back(summarize(v));
  return out;
}

MCEstimate mc_transition(const OUModel& model, const DriftField& drift, const Vec& x, double t,
                         const ScalarField& f, const MCConfig& cfg) {
  return mc_transition(model, drift, x, t, std::vector<ScalarField>{f}, cfg).front();
}

std::vector<ZRow> mc_vs_semigroup(const PerturbedSemigroup& ps, const std::vector<Vec>& points,
                                  double t,
                                  const std::vector<std::pair<std::string, ScalarField>>& fs,
                                  const MCConfig& cfg, const SolveOptions& opts) {
  const Grid& g = *ps.grid();
  std::vector<double> lo, hi;
  std::vector<int> counts;
  for (int d = 0; d < g.dim(); ++d) {
    lo.push_back(g.lo(d));
    hi.push_back(g.hi(d));
    counts.push_back(g.count(d) / 2);
  }
  SolveOptions coarse_opts = opts;
  coarse_opts.nodes = std::max(2, ps.nodes().size() / 2);
  const PerturbedSemigroup coarse = solve_perturbed(
      ps.model(), ps.drift(), build_grid(lo, hi, counts), ps.t0(), coarse_opts);

  std::vector<ScalarField> plain;
  std::vector<GridFunction> fine_vals, coarse_vals;
  for (const auto& [name, f] : fs) {
    plain.push_back(f);
    fine_vals.push_back(ps.apply(t, GridFunction::sample(ps.grid(), f)));
    coarse_vals.push_back(coarse.apply(t, GridFunction::sample(coarse.grid(), f)));
  }

  std::vector<ZRow> rows;
  for (const Vec& x : points) {
    const auto est = mc_transition(ps.model(), ps.drift(), x, t, plain, cfg);
    for (std::size_t i = 0; i < fs.size(); ++i) {
      ZRow r;
      r.point = x;
      r.f_label = fs[i].first;
      r.mc_mean = est[i].mean;
      r.mc_std_error = est[i].std_error;
      r.grid_value = fine_vals[i].interpolate(x);
      r.budget = std::abs(r.grid_value - coarse_vals[i].interpolate(x));
      const double se = std::max(r.mc_std_error, 1e-300);
      const double diff = r.mc_mean - r.grid_value;
      r.z = diff / se;
      r.z_budget = std::max(std::abs(diff) - r.budget, 0.0) / se;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

InvariantEstimate invariant_estimate(const OUModel& model, const DriftField& drift,
                                     const MCConfig& cfg, double burn_in, double horizon,
                                     GridPtr grid, int batches) {
  if (!is_stable(model)) throw Unstable("A has an eigenvalue with nonnegative real part");
  if (!(cfg.dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (batches < 2) throw InvalidArgument("need at least two batches");
  if (grid && grid->dim() != model.dim()) throw GridMismatch("grid dimension differs");
  const int m = model.dim();
  const long burn_steps = static_cast<long>(std::ceil(burn_in / cfg.dt));
  const long per_batch = static_cast<long>(std::ceil(horizon / cfg.dt / batches));
  if (per_batch < 1) throw InvalidArgument("horizon too short for the batch count");

  const ExpEuler stepper(model, cfg.dt);
  Rng rng = make_stream(cfg.seed, 0);
  Vec x = Vec::Zero(m);
  for (long k = 0; k < burn_steps; ++k) stepper.step(drift, x, rng);

  InvariantEstimate est;
  est.batches = batches;
  est.grid = grid;
  est.samples = static_cast<std::size_t>(per_batch) * batches;
  std::vector<Vec> b_mean;
  std::vector<Mat> b_second;
  std::vector<double> b_outside;
  for (int b = 0; b < batches; ++b) {
    Vec s1 = Vec::Zero(m);
    Mat s2 = Mat::Zero(m, m);
    Vec hist = grid ? Vec::Zero(grid->size()) : Vec();
    double outside = 0.0;
    for (long k = 0; k < per_batch; ++k) {
      stepper.step(drift, x, rng);
      s1 += x;
      s2 += x * x.transpose();
      if (grid) {
        if (auto cell = grid->locate(x)) {
          hist[*cell] += 1.0;
        } else {
          outside += 1.0;
        }
      }
    }
    const double n = static_cast<double>(per_batch);
    b_mean.push_back(s1 / n);
    b_second.push_back(s2 / n);
    if (grid) est.batch_histograms.push_back(hist / n);
    b_outside.push_back(outside / n);
  }

  est.mean = Vec::Zero(m);
  est.mean_err = Vec::Zero(m);
  est.cov = Mat::Zero(m, m);
  est.cov_err = Mat::Zero(m, m);
  std::vector<double> col(batches);
  for (int i = 0; i < m; ++i) {
    for (int b = 0; b < batches; ++b) col[b] = b_mean[b][i];
    double err = 0.0;
    est.mean[i] = mean_and_err(col, err);
    est.mean_err[i] = err;
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      for (int b = 0; b < batches; ++b) {
        col[b] = b_second[b](i, j) - b_mean[b][i] * b_mean[b][j];
      }
      double err = 0.0;
      // Pooled covariance about the pooled mean; the batch spread gives the error.
      double pooled_second = 0.0;
      for (int b = 0; b < batches; ++b) pooled_second += b_second[b](i, j);
      pooled_second /= batches;
      (void)mean_and_err(col, err);
      est.cov(i, j) = pooled_second - est.mean[i] * est.mean[j];
      est.cov_err(i, j) = err;
    }
  }
  if (grid) {
    est.histogram = Vec::Zero(grid->size());
    for (const auto& h : est.batch_histograms) est.histogram += h;
    est.histogram /= batches;
  }
  for (double o : b_outside) est.outside += o;
  est.outside /= batches;
  return est;
}

InvarianceCheck invariance_identity(const PerturbedSemigroup& ps, const InvariantEstimate& est,
                                    double t, const ScalarField& f) {
  if (!est.grid) throw InvalidArgument("invariant estimate carries no histogram");
  require_same_grid(*ps.grid(), *est.grid);
  const GridFunction fg = GridFunction::sample(ps.grid(), f);
  const Vec pf = ps.apply(t, fg).values;
  const Vec delta = pf - fg.values;
  InvarianceCheck out;
  out.lhs = est.histogram.dot(pf);
  out.rhs = est.histogram.dot(fg.values);
  out.diff = out.lhs - out.rhs;
  std::vector<double> per_batch;
  for (const auto& h : est.batch_histograms) per_batch.push_back(h.dot(delta));
  (void)mean_and_err(per_batch, out.batch_err);
  return out;
}

std::vector<MixingRow> mixing_check(const PerturbedSemigroup& ps, const ScalarField& f,
                                    const Vec& x1, const Vec& x2,
                                    const std::vector<double>& t_grid) {
  const GridFunction fg = GridFunction::sample(ps.grid(), f);
  std::vector<MixingRow> rows;
  for (double t : t_grid) {
    const GridFunction pf = ps.apply(t, fg);
    rows.push_back({t, std::abs(pf.interpolate(x1) - pf.interpolate(x2))});
  }
  return rows;
}

}  // namespace feller

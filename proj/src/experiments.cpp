#include "feller/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "feller/errors.hpp"
#include "feller/gaussian.hpp"
#include "feller/heat1d.hpp"
#include "feller/ou_model.hpp"
#include "feller/perturbation.hpp"
#include "feller/rng.hpp"
#include "feller/sde_mc.hpp"

namespace feller::experiments {

namespace {

constexpr const char* kDefaults = R"({
  "seed": 0,
  "kalman": {
    "t_min": 1e-4, "t_max": 1e-1, "points": 12, "slope_tol": 0.1, "r2_min": 0.999,
    "full_noise": {"A": [[0, 1], [0, 0]], "G": [[1, 0], [0, 1]]},
    "chain": {"A": [[0, 1], [0, 0]], "G": [[0], [1]]},
    "gradient": {
      "model": {"A": [[-1, 0.5], [0, -2]], "G": [[1, 0], [0, 1]]},
      "t": 0.5, "hermite_order": 32, "fd_step": 1e-4, "pairs": 10, "tol": 1e-4
    }
  },
  "perturb": {
    "model": {"A": [[-1]], "G": [[1]]},
    "drift": {"type": "constant", "value": [1.0], "scale": 1.0, "n": 1.0, "K": [[1.0]], "clip": 1.0},
    "sign_drift": {"type": "sign", "value": [0.0], "scale": 0.5, "n": 1.0, "K": [[1.0]], "clip": 1.0},
    "grid": {"lo": [-6.0], "hi": [6.0], "counts": [256]},
    "zero_drift_counts": [128],
    "tol": 1e-10, "nodes": 16, "target_rho": 0.5,
    "t": 1.0, "oracle_radius": 2.0, "oracle_tol": 5e-3,
    "mc": {"dt": 1e-2, "n_paths": 100000}, "mc_points": [-1.0, 0.0, 1.0], "mc_sigmas": 3.0,
    "lambdas": [5.0, 10.0], "laplace_panels": 10, "laplace_per_panel": [1, 2, 4, 8, 16],
    "laplace_reference": 8, "laplace_floor": 32, "resolvent_tol": 1e-3,
    "markov_times": [0.5, 1.0, 2.0], "ball_radius": 1.0, "markov_tol": 1e-6,
    "positivity_tol": 1e-8, "ck_tol": 5e-3
  },
  "mc_validate": {
    "model": {"A": [[-1]], "G": [[1]]},
    "drift": {"type": "sign", "value": [0.0], "scale": 0.5, "n": 1.0, "K": [[1.0]], "clip": 1.0},
    "grid": {"lo": [-6.0], "hi": [6.0], "counts": [256]},
    "tol": 1e-10, "nodes": 16, "t": 1.0, "points": [-2.0, -1.0, 0.0, 1.0, 2.0],
    "mc": {"dt": 1e-3, "n_paths": 100000}, "z_max": 3.0, "pass_fraction": 0.95
  },
  "invariant": {
    "model": {"A": [[-1]], "G": [[1]]},
    "drift": {"type": "sign", "value": [0.0], "scale": 0.5, "n": 1.0, "K": [[1.0]], "clip": 1.0},
    "grid": {"lo": [-6.0], "hi": [6.0], "counts": [256]},
    "tol": 1e-10, "nodes": 16,
    "ou_dt": 1e-2, "drift_dt": 1e-3, "burn_in": 10.0, "horizon": 20000.0, "batches": 20,
    "variance_sigmas": 3.0, "identity_t": 1.0, "identity_sigmas": 2.0,
    "mixing_times": [0.5, 1.0, 2.0, 4.0], "x1": -1.0, "x2": 1.0
  },
  "heat": {
    "a": 1.0, "alpha": 0.0,
    "hyp_modes": 128, "hyp_horizon": 1.0, "hyp_rel_tol": 1e-6,
    "sf_modes": 256, "sf_t_min": 1e-4, "sf_t_max": 1e-2, "sf_points": 12, "sf_slope_tol": 0.05,
    "stationary": {"modes": 64, "dt": 1e-2, "burn_in": 5.0, "horizon": 2000.0, "batches": 20,
                   "sigmas": 3.0},
    "stability": {"modes": 32, "dt": 2e-3, "t": 0.2, "n_paths": 10000, "u0_mode1": 0.2,
                  "scale": 1.0, "ns": [1, 4, 16, 64], "floor_n": 1024},
    "grid_stability": {
      "model": {"A": [[-1]], "G": [[1]]},
      "grid": {"lo": [-6.0], "hi": [6.0], "counts": [256]},
      "tol": 1e-10, "nodes": 16, "t": 1.0, "scale": 0.5,
      "ns": [1, 4, 16, 64], "floor_n": 1024
    }
  }
})";

constexpr const char* kQuick = R"({
  "kalman": {"gradient": {"hermite_order": 24, "pairs": 4}},
  "perturb": {
    "grid": {"counts": [128]}, "mc": {"n_paths": 5000}, "mc_points": [0.0],
    "lambdas": [5.0], "laplace_per_panel": [2, 4], "laplace_floor": 16, "markov_times": [1.0]
  },
  "mc_validate": {"grid": {"counts": [64]}, "points": [-1.0, 1.0],
                  "mc": {"dt": 1e-2, "n_paths": 4000}},
  "invariant": {"grid": {"counts": [64]}, "horizon": 2000.0, "drift_dt": 1e-2},
  "heat": {
    "stationary": {"modes": 16, "horizon": 400.0},
    "stability": {"modes": 8, "n_paths": 2000, "ns": [1, 4], "floor_n": 64},
    "grid_stability": {"grid": {"counts": [64]}, "ns": [1, 4], "floor_n": 64}
  }
})";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void finish(SuiteResult& out, Check c, Clock::time_point since) {
  c.seconds = seconds_since(since);
  out.checks.push_back(std::move(c));
}

Mat to_mat(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) throw ConfigError("empty matrix");
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw ConfigError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

Vec to_vec(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

OUModel model_from(const json& j) { return OUModel(to_mat(j.at("A")), to_mat(j.at("G"))); }

DriftField drift_from(const json& j, int dim) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "zero") return DriftField::zero(dim);
  if (type == "constant") {
    const Vec c = to_vec(j.at("value"));
    if (c.size() != dim) throw ConfigError("constant drift has the wrong dimension");
    return DriftField::constant(c);
  }
  if (type == "clipped_linear") {
    return DriftField::clipped_linear(to_mat(j.at("K")), j.at("clip").get<double>());
  }
  if (type == "sign") return DriftField::sign(j.at("scale").get<double>(), dim);
  if (type == "mollified_sign") {
    return DriftField::mollified_sign(j.at("n").get<double>(), j.at("scale").get<double>(), dim);
  }
  throw ConfigError("unknown drift type '" + type + "'");
}

GridPtr grid_from(const json& j) {
  return build_grid(j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>(),
                    j.at("counts").get<std::vector<int>>());
}

SolveOptions solve_opts(const json& j) {
  SolveOptions opts;
  opts.tol = j.at("tol").get<double>();
  opts.nodes = j.at("nodes").get<int>();
  return opts;
}

MCConfig mc_from(const json& j, std::uint64_t seed) {
  MCConfig cfg;
  cfg.dt = j.at("dt").get<double>();
  cfg.n_paths = j.at("n_paths").get<std::size_t>();
  cfg.seed = seed;
  return cfg;
}

Vec snap(const Grid& g, double p) { return g.node(g.nearest_node(Vec::Constant(1, p))); }

double sup_abs(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

// Strictly decreasing until a gap is within 2x of the floor.
bool decreasing_to_floor(const std::vector<double>& gaps, double floor) {
  for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
    if (gaps[i] <= 2.0 * floor) break;
    if (!(gaps[i + 1] < gaps[i])) return false;
  }
  return true;
}

bool halving_to_floor(const std::vector<double>& residuals, double floor) {
  for (std::size_t i = 0; i + 1 < residuals.size(); ++i) {
    if (residuals[i] <= 2.0 * floor) break;
    if (!(residuals[i + 1] <= 0.5 * residuals[i])) return false;
  }
  return true;
}

std::uint64_t seed_of(const json& cfg, std::uint64_t salt) {
  return cfg.at("seed").get<std::uint64_t>() * 1000003ULL + salt;
}

const char* type_name(const json& j) {
  if (j.is_number()) return "number";
  return j.type_name();
}

void merge_into(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config at '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_into(slot, it.value(), key);
      continue;
    }
    if (std::string(type_name(slot)) != type_name(it.value())) {
      throw ConfigError("key '" + key + "' expects " + type_name(slot) + ", got " +
                        type_name(it.value()));
    }
    slot = it.value();
  }
}

ScalarField coordinate() {
  return [](const Vec& y) { return y[0]; };
}
ScalarField indicator_positive() {
  return [](const Vec& y) { return y[0] > 0.0 ? 1.0 : 0.0; };
}
ScalarField gaussian_bump() {
  return [](const Vec& y) { return std::exp(-y.squaredNorm()); };
}

}  // namespace

bool SuiteResult::pass() const {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

json default_config(bool quick) {
  json cfg = json::parse(kDefaults);
  if (quick) merge_into(cfg, json::parse(kQuick), "");
  return cfg;
}

json merge_config(const json& defaults, const json& user) {
  json out = defaults;
  try {
    merge_into(out, user, "");
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  return out;
}

std::string config_hash(const json& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : cfg.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string version() { return "feller 0.1.0"; }

// ---------------------------------------------------------------------------

SuiteResult run_kalman(const json& root) {
  const auto start = Clock::now();
  const json& cfg = root.at("kalman");
  SuiteResult out;
  out.suite = "kalman";

  const auto ts = log_spaced(cfg.at("t_min").get<double>(), cfg.at("t_max").get<double>(),
                             cfg.at("points").get<int>());
  const double slope_tol = cfg.at("slope_tol").get<double>();
  const double r2_min = cfg.at("r2_min").get<double>();
  {
    const auto section = Clock::now();
    Check c{1, "Kalman scaling of the inverse Gramian", true, json::object()};
    Table table{"kalman_scaling", {"t", "norm_full_noise", "norm_chain"}, {}};
    std::vector<ScalingFit> fits;
    for (const char* name : {"full_noise", "chain"}) {
      const ScalingFit fit = sf_scaling_fit(model_from(cfg.at(name)), ts);
      const double target = -(fit.kalman_index + 0.5);
      const bool ok = std::abs(fit.slope - target) <= slope_tol && fit.r2 >= r2_min;
      c.pass = c.pass && ok;
      c.measured[name] = {{"kalman_index", fit.kalman_index}, {"slope", fit.slope},
                          {"expected", target}, {"r2", fit.r2}, {"pass", ok}};
      fits.push_back(fit);
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
      table.rows.push_back({ts[i], fits[0].norms[i], fits[1].norms[i]});
    }
    finish(out, std::move(c), section);
    out.tables.push_back(std::move(table));

    Mat zero = Mat::Zero(2, 2);
    Mat g(2, 1);
    g << 1.0, 0.0;
    bool rejected = false;
    try {
      (void)kalman_index(OUModel(zero, g));
    } catch (const NotControllable&) {
      rejected = true;
    }
    out.diagnostics["uncontrollable_rejected"] = rejected;
  }

  {
    const auto section = Clock::now();
    const json& gc = cfg.at("gradient");
    const OUModel model = model_from(gc.at("model"));
    const double t = gc.at("t").get<double>();
    const double h = gc.at("fd_step").get<double>();
    const double tol = gc.at("tol").get<double>();
    const Hermite rule{gc.at("hermite_order").get<int>()};
    const int pairs = gc.at("pairs").get<int>();
    const std::vector<std::pair<std::string, ScalarField>> fs = {
        {"sin_sum", [](const Vec& z) { return std::sin(z.sum()); }},
        {"rational", [](const Vec& z) { return 1.0 / (1.0 + z.squaredNorm()); }},
        {"damped_cos", [](const Vec& z) { return std::exp(-0.5 * z.squaredNorm()) * std::cos(z[0]); }},
    };
    Rng rng = make_stream(seed_of(root, 9), 0);
    std::vector<std::pair<Vec, Vec>> xy;
    for (int i = 0; i < pairs; ++i) {
      xy.emplace_back(standard_normal(rng, model.dim()), standard_normal(rng, model.dim()));
    }
    Check c{9, "Gradient formula against central differences", true, json::object()};
    Table table{"gradient_check", {"f", "pair", "formula", "finite_difference", "deviation"}, {}};
    double worst = 0.0, worst_excess = -1.0;
    for (std::size_t fi = 0; fi < fs.size(); ++fi) {
      for (int i = 0; i < pairs; ++i) {
        const auto& [x, y] = xy[i];
        const Estimate g = ou_gradient(model, t, fs[fi].second, x, y, rule);
        const double up = ou_expect(model, t, fs[fi].second, x + h * y, rule).value;
        const double dn = ou_expect(model, t, fs[fi].second, x - h * y, rule).value;
        const double fd = (up - dn) / (2.0 * h);
        const double dev = std::abs(g.value - fd);
        const double bound = std::max(tol, 3.0 * g.std_error);
        worst = std::max(worst, dev);
        worst_excess = std::max(worst_excess, dev - bound);
        c.pass = c.pass && dev <= bound;
        table.rows.push_back({static_cast<double>(fi), static_cast<double>(i), g.value, fd, dev});
      }
    }
    c.measured = {{"max_deviation", worst}, {"tolerance", tol}, {"cases", fs.size() * pairs}};
    finish(out, std::move(c), section);
    out.tables.push_back(std::move(table));
  }
  out.seconds = seconds_since(start);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

json solve_summary(const PerturbedSemigroup& ps, const SolveOptions& opts) {
  const IterationReport& r = ps.report();
  const double bound = std::log(opts.tol) / std::log(r.rho) + 2.0;
  return {{"t0", ps.t0()},
          {"rho", r.rho},
          {"iterations", r.iterations},
          {"iteration_bound", r.rho > 0.0 ? bound : 1.0},
          {"final_change", r.final_change},
          {"residual", r.residual}};
}

PerturbedSemigroup solve_for(const OUModel& model, const DriftField& drift, const GridPtr& grid,
                             const SolveOptions& opts, double target_rho) {
  const T0Choice choice = choose_t0(model, drift, target_rho, opts.nodes);
  return solve_perturbed(model, drift, grid, choice.t0, opts);
}

struct MarkovResult {
  bool pass = true;
  double defect_excess = 0.0;
  double min_value = 0.0;
  double min_ball_value = 0.0;
};

MarkovResult markov_positivity(const PerturbedSemigroup& ps, const std::vector<double>& times,
                               double radius, double markov_tol, double pos_tol) {
  MarkovResult r;
  r.defect_excess = -1e300;
  r.min_value = 1e300;
  r.min_ball_value = 1e300;
  const GridFunction one = GridFunction::constant(ps.grid(), 1.0);
  const GridFunction ball =
      GridFunction::sample(ps.grid(), [radius](const Vec& y) { return y.norm() <= radius ? 1.0 : 0.0; });
  for (double t : times) {
    const Vec p1 = ps.apply(t, one).values;
    const Vec leak = ps.leak(t);
    const Vec pb = ps.apply(t, ball).values;
    for (Eigen::Index i = 0; i < p1.size(); ++i) {
      r.defect_excess = std::max(r.defect_excess, std::abs(p1[i] - 1.0) - std::abs(leak[i]));
    }
    r.min_ball_value = std::min(r.min_ball_value, pb.minCoeff());
    for (const ScalarField& fn : {indicator_positive(), gaussian_bump()}) {
      r.min_value = std::min(r.min_value, ps.apply(t, GridFunction::sample(ps.grid(), fn)).values.minCoeff());
    }
    r.min_value = std::min(r.min_value, r.min_ball_value);
  }
  r.pass = r.defect_excess <= markov_tol && r.min_value >= -pos_tol && r.min_ball_value > 0.0;
  return r;
}

}  // namespace

SuiteResult run_perturb(const json& root) {
  const auto start = Clock::now();
  const json& cfg = root.at("perturb");
  SuiteResult out;
  out.suite = "perturb";

  const OUModel model = model_from(cfg.at("model"));
  const int dim = model.dim();
  const SolveOptions opts = solve_opts(cfg);
  const double target_rho = cfg.at("target_rho").get<double>();
  const GridPtr grid = grid_from(cfg.at("grid"));

  // Zero drift.
  {
    const auto section = Clock::now();
    json zg = cfg.at("grid");
    zg["counts"] = cfg.at("zero_drift_counts");
    const GridPtr zgrid = grid_from(zg);
    const PerturbedSemigroup ps = solve_for(model, DriftField::zero(dim), zgrid, opts, target_rho);
    double max_diff = 0.0;
    for (std::size_t k = 0; k < ps.family().size(); ++k) {
      max_diff = std::max(max_diff,
                          (ps.family()[k].weights - ps.ou_kernels()[k].weights).cwiseAbs().maxCoeff());
    }
    double max_res = 0.0;
    for (const auto& [name, f] : default_test_family(dim)) {
      for (double r : ps.residual(GridFunction::sample(zgrid, f))) max_res = std::max(max_res, r);
    }
    Check c{2, "Zero drift reproduces the OU kernels", max_diff <= 1e-12 && max_res == 0.0,
            {{"max_kernel_difference", max_diff}, {"max_residual", max_res},
             {"iterations", ps.report().iterations}}};
    finish(out, std::move(c), section);
  }

  // The shared solves count towards the constant-drift criterion.
  const auto shared = Clock::now();
  const DriftField drift = drift_from(cfg.at("drift"), dim);
  const DriftField sign_drift = drift_from(cfg.at("sign_drift"), dim);
  const PerturbedSemigroup ps = solve_for(model, drift, grid, opts, target_rho);
  const PerturbedSemigroup ps_sign = solve_for(model, sign_drift, grid, opts, target_rho);
  out.diagnostics["drift_solve"] = solve_summary(ps, opts);
  out.diagnostics["sign_drift_solve"] = solve_summary(ps_sign, opts);

  // Constant-drift oracle: E X_t = S(t)x + M(t)c.
  {
    const auto section = shared;
    const double t = cfg.at("t").get<double>();
    const double radius = cfg.at("oracle_radius").get<double>();
    const double tol = cfg.at("oracle_tol").get<double>();
    const Mat s = flow(model, t);
    const Mat mt = flow_integral(model, t);
    const Vec c0 = drift(Vec::Zero(dim));
    auto exact = [&](const Vec& x) { return (s * x + mt * c0)[0]; };
    const Vec pf = ps.apply(t, GridFunction::sample(grid, coordinate())).values;
    Table table{"constant_drift_oracle", {"x", "semigroup", "exact"}, {}};
    double worst = 0.0;
    for (int i = 0; i < grid->size(); ++i) {
      const Vec x = grid->node(i);
      if (x.norm() > radius) continue;
      worst = std::max(worst, std::abs(pf[i] - exact(x)));
      table.rows.push_back({x[0], pf[i], exact(x)});
    }
    const MCConfig mc = mc_from(cfg.at("mc"), seed_of(root, 3));
    const double sigmas = cfg.at("mc_sigmas").get<double>();
    json mc_rows = json::array();
    bool mc_ok = true;
    for (double p : cfg.at("mc_points").get<std::vector<double>>()) {
      const Vec x = snap(*grid, p);
      const MCEstimate e = mc_transition(model, drift, x, t, coordinate(), mc);
      const double z = (e.mean - exact(x)) / e.std_error;
      mc_ok = mc_ok && std::abs(z) <= sigmas;
      mc_rows.push_back({{"x", x[0]}, {"mean", e.mean}, {"std_error", e.std_error},
                         {"exact", exact(x)}, {"z", z}});
    }
    Check c{3, "Constant drift matches the shifted-mean oracle", worst <= tol && mc_ok,
            {{"max_error", worst}, {"tolerance", tol}, {"mc", mc_rows}}};
    finish(out, std::move(c), section);
    out.tables.push_back(std::move(table));
  }

  // Integral-equation residual.
  {
    const auto section = Clock::now();
    const double limit = 10.0 * opts.tol;
    const double r1 = ps.report().residual, r2 = ps_sign.report().residual;
    Check c{4, "Integral-equation residual at every stored node", r1 <= limit && r2 <= limit,
            {{"drift_residual", r1}, {"sign_drift_residual", r2}, {"limit", limit}}};
    finish(out, std::move(c), section);
  }

  // Resolvent identity.
  {
    const auto section = Clock::now();
    const auto per_panel = cfg.at("laplace_per_panel").get<std::vector<int>>();
    const int panels = cfg.at("laplace_panels").get<int>();
    const int reference = cfg.at("laplace_reference").get<int>();
    const int floor_pp = cfg.at("laplace_floor").get<int>();
    const double tol = cfg.at("resolvent_tol").get<double>();
    const GridFunction f = GridFunction::sample(grid, coordinate());
    Table table{"resolvent", {"lambda", "per_panel", "residual", "br_norm"}, {}};
    Check c{5, "Resolvent identity", true, json::object()};
    for (double lambda : cfg.at("lambdas").get<std::vector<double>>()) {
      std::vector<double> res;
      for (int pp : per_panel) {
        const ResolventCheck rc = resolvent_check(ps, lambda, f, pp, panels);
        res.push_back(rc.residual);
        table.rows.push_back({lambda, static_cast<double>(pp), rc.residual, rc.br_norm});
      }
      const ResolventCheck ref = resolvent_check(ps, lambda, f, reference, panels);
      const ResolventCheck fl = resolvent_check(ps, lambda, f, floor_pp, panels);
      table.rows.push_back({lambda, static_cast<double>(floor_pp), fl.residual, fl.br_norm});
      const bool ok = ref.residual <= tol && halving_to_floor(res, fl.residual);
      c.pass = c.pass && ok;
      c.measured[std::to_string(static_cast<int>(lambda))] = {
          {"residual", ref.residual}, {"per_panel", reference}, {"br_norm", ref.br_norm},
          {"sequence", res}, {"floor", fl.residual}, {"pass", ok}};
    }
    c.measured["tolerance"] = tol;
    finish(out, std::move(c), section);
    out.tables.push_back(std::move(table));
  }

  // Markov defect and positivity.
  {
    const auto section = Clock::now();
    const auto times = cfg.at("markov_times").get<std::vector<double>>();
    const double radius = cfg.at("ball_radius").get<double>();
    const double mtol = cfg.at("markov_tol").get<double>();
    const double ptol = cfg.at("positivity_tol").get<double>();
    const MarkovResult a = markov_positivity(ps, times, radius, mtol, ptol);
    const MarkovResult b = markov_positivity(ps_sign, times, radius, mtol, ptol);
    auto js = [](const MarkovResult& r) {
      return json{{"defect_minus_leak", r.defect_excess}, {"min_value", r.min_value},
                  {"min_ball_value", r.min_ball_value}, {"pass", r.pass}};
    };
    Check c{7, "Markov defect within leak budget, positivity and irreducibility",
            a.pass && b.pass, {{"drift", js(a)}, {"sign_drift", js(b)}}};
    finish(out, std::move(c), section);
  }

  // Chapman–Kolmogorov against an independent solve on [0, 2 t0].
  {
    const auto section = Clock::now();
    const double tol = cfg.at("ck_tol").get<double>();
    Check c{8, "Chapman-Kolmogorov for P", true, json::object()};
    for (const auto* p : {&ps, &ps_sign}) {
      const PerturbedSemigroup twice = solve_perturbed(model, p->drift(), grid, 2.0 * p->t0(), opts);
      double worst = 0.0, edge = 0.0;
      for (const auto& [name, fn] : default_test_family(dim)) {
        const GridFunction f = GridFunction::sample(grid, fn);
        const Vec lhs = twice.apply(2.0 * p->t0(), f).values;
        const Vec rhs = p->apply(p->t0(), p->apply(p->t0(), f)).values;
        worst = std::max(worst, core_sup_diff(*grid, lhs, rhs));
        edge = std::max(edge, sup_abs(lhs - rhs));
      }
      const bool ok = worst <= tol;
      c.pass = c.pass && ok;
      c.measured[p == &ps ? "drift" : "sign_drift"] = {
          {"core_sup_difference", worst}, {"full_grid_sup_difference", edge}, {"t0", p->t0()},
          {"rho_2t0", twice.report().rho}};
    }
    c.measured["tolerance"] = tol;
    finish(out, std::move(c), section);
  }
  out.seconds = seconds_since(start);
  return out;
}

// ---------------------------------------------------------------------------

SuiteResult run_mc_validate(const json& root) {
  const auto start = Clock::now();
  const json& cfg = root.at("mc_validate");
  SuiteResult out;
  out.suite = "mc-validate";
  const OUModel model = model_from(cfg.at("model"));
  const DriftField drift = drift_from(cfg.at("drift"), model.dim());
  const GridPtr grid = grid_from(cfg.at("grid"));
  const SolveOptions opts = solve_opts(cfg);
  const PerturbedSemigroup ps = solve_for(model, drift, grid, opts, 0.5);
  out.diagnostics["solve"] = solve_summary(ps, opts);

  std::vector<Vec> points;
  for (double p : cfg.at("points").get<std::vector<double>>()) points.push_back(snap(*grid, p));
  const std::vector<std::pair<std::string, ScalarField>> fs = {
      {"coordinate", coordinate()},
      {"indicator_positive", indicator_positive()},
      {"gaussian_bump", gaussian_bump()}};
  const auto rows = mc_vs_semigroup(ps, points, cfg.at("t").get<double>(), fs,
                                    mc_from(cfg.at("mc"), seed_of(root, 6)), opts);
  const double z_max = cfg.at("z_max").get<double>();
  Table table{"mc_vs_semigroup",
              {"x", "f", "mc_mean", "mc_std_error", "grid_value", "budget", "z", "z_budget"},
              {}};
  int ok = 0;
  double worst = 0.0;
  for (const auto& r : rows) {
    ok += std::abs(r.z_budget) <= z_max;
    worst = std::max(worst, std::abs(r.z_budget));
    double fi = 0.0;
    for (std::size_t k = 0; k < fs.size(); ++k) {
      if (fs[k].first == r.f_label) fi = static_cast<double>(k);
    }
    table.rows.push_back(
        {r.point[0], fi, r.mc_mean, r.mc_std_error, r.grid_value, r.budget, r.z, r.z_budget});
  }
  const double fraction = static_cast<double>(ok) / static_cast<double>(rows.size());
  const auto& section = start;
  Check c{6, "Monte Carlo agrees with the perturbed semigroup",
          fraction >= cfg.at("pass_fraction").get<double>(),
          {{"fraction_within", fraction}, {"pairs", rows.size()}, {"max_abs_z_budget", worst},
           {"z_max", z_max}}};
  finish(out, std::move(c), section);
  out.tables.push_back(std::move(table));
  out.seconds = seconds_since(start);
  return out;
}

// ---------------------------------------------------------------------------

SuiteResult run_invariant(const json& root) {
  const auto start = Clock::now();
  const json& cfg = root.at("invariant");
  SuiteResult out;
  out.suite = "invariant";
  const OUModel model = model_from(cfg.at("model"));
  const DriftField drift = drift_from(cfg.at("drift"), model.dim());
  const GridPtr grid = grid_from(cfg.at("grid"));
  const SolveOptions opts = solve_opts(cfg);
  const double burn_in = cfg.at("burn_in").get<double>();
  const double horizon = cfg.at("horizon").get<double>();
  const int batches = cfg.at("batches").get<int>();

  const auto& section = start;
  Check c{10, "Invariant measure, invariance identity and mixing", true, json::object()};

  MCConfig ou_cfg;
  ou_cfg.dt = cfg.at("ou_dt").get<double>();
  ou_cfg.seed = seed_of(root, 10);
  const InvariantEstimate ou = invariant_estimate(model, DriftField::zero(model.dim()), ou_cfg,
                                                  burn_in, horizon, nullptr, batches);
  const double expected = stationary_covariance(model)(0, 0);
  const double var_sigmas = cfg.at("variance_sigmas").get<double>();
  const bool var_ok = std::abs(ou.cov(0, 0) - expected) <= var_sigmas * ou.cov_err(0, 0);
  c.measured["ou_variance"] = {{"estimate", ou.cov(0, 0)}, {"batch_error", ou.cov_err(0, 0)},
                               {"expected", expected}, {"pass", var_ok}};

  const PerturbedSemigroup ps = solve_for(model, drift, grid, opts, 0.5);
  out.diagnostics["solve"] = solve_summary(ps, opts);
  MCConfig d_cfg = ou_cfg;
  d_cfg.dt = cfg.at("drift_dt").get<double>();
  d_cfg.seed = seed_of(root, 11);
  const InvariantEstimate est = invariant_estimate(model, drift, d_cfg, burn_in, horizon, grid, batches);
  const InvarianceCheck ic = invariance_identity(ps, est, cfg.at("identity_t").get<double>(), gaussian_bump());
  const double id_sigmas = cfg.at("identity_sigmas").get<double>();
  const bool id_ok = std::abs(ic.diff) <= id_sigmas * ic.batch_err;
  c.measured["invariance_identity"] = {{"integral_pf", ic.lhs}, {"integral_f", ic.rhs},
                                       {"difference", ic.diff}, {"batch_error", ic.batch_err},
                                       {"pass", id_ok}};
  out.diagnostics["sign_drift_moments"] = {{"mean", est.mean[0]}, {"mean_error", est.mean_err[0]},
                                           {"variance", est.cov(0, 0)},
                                           {"variance_error", est.cov_err(0, 0)},
                                           {"outside_mass", est.outside}};

  const auto times = cfg.at("mixing_times").get<std::vector<double>>();
  const Vec x1 = snap(*grid, cfg.at("x1").get<double>());
  const Vec x2 = snap(*grid, cfg.at("x2").get<double>());
  const auto mix = mixing_check(ps, indicator_positive(), x1, x2, times);
  Table table{"mixing", {"t", "gap"}, {}};
  std::vector<double> gaps;
  for (const auto& r : mix) {
    gaps.push_back(r.gap);
    table.rows.push_back({r.t, r.gap});
  }
  const bool mix_ok = decreasing_to_floor(gaps, 0.0);
  c.measured["mixing"] = {{"x1", x1[0]}, {"x2", x2[0]}, {"gaps", gaps}, {"pass", mix_ok}};
  c.pass = var_ok && id_ok && mix_ok;

  bool unstable_rejected = false;
  try {
    (void)invariant_estimate(OUModel::scalar(1.0, 1.0), DriftField::zero(1), ou_cfg, 1.0, 1.0);
  } catch (const Unstable&) {
    unstable_rejected = true;
  }
  out.diagnostics["unstable_rejected"] = unstable_rejected;
  finish(out, std::move(c), section);
  out.tables.push_back(std::move(table));
  out.seconds = seconds_since(start);
  return out;
}

// ---------------------------------------------------------------------------

SuiteResult run_heat(const json& root) {
  const auto start = Clock::now();
  const json& cfg = root.at("heat");
  SuiteResult out;
  out.suite = "heat";
  const double a = cfg.at("a").get<double>();
  const double alpha = cfg.at("alpha").get<double>();

  {
    const auto section = Clock::now();
    Check c{11, "Heat equation hypotheses and stationary variance", true, json::object()};
    const SpectralHeatModel hyp_model(cfg.at("hyp_modes").get<int>(), a, alpha);
    const HypCheck hc = hyp_check(hyp_model, cfg.at("hyp_horizon").get<double>());
    const double rel = std::abs(hc.i1_doubled - hc.i1) / hc.i1;
    const bool hyp_ok = std::isfinite(hc.i1) && rel <= cfg.at("hyp_rel_tol").get<double>();
    c.measured["hypotheses"] = {{"i1", hc.i1}, {"i1_doubled_modes", hc.i1_doubled},
                                {"relative_change", rel}, {"i2", hc.i2}, {"nodes", hc.nodes},
                                {"pass", hyp_ok}};

    const SpectralHeatModel sf_model(cfg.at("sf_modes").get<int>(), a, alpha);
    const auto ts = log_spaced(cfg.at("sf_t_min").get<double>(), cfg.at("sf_t_max").get<double>(),
                               cfg.at("sf_points").get<int>());
    Table table{"heat_sf_norm", {"t", "sf_norm"}, {}};
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double t : ts) {
      const double v = heat_sf_norm(sf_model, t);
      table.rows.push_back({t, v});
      const double lx = std::log(t), ly = std::log(v);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double n = static_cast<double>(ts.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double expected_slope = -0.5 - alpha;
    const bool slope_ok = std::abs(slope - expected_slope) <= cfg.at("sf_slope_tol").get<double>();
    c.measured["sf_slope"] = {{"slope", slope}, {"expected", expected_slope}, {"pass", slope_ok}};
    out.tables.push_back(std::move(table));

    const json& sc = cfg.at("stationary");
    const SpectralHeatModel st_model(sc.at("modes").get<int>(), a, alpha);
    MCConfig mc;
    mc.dt = sc.at("dt").get<double>();
    mc.seed = seed_of(root, 11);
    const HeatStationary st = heat_stationary(st_model, ScalarDrift::zero(), mc,
                                              sc.at("burn_in").get<double>(),
                                              sc.at("horizon").get<double>(), 0,
                                              sc.at("batches").get<int>());
    const double target = heat_invariant(st_model)[0];
    const bool var_ok =
        std::abs(st.cov(0, 0) - target) <= sc.at("sigmas").get<double>() * st.cov_err(0, 0);
    c.measured["mode1_variance"] = {{"estimate", st.cov(0, 0)}, {"batch_error", st.cov_err(0, 0)},
                                    {"expected", target}, {"pass", var_ok}};
    int decoupled = 0, pairs = 0;
    for (int i = 0; i < st_model.N; ++i) {
      for (int j = 0; j < i; ++j) {
        ++pairs;
        decoupled += std::abs(st.cov(i, j)) <= 3.0 * st.cov_err(i, j);
      }
    }
    out.diagnostics["cross_mode_within_3_sigma"] =
        pairs ? static_cast<double>(decoupled) / pairs : 1.0;
    c.pass = hyp_ok && slope_ok && var_ok;
    finish(out, std::move(c), section);
  }

  {
    const auto section = Clock::now();
    Check c{12, "Mollified sign drifts converge to the sign drift", true, json::object()};

    const json& gc = cfg.at("grid_stability");
    const OUModel model = model_from(gc.at("model"));
    const GridPtr grid = grid_from(gc.at("grid"));
    const double scale = gc.at("scale").get<double>();
    auto ns = gc.at("ns").get<std::vector<double>>();
    ns.push_back(gc.at("floor_n").get<double>());
    std::vector<DriftField> seq;
    for (double n : ns) seq.push_back(DriftField::mollified_sign(n, scale, model.dim()));
    const auto rows = drift_stability(model, seq, DriftField::sign(scale, model.dim()), grid,
                                      gc.at("t").get<double>(), indicator_positive(),
                                      solve_opts(gc));
    std::vector<double> gaps;
    Table gt{"grid_drift_stability", {"n", "gap"}, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      gt.rows.push_back({ns[i], rows[i].gap});
      if (i + 1 < rows.size()) gaps.push_back(rows[i].gap);
    }
    const double grid_floor = rows.back().gap;
    const bool grid_ok = decreasing_to_floor(gaps, grid_floor);
    c.measured["grid"] = {{"n", json(std::vector<double>(ns.begin(), ns.end() - 1))},
                          {"gaps", gaps}, {"floor", grid_floor}, {"pass", grid_ok}};
    out.tables.push_back(std::move(gt));

    const json& hc = cfg.at("stability");
    const SpectralHeatModel hm(hc.at("modes").get<int>(), a, alpha);
    MCConfig mc;
    mc.dt = hc.at("dt").get<double>();
    mc.n_paths = hc.at("n_paths").get<std::size_t>();
    mc.seed = seed_of(root, 12);
    const double hscale = hc.at("scale").get<double>();
    auto hns = hc.at("ns").get<std::vector<double>>();
    hns.push_back(hc.at("floor_n").get<double>());
    std::vector<ScalarDrift> hseq;
    for (double n : hns) hseq.push_back(ScalarDrift::mollified_sign(n, hscale));
    Vec mid(hm.N);
    for (int k = 1; k <= hm.N; ++k) mid[k - 1] = std::numbers::sqrt2 * std::sin(k * std::numbers::pi * 0.5);
    const HeatObservable f = [mid](const SpectralState& u) {
      const double v = mid.dot(u);
      return std::exp(-v * v);
    };
    SpectralState u0 = Vec::Zero(hm.N);
    u0[0] = hc.at("u0_mode1").get<double>();
    const auto hrows = heat_drift_stability(hm, hseq, ScalarDrift::sign(hscale), f, u0,
                                            hc.at("t").get<double>(), mc);
    std::vector<double> hgaps;
    Table ht{"heat_drift_stability", {"n", "estimate", "gap", "gap_std_error"}, {}};
    for (std::size_t i = 0; i < hrows.size(); ++i) {
      ht.rows.push_back({hns[i], hrows[i].estimate, hrows[i].gap, hrows[i].gap_err});
      if (i + 1 < hrows.size()) hgaps.push_back(hrows[i].gap);
    }
    const double heat_floor = hrows.back().gap + 2.0 * hrows.back().gap_err;
    const bool heat_ok = decreasing_to_floor(hgaps, heat_floor);
    c.measured["heat"] = {{"n", json(std::vector<double>(hns.begin(), hns.end() - 1))},
                          {"gaps", hgaps}, {"floor", heat_floor}, {"pass", heat_ok}};
    out.tables.push_back(std::move(ht));
    c.pass = grid_ok && heat_ok;
    finish(out, std::move(c), section);
  }
  out.seconds = seconds_since(start);
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"kalman", "perturb", "mc-validate", "invariant",
                                                 "heat"};
  return names;
}

SuiteResult run_suite(const std::string& name, const json& cfg) {
  if (name == "kalman") return run_kalman(cfg);
  if (name == "perturb") return run_perturb(cfg);
  if (name == "mc-validate") return run_mc_validate(cfg);
  if (name == "invariant") return run_invariant(cfg);
  if (name == "heat") return run_heat(cfg);
  throw InvalidArgument("unknown suite '" + name + "'");
}

json make_report(const json& cfg, const std::vector<SuiteResult>& results) {
  json report;
  report["version"] = version();
  report["config_hash"] = config_hash(cfg);
  report["config"] = cfg;
  json suites = json::array();
  json criteria = json::object();
  bool all = true;
  for (const auto& r : results) {
    json checks = json::array();
    for (const auto& c : r.checks) {
      checks.push_back({{"criterion", c.criterion}, {"name", c.name}, {"pass", c.pass},
                        {"measured", c.measured}});
      criteria[std::to_string(c.criterion)] = c.pass;
      all = all && c.pass;
    }
    suites.push_back({{"suite", r.suite}, {"pass", r.pass()}, {"checks", checks},
                      {"diagnostics", r.diagnostics}});
  }
  report["suites"] = suites;
  report["criteria"] = criteria;
  report["pass"] = all;
  return report;
}

void write_tables(const std::string& dir, const json& cfg,
                  const std::vector<SuiteResult>& results) {
  std::filesystem::create_directories(dir);
  const std::string hash = config_hash(cfg);
  for (const auto& r : results) {
    for (const auto& t : r.tables) {
      std::ofstream os(std::filesystem::path(dir) / (t.name + ".csv"));
      if (!os) throw InvalidArgument("cannot write " + t.name + ".csv in " + dir);
      os << "# config_hash=" << hash << " suite=" << r.suite << "\n";
      for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
      os << "\n";
      char buf[32];
      for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%.17g", row[i]);
          os << (i ? "," : "") << buf;
        }
        os << "\n";
      }
    }
  }
}

}  // namespace feller::experiments

#include "feller/ou_model.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "feller/errors.hpp"
#include "feller/quadrature.hpp"

namespace feller {

OUModel::OUModel(Mat a, Mat g) : A(std::move(a)), G(std::move(g)) {
  if (A.rows() < 1 || A.rows() != A.cols()) throw InvalidArgument("A must be square, m >= 1");
  if (G.rows() != A.rows() || G.cols() < 1) throw InvalidArgument("G must be m x n, n >= 1");
  if (!A.allFinite() || !G.allFinite()) throw InvalidArgument("model entries must be finite");
}

OUModel OUModel::scalar(double a, double g) {
  return OUModel(Mat::Constant(1, 1, a), Mat::Constant(1, 1, g));
}

Mat flow(const OUModel& model, double t) {
  if (t < 0.0) throw InvalidArgument("flow needs t >= 0");
  const int m = model.dim();
  if (t == 0.0) return Mat::Identity(m, m);
  const Mat ta = t * model.A;
  const double norm = ta.operatorNorm();
  if (norm > 700.0) throw Overflow("||tA|| = " + std::to_string(norm) + " > 700");
  if (m == 1) return Mat::Constant(1, 1, std::exp(ta(0, 0)));
  return ta.exp();
}

namespace {

int panel_count(const OUModel& model, double t) {
  const double scale = model.A.operatorNorm() * t;
  return std::max(1, static_cast<int>(std::ceil(scale)));
}

template <class Integrand>
Mat panel_gl(double t, int panels, int nodes, int rows, int cols, Integrand&& g) {
  Mat acc = Mat::Zero(rows, cols);
  const double h = t / panels;
  for (int p = 0; p < panels; ++p) {
    const Rule rule = gauss_legendre(nodes, p * h, (p + 1) * h);
    for (std::size_t i = 0; i < rule.size(); ++i) acc += rule.weights[i] * g(rule.nodes[i]);
  }
  return acc;
}

template <class Integrand>
Mat adaptive_gl(const OUModel& model, double t, int nodes, int rows, int cols,
                Integrand&& g) {
  const int panels = panel_count(model, t);
  Mat prev = panel_gl(t, panels, nodes, rows, cols, g);
  double diff = 0.0;
  for (int n = 2 * nodes; n <= 64; n *= 2) {
    Mat next = panel_gl(t, panels, n, rows, cols, g);
    const double scale = std::max(next.cwiseAbs().maxCoeff(), 1e-300);
    diff = (next - prev).cwiseAbs().maxCoeff() / scale;
    prev = std::move(next);
    if (diff <= 1e-14) return prev;
  }
  if (diff > 1e-8) {
    throw QuadratureDiverged("refinement levels disagree by " + std::to_string(diff));
  }
  return prev;
}

Mat lyapunov_rk4(const OUModel& model, double t, double step) {
  const Mat ggt = model.G * model.G.transpose();
  auto rhs = [&](const Mat& q) -> Mat {
    return model.A * q + q * model.A.transpose() + ggt;
  };
  const int steps = std::max(1, static_cast<int>(std::ceil(t / step)));
  const double h = t / steps;
  Mat q = Mat::Zero(model.dim(), model.dim());
  for (int k = 0; k < steps; ++k) {
    const Mat k1 = rhs(q);
    const Mat k2 = rhs(q + 0.5 * h * k1);
    const Mat k3 = rhs(q + 0.5 * h * k2);
    const Mat k4 = rhs(q + h * k3);
    q += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return q;
}

}  // namespace

Mat flow_integral(const OUModel& model, double t) {
  if (t < 0.0) throw InvalidArgument("flow_integral needs t >= 0");
  const int m = model.dim();
  if (t == 0.0) return Mat::Zero(m, m);
  return adaptive_gl(model, t, 8, m, m, [&](double s) { return flow(model, s); });
}

Mat gramian(const OUModel& model, double t, const GramianOptions& opts) {
  if (t < 0.0) throw InvalidArgument("gramian needs t >= 0");
  const int m = model.dim();
  if (t == 0.0) return Mat::Zero(m, m);
  Mat q;
  if (opts.rule == GramianRule::kLyapunovOde) {
    q = lyapunov_rk4(model, t, opts.step);
  } else {
    q = adaptive_gl(model, t, opts.nodes, m, m, [&](double s) -> Mat {
      const Mat sg = flow(model, s) * model.G;
      return sg * sg.transpose();
    });
  }
  return 0.5 * (q + q.transpose());
}

Mat GramianCurve::at(double t) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
  }
  Mat q = gramian(model_, t, opts_);
  std::lock_guard<std::mutex> lock(mu_);
  return cache_.emplace(t, std::move(q)).first->second;
}

Estimate ou_expect(const OUModel& model, double t, const ScalarField& f,
                   const Vec& x, const ExpectMethod& method) {
  if (t < 0.0) throw InvalidArgument("ou_expect needs t >= 0");
  if (t == 0.0) return {f(x), 0.0, 1};
  const GaussianMeasure gm{flow(model, t) * x, gramian(model, t)};
  return gauss_expect(gm, f, method);
}

Estimate ou_gradient(const OUModel& model, double t, const ScalarField& f,
                     const Vec& x, const Vec& y, const ExpectMethod& method) {
  if (!(t > 0.0)) throw InvalidArgument("ou_gradient needs t > 0");
  const Mat s = flow(model, t);
  const Mat q = gramian(model, t);
  const CameronMartin cm(q);
  const Vec weight = cm.pw_vector(s * y);
  const Vec mean = s * x;
  const GaussianMeasure centred{Vec::Zero(model.dim()), q};
  return gauss_expect(
      centred, [&](const Vec& z) { return f(mean + z) * weight.dot(z); }, method);
}

double sf_norm(const OUModel& model, double t, double tol) {
  if (!(t > 0.0)) throw InvalidArgument("sf_norm needs t > 0");
  const Mat s = flow(model, t);
  const CameronMartin cm(gramian(model, t), tol);
  for (int j = 0; j < s.cols(); ++j) {
    const Vec col = s.col(j);
    if (cm.range_residual(col) > kRangeTol * col.norm()) {
      throw NotStrongFeller("S(t)e_" + std::to_string(j) + " not in H_{Q_t}", col);
    }
  }
  const int r = cm.rank();
  const Mat u = cm.eigvecs().leftCols(r);
  const Mat scaled =
      cm.eigvals().head(r).cwiseSqrt().cwiseInverse().asDiagonal() * (u.transpose() * s);
  return scaled.operatorNorm();
}

double q_inv_sqrt_norm(const OUModel& model, double t, double tol) {
  if (!(t > 0.0)) throw InvalidArgument("q_inv_sqrt_norm needs t > 0");
  const CameronMartin cm(gramian(model, t), tol);
  if (cm.rank() < cm.dim()) {
    throw NotStrongFeller("Q_t is numerically singular",
                          cm.eigvecs().col(cm.dim() - 1));
  }
  return 1.0 / std::sqrt(cm.eigvals()[cm.dim() - 1]);
}

int kalman_index(const OUModel& model, double tol) {
  const int m = model.dim();
  const int n = model.noise_dim();
  Mat krylov(m, 0);
  Mat block = model.G;
  for (int j = 0; j < m; ++j) {
    Mat next(m, krylov.cols() + n);
    next << krylov, block;
    krylov = std::move(next);
    Eigen::JacobiSVD<Mat> svd(krylov);
    const Vec sv = svd.singularValues();
    int rank = 0;
    if (sv.size() > 0 && sv[0] > 0.0) {
      for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv[i] > tol * sv[0];
    }
    if (rank == m) return j;
    block = model.A * block;
  }
  throw NotControllable("rank[G, AG, ..., A^{m-1}G] < m");
}

std::vector<double> log_spaced(double lo, double hi, int n) {
  if (!(lo > 0.0 && hi > lo) || n < 2) throw InvalidArgument("log_spaced needs 0 < lo < hi, n >= 2");
  std::vector<double> out(n);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) out[i] = std::exp(a + (b - a) * i / (n - 1));
  return out;
}

ScalingFit sf_scaling_fit(const OUModel& model, std::span<const double> t_grid) {
  if (t_grid.size() < 3) throw InvalidArgument("scaling fit needs >= 3 times");
  ScalingFit fit;
  fit.kalman_index = kalman_index(model);
  const auto n = static_cast<double>(t_grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (double t : t_grid) {
    const double v = q_inv_sqrt_norm(model, t);
    fit.times.push_back(t);
    fit.norms.push_back(v);
    const double x = std::log(t), y = std::log(v);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double cxx = sxx - sx * sx / n;
  const double cxy = sxy - sx * sy / n;
  const double cyy = syy - sy * sy / n;
  fit.slope = cxy / cxx;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.r2 = cyy > 0.0 ? (cxy * cxy) / (cxx * cyy) : 1.0;
  return fit;
}

bool is_stable(const OUModel& model) {
  const Eigen::VectorXcd ev = model.A.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i].real() >= 0.0) return false;
  }
  return true;
}

Mat stationary_covariance(const OUModel& model) {
  if (!is_stable(model)) throw Unstable("A has an eigenvalue with nonnegative real part");
  const int m = model.dim();
  const Mat eye = Mat::Identity(m, m);
  // vec(AQ + QAᵀ) = (I ⊗ A + A ⊗ I) vec(Q)
  Mat kron(m * m, m * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      kron.block(i * m, j * m, m, m) = eye(i, j) * model.A + model.A(i, j) * eye;
    }
  }
  const Mat ggt = model.G * model.G.transpose();
  const Vec rhs = -Eigen::Map<const Vec>(ggt.data(), m * m);
  const Vec sol = kron.partialPivLu().solve(rhs);
  Mat q = Eigen::Map<const Mat>(sol.data(), m, m);
  return 0.5 * (q + q.transpose());
}

}  // namespace feller

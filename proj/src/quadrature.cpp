#include "feller/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <utility>

#include "feller/errors.hpp"

namespace feller {

namespace {

// Golub–Welsch: symmetric tridiagonal Jacobi matrix with zero diagonal.
Rule golub_welsch(int n, double mass, double (*offdiag)(int)) {
  Mat jacobi = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = offdiag(k);
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(jacobi);
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = eig.eigenvalues()[i];
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights[i] = mass * v0 * v0;
  }
  // Symmetrize: both weight functions are even.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

double legendre_offdiag(int k) {
  const double kk = static_cast<double>(k);
  return kk / std::sqrt(4.0 * kk * kk - 1.0);
}

double hermite_offdiag(int k) { return std::sqrt(static_cast<double>(k)); }

const Rule& cached(std::map<int, Rule>& cache, std::mutex& mu, int n,
                   double mass, double (*offdiag)(int)) {
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, golub_welsch(n, mass, offdiag)).first;
  }
  return it->second;
}

}  // namespace

Rule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw InvalidArgument("gauss_legendre needs n >= 1");
  static std::map<int, Rule> cache;
  static std::mutex mu;
  const Rule& ref = cached(cache, mu, n, 2.0, legendre_offdiag);
  Rule rule = ref;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = mid + half * ref.nodes[i];
    rule.weights[i] = half * ref.weights[i];
  }
  return rule;
}

Rule gauss_hermite(int n) {
  if (n < 1) throw InvalidArgument("gauss_hermite needs n >= 1");
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return cached(cache, mu, n, 1.0, hermite_offdiag);
}

Rule sqrt_substituted(int n, double T) {
  if (!(T > 0.0)) throw InvalidArgument("sqrt_substituted needs T > 0");
  const Rule u = gauss_legendre(n, 0.0, std::sqrt(T));
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = u.nodes[i] * u.nodes[i];
    rule.weights[i] = 2.0 * u.nodes[i] * u.weights[i];
  }
  return rule;
}

Rule laplace_rule(double lambda, int per_panel, int panels, double tail_tol) {
  if (!(lambda > 0.0)) throw InvalidArgument("laplace_rule needs lambda > 0");
  if (panels < 1) throw InvalidArgument("laplace_rule needs panels >= 1");
  const double tau = -std::log(tail_tol) / lambda;
  const double eps = tau / std::ldexp(1.0, panels - 1);
  Rule rule;
  auto append = [&](const Rule& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      rule.nodes.push_back(r.nodes[i]);
      rule.weights.push_back(r.weights[i] * std::exp(-lambda * r.nodes[i]));
    }
  };
  append(sqrt_substituted(per_panel, eps));
  double lo = eps;
  for (int p = 1; p < panels; ++p) {
    append(gauss_legendre(per_panel, lo, 2.0 * lo));
    lo *= 2.0;
  }
  return rule;
}

}  // namespace feller

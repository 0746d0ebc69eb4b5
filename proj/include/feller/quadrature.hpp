#pragma once

#include <vector>

#include "feller/types.hpp"

namespace feller {

/// Nodes and weights of a one-dimensional quadrature rule.
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  template <class F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

/// Gauss–Legendre rule on [a, b] (Golub–Welsch; results are cached).
Rule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Gauss–Hermite rule for the standard normal: sum_i w_i g(x_i) ≈ E g(ξ),
/// ξ ~ N(0,1). Weights sum to one.
Rule gauss_hermite(int n);

/// Rule on [0, T] for integrands with an integrable r^{-1/2} singularity at
/// zero: r = u^2 with u Gauss–Legendre on [0, sqrt(T)], weight 2u du.
/// Nodes are increasing and the weights sum to T.
Rule sqrt_substituted(int n, double T);

/// Rule for ∫_0^∞ e^{-λ t} g(t) dt. The interval [0, τ] with e^{-λτ} below
/// `tail_tol` is split into geometric panels [0, ε], [ε, 2ε], ... ; the first
/// panel uses the square-root substitution, the others plain Gauss–Legendre
/// with `per_panel` nodes. The weights include the factor e^{-λ t}.
Rule laplace_rule(double lambda, int per_panel, int panels = 10,
                  double tail_tol = 1e-12);

}  // namespace feller

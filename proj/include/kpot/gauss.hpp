#pragma once

#include <vector>

namespace kpot {

/// Nodes and weights of a one-dimensional Gauss rule.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int size() const { return static_cast<int>(nodes.size()); }
};

/// Gauss-Legendre on [-1, 1]. Rules up to order 128 are cached; the returned
/// reference stays valid for the program lifetime.
const GaussRule& gauss_legendre(int order);

/// Gauss-Hermite for the weight exp(-x^2) on the real line.
GaussRule gauss_hermite(int order);

/// sum_k w_k f(x_k) over [a, b] with the order-`order` Gauss-Legendre rule.
template <typename F>
double gauss_integrate(F&& f, double a, double b, int order) {
  const GaussRule& g = gauss_legendre(order);
  const double h = 0.5 * (b - a), m = 0.5 * (a + b);
  double acc = 0;
  for (int k = 0; k < g.size(); ++k) acc += g.weights[k] * f(m + h * g.nodes[k]);
  return acc * h;
}

}  // namespace kpot

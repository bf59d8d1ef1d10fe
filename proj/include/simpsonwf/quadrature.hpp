#ifndef SIMPSONWF_QUADRATURE_HPP
#define SIMPSONWF_QUADRATURE_HPP

#include "simpsonwf/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace simpsonwf {

/// Gauss-Jacobi rule on [0,1] for the Beta(a, b) probability measure, i.e.
/// weight y^{a-1} (1-y)^{b-1} / B(a, b). Weights sum to 1, so
/// sum_i w_i f(y_i) approximates E_Beta(a,b)[f].
struct GaussJacobiRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <typename F> double expect(F &&f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

/// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the monic
/// Jacobi polynomials, weights the squared first eigenvector components.
inline GaussJacobiRule gauss_jacobi(int order, double a, double b) {
  detail::require(order >= 1, ErrorKind::invalid_argument, "quadrature order must be >= 1");
  detail::require(a > 0.0 && b > 0.0, ErrorKind::invalid_argument, "Beta parameters must be > 0");
  // On [-1,1] the weight is (1-x)^alpha (1+x)^beta with y = (1+x)/2.
  const double alpha = b - 1.0;
  const double beta = a - 1.0;
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::VectorXd diag(n), sub(std::max<Eigen::Index>(n - 1, 1));
  const double ab = alpha + beta;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double kk = static_cast<double>(k);
    if (k == 0) {
      diag[k] = (beta - alpha) / (ab + 2.0);
    } else {
      const double t = 2.0 * kk + ab;
      diag[k] = (beta * beta - alpha * alpha) / (t * (t + 2.0));
    }
  }
  for (Eigen::Index k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    const double t = 2.0 * kk + ab;
    double b2;
    if (k == 1)
      b2 = 4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
    else
      b2 = 4.0 * kk * (kk + alpha) * (kk + beta) * (kk + ab) / (t * t * (t + 1.0) * (t - 1.0));
    sub[k - 1] = std::sqrt(b2);
  }
  GaussJacobiRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  if (n == 1) {
    rule.nodes[0] = 0.5 * (1.0 + diag[0]);
    rule.weights[0] = 1.0;
    return rule;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::ComputeEigenvectors);
  detail::require(solver.info() == Eigen::Success, ErrorKind::numerical_domain, "Golub-Welsch eigensolve failed");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v0 = solver.eigenvectors()(0, i);
    rule.nodes[static_cast<std::size_t>(i)] = std::clamp(0.5 * (1.0 + solver.eigenvalues()[i]), 0.0, 1.0);
    rule.weights[static_cast<std::size_t>(i)] = v0 * v0;
    total += v0 * v0;
  }
  for (double &w : rule.weights) w /= total;
  return rule;
}

/// log B(a, b).
inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

} // namespace simpsonwf

#endif // SIMPSONWF_QUADRATURE_HPP

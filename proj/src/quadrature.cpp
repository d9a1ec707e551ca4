#include "longit/quadrature.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace longit {

namespace {

// Orthonormal Hermite values p_0..p_Q at x; returns p_Q, its derivative and
// sum_{k<Q} p_k^2.
struct HermiteEval {
  double value;
  double derivative;
  double sum_sq;
};

HermiteEval orthonormal_hermite(int Q, double x) {
  double prev = 0.0;
  double cur = std::pow(std::numbers::pi, -0.25);
  double sum_sq = 0.0;
  for (int k = 0; k < Q; ++k) {
    sum_sq += cur * cur;
    const double next = std::sqrt(2.0 / (k + 1)) * x * cur - std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
    prev = cur;
    cur = next;
  }
  return {cur, std::sqrt(2.0 * Q) * prev, sum_sq};
}

GaussHermiteRule compute_rule(int Q) {
  // Golub-Welsch for a starting point, then Newton on p_Q.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(Q, Q);
  for (int k = 1; k < Q; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Eigen::VectorXd x = es.eigenvalues();
  for (int i = 0; i < Q; ++i) {
    for (int it = 0; it < 10; ++it) {
      const auto h = orthonormal_hermite(Q, x(i));
      if (h.derivative == 0.0) break;
      const double dx = h.value / h.derivative;
      x(i) -= dx;
      if (std::abs(dx) < 1e-15 * (1.0 + std::abs(x(i)))) break;
    }
  }
  GaussHermiteRule rule;
  rule.nodes.resize(Q);
  rule.weights.resize(Q);
  for (int i = 0; i < Q; ++i) {
    // Enforce exact symmetry about 0.
    const double xi = 0.5 * (x(i) - x(Q - 1 - i));
    rule.nodes(i) = (2 * i + 1 == Q) ? 0.0 : xi;
  }
  for (int i = 0; i < Q; ++i) rule.weights(i) = 1.0 / orthonormal_hermite(Q, rule.nodes(i)).sum_sq;
  for (int i = 0; i < Q / 2; ++i) {
    const double w = 0.5 * (rule.weights(i) + rule.weights(Q - 1 - i));
    rule.weights(i) = rule.weights(Q - 1 - i) = w;
  }
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int Q) {
  if (Q < 1 || Q > 100) throw std::invalid_argument("gauss_hermite: Q must lie in [1, 100]");
  static std::array<std::unique_ptr<GaussHermiteRule>, 101> cache;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  auto& slot = cache[static_cast<std::size_t>(Q)];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(compute_rule(Q));
  return *slot;
}

}  // namespace longit

#pragma once

#include <Eigen/Dense>

namespace longit {

/// Physicists' Gauss-Hermite rule for the weight exp(-x^2).
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Q-point rule, 1 <= Q <= 100; throws std::invalid_argument otherwise.
/// Rules are cached, so repeated calls are cheap.
[[nodiscard]] const GaussHermiteRule& gauss_hermite(int Q);

}  // namespace longit

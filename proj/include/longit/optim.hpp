#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace longit {

/// Objective to minimize.
using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Five-point central differences with step h * max(1, |x_k|).
[[nodiscard]] Eigen::VectorXd numerical_gradient(const Objective& f, const Eigen::VectorXd& x, double h = 1e-3);

/// Central-difference Hessian from function values.
[[nodiscard]] Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x, double h = 1e-4);

struct OptimOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // max-norm
  double gradient_step = 1e-3;
  double hessian_step = 1e-4;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// BFGS with numerical gradients and backtracking line search.
[[nodiscard]] OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& options = {});

/// Newton-Raphson with finite-difference Hessians; indefinite Hessians are
/// shifted towards the identity and steps are halved until f decreases.
[[nodiscard]] OptimResult minimize_newton(const Objective& f, Eigen::VectorXd x0, const OptimOptions& options = {});

}  // namespace longit

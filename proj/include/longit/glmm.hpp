#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longit/dataset.hpp"
#include "longit/formula.hpp"
#include "longit/optim.hpp"

namespace longit {

enum class QuadratureMode { Adaptive, Nonadaptive };
enum class Optimizer { QuasiNewton, NewtonRaphson };

[[nodiscard]] const char* to_string(QuadratureMode m);
[[nodiscard]] const char* to_string(Optimizer o);
[[nodiscard]] QuadratureMode parse_quadrature_mode(const std::string& s);
[[nodiscard]] Optimizer parse_optimizer(const std::string& s);

struct QuadratureSpec {
  QuadratureMode mode = QuadratureMode::Adaptive;
  int points = 0;  // 0 picks the default: 20 adaptive, 50 nonadaptive

  [[nodiscard]] int resolved_points() const;
};

/// Log marginal likelihood of one subject's observed outcomes given the
/// fixed-effect linear predictors `eta` and random-intercept sd `sigma`.
/// Throws NumericalError when adaptive mode cannot locate the mode.
[[nodiscard]] double subject_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, double sigma,
                                    const QuadratureSpec& quadrature);

/// Same with eta = X beta.
[[nodiscard]] double subject_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                    double sigma, const QuadratureSpec& quadrature);

/// Sum of subject_loglik over a design.
[[nodiscard]] double glmm_loglik(const DesignSet& design, const Eigen::VectorXd& beta, double sigma,
                                 const QuadratureSpec& quadrature);

struct GlmmSpec {
  Formula formula;
  QuadratureSpec quadrature;
  Optimizer optimizer = Optimizer::QuasiNewton;
  /// Start at beta = 0, sigma = 1 instead of all 0.5.
  bool zero_start = false;
  std::optional<Eigen::VectorXd> start_beta;
  std::optional<double> start_sigma;
  /// Hold sigma at this value (0 gives ordinary logistic regression).
  std::optional<double> fixed_sigma;
  OptimOptions optim;
  /// sigma below this is reported as a boundary estimate.
  double boundary_sigma = 1e-2;
};

struct GlmmFit {
  Eigen::VectorXd beta;
  double sigma = 0.0;
  double loglik = 0.0;
  /// Covariance of (beta, log sigma) from the inverse negative Hessian; the
  /// log-sigma row/column is absent when sigma is fixed. NaN when the
  /// Hessian is not positive definite.
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd hessian;   // of the negative log-likelihood
  Eigen::VectorXd gradient;  // of the negative log-likelihood
  QuadratureSpec quadrature;
  Optimizer optimizer = Optimizer::QuasiNewton;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool boundary = false;
  /// Gradient small but Hessian indefinite at the reported point.
  bool seemingly_converged = false;
  bool sigma_fixed = false;
  std::size_t n_subjects = 0;
  std::vector<std::string> names;
  std::vector<std::string> warnings;

  [[nodiscard]] double gradient_norm() const { return gradient.size() ? gradient.cwiseAbs().maxCoeff() : 0.0; }
  [[nodiscard]] Eigen::VectorXd beta_se() const;
  [[nodiscard]] double sigma_se() const;
  [[nodiscard]] double sigma2() const { return sigma * sigma; }
  [[nodiscard]] double sigma2_se() const;
};

/// Maximizes the quadrature log-likelihood over the observed outcomes.
/// Throws NumericalError when the optimizer does not converge.
[[nodiscard]] GlmmFit fit_glmm(const LongDataset& dataset, const GlmmSpec& spec);
[[nodiscard]] GlmmFit fit_glmm(const DesignSet& design, const GlmmSpec& spec);

struct ScanCell {
  QuadratureMode mode = QuadratureMode::Adaptive;
  Optimizer optimizer = Optimizer::QuasiNewton;
  int Q = 0;
  std::optional<GlmmFit> fit;
  std::string status;  // "ok", "seemingly-converged", "boundary" or the error
};

struct ScanStability {
  QuadratureMode mode;
  Optimizer optimizer;
  int q_max = 0;
  int q_half = 0;
  double difference = 0.0;
  bool stable = false;
};

struct ScanResult {
  std::string param;  // focal parameter
  std::size_t param_index = 0;
  std::vector<ScanCell> cells;  // Q fastest, then optimizer, then mode
  std::vector<ScanStability> stability;

  /// One row per fit: mode,optimizer,Q,param,estimate,loglik,status.
  void write_csv(std::ostream& out) const;
};

/// Fits every (mode, optimizer, Q) combination; failures are recorded in
/// the cell status. `param` names the focal coefficient (default: the last
/// design column).
[[nodiscard]] ScanResult quadrature_scan(const LongDataset& dataset, const GlmmSpec& spec, const std::vector<int>& q_list,
                                         const std::vector<QuadratureMode>& modes,
                                         const std::vector<Optimizer>& optimizers, const std::string& param = "");

/// E[expit(eta + b)], b ~ N(0, sigma^2).
[[nodiscard]] double marginalize_mean(double eta, double sigma);
[[nodiscard]] double marginalize_mean(const Eigen::VectorXd& beta, double sigma, const Eigen::RowVectorXd& x);

/// c = 16 sqrt(3) / (15 pi).
[[nodiscard]] double attenuation_constant();
/// sqrt(c^2 sigma^2 + 1).
[[nodiscard]] double attenuation_ratio(double sigma);

}  // namespace longit

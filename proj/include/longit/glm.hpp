#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace longit {

/// Logistic inverse link, saturating without overflow for large |eta|.
[[nodiscard]] double expit(double eta);
[[nodiscard]] double logit(double mu);

/// mu(1 - mu). Throws std::domain_error outside [0, 1].
[[nodiscard]] double bernoulli_variance(double mu);

/// log(1 + exp(x)) without overflow.
[[nodiscard]] double log1pexp(double x);

/// The logit link as a value type; the only link in scope.
struct LinkSpec {
  const char* name = "logit";
  [[nodiscard]] double forward(double mu) const { return logit(mu); }
  [[nodiscard]] double inverse(double eta) const { return expit(eta); }
  /// d mu / d eta
  [[nodiscard]] double derivative(double eta) const {
    const double mu = expit(eta);
    return mu * (1.0 - mu);
  }
};

struct GlmOptions {
  int max_iterations = 100;
  double score_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  /// |beta_k| beyond this on the logit scale is reported as separation.
  double separation_bound = 30.0;
};

struct GlmFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // inverse weighted Fisher information
  Eigen::VectorXd score;       // at beta
  double deviance = 0.0;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> names;

  [[nodiscard]] Eigen::VectorXd standard_errors() const { return covariance.diagonal().cwiseSqrt(); }
};

/// Weighted Bernoulli log-likelihood sum_i w_i [y_i eta_i - log(1 + e^eta_i)].
[[nodiscard]] double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& weights, const Eigen::VectorXd& beta);

/// X' W (y - mu).
[[nodiscard]] Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& weights, const Eigen::VectorXd& beta);

/// IRLS / Fisher scoring with step-halving. Throws DataError when X is rank
/// deficient on the positively weighted rows and NumericalError on
/// separation (a coefficient diverging past the separation bound).
[[nodiscard]] GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& prior_weights, std::vector<std::string> names = {},
                                  const GlmOptions& options = {});

}  // namespace longit

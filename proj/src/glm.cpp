#include "longit/glm.hpp"

#include <cmath>
#include <stdexcept>

#include "longit/error.hpp"
#include "longit/formula.hpp"

namespace longit {

double expit(double eta) {
  if (eta >= 0) {
    const double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double mu) { return std::log(mu) - std::log1p(-mu); }

double bernoulli_variance(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::domain_error("bernoulli_variance: mean outside [0, 1]");
  return mu * (1.0 - mu);
}

double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += weights(i) * (y(i) * eta(i) - log1pexp(eta(i)));
  return ll;
}

Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) r(i) = weights(i) * (y(i) - expit(eta(i)));
  return X.transpose() * r;
}

namespace {

Eigen::MatrixXd information(const Eigen::MatrixXd& X, const Eigen::VectorXd& weights, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double mu = expit(eta(i));
    w(i) = weights(i) * mu * (1.0 - mu);
  }
  return X.transpose() * w.asDiagonal() * X;
}

}  // namespace

GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& prior_weights,
                    std::vector<std::string> names, const GlmOptions& options) {
  const auto m = X.rows();
  const auto p = X.cols();
  if (y.size() != m || prior_weights.size() != m)
    throw std::invalid_argument("fit_logistic: X, y and weights disagree in length");
  if (names.empty())
    for (Eigen::Index k = 0; k < p; ++k) names.push_back("x" + std::to_string(k));
  for (Eigen::Index i = 0; i < m; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("fit_logistic: response must be 0/1");
    if (!(prior_weights(i) >= 0.0) || !std::isfinite(prior_weights(i)))
      throw DataError("fit_logistic: prior weights must be finite and nonnegative");
  }
  {
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m; ++i)
      if (prior_weights(i) > 0) support.push_back(i);
    Eigen::MatrixXd Xs(static_cast<Eigen::Index>(support.size()), p);
    for (std::size_t r = 0; r < support.size(); ++r) Xs.row(static_cast<Eigen::Index>(r)) = X.row(support[r]);
    check_full_rank(Xs, names);
  }

  GlmFit fit;
  fit.names = names;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = logistic_loglik(X, y, prior_weights, beta);
  Eigen::VectorXd score = logistic_score(X, y, prior_weights, beta);

  auto check_separation = [&](const Eigen::VectorXd& b) {
    for (Eigen::Index k = 0; k < p; ++k)
      if (std::abs(b(k)) > options.separation_bound)
        throw NumericalError("fit_logistic: separation detected; coefficient '" + names[static_cast<std::size_t>(k)] +
                             "' diverges (|beta| > " + std::to_string(options.separation_bound) + ")");
  };

  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    const Eigen::MatrixXd info = information(X, prior_weights, beta);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericalError("fit_logistic: information matrix is not positive definite");
    Eigen::VectorXd step = ldlt.solve(score);

    double t = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double ll_new = logistic_loglik(X, y, prior_weights, candidate);
    for (int h = 0; h < 30 && !(ll_new >= ll - 1e-12 * std::abs(ll)); ++h) {
      t *= 0.5;
      candidate = beta + t * step;
      ll_new = logistic_loglik(X, y, prior_weights, candidate);
    }
    const double rel_change =
        (candidate - beta).cwiseAbs().maxCoeff() / (1.0 + candidate.cwiseAbs().maxCoeff());
    beta = candidate;
    ll = ll_new;
    check_separation(beta);
    score = logistic_score(X, y, prior_weights, beta);
    if (score.cwiseAbs().maxCoeff() < options.score_tolerance && rel_change < options.step_tolerance) {
      fit.converged = true;
      break;
    }
  }

  const Eigen::MatrixXd info = information(X, prior_weights, beta);
  fit.beta = beta;
  fit.covariance = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  fit.score = score;
  fit.loglik = ll;
  fit.deviance = -2.0 * ll;
  return fit;
}

}  // namespace longit

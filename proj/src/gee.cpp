#include "longit/gee.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "longit/error.hpp"
#include "longit/glm.hpp"

namespace longit {

const char* to_string(CorrStructure s) {
  switch (s) {
    case CorrStructure::Independence: return "ind";
    case CorrStructure::Exchangeable: return "exch";
    case CorrStructure::AR1: return "ar1";
    case CorrStructure::Unstructured: return "un";
  }
  return "?";
}

CorrStructure parse_corr_structure(const std::string& s) {
  if (s == "ind" || s == "independence") return CorrStructure::Independence;
  if (s == "exch" || s == "exchangeable" || s == "cs") return CorrStructure::Exchangeable;
  if (s == "ar1") return CorrStructure::AR1;
  if (s == "un" || s == "unstructured") return CorrStructure::Unstructured;
  throw DataError("unknown working correlation '" + s + "'");
}

double WorkingCorrelation::distance(const WorkingCorrelation& other) const {
  double d = std::abs(alpha - other.alpha);
  if (alpha_matrix.size() > 0 && alpha_matrix.size() == other.alpha_matrix.size())
    d = std::max(d, (alpha_matrix - other.alpha_matrix).cwiseAbs().maxCoeff());
  return d;
}

Eigen::MatrixXd correlation_matrix(const WorkingCorrelation& corr, const std::vector<std::size_t>& occasions,
                                   std::size_t n_occasions) {
  const auto m = static_cast<Eigen::Index>(occasions.size());
  Eigen::MatrixXd C = Eigen::MatrixXd::Identity(m, m);
  switch (corr.structure) {
    case CorrStructure::Independence: break;
    case CorrStructure::Exchangeable: {
      const double lower = n_occasions > 1 ? -1.0 / static_cast<double>(n_occasions - 1) : -1.0;
      if (!(corr.alpha > lower && corr.alpha < 1.0))
        throw DataError("exchangeable correlation " + std::to_string(corr.alpha) + " outside (" +
                        std::to_string(lower) + ", 1)");
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < m; ++k)
          if (j != k) C(j, k) = corr.alpha;
      break;
    }
    case CorrStructure::AR1: {
      if (!(std::abs(corr.alpha) < 1.0))
        throw DataError("AR(1) correlation " + std::to_string(corr.alpha) + " outside (-1, 1)");
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < m; ++k) {
          const auto lag = occasions[static_cast<std::size_t>(j)] > occasions[static_cast<std::size_t>(k)]
                               ? occasions[static_cast<std::size_t>(j)] - occasions[static_cast<std::size_t>(k)]
                               : occasions[static_cast<std::size_t>(k)] - occasions[static_cast<std::size_t>(j)];
          C(j, k) = std::pow(corr.alpha, static_cast<double>(lag));
        }
      break;
    }
    case CorrStructure::Unstructured: {
      const auto n = static_cast<Eigen::Index>(n_occasions);
      if (corr.alpha_matrix.rows() != n || corr.alpha_matrix.cols() != n)
        throw DataError("unstructured correlation has the wrong dimension");
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < m; ++k)
          if (j != k) {
            const double a = corr.alpha_matrix(static_cast<Eigen::Index>(occasions[static_cast<std::size_t>(j)]),
                                               static_cast<Eigen::Index>(occasions[static_cast<std::size_t>(k)]));
            if (!(std::abs(a) < 1.0)) throw DataError("unstructured correlation entry outside (-1, 1)");
            C(j, k) = a;
          }
      break;
    }
  }
  return C;
}

Eigen::VectorXd pearson_residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  Eigen::VectorXd e(y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const double v = bernoulli_variance(mu(j));
    if (!(v > 0.0)) throw NumericalError("pearson_residuals: fitted mean is 0 or 1");
    e(j) = (y(j) - mu(j)) / std::sqrt(v);
  }
  return e;
}

WorkingCorrelation estimate_alpha(const std::vector<ResidualBlock>& blocks, CorrStructure structure,
                                  std::size_t n_occasions, std::vector<std::string>* warnings) {
  WorkingCorrelation corr;
  corr.structure = structure;
  if (structure == CorrStructure::Independence) return corr;

  auto weight = [](const ResidualBlock& b, Eigen::Index j) { return b.weights.size() ? b.weights(j) : 1.0; };

  if (structure == CorrStructure::Exchangeable) {
    double num = 0.0, den = 0.0;
    bool any = false;
    for (const auto& b : blocks) {
      const auto m = b.e.size();
      if (m < 2) continue;
      any = true;
      const double scale = 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1));
      double pn = 0.0, pd = 0.0;
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < m; ++k) {
          if (j == k) continue;
          const double w = std::sqrt(weight(b, j) * weight(b, k));
          pn += w * b.e(j) * b.e(k);
          pd += w;
        }
      num += scale * pn;
      den += scale * pd;
    }
    if (!any) throw NumericalError("estimate_alpha: no subject has two or more observed occasions");
    corr.alpha = num / den;
    return corr;
  }

  if (structure == CorrStructure::AR1) {
    double num = 0.0, den = 0.0;
    bool any = false;
    for (const auto& b : blocks) {
      if (b.e.size() >= 2) any = true;
      for (Eigen::Index j = 0; j + 1 < b.e.size(); ++j) {
        if (b.occasions[static_cast<std::size_t>(j) + 1] != b.occasions[static_cast<std::size_t>(j)] + 1) continue;
        const double w = std::sqrt(weight(b, j) * weight(b, j + 1));
        num += w * b.e(j) * b.e(j + 1);
        den += w;
      }
    }
    if (!any) throw NumericalError("estimate_alpha: no subject has two or more observed occasions");
    if (den == 0.0) throw NumericalError("estimate_alpha: no adjacent observed occasion pairs for AR(1)");
    corr.alpha = num / den;
    return corr;
  }

  // Unstructured
  const auto n = static_cast<Eigen::Index>(n_occasions);
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(n, n), den = Eigen::MatrixXd::Zero(n, n);
  bool any = false;
  for (const auto& b : blocks) {
    if (b.e.size() >= 2) any = true;
    for (Eigen::Index j = 0; j < b.e.size(); ++j)
      for (Eigen::Index k = 0; k < b.e.size(); ++k) {
        if (j == k) continue;
        const auto oj = static_cast<Eigen::Index>(b.occasions[static_cast<std::size_t>(j)]);
        const auto ok = static_cast<Eigen::Index>(b.occasions[static_cast<std::size_t>(k)]);
        const double w = std::sqrt(weight(b, j) * weight(b, k));
        num(oj, ok) += w * b.e(j) * b.e(k);
        den(oj, ok) += w;
      }
  }
  if (!any) throw NumericalError("estimate_alpha: no subject has two or more observed occasions");
  corr.alpha_matrix = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) {
      if (j == k) continue;
      if (den(j, k) > 0) {
        corr.alpha_matrix(j, k) = num(j, k) / den(j, k);
      } else {
        corr.alpha_matrix(j, k) = 0.0;
        if (warnings && j < k)
          warnings->push_back("unstructured correlation cell (" + std::to_string(j + 1) + "," +
                              std::to_string(k + 1) + ") has no supporting subjects; set to 0");
      }
    }
  return corr;
}

namespace {

// Per-subject pieces in the whitened form: with s = sqrt(mu(1-mu)) and
// omega = sqrt(w), D' W^{1/2} V^{-1} W^{1/2} = B' C^{-1} diag(omega / s)
// where B = diag(s * omega) X.
struct SubjectTerms {
  Eigen::MatrixXd B;
  Eigen::VectorXd r;  // omega * pearson residual
  Eigen::VectorXd e;  // unweighted pearson residual
};

SubjectTerms subject_terms(const SubjectDesign& sd, const Eigen::VectorXd* w, const Eigen::VectorXd& beta) {
  SubjectTerms t;
  const Eigen::VectorXd eta = sd.X * beta;
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j) mu(j) = expit(eta(j));
  t.e = pearson_residuals(sd.y, mu);
  Eigen::VectorXd sw(eta.size());
  t.r.resize(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const double omega = w ? std::sqrt((*w)(j)) : 1.0;
    sw(j) = std::sqrt(mu(j) * (1.0 - mu(j))) * omega;
    t.r(j) = omega * t.e(j);
  }
  t.B = sw.asDiagonal() * sd.X;
  return t;
}

Eigen::LLT<Eigen::MatrixXd> factor_correlation(const WorkingCorrelation& corr, const SubjectDesign& sd,
                                               std::size_t n_occasions) {
  Eigen::LLT<Eigen::MatrixXd> llt(correlation_matrix(corr, sd.occasions, n_occasions));
  if (llt.info() != Eigen::Success) throw NumericalError("working covariance V_i is singular or indefinite");
  return llt;
}

const Eigen::VectorXd* weights_for(const ObservationWeights& weights, std::size_t i) {
  return weights.empty() ? nullptr : &weights[i];
}

struct Accumulated {
  Eigen::VectorXd score;
  Eigen::MatrixXd I0;
  Eigen::MatrixXd I1;
  std::vector<ResidualBlock> blocks;
  std::size_t n = 0;
};

Accumulated accumulate(const DesignSet& design, const ObservationWeights& weights, const Eigen::VectorXd& beta,
                       const WorkingCorrelation& corr, std::size_t n_occasions, bool want_meat) {
  const auto p = beta.size();
  Accumulated acc;
  acc.score = Eigen::VectorXd::Zero(p);
  acc.I0 = Eigen::MatrixXd::Zero(p, p);
  if (want_meat) acc.I1 = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t i = 0; i < design.subjects.size(); ++i) {
    const auto& sd = design.subjects[i];
    if (sd.X.rows() == 0) continue;
    ++acc.n;
    const auto t = subject_terms(sd, weights_for(weights, i), beta);
    const auto llt = factor_correlation(corr, sd, n_occasions);
    const Eigen::MatrixXd CiB = llt.solve(t.B);
    const Eigen::VectorXd u = CiB.transpose() * t.r;
    acc.score += u;
    acc.I0.noalias() += t.B.transpose() * CiB;
    if (want_meat) acc.I1.noalias() += u * u.transpose();
  }
  return acc;
}

std::vector<ResidualBlock> residual_blocks(const DesignSet& design, const ObservationWeights& weights,
                                           const Eigen::VectorXd& beta) {
  std::vector<ResidualBlock> blocks;
  blocks.reserve(design.subjects.size());
  for (std::size_t i = 0; i < design.subjects.size(); ++i) {
    const auto& sd = design.subjects[i];
    if (sd.X.rows() == 0) continue;
    const Eigen::VectorXd eta = sd.X * beta;
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index j = 0; j < eta.size(); ++j) mu(j) = expit(eta(j));
    ResidualBlock b;
    b.e = pearson_residuals(sd.y, mu);
    b.occasions = sd.occasions;
    if (!weights.empty()) b.weights = weights[i];
    blocks.push_back(std::move(b));
  }
  return blocks;
}

Eigen::MatrixXd symmetric_inverse(const Eigen::MatrixXd& M, const char* what) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()))
    throw NumericalError(std::string(what) + " is singular");
  Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
  return 0.5 * (inv + inv.transpose());
}

}  // namespace

Eigen::VectorXd gee_score(const DesignSet& design, const ObservationWeights& weights, const Eigen::VectorXd& beta,
                          const WorkingCorrelation& corr, std::size_t n_occasions) {
  return accumulate(design, weights, beta, corr, n_occasions, false).score;
}

SandwichParts sandwich_covariance(const DesignSet& design, const ObservationWeights& weights,
                                  const Eigen::VectorXd& beta, const WorkingCorrelation& corr,
                                  std::size_t n_occasions, bool small_sample_correction) {
  auto acc = accumulate(design, weights, beta, corr, n_occasions, true);
  SandwichParts parts;
  parts.I0 = acc.I0;
  parts.I1 = acc.I1;
  if (small_sample_correction && acc.n > 1)
    parts.I1 *= static_cast<double>(acc.n) / static_cast<double>(acc.n - 1);
  parts.model_based = symmetric_inverse(parts.I0, "I0");
  parts.sandwich = parts.model_based * parts.I1 * parts.model_based;
  parts.sandwich = 0.5 * (parts.sandwich + parts.sandwich.transpose()).eval();
  return parts;
}

GeeFit fit_gee(const DesignSet& design, const ObservationWeights& weights, CorrStructure structure,
               std::size_t n_occasions, const GeeOptions& options) {
  if (!weights.empty() && weights.size() != design.subjects.size())
    throw std::invalid_argument("fit_gee: weights are not aligned with the design");
  GeeFit fit;
  fit.names = design.columns;

  // Step 1: independence GLM on the stacked observed rows.
  Eigen::VectorXd stacked_w(static_cast<Eigen::Index>(design.n_rows()));
  {
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < design.subjects.size(); ++i) {
      const auto m = design.subjects[i].X.rows();
      stacked_w.segment(r, m) = weights.empty() ? Eigen::VectorXd::Ones(m) : weights[i];
      r += m;
    }
  }
  if (stacked_w.size() == 0) throw DataError("fit_gee: no observed outcomes");
  Eigen::VectorXd beta = fit_logistic(design.stacked_X(), design.stacked_y(), stacked_w, design.columns).beta;

  WorkingCorrelation previous;
  previous.structure = structure;
  double last_step = std::numeric_limits<double>::infinity();
  Accumulated acc;
  WorkingCorrelation corr;
  for (int it = 1; it <= options.max_iterations; ++it) {
    fit.iterations = it;
    corr = estimate_alpha(residual_blocks(design, weights, beta), structure, n_occasions, &fit.warnings);
    try {
      acc = accumulate(design, weights, beta, corr, n_occasions, false);
    } catch (const DataError& e) {
      throw NumericalError(std::string("fit_gee: working correlation estimate is invalid: ") + e.what());
    }
    const double score_norm = acc.score.cwiseAbs().maxCoeff();
    const double alpha_change = it == 1 ? std::numeric_limits<double>::infinity() : corr.distance(previous);
    if (last_step < options.beta_tolerance && alpha_change < options.alpha_tolerance &&
        score_norm < options.score_tolerance) {
      fit.converged = true;
      break;
    }
    if (it > 1 && structure == CorrStructure::Independence && last_step < options.beta_tolerance &&
        score_norm < options.score_tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(acc.I0);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericalError("fit_gee: I0 is singular");
    const Eigen::VectorXd step = ldlt.solve(acc.score);
    beta += step;
    last_step = step.cwiseAbs().maxCoeff() / (1.0 + beta.cwiseAbs().maxCoeff());
    if (!beta.allFinite()) throw NumericalError("fit_gee: coefficients diverged");
    previous = corr;
  }
  // Drop duplicate warnings produced on every outer iteration.
  std::sort(fit.warnings.begin(), fit.warnings.end());
  fit.warnings.erase(std::unique(fit.warnings.begin(), fit.warnings.end()), fit.warnings.end());

  fit.beta = beta;
  fit.correlation = corr;
  fit.score = acc.score;
  fit.n_subjects = acc.n;
  const auto parts =
      sandwich_covariance(design, weights, beta, corr, n_occasions, options.small_sample_correction);
  fit.model_based_cov = parts.model_based;
  fit.sandwich_cov = parts.sandwich;
  if (!fit.converged)
    throw NumericalError("fit_gee: no convergence in " + std::to_string(options.max_iterations) +
                         " outer iterations (score max-norm " + std::to_string(acc.score.cwiseAbs().maxCoeff()) +
                         ")");
  return fit;
}

GeeFit fit_gee(const LongDataset& dataset, const Formula& formula, CorrStructure structure,
               const GeeOptions& options) {
  const auto design = build_design(dataset, formula);
  auto fit = fit_gee(design, {}, structure, dataset.n_occasions(), options);
  const auto excluded = dataset.size() - fit.n_subjects;
  if (excluded > 0)
    fit.warnings.push_back(std::to_string(excluded) + " subject(s) without observed outcomes excluded");
  return fit;
}

}  // namespace longit

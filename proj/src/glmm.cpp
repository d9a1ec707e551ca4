#include "longit/glmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "longit/error.hpp"
#include "longit/glm.hpp"
#include "longit/parallel.hpp"
#include "longit/quadrature.hpp"

namespace longit {

const char* to_string(QuadratureMode m) { return m == QuadratureMode::Adaptive ? "adaptive" : "nonadaptive"; }

const char* to_string(Optimizer o) { return o == Optimizer::QuasiNewton ? "quasi-newton" : "newton-raphson"; }

QuadratureMode parse_quadrature_mode(const std::string& s) {
  if (s == "adaptive") return QuadratureMode::Adaptive;
  if (s == "nonadaptive") return QuadratureMode::Nonadaptive;
  throw DataError("unknown quadrature mode '" + s + "'");
}

Optimizer parse_optimizer(const std::string& s) {
  if (s == "quasi-newton" || s == "bfgs" || s == "qn") return Optimizer::QuasiNewton;
  if (s == "newton-raphson" || s == "newton" || s == "nr") return Optimizer::NewtonRaphson;
  throw DataError("unknown optimizer '" + s + "'");
}

int QuadratureSpec::resolved_points() const {
  if (points > 0) return points;
  return mode == QuadratureMode::Adaptive ? 20 : 50;
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double conditional_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, double b) {
  double ll = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const double e = eta(j) + b;
    ll += y(j) * e - log1pexp(e);
  }
  return ll;
}

}  // namespace

double subject_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, double sigma,
                      const QuadratureSpec& quadrature) {
  if (eta.size() != y.size()) throw std::invalid_argument("subject_loglik: eta and y disagree in length");
  if (!(sigma >= 0.0)) throw std::invalid_argument("subject_loglik: sigma must be nonnegative");
  if (eta.size() == 0) return 0.0;
  if (sigma == 0.0) return conditional_loglik(eta, y, 0.0);

  const auto& rule = gauss_hermite(quadrature.resolved_points());
  const auto Q = rule.nodes.size();
  Eigen::VectorXd terms(Q);

  if (quadrature.mode == QuadratureMode::Nonadaptive) {
    for (Eigen::Index k = 0; k < Q; ++k)
      terms(k) = std::log(rule.weights(k)) + conditional_loglik(eta, y, std::numbers::sqrt2 * sigma * rule.nodes(k));
    return log_sum_exp(terms) - 0.5 * std::log(std::numbers::pi);
  }

  // Mode of g(b) = log f(y | b) - b^2 / (2 sigma^2).
  const double prec = 1.0 / (sigma * sigma);
  auto g = [&](double b) { return conditional_loglik(eta, y, b) - 0.5 * b * b * prec; };
  auto derivs = [&](double b, double& d1, double& d2) {
    d1 = -b * prec;
    d2 = -prec;
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
      const double mu = expit(eta(j) + b);
      d1 += y(j) - mu;
      d2 -= mu * (1.0 - mu);
    }
  };
  double b = 0.0, d1 = 0.0, d2 = 0.0;
  double gb = g(b);
  bool found = false;
  for (int it = 0; it < 50; ++it) {
    derivs(b, d1, d2);
    const double step = -d1 / d2;
    double t = 1.0;
    double bn = b + step;
    double gn = g(bn);
    for (int h = 0; h < 40 && gn < gb - 1e-14 * std::abs(gb); ++h) {
      t *= 0.5;
      bn = b + t * step;
      gn = g(bn);
    }
    b = bn;
    gb = gn;
    if (std::abs(t * step) < 1e-10 * (1.0 + std::abs(b))) {
      found = true;
      break;
    }
  }
  if (!found || !std::isfinite(b)) throw NumericalError("adaptive quadrature: mode search did not converge");
  derivs(b, d1, d2);
  b -= d1 / d2;  // final polish
  derivs(b, d1, d2);
  const double scale = 1.0 / std::sqrt(-d2);
  for (Eigen::Index k = 0; k < Q; ++k) {
    const double x = rule.nodes(k);
    terms(k) = std::log(rule.weights(k)) + x * x + g(b + std::numbers::sqrt2 * scale * x);
  }
  return log_sum_exp(terms) + std::log(std::numbers::sqrt2 * scale) - std::log(std::sqrt(2 * std::numbers::pi) * sigma);
}

double subject_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta, double sigma,
                      const QuadratureSpec& quadrature) {
  return subject_loglik(Eigen::VectorXd(X * beta), y, sigma, quadrature);
}

double glmm_loglik(const DesignSet& design, const Eigen::VectorXd& beta, double sigma,
                   const QuadratureSpec& quadrature) {
  double ll = 0.0;
  for (const auto& s : design.subjects)
    if (s.y.size()) ll += subject_loglik(s.X, s.y, beta, sigma, quadrature);
  return ll;
}

Eigen::VectorXd GlmmFit::beta_se() const {
  const auto p = beta.size();
  return covariance.diagonal().head(p).cwiseSqrt();
}

double GlmmFit::sigma_se() const {
  if (sigma_fixed) return 0.0;
  const auto p = beta.size();
  return sigma * std::sqrt(covariance(p, p));
}

double GlmmFit::sigma2_se() const {
  if (sigma_fixed) return 0.0;
  const auto p = beta.size();
  return 2.0 * sigma * sigma * std::sqrt(covariance(p, p));
}

namespace {

// Subjects with identical observed rows and outcomes share one likelihood
// term weighted by their multiplicity.
struct CompressedDesign {
  std::vector<Eigen::MatrixXd> X;
  std::vector<Eigen::VectorXd> y;
  std::vector<double> freq;
  std::size_t n_subjects = 0;
};

CompressedDesign compress(const DesignSet& design) {
  CompressedDesign c;
  std::map<std::string, std::size_t> index;
  for (const auto& s : design.subjects) {
    if (s.y.size() == 0) continue;
    ++c.n_subjects;
    std::string key(static_cast<std::size_t>(s.X.size() + s.y.size()) * sizeof(double), '\0');
    std::memcpy(key.data(), s.X.data(), static_cast<std::size_t>(s.X.size()) * sizeof(double));
    std::memcpy(key.data() + s.X.size() * static_cast<Eigen::Index>(sizeof(double)), s.y.data(),
                static_cast<std::size_t>(s.y.size()) * sizeof(double));
    key += "#" + std::to_string(s.y.size());
    auto [it, inserted] = index.emplace(key, c.X.size());
    if (inserted) {
      c.X.push_back(s.X);
      c.y.push_back(s.y);
      c.freq.push_back(1.0);
    } else {
      c.freq[it->second] += 1.0;
    }
  }
  return c;
}

double compressed_loglik(const CompressedDesign& c, const Eigen::VectorXd& beta, double sigma,
                         const QuadratureSpec& q) {
  const std::size_t m = c.X.size();
  std::vector<double> terms(m, 0.0);
  auto one = [&](std::size_t i) { terms[i] = c.freq[i] * subject_loglik(c.X[i], c.y[i], beta, sigma, q); };
  if (m >= 512 && thread_count() > 1) {
    parallel_for(m, one);
  } else {
    for (std::size_t i = 0; i < m; ++i) one(i);
  }
  double ll = 0.0;
  for (double t : terms) ll += t;  // fixed order regardless of threading
  return ll;
}

}  // namespace

GlmmFit fit_glmm(const DesignSet& design, const GlmmSpec& spec) {
  const auto p = static_cast<Eigen::Index>(design.columns.size());
  const auto data = compress(design);
  if (data.n_subjects == 0) throw DataError("fit_glmm: no observed outcomes");
  if (spec.fixed_sigma && !(*spec.fixed_sigma >= 0.0)) throw DataError("fit_glmm: fixed sigma must be nonnegative");
  const int Q = spec.quadrature.resolved_points();
  if (Q < 1 || Q > 100) throw DataError("fit_glmm: quadrature points must lie in [1, 100]");

  const bool fixed = spec.fixed_sigma.has_value();
  const Eigen::Index dim = fixed ? p : p + 1;
  Eigen::VectorXd x0(dim);
  if (spec.start_beta) {
    if (spec.start_beta->size() != p) throw DataError("fit_glmm: start_beta has the wrong length");
    x0.head(p) = *spec.start_beta;
  } else {
    x0.head(p).setConstant(spec.zero_start ? 0.0 : 0.5);
  }
  if (!fixed) {
    const double s0 = spec.start_sigma.value_or(spec.zero_start ? 1.0 : 0.5);
    if (!(s0 > 0.0)) throw DataError("fit_glmm: start sigma must be positive");
    x0(p) = std::log(s0);
  }

  auto sigma_of = [&](const Eigen::VectorXd& x) { return fixed ? *spec.fixed_sigma : std::exp(x(p)); };
  Objective f = [&](const Eigen::VectorXd& x) {
    try {
      return -compressed_loglik(data, x.head(p), sigma_of(x), spec.quadrature);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const auto res = spec.optimizer == Optimizer::QuasiNewton ? minimize_bfgs(f, x0, spec.optim)
                                                            : minimize_newton(f, x0, spec.optim);
  if (!res.converged)
    throw NumericalError(std::string("fit_glmm: ") + to_string(spec.optimizer) + " did not converge (" + res.message +
                         ", max |gradient| " + std::to_string(res.gradient.size() ? res.gradient.cwiseAbs().maxCoeff() : 0.0) +
                         ")");

  GlmmFit fit;
  fit.beta = res.x.head(p);
  fit.sigma = sigma_of(res.x);
  fit.loglik = -res.value;
  fit.gradient = res.gradient;
  fit.quadrature = spec.quadrature;
  fit.quadrature.points = Q;
  fit.optimizer = spec.optimizer;
  fit.iterations = res.iterations;
  fit.evaluations = res.evaluations;
  fit.converged = true;
  fit.sigma_fixed = fixed;
  fit.n_subjects = data.n_subjects;
  fit.names = design.columns;

  fit.hessian = numerical_hessian(f, res.x, spec.optim.hessian_step);
  fit.hessian = 0.5 * (fit.hessian + fit.hessian.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.hessian);
  const double min_eig = es.eigenvalues().minCoeff();
  fit.boundary = !fixed && fit.sigma < spec.boundary_sigma;
  if (fit.boundary)
    fit.warnings.push_back("random-intercept sd " + std::to_string(fit.sigma) + " is at the boundary of the parameter space");
  if (!(min_eig > 0.0)) {
    fit.seemingly_converged = true;
    fit.covariance = Eigen::MatrixXd::Constant(dim, dim, std::numeric_limits<double>::quiet_NaN());
    fit.warnings.push_back("Hessian is not positive definite: the optimizer has only seemingly converged");
  } else {
    fit.covariance = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }
  return fit;
}

GlmmFit fit_glmm(const LongDataset& dataset, const GlmmSpec& spec) {
  return fit_glmm(build_design(dataset, spec.formula), spec);
}

void ScanResult::write_csv(std::ostream& out) const {
  out << "mode,optimizer,Q,param,estimate,loglik,status\n";
  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
  };
  for (const auto& c : cells) {
    out << to_string(c.mode) << ',' << to_string(c.optimizer) << ',' << c.Q << ',' << param << ',';
    if (c.fit) {
      out << fmt(c.fit->beta(static_cast<Eigen::Index>(param_index))) << ',' << fmt(c.fit->loglik);
    } else {
      out << "NA,NA";
    }
    std::string status = c.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << ',' << status << '\n';
  }
}

ScanResult quadrature_scan(const LongDataset& dataset, const GlmmSpec& spec, const std::vector<int>& q_list,
                           const std::vector<QuadratureMode>& modes, const std::vector<Optimizer>& optimizers,
                           const std::string& param) {
  if (q_list.empty() || modes.empty() || optimizers.empty()) throw DataError("quadrature_scan: empty scan grid");
  for (int q : q_list)
    if (q < 1 || q > 100) throw DataError("quadrature_scan: Q values must lie in [1, 100]");
  const auto design = build_design(dataset, spec.formula);
  ScanResult result;
  if (param.empty()) {
    result.param_index = design.columns.size() - 1;
  } else {
    const auto it = std::find(design.columns.begin(), design.columns.end(), param);
    if (it == design.columns.end()) throw DataError("quadrature_scan: unknown parameter '" + param + "'");
    result.param_index = static_cast<std::size_t>(it - design.columns.begin());
  }
  result.param = design.columns[result.param_index];

  for (auto m : modes)
    for (auto o : optimizers)
      for (int q : q_list) result.cells.push_back(ScanCell{m, o, q, std::nullopt, ""});

  parallel_for(result.cells.size(), [&](std::size_t i) {
    auto& cell = result.cells[i];
    GlmmSpec s = spec;
    s.quadrature = QuadratureSpec{cell.mode, cell.Q};
    s.optimizer = cell.optimizer;
    try {
      cell.fit = fit_glmm(design, s);
      cell.status = cell.fit->seemingly_converged ? "seemingly-converged" : cell.fit->boundary ? "boundary" : "ok";
    } catch (const std::exception& e) {
      cell.status = std::string("failed: ") + e.what();
    }
  });

  for (auto m : modes)
    for (auto o : optimizers) {
      ScanStability st{m, o, 0, 0, std::numeric_limits<double>::quiet_NaN(), false};
      st.q_max = *std::max_element(q_list.begin(), q_list.end());
      for (int q : q_list)
        if (2 * q <= st.q_max) st.q_half = std::max(st.q_half, q);
      const ScanCell* hi = nullptr;
      const ScanCell* lo = nullptr;
      for (const auto& c : result.cells)
        if (c.mode == m && c.optimizer == o && c.fit) {
          if (c.Q == st.q_max) hi = &c;
          if (c.Q == st.q_half) lo = &c;
        }
      if (hi && lo) {
        const auto k = static_cast<Eigen::Index>(result.param_index);
        st.difference = std::abs(hi->fit->beta(k) - lo->fit->beta(k));
        st.stable = st.difference < 1e-3;
      }
      result.stability.push_back(st);
    }
  return result;
}

double marginalize_mean(double eta, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("marginalize_mean: sigma must be nonnegative");
  if (sigma == 0.0) return expit(eta);
  // Fold the normal density about 0: expit(a) = 1/2 + tanh(a/2)/2, so the
  // integrand vanishes identically when eta = 0.
  auto integrand = [&](double z) {
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
    return (std::tanh(0.5 * (eta + sigma * z)) + std::tanh(0.5 * (eta - sigma * z))) * phi;
  };
  double err = 0.0;
  const double I = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 40.0, 20, 1e-14, &err);
  return 0.5 + 0.5 * I;
}

double marginalize_mean(const Eigen::VectorXd& beta, double sigma, const Eigen::RowVectorXd& x) {
  return marginalize_mean(x.dot(beta), sigma);
}

double attenuation_constant() { return 16.0 * std::sqrt(3.0) / (15.0 * std::numbers::pi); }

double attenuation_ratio(double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("attenuation_ratio: sigma must be nonnegative");
  const double c = attenuation_constant();
  return std::sqrt(c * c * sigma * sigma + 1.0);
}

}  // namespace longit

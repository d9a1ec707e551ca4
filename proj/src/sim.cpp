#include "longit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "longit/error.hpp"
#include "longit/glm.hpp"
#include "longit/inference.hpp"
#include "longit/parallel.hpp"
#include "longit/prep.hpp"

namespace longit {

namespace {

double entry_or_zero(const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; }

}  // namespace

std::string SimSpec::mechanism() const {
  if (omega != 0.0) return "MNAR";
  // Outcome history enters h_ij only through the previous outcome.
  if (psi.prev != 0.0) return "MAR";
  return "MCAR";
}

void SimSpec::validate() const {
  if (N < 1) throw DataError("sim spec: N must be positive");
  if (n < 2) throw DataError("sim spec: n must be at least 2");
  if (arms.empty()) throw DataError("sim spec: at least one arm is required");
  if (std::set<std::string>(arms.begin(), arms.end()).size() != arms.size())
    throw DataError("sim spec: arm labels must be distinct");
  if (!allocation.empty()) {
    if (allocation.size() != arms.size()) throw DataError("sim spec: allocation length must match arms");
    double total = 0.0;
    for (double a : allocation) {
      if (!(a >= 0.0)) throw DataError("sim spec: allocation proportions must be nonnegative");
      total += a;
    }
    if (!(total > 0.0)) throw DataError("sim spec: allocation proportions sum to zero");
  }
  if (!occasions.empty() && occasions.size() != n) throw DataError("sim spec: occasion labels must have length n");
  if (visit_intercepts.size() != n) throw DataError("sim spec: visit_intercepts must have length n");
  if (treatment_effects.size() != arms.size() - 1)
    throw DataError("sim spec: treatment_effects needs one row per non-reference arm");
  for (const auto& row : treatment_effects)
    if (row.size() != n) throw DataError("sim spec: each treatment_effects row must have length n");
  if (!(sigma >= 0.0)) throw DataError("sim spec: sigma must be nonnegative");
  if (psi.treatment.size() > arms.size() - 1) throw DataError("sim spec: too many psi treatment coefficients");
  if (psi.time.size() > n - 2) throw DataError("sim spec: psi time has more than n-2 entries");
}

std::vector<std::string> SimSpec::occasion_labels() const {
  if (!occasions.empty()) return occasions;
  std::vector<std::string> labels;
  for (std::size_t j = 1; j <= n; ++j) labels.push_back(std::to_string(j));
  return labels;
}

double SimSpec::cell_eta(std::size_t arm, std::size_t visit) const {
  double eta = visit_intercepts.at(visit);
  if (arm > 0) eta += treatment_effects.at(arm - 1).at(visit);
  return eta;
}

std::vector<std::size_t> SimSpec::arm_assignment() const {
  const std::size_t k = arms.size();
  std::vector<double> p = allocation.empty() ? std::vector<double>(k, 1.0) : allocation;
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  // Largest-remainder rounding of N * p, then contiguous blocks per arm.
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t a = 0; a < k; ++a) {
    const double exact = static_cast<double>(N) * p[a] / total;
    counts[a] = static_cast<std::size_t>(std::floor(exact));
    used += counts[a];
    rem.emplace_back(-(exact - std::floor(exact)), a);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t r = 0; used < N; ++r, ++used) ++counts[rem[r % k].second];
  std::vector<std::size_t> out;
  out.reserve(N);
  for (std::size_t a = 0; a < k; ++a) out.insert(out.end(), counts[a], a);
  return out;
}

SimSpec parse_sim_spec(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sim spec: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("sim spec: top level must be an object");
  static const std::set<std::string> known{"N", "n", "arms", "allocation", "occasions", "visit_intercepts",
                                           "treatment_effects", "sigma", "psi", "omega", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw DataError("sim spec: unknown key '" + key + "'");
  SimSpec s;
  try {
    if (j.contains("N")) s.N = j.at("N").get<std::size_t>();
    if (j.contains("n")) s.n = j.at("n").get<std::size_t>();
    if (j.contains("arms")) s.arms = j.at("arms").get<std::vector<std::string>>();
    if (j.contains("allocation")) s.allocation = j.at("allocation").get<std::vector<double>>();
    if (j.contains("occasions")) s.occasions = j.at("occasions").get<std::vector<std::string>>();
    s.visit_intercepts = j.contains("visit_intercepts") ? j.at("visit_intercepts").get<std::vector<double>>()
                                                        : std::vector<double>(s.n, 0.0);
    if (j.contains("treatment_effects")) {
      s.treatment_effects = j.at("treatment_effects").get<std::vector<std::vector<double>>>();
    } else {
      s.treatment_effects.assign(s.arms.size() - 1, std::vector<double>(s.n, 0.0));
    }
    if (j.contains("sigma")) s.sigma = j.at("sigma").get<double>();
    if (j.contains("omega")) s.omega = j.at("omega").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("psi")) {
      const auto& p = j.at("psi");
      static const std::set<std::string> psi_keys{"intercept", "prev", "treatment", "time"};
      for (const auto& [key, _] : p.items())
        if (!psi_keys.count(key)) throw DataError("sim spec: unknown psi key '" + key + "'");
      if (p.contains("intercept")) s.psi.intercept = p.at("intercept").get<double>();
      if (p.contains("prev")) s.psi.prev = p.at("prev").get<double>();
      if (p.contains("treatment")) {
        if (p.at("treatment").is_number())
          s.psi.treatment.assign(s.arms.size() - 1, p.at("treatment").get<double>());
        else
          s.psi.treatment = p.at("treatment").get<std::vector<double>>();
      }
      if (p.contains("time")) s.psi.time = p.at("time").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sim spec: ") + e.what());
  }
  s.validate();
  return s;
}

SimSpec load_sim_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sim spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sim_spec(ss.str());
}

std::string to_json(const SimSpec& spec) {
  nlohmann::ordered_json j;
  j["N"] = spec.N;
  j["n"] = spec.n;
  j["arms"] = spec.arms;
  if (!spec.allocation.empty()) j["allocation"] = spec.allocation;
  if (!spec.occasions.empty()) j["occasions"] = spec.occasions;
  j["visit_intercepts"] = spec.visit_intercepts;
  j["treatment_effects"] = spec.treatment_effects;
  j["sigma"] = spec.sigma;
  j["psi"] = {{"intercept", spec.psi.intercept},
              {"prev", spec.psi.prev},
              {"treatment", spec.psi.treatment},
              {"time", spec.psi.time}};
  j["omega"] = spec.omega;
  j["seed"] = spec.seed;
  return j.dump(2);
}

namespace {

CovariateSchema sim_schema(const SimSpec& spec) {
  CovariateSchema schema;
  schema.treatment_column = "trt";
  schema.occasions = spec.occasion_labels();
  schema.reference_levels["trt"] = spec.arms.front();
  return schema;
}

std::string subject_id(std::size_t i, std::size_t N) {
  std::ostringstream s;
  s << 's' << std::setw(static_cast<int>(std::to_string(N).size())) << std::setfill('0') << (i + 1);
  return s.str();
}

// Uniform on [0, 1) from the top 53 bits.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

LongDataset simulate_complete(const SimSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto assignment = spec.arm_assignment();
  std::vector<SubjectRecord> subjects;
  subjects.reserve(spec.N);
  for (std::size_t i = 0; i < spec.N; ++i) {
    SubjectRecord s;
    s.id = subject_id(i, spec.N);
    s.treatment = spec.arms[assignment[i]];
    s.covariates.assign(spec.n, {});
    const double b = spec.sigma * normal(rng);
    for (std::size_t j = 0; j < spec.n; ++j) {
      const double p = expit(spec.cell_eta(assignment[i], j) + b);
      s.outcomes.emplace_back(uniform01(rng) < p ? 1 : 0);
    }
    subjects.push_back(std::move(s));
  }
  return LongDataset(spec.occasion_labels(), sim_schema(spec), std::move(subjects));
}

LongDataset apply_dropout(const LongDataset& complete, const SimSpec& spec) {
  spec.validate();
  if (complete.n_occasions() != spec.n) throw DataError("apply_dropout: occasion count differs from the spec");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed & 0xffffffffu), static_cast<std::uint32_t>(spec.seed >> 32),
                    0x64726f70u};
  std::mt19937_64 rng(seq);
  std::vector<SubjectRecord> subjects = complete.subjects();
  for (auto& s : subjects) {
    for (const auto& y : s.outcomes)
      if (!y) throw DataError("apply_dropout: subject '" + s.id + "' is not complete");
    const auto arm = static_cast<std::size_t>(std::find(spec.arms.begin(), spec.arms.end(), s.treatment) -
                                              spec.arms.begin());
    if (arm >= spec.arms.size()) throw DataError("apply_dropout: unknown arm '" + s.treatment + "'");
    for (std::size_t j = 1; j < spec.n; ++j) {
      double eta = spec.psi.intercept + spec.psi.prev * *s.outcomes[j - 1] + spec.omega * *s.outcomes[j];
      if (arm > 0) eta += entry_or_zero(spec.psi.treatment, arm - 1);
      if (j + 1 < spec.n) eta += entry_or_zero(spec.psi.time, j - 1);
      if (uniform01(rng) < expit(eta)) {
        for (std::size_t k = j; k < spec.n; ++k) s.outcomes[k].reset();
        break;
      }
    }
  }
  return complete.with_subjects(std::move(subjects));
}

LongDataset simulate(const SimSpec& spec) { return apply_dropout(simulate_complete(spec), spec); }

Eigen::VectorXd true_coefficients(const SimSpec& spec, const LongDataset& dataset, const Formula& formula,
                                  bool marginal) {
  const DesignBuilder builder(dataset, formula);
  const auto p = static_cast<Eigen::Index>(builder.n_columns());
  const auto cells = static_cast<Eigen::Index>(spec.arms.size() * spec.n);
  Eigen::MatrixXd X(cells, p);
  Eigen::VectorXd t(cells);
  Eigen::Index r = 0;
  for (std::size_t a = 0; a < spec.arms.size(); ++a)
    for (std::size_t v = 0; v < spec.n; ++v, ++r) {
      X.row(r) = builder.row(RowContext{v, spec.arms[a], {}});
      const double eta = spec.cell_eta(a, v);
      t(r) = marginal ? logit(marginalize_mean(eta, spec.sigma)) : eta;
    }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p) throw DataError("true_coefficients: formula columns are not identified by arm and visit");
  const Eigen::VectorXd beta = qr.solve(t);
  if ((X * beta - t).cwiseAbs().maxCoeff() > 1e-8)
    throw DataError("true_coefficients: formula cannot reproduce every arm-by-visit cell");
  return beta;
}

const std::vector<std::string>& known_estimators() {
  static const std::vector<std::string> names{"oracle",  "gee-cc",  "gee-locf",  "gee-observed",
                                              "wgee",    "glmm-cc", "glmm-locf", "glmm-observed"};
  return names;
}

namespace {

struct Estimate {
  bool ok = false;
  Eigen::VectorXd value;
  Eigen::VectorXd se;
};

bool is_glmm(const std::string& e) { return e.rfind("glmm", 0) == 0; }

}  // namespace

void ReplicationReport::write_csv(std::ostream& out) const {
  out << "estimator,parameter,truth,mean_estimate,bias,mc_se,empirical_se,mean_se,coverage,successes,failures\n";
  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::setprecision(8) << v;
    return s.str();
  };
  for (const auto& r : rows)
    out << r.estimator << ',' << r.parameter << ',' << fmt(r.truth) << ',' << fmt(r.mean_estimate) << ','
        << fmt(r.bias) << ',' << fmt(r.mc_se) << ',' << fmt(r.empirical_se) << ',' << fmt(r.mean_se) << ','
        << fmt(r.coverage) << ',' << r.successes << ',' << r.failures << '\n';
}

ReplicationReport replicate_study(const SimSpec& spec, const std::vector<std::string>& estimators,
                                  const ReplicationOptions& options) {
  spec.validate();
  if (options.replicates < 1) throw DataError("replicate_study: at least one replicate is required");
  if (spec.arms.size() < 2) throw DataError("replicate_study: a treatment comparison needs two arms");
  for (const auto& e : estimators)
    if (std::find(known_estimators().begin(), known_estimators().end(), e) == known_estimators().end())
      throw DataError("replicate_study: unknown estimator '" + e + "'");
  const Formula formula = parse_formula(options.formula);

  // Targets come from a template dataset that shares arms and occasions.
  const LongDataset shape = simulate_complete([&] {
    SimSpec s = spec;
    s.N = std::max<std::size_t>(spec.N, spec.arms.size());
    return s;
  }());
  const ContrastSet contrast = build_contrasts(shape, formula, ContrastKind::LastOccasion);
  const Eigen::VectorXd truth_marginal = contrast.L * true_coefficients(spec, shape, formula, true);
  const Eigen::VectorXd truth_conditional = contrast.L * true_coefficients(spec, shape, formula, false);

  const std::size_t R = options.replicates;
  const std::size_t E = estimators.size();
  std::vector<std::vector<Estimate>> results(R, std::vector<Estimate>(E));

  parallel_for(R, [&](std::size_t r) {
    SimSpec s = spec;
    s.seed = spec.seed + r;
    const LongDataset data = simulate(s);
    for (std::size_t e = 0; e < E; ++e) {
      const auto& name = estimators[e];
      Estimate est;
      try {
        Eigen::VectorXd beta;
        Eigen::MatrixXd V;
        if (name == "oracle") {
          est.value = truth_marginal;
          est.se = Eigen::VectorXd::Zero(truth_marginal.size());
          est.ok = true;
          results[r][e] = est;
          continue;
        }
        if (name == "wgee") {
          WgeeOptions wo;
          wo.mode = options.weights;
          const auto fit = fit_wgee(data, formula, options.corr, wo);
          beta = fit.gee.beta;
          V = fit.gee.sandwich_cov;
        } else {
          const auto strategy = name.substr(name.find('-') + 1);
          const LongDataset prepared = strategy == "cc"     ? complete_case(data)
                                       : strategy == "locf" ? locf_impute(data).data
                                                            : data;
          if (is_glmm(name)) {
            GlmmSpec gs;
            gs.formula = formula;
            gs.quadrature = options.quadrature;
            gs.optimizer = options.optimizer;
            const auto fit = fit_glmm(prepared, gs);
            if (fit.seemingly_converged) throw NumericalError("indefinite Hessian");
            beta = fit.beta;
            V = fit.covariance.topLeftCorner(beta.size(), beta.size());
          } else {
            const auto fit = fit_gee(prepared, formula, options.corr);
            beta = fit.beta;
            V = fit.sandwich_cov;
          }
        }
        est.value = contrast.L * beta;
        est.se = (contrast.L * V * contrast.L.transpose()).diagonal().cwiseSqrt();
        est.ok = est.value.allFinite() && est.se.allFinite();
      } catch (const std::exception&) {
        est.ok = false;
      }
      results[r][e] = est;
    }
  });

  ReplicationReport report;
  report.mechanism = spec.mechanism();
  report.replicates = R;
  const double z = 1.959963984540054;
  for (std::size_t e = 0; e < E; ++e) {
    const Eigen::VectorXd& truth = is_glmm(estimators[e]) ? truth_conditional : truth_marginal;
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      ReplicationRow row;
      row.estimator = estimators[e];
      row.parameter = contrast.labels[static_cast<std::size_t>(k)];
      row.truth = truth(k);
      double sum = 0.0, sum_se = 0.0, covered = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        const auto& est = results[r][e];
        if (!est.ok) {
          ++row.failures;
          continue;
        }
        ++row.successes;
        sum += est.value(k);
        sum_se += est.se(k);
        if (std::abs(est.value(k) - truth(k)) <= z * est.se(k)) covered += 1.0;
      }
      if (row.successes > 0) {
        const double m = static_cast<double>(row.successes);
        row.mean_estimate = sum / m;
        row.bias = row.mean_estimate - row.truth;
        row.mean_se = sum_se / m;
        row.coverage = covered / m;
        double ss = 0.0;
        for (std::size_t r = 0; r < R; ++r)
          if (results[r][e].ok) {
            const double d = results[r][e].value(k) - row.mean_estimate;
            ss += d * d;
          }
        row.empirical_se = row.successes > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
        row.mc_se = row.empirical_se / std::sqrt(m);
      } else {
        row.mean_estimate = row.bias = row.mean_se = row.coverage = std::numeric_limits<double>::quiet_NaN();
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace longit

#include "longit/wgee.hpp"

#include <algorithm>
#include <cmath>

#include "longit/error.hpp"
#include "longit/prep.hpp"

namespace longit {

DropoutDesign::DropoutDesign(const LongDataset& dataset, std::vector<std::string> covariates)
    : dataset_(&dataset), covariates_(std::move(covariates)) {
  names_ = {"(Intercept)", "prev_outcome"};
  for (std::size_t a = 1; a < dataset.arms().size(); ++a) names_.push_back("trt[" + dataset.arms()[a] + "]");
  for (const auto& c : covariates_) {
    const auto* spec = dataset.schema().find(c);
    if (!spec) throw DataError("dropout covariate '" + c + "' is not in the data");
    cov_index_.push_back(dataset.covariate_index(c));
    if (spec->kind == CovariateKind::Categorical) {
      const auto& lv = dataset.levels(c);
      for (std::size_t l = 1; l < lv.size(); ++l) names_.push_back(c + "[" + lv[l] + "]");
    } else {
      names_.push_back(c);
    }
  }
  const auto n = dataset.n_occasions();
  for (std::size_t j = 1; j + 1 < n; ++j) names_.push_back("time[" + dataset.occasions()[j] + "]");
}

Eigen::RowVectorXd DropoutDesign::row(const SubjectRecord& subject, std::size_t j) const {
  const auto n = dataset_->n_occasions();
  if (j == 0 || j >= n) throw std::out_of_range("DropoutDesign::row: occasion out of range");
  const auto& prev = subject.outcomes[j - 1];
  if (!prev) throw DataError("subject '" + subject.id + "': previous outcome missing for dropout history");
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(names_.size()));
  Eigen::Index c = 0;
  h(c++) = 1.0;
  h(c++) = *prev;
  const auto& arms = dataset_->arms();
  for (std::size_t a = 1; a < arms.size(); ++a) h(c++) = subject.treatment == arms[a] ? 1.0 : 0.0;
  for (std::size_t k = 0; k < covariates_.size(); ++k) {
    const auto& spec = dataset_->schema().covariates[cov_index_[k]];
    const auto& v = subject.covariates[j - 1][cov_index_[k]];
    if (std::holds_alternative<std::monostate>(v))
      throw DataError("subject '" + subject.id + "' lacks dropout covariate '" + spec.name + "'");
    if (spec.kind == CovariateKind::Categorical) {
      const auto& lv = dataset_->levels(spec.name);
      const auto& value = std::get<std::string>(v);
      for (std::size_t l = 1; l < lv.size(); ++l) h(c++) = value == lv[l] ? 1.0 : 0.0;
    } else {
      h(c++) = std::get<double>(v);
    }
  }
  for (std::size_t t = 1; t + 1 < n; ++t) h(c++) = (t == j) ? 1.0 : 0.0;
  return h;
}

PersonPeriodTable person_period_expand(const LongDataset& dataset, const std::vector<std::string>& covariates) {
  DropoutDesign design(dataset, covariates);
  PersonPeriodTable table;
  table.columns = design.column_names();
  const auto n = dataset.n_occasions();
  std::vector<Eigen::RowVectorXd> rows;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.subject(i);
    const auto prof = missingness_profile(s);
    if (prof.pattern == Pattern::Intermittent || prof.pattern == Pattern::AllMissing || prof.r[0] == 0)
      throw DataError("person_period_expand: subject '" + s.id +
                      "' is not monotone with occasion 1 observed (monotonize first)");
    const auto d = static_cast<std::size_t>(prof.d);  // 1-based first missing, n+1 for completers
    for (std::size_t j1 = 2; j1 <= std::min(d, n); ++j1) {
      PersonPeriodRow r{i, j1 - 1, j1 == d ? 1 : 0};
      rows.push_back(design.row(s, j1 - 1));
      table.rows.push_back(r);
    }
  }
  table.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.columns.size()));
  table.drop.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    table.X.row(static_cast<Eigen::Index>(r)) = rows[r];
    table.drop(static_cast<Eigen::Index>(r)) = table.rows[r].drop;
  }
  return table;
}

DropoutModel fit_dropout_model(const PersonPeriodTable& table, std::vector<std::string> covariates) {
  if (table.rows.empty()) throw NumericalError("dropout model: no at-risk person-period rows");
  if (table.drop.sum() == 0.0) throw NumericalError("dropout model: no dropout events (separation)");
  if (table.drop.sum() == static_cast<double>(table.drop.size()))
    throw NumericalError("dropout model: every at-risk row drops out (separation)");
  DropoutModel model;
  model.fit = fit_logistic(table.X, table.drop, Eigen::VectorXd::Ones(table.drop.size()), table.columns);
  if (!model.fit.converged) throw NumericalError("dropout model: logistic fit did not converge");
  model.covariates = std::move(covariates);
  return model;
}

std::vector<double> dropout_hazards(const DropoutModel& model, const DropoutDesign& design,
                                    const SubjectRecord& subject) {
  const auto prof = missingness_profile(subject);
  const auto n = subject.outcomes.size();
  const auto last = std::min(static_cast<std::size_t>(prof.d), n);
  std::vector<double> p;
  for (std::size_t j1 = 2; j1 <= last; ++j1) {
    const double eta = design.row(subject, j1 - 1).dot(model.psi());
    const double h = expit(eta);
    if (!(h > 0.0 && h < 1.0))
      throw NumericalError("fitted dropout probability is exactly 0 or 1 for subject '" + subject.id + "'");
    p.push_back(h);
  }
  return p;
}

std::vector<double> dropout_distribution(const std::vector<double>& hazards) {
  std::vector<double> dist;
  double surv = 1.0;
  for (double p : hazards) {
    dist.push_back(surv * p);
    surv *= 1.0 - p;
  }
  dist.push_back(surv);
  return dist;
}

double dropout_pattern_probability(const std::vector<double>& hazards, int d, std::size_t n) {
  double nu = 1.0;
  for (int k = 2; k <= d - 1; ++k) nu *= 1.0 - hazards.at(static_cast<std::size_t>(k - 2));
  if (static_cast<std::size_t>(d) <= n) nu *= hazards.at(static_cast<std::size_t>(d - 2));
  return nu;
}

const char* to_string(WeightMode m) { return m == WeightMode::Occasion ? "occasion" : "subject"; }

WeightMode parse_weight_mode(const std::string& s) {
  if (s == "occasion") return WeightMode::Occasion;
  if (s == "subject") return WeightMode::Subject;
  throw DataError("unknown weight mode '" + s + "'");
}

double WeightSet::max_weight() const {
  double m = 0.0;
  for (const auto& w : weights)
    if (w.size()) m = std::max(m, w.maxCoeff());
  return m;
}

namespace {

WeightSet build_weights(const DropoutModel& model, const LongDataset& dataset, WeightMode mode) {
  DropoutDesign design(dataset, model.covariates);
  WeightSet ws;
  ws.mode = mode;
  const auto n = dataset.n_occasions();
  for (const auto& s : dataset.subjects()) {
    const auto prof = missingness_profile(s);
    if (prof.pattern == Pattern::Intermittent || prof.pattern == Pattern::AllMissing || prof.r[0] == 0)
      throw DataError("weights: subject '" + s.id + "' is not monotone with occasion 1 observed");
    const auto hazards = dropout_hazards(model, design, s);
    const int d = prof.d;
    const double nu = dropout_pattern_probability(hazards, d, n);
    ws.nu.push_back(nu);

    const auto observed = static_cast<std::size_t>(d - 1);
    std::vector<double> cumulative(observed);
    if (mode == WeightMode::Subject) {
      std::fill(cumulative.begin(), cumulative.end(), nu);
    } else {
      double c = 1.0;
      for (std::size_t j = 0; j < observed; ++j) {
        if (j > 0) c *= 1.0 - hazards[j - 1];
        // The last observed occasion of a dropout sequence carries the
        // probability of dropping out at the next one.
        if (j + 1 == observed && static_cast<std::size_t>(d) <= n) c *= hazards[observed - 1];
        cumulative[j] = c;
      }
    }
    Eigen::VectorXd w(static_cast<Eigen::Index>(observed));
    for (std::size_t j = 0; j < observed; ++j) w(static_cast<Eigen::Index>(j)) = 1.0 / cumulative[j];
    if (!w.allFinite()) throw NumericalError("weights: non-finite inverse probability for subject '" + s.id + "'");
    ws.cumulative.push_back(std::move(cumulative));
    ws.weights.push_back(std::move(w));
  }
  return ws;
}

}  // namespace

WeightSet subject_weights(const DropoutModel& model, const LongDataset& dataset) {
  return build_weights(model, dataset, WeightMode::Subject);
}

WeightSet occasion_weights(const DropoutModel& model, const LongDataset& dataset) {
  return build_weights(model, dataset, WeightMode::Occasion);
}

void truncate_weights(WeightSet& weights, double quantile) {
  if (!(quantile > 0.0 && quantile <= 1.0)) throw DataError("truncation quantile must lie in (0, 1]");
  std::vector<double> all;
  for (const auto& w : weights.weights)
    for (Eigen::Index j = 0; j < w.size(); ++j) all.push_back(w(j));
  if (all.empty()) return;
  std::sort(all.begin(), all.end());
  const auto idx = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(all.size()))) - 1;
  const double cap = all[std::min(idx, all.size() - 1)];
  for (auto& w : weights.weights) w = w.cwiseMin(cap);
}

WgeeFit fit_wgee(const LongDataset& dataset, const Formula& formula, CorrStructure structure,
                 const WgeeOptions& options) {
  auto mono = monotonize(dataset);
  std::vector<SubjectRecord> kept;
  std::size_t excluded = 0;
  for (const auto& s : mono.data.subjects()) {
    if (!s.outcomes.front()) {
      ++excluded;
      continue;
    }
    kept.push_back(s);
  }
  WgeeFit fit{GeeFit{}, DropoutModel{}, WeightSet{}, dataset.with_subjects(std::move(kept)), excluded,
              mono.discarded_observations, {}};
  if (fit.data.empty()) throw DataError("fit_wgee: no subject has occasion 1 observed");
  if (excluded > 0)
    fit.warnings.push_back(std::to_string(excluded) + " subject(s) missing occasion 1 excluded from WGEE");
  if (mono.discarded_observations > 0)
    fit.warnings.push_back(std::to_string(mono.discarded_observations) +
                           " intermittent observation(s) discarded by monotonization");

  const auto table = person_period_expand(fit.data, options.dropout_covariates);
  fit.dropout = fit_dropout_model(table, options.dropout_covariates);
  fit.weights = options.mode == WeightMode::Occasion ? occasion_weights(fit.dropout, fit.data)
                                                     : subject_weights(fit.dropout, fit.data);
  if (options.truncation_quantile) truncate_weights(fit.weights, *options.truncation_quantile);
  if (const double mw = fit.weights.max_weight(); mw > options.extreme_weight)
    fit.warnings.push_back("extreme inverse-probability weight " + std::to_string(mw) + " exceeds " +
                           std::to_string(options.extreme_weight));

  const auto design = build_design(fit.data, formula);
  fit.gee = fit_gee(design, fit.weights.weights, structure, fit.data.n_occasions(), options.gee);
  for (const auto& w : fit.gee.warnings) fit.warnings.push_back(w);
  return fit;
}

}  // namespace longit

#include "longit/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "longit/error.hpp"
#include "longit/prep.hpp"

namespace longit {

double chi2_upper_tail(double statistic, int df) {
  if (df < 1) throw std::invalid_argument("chi2_upper_tail: df must be positive");
  if (statistic <= 0.0) return 1.0;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

WaldResult wald_test(const Eigen::MatrixXd& L, const Eigen::VectorXd& beta, const Eigen::MatrixXd& V) {
  if (L.rows() < 1 || L.cols() != beta.size() || V.rows() != beta.size() || V.cols() != beta.size())
    throw std::invalid_argument("wald_test: L, beta and V do not conform");
  const Eigen::VectorXd Lb = L * beta;
  Eigen::MatrixXd M = L * V * L.transpose();
  M = 0.5 * (M + M.transpose()).eval();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  qr.setThreshold(1e-12);
  if (qr.rank() < M.rows() || !M.allFinite()) throw NumericalError("wald_test: L V L' is singular");
  WaldResult r;
  r.df = static_cast<int>(L.rows());
  r.statistic = std::max(0.0, Lb.dot(qr.solve(Lb)));
  r.p_value = chi2_upper_tail(r.statistic, r.df);
  if (r.df == 1) {
    r.estimate = Lb(0);
    r.se = std::sqrt(M(0, 0));
  }
  return r;
}

const char* to_string(ContrastKind k) {
  switch (k) {
    case ContrastKind::JointPerArm: return "joint-per-arm";
    case ContrastKind::JointBothArms: return "joint-both-arms";
    case ContrastKind::AveragePerArm: return "average-per-arm";
    case ContrastKind::AverageBothArms: return "average-both-arms";
    case ContrastKind::LastOccasion: return "last-occasion";
  }
  return "?";
}

ContrastKind parse_contrast_kind(const std::string& s) {
  for (auto k : {ContrastKind::JointPerArm, ContrastKind::JointBothArms, ContrastKind::AveragePerArm,
                 ContrastKind::AverageBothArms, ContrastKind::LastOccasion})
    if (s == to_string(k)) return k;
  throw DataError("unknown contrast kind '" + s + "'");
}

ContrastSet build_contrasts(const LongDataset& dataset, const Formula& formula, ContrastKind kind,
                            const std::string& arm) {
  const DesignBuilder builder(dataset, formula);
  if (!builder.uses("trt")) throw DataError("build_contrasts: the formula has no treatment term");
  const auto& arms = dataset.arms();
  if (arms.size() < 2) throw DataError("build_contrasts: the data have a single arm");
  const auto n = dataset.n_occasions();

  std::vector<std::string> chosen;
  const bool per_arm = kind == ContrastKind::JointPerArm || kind == ContrastKind::AveragePerArm;
  if (per_arm) {
    const std::string a = arm.empty() ? arms[1] : arm;
    if (a == dataset.reference_arm() || std::find(arms.begin(), arms.end(), a) == arms.end())
      throw DataError("build_contrasts: '" + a + "' is not a non-reference arm");
    chosen.push_back(a);
  } else {
    chosen.assign(arms.begin() + 1, arms.end());
  }

  auto effect = [&](const std::string& a, std::size_t v) {
    RowContext treated{v, a, {}};
    RowContext control{v, dataset.reference_arm(), {}};
    return Eigen::RowVectorXd(builder.row(treated) - builder.row(control));
  };

  std::vector<Eigen::RowVectorXd> rows;
  ContrastSet cs;
  switch (kind) {
    case ContrastKind::JointPerArm:
    case ContrastKind::JointBothArms:
      for (const auto& a : chosen)
        for (std::size_t v = 0; v < n; ++v) {
          rows.push_back(effect(a, v));
          cs.labels.push_back(a + "@" + dataset.occasions()[v]);
        }
      break;
    case ContrastKind::AveragePerArm:
    case ContrastKind::AverageBothArms:
      for (const auto& a : chosen) {
        Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(builder.n_columns()));
        for (std::size_t v = 0; v < n; ++v) avg += effect(a, v);
        rows.push_back(avg / static_cast<double>(n));
        cs.labels.push_back(a + "@mean");
      }
      break;
    case ContrastKind::LastOccasion:
      for (const auto& a : chosen) {
        rows.push_back(effect(a, n - 1));
        cs.labels.push_back(a + "@" + dataset.occasions().back());
      }
      break;
  }
  cs.L.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(builder.n_columns()));
  for (std::size_t r = 0; r < rows.size(); ++r) cs.L.row(static_cast<Eigen::Index>(r)) = rows[r];

  Eigen::FullPivLU<Eigen::MatrixXd> lu(cs.L);
  lu.setThreshold(1e-10);
  if (lu.rank() < cs.L.rows())
    throw DataError(std::string("build_contrasts: the formula lacks the treatment-by-visit terms needed for '") +
                    to_string(kind) + "'");
  return cs;
}

namespace {

void check_table(const ContingencyTable& t) {
  if (t[0].size() != t[1].size()) throw DataError("contingency table rows differ in length");
  if (t[0].size() < 2) throw DataError("contingency table needs at least two columns");
  for (const auto& row : t)
    for (long v : row)
      if (v < 0) throw DataError("contingency table has a negative count");
}

}  // namespace

WaldResult pearson_chi2(const ContingencyTable& table) {
  check_table(table);
  const std::size_t k = table[0].size();
  std::array<double, 2> row{};
  std::vector<double> col(k, 0.0);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < k; ++j) {
      row[r] += static_cast<double>(table[r][j]);
      col[j] += static_cast<double>(table[r][j]);
    }
  if (row[0] == 0 || row[1] == 0 || std::any_of(col.begin(), col.end(), [](double c) { return c == 0; }))
    throw DataError("pearson_chi2: a margin is zero");
  const double total = row[0] + row[1];
  WaldResult res;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < k; ++j) {
      const double e = row[r] * col[j] / total;
      const double d = static_cast<double>(table[r][j]) - e;
      res.statistic += d * d / e;
    }
  res.df = static_cast<int>(k) - 1;
  res.p_value = chi2_upper_tail(res.statistic, res.df);
  return res;
}

FisherResult fisher_exact_detail(const ContingencyTable& table) {
  check_table(table);
  const std::size_t k = table[0].size();
  std::vector<long> col(k);
  long successes = 0;
  for (std::size_t j = 0; j < k; ++j) {
    col[j] = table[0][j] + table[1][j];
    successes += table[0][j];
  }
  const long total = std::accumulate(col.begin(), col.end(), 0L);
  if (total > 500) throw DataError("fisher_exact: total count exceeds the enumeration bound of 500");
  if (total == 0) throw DataError("fisher_exact: empty table");

  auto log_choose = [](long n, long r) {
    return std::lgamma(static_cast<long double>(n + 1)) - std::lgamma(static_cast<long double>(r + 1)) -
           std::lgamma(static_cast<long double>(n - r + 1));
  };
  const long double log_denominator = log_choose(total, successes);
  auto log_prob = [&](const std::vector<long>& x) {
    long double lp = -log_denominator;
    for (std::size_t j = 0; j < k; ++j) lp += log_choose(col[j], x[j]);
    return lp;
  };

  FisherResult res;
  const long double p_obs = std::exp(log_prob(table[0]));
  res.observed_probability = static_cast<double>(p_obs);
  const long double cutoff = p_obs * (1.0L + 1e-12L);

  // Suffix sums of column totals bound the remaining successes.
  std::vector<long> suffix(k + 1, 0);
  for (std::size_t j = k; j-- > 0;) suffix[j] = suffix[j + 1] + col[j];

  std::vector<long> x(k, 0);
  long double p_sum = 0.0L, total_sum = 0.0L;
  auto recurse = [&](auto&& self, std::size_t j, long remaining) -> void {
    if (j + 1 == k) {
      x[j] = remaining;
      const long double p = std::exp(log_prob(x));
      total_sum += p;
      ++res.tables;
      if (p <= cutoff) p_sum += p;
      return;
    }
    const long lo = std::max(0L, remaining - suffix[j + 1]);
    const long hi = std::min(col[j], remaining);
    for (long v = lo; v <= hi; ++v) {
      x[j] = v;
      self(self, j + 1, remaining - v);
    }
  };
  recurse(recurse, 0, successes);
  res.total_probability = static_cast<double>(total_sum);
  res.p_value = static_cast<double>(std::min(1.0L, p_sum));
  return res;
}

double fisher_exact(const ContingencyTable& table) { return fisher_exact_detail(table).p_value; }

const char* to_string(EndpointView v) { return v == EndpointView::LastPlanned ? "last-planned" : "last-observed"; }

const char* to_string(EndpointStrategy s) { return s == EndpointStrategy::CC ? "cc" : "locf"; }

EndpointView parse_endpoint_view(const std::string& s) {
  if (s == "last-planned") return EndpointView::LastPlanned;
  if (s == "last-observed") return EndpointView::LastObserved;
  throw DataError("unknown endpoint view '" + s + "'");
}

EndpointStrategy parse_endpoint_strategy(const std::string& s) {
  if (s == "cc") return EndpointStrategy::CC;
  if (s == "locf") return EndpointStrategy::LOCF;
  throw DataError("unknown endpoint strategy '" + s + "'");
}

EndpointResult endpoint_analysis(const LongDataset& dataset, EndpointView view, EndpointStrategy strategy) {
  if (view == EndpointView::LastObserved && strategy == EndpointStrategy::CC)
    throw DataError("endpoint_analysis: CC is not an option under the last-observed view");
  EndpointResult res;
  res.view = view;
  res.strategy = strategy;
  res.arms = dataset.arms();
  const auto k = res.arms.size();
  res.table[0].assign(k, 0);
  res.table[1].assign(k, 0);

  auto tally = [&](const SubjectRecord& s, int y) {
    const auto a = static_cast<std::size_t>(std::find(res.arms.begin(), res.arms.end(), s.treatment) - res.arms.begin());
    ++res.table[y == 1 ? 0 : 1][a];
    ++res.n_subjects;
  };

  if (strategy == EndpointStrategy::CC) {
    for (const auto& s : complete_case(dataset).subjects()) tally(s, *s.outcomes.back());
  } else if (view == EndpointView::LastPlanned) {
    for (const auto& s : locf_impute(dataset).data.subjects())
      if (s.outcomes.back()) tally(s, *s.outcomes.back());
  } else {
    for (const auto& s : dataset.subjects())
      for (auto it = s.outcomes.rbegin(); it != s.outcomes.rend(); ++it)
        if (*it) {
          tally(s, **it);
          break;
        }
  }
  res.pearson = pearson_chi2(res.table);
  res.fisher = fisher_exact_detail(res.table);
  return res;
}

}  // namespace longit

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longit/dataset.hpp"
#include "longit/formula.hpp"
#include "longit/gee.hpp"
#include "longit/glm.hpp"

namespace longit {

/// Builds the dropout-history row h_ij: intercept, previous outcome,
/// treatment dummies, declared covariates, and occasion dummies for
/// occasions 2..n-1 (the last occasion is the reference).
class DropoutDesign {
 public:
  DropoutDesign(const LongDataset& dataset, std::vector<std::string> covariates);

  [[nodiscard]] const std::vector<std::string>& column_names() const { return names_; }
  /// Row for subject at 0-based occasion j >= 1; needs y_{j-1} observed.
  [[nodiscard]] Eigen::RowVectorXd row(const SubjectRecord& subject, std::size_t j) const;
  [[nodiscard]] const std::vector<std::string>& covariates() const { return covariates_; }

 private:
  const LongDataset* dataset_;
  std::vector<std::string> covariates_;
  std::vector<std::size_t> cov_index_;
  std::vector<std::string> names_;
};

struct PersonPeriodRow {
  std::size_t subject = 0;   // index into the dataset
  std::size_t occasion = 0;  // 0-based; >= 1
  int drop = 0;
};

/// One row per subject per occasion 2..n while at risk (D_i >= j).
struct PersonPeriodTable {
  std::vector<std::string> columns;
  std::vector<PersonPeriodRow> rows;
  Eigen::MatrixXd X;
  Eigen::VectorXd drop;
};

/// Requires monotone profiles with occasion 1 observed; throws DataError
/// otherwise.
[[nodiscard]] PersonPeriodTable person_period_expand(const LongDataset& dataset,
                                                     const std::vector<std::string>& covariates = {});

struct DropoutModel {
  GlmFit fit;  // psi with standard errors
  std::vector<std::string> covariates;

  [[nodiscard]] const Eigen::VectorXd& psi() const { return fit.beta; }
  [[nodiscard]] const std::vector<std::string>& names() const { return fit.names; }
};

[[nodiscard]] DropoutModel fit_dropout_model(const PersonPeriodTable& table,
                                             std::vector<std::string> covariates = {});

/// Fitted dropout hazards p_ij for occasions 2..min(d_i, n) (index 0 is
/// occasion 2).
[[nodiscard]] std::vector<double> dropout_hazards(const DropoutModel& model, const DropoutDesign& design,
                                                  const SubjectRecord& subject);

/// P[D = d] for d = 2..n+1 from hazards p_2..p_n.
[[nodiscard]] std::vector<double> dropout_distribution(const std::vector<double>& hazards);

/// nu = prod_{k=2}^{d-1} (1 - p_k) * p_d^{I(d <= n)}; hazards[0] is p_2.
[[nodiscard]] double dropout_pattern_probability(const std::vector<double>& hazards, int d, std::size_t n);

enum class WeightMode { Occasion, Subject };

[[nodiscard]] const char* to_string(WeightMode m);
[[nodiscard]] WeightMode parse_weight_mode(const std::string& s);

struct WeightSet {
  WeightMode mode = WeightMode::Occasion;
  /// nu_{i d_i} per subject.
  std::vector<double> nu;
  /// Pre-inversion cumulative per observed occasion (occasion mode), or nu
  /// repeated (subject mode).
  std::vector<std::vector<double>> cumulative;
  /// Inverse weights per observed occasion; aligned with build_design().
  ObservationWeights weights;

  [[nodiscard]] double max_weight() const;
};

[[nodiscard]] WeightSet subject_weights(const DropoutModel& model, const LongDataset& dataset);
[[nodiscard]] WeightSet occasion_weights(const DropoutModel& model, const LongDataset& dataset);

/// Caps every weight at the given quantile of all observation weights.
void truncate_weights(WeightSet& weights, double quantile);

struct WgeeOptions {
  GeeOptions gee;
  WeightMode mode = WeightMode::Occasion;
  std::optional<double> truncation_quantile;
  std::vector<std::string> dropout_covariates;
  double extreme_weight = 50.0;
};

struct WgeeFit {
  GeeFit gee;
  DropoutModel dropout;
  WeightSet weights;
  LongDataset data;  // monotonized, first-occasion-observed subjects
  std::size_t excluded_subjects = 0;
  std::size_t discarded_observations = 0;
  std::vector<std::string> warnings;
};

/// Monotonizes, excludes subjects missing occasion 1, fits the dropout
/// model, builds weights and solves the weighted estimating equations.
[[nodiscard]] WgeeFit fit_wgee(const LongDataset& dataset, const Formula& formula, CorrStructure structure,
                               const WgeeOptions& options = {});

}  // namespace longit

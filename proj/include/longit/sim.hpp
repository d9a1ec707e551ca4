#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longit/dataset.hpp"
#include "longit/formula.hpp"
#include "longit/gee.hpp"
#include "longit/glmm.hpp"
#include "longit/wgee.hpp"

namespace longit {

/// Dropout coefficients on h_ij = (1, y_{i,j-1}, treatment dummies,
/// occasion dummies for occasions 2..n-1).
struct DropoutPsi {
  double intercept = -30.0;
  double prev = 0.0;
  std::vector<double> treatment;  // per non-reference arm; missing entries are 0
  std::vector<double> time;       // occasions 2..n-1; missing entries are 0
};

struct SimSpec {
  std::size_t N = 300;
  std::size_t n = 4;
  std::vector<std::string> arms{"A", "B"};  // first is the reference
  std::vector<double> allocation;           // proportions; empty means equal
  std::vector<std::string> occasions;       // empty means "1".."n"
  std::vector<double> visit_intercepts;     // length n
  std::vector<std::vector<double>> treatment_effects;  // [arm - 1][visit]
  double sigma = 0.0;
  DropoutPsi psi;
  double omega = 0.0;
  std::uint64_t seed = 1;

  /// "MCAR", "MAR" or "MNAR", derived from psi and omega.
  [[nodiscard]] std::string mechanism() const;
  /// Throws DataError when lengths disagree or values are out of range.
  void validate() const;
  [[nodiscard]] std::vector<std::string> occasion_labels() const;
  /// Conditional linear predictor for an arm (index into arms) at a visit.
  [[nodiscard]] double cell_eta(std::size_t arm, std::size_t visit) const;
  /// Arm index of each subject under deterministic block allocation.
  [[nodiscard]] std::vector<std::size_t> arm_assignment() const;
};

[[nodiscard]] SimSpec parse_sim_spec(const std::string& json_text);
[[nodiscard]] SimSpec load_sim_spec_file(const std::string& path);
[[nodiscard]] std::string to_json(const SimSpec& spec);

/// Draws b_i ~ N(0, sigma^2) and Y_ij ~ Bernoulli(expit(eta_ij + b_i)).
[[nodiscard]] LongDataset simulate_complete(const SimSpec& spec);

/// Sequential dropout at j = 2..n with probability expit(h_ij psi + omega y_ij).
[[nodiscard]] LongDataset apply_dropout(const LongDataset& complete, const SimSpec& spec);

/// simulate_complete followed by apply_dropout.
[[nodiscard]] LongDataset simulate(const SimSpec& spec);

/// Coefficients under `formula` that reproduce each (arm, visit) cell's
/// conditional linear predictor (marginal = false) or the logit of its
/// marginal mean (marginal = true). The formula must span the cells.
[[nodiscard]] Eigen::VectorXd true_coefficients(const SimSpec& spec, const LongDataset& dataset,
                                                const Formula& formula, bool marginal);

struct ReplicationOptions {
  std::size_t replicates = 2;
  std::string formula = "outcome ~ trt*visit";
  CorrStructure corr = CorrStructure::Exchangeable;
  WeightMode weights = WeightMode::Occasion;
  QuadratureSpec quadrature{QuadratureMode::Adaptive, 20};
  Optimizer optimizer = Optimizer::QuasiNewton;
};

/// Estimators: oracle, gee-cc, gee-locf, gee-observed, wgee, glmm-cc,
/// glmm-locf, glmm-observed. GEE-type estimators target the marginal
/// last-occasion treatment effects, GLMM estimators the conditional ones.
[[nodiscard]] const std::vector<std::string>& known_estimators();

struct ReplicationRow {
  std::string estimator;
  std::string parameter;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double mc_se = 0.0;         // empirical_se / sqrt(successes)
  double empirical_se = 0.0;  // sd of the estimates
  double mean_se = 0.0;       // mean reported SE
  double coverage = 0.0;      // share of 95% Wald intervals covering truth
  std::size_t successes = 0;
  std::size_t failures = 0;
};

struct ReplicationReport {
  std::string mechanism;
  std::size_t replicates = 0;
  std::vector<ReplicationRow> rows;  // estimator order as requested, then parameter

  void write_csv(std::ostream& out) const;
};

/// Replicate r uses seed + r; results do not depend on execution order.
[[nodiscard]] ReplicationReport replicate_study(const SimSpec& spec, const std::vector<std::string>& estimators,
                                                const ReplicationOptions& options);

}  // namespace longit

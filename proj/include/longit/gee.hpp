#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longit/dataset.hpp"
#include "longit/formula.hpp"

namespace longit {

enum class CorrStructure { Independence, Exchangeable, AR1, Unstructured };

[[nodiscard]] const char* to_string(CorrStructure s);
[[nodiscard]] CorrStructure parse_corr_structure(const std::string& s);

/// Working correlation and its nuisance parameters. `alpha` holds the scalar
/// for Exchangeable/AR1; `alpha_matrix` the n x n occasion correlations for
/// Unstructured (unit diagonal).
struct WorkingCorrelation {
  CorrStructure structure = CorrStructure::Independence;
  double alpha = 0.0;
  Eigen::MatrixXd alpha_matrix;

  /// Max absolute difference between parameter stores of the same structure.
  [[nodiscard]] double distance(const WorkingCorrelation& other) const;
};

/// C_i over the given (0-based, increasing) design occasions. AR1 uses the
/// design lag, so a gap of t occasions gives alpha^t. Throws DataError when
/// alpha lies outside the validity region for n_occasions.
[[nodiscard]] Eigen::MatrixXd correlation_matrix(const WorkingCorrelation& corr,
                                                 const std::vector<std::size_t>& occasions,
                                                 std::size_t n_occasions);

/// (y - mu) / sqrt(mu (1 - mu)). Throws NumericalError when some mu is 0 or 1.
[[nodiscard]] Eigen::VectorXd pearson_residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& mu);

/// Residuals of one subject with the per-observation weights that enter the
/// moment sums (pairs carry sqrt(w_j w_k)).
struct ResidualBlock {
  Eigen::VectorXd e;
  std::vector<std::size_t> occasions;
  Eigen::VectorXd weights;  // empty means all ones
};

/// Moment estimate of the working-correlation parameters. For Exchangeable
/// with unit weights this is (1/N) sum_i [1/(n_i(n_i-1))] sum_{j!=k} e_ij e_ik
/// over subjects with n_i >= 2. Unsupported Unstructured cells are set to 0
/// and reported through `warnings`.
[[nodiscard]] WorkingCorrelation estimate_alpha(const std::vector<ResidualBlock>& blocks, CorrStructure structure,
                                                std::size_t n_occasions,
                                                std::vector<std::string>* warnings = nullptr);

struct GeeOptions {
  int max_iterations = 200;
  double beta_tolerance = 1e-8;
  double alpha_tolerance = 1e-8;
  double score_tolerance = 1e-6;
  /// Inflate the meat by N/(N-1).
  bool small_sample_correction = false;
};

struct GeeFit {
  Eigen::VectorXd beta;
  WorkingCorrelation correlation;
  Eigen::MatrixXd model_based_cov;  // I0^{-1}
  Eigen::MatrixXd sandwich_cov;     // I0^{-1} I1 I0^{-1}
  Eigen::VectorXd score;            // estimating function at beta
  int iterations = 0;
  bool converged = false;
  std::size_t n_subjects = 0;  // contributing subjects
  std::vector<std::string> names;
  std::vector<std::string> warnings;

  [[nodiscard]] Eigen::VectorXd model_based_se() const { return model_based_cov.diagonal().cwiseSqrt(); }
  [[nodiscard]] Eigen::VectorXd sandwich_se() const { return sandwich_cov.diagonal().cwiseSqrt(); }
};

/// Per-observation weights aligned with a DesignSet (one vector per subject).
using ObservationWeights = std::vector<Eigen::VectorXd>;

struct SandwichParts {
  Eigen::MatrixXd I0;
  Eigen::MatrixXd I1;
  Eigen::MatrixXd model_based;
  Eigen::MatrixXd sandwich;
};

/// Estimating function sum_i D_i' W_i^{1/2} V_i^{-1} W_i^{1/2} (y_i - mu_i).
/// Empty `weights` means unit weights.
[[nodiscard]] Eigen::VectorXd gee_score(const DesignSet& design, const ObservationWeights& weights,
                                        const Eigen::VectorXd& beta, const WorkingCorrelation& corr,
                                        std::size_t n_occasions);

[[nodiscard]] SandwichParts sandwich_covariance(const DesignSet& design, const ObservationWeights& weights,
                                                const Eigen::VectorXd& beta, const WorkingCorrelation& corr,
                                                std::size_t n_occasions, bool small_sample_correction = false);

/// GEE on a prepared design. Subjects with no rows are skipped.
[[nodiscard]] GeeFit fit_gee(const DesignSet& design, const ObservationWeights& weights, CorrStructure structure,
                             std::size_t n_occasions, const GeeOptions& options = {});

/// Available-case GEE on the observed outcomes of `dataset`.
[[nodiscard]] GeeFit fit_gee(const LongDataset& dataset, const Formula& formula, CorrStructure structure,
                             const GeeOptions& options = {});

}  // namespace longit

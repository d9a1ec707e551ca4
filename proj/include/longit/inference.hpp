#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longit/dataset.hpp"
#include "longit/formula.hpp"

namespace longit {

struct WaldResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::optional<double> estimate;  // df = 1 only
  std::optional<double> se;        // df = 1 only
};

/// Upper tail of the chi-squared distribution.
[[nodiscard]] double chi2_upper_tail(double statistic, int df);

/// (L b)' (L V L')^{-1} (L b). Throws std::invalid_argument on
/// non-conforming shapes and NumericalError when L V L' is singular.
[[nodiscard]] WaldResult wald_test(const Eigen::MatrixXd& L, const Eigen::VectorXd& beta, const Eigen::MatrixXd& V);

enum class ContrastKind { JointPerArm, JointBothArms, AveragePerArm, AverageBothArms, LastOccasion };

[[nodiscard]] const char* to_string(ContrastKind k);
[[nodiscard]] ContrastKind parse_contrast_kind(const std::string& s);

struct ContrastSet {
  Eigen::MatrixXd L;
  std::vector<std::string> labels;  // one per row
};

/// Treatment-effect contrasts from differences of design rows
/// x(arm, visit) - x(reference, visit) with other covariates at their
/// reference levels. `arm` selects the arm for the per-arm kinds (default:
/// the first non-reference arm). Throws DataError when the formula cannot
/// carry the requested effects.
[[nodiscard]] ContrastSet build_contrasts(const LongDataset& dataset, const Formula& formula, ContrastKind kind,
                                          const std::string& arm = "");

/// 2 x k counts; row 0 successes, row 1 failures, one column per arm.
using ContingencyTable = std::array<std::vector<long>, 2>;

/// Classical sum (O - E)^2 / E with df = k - 1. Throws DataError on a zero
/// margin.
[[nodiscard]] WaldResult pearson_chi2(const ContingencyTable& table);

struct FisherResult {
  double p_value = 1.0;
  double observed_probability = 0.0;
  double total_probability = 0.0;  // over the whole margin class
  std::size_t tables = 0;
};

/// Two-sided exact test over all 2 x k tables with the observed margins;
/// sums tables no more probable than the observed one. Total count <= 500.
[[nodiscard]] FisherResult fisher_exact_detail(const ContingencyTable& table);
[[nodiscard]] double fisher_exact(const ContingencyTable& table);

enum class EndpointView { LastPlanned, LastObserved };
enum class EndpointStrategy { CC, LOCF };

[[nodiscard]] const char* to_string(EndpointView v);
[[nodiscard]] const char* to_string(EndpointStrategy s);
[[nodiscard]] EndpointView parse_endpoint_view(const std::string& s);
[[nodiscard]] EndpointStrategy parse_endpoint_strategy(const std::string& s);

struct EndpointResult {
  EndpointView view = EndpointView::LastPlanned;
  EndpointStrategy strategy = EndpointStrategy::CC;
  std::vector<std::string> arms;
  ContingencyTable table;
  std::size_t n_subjects = 0;
  WaldResult pearson;
  FisherResult fisher;
};

/// Builds the per-arm success table at the chosen endpoint and runs both
/// tests. CC under the last-observed view is rejected with DataError.
[[nodiscard]] EndpointResult endpoint_analysis(const LongDataset& dataset, EndpointView view,
                                               EndpointStrategy strategy);

}  // namespace longit

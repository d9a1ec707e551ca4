#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longit/dataset.hpp"

namespace longit {

/// One model term; an empty factor list is the intercept.
struct Term {
  std::vector<std::string> factors;
  friend bool operator==(const Term&, const Term&) = default;
};

/// `outcome ~ trt*visit + baseline*visit` style model statement. `a*b`
/// expands to a + b + a:b; `0` or `-1` drops the intercept. `visit` (alias
/// `occasion`) is the protocol occasion and is always categorical; `trt`
/// aliases the schema's treatment column.
struct Formula {
  std::string response = "outcome";
  bool intercept = true;
  std::vector<Term> terms;  // excludes the intercept
};

[[nodiscard]] Formula parse_formula(const std::string& text);
[[nodiscard]] std::string to_string(const Formula& f);

/// Values that determine one design row. Unset categorical entries take the
/// reference level; unset continuous entries take 0.
struct RowContext {
  std::size_t occasion = 0;
  std::string treatment;
  std::map<std::string, CovariateValue> covariates;
};

/// Resolves a formula against a dataset's variables and level sets.
class DesignBuilder {
 public:
  DesignBuilder(const LongDataset& dataset, Formula formula);

  [[nodiscard]] const std::vector<std::string>& column_names() const { return names_; }
  [[nodiscard]] std::size_t n_columns() const { return names_.size(); }
  [[nodiscard]] const Formula& formula() const { return formula_; }

  [[nodiscard]] Eigen::RowVectorXd row(const SubjectRecord& subject, std::size_t occasion) const;
  [[nodiscard]] Eigen::RowVectorXd row(const RowContext& ctx) const;

  /// Names of the variables used by the model (canonical: "visit", "trt" or
  /// a covariate name).
  [[nodiscard]] bool uses(const std::string& variable) const;

 private:
  enum class VarKind { Visit, Treatment, Categorical, Continuous };
  struct Variable {
    std::string name;
    VarKind kind;
    std::size_t covariate = 0;
    std::vector<std::string> levels;
  };
  struct Part {
    std::size_t var;
    bool contrast;  // drop the reference level
  };
  struct ExpandedTerm {
    std::vector<Part> parts;
  };

  [[nodiscard]] double level_indicator(std::size_t var, const std::string& level, const std::string& value) const;
  void append_term(const ExpandedTerm& term, const std::vector<std::string>& values,
                   const std::vector<double>& numbers, Eigen::RowVectorXd& out, Eigen::Index& col) const;

  const LongDataset* dataset_;
  Formula formula_;
  std::vector<Variable> vars_;
  std::vector<ExpandedTerm> terms_;
  std::vector<std::string> names_;
};

/// One subject's observed rows.
struct SubjectDesign {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::size_t> occasions;  // 0-based index per row
};

struct DesignSet {
  std::vector<std::string> columns;
  std::vector<SubjectDesign> subjects;  // aligned with dataset.subjects()
  [[nodiscard]] std::size_t n_rows() const;
  [[nodiscard]] Eigen::MatrixXd stacked_X() const;
  [[nodiscard]] Eigen::VectorXd stacked_y() const;
};

/// Per-subject design matrices over observed occasions. Throws DataError on
/// unknown terms or when the stacked observed design is rank deficient.
[[nodiscard]] DesignSet build_design(const LongDataset& dataset, const Formula& formula);

/// Throws DataError naming a dependent column when X lacks full column rank.
void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names);

}  // namespace longit

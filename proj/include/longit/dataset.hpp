#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace longit {

/// A binary outcome slot: 0, 1, or missing (nullopt).
using Outcome = std::optional<int>;

enum class CovariateKind { Categorical, Continuous };

struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::Continuous;
  bool time_varying = false;
};

/// Column layout of a long-format file beyond the fixed id/occasion/outcome
/// columns.
struct CovariateSchema {
  std::string treatment_column = "trt";
  std::vector<CovariateSpec> covariates;
  /// Declared occasion order. Empty means infer from the data (numeric
  /// order when every label parses as a number, otherwise first appearance).
  std::vector<std::string> occasions;
  /// Reference level overrides keyed by covariate name or treatment column.
  std::map<std::string, std::string> reference_levels;

  [[nodiscard]] const CovariateSpec* find(const std::string& name) const;
};

/// Missing covariate cells are monostate.
using CovariateValue = std::variant<std::monostate, double, std::string>;

struct SubjectRecord {
  std::string id;
  std::vector<Outcome> outcomes;
  /// covariates[j][c]: value of schema covariate c at occasion j. Constant
  /// covariates are replicated across occasions.
  std::vector<std::vector<CovariateValue>> covariates;
  std::string treatment;

  [[nodiscard]] std::size_t observed_count() const;
};

/// Subjects x occasions grid of binary outcomes. Immutable once built; the
/// preparation strategies derive new datasets through with_subjects().
class LongDataset {
 public:
  LongDataset(std::vector<std::string> occasions, CovariateSchema schema,
              std::vector<SubjectRecord> subjects);

  [[nodiscard]] const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  [[nodiscard]] const SubjectRecord& subject(std::size_t i) const { return subjects_[i]; }
  [[nodiscard]] std::size_t size() const { return subjects_.size(); }
  [[nodiscard]] bool empty() const { return subjects_.empty(); }
  [[nodiscard]] const std::vector<std::string>& occasions() const { return occasions_; }
  [[nodiscard]] std::size_t n_occasions() const { return occasions_.size(); }
  [[nodiscard]] const CovariateSchema& schema() const { return schema_; }

  /// Treatment arms, reference arm first, remaining arms in sorted order.
  [[nodiscard]] const std::vector<std::string>& arms() const { return arms_; }
  [[nodiscard]] const std::string& reference_arm() const { return arms_.front(); }

  /// Levels of a categorical covariate, reference level first.
  [[nodiscard]] const std::vector<std::string>& levels(const std::string& covariate) const;
  [[nodiscard]] std::size_t covariate_index(const std::string& name) const;

  /// Same occasions, schema, arms and levels; different subjects. Keeping the
  /// level sets fixed keeps design columns aligned across strategies.
  [[nodiscard]] LongDataset with_subjects(std::vector<SubjectRecord> subjects) const;

 private:
  LongDataset() = default;
  void validate() const;

  std::vector<std::string> occasions_;
  CovariateSchema schema_;
  std::vector<SubjectRecord> subjects_;
  std::vector<std::string> arms_;
  std::map<std::string, std::vector<std::string>> levels_;
};

enum class Pattern { Complete, MonotoneDropout, Intermittent, AllMissing };

[[nodiscard]] const char* to_string(Pattern p);

struct MissingnessProfile {
  std::vector<int> r;
  /// Dropout index in {2, ..., n+1}; 1-based first missed occasion of the
  /// monotone prefix, n+1 for completers.
  int d = 0;
  Pattern pattern = Pattern::Complete;
};

[[nodiscard]] MissingnessProfile missingness_profile(const SubjectRecord& subject);

/// "O"/"M" string of a subject's outcome slots.
[[nodiscard]] std::string pattern_string(const SubjectRecord& subject);

struct PatternRow {
  std::string pattern;  // e.g. "OOOM"
  Pattern kind = Pattern::Complete;
  std::size_t count = 0;
  double percent = 0.0;
};

/// One row per distinct O/M string, grouped completers, dropouts (including
/// all-missing), then non-monotone; within a group ordered "O" before "M".
[[nodiscard]] std::vector<PatternRow> pattern_table(const LongDataset& dataset);

[[nodiscard]] LongDataset load_long_csv(std::istream& in, const CovariateSchema& schema);
[[nodiscard]] LongDataset load_long_csv_file(const std::string& path, const CovariateSchema& schema);

/// Reads only the header row and classifies the non-fixed columns: a column
/// whose non-NA cells all parse as numbers is continuous, otherwise
/// categorical. Explicit entries in `categorical` / `time_varying` win.
[[nodiscard]] CovariateSchema infer_schema(std::istream& in, const std::string& treatment_column,
                                           const std::vector<std::string>& categorical = {},
                                           const std::vector<std::string>& time_varying = {});

/// Writes the dataset back out in the long format accepted by load_long_csv.
void write_long_csv(std::ostream& out, const LongDataset& dataset);

}  // namespace longit

#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "longit/dataset.hpp"

namespace testing {

// Builds a dataset without covariates from outcome rows; -1 marks missing.
inline longit::LongDataset make_dataset(const std::vector<std::vector<int>>& rows,
                                        const std::vector<std::string>& arms = {}) {
  const std::size_t n = rows.empty() ? 0 : rows.front().size();
  std::vector<std::string> occ;
  for (std::size_t j = 0; j < n; ++j) occ.push_back(std::to_string(j + 1));
  std::vector<longit::SubjectRecord> subjects;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    longit::SubjectRecord s;
    s.id = "s" + std::to_string(i + 1);
    s.treatment = arms.empty() ? (i % 2 ? "T" : "C") : arms[i];
    s.covariates.assign(n, {});
    for (int v : rows[i]) s.outcomes.push_back(v < 0 ? longit::Outcome{} : longit::Outcome{v});
    subjects.push_back(std::move(s));
  }
  return longit::LongDataset(occ, longit::CovariateSchema{}, std::move(subjects));
}

inline longit::LongDataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  const auto schema = longit::infer_schema(in, "trt");
  std::istringstream again(text);
  return longit::load_long_csv(again, schema);
}

}  // namespace testing

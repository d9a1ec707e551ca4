#pragma once

#include <cstddef>
#include <vector>

#include "longit/dataset.hpp"

namespace longit {

/// Subjects with every occasion observed. Throws DataError when none remain.
[[nodiscard]] LongDataset complete_case(const LongDataset& dataset);

struct LocfResult {
  LongDataset data;
  std::size_t dropped_subjects = 0;  // subjects with no observed outcome
};

/// Last observation carried forward. Leading missing slots stay missing.
[[nodiscard]] LocfResult locf_impute(const LongDataset& dataset);

struct ObservedSplit {
  std::vector<std::size_t> observed;  // 0-based occasion indices
  std::vector<std::size_t> missing;
  std::vector<int> values;            // outcomes at `observed`
};

[[nodiscard]] ObservedSplit observed_split(const SubjectRecord& subject);

struct MonotonizeResult {
  LongDataset data;
  std::size_t discarded_observations = 0;
  std::size_t fully_discarded_subjects = 0;  // had observations, now none
};

/// Truncates every profile at its first missing slot.
[[nodiscard]] MonotonizeResult monotonize(const LongDataset& dataset);

/// Drops subjects with no observed outcome; returns the number removed.
[[nodiscard]] LongDataset drop_all_missing(const LongDataset& dataset, std::size_t* removed = nullptr);

}  // namespace longit

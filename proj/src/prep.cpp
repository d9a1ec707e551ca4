#include "longit/prep.hpp"

#include "longit/error.hpp"

namespace longit {

LongDataset complete_case(const LongDataset& dataset) {
  std::vector<SubjectRecord> kept;
  for (const auto& s : dataset.subjects())
    if (s.observed_count() == s.outcomes.size()) kept.push_back(s);
  if (kept.empty()) throw DataError("complete-case analysis: no completers");
  return dataset.with_subjects(std::move(kept));
}

LocfResult locf_impute(const LongDataset& dataset) {
  std::vector<SubjectRecord> out;
  std::size_t dropped = 0;
  for (const auto& s : dataset.subjects()) {
    if (s.observed_count() == 0) {
      ++dropped;
      continue;
    }
    SubjectRecord filled = s;
    Outcome last;
    for (auto& y : filled.outcomes) {
      if (y)
        last = y;
      else
        y = last;
    }
    out.push_back(std::move(filled));
  }
  return {dataset.with_subjects(std::move(out)), dropped};
}

ObservedSplit observed_split(const SubjectRecord& subject) {
  ObservedSplit split;
  for (std::size_t j = 0; j < subject.outcomes.size(); ++j) {
    if (subject.outcomes[j]) {
      split.observed.push_back(j);
      split.values.push_back(*subject.outcomes[j]);
    } else {
      split.missing.push_back(j);
    }
  }
  return split;
}

MonotonizeResult monotonize(const LongDataset& dataset) {
  std::vector<SubjectRecord> out;
  out.reserve(dataset.size());
  std::size_t discarded = 0;
  std::size_t emptied = 0;
  for (const auto& s : dataset.subjects()) {
    SubjectRecord m = s;
    const bool had_any = s.observed_count() > 0;
    bool gap = false;
    for (auto& y : m.outcomes) {
      if (!y) {
        gap = true;
      } else if (gap) {
        y.reset();
        ++discarded;
      }
    }
    if (had_any && m.observed_count() == 0) ++emptied;
    out.push_back(std::move(m));
  }
  return {dataset.with_subjects(std::move(out)), discarded, emptied};
}

LongDataset drop_all_missing(const LongDataset& dataset, std::size_t* removed) {
  std::vector<SubjectRecord> kept;
  std::size_t gone = 0;
  for (const auto& s : dataset.subjects()) {
    if (s.observed_count() == 0)
      ++gone;
    else
      kept.push_back(s);
  }
  if (removed) *removed = gone;
  return dataset.with_subjects(std::move(kept));
}

}  // namespace longit

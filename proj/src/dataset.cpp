#include "longit/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "longit/error.hpp"

namespace longit {

namespace {

constexpr const char* kIdColumn = "id";
constexpr const char* kOccasionColumn = "occasion";
constexpr const char* kOutcomeColumn = "outcome";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  for (auto& s : cells) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return cells;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return v;
}

bool is_na(const std::string& s) { return s == "NA" || s.empty(); }

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool same_value(const CovariateValue& a, const CovariateValue& b) {
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<double>(&a)) return *x == std::get<double>(b);
  if (const auto* x = std::get_if<std::string>(&a)) return *x == std::get<std::string>(b);
  return true;
}

}  // namespace

const CovariateSpec* CovariateSchema::find(const std::string& name) const {
  for (const auto& c : covariates)
    if (c.name == name) return &c;
  return nullptr;
}

std::size_t SubjectRecord::observed_count() const {
  return static_cast<std::size_t>(
      std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return o.has_value(); }));
}

LongDataset::LongDataset(std::vector<std::string> occasions, CovariateSchema schema,
                         std::vector<SubjectRecord> subjects)
    : occasions_(std::move(occasions)), schema_(std::move(schema)), subjects_(std::move(subjects)) {
  std::set<std::string> arm_set;
  for (const auto& s : subjects_) arm_set.insert(s.treatment);
  arms_.assign(arm_set.begin(), arm_set.end());
  if (auto it = schema_.reference_levels.find(schema_.treatment_column);
      it != schema_.reference_levels.end()) {
    auto pos = std::find(arms_.begin(), arms_.end(), it->second);
    if (pos == arms_.end())
      throw DataError("reference arm '" + it->second + "' does not occur in the data");
    std::rotate(arms_.begin(), pos, pos + 1);
  }

  for (std::size_t c = 0; c < schema_.covariates.size(); ++c) {
    const auto& spec = schema_.covariates[c];
    if (spec.kind != CovariateKind::Categorical) continue;
    std::set<std::string> seen;
    for (const auto& s : subjects_)
      for (const auto& row : s.covariates)
        if (const auto* lv = std::get_if<std::string>(&row[c])) seen.insert(*lv);
    std::vector<std::string> lv(seen.begin(), seen.end());
    if (auto it = schema_.reference_levels.find(spec.name); it != schema_.reference_levels.end()) {
      auto pos = std::find(lv.begin(), lv.end(), it->second);
      if (pos == lv.end())
        throw DataError("reference level '" + it->second + "' of '" + spec.name + "' does not occur");
      std::rotate(lv.begin(), pos, pos + 1);
    }
    levels_[spec.name] = std::move(lv);
  }
  validate();
}

void LongDataset::validate() const {
  std::set<std::string> labels;
  for (const auto& o : occasions_)
    if (!labels.insert(o).second) throw DataError("duplicate occasion label '" + o + "'");
  std::set<std::string> ids;
  const auto n = occasions_.size();
  const auto p = schema_.covariates.size();
  for (const auto& s : subjects_) {
    if (!ids.insert(s.id).second) throw DataError("duplicate subject id '" + s.id + "'");
    if (s.outcomes.size() != n)
      throw DataError("subject '" + s.id + "' does not have one slot per occasion");
    for (const auto& o : s.outcomes)
      if (o && *o != 0 && *o != 1) throw DataError("subject '" + s.id + "' has a non-binary outcome");
    if (s.covariates.size() != n)
      throw DataError("subject '" + s.id + "' covariate grid has the wrong number of occasions");
    for (const auto& row : s.covariates)
      if (row.size() != p) throw DataError("subject '" + s.id + "' covariate row has the wrong width");
  }
}

const std::vector<std::string>& LongDataset::levels(const std::string& covariate) const {
  auto it = levels_.find(covariate);
  if (it == levels_.end()) throw DataError("'" + covariate + "' is not a categorical covariate");
  return it->second;
}

std::size_t LongDataset::covariate_index(const std::string& name) const {
  for (std::size_t c = 0; c < schema_.covariates.size(); ++c)
    if (schema_.covariates[c].name == name) return c;
  throw DataError("unknown covariate '" + name + "'");
}

LongDataset LongDataset::with_subjects(std::vector<SubjectRecord> subjects) const {
  LongDataset out;
  out.occasions_ = occasions_;
  out.schema_ = schema_;
  out.subjects_ = std::move(subjects);
  out.arms_ = arms_;
  out.levels_ = levels_;
  out.validate();
  for (const auto& s : out.subjects_)
    if (std::find(arms_.begin(), arms_.end(), s.treatment) == arms_.end())
      throw DataError("subject '" + s.id + "' has undeclared arm '" + s.treatment + "'");
  return out;
}

const char* to_string(Pattern p) {
  switch (p) {
    case Pattern::Complete: return "complete";
    case Pattern::MonotoneDropout: return "dropout";
    case Pattern::Intermittent: return "intermittent";
    case Pattern::AllMissing: return "all-missing";
  }
  return "?";
}

MissingnessProfile missingness_profile(const SubjectRecord& subject) {
  MissingnessProfile prof;
  const int n = static_cast<int>(subject.outcomes.size());
  prof.r.resize(n);
  int observed = 0;
  for (int j = 0; j < n; ++j) {
    prof.r[j] = subject.outcomes[j].has_value() ? 1 : 0;
    observed += prof.r[j];
  }
  int leading = 0;
  while (leading < n && prof.r[leading] == 1) ++leading;

  if (observed == n) {
    prof.pattern = Pattern::Complete;
  } else if (observed == 0) {
    prof.pattern = Pattern::AllMissing;
  } else if (observed == leading) {
    prof.pattern = Pattern::MonotoneDropout;
  } else {
    prof.pattern = Pattern::Intermittent;
  }
  // All-missing and missing-at-first profiles are treated as dropping out
  // at occasion 2 for estimation bookkeeping.
  prof.d = std::max(2, leading + 1);
  return prof;
}

std::string pattern_string(const SubjectRecord& subject) {
  std::string s;
  s.reserve(subject.outcomes.size());
  for (const auto& o : subject.outcomes) s.push_back(o ? 'O' : 'M');
  return s;
}

std::vector<PatternRow> pattern_table(const LongDataset& dataset) {
  std::map<std::string, PatternRow> rows;
  for (const auto& s : dataset.subjects()) {
    auto key = pattern_string(s);
    auto& row = rows[key];
    row.pattern = key;
    row.kind = missingness_profile(s).pattern;
    ++row.count;
  }
  std::vector<PatternRow> out;
  out.reserve(rows.size());
  const double total = static_cast<double>(dataset.size());
  for (auto& [k, row] : rows) {
    row.percent = total > 0 ? 100.0 * static_cast<double>(row.count) / total : 0.0;
    out.push_back(row);
  }
  auto group = [](Pattern p) {
    switch (p) {
      case Pattern::Complete: return 0;
      case Pattern::MonotoneDropout:
      case Pattern::AllMissing: return 1;
      case Pattern::Intermittent: return 2;
    }
    return 3;
  };
  std::sort(out.begin(), out.end(), [&](const PatternRow& a, const PatternRow& b) {
    if (group(a.kind) != group(b.kind)) return group(a.kind) < group(b.kind);
    return a.pattern > b.pattern;  // 'O' sorts after 'M'
  });
  return out;
}

CovariateSchema infer_schema(std::istream& in, const std::string& treatment_column,
                             const std::vector<std::string>& categorical,
                             const std::vector<std::string>& time_varying) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: no header row");
  const auto header = split_csv_line(line);
  std::vector<bool> numeric(header.size(), true);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    for (std::size_t c = 0; c < std::min(cells.size(), header.size()); ++c) {
      if (is_na(cells[c])) continue;
      if (!parse_number(cells[c])) numeric[c] = false;
    }
  }
  CovariateSchema schema;
  schema.treatment_column = treatment_column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name == kIdColumn || name == kOccasionColumn || name == kOutcomeColumn || name == treatment_column)
      continue;
    CovariateSpec spec;
    spec.name = name;
    const bool forced_cat = std::find(categorical.begin(), categorical.end(), name) != categorical.end();
    spec.kind = (forced_cat || !numeric[c]) ? CovariateKind::Categorical : CovariateKind::Continuous;
    spec.time_varying = std::find(time_varying.begin(), time_varying.end(), name) != time_varying.end();
    schema.covariates.push_back(spec);
  }
  return schema;
}

LongDataset load_long_csv(std::istream& in, const CovariateSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: no header row");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw DataError("header lacks required column '" + name + "'");
  };
  const auto id_col = column(kIdColumn);
  const auto occ_col = column(kOccasionColumn);
  const auto out_col = column(kOutcomeColumn);
  const auto trt_col = column(schema.treatment_column);
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.covariates) cov_cols.push_back(column(c.name));

  struct Row {
    std::string id, occasion, treatment;
    Outcome outcome;
    std::vector<CovariateValue> covs;
    std::size_t line_no;
  };
  std::vector<Row> rows;
  std::vector<std::string> seen_occasions;
  std::set<std::string> seen_occ_set;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    Row row;
    row.line_no = line_no;
    row.id = cells[id_col];
    row.occasion = cells[occ_col];
    row.treatment = cells[trt_col];
    if (row.id.empty()) throw DataError("line " + std::to_string(line_no) + ": empty subject id");
    if (row.treatment.empty() || row.treatment == "NA")
      throw DataError("line " + std::to_string(line_no) + ": missing treatment");
    const auto& y = cells[out_col];
    if (y == "NA") {
      row.outcome = std::nullopt;
    } else if (y == "0" || y == "1") {
      row.outcome = y == "1" ? 1 : 0;
    } else {
      throw DataError("line " + std::to_string(line_no) + ": outcome '" + y + "' is not 0, 1 or NA");
    }
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      const auto& cell = cells[cov_cols[k]];
      if (is_na(cell)) {
        row.covs.emplace_back(std::monostate{});
      } else if (schema.covariates[k].kind == CovariateKind::Continuous) {
        auto v = parse_number(cell);
        if (!v)
          throw DataError("line " + std::to_string(line_no) + ": covariate '" + schema.covariates[k].name +
                          "' value '" + cell + "' is not numeric");
        row.covs.emplace_back(*v);
      } else {
        row.covs.emplace_back(cell);
      }
    }
    if (seen_occ_set.insert(row.occasion).second) seen_occasions.push_back(row.occasion);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("input has a header but no data rows");

  std::vector<std::string> occasions = schema.occasions;
  if (occasions.empty()) {
    occasions = seen_occasions;
    const bool all_numeric = std::all_of(occasions.begin(), occasions.end(),
                                         [](const std::string& s) { return parse_number(s).has_value(); });
    if (all_numeric)
      std::stable_sort(occasions.begin(), occasions.end(), [](const std::string& a, const std::string& b) {
        return *parse_number(a) < *parse_number(b);
      });
  }
  std::unordered_map<std::string, std::size_t> occ_index;
  for (std::size_t j = 0; j < occasions.size(); ++j) occ_index[occasions[j]] = j;
  const auto n = occasions.size();

  std::vector<SubjectRecord> subjects;
  std::unordered_map<std::string, std::size_t> subject_index;
  std::vector<std::vector<bool>> present;
  for (const auto& row : rows) {
    auto oi = occ_index.find(row.occasion);
    if (oi == occ_index.end())
      throw DataError("line " + std::to_string(row.line_no) + ": unknown occasion label '" + row.occasion + "'");
    auto [si, inserted] = subject_index.try_emplace(row.id, subjects.size());
    if (inserted) {
      SubjectRecord s;
      s.id = row.id;
      s.treatment = row.treatment;
      s.outcomes.assign(n, std::nullopt);
      s.covariates.assign(n, std::vector<CovariateValue>(cov_cols.size()));
      subjects.push_back(std::move(s));
      present.emplace_back(n, false);
    }
    auto& s = subjects[si->second];
    const auto j = oi->second;
    if (present[si->second][j])
      throw DataError("line " + std::to_string(row.line_no) + ": duplicate row for subject '" + row.id +
                      "' at occasion '" + row.occasion + "'");
    present[si->second][j] = true;
    if (s.treatment != row.treatment)
      throw DataError("subject '" + row.id + "' changes treatment arm between rows");
    s.outcomes[j] = row.outcome;
    s.covariates[j] = row.covs;
  }

  // Constant covariates: one value per subject, replicated to every occasion
  // (including occasions with no row).
  for (std::size_t k = 0; k < schema.covariates.size(); ++k) {
    if (schema.covariates[k].time_varying) continue;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      auto& s = subjects[i];
      CovariateValue value;
      for (std::size_t j = 0; j < n; ++j) {
        if (!present[i][j]) continue;
        const auto& v = s.covariates[j][k];
        if (std::holds_alternative<std::monostate>(v)) continue;
        if (std::holds_alternative<std::monostate>(value)) {
          value = v;
        } else if (!same_value(value, v)) {
          throw DataError("covariate '" + schema.covariates[k].name + "' varies within subject '" + s.id +
                          "' but is not declared time-varying");
        }
      }
      for (std::size_t j = 0; j < n; ++j) s.covariates[j][k] = value;
    }
  }
  return LongDataset(std::move(occasions), schema, std::move(subjects));
}

LongDataset load_long_csv_file(const std::string& path, const CovariateSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load_long_csv(in, schema);
}

void write_long_csv(std::ostream& out, const LongDataset& dataset) {
  const auto& schema = dataset.schema();
  out << kIdColumn << ',' << kOccasionColumn << ',' << kOutcomeColumn << ','
      << quote_if_needed(schema.treatment_column);
  for (const auto& c : schema.covariates) out << ',' << quote_if_needed(c.name);
  out << '\n';
  for (const auto& s : dataset.subjects()) {
    for (std::size_t j = 0; j < dataset.n_occasions(); ++j) {
      out << quote_if_needed(s.id) << ',' << quote_if_needed(dataset.occasions()[j]) << ',';
      if (s.outcomes[j])
        out << *s.outcomes[j];
      else
        out << "NA";
      out << ',' << quote_if_needed(s.treatment);
      for (const auto& v : s.covariates[j]) {
        out << ',';
        if (const auto* x = std::get_if<double>(&v))
          out << format_number(*x);
        else if (const auto* lv = std::get_if<std::string>(&v))
          out << quote_if_needed(*lv);
        else
          out << "NA";
      }
      out << '\n';
    }
  }
}

}  // namespace longit

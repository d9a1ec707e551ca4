#include "longit/formula.hpp"

#include <algorithm>
#include <cctype>

#include "longit/error.hpp"

namespace longit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '.'; });
}

std::string canonical(const std::string& name) {
  if (name == "occasion") return "visit";
  return name;
}

// Interaction terms as sorted factor sets so that a:b and b:a coincide.
bool same_set(const Term& a, const Term& b) {
  auto x = a.factors, y = b.factors;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  return x == y;
}

}  // namespace

Formula parse_formula(const std::string& text) {
  Formula f;
  const auto tilde = text.find('~');
  if (tilde == std::string::npos) throw DataError("formula '" + text + "' lacks '~'");
  f.response = trim(text.substr(0, tilde));
  if (!valid_name(f.response)) throw DataError("formula response '" + f.response + "' is not a name");

  std::string rhs;
  for (char c : text.substr(tilde + 1))
    if (!std::isspace(static_cast<unsigned char>(c))) rhs.push_back(c);
  if (rhs.empty()) throw DataError("formula '" + text + "' has an empty right-hand side");
  std::string norm;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (rhs[i] == '-' && i > 0) norm += "+";
    norm.push_back(rhs[i]);
  }
  for (const auto& raw : split(norm, '+')) {
    if (raw.empty()) throw DataError("formula '" + text + "' has an empty term");
    if (raw == "1") {
      f.intercept = true;
      continue;
    }
    if (raw == "0" || raw == "-1") {
      f.intercept = false;
      continue;
    }
    if (raw[0] == '-') throw DataError("formula: only '-1' may be subtracted, found '" + raw + "'");

    // a*b:c*d -> operands {a}, {b,c}, {d}; expand every nonempty subset.
    std::vector<std::vector<std::string>> operands;
    for (const auto& op : split(raw, '*')) {
      std::vector<std::string> chain;
      for (const auto& name : split(op, ':')) {
        if (!valid_name(name)) throw DataError("formula: bad term '" + raw + "'");
        chain.push_back(canonical(name));
      }
      operands.push_back(std::move(chain));
    }
    const std::size_t k = operands.size();
    std::vector<Term> expanded;
    for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
      Term t;
      for (std::size_t i = 0; i < k; ++i)
        if (mask & (std::size_t{1} << i))
          for (const auto& name : operands[i])
            if (std::find(t.factors.begin(), t.factors.end(), name) == t.factors.end()) t.factors.push_back(name);
      expanded.push_back(std::move(t));
    }
    std::stable_sort(expanded.begin(), expanded.end(),
                     [](const Term& a, const Term& b) { return a.factors.size() < b.factors.size(); });
    for (auto& t : expanded) {
      bool dup = std::any_of(f.terms.begin(), f.terms.end(), [&](const Term& u) { return same_set(t, u); });
      if (!dup) f.terms.push_back(std::move(t));
    }
  }
  std::stable_sort(f.terms.begin(), f.terms.end(),
                   [](const Term& a, const Term& b) { return a.factors.size() < b.factors.size(); });
  return f;
}

std::string to_string(const Formula& f) {
  std::string s = f.response + " ~ ";
  s += f.intercept ? "1" : "0";
  for (const auto& t : f.terms) {
    s += " + ";
    for (std::size_t i = 0; i < t.factors.size(); ++i) {
      if (i) s += ":";
      s += t.factors[i];
    }
  }
  return s;
}

DesignBuilder::DesignBuilder(const LongDataset& dataset, Formula formula)
    : dataset_(&dataset), formula_(std::move(formula)) {
  const auto& schema = dataset.schema();
  auto var_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t v = 0; v < vars_.size(); ++v)
      if (vars_[v].name == name) return v;
    Variable var;
    var.name = name;
    if (name == "visit") {
      var.kind = VarKind::Visit;
      var.levels = dataset.occasions();
    } else if (name == "trt" || name == schema.treatment_column) {
      var.name = "trt";
      for (std::size_t v = 0; v < vars_.size(); ++v)
        if (vars_[v].name == "trt") return v;
      var.kind = VarKind::Treatment;
      var.levels = dataset.arms();
    } else {
      const auto* spec = schema.find(name);
      if (!spec) throw DataError("formula references unknown term '" + name + "'");
      var.covariate = dataset.covariate_index(name);
      if (spec->kind == CovariateKind::Categorical) {
        var.kind = VarKind::Categorical;
        var.levels = dataset.levels(name);
      } else {
        var.kind = VarKind::Continuous;
      }
    }
    vars_.push_back(std::move(var));
    return vars_.size() - 1;
  };

  // Terms in variable-index form, with the intercept as the empty set.
  std::vector<std::vector<std::size_t>> model;
  if (formula_.intercept) model.emplace_back();
  for (const auto& t : formula_.terms) {
    std::vector<std::size_t> ids;
    for (const auto& name : t.factors) ids.push_back(var_index(name));
    model.push_back(ids);
  }
  auto in_model = [&](std::vector<std::size_t> ids) {
    std::sort(ids.begin(), ids.end());
    return std::any_of(model.begin(), model.end(), [&](std::vector<std::size_t> m) {
      std::sort(m.begin(), m.end());
      return m == ids;
    });
  };

  if (formula_.intercept) names_.push_back("(Intercept)");
  for (std::size_t ti = formula_.intercept ? 1 : 0; ti < model.size(); ++ti) {
    const auto& ids = model[ti];
    ExpandedTerm term;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& var = vars_[ids[k]];
      bool contrast = false;
      if (var.kind != VarKind::Continuous) {
        // A factor is contrast-coded when the term without it is already in
        // the model; otherwise it needs every level.
        std::vector<std::size_t> rest;
        for (std::size_t m = 0; m < ids.size(); ++m)
          if (m != k) rest.push_back(ids[m]);
        contrast = in_model(rest);
      }
      term.parts.push_back({ids[k], contrast});
    }
    // Column labels, first factor varying fastest.
    std::vector<std::vector<std::string>> labels_per_part;
    for (const auto& part : term.parts) {
      const auto& var = vars_[part.var];
      std::vector<std::string> labels;
      if (var.kind == VarKind::Continuous) {
        labels.push_back(var.name);
      } else {
        for (std::size_t l = part.contrast ? 1 : 0; l < var.levels.size(); ++l)
          labels.push_back(var.name + "[" + var.levels[l] + "]");
      }
      if (labels.empty())
        throw DataError("term '" + var.name + "' has a single level and cannot be contrast-coded");
      labels_per_part.push_back(std::move(labels));
    }
    // First part varies fastest, matching append_term().
    std::vector<std::string> combos{""};
    for (const auto& labels : labels_per_part) {
      std::vector<std::string> next;
      for (const auto& l : labels)
        for (const auto& prefix : combos) next.push_back(prefix.empty() ? l : prefix + ":" + l);
      combos = std::move(next);
    }
    for (auto& c : combos) names_.push_back(c);
    terms_.push_back(std::move(term));
  }
}

bool DesignBuilder::uses(const std::string& variable) const {
  const auto name = canonical(variable);
  return std::any_of(vars_.begin(), vars_.end(), [&](const Variable& v) { return v.name == name; });
}

double DesignBuilder::level_indicator(std::size_t /*var*/, const std::string& level,
                                      const std::string& value) const {
  return level == value ? 1.0 : 0.0;
}

void DesignBuilder::append_term(const ExpandedTerm& term, const std::vector<std::string>& values,
                                const std::vector<double>& numbers, Eigen::RowVectorXd& out,
                                Eigen::Index& col) const {
  // Iterate the cartesian product in the same order as the labels: the
  // first part's levels vary fastest within each later part's level.
  std::vector<double> cells{1.0};
  for (const auto& part : term.parts) {
    const auto& var = vars_[part.var];
    std::vector<double> factor;
    if (var.kind == VarKind::Continuous) {
      factor.push_back(numbers[part.var]);
    } else {
      for (std::size_t l = part.contrast ? 1 : 0; l < var.levels.size(); ++l)
        factor.push_back(level_indicator(part.var, var.levels[l], values[part.var]));
    }
    std::vector<double> next;
    next.reserve(cells.size() * factor.size());
    for (double f : factor)
      for (double c : cells) next.push_back(c * f);
    cells = std::move(next);
  }
  for (double c : cells) out(col++) = c;
}

Eigen::RowVectorXd DesignBuilder::row(const RowContext& ctx) const {
  std::vector<std::string> values(vars_.size());
  std::vector<double> numbers(vars_.size(), 0.0);
  for (std::size_t v = 0; v < vars_.size(); ++v) {
    const auto& var = vars_[v];
    switch (var.kind) {
      case VarKind::Visit: values[v] = dataset_->occasions().at(ctx.occasion); break;
      case VarKind::Treatment: values[v] = ctx.treatment.empty() ? var.levels.front() : ctx.treatment; break;
      case VarKind::Categorical: {
        auto it = ctx.covariates.find(var.name);
        values[v] = var.levels.front();
        if (it != ctx.covariates.end()) {
          if (const auto* s = std::get_if<std::string>(&it->second)) values[v] = *s;
        }
        break;
      }
      case VarKind::Continuous: {
        auto it = ctx.covariates.find(var.name);
        if (it != ctx.covariates.end()) {
          if (const auto* x = std::get_if<double>(&it->second)) numbers[v] = *x;
        }
        break;
      }
    }
  }
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(names_.size()));
  Eigen::Index col = 0;
  if (formula_.intercept) out(col++) = 1.0;
  for (const auto& term : terms_) append_term(term, values, numbers, out, col);
  return out;
}

Eigen::RowVectorXd DesignBuilder::row(const SubjectRecord& subject, std::size_t occasion) const {
  RowContext ctx;
  ctx.occasion = occasion;
  ctx.treatment = subject.treatment;
  for (const auto& var : vars_) {
    if (var.kind != VarKind::Categorical && var.kind != VarKind::Continuous) continue;
    const auto& v = subject.covariates.at(occasion).at(var.covariate);
    if (std::holds_alternative<std::monostate>(v))
      throw DataError("subject '" + subject.id + "' lacks covariate '" + var.name + "' at occasion '" +
                      dataset_->occasions()[occasion] + "'");
    ctx.covariates[var.name] = v;
  }
  return row(ctx);
}

std::size_t DesignSet::n_rows() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += static_cast<std::size_t>(s.X.rows());
  return n;
}

Eigen::MatrixXd DesignSet::stacked_X() const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n_rows()), static_cast<Eigen::Index>(columns.size()));
  Eigen::Index r = 0;
  for (const auto& s : subjects) {
    X.middleRows(r, s.X.rows()) = s.X;
    r += s.X.rows();
  }
  return X;
}

Eigen::VectorXd DesignSet::stacked_y() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(n_rows()));
  Eigen::Index r = 0;
  for (const auto& s : subjects) {
    y.segment(r, s.y.size()) = s.y;
    r += s.y.size();
  }
  return y;
}

void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
  if (X.rows() < X.cols())
    throw DataError("design has fewer rows (" + std::to_string(X.rows()) + ") than columns (" +
                    std::to_string(X.cols()) + ")");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    const auto dependent = qr.colsPermutation().indices()(qr.rank());
    throw DataError("design is rank deficient; column '" + names.at(static_cast<std::size_t>(dependent)) +
                    "' is collinear with the others");
  }
}

DesignSet build_design(const LongDataset& dataset, const Formula& formula) {
  DesignBuilder builder(dataset, formula);
  DesignSet set;
  set.columns = builder.column_names();
  const auto p = static_cast<Eigen::Index>(set.columns.size());
  set.subjects.reserve(dataset.size());
  for (const auto& s : dataset.subjects()) {
    SubjectDesign sd;
    for (std::size_t j = 0; j < s.outcomes.size(); ++j)
      if (s.outcomes[j]) sd.occasions.push_back(j);
    const auto m = static_cast<Eigen::Index>(sd.occasions.size());
    sd.X.resize(m, p);
    sd.y.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto j = sd.occasions[static_cast<std::size_t>(r)];
      sd.X.row(r) = builder.row(s, j);
      sd.y(r) = *s.outcomes[j];
    }
    set.subjects.push_back(std::move(sd));
  }
  check_full_rank(set.stacked_X(), set.columns);
  return set;
}

}  // namespace longit

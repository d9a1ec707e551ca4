#include "longit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>

#include "longit/error.hpp"
#include "longit/formula.hpp"
#include "longit/gee.hpp"
#include "longit/glmm.hpp"
#include "longit/inference.hpp"
#include "longit/prep.hpp"
#include "longit/sim.hpp"
#include "longit/wgee.hpp"

namespace longit::cli {

namespace {

std::string num(double v, int precision = 6) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Writes `table` to the stream and, when requested, to a file.
void emit(const std::string& table, std::ostream& out, const std::string& path) {
  out << table;
  if (!path.empty()) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << table;
  }
}

void require_one_of(const std::string& flag, const std::string& value, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (value == a) return;
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  throw DataError(flag + " must be one of " + list + " (got '" + value + "')");
}

// Runs a command body, mapping failures to exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

LongDataset prepare(const LongDataset& data, const std::string& strategy, std::ostream& err) {
  if (strategy == "cc") {
    const auto cc = complete_case(data);
    err << "# complete cases: " << cc.size() << " of " << data.size() << " subjects\n";
    return cc;
  }
  if (strategy == "locf") {
    auto res = locf_impute(data);
    if (res.dropped_subjects) err << "# LOCF: " << res.dropped_subjects << " subject(s) without observations dropped\n";
    return std::move(res.data);
  }
  return data;
}

}  // namespace

std::string effect_label(const std::string& column, std::size_t n_arms) {
  static const std::regex intercept(R"(^visit\[([^\]]+)\]$)");
  static const std::regex effect(R"(^visit\[([^\]]+)\]:trt\[([^\]]+)\]$)");
  static const std::regex effect_rev(R"(^trt\[([^\]]+)\]:visit\[([^\]]+)\]$)");
  std::smatch m;
  if (std::regex_match(column, m, intercept)) return "Int. " + m[1].str();
  if (std::regex_match(column, m, effect))
    return n_arms > 2 ? "Trt. " + m[2].str() + " " + m[1].str() : "Trt. " + m[1].str();
  if (std::regex_match(column, m, effect_rev))
    return n_arms > 2 ? "Trt. " + m[1].str() + " " + m[2].str() : "Trt. " + m[2].str();
  if (column == "(Intercept)") return "Int.";
  return column;
}

LongDataset load_data(const DataOptions& options) {
  if (options.path.empty()) throw DataError("--data is required");
  std::ifstream probe(options.path);
  if (!probe) throw DataError("cannot open '" + options.path + "'");
  if (probe.peek() == std::ifstream::traits_type::eof()) throw DataError("'" + options.path + "' is empty");
  auto schema = infer_schema(probe, options.treatment, options.categorical, options.time_varying);
  if (!options.reference.empty()) schema.reference_levels[options.treatment] = options.reference;
  return load_long_csv_file(options.path, schema);
}

int cmd_describe(const DescribeOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto data = load_data(options.data);
    if (data.empty()) throw DataError("dataset has no subjects");
    const auto rows = pattern_table(data);
    std::ostringstream t;
    t << "group,pattern";
    for (const auto& o : data.occasions()) t << ",occ_" << o;
    t << ",count,percent\n";
    auto group = [](Pattern p) {
      switch (p) {
        case Pattern::Complete: return "Completers";
        case Pattern::MonotoneDropout:
        case Pattern::AllMissing: return "Dropouts";
        case Pattern::Intermittent: return "Nonmonotone";
      }
      return "?";
    };
    std::size_t total = 0;
    for (const auto& r : rows) {
      t << group(r.kind) << ',' << r.pattern;
      for (char c : r.pattern) t << ',' << c;
      t << ',' << r.count << ',' << std::fixed << std::setprecision(2) << r.percent << std::defaultfloat << '\n';
      total += r.count;
    }
    t << "Total,";
    for (std::size_t j = 0; j < data.n_occasions(); ++j) t << ',';
    t << ',' << total << ",100.00\n";
    emit(t.str(), out, options.out);
    return kOk;
  });
}

int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    // Flag validation happens before any data is read.
    require_one_of("--model", o.model, {"gee", "wgee", "glmm"});
    require_one_of("--strategy", o.strategy, {"cc", "locf", "observed"});
    if (o.model == "wgee" && o.strategy != "observed")
      throw DataError("--model wgee requires --strategy observed (weights are meaningless after CC or LOCF)");
    const auto corr = parse_corr_structure(o.corr.value_or("exch"));
    const auto qmode = parse_quadrature_mode(o.quadrature);
    const auto optimizer = parse_optimizer(o.optimizer);
    const auto wmode = parse_weight_mode(o.weights);
    if (o.Q < 0 || o.Q > 100) throw DataError("--Q must lie in [1, 100]");
    if (o.model != "wgee" && !o.dropout_covariates.empty())
      throw DataError("--dropout-covariates applies to --model wgee only");
    if (o.truncate && o.model != "wgee") throw DataError("--truncate applies to --model wgee only");
    std::vector<ContrastKind> tests;
    for (const auto& k : o.tests) tests.push_back(parse_contrast_kind(k));
    const auto formula = parse_formula(o.formula);
    if (o.model == "glmm" && o.corr) err << "# note: --corr is ignored for glmm\n";

    const auto raw = load_data(o.data);
    const auto data = prepare(raw, o.strategy, err);
    const auto n_arms = data.arms().size();

    std::ostringstream t;
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov;
    if (o.model == "glmm") {
      GlmmSpec spec;
      spec.formula = formula;
      spec.quadrature = QuadratureSpec{qmode, o.Q};
      spec.optimizer = optimizer;
      spec.zero_start = o.zero_start;
      const auto fit = fit_glmm(data, spec);
      for (const auto& w : fit.warnings) err << "# warning: " << w << '\n';
      err << "# glmm: " << to_string(qmode) << " Q=" << fit.quadrature.points << ", " << to_string(optimizer)
          << ", iterations " << fit.iterations << ", max |gradient| " << num(fit.gradient_norm(), 3) << ", loglik "
          << num(fit.loglik, 10) << '\n';
      t << "effect,term,estimate,se\n";
      const auto se = fit.beta_se();
      for (std::size_t k = 0; k < fit.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        t << effect_label(fit.names[k], n_arms) << ',' << fit.names[k] << ',' << num(fit.beta(i)) << ','
          << num(se(i)) << '\n';
      }
      t << "R.I. s.d.,tau," << num(fit.sigma) << ',' << num(fit.sigma_se()) << '\n';
      t << "R.I. var.,tau^2," << num(fit.sigma2()) << ',' << num(fit.sigma2_se()) << '\n';
      t << "Loglik,loglik," << num(fit.loglik, 10) << ",\n";
      beta = fit.beta;
      cov = fit.covariance.topLeftCorner(beta.size(), beta.size());
      if (fit.seemingly_converged) {
        emit(t.str(), out, o.out);
        err << "numerical failure: Hessian is not positive definite (only seemingly converged)\n";
        return kNumerical;
      }
    } else {
      GeeFit fit;
      if (o.model == "wgee") {
        WgeeOptions wo;
        wo.mode = wmode;
        wo.truncation_quantile = o.truncate;
        wo.dropout_covariates = o.dropout_covariates;
        const auto w = fit_wgee(data, formula, corr, wo);
        for (const auto& msg : w.warnings) err << "# warning: " << msg << '\n';
        err << "# dropout model (" << to_string(wmode) << " weights):";
        for (std::size_t k = 0; k < w.dropout.names().size(); ++k)
          err << ' ' << w.dropout.names()[k] << '=' << num(w.dropout.psi()(static_cast<Eigen::Index>(k)), 4);
        err << '\n';
        fit = w.gee;
      } else {
        fit = fit_gee(data, formula, corr);
        for (const auto& msg : fit.warnings) err << "# warning: " << msg << '\n';
      }
      err << "# " << o.model << ": " << to_string(corr) << " working correlation, " << fit.n_subjects
          << " subjects, iterations " << fit.iterations << '\n';
      t << "effect,term,estimate,model_se,empirical_se\n";
      const auto mse = fit.model_based_se();
      const auto ese = fit.sandwich_se();
      for (std::size_t k = 0; k < fit.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        t << effect_label(fit.names[k], n_arms) << ',' << fit.names[k] << ',' << num(fit.beta(i)) << ','
          << num(mse(i)) << ',' << num(ese(i)) << '\n';
      }
      if (corr == CorrStructure::Exchangeable || corr == CorrStructure::AR1)
        t << "Corr.,rho," << num(fit.correlation.alpha) << ",,\n";
      beta = fit.beta;
      cov = fit.sandwich_cov;
    }

    if (!tests.empty()) {
      t << "\ntest,df,statistic,p_value,estimate,se\n";
      for (auto k : tests) {
        const auto cs = build_contrasts(data, formula, k);
        const auto w = wald_test(cs.L, beta, cov);
        t << to_string(k) << ',' << w.df << ',' << num(w.statistic) << ',' << num(w.p_value) << ','
          << (w.estimate ? num(*w.estimate) : "") << ',' << (w.se ? num(*w.se) : "") << '\n';
      }
    }
    emit(t.str(), out, o.out);
    return kOk;
  });
}

int cmd_endpoint(const EndpointOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto view = parse_endpoint_view(o.view);
    const auto strategy = parse_endpoint_strategy(o.strategy);
    if (view == EndpointView::LastObserved && strategy == EndpointStrategy::CC)
      throw DataError("CC is not an option under the last-observed view");
    if (o.Q < 1 || o.Q > 100) throw DataError("--Q must lie in [1, 100]");
    const auto formula = parse_formula(o.formula);
    const auto data = load_data(o.data);
    const auto res = endpoint_analysis(data, view, strategy);

    err << "# endpoint table (successes/total):";
    for (std::size_t a = 0; a < res.arms.size(); ++a)
      err << ' ' << res.arms[a] << '=' << res.table[0][a] << '/' << (res.table[0][a] + res.table[1][a]);
    err << '\n';

    const std::string method = strategy == EndpointStrategy::CC ? "CC" : "LOCF";
    std::ostringstream t;
    t << "method,view,model,statistic,df,p_value\n";
    if (o.mixed) {
      const auto prepared = strategy == EndpointStrategy::CC ? complete_case(data) : locf_impute(data).data;
      GlmmSpec spec;
      spec.formula = formula;
      spec.quadrature = QuadratureSpec{QuadratureMode::Adaptive, o.Q};
      const auto fit = fit_glmm(prepared, spec);
      const auto cs = build_contrasts(prepared, formula, ContrastKind::LastOccasion);
      const auto w = wald_test(cs.L, fit.beta, fit.covariance.topLeftCorner(fit.beta.size(), fit.beta.size()));
      t << method << ',' << o.view << ",Mixed," << num(w.statistic) << ',' << w.df << ',' << num(w.p_value) << '\n';
    }
    t << method << ',' << o.view << ",Pearson's chi-squared test," << num(res.pearson.statistic) << ','
      << res.pearson.df << ',' << num(res.pearson.p_value) << '\n';
    t << method << ',' << o.view << ",Fisher's exact test,," << res.pearson.df << ',' << num(res.fisher.p_value)
      << '\n';
    emit(t.str(), out, o.out);
    return kOk;
  });
}

int cmd_scan(const ScanOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<QuadratureMode> modes;
    for (const auto& m : o.modes) modes.push_back(parse_quadrature_mode(m));
    std::vector<Optimizer> optimizers;
    for (const auto& m : o.optimizers) optimizers.push_back(parse_optimizer(m));
    if (o.q_list.empty()) throw DataError("--Q-list is empty");
    for (int q : o.q_list)
      if (q < 1 || q > 100) throw DataError("--Q-list values must lie in [1, 100]");
    GlmmSpec spec;
    spec.formula = parse_formula(o.formula);
    spec.zero_start = o.zero_start;
    const auto data = load_data(o.data);
    const auto res = quadrature_scan(data, spec, o.q_list, modes, optimizers, o.param);
    for (const auto& s : res.stability)
      err << "# " << to_string(s.mode) << '/' << to_string(s.optimizer) << ": |est(Q=" << s.q_max << ") - est(Q="
          << s.q_half << ")| = " << num(s.difference, 3) << (s.stable ? " (stable)" : " (not stable)") << '\n';
    std::ostringstream t;
    res.write_csv(t);
    emit(t.str(), out, o.out);
    return kOk;
  });
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.replicates < 1) throw DataError("--replicates must be at least 1");
    if (o.estimators.empty()) throw DataError("--estimators is empty");
    for (const auto& e : o.estimators)
      if (std::find(known_estimators().begin(), known_estimators().end(), e) == known_estimators().end())
        throw DataError("unknown estimator '" + e + "'");
    ReplicationOptions ro;
    ro.replicates = o.replicates;
    ro.formula = o.formula;
    (void)parse_formula(o.formula);
    ro.corr = parse_corr_structure(o.corr);
    ro.weights = parse_weight_mode(o.weights);
    if (o.Q < 1 || o.Q > 100) throw DataError("--Q must lie in [1, 100]");
    ro.quadrature = QuadratureSpec{QuadratureMode::Adaptive, o.Q};
    auto spec = load_sim_spec_file(o.spec);
    if (o.seed) spec.seed = *o.seed;
    if (!o.data_out.empty()) {
      std::ofstream f(o.data_out, std::ios::binary);
      if (!f) throw DataError("cannot write '" + o.data_out + "'");
      write_long_csv(f, simulate(spec));
    }
    const auto report = replicate_study(spec, o.estimators, ro);
    err << "# " << report.mechanism << " simulation, " << report.replicates << " replicate(s), seed " << spec.seed
        << '\n';
    std::ostringstream t;
    report.write_csv(t);
    emit(t.str(), out, o.out);
    return kOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Incomplete longitudinal binary data: GEE, weighted GEE and random-intercept GLMM", "longit"};
  app.require_subcommand(1);

  auto add_data = [](CLI::App* sub, DataOptions& d) {
    sub->add_option("--data", d.path, "Long-format CSV (id, occasion, outcome, treatment, covariates)")->required();
    sub->add_option("--treatment", d.treatment, "Treatment column");
    sub->add_option("--categorical", d.categorical, "Covariates to treat as categorical")->delimiter(',');
    sub->add_option("--time-varying", d.time_varying, "Covariates allowed to vary within subject")->delimiter(',');
    sub->add_option("--reference", d.reference, "Reference arm");
  };

  DescribeOptions describe;
  auto* d = app.add_subcommand("describe", "Missingness pattern table");
  add_data(d, describe.data);
  d->add_option("--out", describe.out, "Also write the table to this CSV file");

  FitOptions fit;
  std::string corr;
  auto* f = app.add_subcommand("fit", "Fit GEE, weighted GEE or a random-intercept GLMM");
  add_data(f, fit.data);
  f->add_option("--model", fit.model)->check(CLI::IsMember({"gee", "wgee", "glmm"}));
  f->add_option("--strategy", fit.strategy)->check(CLI::IsMember({"cc", "locf", "observed"}));
  f->add_option("--formula", fit.formula);
  auto* corr_opt = f->add_option("--corr", corr)->check(CLI::IsMember({"ind", "exch", "ar1", "un"}));
  f->add_option("--quadrature", fit.quadrature)->check(CLI::IsMember({"adaptive", "nonadaptive"}));
  f->add_option("--Q", fit.Q);
  f->add_option("--optimizer", fit.optimizer);
  f->add_option("--weights", fit.weights)->check(CLI::IsMember({"occasion", "subject"}));
  f->add_option("--dropout-covariates", fit.dropout_covariates)->delimiter(',');
  auto* trunc_opt = f->add_option("--truncate", "Cap weights at this quantile (0, 1]");
  f->add_flag("--zero-start", fit.zero_start, "Start the GLMM at beta = 0, sigma = 1");
  f->add_option("--test", fit.tests, "Wald tests: joint-per-arm, joint-both-arms, average-per-arm, "
                                     "average-both-arms, last-occasion")
      ->delimiter(',');
  f->add_option("--out", fit.out);

  EndpointOptions endpoint;
  auto* e = app.add_subcommand("endpoint", "Single-endpoint Pearson and Fisher tests");
  add_data(e, endpoint.data);
  e->add_option("--view", endpoint.view)->check(CLI::IsMember({"last-planned", "last-observed"}));
  e->add_option("--strategy", endpoint.strategy)->check(CLI::IsMember({"cc", "locf"}));
  e->add_option("--formula", endpoint.formula, "Mixed-model formula");
  e->add_option("--Q", endpoint.Q);
  bool no_mixed = false;
  e->add_flag("--no-mixed", no_mixed, "Skip the mixed-model row");
  e->add_option("--out", endpoint.out);

  ScanOptions scan;
  auto* s = app.add_subcommand("scan", "Quadrature sensitivity scan");
  add_data(s, scan.data);
  s->add_option("--formula", scan.formula);
  s->add_option("--Q-list", scan.q_list)->delimiter(',');
  s->add_option("--modes", scan.modes)->delimiter(',');
  s->add_option("--optimizers", scan.optimizers)->delimiter(',');
  s->add_option("--param", scan.param, "Focal coefficient (default: last design column)");
  s->add_flag("--zero-start", scan.zero_start);
  s->add_option("--out", scan.out);

  SimulateOptions simulate_opts;
  std::uint64_t seed = 0;
  auto* m = app.add_subcommand("simulate", "Simulation study: bias and coverage");
  m->add_option("--spec", simulate_opts.spec, "JSON simulation spec")->required();
  m->add_option("--replicates", simulate_opts.replicates);
  m->add_option("--estimators", simulate_opts.estimators)->delimiter(',');
  auto* seed_opt = m->add_option("--seed", seed);
  m->add_option("--formula", simulate_opts.formula);
  m->add_option("--corr", simulate_opts.corr)->check(CLI::IsMember({"ind", "exch", "ar1", "un"}));
  m->add_option("--weights", simulate_opts.weights)->check(CLI::IsMember({"occasion", "subject"}));
  m->add_option("--Q", simulate_opts.Q);
  m->add_option("--out", simulate_opts.out);
  m->add_option("--data-out", simulate_opts.data_out, "Write the first replicate's dataset as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) return app.exit(ex, out, err);
    err << "error: " << ex.what() << '\n';
    return kUsage;
  }

  if (*d) return cmd_describe(describe, out, err);
  if (*f) {
    if (*corr_opt) fit.corr = corr;
    if (*trunc_opt) {
      try {
        fit.truncate = std::stod(trunc_opt->as<std::string>());
      } catch (const std::exception&) {
        err << "error: --truncate expects a number\n";
        return kUsage;
      }
    }
    return cmd_fit(fit, out, err);
  }
  if (*e) {
    endpoint.mixed = !no_mixed;
    return cmd_endpoint(endpoint, out, err);
  }
  if (*s) return cmd_scan(scan, out, err);
  if (*m) {
    if (*seed_opt) simulate_opts.seed = seed;
    return cmd_simulate(simulate_opts, out, err);
  }
  return kUsage;
}

}  // namespace longit::cli

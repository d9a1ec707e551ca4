#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "longit/cli.hpp"
#include "longit/dataset.hpp"
#include "longit/error.hpp"
#include "longit/gee.hpp"
#include "longit/glm.hpp"
#include "longit/glmm.hpp"
#include "longit/inference.hpp"
#include "longit/prep.hpp"
#include "longit/quadrature.hpp"
#include "longit/sim.hpp"
#include "longit/wgee.hpp"

namespace py = pybind11;
using namespace longit;

namespace {

CovariateSchema make_schema(const std::string& csv, const std::string& treatment,
                            const std::vector<std::string>& categorical,
                            const std::vector<std::string>& time_varying) {
  std::istringstream in(csv);
  return infer_schema(in, treatment, categorical, time_varying);
}

LongDataset from_csv(const std::string& csv, const std::string& treatment, const std::vector<std::string>& categorical,
                     const std::vector<std::string>& time_varying) {
  const auto schema = make_schema(csv, treatment, categorical, time_varying);
  std::istringstream in(csv);
  return load_long_csv(in, schema);
}

py::dict gee_dict(const GeeFit& f) {
  py::dict d;
  d["names"] = f.names;
  d["beta"] = f.beta;
  d["model_based_cov"] = f.model_based_cov;
  d["sandwich_cov"] = f.sandwich_cov;
  d["alpha"] = f.correlation.alpha;
  d["iterations"] = f.iterations;
  d["n_subjects"] = f.n_subjects;
  d["warnings"] = f.warnings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_longit, m) {
  m.doc() = "Incomplete longitudinal binary outcomes: GEE, weighted GEE and random-intercept GLMM.";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  py::class_<LongDataset>(m, "LongDataset")
      .def_property_readonly("occasions", &LongDataset::occasions)
      .def_property_readonly("arms", &LongDataset::arms)
      .def_property_readonly("ids",
                             [](const LongDataset& d) {
                               std::vector<std::string> ids;
                               for (const auto& s : d.subjects()) ids.push_back(s.id);
                               return ids;
                             })
      .def_property_readonly("treatments",
                             [](const LongDataset& d) {
                               std::vector<std::string> t;
                               for (const auto& s : d.subjects()) t.push_back(s.treatment);
                               return t;
                             })
      .def_property_readonly("outcomes",
                             [](const LongDataset& d) {
                               std::vector<std::vector<std::optional<int>>> y;
                               for (const auto& s : d.subjects()) y.push_back(s.outcomes);
                               return y;
                             })
      .def("__len__", &LongDataset::size)
      .def("to_csv", [](const LongDataset& d) {
        std::ostringstream out;
        write_long_csv(out, d);
        return out.str();
      });

  m.def("load_csv", &from_csv, py::arg("text"), py::arg("treatment") = "trt",
        py::arg("categorical") = std::vector<std::string>{}, py::arg("time_varying") = std::vector<std::string>{},
        "Parse long-format CSV text into a dataset.");

  m.def("pattern_table", [](const LongDataset& d) {
    std::vector<std::tuple<std::string, std::string, std::size_t, double>> rows;
    for (const auto& r : pattern_table(d)) rows.emplace_back(r.pattern, to_string(r.kind), r.count, r.percent);
    return rows;
  });

  m.def("complete_case", &complete_case);
  m.def("locf_impute", [](const LongDataset& d) { return locf_impute(d).data; });
  m.def("monotonize", [](const LongDataset& d) { return monotonize(d).data; });

  m.def(
      "fit_logistic",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::optional<Eigen::VectorXd> w) {
        const auto fit = fit_logistic(X, y, w ? *w : Eigen::VectorXd::Ones(y.size()));
        return py::make_tuple(fit.beta, fit.covariance, fit.loglik);
      },
      py::arg("X"), py::arg("y"), py::arg("weights") = py::none());

  m.def(
      "fit_gee",
      [](const LongDataset& d, const std::string& formula, const std::string& corr) {
        return gee_dict(fit_gee(d, parse_formula(formula), parse_corr_structure(corr)));
      },
      py::arg("data"), py::arg("formula") = "outcome ~ trt*visit", py::arg("corr") = "exch");

  m.def(
      "fit_wgee",
      [](const LongDataset& d, const std::string& formula, const std::string& corr, const std::string& weights,
         const std::vector<std::string>& dropout_covariates) {
        WgeeOptions o;
        o.mode = parse_weight_mode(weights);
        o.dropout_covariates = dropout_covariates;
        const auto f = fit_wgee(d, parse_formula(formula), parse_corr_structure(corr), o);
        auto out = gee_dict(f.gee);
        out["psi"] = f.dropout.psi();
        out["psi_names"] = f.dropout.names();
        out["warnings"] = f.warnings;
        return out;
      },
      py::arg("data"), py::arg("formula") = "outcome ~ trt*visit", py::arg("corr") = "exch",
      py::arg("weights") = "occasion", py::arg("dropout_covariates") = std::vector<std::string>{});

  m.def(
      "fit_glmm",
      [](const LongDataset& d, const std::string& formula, const std::string& quadrature, int Q,
         const std::string& optimizer, bool zero_start) {
        GlmmSpec s;
        s.formula = parse_formula(formula);
        s.quadrature = QuadratureSpec{parse_quadrature_mode(quadrature), Q};
        s.optimizer = parse_optimizer(optimizer);
        s.zero_start = zero_start;
        const auto f = fit_glmm(d, s);
        py::dict out;
        out["names"] = f.names;
        out["beta"] = f.beta;
        out["sigma"] = f.sigma;
        out["loglik"] = f.loglik;
        out["covariance"] = f.covariance;
        out["beta_se"] = f.beta_se();
        out["sigma_se"] = f.sigma_se();
        out["boundary"] = f.boundary;
        out["seemingly_converged"] = f.seemingly_converged;
        return out;
      },
      py::arg("data"), py::arg("formula") = "outcome ~ trt*visit", py::arg("quadrature") = "adaptive",
      py::arg("Q") = 0, py::arg("optimizer") = "quasi-newton", py::arg("zero_start") = false);

  m.def("gauss_hermite", [](int Q) {
    const auto& r = gauss_hermite(Q);
    return py::make_tuple(r.nodes, r.weights);
  });
  m.def(
      "subject_loglik",
      [](const Eigen::VectorXd& eta, const Eigen::VectorXd& y, double sigma, const std::string& mode, int Q) {
        return subject_loglik(eta, y, sigma, QuadratureSpec{parse_quadrature_mode(mode), Q});
      },
      py::arg("eta"), py::arg("y"), py::arg("sigma"), py::arg("mode") = "adaptive", py::arg("Q") = 0);
  m.def("marginalize_mean", py::overload_cast<double, double>(&marginalize_mean), py::arg("eta"), py::arg("sigma"));
  m.def("attenuation_ratio", &attenuation_ratio, py::arg("sigma"));

  m.def("wald_test", [](const Eigen::MatrixXd& L, const Eigen::VectorXd& beta, const Eigen::MatrixXd& V) {
    const auto w = wald_test(L, beta, V);
    return py::make_tuple(w.statistic, w.df, w.p_value);
  });
  m.def("pearson_chi2", [](const std::vector<long>& successes, const std::vector<long>& failures) {
    const auto w = pearson_chi2({successes, failures});
    return py::make_tuple(w.statistic, w.df, w.p_value);
  });
  m.def("fisher_exact", [](const std::vector<long>& successes, const std::vector<long>& failures) {
    return fisher_exact({successes, failures});
  });
  m.def(
      "endpoint_analysis",
      [](const LongDataset& d, const std::string& view, const std::string& strategy) {
        const auto r = endpoint_analysis(d, parse_endpoint_view(view), parse_endpoint_strategy(strategy));
        py::dict out;
        out["arms"] = r.arms;
        out["successes"] = r.table[0];
        out["failures"] = r.table[1];
        out["pearson_p"] = r.pearson.p_value;
        out["fisher_p"] = r.fisher.p_value;
        return out;
      },
      py::arg("data"), py::arg("view") = "last-planned", py::arg("strategy") = "locf");

  m.def(
      "simulate",
      [](const std::string& spec_json, bool dropout) {
        const auto spec = parse_sim_spec(spec_json);
        return dropout ? simulate(spec) : simulate_complete(spec);
      },
      py::arg("spec_json"), py::arg("dropout") = true);

  m.def(
      "replicate_study",
      [](const std::string& spec_json, const std::vector<std::string>& estimators, std::size_t replicates) {
        ReplicationOptions o;
        o.replicates = replicates;
        std::ostringstream out;
        replicate_study(parse_sim_spec(spec_json), estimators, o).write_csv(out);
        return out.str();
      },
      py::arg("spec_json"), py::arg("estimators"), py::arg("replicates"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"longit"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (exit_code, stdout, stderr).");
}

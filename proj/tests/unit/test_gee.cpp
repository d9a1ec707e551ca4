#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "longit/error.hpp"
#include "longit/gee.hpp"
#include "longit/glm.hpp"

using namespace longit;

TEST_SUITE("gee") {
  TEST_CASE("exchangeable moment estimate matches the double sum") {
    std::vector<ResidualBlock> blocks{
        {(Eigen::VectorXd(3) << 0.5, -1.0, 1.5).finished(), {0, 1, 2}, {}},
        {(Eigen::VectorXd(2) << 1.2, 0.8).finished(), {0, 2}, {}},
        {(Eigen::VectorXd(1) << 2.0).finished(), {1}, {}},
        {(Eigen::VectorXd(4) << -0.3, 0.4, 0.9, -1.1).finished(), {0, 1, 2, 3}, {}},
    };
    double total = 0.0;
    int used = 0;
    for (const auto& b : blocks) {
      const auto m = b.e.size();
      if (m < 2) continue;
      double s = 0.0;
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < m; ++k)
          if (j != k) s += b.e(j) * b.e(k);
      total += s / static_cast<double>(m * (m - 1));
      ++used;
    }
    const auto c = estimate_alpha(blocks, CorrStructure::Exchangeable, 4);
    CHECK(c.alpha == doctest::Approx(total / used).epsilon(1e-14));
    CHECK(estimate_alpha(blocks, CorrStructure::Independence, 4).alpha == 0.0);
  }

  TEST_CASE("AR1 uses the occasion lag") {
    WorkingCorrelation c;
    c.structure = CorrStructure::AR1;
    c.alpha = 0.5;
    const Eigen::MatrixXd C = correlation_matrix(c, {0, 2, 3}, 4);
    CHECK(C(0, 1) == doctest::Approx(0.25));
    CHECK(C(1, 2) == doctest::Approx(0.5));
    CHECK(C(0, 2) == doctest::Approx(0.125));
    c.structure = CorrStructure::Exchangeable;
    c.alpha = -0.6;
    CHECK_THROWS_AS((void)correlation_matrix(c, {0, 1, 2}, 3), DataError);
  }

  TEST_CASE("pearson residuals reject degenerate means") {
    Eigen::VectorXd y(2), mu(2);
    y << 1, 0;
    mu << 0.5, 0.0;
    CHECK_THROWS_AS((void)pearson_residuals(y, mu), NumericalError);
  }

  TEST_CASE("independence GEE reproduces logistic regression") {
    const auto d = testing::make_dataset(
        {{1, 0, 1}, {0, 0, 1}, {1, 1, 1}, {0, 1, -1}, {1, -1, -1}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}});
    const auto f = parse_formula("outcome ~ trt + visit");
    const auto gee = fit_gee(d, f, CorrStructure::Independence);
    const auto design = build_design(d, f);
    const auto glm = fit_logistic(design.stacked_X(), design.stacked_y(), Eigen::VectorXd::Ones(design.n_rows()));
    CHECK((gee.beta - glm.beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((gee.model_based_cov - glm.covariance).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("exchangeable fit solves its estimating equation") {
    const auto d = testing::make_dataset(
        {{1, 0, 1}, {0, 0, 1}, {1, 1, 1}, {0, 1, -1}, {1, -1, -1}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}, {1, 1, 0}, {0, 0, 0}});
    const auto f = parse_formula("outcome ~ trt + visit");
    const auto fit = fit_gee(d, f, CorrStructure::Exchangeable);
    CHECK(fit.converged);
    const auto design = build_design(d, f);
    CHECK(gee_score(design, {}, fit.beta, fit.correlation, 3).cwiseAbs().maxCoeff() < 1e-6);
    // Doubling every weight leaves the solution unchanged.
    ObservationWeights w;
    for (const auto& s : design.subjects) w.push_back(Eigen::VectorXd::Constant(s.y.size(), 2.0));
    const auto fw = fit_gee(design, w, CorrStructure::Exchangeable, 3);
    CHECK((fw.beta - fit.beta).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("structure names") {
    CHECK(parse_corr_structure("exch") == CorrStructure::Exchangeable);
    CHECK(parse_corr_structure("ar1") == CorrStructure::AR1);
    CHECK_THROWS_AS((void)parse_corr_structure("banded"), DataError);
  }
}

#include <cmath>

#include <doctest.h>

#include "longit/error.hpp"
#include "longit/glm.hpp"

using namespace longit;

namespace {

Eigen::MatrixXd small_design() {
  Eigen::MatrixXd X(8, 2);
  X << 1, -1.5, 1, -1.0, 1, -0.5, 1, 0.0, 1, 0.5, 1, 1.0, 1, 1.5, 1, 2.0;
  return X;
}

}  // namespace

TEST_SUITE("glm") {
  TEST_CASE("link helpers stay finite") {
    CHECK(expit(0.0) == 0.5);
    CHECK(expit(800.0) == 1.0);
    CHECK(expit(-800.0) >= 0.0);
    CHECK(logit(expit(2.5)) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(log1pexp(1000.0) == doctest::Approx(1000.0));
    CHECK(log1pexp(-40.0) == doctest::Approx(std::exp(-40.0)).epsilon(1e-12));
    CHECK_THROWS((void)bernoulli_variance(1.5));
  }

  TEST_CASE("score vanishes at the fit and matches finite differences") {
    const Eigen::MatrixXd X = small_design();
    Eigen::VectorXd y(8);
    y << 0, 0, 1, 0, 1, 0, 1, 1;
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(8);
    const auto fit = fit_logistic(X, y, w);
    CHECK(fit.converged);
    CHECK(logistic_score(X, y, w, fit.beta).cwiseAbs().maxCoeff() < 1e-8);
    Eigen::VectorXd b(2);
    b << 0.3, -0.7;
    const Eigen::VectorXd g = logistic_score(X, y, w, b);
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd bp = b, bm = b;
      bp(k) += 1e-6;
      bm(k) -= 1e-6;
      CHECK(g(k) == doctest::Approx((logistic_loglik(X, y, w, bp) - logistic_loglik(X, y, w, bm)) / 2e-6).epsilon(1e-6));
    }
  }

  TEST_CASE("integer prior weights equal duplicated rows") {
    const Eigen::MatrixXd X = small_design();
    Eigen::VectorXd y(8);
    y << 0, 1, 1, 0, 1, 0, 1, 1;
    Eigen::VectorXd w = Eigen::VectorXd::Ones(8);
    w(2) = 2.0;
    Eigen::MatrixXd X2(9, 2);
    X2 << X, X.row(2);
    Eigen::VectorXd y2(9);
    y2 << y, y(2);
    const auto a = fit_logistic(X, y, w);
    const auto b = fit_logistic(X2, y2, Eigen::VectorXd::Ones(9));
    CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("separation and rank deficiency are reported") {
    const Eigen::MatrixXd X = small_design();
    Eigen::VectorXd y(8);
    y << 0, 0, 0, 0, 1, 1, 1, 1;
    CHECK_THROWS_AS((void)fit_logistic(X, y, Eigen::VectorXd::Ones(8)), NumericalError);
    Eigen::MatrixXd Xd(8, 3);
    Xd << X, 2 * X.col(1);
    y << 0, 1, 0, 0, 1, 0, 1, 1;
    CHECK_THROWS_AS((void)fit_logistic(Xd, y, Eigen::VectorXd::Ones(8)), DataError);
  }
}

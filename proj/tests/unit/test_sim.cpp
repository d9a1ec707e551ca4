#include <cmath>

#include <doctest.h>

#include "longit/error.hpp"
#include "longit/glm.hpp"
#include "longit/prep.hpp"
#include "longit/sim.hpp"

using namespace longit;

namespace {

SimSpec spec() {
  SimSpec s;
  s.N = 4000;
  s.n = 4;
  s.visit_intercepts = {0.0, 0.0, 0.0, 0.0};
  s.treatment_effects = {{0.5, 0.5, 0.5, 0.5}};
  s.sigma = 1.0;
  s.seed = 77;
  return s;
}

std::size_t completers(const LongDataset& d) {
  std::size_t c = 0;
  for (const auto& s : d.subjects()) c += s.observed_count() == d.n_occasions();
  return c;
}

}  // namespace

TEST_SUITE("sim") {
  TEST_CASE("same seed gives identical data") {
    auto s = spec();
    s.psi = {-1.0, 0.5, {}, {}};
    const auto a = simulate(s), b = simulate(s);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.subject(i).outcomes == b.subject(i).outcomes);
    s.seed = 78;
    const auto c = simulate(s);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i) differ += a.subject(i).outcomes != c.subject(i).outcomes;
    CHECK(differ > 100);
  }

  TEST_CASE("arm allocation is balanced and deterministic") {
    auto s = spec();
    s.N = 10;
    s.allocation = {0.7, 0.3};
    const auto arms = s.arm_assignment();
    CHECK(std::count(arms.begin(), arms.end(), 0u) == 7);
    CHECK(s.mechanism() == "MCAR");
  }

  TEST_CASE("MCAR dropout rate matches the hazard") {
    auto s = spec();
    s.psi = {logit(0.2), 0.0, {}, {}};
    const auto d = simulate(s);
    const double expected = std::pow(0.8, 3);
    CHECK(std::abs(static_cast<double>(completers(d)) / s.N - expected) < 0.03);
    for (const auto& sub : d.subjects()) CHECK(missingness_profile(sub).pattern != Pattern::Intermittent);
  }

  TEST_CASE("MAR dropout depends on the previous outcome") {
    auto s = spec();
    s.psi = {-2.0, 2.0, {}, {}};
    CHECK(s.mechanism() == "MAR");
    const auto complete = simulate_complete(s);
    const auto d = apply_dropout(complete, s);
    double at_risk[2] = {0, 0}, drops[2] = {0, 0};
    for (const auto& sub : d.subjects()) {
      const auto p = missingness_profile(sub);
      for (int j = 2; j <= 4 && j <= p.d; ++j) {
        const int prev = *sub.outcomes[static_cast<std::size_t>(j - 2)];
        at_risk[prev] += 1;
        drops[prev] += (j == p.d);
      }
    }
    CHECK(std::abs(drops[0] / at_risk[0] - expit(-2.0)) < 0.02);
    CHECK(std::abs(drops[1] / at_risk[1] - expit(0.0)) < 0.03);
  }

  TEST_CASE("spec JSON round trip and validation") {
    auto s = spec();
    s.psi = {-1.0, 0.0, {0.2}, {0.1, 0.0}};
    const auto back = parse_sim_spec(to_json(s));
    CHECK(back.N == s.N);
    CHECK(back.psi.time == s.psi.time);
    CHECK(back.treatment_effects == s.treatment_effects);
    CHECK_THROWS_AS((void)parse_sim_spec(R"({"N": 10, "bogus": 1})"), DataError);
    s.visit_intercepts.pop_back();
    CHECK_THROWS_AS(s.validate(), DataError);
  }

  TEST_CASE("true coefficients reproduce cell means") {
    auto s = spec();
    s.N = 20;
    const auto d = simulate_complete(s);
    const auto f = parse_formula("outcome ~ trt*visit");
    const auto cond = true_coefficients(s, d, f, false);
    CHECK(cond(0) == doctest::Approx(0.0));
    CHECK(cond(1) == doctest::Approx(0.5));
    const auto marg = true_coefficients(s, d, f, true);
    CHECK(std::abs(marg(1)) < 0.5);
    CHECK(std::abs(marg(1)) > 0.3);
  }

  TEST_CASE("replication report lists requested estimators") {
    auto s = spec();
    s.N = 200;
    s.psi = {-1.5, 0.5, {}, {}};
    ReplicationOptions o;
    o.replicates = 3;
    const auto r = replicate_study(s, {"oracle", "gee-cc", "wgee"}, o);
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[2].estimator == "wgee");
    CHECK(r.rows[0].successes == 3);
    CHECK(r.mechanism == "MAR");
  }
}

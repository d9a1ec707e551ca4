#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "longit/error.hpp"
#include "longit/wgee.hpp"

using namespace longit;

namespace {

// Monotone data with enough dropout in both arms for a stable hazard fit.
LongDataset dropout_data() {
  std::vector<std::vector<int>> rows;
  const std::vector<std::vector<int>> base{{1, 1, 1, 1}, {0, 1, -1, -1}, {1, 0, 1, -1}, {0, -1, -1, -1},
                                           {1, 1, 0, 1},  {0, 0, 0, 0},   {1, -1, -1, -1}, {0, 1, 1, -1},
                                           {1, 0, 0, 1},  {0, 0, 1, 1},   {1, 1, -1, -1}, {0, 0, 0, -1}};
  for (int r = 0; r < 4; ++r)
    for (const auto& b : base) rows.push_back(b);
  return testing::make_dataset(rows);
}

}  // namespace

TEST_SUITE("wgee") {
  TEST_CASE("pattern probability and dropout distribution") {
    const std::vector<double> p{0.2, 0.3, 0.4};
    CHECK(dropout_pattern_probability(p, 2, 4) == doctest::Approx(0.2));
    CHECK(dropout_pattern_probability(p, 3, 4) == doctest::Approx(0.8 * 0.3));
    CHECK(dropout_pattern_probability(p, 4, 4) == doctest::Approx(0.8 * 0.7 * 0.4));
    CHECK(dropout_pattern_probability(p, 5, 4) == doctest::Approx(0.8 * 0.7 * 0.6));
    const auto dist = dropout_distribution(p);
    REQUIRE(dist.size() == 4);
    double total = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      CHECK(dist[k] == doctest::Approx(dropout_pattern_probability(p, static_cast<int>(k) + 2, 4)));
      total += dist[k];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("person-period expansion counts at-risk rows") {
    const auto d = testing::make_dataset({{1, 1, 1, 1}, {1, 0, -1, -1}, {0, -1, -1, -1}});
    const auto t = person_period_expand(d);
    CHECK(t.rows.size() == 6);
    CHECK(t.drop.sum() == 2.0);
    CHECK(t.columns ==
          std::vector<std::string>{"(Intercept)", "prev_outcome", "trt[T]", "time[2]", "time[3]"});
    // Second subject at occasion 3 carries y_2 = 0 and drops.
    CHECK(t.rows[4].subject == 1);
    CHECK(t.rows[4].drop == 1);
    CHECK(t.X(4, 1) == 0.0);
    CHECK_THROWS_AS((void)person_period_expand(testing::make_dataset({{1, -1, 1}})), DataError);
  }

  TEST_CASE("weights invert the fitted pattern probabilities") {
    const auto d = dropout_data();
    const auto model = fit_dropout_model(person_period_expand(d));
    const auto subj = subject_weights(model, d);
    const auto occ = occasion_weights(model, d);
    const DropoutDesign dd(d, {});
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto h = dropout_hazards(model, dd, d.subject(i));
      const auto prof = missingness_profile(d.subject(i));
      const double nu = dropout_pattern_probability(h, prof.d, 4);
      CHECK(subj.nu[i] == doctest::Approx(nu).epsilon(1e-12));
      for (Eigen::Index j = 0; j < subj.weights[i].size(); ++j) CHECK(subj.weights[i](j) == doctest::Approx(1.0 / nu));
      CHECK(occ.cumulative[i].back() == doctest::Approx(nu).epsilon(1e-12));
      for (std::size_t j = 0; j < occ.cumulative[i].size(); ++j)
        CHECK(occ.weights[i](static_cast<Eigen::Index>(j)) == doctest::Approx(1.0 / occ.cumulative[i][j]));
      if (prof.d > 3) CHECK(occ.cumulative[i][1] == doctest::Approx(1.0 - h[0]));
    }
  }

  TEST_CASE("truncation caps at the quantile") {
    const auto d = dropout_data();
    const auto model = fit_dropout_model(person_period_expand(d));
    auto w = occasion_weights(model, d);
    const double before = w.max_weight();
    truncate_weights(w, 0.5);
    CHECK(w.max_weight() <= before);
    std::size_t at_cap = 0, total = 0;
    for (const auto& v : w.weights)
      for (Eigen::Index j = 0; j < v.size(); ++j, ++total)
        if (v(j) == doctest::Approx(w.max_weight())) ++at_cap;
    CHECK(at_cap * 2 >= total);
  }

  TEST_CASE("WGEE excludes subjects missing the first occasion") {
    auto rows = std::vector<std::vector<int>>{};
    const auto base = dropout_data();
    for (const auto& s : base.subjects()) {
      std::vector<int> r;
      for (const auto& o : s.outcomes) r.push_back(o ? *o : -1);
      rows.push_back(r);
    }
    rows.push_back({-1, 1, 1, 1});
    rows.push_back({1, -1, 1, 1});
    const auto d = testing::make_dataset(rows);
    const auto fit = fit_wgee(d, parse_formula("outcome ~ trt + visit"), CorrStructure::Exchangeable);
    CHECK(fit.excluded_subjects == 1);
    CHECK(fit.discarded_observations == 5);
    CHECK(fit.data.size() == rows.size() - 1);
    CHECK(fit.gee.converged);
    CHECK(parse_weight_mode("subject") == WeightMode::Subject);
  }
}

#include <numeric>

#include "doctest.h"
#include "pilaw/error.hpp"
#include "pilaw/filtering.hpp"
#include "pilaw/linalg.hpp"
#include "support.hpp"

using namespace pilaw;

namespace {

struct Walkthrough {
  Matrix features;
  std::vector<double> y;
};

Walkthrough walkthrough(std::uint64_t seed) {
  const auto c = generate_synthetic(test::walkthrough_spec(seed));
  const auto data = normalize_max(c.data);
  return {log_pi_features(data, c.basis).values, data.output};
}

void check_ratio_invariants(const FilterReport& r) {
  double sum = 0.0;
  for (std::size_t i = 0; i < r.ratios.size(); ++i) {
    CHECK(r.ratios[i] >= 0.0);
    if (i > 0) CHECK(r.ratios[i] <= r.ratios[i - 1]);
    sum += r.ratios[i];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.suggested_k == estimate_k(r.ratios, r.threshold));
}

}  // namespace

TEST_CASE("standardize") {
  const auto s = standardize(Matrix::from_rows({{1}, {3}}));
  CHECK(s.values(0, 0) == doctest::Approx(-std::sqrt(0.5)));
  CHECK(s.values(1, 0) == doctest::Approx(std::sqrt(0.5)));

  Rng rng(1);
  Matrix x(50, 3);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.uniform(-4, 9);
  const auto once = standardize(x);
  const auto twice = standardize(once.values);
  for (std::size_t i = 0; i < once.values.data().size(); ++i)
    CHECK(twice.values.data()[i] == doctest::Approx(once.values.data()[i]).epsilon(1e-12).scale(1.0));

  Matrix with_constant = x;
  for (std::size_t i = 0; i < 50; ++i) with_constant(i, 1) = 2.5;
  const auto dropped = standardize(with_constant);
  CHECK(dropped.kept == std::vector<std::size_t>{0, 2});
  CHECK(dropped.warnings.size() == 1);
  CHECK_THROWS_AS(standardize(Matrix(5, 2, 1.0)), Error);
}

TEST_CASE("estimate_k") {
  CHECK(estimate_k(std::vector<double>{0.835, 0.078, 0.075, 0.012}, 0.75) == 1);
  CHECK(estimate_k(std::vector<double>{0.5, 0.3, 0.2}, 0.75) == 2);
  CHECK(estimate_k(std::vector<double>{0.4, 0.2, 0.2, 0.2}, 0.75) == 3);
  CHECK(estimate_k(std::vector<double>{0.4, 0.2, 0.2, 0.2}, 0.0) == 1);
  CHECK(estimate_k(std::vector<double>{0.4, 0.2, 0.2, 0.2}, 1.0) == 4);
}

TEST_CASE("pca on rank-one data") {
  Matrix x(10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = 2.0 * static_cast<double>(i);
  }
  const auto r = pca_report(x);
  CHECK(r.ratios[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.ratios[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  CHECK(r.suggested_k == 1);
}

TEST_CASE("sir recovers a single direction") {
  Rng rng(8);
  Matrix x(2000, 2);
  std::vector<double> y(2000);
  for (std::size_t i = 0; i < 2000; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = x(i, 0);
  }
  SirConfig cfg;
  cfg.slices = 10;
  const auto r = sir_report(x, y, cfg);
  CHECK(std::abs(r.directions(0, 0)) / linalg::norm(r.directions.column(0)) > 0.99);
  CHECK(r.ratios[0] > 0.95);
  check_ratio_invariants(r);
}

TEST_CASE("sir slice rules") {
  CHECK(SirConfig{}.slice_count(100) == 10);
  CHECK(SirConfig{}.slice_count(20) == 4);
  CHECK(SirConfig{}.slice_count(5) == 2);
  const auto sizes = slice_sizes(10, 3);
  CHECK(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == 10);
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);

  const auto w = walkthrough(5);
  SirConfig one;
  one.slices = 1;
  CHECK_THROWS_AS(sir_report(w.features, w.y, one), Error);
  SirConfig many;
  many.slices = 1000;
  CHECK_THROWS_AS(sir_report(w.features, w.y, many), Error);
}

TEST_CASE("walkthrough explained-variance patterns") {
  const auto w = walkthrough(1);
  const auto pca = pca_report(append_column(w.features, w.y));
  REQUIRE(pca.ratios.size() == 4);
  check_ratio_invariants(pca);
  CHECK(pca.ratios[0] == doctest::Approx(0.835).epsilon(0.06));
  CHECK(pca.ratios[1] < 0.15);
  CHECK(pca.ratios[3] < 0.05);
  CHECK(pca.suggested_k == 1);

  const auto sir = sir_report(w.features, w.y);
  REQUIRE(sir.ratios.size() == 3);
  check_ratio_invariants(sir);
  CHECK(std::abs(sir.ratios[0] - 0.987) < 0.03);
  CHECK(sir.suggested_k == 1);

  const auto strict = with_threshold(pca, 0.999);
  CHECK(strict.eigenvalues == pca.eigenvalues);
  CHECK(strict.suggested_k == estimate_k(pca.ratios, 0.999));
  CHECK(with_threshold(pca, 0.0).suggested_k == 1);
}

TEST_CASE("filter report json round trip") {
  const auto w = walkthrough(2);
  const auto r = sir_report(w.features, w.y);
  const auto back = FilterReport::from_json(r.to_json());
  CHECK(back.ratios == r.ratios);
  CHECK(back.suggested_k == r.suggested_k);
  CHECK(back.method == FilterMethod::SIR);
}

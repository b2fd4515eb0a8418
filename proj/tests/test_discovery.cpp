#include <algorithm>
#include <atomic>
#include <cmath>

#include "doctest.h"
#include "pilaw/discovery.hpp"
#include "pilaw/error.hpp"
#include "pilaw/linalg.hpp"
#include "support.hpp"
#include "oracles.hpp"

using namespace pilaw;
using namespace pilaw::oracle;

namespace {

DiscoveryProblem walkthrough_problem(std::uint64_t seed = 0) {
  const auto c = generate_synthetic(test::walkthrough_spec(seed));
  const auto data = normalize_max(c.data);
  return {log_pi_features(data, c.basis).values, data.output, Matrix::from_rows(c.gammas)};
}

DiscoveryResult with_r2(double r2) {
  DiscoveryResult r{.gamma = {}, .gamma_normalized = {}, .r2_train = r2, .r2_test = r2, .loss_history = {},
                    .seed = 0, .network = build_network(1, 1, 0, 1, 0), .x_mean = {}, .y_mean = 0, .y_scale = 1,
                    .truth_error = std::nullopt};
  return r;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("target sets") {
  const auto ints = target_values(TargetSet::Integer);
  CHECK(ints.size() == 11);
  CHECK(ints.front() == -5);
  CHECK(ints.back() == 5);
  CHECK(target_values(TargetSet::HalfInteger).size() == 13);
  CHECK(target_values(TargetSet::QuarterInteger).size() == 25);
  CHECK(nearest_target(0.75, TargetSet::HalfInteger) == 0.5);
  CHECK(nearest_target(-0.25, TargetSet::HalfInteger) == -0.5);
  CHECK(nearest_target(7.2, TargetSet::Integer) == 5);
  CHECK(target_set_from_string(to_string(TargetSet::QuarterInteger)) == TargetSet::QuarterInteger);
  CHECK_THROWS_AS(target_set_from_string("thirds"), Error);
}

TEST_CASE("quantization loss examples") {
  const std::vector<double> a{1, 1, 0};
  CHECK(quantization_loss(a, TargetSet::HalfInteger) == 0.0);
  const std::vector<double> b{0.3, 1.2, 0};
  CHECK(quantization_loss(b, TargetSet::Integer) == doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<double> c{0.75};
  CHECK(quantization_loss(c, TargetSet::HalfInteger) == 0.25);
  CHECK(quantization_loss(Matrix::from_rows({{0.3, 1.2, 0}, {0.3, 1.2, 0}}), TargetSet::Integer) ==
        doctest::Approx(1.0));
}

TEST_CASE("oracle: quantization loss equals the exhaustive minimum") {
  Rng rng(13);
  const TargetSet sets[] = {TargetSet::Integer, TargetSet::HalfInteger, TargetSet::QuarterInteger};
  for (int trial = 0; trial < 1000; ++trial) {
    const TargetSet set = sets[trial % 3];
    std::vector<double> g(1 + rng.below(6));
    for (auto& x : g) x = rng.uniform(-7, 7);
    CHECK(quantization_loss(g, set) == brute_force_quantization(g, set));
  }
}

TEST_CASE("quantization subgradient matches finite differences away from targets and ties") {
  Rng rng(14);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const TargetSet set = trial % 2 ? TargetSet::HalfInteger : TargetSet::Integer;
    const double x = rng.uniform(-6, 6);
    const double t = nearest_target(x, set);
    const double step = set == TargetSet::Integer ? 1.0 : 0.5;
    const double to_tie = std::abs(std::abs(x - t) - step / 2);
    if (std::abs(x - t) < 1e-3 || (std::abs(x) < 5 && to_tie < 1e-3)) continue;
    const double eps = 1e-5;
    const std::vector<double> up{x + eps}, down{x - eps};
    const double numeric = (quantization_loss(up, set) - quantization_loss(down, set)) / (2 * eps);
    CHECK(quantization_subgradient(x, set) == doctest::Approx(numeric).epsilon(1e-5));
    ++checked;
  }
  CHECK(checked > 1500);
  CHECK(quantization_subgradient(1.0, TargetSet::Integer) == 0.0);
  CHECK(quantization_subgradient(0.5, TargetSet::Integer) == 1.0);
}

TEST_CASE("train config validation and json") {
  TrainConfig cfg;
  CHECK(cfg.lambda == 0.02);
  CHECK(cfg.ensemble_size == 20);
  const auto back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(code_of([] { TrainConfig::from_json(nlohmann::json{{"k", 0}}); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { TrainConfig::from_json(nlohmann::json{{"lamda", 0.1}}); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { TrainConfig::from_json(nlohmann::json{{"lambda", -1}}); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { TrainConfig::from_json(nlohmann::json{{"r2_margin", -0.1}}); }) == ErrorCode::BadConfig);
  CHECK(TrainConfig::from_json(nlohmann::json{{"r2_margin", 0.02}}).r2_margin == 0.02);
}

TEST_CASE("r squared") {
  const std::vector<double> a{1, 2, 3};
  CHECK(r_squared(a, a) == 1.0);
  const std::vector<double> mean{2, 2, 2};
  CHECK(r_squared(mean, a) == 0.0);
  const std::vector<double> p{1, 2}, q{1, 3};
  CHECK(r_squared(p, q) == 0.5);
  CHECK(code_of([&] { r_squared(a, mean); }) == ErrorCode::ConstantActual);
  CHECK(code_of([&] { r_squared(p, a); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("normalize gamma") {
  CHECK(normalize_gamma(std::vector<double>{2, 2, 0}) == std::vector<double>{1, 1, 0});
  CHECK(normalize_gamma(std::vector<double>{-0.5, -0.5, 0}) == std::vector<double>{1, 1, 0});
  CHECK(normalize_gamma(std::vector<double>{1e-9, 3, 0}) == std::vector<double>{0, 1, 0});
  CHECK(code_of([] { normalize_gamma(std::vector<double>{1e-9, 0, -1e-8}); }) == ErrorCode::AllNearZero);
}

TEST_CASE("relative error") {
  const std::vector<double> t{1, 1, 0};
  CHECK(relative_error(t, t) == 0.0);
  CHECK(relative_error(std::vector<double>{-2.7, -2.7, 0}, t) == doctest::Approx(0.0).scale(1.0));
  CHECK(relative_error(std::vector<double>{1, -1, 0}, t) == doctest::Approx(std::sqrt(2.0)));
  CHECK(code_of([&] { relative_error(std::vector<double>{0, 0, 0}, t); }) == ErrorCode::ZeroVector);
}

TEST_CASE("subspace residual") {
  const Matrix ref = Matrix::from_rows({{1, 1, 0}, {2, 0, 1}});
  CHECK(subspace_residual(Matrix::from_rows({{3, 1, 1}}), ref)[0] < 1e-12);
  // (1,1,0) x (2,0,1) = (1,-1,-2)
  CHECK(subspace_residual(Matrix::from_rows({{1, -1, -2}}), ref)[0] == doctest::Approx(1.0));
  CHECK(code_of([&] { subspace_residual(Matrix::from_rows({{1, 1, 1}}), Matrix::from_rows({{1, 1, 0}, {2, 2, 0}})); }) ==
        ErrorCode::DegenerateBasis);

  Rng rng(3);
  Matrix rows(200, 3);
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j < 3; ++j) rows(i, j) = rng.uniform(-2, 2);
  const auto res = subspace_residual(rows, ref);
  for (std::size_t i = 0; i < 200; ++i) CHECK(res[i] == doctest::Approx(normal_equation_residual(rows.row(i), ref)).epsilon(1e-9));
}

TEST_CASE("sparsify subspace") {
  const Matrix s = sparsify_subspace(Matrix::from_rows({{1, 1, 0}, {2, 0, 1}}), 2);
  const Matrix expected = Matrix::from_rows({{1, 0, 0.5}, {0, 1, -0.5}});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(s(i, j) == doctest::Approx(expected(i, j)).scale(1.0).epsilon(1e-9));
  // against the values learned in the two-group study: [1, 0, 0.458] and [0, -1, 0.499]
  CHECK(std::abs(s(0, 2) - 0.458) < 0.05);
  CHECK(std::abs(s(1, 1) - 1.0) < 0.05);
  CHECK(std::abs(-s(1, 2) - 0.499) < 0.05);

  const Matrix one = sparsify_subspace(Matrix::from_rows({{-0.5, -0.5, 0}}), 1);
  CHECK(one.row(0)[0] == doctest::Approx(1.0));
  CHECK(one.row(0)[1] == doctest::Approx(1.0));
  CHECK(code_of([] { sparsify_subspace(Matrix::from_rows({{1, 1, 0}, {1, 1, 0}}), 2); }) == ErrorCode::RankDeficient);

  Rng rng(6);
  Matrix noisy(40, 3);
  for (std::size_t i = 0; i < 40; ++i) {
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    for (std::size_t j = 0; j < 3; ++j) noisy(i, j) = a * expected(0, j) + b * expected(1, j) + rng.uniform(-1e-4, 1e-4);
  }
  const Matrix ns = sparsify_subspace(noisy, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(ns(i, j) - expected(i, j)) < 1e-3);
}

TEST_CASE("filter solutions") {
  std::vector<DiscoveryResult> runs;
  runs.push_back(with_r2(0.5));
  runs.push_back(with_r2(0.99));
  runs.push_back(with_r2(0.97));
  CHECK(filter_solutions(runs, 0.9) == std::vector<std::size_t>{1, 2});
  CHECK(filter_solutions(runs, 1.01).empty());
  CHECK(filter_solutions(runs, 0.0) == std::vector<std::size_t>{1, 2, 0});
  CHECK(filter_solutions(runs, 0.0, 0.01) == std::vector<std::size_t>{1});
  CHECK(filter_solutions(runs, 0.0, 0.5) == std::vector<std::size_t>{1, 2, 0});
  std::vector<DiscoveryResult> perfect;
  perfect.push_back(with_r2(1.0));
  perfect.push_back(with_r2(1.0));
  CHECK(filter_solutions(perfect, 0.9).size() == 2);
}

TEST_CASE("cluster rows") {
  const Matrix pts = Matrix::from_rows({{1, 1, 0}, {1.05, 1, 0}, {0, 1, 0}, {1, 0.98, 0.01}});
  const std::vector<std::size_t> owners{0, 1, 2, 3};
  const auto c = cluster_rows(pts, owners);
  REQUIRE(c.size() == 2);
  CHECK(c[0].members.size() == 3);
  CHECK(c[1].members == std::vector<std::size_t>{2});
}

TEST_CASE("prepare training data") {
  const auto p = walkthrough_problem();
  const auto d = prepare_training_data(p.features, p.y, 0.8, 4);
  CHECK(d.x_train.rows() == 80);
  CHECK(d.x_test.rows() == 20);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < 80; ++i) m += d.x_train(i, j);
    CHECK(std::abs(m / 80) < 1e-12);
  }
  double m = 0.0, v = 0.0;
  for (double y : d.y_train) m += y;
  m /= 80;
  for (double y : d.y_train) v += (y - m) * (y - m);
  CHECK(std::abs(m) < 1e-12);
  CHECK(v / 80 == doctest::Approx(1.0));
}

TEST_CASE("training fits a constant output") {
  Rng rng(2);
  Matrix x(40, 3);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1, 1);
  const std::vector<double> y(40, 0.7);
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.lambda = 0.0;
  const auto data = prepare_training_data(x, y, 0.8, 1);
  const auto r = train(build_network(1, 3, 4, 10, 1), data, cfg);
  CHECK(r.loss_history.size() == 2000);
  CHECK(r.loss_history.back().prediction < 1e-6);
  const auto fitted = r.predict(x);
  for (auto row : data.train_rows) CHECK(fitted[row] == doctest::Approx(0.7).epsilon(2e-3));
  for (double p : fitted) CHECK(std::abs(p - 0.7) < 0.02);
}

TEST_CASE("training records loss components and honors the observer") {
  const auto p = walkthrough_problem();
  const auto data = prepare_training_data(p.features, p.y, 0.8, 0);
  TrainConfig cfg;
  cfg.epochs = 300;
  std::vector<std::size_t> seen;
  const auto r = train(build_network(1, 3, 4, 10, 0), data, cfg, [&](std::size_t epoch, const LossRecord&) {
    seen.push_back(epoch);
    return true;
  });
  REQUIRE(r.loss_history.size() == 300);
  for (const auto& l : r.loss_history) CHECK(l.total == doctest::Approx(l.prediction + cfg.lambda * l.quantization));
  CHECK(seen.front() == 0);
  CHECK(seen[1] == 50);
  CHECK(seen.back() == 299);
  CHECK(code_of([&] { train(build_network(1, 3, 4, 10, 0), data, cfg, [](std::size_t, const LossRecord&) { return false; }); }) ==
        ErrorCode::Cancelled);
}

TEST_CASE("walkthrough without regularization reaches r2 above 0.99") {
  const auto p = walkthrough_problem();
  TrainConfig cfg;
  cfg.lambda = 0.0;
  const auto r = train(build_network(1, 3, 4, 10, 0), prepare_training_data(p.features, p.y, 0.8, 0), cfg);
  REQUIRE(r.r2_test);
  CHECK(*r.r2_test > 0.99);
}

TEST_CASE("ensembles") {
  const auto p = walkthrough_problem();
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.ensemble_size = 1;
  cfg.r2_min = -1e9;
  const auto one = run_ensemble(p, cfg);
  CHECK(one.runs.size() == 1);
  CHECK(one.accepted.size() == 1);
  cfg.r2_min = 1.01;
  CHECK(run_ensemble(p, cfg).accepted.empty());

  cfg.ensemble_size = 4;
  cfg.r2_min = 0.0;
  EnsembleOptions threaded;
  threaded.threads = 3;
  std::atomic<int> finished{0};
  threaded.on_progress = [&](const RunProgress& rp) {
    if (rp.finished) ++finished;
  };
  const auto a = run_ensemble(p, cfg, threaded);
  const auto b = run_ensemble(p, cfg, EnsembleOptions{1, {}, {}});
  CHECK(finished == 4);
  REQUIRE(a.runs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.runs[i].seed == cfg.seed + i);
    CHECK(a.runs[i].gamma == b.runs[i].gamma);
    CHECK(a.runs[i].r2_test == b.runs[i].r2_test);
    REQUIRE(a.runs[i].truth_error);
  }
  const auto j = a.to_json();
  CHECK(j["runs"].size() == 4);

  std::stop_source stop;
  stop.request_stop();
  EnsembleOptions stopped;
  stopped.stop = stop.get_token();
  CHECK(code_of([&] { run_ensemble(p, cfg, stopped); }) == ErrorCode::Cancelled);
  cfg.k = 4;
  CHECK(code_of([&] { run_ensemble(p, cfg); }) == ErrorCode::BadArchitecture);
}

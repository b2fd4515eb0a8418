#include "pilaw/discovery.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "pilaw/dataset.hpp"
#include "pilaw/linalg.hpp"

namespace pilaw {

// --- quantization ----------------------------------------------------------

std::string to_string(TargetSet set) {
  switch (set) {
    case TargetSet::Integer: return "integer";
    case TargetSet::HalfInteger: return "half_integer";
    case TargetSet::QuarterInteger: return "quarter_integer";
  }
  return "half_integer";
}

TargetSet target_set_from_string(const std::string& name) {
  if (name == "integer") return TargetSet::Integer;
  if (name == "half_integer") return TargetSet::HalfInteger;
  if (name == "quarter_integer") return TargetSet::QuarterInteger;
  throw Error(ErrorCode::BadConfig, "unknown target set '" + name + "' (integer, half_integer, quarter_integer)");
}

namespace {

struct Grid {
  double step;
  double bound;
};

Grid grid_of(TargetSet set) {
  switch (set) {
    case TargetSet::Integer: return {1.0, 5.0};
    case TargetSet::HalfInteger: return {0.5, 3.0};
    case TargetSet::QuarterInteger: return {0.25, 3.0};
  }
  return {0.5, 3.0};
}

}  // namespace

std::vector<double> target_values(TargetSet set) {
  const auto g = grid_of(set);
  const auto n = static_cast<long>(std::lround(g.bound / g.step));
  std::vector<double> out;
  for (long i = -n; i <= n; ++i) out.push_back(static_cast<double>(i) * g.step);
  return out;
}

double nearest_target(double x, TargetSet set) {
  const auto g = grid_of(set);
  if (x <= -g.bound) return -g.bound;
  if (x >= g.bound) return g.bound;
  const double lower = std::floor(x / g.step) * g.step;
  const double upper = lower + g.step;
  return (upper - x) < (x - lower) ? upper : lower;
}

double quantization_loss(std::span<const double> gamma, TargetSet set) {
  double total = 0.0;
  for (double x : gamma) total += std::abs(x - nearest_target(x, set));
  return total;
}

double quantization_loss(const Matrix& gamma, TargetSet set) {
  return quantization_loss(std::span<const double>(gamma.data()), set);
}

double quantization_subgradient(double x, TargetSet set) {
  const double s = nearest_target(x, set);
  if (x > s) return 1.0;
  if (x < s) return -1.0;
  return 0.0;
}

// --- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::BadConfig, what); };
  if (k < 1) bad("k must be at least 1");
  if (!(std::isfinite(learning_rate) && learning_rate > 0.0)) bad("learning_rate must be positive");
  if (epochs < 1) bad("epochs must be at least 1");
  if (!(std::isfinite(lambda) && lambda >= 0.0)) bad("lambda must be non-negative");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) bad("train_fraction must lie strictly between 0 and 1");
  if (hidden_layers > 0 && width < 1) bad("width must be at least 1");
  if (ensemble_size < 1) bad("ensemble_size must be at least 1");
  if (!std::isfinite(r2_min)) bad("r2_min must be finite");
  if (r2_margin && !(std::isfinite(*r2_margin) && *r2_margin >= 0.0)) bad("r2_margin must be non-negative");
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig cfg) {
  if (!j.is_object()) throw Error(ErrorCode::BadConfig, "discovery config must be an object");
  static const std::set<std::string> known{"k",     "learning_rate", "epochs",         "lambda",
                                           "targets", "seed",        "train_fraction", "hidden_layers",
                                           "width", "ensemble_size", "r2_min", "r2_margin"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::BadConfig, "unknown discovery key '" + key + "'");
  }
  try {
    auto get_count = [&](const char* key, std::size_t& field) {
      if (!j.contains(key)) return;
      const auto& v = j.at(key);
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw Error(ErrorCode::BadConfig, std::string(key) + " must be a non-negative integer");
      }
      field = v.get<std::size_t>();
    };
    auto get_real = [&](const char* key, double& field) {
      if (!j.contains(key)) return;
      if (!j.at(key).is_number()) throw Error(ErrorCode::BadConfig, std::string(key) + " must be a number");
      field = j.at(key).get<double>();
    };
    get_count("k", cfg.k);
    get_real("learning_rate", cfg.learning_rate);
    get_count("epochs", cfg.epochs);
    get_real("lambda", cfg.lambda);
    if (j.contains("targets")) cfg.targets = target_set_from_string(j.at("targets").get<std::string>());
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) throw Error(ErrorCode::BadConfig, "seed must be a non-negative integer");
      cfg.seed = j.at("seed").get<std::uint64_t>();
    }
    get_real("train_fraction", cfg.train_fraction);
    get_count("hidden_layers", cfg.hidden_layers);
    get_count("width", cfg.width);
    get_count("ensemble_size", cfg.ensemble_size);
    get_real("r2_min", cfg.r2_min);
    if (j.contains("r2_margin")) {
      if (j.at("r2_margin").is_null()) {
        cfg.r2_margin.reset();
      } else {
        double m = 0.0;
        get_real("r2_margin", m);
        cfg.r2_margin = m;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("discovery config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"k", k},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"lambda", lambda},
          {"targets", to_string(targets)},
          {"seed", seed},
          {"train_fraction", train_fraction},
          {"hidden_layers", hidden_layers},
          {"width", width},
          {"ensemble_size", ensemble_size},
          {"r2_min", r2_min},
          {"r2_margin", r2_margin ? nlohmann::json(*r2_margin) : nlohmann::json()}};
}

// --- training ------------------------------------------------------------------

TrainingData prepare_training_data(const Matrix& features, std::span<const double> y, double train_fraction,
                                   std::uint64_t seed) {
  if (features.rows() != y.size()) {
    throw Error(ErrorCode::LengthMismatch, "features have " + std::to_string(features.rows()) + " rows, output has " +
                                               std::to_string(y.size()));
  }
  const auto idx = split_indices(features.rows(), train_fraction, seed);
  const std::size_t n = features.cols();
  TrainingData d;
  d.train_rows = idx.train;
  d.test_rows = idx.test;
  d.x_mean.assign(n, 0.0);
  for (auto r : idx.train)
    for (std::size_t c = 0; c < n; ++c) d.x_mean[c] += features(r, c);
  for (auto& m : d.x_mean) m /= static_cast<double>(idx.train.size());

  double mean = 0.0;
  for (auto r : idx.train) mean += y[r];
  mean /= static_cast<double>(idx.train.size());
  double var = 0.0;
  for (auto r : idx.train) var += (y[r] - mean) * (y[r] - mean);
  var /= static_cast<double>(idx.train.size());
  d.y_mean = mean;
  d.y_scale = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;

  auto fill = [&](const std::vector<std::size_t>& rows, Matrix& x, std::vector<double>& out) {
    x = Matrix(rows.size(), n);
    out.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < n; ++c) x(i, c) = features(rows[i], c) - d.x_mean[c];
      out[i] = (y[rows[i]] - d.y_mean) / d.y_scale;
    }
  };
  fill(idx.train, d.x_train, d.y_train);
  fill(idx.test, d.x_test, d.y_test);
  return d;
}

namespace {

std::optional<double> try_r2(const Network& net, const Matrix& x, const std::vector<double>& y) {
  if (y.size() < 2) return std::nullopt;
  try {
    return r_squared(net.predict(x), y);
  } catch (const Error&) {
    return std::nullopt;
  }
}

Matrix normalized_rows(const Matrix& gamma) {
  Matrix out(gamma.rows(), gamma.cols());
  for (std::size_t j = 0; j < gamma.rows(); ++j) {
    try {
      const auto row = normalize_gamma(gamma.row(j));
      std::copy(row.begin(), row.end(), out.row(j).begin());
    } catch (const Error&) {
      // near-zero row: leave zeros
    }
  }
  return out;
}

}  // namespace

DiscoveryResult train(Network net, const TrainingData& data, const TrainConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  const auto& arch = net.architecture();
  if (data.x_train.cols() != arch.basis) {
    throw Error(ErrorCode::BadArchitecture, "network expects " + std::to_string(arch.basis) + " features, data has " +
                                                std::to_string(data.x_train.cols()));
  }
  if (data.x_train.rows() == 0) throw Error(ErrorCode::TooFewSamples, "no training rows");

  auto params = net.params();
  const std::size_t p = params.size();
  const std::size_t ng = net.gamma_size();
  std::vector<double> grad(p), m(p, 0.0), v(p, 0.0);
  GradientEvaluator evaluator(arch);

  DiscoveryResult result{.gamma = {}, .gamma_normalized = {}, .r2_train = {}, .r2_test = {}, .loss_history = {},
                         .seed = cfg.seed, .network = net, .x_mean = data.x_mean, .y_mean = data.y_mean,
                         .y_scale = data.y_scale, .truth_error = {}};
  result.loss_history.reserve(cfg.epochs);

  double b1t = 1.0, b2t = 1.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double mse = evaluator.evaluate(net, data.x_train, data.y_train, grad);
    const auto gamma_span = std::span<const double>(params.data(), ng);
    const double quant = quantization_loss(gamma_span, cfg.targets);
    const LossRecord rec{mse + cfg.lambda * quant, mse, quant};
    if (!std::isfinite(rec.total)) {
      throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(rec);
    if (observer && (epoch % kLossDecimation == 0 || epoch + 1 == cfg.epochs) && !observer(epoch, rec)) {
      throw Error(ErrorCode::Cancelled, "training stopped at epoch " + std::to_string(epoch));
    }
    if (cfg.lambda > 0.0) {
      for (std::size_t i = 0; i < ng; ++i) grad[i] += cfg.lambda * quantization_subgradient(params[i], cfg.targets);
    }
    b1t *= kAdamBeta1;
    b2t *= kAdamBeta2;
    const double step = cfg.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    for (std::size_t i = 0; i < p; ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
      params[i] -= step * m[i] / (std::sqrt(v[i]) + kAdamEpsilon * std::sqrt(1.0 - b2t));
    }
  }
  for (double x : params) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteLoss, "parameters became non-finite after training");
  }

  result.network = net;
  result.gamma = net.gamma();
  result.gamma_normalized = normalized_rows(result.gamma);
  result.r2_train = try_r2(net, data.x_train, data.y_train);
  result.r2_test = try_r2(net, data.x_test, data.y_test);
  return result;
}

std::vector<double> DiscoveryResult::predict(const Matrix& features) const {
  std::vector<double> out(features.rows());
  std::vector<double> row(x_mean.size());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = features(r, c) - x_mean[c];
    out[r] = network.predict(row) * y_scale + y_mean;
  }
  return out;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(); }

}  // namespace

nlohmann::json DiscoveryResult::to_json(bool include_network) const {
  nlohmann::json history = nlohmann::json::array();
  for (std::size_t e = 0; e < loss_history.size(); ++e) {
    if (e % kLossDecimation != 0 && e + 1 != loss_history.size()) continue;
    const auto& l = loss_history[e];
    history.push_back({{"epoch", e}, {"total", l.total}, {"prediction", l.prediction}, {"quantization", l.quantization}});
  }
  nlohmann::json j{{"seed", seed},
                   {"gamma", gamma.to_rows()},
                   {"gamma_normalized", gamma_normalized.to_rows()},
                   {"r2_train", optional_json(r2_train)},
                   {"r2_test", optional_json(r2_test)},
                   {"truth_error", optional_json(truth_error)},
                   {"epochs", loss_history.size()},
                   {"loss_history", history},
                   {"standardization", {{"x_mean", x_mean}, {"y_mean", y_mean}, {"y_scale", y_scale}}}};
  if (include_network) j["network"] = network.to_json();
  return j;
}

// --- metrics -------------------------------------------------------------------

double r_squared(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw Error(ErrorCode::LengthMismatch, "r_squared lengths differ");
  if (actual.size() < 2) throw Error(ErrorCode::ConstantActual, "r_squared needs at least two values");
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
    ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
  }
  if (ss_tot <= 0.0) throw Error(ErrorCode::ConstantActual, "actual values are constant");
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> normalize_gamma(std::span<const double> row) {
  constexpr double eps = 1e-6;
  const auto pivot = std::find_if(row.begin(), row.end(), [](double x) { return std::abs(x) > eps; });
  if (pivot == row.end()) throw Error(ErrorCode::AllNearZero, "every gamma component is below 1e-6");
  const double scale = *pivot;
  const auto at = static_cast<std::size_t>(pivot - row.begin());
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double x = row[i] / scale;
    out[i] = std::abs(x) < eps ? 0.0 : x;
  }
  out[at] = 1.0;
  return out;
}

double relative_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "relative_error lengths differ");
  const double nu = linalg::norm(estimate);
  const double nv = linalg::norm(truth);
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::ZeroVector, "relative_error of a zero vector");
  double minus = 0.0, plus = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double u = estimate[i] / nu, v = truth[i] / nv;
    minus += (u - v) * (u - v);
    plus += (u + v) * (u + v);
  }
  return std::sqrt(std::min(minus, plus));
}

std::vector<double> subspace_residual(const Matrix& rows, const Matrix& reference) {
  if (rows.cols() != reference.cols()) throw Error(ErrorCode::LengthMismatch, "subspace_residual widths differ");
  const Matrix q = linalg::orthonormal_rows(reference);
  std::vector<double> out;
  out.reserve(rows.rows());
  std::vector<double> r(rows.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto g = rows.row(i);
    const double ng = linalg::norm(g);
    if (ng == 0.0) throw Error(ErrorCode::ZeroVector, "subspace_residual of a zero row");
    std::copy(g.begin(), g.end(), r.begin());
    for (std::size_t b = 0; b < q.rows(); ++b) {
      const double c = linalg::dot(q.row(b), g);
      for (std::size_t t = 0; t < r.size(); ++t) r[t] -= c * q(b, t);
    }
    out.push_back(linalg::norm(r) / ng);
  }
  return out;
}

Matrix sparsify_subspace(const Matrix& rows, std::size_t k) {
  const std::size_t n = rows.cols();
  if (k < 1 || k > n || k > rows.rows()) {
    throw Error(ErrorCode::RankDeficient, "cannot extract " + std::to_string(k) + " directions from " +
                                              std::to_string(rows.rows()) + " rows of width " + std::to_string(n));
  }
  Matrix gram(n, n);
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) gram(a, b) += rows(r, a) * rows(r, b);
  const auto eig = linalg::jacobi_eigen(gram);
  const double s1 = std::sqrt(std::max(eig.values[0], 0.0));
  const double sk = std::sqrt(std::max(eig.values[k - 1], 0.0));
  if (!(s1 > 0.0) || sk / s1 <= 1e-6) {
    throw Error(ErrorCode::RankDeficient, "rows span fewer than " + std::to_string(k) + " directions");
  }
  Matrix top(k, n);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < n; ++c) top(j, c) = eig.vectors(c, j);
  if (k == 1) {
    const auto row = normalize_gamma(top.row(0));
    std::copy(row.begin(), row.end(), top.row(0).begin());
    return top;
  }
  return linalg::rref(top);
}

std::vector<std::size_t> filter_solutions(std::span<const DiscoveryResult> runs, double r2_min,
                                          std::optional<double> margin) {
  double floor = r2_min;
  if (margin) {
    for (const auto& r : runs)
      if (r.r2_test) floor = std::max(floor, *r.r2_test - *margin);
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].r2_test && *runs[i].r2_test >= floor) out.push_back(i);
  std::stable_sort(out.begin(), out.end(), [&](auto a, auto b) { return *runs[a].r2_test > *runs[b].r2_test; });
  return out;
}

// --- ensembles -------------------------------------------------------------------

std::vector<Cluster> cluster_rows(const Matrix& points, std::span<const std::size_t> owners, double radius) {
  if (owners.size() != points.rows()) throw Error(ErrorCode::LengthMismatch, "one owner per point required");
  struct Acc {
    std::vector<double> sum;
    Cluster cluster;
  };
  std::vector<Acc> acc;
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const auto p = points.row(r);
    Acc* home = nullptr;
    for (auto& a : acc) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) d2 += (p[c] - a.cluster.centroid[c]) * (p[c] - a.cluster.centroid[c]);
      if (std::sqrt(d2) <= radius) {
        home = &a;
        break;
      }
    }
    if (!home) {
      acc.push_back({std::vector<double>(p.size(), 0.0), {std::vector<double>(p.size(), 0.0), {}}});
      home = &acc.back();
    }
    home->cluster.members.push_back(owners[r]);
    const auto count = static_cast<double>(home->cluster.members.size());
    for (std::size_t c = 0; c < p.size(); ++c) {
      home->sum[c] += p[c];
      home->cluster.centroid[c] = home->sum[c] / count;
    }
  }
  std::vector<Cluster> out;
  for (auto& a : acc) out.push_back(std::move(a.cluster));
  std::stable_sort(out.begin(), out.end(), [](const Cluster& a, const Cluster& b) {
    return a.members.size() > b.members.size();
  });
  return out;
}

const DiscoveryResult* EnsembleResult::best() const {
  if (!accepted.empty()) return &runs[accepted.front()];
  const DiscoveryResult* best = nullptr;
  for (const auto& r : runs) {
    if (r.r2_test && (!best || !best->r2_test || *r.r2_test > *best->r2_test)) best = &r;
  }
  return best ? best : (runs.empty() ? nullptr : &runs.front());
}

nlohmann::json EnsembleResult::to_json() const {
  nlohmann::json runs_json = nlohmann::json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto j = runs[i].to_json();
    j["run"] = run_index[i];
    j["accepted"] = std::find(accepted.begin(), accepted.end(), i) != accepted.end();
    runs_json.push_back(std::move(j));
  }
  nlohmann::json failures_json = nlohmann::json::array();
  for (const auto& f : failures) {
    failures_json.push_back({{"run", f.run}, {"seed", f.seed}, {"code", to_string(f.code)}, {"message", f.message}});
  }
  nlohmann::json clusters_json = nlohmann::json::array();
  for (const auto& c : clusters) {
    std::vector<std::size_t> members;
    for (auto m : c.members) members.push_back(run_index[m]);
    clusters_json.push_back({{"centroid", c.centroid}, {"count", c.members.size()}, {"runs", members}});
  }
  nlohmann::json accepted_runs = nlohmann::json::array();
  for (auto a : accepted) accepted_runs.push_back(run_index[a]);
  const auto* b = best();
  return {{"config", config.to_json()},
          {"runs", runs_json},
          {"failures", failures_json},
          {"accepted", accepted_runs},
          {"best_run", b ? nlohmann::json(run_index[static_cast<std::size_t>(b - runs.data())]) : nlohmann::json()},
          {"clusters", clusters_json},
          {"subspace", subspace ? nlohmann::json(subspace->to_rows()) : nlohmann::json()}};
}

namespace {

std::optional<double> truth_error(const Matrix& gamma, const Matrix& truth) {
  if (truth.rows() == 0) return std::nullopt;
  try {
    if (gamma.rows() == 1 && truth.rows() == 1) return relative_error(gamma.row(0), truth.row(0));
    const auto res = subspace_residual(gamma, truth);
    return *std::max_element(res.begin(), res.end());
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

EnsembleResult run_ensemble(const DiscoveryProblem& problem, const TrainConfig& cfg, const EnsembleOptions& options) {
  cfg.validate();
  if (problem.features.rows() != problem.y.size()) {
    throw Error(ErrorCode::LengthMismatch, "features and output lengths differ");
  }
  if (problem.truth.rows() > 0 && problem.truth.cols() != problem.features.cols()) {
    throw Error(ErrorCode::LengthMismatch, "truth gamma width differs from feature count");
  }
  const std::size_t n = problem.features.cols();
  if (cfg.k > n) {
    throw Error(ErrorCode::BadArchitecture, "k=" + std::to_string(cfg.k) + " exceeds the " + std::to_string(n) +
                                                " available basis features");
  }

  const std::size_t runs = cfg.ensemble_size;
  std::vector<std::optional<DiscoveryResult>> slots(runs);
  std::vector<std::optional<RunFailure>> failed(runs);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < runs; i = next++) {
      const std::uint64_t seed = cfg.seed + i;
      TrainConfig run_cfg = cfg;
      run_cfg.seed = seed;
      try {
        if (options.stop.stop_requested()) throw Error(ErrorCode::Cancelled, "ensemble cancelled");
        const auto data = prepare_training_data(problem.features, problem.y, cfg.train_fraction, seed);
        auto net = build_network(cfg.k, n, cfg.hidden_layers, cfg.width, seed);
        auto observe = [&](std::size_t epoch, const LossRecord& loss) {
          if (options.on_progress) options.on_progress({i, epoch + 1, cfg.epochs, loss.total, false, false, {}});
          return !options.stop.stop_requested();
        };
        auto result = train(std::move(net), data, run_cfg, observe);
        result.truth_error = truth_error(result.gamma, problem.truth);
        if (options.on_progress) {
          options.on_progress({i, cfg.epochs, cfg.epochs, result.loss_history.back().total, true, false,
                               result.r2_test});
        }
        slots[i] = std::move(result);
      } catch (const Error& e) {
        failed[i] = RunFailure{i, seed, e.code(), e.what()};
        if (options.on_progress) options.on_progress({i, 0, cfg.epochs, 0.0, true, true, {}});
      }
    }
  };

  std::size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, runs);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (options.stop.stop_requested()) throw Error(ErrorCode::Cancelled, "ensemble cancelled");

  EnsembleResult out;
  out.config = cfg;
  for (std::size_t i = 0; i < runs; ++i) {
    if (slots[i]) {
      out.runs.push_back(std::move(*slots[i]));
      out.run_index.push_back(i);
    } else if (failed[i]) {
      out.failures.push_back(std::move(*failed[i]));
    }
  }
  out.accepted = filter_solutions(out.runs, cfg.r2_min, cfg.r2_margin);

  std::vector<std::vector<double>> points;
  std::vector<std::size_t> owners;
  for (auto a : out.accepted) {
    for (std::size_t j = 0; j < out.runs[a].gamma_normalized.rows(); ++j) {
      const auto row = out.runs[a].gamma_normalized.row(j);
      if (std::all_of(row.begin(), row.end(), [](double x) { return x == 0.0; })) continue;
      points.emplace_back(row.begin(), row.end());
      owners.push_back(a);
    }
  }
  if (!points.empty()) out.clusters = cluster_rows(Matrix::from_rows(points), owners);

  if (cfg.k >= 2 && !out.accepted.empty()) {
    std::vector<std::vector<double>> unit;
    for (auto a : out.accepted) {
      const auto& g = out.runs[a].gamma;
      for (std::size_t j = 0; j < g.rows(); ++j) {
        const double nr = linalg::norm(g.row(j));
        if (nr <= 1e-12) continue;
        std::vector<double> row(g.row(j).begin(), g.row(j).end());
        for (auto& x : row) x /= nr;
        unit.push_back(std::move(row));
      }
    }
    try {
      if (!unit.empty()) out.subspace = sparsify_subspace(Matrix::from_rows(unit), cfg.k);
    } catch (const Error&) {
      out.subspace.reset();
    }
  }
  return out;
}

}  // namespace pilaw

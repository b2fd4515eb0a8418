#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "json.hpp"
#include "pilaw/error.hpp"
#include "pilaw/matrix.hpp"
#include "pilaw/network.hpp"

namespace pilaw {

// --- quantization ----------------------------------------------------------

enum class TargetSet { Integer, HalfInteger, QuarterInteger };

std::string to_string(TargetSet set);
TargetSet target_set_from_string(const std::string& name);

/// Target values, ascending. Integers span [-5, 5]; half and quarter steps span [-3, 3].
std::vector<double> target_values(TargetSet set);

/// Nearest target to x; ties resolve to the lower target.
double nearest_target(double x, TargetSet set);

/// sum_ji min_s |gamma_ji - s|, unweighted.
double quantization_loss(std::span<const double> gamma, TargetSet set);
double quantization_loss(const Matrix& gamma, TargetSet set);

/// sign(x - nearest_target(x)); 0 exactly on a target, +1 at a tie.
double quantization_subgradient(double x, TargetSet set);

// --- training --------------------------------------------------------------

struct TrainConfig {
  std::size_t k = 1;
  double learning_rate = 5e-4;
  std::size_t epochs = 10000;
  double lambda = 0.02;
  TargetSet targets = TargetSet::HalfInteger;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::size_t hidden_layers = 4;
  std::size_t width = 10;
  std::size_t ensemble_size = 20;
  double r2_min = 0.9;
  /// When set, a run is also rejected if its r2_test trails the ensemble's best by more than this.
  std::optional<double> r2_margin;

  /// Throws BadConfig on out-of-range values.
  void validate() const;

  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
  [[nodiscard]] nlohmann::json to_json() const;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;
inline constexpr std::size_t kLossDecimation = 50;

/// Split and scaled inputs for one training run. Features are centered with
/// the training means; the output is standardized with training mean and std.
struct TrainingData {
  Matrix x_train;
  Matrix x_test;
  std::vector<double> y_train;
  std::vector<double> y_test;
  std::vector<double> x_mean;
  double y_mean = 0.0;
  double y_scale = 1.0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

TrainingData prepare_training_data(const Matrix& features, std::span<const double> y, double train_fraction,
                                   std::uint64_t seed);

struct LossRecord {
  double total = 0.0;
  double prediction = 0.0;
  double quantization = 0.0;
};

struct DiscoveryResult {
  Matrix gamma;             // k x (N - r)
  Matrix gamma_normalized;  // rows pivoted to a leading 1; all-zero rows stay zero
  std::optional<double> r2_train;
  std::optional<double> r2_test;
  std::vector<LossRecord> loss_history;  // one entry per epoch
  std::uint64_t seed = 0;
  Network network;
  std::vector<double> x_mean;
  double y_mean = 0.0;
  double y_scale = 1.0;
  std::optional<double> truth_error;  // relative error (k = 1) or worst plane residual (k >= 2)

  /// Network prediction in the original output units for raw feature rows.
  [[nodiscard]] std::vector<double> predict(const Matrix& features) const;

  [[nodiscard]] nlohmann::json to_json(bool include_network = true) const;
};

/// Called every kLossDecimation epochs and at the end; return false to stop.
using EpochObserver = std::function<bool(std::size_t epoch, const LossRecord& loss)>;

/// Full-batch Adam on MSE + lambda * quantization loss.
DiscoveryResult train(Network net, const TrainingData& data, const TrainConfig& cfg,
                      const EpochObserver& observer = {});

// --- metrics and post-processing --------------------------------------------

/// 1 - SS_res / SS_tot. ConstantActual when the actual values do not vary.
double r_squared(std::span<const double> predicted, std::span<const double> actual);

/// Divides by the first component with |x| > 1e-6 and clears entries below 1e-6.
std::vector<double> normalize_gamma(std::span<const double> row);

/// min(|u - v|, |u + v|) over unit vectors: scale and sign invariant, in [0, sqrt 2].
double relative_error(std::span<const double> estimate, std::span<const double> truth);

/// |g - P g| / |g| per row of `rows`, P projecting onto the span of `reference`.
std::vector<double> subspace_residual(const Matrix& rows, const Matrix& reference);

/// Top-k right singular directions of the stacked rows in reduced row echelon form.
Matrix sparsify_subspace(const Matrix& rows, std::size_t k);

/// Indices of runs with r2_test >= r2_min (and within `margin` of the best r2_test), best first.
std::vector<std::size_t> filter_solutions(std::span<const DiscoveryResult> runs, double r2_min,
                                          std::optional<double> margin = std::nullopt);

// --- ensembles ---------------------------------------------------------------

struct DiscoveryProblem {
  Matrix features;  // samples x (N - r) log-pi features
  std::vector<double> y;
  Matrix truth;  // optional ground-truth gamma rows (k x (N - r)); empty if unknown
};

struct RunProgress {
  std::size_t run = 0;
  std::size_t epoch = 0;
  std::size_t epochs = 0;
  double loss = 0.0;
  bool finished = false;
  bool failed = false;
  std::optional<double> r2_test;
};

struct EnsembleOptions {
  std::size_t threads = 0;  // 0: hardware concurrency
  std::function<void(const RunProgress&)> on_progress;  // invoked from worker threads
  std::stop_token stop;
};

struct RunFailure {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  ErrorCode code = ErrorCode::BadConfig;
  std::string message;
};

struct Cluster {
  std::vector<double> centroid;
  std::vector<std::size_t> members;  // run indices
};

inline constexpr double kClusterRadius = 0.15;

/// Greedy centroid clustering: a point joins the first cluster whose centroid
/// lies within `radius`, else starts a new one. Sorted by size, largest first.
std::vector<Cluster> cluster_rows(const Matrix& points, std::span<const std::size_t> owners,
                                  double radius = kClusterRadius);

struct EnsembleResult {
  TrainConfig config;
  std::vector<DiscoveryResult> runs;   // successful runs, in seed order
  std::vector<std::size_t> run_index;  // ensemble position of each successful run
  std::vector<RunFailure> failures;
  std::vector<std::size_t> accepted;   // indices into runs, best r2_test first
  std::vector<Cluster> clusters;       // over the normalized gamma rows of accepted runs
  std::optional<Matrix> subspace;      // sparsified accepted rows, k >= 2 only

  [[nodiscard]] const DiscoveryResult* best() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Trains cfg.ensemble_size runs with seeds cfg.seed + i, each on its own split.
EnsembleResult run_ensemble(const DiscoveryProblem& problem, const TrainConfig& cfg,
                            const EnsembleOptions& options = {});

}  // namespace pilaw

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pilaw/dimension.hpp"
#include "pilaw/matrix.hpp"

namespace pilaw {

/// M samples of N strictly positive inputs plus one output column.
struct Dataset {
  Matrix inputs;  // samples x vars
  std::vector<double> output;
  std::vector<std::string> var_names;
  std::string output_name = "p_star";
  bool normalized = false;
  std::vector<double> max_values;  // inputs then output; filled by normalize_max

  [[nodiscard]] std::size_t sample_count() const noexcept { return inputs.rows(); }
  [[nodiscard]] std::size_t var_count() const noexcept { return inputs.cols(); }

  /// Throws on shape mismatches, missing values, or nonpositive inputs.
  void validate() const;

  /// Subset of rows, in the order given.
  [[nodiscard]] Dataset select(std::span<const std::size_t> rows) const;
};

/// Header row plus numeric cells; errors cite 1-based file rows and columns.
struct Table {
  std::vector<std::string> columns;
  Matrix values;

  /// Throws MissingOutputColumn when absent.
  [[nodiscard]] std::size_t column_index(const std::string& name) const;
};

/// `allow_nan` accepts the literal "nan" for missing values.
Table parse_table(std::string_view text, bool allow_nan = false);
/// Missing values (NaN) are written as "nan".
std::string to_csv(const Table& table);

Dataset parse_csv(std::string_view text, const std::string& output_column);
Dataset load_csv(const std::filesystem::path& path, const std::string& output_column);
std::string to_csv(const Dataset& data);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Divides every input column and the output by its maximum.
Dataset normalize_max(const Dataset& data);

inline PiFeatures log_pi_features(const Dataset& data, const BasisSet& basis, LogBase base = LogBase::Natural) {
  return log_pi_features(data.inputs, data.var_names, basis, base);
}

enum class NoiseModel { None, MultiplicativeUniform, AdditiveGaussian };
enum class NoiseTarget { Output, Inputs, Both };

struct NoiseSpec {
  NoiseModel model = NoiseModel::None;
  double level = 0.0;
  NoiseTarget target = NoiseTarget::Output;

  static NoiseSpec from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Closed family of scaling laws. A term evaluates on one group, chosen by
/// `group` when set. Inside a sum with several groups available, an unset
/// `group` means the term's position; otherwise it means the first group.
struct ScalingLaw {
  enum class Form { Poly, Exp, Pow, Sum };

  Form form = Form::Poly;
  std::vector<double> coeffs;  // Poly: sum_i coeffs[i] * pi^i
  double a = 1.0;              // Exp: a * exp(b * pi)
  double b = 1.0;
  double c = 1.0;              // Pow: pi^c
  std::optional<std::size_t> group;  // 0-based
  std::vector<ScalingLaw> terms;     // Sum

  [[nodiscard]] double evaluate(std::span<const double> pis) const;
  /// Largest group index referenced plus one, given `available` groups.
  [[nodiscard]] std::size_t groups_used(std::size_t available) const;

  static ScalingLaw from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;

 private:
  [[nodiscard]] double evaluate_term(std::span<const double> pis, std::size_t default_group) const;
};

struct SyntheticSpec {
  DimensionMatrix dimension_matrix;
  std::vector<std::vector<double>> gammas;  // k rows x nullity
  ScalingLaw law;
  std::size_t sample_count = 100;
  double low = 0.5;
  double high = 1.0;
  std::optional<std::size_t> discrete_levels;  // unset: continuous sampling
  NoiseSpec noise;
  std::uint64_t seed = 0;
  std::string output_name = "p_star";

  static SyntheticSpec from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
};

struct SyntheticCase {
  Dataset data;
  BasisSet basis;
  std::vector<std::vector<double>> gammas;
};

/// RNG stream ids used while generating (see Rng for the splitting rule).
inline constexpr std::uint64_t kStreamColumnBase = 0;      // + column index
inline constexpr std::uint64_t kStreamLevels = 1u << 20;
inline constexpr std::uint64_t kStreamNoise = 1u << 21;
inline constexpr std::uint64_t kStreamSplit = 1u << 22;

SyntheticCase generate_synthetic(const SyntheticSpec& spec);

/// Seeded noise; level 0 or model None returns the data unchanged.
Dataset apply_noise(const Dataset& data, const NoiseSpec& spec, std::uint64_t seed);

/// `levels_per_var` distinct values per variable, uniform on [low, high).
std::vector<std::vector<double>> discrete_levels(std::size_t n_vars, std::size_t levels_per_var, double low,
                                                 double high, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded permutation split: round(M * f) training rows, the rest test rows.
SplitIndices split_indices(std::size_t sample_count, double train_fraction, std::uint64_t seed);

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed);

}  // namespace pilaw

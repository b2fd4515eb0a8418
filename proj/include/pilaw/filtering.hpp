#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pilaw/matrix.hpp"

namespace pilaw {

struct Standardized {
  Matrix values;                     // kept columns only
  std::vector<double> means;         // per original column
  std::vector<double> stds;          // per original column, denominator M-1
  std::vector<std::size_t> kept;     // original indices of the kept columns
  std::vector<std::string> warnings;
};

/// Zero mean, unit variance per column. Columns with std <= 1e-12 are dropped
/// with a warning; DegenerateData when nothing is left.
Standardized standardize(const Matrix& x);

enum class FilterMethod { PCA, SIR };

struct FilterReport {
  FilterMethod method = FilterMethod::PCA;
  std::vector<double> eigenvalues;  // descending
  std::vector<double> ratios;       // explained-variance ratios, sum to 1
  Matrix directions;                // column j pairs with eigenvalues[j]
  std::size_t suggested_k = 1;
  double threshold = 0.75;
  std::vector<std::size_t> kept_columns;
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::json to_json() const;
  static FilterReport from_json(const nlohmann::json& j);
};

std::string to_string(FilterMethod method);

/// Smallest j (1-based) whose cumulative ratio reaches the threshold.
std::size_t estimate_k(std::span<const double> ratios, double threshold);
std::size_t estimate_k(const FilterReport& report);

/// Same eigen-decomposition, new threshold.
FilterReport with_threshold(FilterReport report, double threshold);

inline constexpr double kDefaultThreshold = 0.75;

FilterReport pca_report(const Matrix& x, double threshold = kDefaultThreshold);

/// [features | y] as one matrix, the layout the PCA filter consumes.
Matrix append_column(const Matrix& x, std::span<const double> y);

struct SirConfig {
  std::optional<std::size_t> slices;  // unset: min(10, M / 5)
  double threshold = kDefaultThreshold;

  [[nodiscard]] std::size_t slice_count(std::size_t samples) const;
};

/// Contiguous slice sizes for M samples in H slices; sizes differ by at most one.
std::vector<std::size_t> slice_sizes(std::size_t samples, std::size_t slices);

FilterReport sir_report(const Matrix& x, std::span<const double> y, const SirConfig& config = {});

}  // namespace pilaw

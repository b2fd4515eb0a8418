#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pilaw/matrix.hpp"

namespace pilaw {

using Rational = boost::multiprecision::cpp_rational;

/// Integer exponent matrix: rows are fundamental dimensions, columns are the
/// input variables.
class DimensionMatrix {
 public:
  DimensionMatrix(std::vector<std::string> dim_names, std::vector<std::string> var_names,
                  std::vector<std::vector<int>> entries);

  static DimensionMatrix from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;

  [[nodiscard]] std::size_t dim_count() const noexcept { return dim_names_.size(); }
  [[nodiscard]] std::size_t var_count() const noexcept { return var_names_.size(); }
  [[nodiscard]] int operator()(std::size_t dim, std::size_t var) const { return entries_[dim][var]; }
  [[nodiscard]] const std::vector<std::string>& dim_names() const noexcept { return dim_names_; }
  [[nodiscard]] const std::vector<std::string>& var_names() const noexcept { return var_names_; }
  [[nodiscard]] const std::vector<std::vector<int>>& entries() const noexcept { return entries_; }

  /// D·w in exact integer arithmetic.
  [[nodiscard]] std::vector<std::int64_t> apply(std::span<const std::int64_t> w) const;

  friend bool operator==(const DimensionMatrix&, const DimensionMatrix&) = default;

 private:
  std::vector<std::string> dim_names_;
  std::vector<std::string> var_names_;
  std::vector<std::vector<int>> entries_;
};

/// Rank by exact rational Gauss-Jordan elimination.
std::size_t rank(const DimensionMatrix& d);

/// Clears denominators with their LCM, divides out the GCD, and flips the sign
/// so the first nonzero component is positive.
std::vector<std::int64_t> primitivize(std::span<const Rational> v);

struct BasisVector {
  std::vector<std::int64_t> integer_form;  // primitive, first nonzero positive
  std::vector<double> unit_form;           // integer_form / ||integer_form||
  std::size_t index = 0;
};

class BasisSet {
 public:
  /// Validates D·w = 0 and linear independence; primitivizes each vector.
  static BasisSet from_integer_vectors(const DimensionMatrix& source,
                                       const std::vector<std::vector<std::int64_t>>& vectors);

  [[nodiscard]] std::size_t nullity() const noexcept { return vectors_.size(); }
  [[nodiscard]] std::size_t var_count() const noexcept { return source_.var_count(); }
  [[nodiscard]] const std::vector<BasisVector>& vectors() const noexcept { return vectors_; }
  [[nodiscard]] const DimensionMatrix& source() const noexcept { return source_; }
  /// Unit-form vectors stacked as rows (nullity x N).
  [[nodiscard]] Matrix unit_matrix() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static BasisSet from_json(const nlohmann::json& j);

 private:
  BasisSet(DimensionMatrix source, std::vector<BasisVector> vectors)
      : source_(std::move(source)), vectors_(std::move(vectors)) {}

  DimensionMatrix source_;
  std::vector<BasisVector> vectors_;
};

/// Null space from the rational RREF: one vector per free column, in column
/// order. Throws NoNullSpace when D has full column rank.
BasisSet nullspace_basis(const DimensionMatrix& d);

/// w = sum_i gamma_i * unit_form_i.
std::vector<double> combine_gamma(const BasisSet& basis, std::span<const double> gamma);

enum class LogBase { Natural, Ten };

/// Per-sample log dimensionless groups: entry (i, j) = sum_l w_jl * log p_il.
struct PiFeatures {
  Matrix values;  // samples x groups
  std::vector<std::string> names;
  LogBase base = LogBase::Natural;

  [[nodiscard]] std::size_t sample_count() const noexcept { return values.rows(); }
  [[nodiscard]] std::size_t group_count() const noexcept { return values.cols(); }
};

/// Log power products of `inputs` (samples x vars) for each weight row.
/// Throws NonPositiveInput naming the variable and row of the first bad value.
Matrix log_power_products(const Matrix& inputs, std::span<const std::string> var_names,
                          const Matrix& weights, LogBase base = LogBase::Natural);

PiFeatures log_pi_features(const Matrix& inputs, std::span<const std::string> var_names,
                           const BasisSet& basis, LogBase base = LogBase::Natural);

/// "p1^0.524 * p2^0.435" over the nonzero exponents; exponents use the
/// shortest text that round-trips. An all-zero vector renders as "1".
std::string power_product_expression(std::span<const double> exponents,
                                     std::span<const std::string> var_names);

/// Inverse of power_product_expression.
std::vector<double> parse_power_product(const std::string& expression,
                                        std::span<const std::string> var_names);

}  // namespace pilaw

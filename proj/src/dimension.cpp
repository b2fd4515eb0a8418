#include "pilaw/dimension.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "pilaw/error.hpp"
#include "pilaw/hash.hpp"

namespace pilaw {

using boost::multiprecision::cpp_int;
using RationalMatrix = std::vector<std::vector<Rational>>;

namespace {

/// Gauss-Jordan to reduced row echelon form; returns the pivot columns.
std::vector<std::size_t> reduce_rows(RationalMatrix& m) {
  std::vector<std::size_t> pivots;
  if (m.empty()) return pivots;
  const std::size_t rows = m.size();
  const std::size_t cols = m.front().size();
  std::size_t lead = 0;
  for (std::size_t col = 0; col < cols && lead < rows; ++col) {
    std::size_t found = lead;
    while (found < rows && m[found][col] == 0) ++found;
    if (found == rows) continue;
    std::swap(m[found], m[lead]);
    const Rational pivot = m[lead][col];
    for (auto& x : m[lead]) x /= pivot;
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == lead || m[r][col] == 0) continue;
      const Rational factor = m[r][col];
      for (std::size_t c = col; c < cols; ++c) m[r][c] -= factor * m[lead][c];
    }
    pivots.push_back(col);
    ++lead;
  }
  return pivots;
}

RationalMatrix to_rational(const DimensionMatrix& d) {
  RationalMatrix m(d.dim_count(), std::vector<Rational>(d.var_count()));
  for (std::size_t r = 0; r < d.dim_count(); ++r)
    for (std::size_t c = 0; c < d.var_count(); ++c) m[r][c] = d(r, c);
  return m;
}

std::int64_t narrow(const cpp_int& x) {
  static const cpp_int kMax = std::numeric_limits<std::int64_t>::max();
  if (boost::multiprecision::abs(x) > kMax) {
    throw Error(ErrorCode::Overflow, "basis component does not fit in 64 bits");
  }
  return x.convert_to<std::int64_t>();
}

BasisVector make_basis_vector(std::vector<std::int64_t> integer_form, std::size_t index) {
  double sq = 0.0;
  for (auto v : integer_form) sq += static_cast<double>(v) * static_cast<double>(v);
  const double n = std::sqrt(sq);
  BasisVector out;
  out.unit_form.reserve(integer_form.size());
  for (auto v : integer_form) out.unit_form.push_back(static_cast<double>(v) / n);
  out.integer_form = std::move(integer_form);
  out.index = index;
  return out;
}

const char* base_log_name(LogBase base) { return base == LogBase::Natural ? "ln" : "log10"; }

}  // namespace

DimensionMatrix::DimensionMatrix(std::vector<std::string> dim_names, std::vector<std::string> var_names,
                                 std::vector<std::vector<int>> entries)
    : dim_names_(std::move(dim_names)), var_names_(std::move(var_names)), entries_(std::move(entries)) {
  if (dim_names_.empty()) throw Error(ErrorCode::ParseError, "dimension matrix needs at least one dimension");
  if (var_names_.size() < 2) throw Error(ErrorCode::ParseError, "dimension matrix needs at least two variables");
  if (entries_.size() != dim_names_.size()) {
    throw Error(ErrorCode::ParseError, "dimension matrix has " + std::to_string(entries_.size()) +
                                           " rows but " + std::to_string(dim_names_.size()) + " dimension names");
  }
  for (std::size_t r = 0; r < entries_.size(); ++r) {
    if (entries_[r].size() != var_names_.size()) {
      throw Error(ErrorCode::ParseError, "dimension matrix row " + std::to_string(r) + " has " +
                                             std::to_string(entries_[r].size()) + " entries, expected " +
                                             std::to_string(var_names_.size()));
    }
  }
}

DimensionMatrix DimensionMatrix::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "dimension matrix must be a JSON object");
  for (const char* key : {"dims", "vars", "matrix"}) {
    if (!j.contains(key)) throw Error(ErrorCode::ParseError, std::string("dimension matrix missing \"") + key + "\"");
  }
  std::vector<std::string> dims;
  std::vector<std::string> vars;
  std::vector<std::vector<int>> rows;
  try {
    dims = j.at("dims").get<std::vector<std::string>>();
    vars = j.at("vars").get<std::vector<std::string>>();
    const auto& m = j.at("matrix");
    if (!m.is_array()) throw Error(ErrorCode::ParseError, "\"matrix\" must be an array of rows");
    for (std::size_t r = 0; r < m.size(); ++r) {
      if (!m[r].is_array()) throw Error(ErrorCode::ParseError, "matrix row " + std::to_string(r) + " is not an array");
      std::vector<int> row;
      for (std::size_t c = 0; c < m[r].size(); ++c) {
        const auto& cell = m[r][c];
        if (!cell.is_number_integer()) {
          throw Error(ErrorCode::ParseError, "matrix entry (" + std::to_string(r) + ", " + std::to_string(c) +
                                                 ") is not an integer");
        }
        row.push_back(cell.get<int>());
      }
      rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("dimension matrix: ") + e.what());
  }
  return DimensionMatrix(std::move(dims), std::move(vars), std::move(rows));
}

nlohmann::json DimensionMatrix::to_json() const {
  return {{"dims", dim_names_}, {"vars", var_names_}, {"matrix", entries_}};
}

std::vector<std::int64_t> DimensionMatrix::apply(std::span<const std::int64_t> w) const {
  if (w.size() != var_count()) throw Error(ErrorCode::LengthMismatch, "vector length differs from variable count");
  std::vector<std::int64_t> out(dim_count(), 0);
  for (std::size_t r = 0; r < dim_count(); ++r)
    for (std::size_t c = 0; c < var_count(); ++c) out[r] += static_cast<std::int64_t>(entries_[r][c]) * w[c];
  return out;
}

std::size_t rank(const DimensionMatrix& d) {
  auto m = to_rational(d);
  return reduce_rows(m).size();
}

std::vector<std::int64_t> primitivize(std::span<const Rational> v) {
  cpp_int lcm = 1;
  bool any = false;
  for (const auto& x : v) {
    if (x == 0) continue;
    any = true;
    lcm = boost::multiprecision::lcm(lcm, boost::multiprecision::denominator(x));
  }
  if (!any) throw Error(ErrorCode::ZeroVector, "cannot primitivize the zero vector");

  std::vector<cpp_int> scaled;
  scaled.reserve(v.size());
  cpp_int gcd = 0;
  for (const auto& x : v) {
    cpp_int s = boost::multiprecision::numerator(x) * (lcm / boost::multiprecision::denominator(x));
    gcd = boost::multiprecision::gcd(gcd, boost::multiprecision::abs(s));
    scaled.push_back(std::move(s));
  }
  const auto first = std::find_if(scaled.begin(), scaled.end(), [](const cpp_int& s) { return s != 0; });
  const int sign = *first < 0 ? -1 : 1;

  std::vector<std::int64_t> out;
  out.reserve(scaled.size());
  for (const auto& s : scaled) out.push_back(narrow(sign * (s / gcd)));
  return out;
}

BasisSet BasisSet::from_integer_vectors(const DimensionMatrix& source,
                                        const std::vector<std::vector<std::int64_t>>& vectors) {
  std::vector<BasisVector> out;
  RationalMatrix stacked;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    if (v.size() != source.var_count()) {
      throw Error(ErrorCode::LengthMismatch, "basis vector " + std::to_string(i) + " has wrong length");
    }
    const auto image = source.apply(v);
    if (std::any_of(image.begin(), image.end(), [](std::int64_t x) { return x != 0; })) {
      throw Error(ErrorCode::SpecInvalid, "basis vector " + std::to_string(i) + " is not dimensionless");
    }
    std::vector<Rational> r(v.begin(), v.end());
    stacked.push_back(r);
    out.push_back(make_basis_vector(primitivize(r), i));
  }
  auto copy = stacked;
  if (reduce_rows(copy).size() != vectors.size()) {
    throw Error(ErrorCode::RankDeficient, "basis vectors are linearly dependent");
  }
  return BasisSet(source, std::move(out));
}

Matrix BasisSet::unit_matrix() const {
  Matrix m(nullity(), var_count());
  for (std::size_t i = 0; i < nullity(); ++i)
    for (std::size_t c = 0; c < var_count(); ++c) m(i, c) = vectors_[i].unit_form[c];
  return m;
}

nlohmann::json BasisSet::to_json() const {
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : vectors_) {
    const std::vector<double> integer_as_real(v.integer_form.begin(), v.integer_form.end());
    vs.push_back({{"index", v.index},
                  {"integer", v.integer_form},
                  {"unit", v.unit_form},
                  {"expression", power_product_expression(integer_as_real, source_.var_names())},
                  {"unit_expression", power_product_expression(v.unit_form, source_.var_names())}});
  }
  return {{"nullity", nullity()},
          {"rank", source_.var_count() - nullity()},
          {"vars", source_.var_names()},
          {"dimension_matrix", source_.to_json()},
          {"vectors", vs}};
}

BasisSet BasisSet::from_json(const nlohmann::json& j) {
  try {
    const auto source = DimensionMatrix::from_json(j.at("dimension_matrix"));
    std::vector<std::vector<std::int64_t>> vectors;
    for (const auto& v : j.at("vectors")) vectors.push_back(v.at("integer").get<std::vector<std::int64_t>>());
    return from_integer_vectors(source, vectors);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("basis: ") + e.what());
  }
}

BasisSet nullspace_basis(const DimensionMatrix& d) {
  auto m = to_rational(d);
  const auto pivots = reduce_rows(m);
  const std::size_t n = d.var_count();
  if (pivots.size() == n) {
    throw Error(ErrorCode::NoNullSpace, "dimension matrix has full column rank " + std::to_string(n) +
                                            "; no dimensionless group exists");
  }
  std::vector<bool> is_pivot(n, false);
  for (auto p : pivots) is_pivot[p] = true;

  std::vector<BasisVector> vectors;
  for (std::size_t free = 0; free < n; ++free) {
    if (is_pivot[free]) continue;
    std::vector<Rational> v(n, Rational(0));
    v[free] = 1;
    for (std::size_t row = 0; row < pivots.size(); ++row) v[pivots[row]] = -m[row][free];
    vectors.push_back(make_basis_vector(primitivize(v), vectors.size()));
  }
  std::vector<std::vector<std::int64_t>> ints;
  for (const auto& v : vectors) ints.push_back(v.integer_form);
  return BasisSet::from_integer_vectors(d, ints);
}

std::vector<double> combine_gamma(const BasisSet& basis, std::span<const double> gamma) {
  if (gamma.size() != basis.nullity()) {
    throw Error(ErrorCode::LengthMismatch, "gamma has " + std::to_string(gamma.size()) +
                                               " components but the basis has " + std::to_string(basis.nullity()));
  }
  std::vector<double> w(basis.var_count(), 0.0);
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const auto& u = basis.vectors()[i].unit_form;
    for (std::size_t c = 0; c < w.size(); ++c) w[c] += gamma[i] * u[c];
  }
  return w;
}

Matrix log_power_products(const Matrix& inputs, std::span<const std::string> var_names, const Matrix& weights,
                          LogBase base) {
  if (weights.cols() != inputs.cols()) {
    throw Error(ErrorCode::LengthMismatch, "weights have " + std::to_string(weights.cols()) +
                                               " columns but inputs have " + std::to_string(inputs.cols()));
  }
  Matrix logs(inputs.rows(), inputs.cols());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    for (std::size_t c = 0; c < inputs.cols(); ++c) {
      const double p = inputs(i, c);
      if (!(p > 0.0) || !std::isfinite(p)) {
        const std::string name = c < var_names.size() ? var_names[c] : "column " + std::to_string(c);
        throw Error(ErrorCode::NonPositiveInput, "variable " + name + " at row " + std::to_string(i) +
                                                     " is not strictly positive (" + format_double(p) + ")");
      }
      logs(i, c) = base == LogBase::Natural ? std::log(p) : std::log10(p);
    }
  }
  Matrix out(inputs.rows(), weights.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i)
    for (std::size_t j = 0; j < weights.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < inputs.cols(); ++c) s += weights(j, c) * logs(i, c);
      out(i, j) = s;
    }
  return out;
}

PiFeatures log_pi_features(const Matrix& inputs, std::span<const std::string> var_names, const BasisSet& basis,
                           LogBase base) {
  PiFeatures f;
  f.values = log_power_products(inputs, var_names, basis.unit_matrix(), base);
  f.base = base;
  for (std::size_t j = 0; j < basis.nullity(); ++j) {
    f.names.push_back(std::string(base_log_name(base)) + "_pi_b" + std::to_string(j + 1));
  }
  return f;
}

std::string power_product_expression(std::span<const double> exponents, std::span<const std::string> var_names) {
  std::string out;
  for (std::size_t c = 0; c < exponents.size(); ++c) {
    if (exponents[c] == 0.0) continue;
    if (!out.empty()) out += " * ";
    out += var_names[c] + "^" + format_double(exponents[c]);
  }
  return out.empty() ? "1" : out;
}

std::vector<double> parse_power_product(const std::string& expression, std::span<const std::string> var_names) {
  std::vector<double> w(var_names.size(), 0.0);
  if (expression == "1") return w;
  std::size_t pos = 0;
  while (pos < expression.size()) {
    auto end = expression.find(" * ", pos);
    if (end == std::string::npos) end = expression.size();
    const std::string factor = expression.substr(pos, end - pos);
    const auto caret = factor.rfind('^');
    if (caret == std::string::npos) throw Error(ErrorCode::ParseError, "factor without exponent: " + factor);
    const std::string name = factor.substr(0, caret);
    const auto it = std::find(var_names.begin(), var_names.end(), name);
    if (it == var_names.end()) throw Error(ErrorCode::ParseError, "unknown variable in expression: " + name);
    const auto value = parse_double(factor.substr(caret + 1));
    if (!value) throw Error(ErrorCode::ParseError, "bad exponent in factor: " + factor);
    w[static_cast<std::size_t>(it - var_names.begin())] += *value;
    pos = end == expression.size() ? end : end + 3;
  }
  return w;
}

}  // namespace pilaw

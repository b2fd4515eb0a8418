#include "pilaw/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "pilaw/error.hpp"
#include "pilaw/hash.hpp"
#include "pilaw/linalg.hpp"
#include "pilaw/rng.hpp"

namespace pilaw {

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(pos));
      return cells;
    }
    cells.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double column_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string noise_model_name(NoiseModel m) {
  switch (m) {
    case NoiseModel::None: return "none";
    case NoiseModel::MultiplicativeUniform: return "multiplicative_uniform";
    case NoiseModel::AdditiveGaussian: return "additive_gaussian";
  }
  return "none";
}

std::string noise_target_name(NoiseTarget t) {
  switch (t) {
    case NoiseTarget::Output: return "output";
    case NoiseTarget::Inputs: return "inputs";
    case NoiseTarget::Both: return "both";
  }
  return "output";
}

}  // namespace

void Dataset::validate() const {
  if (inputs.cols() < 2) throw Error(ErrorCode::ParseError, "dataset needs at least two input variables");
  if (inputs.rows() < 1) throw Error(ErrorCode::ParseError, "dataset has no samples");
  if (output.size() != inputs.rows()) throw Error(ErrorCode::LengthMismatch, "output length differs from sample count");
  if (var_names.size() != inputs.cols()) throw Error(ErrorCode::LengthMismatch, "variable names differ from column count");
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    for (std::size_t c = 0; c < inputs.cols(); ++c) {
      const double v = inputs(i, c);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::ParseError, "non-finite value for " + var_names[c] + " at row " + std::to_string(i));
      }
      if (v <= 0.0) {
        throw Error(ErrorCode::NonPositiveInput, "variable " + var_names[c] + " at row " + std::to_string(i) +
                                                     " is not strictly positive (" + format_double(v) + ")");
      }
    }
    if (!std::isfinite(output[i])) {
      throw Error(ErrorCode::ParseError, "non-finite output at row " + std::to_string(i));
    }
  }
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset out;
  out.inputs = Matrix(rows.size(), inputs.cols());
  out.output.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = inputs.row(rows[i]);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    out.output.push_back(output[rows[i]]);
  }
  out.var_names = var_names;
  out.output_name = output_name;
  out.normalized = normalized;
  out.max_values = max_values;
  return out;
}

Table parse_table(std::string_view text, bool allow_nan) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorCode::ParseError, "row 1: empty file, expected a header row");

  Table table;
  for (auto cell : split_line(lines.front())) table.columns.emplace_back(trim(cell));
  std::set<std::string> seen;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    const auto& name = table.columns[c];
    if (name.empty()) throw Error(ErrorCode::ParseError, "row 1, column " + std::to_string(c + 1) + ": empty header");
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::ParseError, "row 1, column " + std::to_string(c + 1) + ": duplicate header " + name);
    }
  }

  const std::size_t rows = lines.size() - 1;
  const std::size_t cols = table.columns.size();
  table.values = Matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto cells = split_line(lines[r + 1]);
    const std::string where = "row " + std::to_string(r + 2);
    if (cells.size() != cols) {
      throw Error(ErrorCode::ParseError, where + ": expected " + std::to_string(cols) + " cells, found " +
                                             std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const auto cell = trim(cells[c]);
      if (cell.empty()) throw Error(ErrorCode::ParseError, where + ", column " + std::to_string(c + 1) + ": blank cell");
      if (allow_nan && cell == "nan") {
        table.values(r, c) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto v = parse_double(cell);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::ParseError,
                    where + ", column " + std::to_string(c + 1) + ": not a number: \"" + std::string(cell) + "\"");
      }
      table.values(r, c) = *v;
    }
  }
  return table;
}

std::size_t Table::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorCode::MissingOutputColumn, "column \"" + name + "\" not in header");
  return static_cast<std::size_t>(it - columns.begin());
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += "\n";
  for (std::size_t r = 0; r < table.values.rows(); ++r) {
    for (std::size_t c = 0; c < table.values.cols(); ++c) {
      const double v = table.values(r, c);
      out += (c ? "," : "") + (std::isnan(v) ? std::string("nan") : format_double(v));
    }
    out += "\n";
  }
  return out;
}

Dataset parse_csv(std::string_view text, const std::string& output_column) {
  const Table table = parse_table(text);
  const auto out_it = std::find(table.columns.begin(), table.columns.end(), output_column);
  if (out_it == table.columns.end()) {
    throw Error(ErrorCode::MissingOutputColumn, "output column \"" + output_column + "\" not in header");
  }
  const auto out_col = static_cast<std::size_t>(out_it - table.columns.begin());

  Dataset data;
  data.output_name = output_column;
  std::vector<std::size_t> input_cols;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c == out_col) continue;
    input_cols.push_back(c);
    data.var_names.push_back(table.columns[c]);
  }
  const std::size_t rows = table.values.rows();
  data.inputs = Matrix(rows, input_cols.size());
  data.output.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < input_cols.size(); ++i) data.inputs(r, i) = table.values(r, input_cols[i]);
    data.output[r] = table.values(r, out_col);
  }
  data.validate();
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& output_column) {
  return parse_csv(read_file(path), output_column);
}

std::string to_csv(const Dataset& data) {
  std::string out;
  for (const auto& name : data.var_names) out += name + ",";
  out += data.output_name + "\n";
  for (std::size_t r = 0; r < data.sample_count(); ++r) {
    for (double v : data.inputs.row(r)) out += format_double(v) + ",";
    out += format_double(data.output[r]) + "\n";
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) { write_file_atomic(path, to_csv(data)); }

Dataset normalize_max(const Dataset& data) {
  data.validate();
  Dataset out = data;
  out.max_values.assign(data.var_count() + 1, 0.0);
  for (std::size_t c = 0; c < data.var_count(); ++c) {
    double mx = 0.0;
    for (std::size_t r = 0; r < data.sample_count(); ++r) mx = std::max(mx, data.inputs(r, c));
    out.max_values[c] = mx;
    for (std::size_t r = 0; r < data.sample_count(); ++r) out.inputs(r, c) = data.inputs(r, c) / mx;
  }
  const double out_max = *std::max_element(data.output.begin(), data.output.end());
  if (!(out_max > 0.0)) {
    throw Error(ErrorCode::NonPositiveInput, "output " + data.output_name + " has no positive maximum");
  }
  out.max_values.back() = out_max;
  for (auto& y : out.output) y /= out_max;
  out.normalized = true;
  return out;
}

// ---------------------------------------------------------------------------

NoiseSpec NoiseSpec::from_json(const nlohmann::json& j) {
  NoiseSpec s;
  const auto model = j.value("model", std::string("none"));
  if (model == "none") s.model = NoiseModel::None;
  else if (model == "multiplicative_uniform") s.model = NoiseModel::MultiplicativeUniform;
  else if (model == "additive_gaussian") s.model = NoiseModel::AdditiveGaussian;
  else throw Error(ErrorCode::SpecInvalid, "unknown noise model " + model);
  s.level = j.value("level", 0.0);
  const auto target = j.value("target", std::string("output"));
  if (target == "output") s.target = NoiseTarget::Output;
  else if (target == "inputs") s.target = NoiseTarget::Inputs;
  else if (target == "both") s.target = NoiseTarget::Both;
  else throw Error(ErrorCode::SpecInvalid, "unknown noise target " + target);
  if (!(s.level >= 0.0 && s.level <= 0.5)) throw Error(ErrorCode::SpecInvalid, "noise level must lie in [0, 0.5]");
  return s;
}

nlohmann::json NoiseSpec::to_json() const {
  return {{"model", noise_model_name(model)}, {"level", level}, {"target", noise_target_name(target)}};
}

double ScalingLaw::evaluate_term(std::span<const double> pis, std::size_t default_group) const {
  const std::size_t g = group.value_or(default_group);
  switch (form) {
    case Form::Sum: {
      double s = 0.0;
      for (std::size_t t = 0; t < terms.size(); ++t) s += terms[t].evaluate_term(pis, pis.size() > 1 ? t : 0);
      return s;
    }
    case Form::Poly: {
      const double x = pis[g];
      double s = 0.0;
      for (std::size_t i = coeffs.size(); i-- > 0;) s = s * x + coeffs[i];
      return s;
    }
    case Form::Exp: return a * std::exp(b * pis[g]);
    case Form::Pow: return std::pow(pis[g], c);
  }
  return 0.0;
}

double ScalingLaw::evaluate(std::span<const double> pis) const {
  if (groups_used(pis.size()) > pis.size()) {
    throw Error(ErrorCode::SpecInvalid, "scaling law references more groups than provided");
  }
  return evaluate_term(pis, 0);
}

std::size_t ScalingLaw::groups_used(std::size_t available) const {
  if (form == Form::Sum) {
    std::size_t used = 0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const std::size_t g = terms[t].form == Form::Sum ? terms[t].groups_used(available)
                                                       : terms[t].group.value_or(available > 1 ? t : 0) + 1;
      used = std::max(used, g);
    }
    return used;
  }
  return group.value_or(0) + 1;
}

ScalingLaw ScalingLaw::from_json(const nlohmann::json& j) {
  ScalingLaw law;
  try {
    const auto form = j.at("form").get<std::string>();
    if (form == "poly") {
      law.form = Form::Poly;
      law.coeffs = j.at("coeffs").get<std::vector<double>>();
      if (law.coeffs.empty()) throw Error(ErrorCode::SpecInvalid, "poly law needs coefficients");
    } else if (form == "exp") {
      law.form = Form::Exp;
      law.a = j.value("a", 1.0);
      law.b = j.value("b", 1.0);
    } else if (form == "pow") {
      law.form = Form::Pow;
      law.c = j.at("c").get<double>();
    } else if (form == "sum") {
      law.form = Form::Sum;
      for (const auto& t : j.at("terms")) law.terms.push_back(from_json(t));
      if (law.terms.empty()) throw Error(ErrorCode::SpecInvalid, "sum law needs terms");
    } else {
      throw Error(ErrorCode::SpecInvalid, "unknown law form " + form);
    }
    if (j.contains("pi")) {
      const auto pi = j.at("pi").get<long>();
      if (pi < 1) throw Error(ErrorCode::SpecInvalid, "law \"pi\" index is 1-based");
      law.group = static_cast<std::size_t>(pi - 1);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SpecInvalid, std::string("law: ") + e.what());
  }
  return law;
}

nlohmann::json ScalingLaw::to_json() const {
  nlohmann::json j;
  switch (form) {
    case Form::Poly: j = {{"form", "poly"}, {"coeffs", coeffs}}; break;
    case Form::Exp: j = {{"form", "exp"}, {"a", a}, {"b", b}}; break;
    case Form::Pow: j = {{"form", "pow"}, {"c", c}}; break;
    case Form::Sum: {
      j = {{"form", "sum"}, {"terms", nlohmann::json::array()}};
      for (const auto& t : terms) j["terms"].push_back(t.to_json());
      break;
    }
  }
  if (group) j["pi"] = *group + 1;
  return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SpecInvalid, "synthetic spec must be a JSON object");
  try {
    SyntheticSpec spec{
        .dimension_matrix = DimensionMatrix::from_json(j.at("dimension_matrix")),
        .gammas = j.at("gammas").get<std::vector<std::vector<double>>>(),
        .law = ScalingLaw::from_json(j.at("law")),
        .discrete_levels = std::nullopt,
        .noise = {},
    };
    spec.sample_count = j.value("sample_count", std::size_t{100});
    if (j.contains("input_range")) {
      const auto range = j.at("input_range").get<std::vector<double>>();
      if (range.size() != 2) throw Error(ErrorCode::SpecInvalid, "input_range must be [low, high]");
      spec.low = range[0];
      spec.high = range[1];
    }
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      if (s.is_string()) {
        if (s.get<std::string>() != "continuous") throw Error(ErrorCode::SpecInvalid, "unknown sampling mode");
      } else {
        const auto mode = s.value("mode", std::string("continuous"));
        if (mode == "discrete") spec.discrete_levels = s.at("levels").get<std::size_t>();
        else if (mode != "continuous") throw Error(ErrorCode::SpecInvalid, "unknown sampling mode " + mode);
      }
    }
    if (j.contains("noise")) spec.noise = NoiseSpec::from_json(j.at("noise"));
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.output_name = j.value("output_name", std::string("p_star"));
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SpecInvalid, std::string("synthetic spec: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw Error(ErrorCode::SpecInvalid, e.what());
    throw;
  }
}

nlohmann::json SyntheticSpec::to_json() const {
  nlohmann::json j = {{"dimension_matrix", dimension_matrix.to_json()},
                      {"gammas", gammas},
                      {"law", law.to_json()},
                      {"sample_count", sample_count},
                      {"input_range", {low, high}},
                      {"noise", noise.to_json()},
                      {"seed", seed},
                      {"output_name", output_name}};
  if (discrete_levels) j["sampling"] = {{"mode", "discrete"}, {"levels", *discrete_levels}};
  else j["sampling"] = "continuous";
  return j;
}

SyntheticCase generate_synthetic(const SyntheticSpec& spec) {
  auto invalid = [](const std::string& why) { return Error(ErrorCode::SpecInvalid, why); };
  if (!(spec.low > 0.0)) throw invalid("input_range low must be positive");
  if (!(spec.high > spec.low)) throw invalid("input_range high must exceed low");
  if (spec.sample_count < 1) throw invalid("sample_count must be at least 1");
  if (spec.discrete_levels && *spec.discrete_levels < 2) throw invalid("discrete sampling needs at least 2 levels");
  if (spec.gammas.empty()) throw invalid("at least one gamma row is required");

  BasisSet basis = [&] {
    try {
      return nullspace_basis(spec.dimension_matrix);
    } catch (const Error& e) {
      throw invalid(e.what());
    }
  }();
  for (const auto& g : spec.gammas) {
    if (g.size() != basis.nullity()) {
      throw invalid("gamma row has " + std::to_string(g.size()) + " components, nullity is " +
                    std::to_string(basis.nullity()));
    }
  }
  try {
    linalg::orthonormal_rows(Matrix::from_rows(spec.gammas));
  } catch (const Error&) {
    throw invalid("gamma rows are not linearly independent");
  }
  if (spec.law.groups_used(spec.gammas.size()) > spec.gammas.size()) {
    throw invalid("scaling law uses more groups than gamma rows");
  }

  const std::size_t n = spec.dimension_matrix.var_count();
  const std::size_t m = spec.sample_count;
  Dataset data;
  data.var_names = spec.dimension_matrix.var_names();
  data.output_name = spec.output_name;
  data.inputs = Matrix(m, n);
  data.output.resize(m);

  std::vector<std::vector<double>> levels;
  if (spec.discrete_levels) levels = discrete_levels(n, *spec.discrete_levels, spec.low, spec.high, spec.seed);
  for (std::size_t c = 0; c < n; ++c) {
    Rng rng(spec.seed, kStreamColumnBase + c);
    for (std::size_t r = 0; r < m; ++r) {
      data.inputs(r, c) = levels.empty() ? rng.uniform(spec.low, spec.high) : levels[c][rng.below(levels[c].size())];
    }
  }

  std::vector<std::vector<double>> weights;
  for (const auto& g : spec.gammas) weights.push_back(combine_gamma(basis, g));
  std::vector<double> pis(weights.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < weights.size(); ++j) {
      double prod = 1.0;
      for (std::size_t c = 0; c < n; ++c) prod *= std::pow(data.inputs(r, c), weights[j][c]);
      pis[j] = prod;
    }
    data.output[r] = spec.law.evaluate(pis);
    if (!std::isfinite(data.output[r])) throw invalid("scaling law is not finite at row " + std::to_string(r));
  }
  data = apply_noise(data, spec.noise, spec.seed);
  return SyntheticCase{std::move(data), std::move(basis), spec.gammas};
}

Dataset apply_noise(const Dataset& data, const NoiseSpec& spec, std::uint64_t seed) {
  if (spec.model == NoiseModel::None || spec.level == 0.0) return data;
  Dataset out = data;
  auto perturb = [&](std::span<double> values, std::uint64_t stream, bool keep_positive) {
    Rng rng(seed, stream);
    if (spec.model == NoiseModel::MultiplicativeUniform) {
      for (double& v : values) v *= rng.uniform(1.0 - spec.level, 1.0 + spec.level);
      return;
    }
    const double sigma = spec.level * column_std(values);
    for (double& v : values) {
      const double noisy = v + sigma * rng.normal();
      // Reflect about zero so inputs stay strictly positive.
      v = keep_positive ? (noisy == 0.0 ? v : std::abs(noisy)) : noisy;
    }
  };
  if (spec.target != NoiseTarget::Inputs) perturb(out.output, kStreamNoise, false);
  if (spec.target != NoiseTarget::Output) {
    for (std::size_t c = 0; c < out.var_count(); ++c) {
      auto col = out.inputs.column(c);
      perturb(col, kStreamNoise + 1 + c, true);
      for (std::size_t r = 0; r < out.sample_count(); ++r) out.inputs(r, c) = col[r];
    }
  }
  return out;
}

std::vector<std::vector<double>> discrete_levels(std::size_t n_vars, std::size_t levels_per_var, double low,
                                                 double high, std::uint64_t seed) {
  if (levels_per_var < 2) throw Error(ErrorCode::SpecInvalid, "discrete sampling needs at least 2 levels");
  std::vector<std::vector<double>> out(n_vars);
  for (std::size_t v = 0; v < n_vars; ++v) {
    Rng rng(seed, kStreamLevels + v);
    auto& set = out[v];
    while (set.size() < levels_per_var) {
      const double x = rng.uniform(low, high);
      if (std::find(set.begin(), set.end(), x) == set.end()) set.push_back(x);
    }
  }
  return out;
}

SplitIndices split_indices(std::size_t sample_count, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::BadConfig, "train_fraction must lie strictly between 0 and 1");
  }
  if (sample_count < 5) {
    throw Error(ErrorCode::TooFewSamples, "splitting needs at least 5 samples, got " + std::to_string(sample_count));
  }
  std::vector<std::size_t> perm(sample_count);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, kStreamSplit);
  for (std::size_t i = sample_count - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(sample_count) * train_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, sample_count - 1);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  const auto idx = split_indices(data.sample_count(), train_fraction, seed);
  return {data.select(idx.train), data.select(idx.test)};
}

}  // namespace pilaw

#include "pilaw/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "pilaw/hash.hpp"
#include "pilaw/linalg.hpp"

namespace pilaw {

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Generate: return "generate";
    case Stage::Preprocess: return "preprocess";
    case Stage::Analyze: return "analyze";
    case Stage::Filter: return "filter";
    case Stage::Discover: return "discover";
  }
  return "unknown";
}

int exit_code_for(Stage stage, ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::MissingOutputColumn:
    case ErrorCode::NonPositiveInput:
    case ErrorCode::SpecInvalid:
    case ErrorCode::Io:
    case ErrorCode::LengthMismatch:
    case ErrorCode::BadConfig:
      return kExitInput;
    default: break;
  }
  switch (stage) {
    case Stage::Generate:
    case Stage::Preprocess: return kExitInput;
    case Stage::Analyze: return kExitDimension;
    case Stage::Filter: return kExitFilter;
    case Stage::Discover: return kExitDiscovery;
  }
  return kExitInput;
}

nlohmann::json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, path.string() + " not found");
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

// --- building blocks ---------------------------------------------------------------

Dataset align_to(const Dataset& data, const DimensionMatrix& d) {
  const auto& want = d.var_names();
  if (want == data.var_names) return data;
  std::vector<std::size_t> order;
  for (const auto& name : want) {
    const auto it = std::find(data.var_names.begin(), data.var_names.end(), name);
    if (it == data.var_names.end()) {
      throw Error(ErrorCode::ParseError, "dimension matrix variable '" + name + "' has no dataset column");
    }
    order.push_back(static_cast<std::size_t>(it - data.var_names.begin()));
  }
  for (const auto& name : data.var_names) {
    if (std::find(want.begin(), want.end(), name) == want.end()) {
      throw Error(ErrorCode::ParseError, "dataset column '" + name + "' is missing from the dimension matrix");
    }
  }
  Dataset out = data;
  out.var_names = want;
  for (std::size_t r = 0; r < data.sample_count(); ++r)
    for (std::size_t c = 0; c < order.size(); ++c) out.inputs(r, c) = data.inputs(r, order[c]);
  if (!data.max_values.empty()) {
    for (std::size_t c = 0; c < order.size(); ++c) out.max_values[c] = data.max_values[order[c]];
  }
  return out;
}

Analysis analyze(const Dataset& data, const DimensionMatrix& d, LogBase base) {
  const Dataset aligned = align_to(data, d);
  BasisSet basis = nullspace_basis(d);
  PiFeatures features = log_pi_features(aligned, basis, base);
  return {std::move(basis), std::move(features)};
}

nlohmann::json analysis_json(const Analysis& a, std::size_t preview_rows) {
  nlohmann::json j = a.basis.to_json();
  j["feature_names"] = a.features.names;
  j["log_base"] = a.features.base == LogBase::Natural ? "e" : "10";
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < std::min(preview_rows, a.features.values.rows()); ++r) {
    const auto row = a.features.values.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["feature_preview"] = rows;
  j["sample_count"] = a.features.values.rows();
  return j;
}

Table feature_table(const PiFeatures& f, std::span<const double> y, const std::string& output_name) {
  Table t;
  t.columns = f.names;
  t.columns.push_back(output_name);
  t.values = append_column(f.values, y);
  return t;
}

FeatureData split_feature_table(const Table& t, const std::string& output_column) {
  const std::size_t out = t.column_index(output_column);
  FeatureData d;
  d.features = Matrix(t.values.rows(), t.values.cols() - 1);
  d.y.resize(t.values.rows());
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    if (c != out) d.names.push_back(t.columns[c]);
  for (std::size_t r = 0; r < t.values.rows(); ++r) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < t.values.cols(); ++c) {
      if (c == out) d.y[r] = t.values(r, c);
      else d.features(r, k++) = t.values(r, c);
    }
  }
  if (d.features.cols() < 1) throw Error(ErrorCode::ParseError, "feature table has no feature columns");
  return d;
}

nlohmann::json FilterOutcome::to_json() const {
  return {{"pca", pca.to_json()}, {"sir", sir.to_json()}, {"consensus_k", consensus_k()}};
}

FilterOutcome run_filters(const Matrix& features, std::span<const double> y, double threshold,
                          std::optional<std::size_t> slices) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(ErrorCode::BadConfig, "threshold must lie in [0, 1]");
  if (features.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "features and output lengths differ");
  FilterOutcome out{pca_report(append_column(features, y), threshold),
                    sir_report(features, y, SirConfig{slices, threshold})};
  return out;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double or_nan(const std::optional<double>& x) { return x ? *x : kNaN; }

std::string fixed3(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", std::abs(x) < 5e-4 ? 0.0 : x);
  return buf;
}

std::string fixed3(std::span<const double> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fixed3(v[i]);
  return s + "]";
}

}  // namespace

Table gamma_table(const EnsembleResult& e, bool with_truth) {
  Table t;
  t.columns = {"run", "seed", "accepted", "r2_train", "r2_test"};
  if (with_truth) t.columns.push_back("truth_error");
  const std::size_t k = e.config.k;
  const std::size_t n = e.runs.empty() ? 0 : e.runs.front().gamma.cols();
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i) t.columns.push_back("gamma" + std::to_string(j + 1) + "_" + std::to_string(i + 1));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i) t.columns.push_back("norm" + std::to_string(j + 1) + "_" + std::to_string(i + 1));
  t.values = Matrix(e.runs.size(), t.columns.size());
  for (std::size_t r = 0; r < e.runs.size(); ++r) {
    const auto& run = e.runs[r];
    std::size_t c = 0;
    t.values(r, c++) = static_cast<double>(e.run_index[r]);
    t.values(r, c++) = static_cast<double>(run.seed);
    t.values(r, c++) = std::find(e.accepted.begin(), e.accepted.end(), r) != e.accepted.end() ? 1.0 : 0.0;
    t.values(r, c++) = or_nan(run.r2_train);
    t.values(r, c++) = or_nan(run.r2_test);
    if (with_truth) t.values(r, c++) = or_nan(run.truth_error);
    for (double g : run.gamma.data()) t.values(r, c++) = g;
    for (double g : run.gamma_normalized.data()) t.values(r, c++) = g;
  }
  return t;
}

Table scatter_table(const EnsembleResult& e, const DiscoveryProblem& problem, const std::string& output_name) {
  const DiscoveryResult* best = e.best();
  if (!best) throw Error(ErrorCode::DegenerateData, "no successful run to export");
  const std::size_t k = best->gamma.rows();
  Table t;
  for (std::size_t j = 0; j < k; ++j) t.columns.push_back("pi_" + std::to_string(j + 1));
  t.columns.push_back(output_name);
  t.columns.push_back(output_name + "_predicted");
  t.columns.push_back("is_test");
  const auto predicted = best->predict(problem.features);
  const auto data = prepare_training_data(problem.features, problem.y, e.config.train_fraction, best->seed);
  std::vector<bool> test(problem.features.rows(), false);
  for (auto r : data.test_rows) test[r] = true;
  t.values = Matrix(problem.features.rows(), t.columns.size());
  for (std::size_t r = 0; r < problem.features.rows(); ++r) {
    for (std::size_t j = 0; j < k; ++j) t.values(r, j) = std::exp(linalg::dot(best->gamma.row(j), problem.features.row(r)));
    t.values(r, k) = problem.y[r];
    t.values(r, k + 1) = predicted[r];
    t.values(r, k + 2) = test[r] ? 1.0 : 0.0;
  }
  return t;
}

Table histogram_table(const EnsembleResult& e, double bin_width) {
  const auto bins = static_cast<std::size_t>(std::ceil(std::sqrt(2.0) / bin_width));
  Table t;
  t.columns = {"bin_low", "bin_high", "count", "accepted_count"};
  t.values = Matrix(bins, 4);
  for (std::size_t b = 0; b < bins; ++b) {
    t.values(b, 0) = static_cast<double>(b) * bin_width;
    t.values(b, 1) = static_cast<double>(b + 1) * bin_width;
  }
  for (std::size_t r = 0; r < e.runs.size(); ++r) {
    if (!e.runs[r].truth_error) continue;
    const auto b = std::min(bins - 1, static_cast<std::size_t>(*e.runs[r].truth_error / bin_width));
    t.values(b, 2) += 1.0;
    if (std::find(e.accepted.begin(), e.accepted.end(), r) != e.accepted.end()) t.values(b, 3) += 1.0;
  }
  return t;
}

nlohmann::json group_expressions(const EnsembleResult& e, const BasisSet& basis) {
  const auto& names = basis.source().var_names();
  auto describe = [&](std::span<const double> gamma) {
    const auto w = combine_gamma(basis, gamma);
    return nlohmann::json{{"gamma", std::vector<double>(gamma.begin(), gamma.end())},
                          {"exponents", w},
                          {"expression", power_product_expression(w, names)}};
  };
  nlohmann::json j{{"variables", names}, {"best", nlohmann::json::array()}, {"clusters", nlohmann::json::array()}};
  if (const auto* best = e.best()) {
    for (std::size_t r = 0; r < best->gamma.rows(); ++r) {
      auto row = describe(best->gamma.row(r));
      row["normalized"] = describe(best->gamma_normalized.row(r));
      j["best"].push_back(std::move(row));
    }
  }
  for (const auto& c : e.clusters) {
    auto row = describe(c.centroid);
    row["count"] = c.members.size();
    j["clusters"].push_back(std::move(row));
  }
  if (e.subspace) {
    j["subspace"] = nlohmann::json::array();
    for (std::size_t r = 0; r < e.subspace->rows(); ++r) j["subspace"].push_back(describe(e.subspace->row(r)));
  }
  return j;
}

nlohmann::json table_json(const Table& t) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    nlohmann::json col = nlohmann::json::array();
    for (std::size_t r = 0; r < t.values.rows(); ++r) {
      const double v = t.values(r, c);
      col.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
    }
    j[t.columns[c]] = std::move(col);
  }
  return j;
}

// --- commands ------------------------------------------------------------------------

namespace {

class Writer {
 public:
  Writer(const fs::path& out, CommandOutput& result) : out_(out), result_(result) {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + out_.string() + ": " + ec.message());
  }

  void text(const std::string& name, const std::string& kind, const std::string& bytes) {
    write_file_atomic(out_ / name, bytes);
    const auto existing = std::find_if(result_.artifacts.begin(), result_.artifacts.end(),
                                       [&](const Artifact& a) { return a.path == name; });
    Artifact a{name, kind, sha256_hex(bytes), bytes.size()};
    if (existing != result_.artifacts.end()) *existing = a;
    else result_.artifacts.push_back(a);
  }
  void json(const std::string& name, const nlohmann::json& j) { text(name, "json", j.dump(2) + "\n"); }
  void csv(const std::string& name, const Table& t) { text(name, "csv", to_csv(t)); }
  void csv(const std::string& name, const Dataset& d) { text(name, "csv", to_csv(d)); }

 private:
  fs::path out_;
  CommandOutput& result_;
};

template <typename F>
CommandOutput guarded(Stage stage, F&& body) {
  CommandOutput result;
  try {
    body(result);
  } catch (const Error& e) {
    result.exit_code = exit_code_for(stage, e.code());
    result.error = to_string(stage) + ": " + std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    result.exit_code = exit_code_for(stage, ErrorCode::Io);
    result.error = to_string(stage) + ": " + e.what();
  }
  result.summary["exit_code"] = result.exit_code;
  if (!result.error.empty()) result.summary["error"] = result.error;
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : result.artifacts) artifacts.push_back(a.path);
  result.summary["artifacts"] = artifacts;
  return result;
}

std::string join_ints(const std::vector<std::int64_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

SyntheticCase generate_into(const SyntheticSpec& spec, Writer& w, CommandOutput& r) {
  auto c = generate_synthetic(spec);
  w.csv("dataset.csv", c.data);
  w.json("dimension_matrix.json", spec.dimension_matrix.to_json());
  w.json("truth.json", {{"gammas", c.gammas}, {"law", spec.law.to_json()}, {"basis", c.basis.to_json()},
                        {"spec", spec.to_json()}});
  r.summary["rows"] = c.data.sample_count();
  r.summary["nullity"] = c.basis.nullity();
  r.summary["groups"] = c.gammas.size();
  r.lines.push_back("generated " + std::to_string(c.data.sample_count()) + " rows over " +
                    std::to_string(c.data.var_count()) + " variables (seed " + std::to_string(spec.seed) + ")");
  return c;
}

void analyze_into(const Dataset& data, const DimensionMatrix& d, LogBase base, Writer& w, CommandOutput& r,
                  Analysis* keep = nullptr) {
  auto a = analyze(data, d, base);
  w.json("basis.json", a.basis.to_json());
  w.csv("pi_features.csv", feature_table(a.features, data.output, data.output_name));
  r.summary["nullity"] = a.basis.nullity();
  r.summary["rank"] = d.var_count() - a.basis.nullity();
  r.lines.push_back("nullity " + std::to_string(a.basis.nullity()) + " (rank " +
                    std::to_string(d.var_count() - a.basis.nullity()) + ")");
  for (const auto& v : a.basis.vectors()) {
    r.lines.push_back("  w_b" + std::to_string(v.index + 1) + " = " + join_ints(v.integer_form) + "  " +
                      power_product_expression(std::vector<double>(v.integer_form.begin(), v.integer_form.end()),
                                               d.var_names()));
  }
  if (keep) *keep = std::move(a);
}

FilterOutcome filter_into(const Matrix& x, std::span<const double> y, double threshold,
                          std::optional<std::size_t> slices, Writer& w, CommandOutput& r) {
  auto f = run_filters(x, y, threshold, slices);
  w.json("filter.json", f.to_json());
  r.summary["pca_k"] = f.pca.suggested_k;
  r.summary["sir_k"] = f.sir.suggested_k;
  r.summary["consensus_k"] = f.consensus_k();
  r.summary["pca_ratios"] = f.pca.ratios;
  r.summary["sir_ratios"] = f.sir.ratios;
  r.lines.push_back("PCA k=" + std::to_string(f.pca.suggested_k) + ", SIR k=" + std::to_string(f.sir.suggested_k) +
                    " (threshold " + fixed3(threshold) + ", consensus k=" + std::to_string(f.consensus_k()) + ")");
  r.lines.push_back("  PCA ratios " + fixed3(f.pca.ratios));
  r.lines.push_back("  SIR ratios " + fixed3(f.sir.ratios));
  for (const auto& warning : f.pca.warnings) r.lines.push_back("  warning: " + warning);
  for (const auto& warning : f.sir.warnings) r.lines.push_back("  warning: " + warning);
  return f;
}

EnsembleResult discover_into(const DiscoveryProblem& problem, const TrainConfig& cfg, std::size_t threads,
                             const std::string& output_name, const BasisSet* basis, Writer& w, CommandOutput& r) {
  EnsembleOptions opts;
  opts.threads = threads;
  auto e = run_ensemble(problem, cfg, opts);
  const bool with_truth = problem.truth.rows() > 0;
  w.json("ensemble.json", e.to_json());
  w.csv("gamma_runs.csv", gamma_table(e, with_truth));
  if (e.best()) w.csv("scatter.csv", scatter_table(e, problem, output_name));
  if (with_truth) w.csv("error_histogram.csv", histogram_table(e));
  if (basis) w.json("groups.json", group_expressions(e, *basis));

  r.summary["k"] = cfg.k;
  r.summary["runs"] = e.runs.size();
  r.summary["failures"] = e.failures.size();
  r.summary["accepted"] = e.accepted.size();
  r.lines.push_back("k=" + std::to_string(cfg.k) + ": " + std::to_string(e.runs.size()) + " runs, " +
                    std::to_string(e.accepted.size()) + " accepted at r2_test >= " + fixed3(cfg.r2_min) + ", " +
                    std::to_string(e.failures.size()) + " failed");
  if (const auto* best = e.best()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t j = 0; j < best->gamma_normalized.rows(); ++j) {
      const auto row = best->gamma_normalized.row(j);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
      r.lines.push_back("  best run (seed " + std::to_string(best->seed) + ") gamma" + std::to_string(j + 1) + " " +
                        fixed3(row) + (best->r2_test ? "  r2_test " + fixed3(*best->r2_test) : ""));
    }
    r.summary["best_gamma_normalized"] = rows;
  }
  for (std::size_t c = 0; c < std::min<std::size_t>(e.clusters.size(), 5); ++c) {
    r.lines.push_back("  cluster " + std::to_string(c + 1) + ": " + std::to_string(e.clusters[c].members.size()) +
                      " x " + fixed3(e.clusters[c].centroid));
  }
  if (e.subspace) {
    for (std::size_t j = 0; j < e.subspace->rows(); ++j) r.lines.push_back("  sparsified basis " + fixed3(e.subspace->row(j)));
  }
  if (with_truth) {
    std::size_t close = 0;
    for (auto a : e.accepted)
      if (e.runs[a].truth_error && *e.runs[a].truth_error < 0.1) ++close;
    r.summary["accepted_within_0.1"] = close;
    r.lines.push_back("  " + std::to_string(close) + " accepted runs within 0.1 of the ground truth");
  }
  if (e.accepted.empty()) {
    throw Error(ErrorCode::DegenerateData, "no run reached r2_test >= " + format_double(cfg.r2_min));
  }
  return e;
}

Matrix truth_matrix(const fs::path& path) {
  const auto j = read_json(path);
  try {
    return Matrix::from_rows(j.at("gammas").get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace

CommandOutput cmd_generate(const GenerateArgs& args, const fs::path& out) {
  return guarded(Stage::Generate, [&](CommandOutput& r) {
    Writer w(out, r);
    generate_into(args.spec, w, r);
  });
}

CommandOutput cmd_preprocess(const PreprocessArgs& args, const fs::path& out) {
  return guarded(Stage::Preprocess, [&](CommandOutput& r) {
    const auto data = load_csv(args.data, args.output_column);
    const auto norm = normalize_max(data);
    Writer w(out, r);
    w.csv("normalized.csv", norm);
    nlohmann::json maxima = nlohmann::json::object();
    for (std::size_t c = 0; c < norm.var_count(); ++c) maxima[norm.var_names[c]] = norm.max_values[c];
    maxima[norm.output_name] = norm.max_values.back();
    w.json("normalization.json", {{"max_values", maxima}, {"output_column", norm.output_name}});
    r.summary["rows"] = norm.sample_count();
    r.lines.push_back("normalized " + std::to_string(norm.sample_count()) + " rows by column maxima");
  });
}

CommandOutput cmd_analyze(const AnalyzeArgs& args, const fs::path& out) {
  return guarded(Stage::Analyze, [&](CommandOutput& r) {
    const auto data = load_csv(args.data, args.output_column);
    Writer w(out, r);
    analyze_into(data, args.dims, args.base, w, r);
  });
}

CommandOutput cmd_filter(const FilterArgs& args, const fs::path& out) {
  return guarded(Stage::Filter, [&](CommandOutput& r) {
    const auto d = split_feature_table(parse_table(read_file(args.features)), args.output_column);
    Writer w(out, r);
    filter_into(d.features, d.y, args.threshold, args.slices, w, r);
  });
}

CommandOutput cmd_discover(const DiscoverArgs& args, const fs::path& out) {
  return guarded(Stage::Discover, [&](CommandOutput& r) {
    const auto d = split_feature_table(parse_table(read_file(args.features)), args.output_column);
    TrainConfig cfg = args.train;
    if (!args.k_given) {
      if (!args.filter) throw Error(ErrorCode::BadConfig, "k not given: pass --k or a filter report");
      try {
        cfg.k = read_json(*args.filter).at("consensus_k").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, args.filter->string() + ": " + e.what());
      }
    }
    DiscoveryProblem problem{d.features, d.y, args.truth ? truth_matrix(*args.truth) : Matrix()};
    std::optional<BasisSet> basis;
    if (args.basis) basis = BasisSet::from_json(read_json(*args.basis));
    Writer w(out, r);
    discover_into(problem, cfg, args.threads, args.output_column, basis ? &*basis : nullptr, w, r);
  });
}

// --- pipeline ------------------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::BadConfig, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::BadConfig, "unknown key '" + key + "' in " + where);
  }
}

struct StageTimer {
  nlohmann::json& stages;
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void done(const std::string& status) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    stages.push_back({{"name", name}, {"status", status}, {"seconds", s}});
  }
};

}  // namespace

CommandOutput cmd_pipeline(const nlohmann::json& config, const fs::path& out, const PipelineOptions& options) {
  CommandOutput result;
  nlohmann::json stages = nlohmann::json::array();
  nlohmann::json effective = config;
  nlohmann::json seeds = nlohmann::json::object();
  Stage stage = Stage::Generate;
  std::optional<StageTimer> timer;

  try {
    check_keys(config, {"generate", "dataset", "dimension_matrix", "preprocess", "filter", "discover"}, "pipeline config");
    Writer w(out, result);

    // generate or ingest
    timer.emplace(StageTimer{stages, "generate"});
    Dataset raw;
    std::optional<DimensionMatrix> dims;
    const std::string output_name = [&] {
      if (config.contains("dataset")) return config["dataset"].value("output_column", std::string("p_star"));
      if (config.contains("generate")) return config["generate"].value("output_name", std::string("p_star"));
      return std::string("p_star");
    }();
    Matrix truth;
    if (config.contains("generate")) {
      auto spec = SyntheticSpec::from_json(config.at("generate"));
      if (options.seed) spec.seed = *options.seed;
      effective["generate"] = spec.to_json();
      seeds["generate"] = spec.seed;
      raw = generate_into(spec, w, result).data;
      dims = spec.dimension_matrix;
      truth = Matrix::from_rows(spec.gammas);
    } else if (config.contains("dataset")) {
      timer->name = "ingest";
      const auto& ds = config.at("dataset");
      check_keys(ds, {"path", "output_column"}, "dataset");
      if (!ds.contains("path")) throw Error(ErrorCode::BadConfig, "dataset.path is required");
      raw = load_csv(resolve(options.base_dir, ds.at("path").get<std::string>()), output_name);
      w.csv("dataset.csv", raw);
    } else {
      throw Error(ErrorCode::BadConfig, "pipeline config needs a 'generate' or 'dataset' section");
    }
    if (config.contains("dimension_matrix")) {
      const auto& dm = config.at("dimension_matrix");
      dims = DimensionMatrix::from_json(dm.is_string() ? read_json(resolve(options.base_dir, dm.get<std::string>())) : dm);
      if (!config.contains("generate")) w.json("dimension_matrix.json", dims->to_json());
    }
    if (!dims) throw Error(ErrorCode::BadConfig, "pipeline config needs a 'dimension_matrix'");
    timer->done("ok");

    stage = Stage::Preprocess;
    timer.emplace(StageTimer{stages, "preprocess"});
    const nlohmann::json pre = config.value("preprocess", nlohmann::json::object());
    check_keys(pre, {"normalize", "log_base"}, "preprocess");
    Dataset data = raw;
    if (pre.value("normalize", true)) {
      data = normalize_max(raw);
      w.csv("normalized.csv", data);
    }
    const std::string log_base = pre.value("log_base", std::string("e"));
    if (log_base != "e" && log_base != "10") throw Error(ErrorCode::BadConfig, "log_base must be \"e\" or \"10\"");
    timer->done("ok");

    stage = Stage::Analyze;
    timer.emplace(StageTimer{stages, "analyze"});
    Analysis analysis{nullspace_basis(*dims), {}};
    analyze_into(data, *dims, log_base == "e" ? LogBase::Natural : LogBase::Ten, w, result, &analysis);
    timer->done("ok");

    const nlohmann::json filt = config.value("filter", nlohmann::json::object());
    check_keys(filt, {"enabled", "threshold", "slices"}, "filter");
    std::optional<FilterOutcome> filter;
    if (filt.value("enabled", true)) {
      stage = Stage::Filter;
      timer.emplace(StageTimer{stages, "filter"});
      std::optional<std::size_t> slices;
      if (filt.contains("slices") && !filt["slices"].is_null()) slices = filt["slices"].get<std::size_t>();
      filter = filter_into(analysis.features.values, data.output, filt.value("threshold", kDefaultThreshold), slices, w,
                           result);
      timer->done("ok");
    }

    nlohmann::json disc = config.value("discover", nlohmann::json::object());
    if (disc.value("enabled", true)) {
      stage = Stage::Discover;
      timer.emplace(StageTimer{stages, "discover"});
      const std::size_t threads = disc.value("threads", std::size_t{0});
      const bool k_given = disc.contains("k");
      disc.erase("enabled");
      disc.erase("threads");
      TrainConfig cfg = TrainConfig::from_json(disc);
      if (options.seed) cfg.seed = *options.seed;
      if (!k_given) cfg.k = filter ? filter->consensus_k() : 1;
      effective["discover"] = cfg.to_json();
      seeds["train"] = cfg.seed;
      std::vector<std::uint64_t> run_seeds;
      for (std::size_t i = 0; i < cfg.ensemble_size; ++i) run_seeds.push_back(cfg.seed + i);
      seeds["runs"] = run_seeds;
      if (truth.rows() > 0 && truth.cols() != analysis.basis.nullity()) truth = Matrix();
      DiscoveryProblem problem{analysis.features.values, data.output, truth};
      discover_into(problem, cfg, threads, data.output_name, &analysis.basis, w, result);
      timer->done("ok");
    }
    timer.reset();
  } catch (const Error& e) {
    result.exit_code = exit_code_for(stage, e.code());
    result.error = to_string(stage) + ": " + std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    result.exit_code = kExitInput;
    result.error = to_string(stage) + ": " + e.what();
  }
  if (timer) timer->done("failed");

  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : result.artifacts) {
    artifacts.push_back({{"path", a.path}, {"kind", a.kind}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  }
  const nlohmann::json manifest{{"tool", "pilaw"},        {"version", PILAW_VERSION}, {"config", effective},
                                {"seeds", seeds},         {"stages", stages},         {"artifacts", artifacts},
                                {"exit_code", result.exit_code}, {"error", result.error.empty() ? nlohmann::json() : nlohmann::json(result.error)}};
  try {
    std::error_code ec;
    fs::create_directories(out, ec);
    write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  } catch (const Error& e) {
    if (result.exit_code == kExitOk) {
      result.exit_code = kExitInput;
      result.error = std::string("manifest: ") + e.what();
    }
  }
  result.summary["exit_code"] = result.exit_code;
  if (!result.error.empty()) result.summary["error"] = result.error;
  result.summary["manifest"] = (out / "manifest.json").string();
  nlohmann::json names = nlohmann::json::array();
  for (const auto& a : result.artifacts) names.push_back(a.path);
  result.summary["artifacts"] = names;
  return result;
}

}  // namespace pilaw

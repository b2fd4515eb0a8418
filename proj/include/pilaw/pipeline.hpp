#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pilaw/dataset.hpp"
#include "pilaw/dimension.hpp"
#include "pilaw/discovery.hpp"
#include "pilaw/error.hpp"
#include "pilaw/filtering.hpp"

namespace pilaw {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDimension = 3;
inline constexpr int kExitFilter = 4;
inline constexpr int kExitDiscovery = 5;

enum class Stage { Generate, Preprocess, Analyze, Filter, Discover };

std::string to_string(Stage stage);

/// Input and configuration problems map to 2; anything else to the stage's own code.
int exit_code_for(Stage stage, ErrorCode code);

// --- stage building blocks (shared with the service) -------------------------

/// Reorders the dataset's inputs into the dimension matrix's variable order.
/// ParseError when a variable has no column or a column has no variable.
Dataset align_to(const Dataset& data, const DimensionMatrix& d);

struct Analysis {
  BasisSet basis;
  PiFeatures features;
};

Analysis analyze(const Dataset& data, const DimensionMatrix& d, LogBase base = LogBase::Natural);

/// Basis JSON plus each vector rendered over the original variable names.
nlohmann::json analysis_json(const Analysis& a, std::size_t preview_rows);

/// Feature columns followed by the output column.
Table feature_table(const PiFeatures& f, std::span<const double> y, const std::string& output_name);

struct FeatureData {
  Matrix features;
  std::vector<double> y;
  std::vector<std::string> names;
};

FeatureData split_feature_table(const Table& t, const std::string& output_column);

struct FilterOutcome {
  FilterReport pca;
  FilterReport sir;

  /// max of the two suggestions, capped at the number of features (PCA also sees the output column).
  [[nodiscard]] std::size_t consensus_k() const {
    const std::size_t k = std::max(pca.suggested_k, sir.suggested_k);
    return sir.ratios.empty() ? k : std::min(k, sir.ratios.size());
  }
  [[nodiscard]] nlohmann::json to_json() const;
};

FilterOutcome run_filters(const Matrix& features, std::span<const double> y, double threshold,
                          std::optional<std::size_t> slices);

/// One row per successful run: run, seed, accepted, r2 values, truth error, raw and normalized gamma.
Table gamma_table(const EnsembleResult& e, bool with_truth);

/// Best run: learned groups Pi_j = exp(gamma_j . features), actual and predicted output, test flag.
Table scatter_table(const EnsembleResult& e, const DiscoveryProblem& problem, const std::string& output_name);

inline constexpr double kHistogramBinWidth = 0.05;

/// Relative-error (or plane-residual) histogram over runs with a truth error.
Table histogram_table(const EnsembleResult& e, double bin_width = kHistogramBinWidth);

/// Learned groups of the best run and of each cluster centroid, as power products of the original variables.
nlohmann::json group_expressions(const EnsembleResult& e, const BasisSet& basis);

/// Table as JSON columns {name: [values...]}; NaN becomes null.
nlohmann::json table_json(const Table& t);

// --- commands ------------------------------------------------------------------

struct Artifact {
  std::string path;  // relative to the output directory
  std::string kind;  // "csv" or "json"
  std::string sha256;
  std::size_t bytes = 0;
};

struct CommandOutput {
  int exit_code = kExitOk;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::string> lines;  // human-readable report
  std::vector<Artifact> artifacts;
  std::string error;
};

struct GenerateArgs {
  SyntheticSpec spec;
};

struct PreprocessArgs {
  fs::path data;
  std::string output_column = "p_star";
};

struct AnalyzeArgs {
  fs::path data;
  DimensionMatrix dims;
  std::string output_column = "p_star";
  LogBase base = LogBase::Natural;
};

struct FilterArgs {
  fs::path features;
  std::string output_column = "p_star";
  double threshold = kDefaultThreshold;
  std::optional<std::size_t> slices;
};

struct DiscoverArgs {
  fs::path features;
  std::string output_column = "p_star";
  TrainConfig train;
  bool k_given = false;                 // train.k set explicitly
  std::optional<fs::path> filter;       // filter.json supplying k when not given
  std::optional<fs::path> truth;        // truth.json from generate
  std::optional<fs::path> basis;        // basis.json for group expressions
  std::size_t threads = 0;
};

CommandOutput cmd_generate(const GenerateArgs& args, const fs::path& out);
CommandOutput cmd_preprocess(const PreprocessArgs& args, const fs::path& out);
CommandOutput cmd_analyze(const AnalyzeArgs& args, const fs::path& out);
CommandOutput cmd_filter(const FilterArgs& args, const fs::path& out);
CommandOutput cmd_discover(const DiscoverArgs& args, const fs::path& out);

/// Full run described by one JSON document:
///   {"generate": SyntheticSpec} or {"dataset": {"path", "output_column"}},
///   "dimension_matrix" (object or path; optional with "generate"),
///   "preprocess": {"normalize", "log_base"}, "filter": {"enabled", "threshold", "slices"},
///   "discover": {"enabled", "threads", TrainConfig keys}.
/// `base_dir` resolves relative paths. Writes manifest.json last.
struct PipelineOptions {
  std::optional<std::uint64_t> seed;  // overrides the generator and training seeds
  fs::path base_dir = ".";
};

CommandOutput cmd_pipeline(const nlohmann::json& config, const fs::path& out, const PipelineOptions& options = {});

/// Reads a JSON file; ParseError on malformed text, Io when missing.
nlohmann::json read_json(const fs::path& path);

}  // namespace pilaw

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pilaw/pipeline.hpp"
#include "pilaw/service.hpp"

namespace {

using json = nlohmann::json;
using namespace pilaw;

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int emit(const CommandOutput& r, bool quiet) {
  if (quiet) {
    std::cout << r.summary.dump() << "\n";
  } else {
    for (const auto& line : r.lines) std::cout << line << "\n";
    if (!r.error.empty()) std::cerr << "error: " << r.error << "\n";
  }
  return r.exit_code;
}

int fail(int code, const std::string& message, bool quiet) {
  CommandOutput r;
  r.exit_code = code;
  r.error = message;
  r.summary = {{"exit_code", code}, {"error", message}};
  return emit(r, quiet);
}

/// The stage's section of --config, or an empty object.
json config_section(const Globals& g, const char* name) {
  if (g.config.empty()) return json::object();
  const json all = read_json(g.config);
  if (!all.is_object()) throw Error(ErrorCode::BadConfig, g.config + ": expected a JSON object");
  return all.value(name, json::object());
}

fs::path out_dir(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("PILAW_OUT_DIR"); env && *env) return env;
  return "pilaw_out";
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dimensionless-group discovery pipeline", "pilaw"};
  app.set_version_flag("--version", PILAW_VERSION);
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "JSON config with per-stage sections");
  app.add_option("--out", g.out, "output directory (default $PILAW_OUT_DIR or ./pilaw_out)");
  app.add_option("--seed", g.seed, "overrides every seed in the config");
  app.add_flag("--quiet", g.quiet, "print exactly one JSON summary object");

  std::string spec_path;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset, its dimension matrix and ground truth");
  gen->add_option("--spec", spec_path, "SyntheticSpec JSON (defaults to the config's generate section)");

  std::string data_path, output_column = "p_star";
  auto* pre = app.add_subcommand("preprocess", "normalize each column by its maximum");
  pre->add_option("--data", data_path, "dataset CSV")->required();
  pre->add_option("--output-column", output_column);

  std::string dims_path, log_base = "e";
  auto* ana = app.add_subcommand("analyze", "null-space basis and log pi-features");
  ana->add_option("--data", data_path, "dataset CSV")->required();
  ana->add_option("--dims", dims_path, "dimension matrix JSON")->required();
  ana->add_option("--output-column", output_column);
  ana->add_option("--log-base", log_base)->check(CLI::IsMember({"e", "10"}));

  std::string features_path;
  std::optional<double> threshold;
  std::optional<std::size_t> slices;
  auto* fil = app.add_subcommand("filter", "PCA and SIR dominant-dimension reports");
  fil->add_option("--features", features_path, "pi_features.csv from analyze")->required();
  fil->add_option("--output-column", output_column);
  fil->add_option("--threshold", threshold, "cumulative ratio threshold");
  fil->add_option("-H,--slices", slices, "SIR slice count");

  std::optional<std::size_t> k, ensemble, epochs, threads;
  std::optional<double> lambda, lr, r2_min;
  std::optional<std::string> targets;
  std::string filter_path, truth_path, basis_path;
  auto* dis = app.add_subcommand("discover", "train the ensemble and post-process the learned groups");
  dis->add_option("--features", features_path, "pi_features.csv from analyze")->required();
  dis->add_option("--output-column", output_column);
  dis->add_option("--k", k, "number of groups (default: consensus of --filter)");
  dis->add_option("--filter", filter_path, "filter.json supplying k");
  dis->add_option("--truth", truth_path, "truth.json from generate");
  dis->add_option("--basis", basis_path, "basis.json for group expressions");
  dis->add_option("--ensemble", ensemble);
  dis->add_option("--epochs", epochs);
  dis->add_option("--lambda", lambda);
  dis->add_option("--lr", lr);
  dis->add_option("--r2-min", r2_min);
  dis->add_option("--targets", targets)->check(CLI::IsMember({"integer", "half_integer", "quarter_integer"}));
  dis->add_option("--threads", threads);

  auto* pipe = app.add_subcommand("pipeline", "run every stage from --config and write manifest.json");

  ServiceConfig svc;
  std::string static_dir, data_dir;
  auto* serve = app.add_subcommand("serve", "HTTP API and UI");
  serve->add_option("--port", svc.port, "listen port")->capture_default_str();
  serve->add_option("--host", svc.host)->capture_default_str();
  serve->add_option("--data-dir", data_dir, "store directory (default $PILAW_DATA_DIR or ./pilaw_data)");
  serve->add_option("--static-dir", static_dir, "built UI bundle served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    const fs::path out = out_dir(g);

    if (*gen) {
      json spec_json;
      if (!spec_path.empty()) {
        if (!fs::exists(spec_path)) return fail(kExitInput, "spec not found: " + spec_path, g.quiet);
        spec_json = read_json(spec_path);
      } else {
        spec_json = config_section(g, "generate");
        if (spec_json.empty()) return fail(kExitInput, "spec not found: pass --spec or a config with 'generate'", g.quiet);
      }
      GenerateArgs args{SyntheticSpec::from_json(spec_json)};
      if (g.seed) args.spec.seed = *g.seed;
      return emit(cmd_generate(args, out), g.quiet);
    }

    if (*pre) return emit(cmd_preprocess({data_path, output_column}, out), g.quiet);

    if (*ana) {
      AnalyzeArgs args{data_path, DimensionMatrix::from_json(read_json(dims_path)), output_column,
                       log_base == "10" ? LogBase::Ten : LogBase::Natural};
      return emit(cmd_analyze(args, out), g.quiet);
    }

    if (*fil) {
      const json section = config_section(g, "filter");
      FilterArgs args;
      args.features = features_path;
      args.output_column = output_column;
      args.threshold = threshold.value_or(section.value("threshold", kDefaultThreshold));
      if (slices) args.slices = slices;
      else if (section.contains("slices") && !section["slices"].is_null()) args.slices = section["slices"].get<std::size_t>();
      return emit(cmd_filter(args, out), g.quiet);
    }

    if (*dis) {
      json section = config_section(g, "discover");
      DiscoverArgs args;
      args.features = features_path;
      args.output_column = output_column;
      args.threads = threads.value_or(section.value("threads", std::size_t{0}));
      section.erase("threads");
      section.erase("enabled");
      if (k) section["k"] = *k;
      if (ensemble) section["ensemble_size"] = *ensemble;
      if (epochs) section["epochs"] = *epochs;
      if (lambda) section["lambda"] = *lambda;
      if (lr) section["learning_rate"] = *lr;
      if (r2_min) section["r2_min"] = *r2_min;
      if (targets) section["targets"] = *targets;
      if (g.seed) section["seed"] = *g.seed;
      args.k_given = section.contains("k");
      args.train = TrainConfig::from_json(section);
      if (!filter_path.empty()) args.filter = filter_path;
      if (!truth_path.empty()) args.truth = truth_path;
      if (!basis_path.empty()) args.basis = basis_path;
      return emit(cmd_discover(args, out), g.quiet);
    }

    if (*pipe) {
      if (g.config.empty()) return fail(kExitInput, "pipeline needs --config", g.quiet);
      PipelineOptions options{g.seed, fs::path(g.config).parent_path()};
      return emit(cmd_pipeline(read_json(g.config), out, options), g.quiet);
    }

    if (*serve) {
      svc = ServiceConfig::from_environment(svc);
      if (!data_dir.empty()) svc.data_dir = data_dir;
      if (!static_dir.empty()) svc.static_dir = static_dir;
      Service service(svc);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const int port = service.start();
      if (g.quiet) {
        std::cout << json{{"port", port}, {"data_dir", svc.data_dir.string()}}.dump() << std::endl;
      } else {
        std::cout << "serving on http://" << svc.host << ":" << port << " (data in " << svc.data_dir.string() << ")"
                  << std::endl;
      }
      service.wait();
      g_service = nullptr;
      return kExitOk;
    }
  } catch (const Error& e) {
    return fail(kExitInput, e.what(), g.quiet);
  } catch (const json::exception& e) {
    return fail(kExitInput, std::string("config: ") + e.what(), g.quiet);
  }
  return kExitInput;
}

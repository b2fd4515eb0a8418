#include "pilaw/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <map>
#include <numeric>
#include <random>
#include <stop_token>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "pilaw/hash.hpp"
#include "pilaw/pipeline.hpp"

namespace pilaw {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- store ----------------------------------------------------------------------

ContentStore::ContentStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "objects", ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create store at " + root_.string() + ": " + ec.message());
}

fs::path ContentStore::path_of(const std::string& id) const { return root_ / "objects" / id; }

namespace {

bool is_hex_id(const std::string& id) {
  return id.size() == 64 && std::all_of(id.begin(), id.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

}  // namespace

std::string ContentStore::put(std::string_view bytes) {
  const std::string id = sha256_hex(bytes);
  std::lock_guard lock(mutex_);
  if (!fs::exists(path_of(id))) write_file_atomic(path_of(id), bytes);
  return id;
}

std::optional<std::string> ContentStore::get(const std::string& id) const {
  if (!is_hex_id(id)) return std::nullopt;
  std::lock_guard lock(mutex_);
  if (!fs::exists(path_of(id))) return std::nullopt;
  return read_file(path_of(id));
}

bool ContentStore::contains(const std::string& id) const {
  if (!is_hex_id(id)) return false;
  std::lock_guard lock(mutex_);
  return fs::exists(path_of(id));
}

ServiceConfig ServiceConfig::from_environment(ServiceConfig base) {
  if (const char* dir = std::getenv("PILAW_DATA_DIR"); dir && *dir) base.data_dir = dir;
  if (const char* w = std::getenv("PILAW_WORKERS"); w && *w) {
    char* end = nullptr;
    const auto n = std::strtoul(w, &end, 10);
    if (end && *end == '\0' && n > 0) base.workers = n;
  }
  return base;
}

// --- service state ------------------------------------------------------------------

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string random_token() {
  std::random_device rd;
  std::string out;
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) {
    const auto byte = rd() & 0xffu;
    out += kHex[byte >> 4];
    out += kHex[byte & 0xf];
  }
  return out;
}

struct HttpError {
  int status;
  std::string message;
  std::string code;
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoNullSpace:
    case ErrorCode::DegenerateData:
    case ErrorCode::TooFewSamples:
    case ErrorCode::RankDeficient:
    case ErrorCode::Overflow:
      return 422;
    default:
      return 400;
  }
}

struct AnalysisState {
  json request;  // dimension_matrix, output_column, normalize, log_base
  std::string output_column;
  Analysis analysis;
  std::vector<double> y;
};

struct Session {
  std::shared_ptr<const AnalysisState> state;
  std::map<std::size_t, FilterOutcome> filters;  // keyed by slice count, 0 = default
  std::optional<std::size_t> suggested_k;
};

enum class JobState { Queued, Running, Done, Failed };

std::string to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "failed";
}

struct RunTrack {
  std::size_t epochs_done = 0;
  std::vector<std::pair<std::size_t, double>> losses;
  bool finished = false;
  bool failed = false;
  std::optional<double> r2_test;
};

struct Job {
  std::string id;
  std::string kind = "discover";
  std::string dataset_id;
  std::string config_hash;
  TrainConfig config;
  Matrix truth;
  std::shared_ptr<const AnalysisState> analysis;
  std::stop_source stop;

  mutable std::mutex mutex;
  JobState state = JobState::Queued;
  std::vector<RunTrack> runs;
  std::string result_id;
  std::string error;
  double created = 0.0;
  std::optional<double> started;
  std::optional<double> finished;

  json snapshot(double poll_interval) const {
    std::lock_guard lock(mutex);
    std::size_t completed = 0, accepted = 0, epochs = 0;
    json runs_json = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& r = runs[i];
      if (r.finished) ++completed;
      if (r.r2_test && *r.r2_test >= config.r2_min) ++accepted;
      epochs += r.finished ? config.epochs : r.epochs_done;
      json losses = json::array();
      for (const auto& [e, l] : r.losses) losses.push_back({e, l});
      runs_json.push_back({{"run", i},
                           {"epochs_done", r.finished ? config.epochs : r.epochs_done},
                           {"loss", losses},
                           {"finished", r.finished},
                           {"failed", r.failed},
                           {"r2_test", r.r2_test ? json(*r.r2_test) : json()}});
    }
    const double total = static_cast<double>(runs.size() * config.epochs);
    json j{{"id", id},
           {"kind", kind},
           {"dataset_id", dataset_id},
           {"state", to_string(state)},
           {"progress",
            {{"completed_runs", completed},
             {"total_runs", runs.size()},
             {"epoch_fraction", total > 0 ? static_cast<double>(epochs) / total : 0.0}}},
           {"accepted_so_far", accepted},
           {"runs", runs_json},
           {"config", config.to_json()},
           {"created", created},
           {"started", started ? json(*started) : json()},
           {"finished", finished ? json(*finished) : json()},
           {"error", error.empty() ? json() : json(error)},
           {"result", state == JobState::Done ? json("/api/results/" + id) : json()},
           {"poll_interval", poll_interval}};
    return j;
  }
};

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  ContentStore store;
  httplib::Server server;
  std::thread listener;
  int bound_port = 0;

  std::mutex sessions_mutex;
  std::map<std::string, Session> sessions;

  std::mutex jobs_mutex;
  std::condition_variable jobs_cv;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::deque<std::shared_ptr<Job>> queue;
  bool shutting_down = false;
  std::vector<std::thread> workers;
  std::size_t ensemble_threads = 1;

  explicit Impl(ServiceConfig cfg) : config(std::move(cfg)), store(config.data_dir) {
    std::error_code ec;
    fs::create_directories(config.data_dir / "sessions", ec);
    fs::create_directories(config.data_dir / "jobs", ec);
    load_jobs();
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n = config.workers ? config.workers : hw;
    ensemble_threads = std::max<std::size_t>(1, hw / n);
    for (std::size_t i = 0; i < n; ++i) workers.emplace_back([this] { worker_loop(); });
    routes();
  }

  ~Impl() {
    {
      std::lock_guard lock(jobs_mutex);
      shutting_down = true;
      for (auto& [_, job] : jobs) job->stop.request_stop();
    }
    jobs_cv.notify_all();
    server.stop();
    if (listener.joinable()) listener.join();
    for (auto& w : workers) w.join();
  }

  // --- persistence ---

  void load_jobs() {
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(config.data_dir / "jobs", ec)) {
      try {
        const auto j = json::parse(read_file(entry.path()));
        auto job = std::make_shared<Job>();
        job->id = j.at("id").get<std::string>();
        job->dataset_id = j.value("dataset_id", std::string());
        job->config = TrainConfig::from_json(j.at("config"));
        job->state = j.at("state").get<std::string>() == "done" ? JobState::Done : JobState::Failed;
        job->result_id = j.value("result_id", std::string());
        job->error = j["error"].is_string() ? j["error"].get<std::string>() : std::string();
        job->created = j.value("created", 0.0);
        if (j["finished"].is_number()) job->finished = j["finished"].get<double>();
        job->runs.resize(job->config.ensemble_size);
        for (auto& r : job->runs) r.finished = true;
        if (j.contains("runs")) {
          for (const auto& r : j["runs"]) {
            const auto i = r.at("run").get<std::size_t>();
            if (i >= job->runs.size()) continue;
            job->runs[i].failed = r.value("failed", false);
            if (r["r2_test"].is_number()) job->runs[i].r2_test = r["r2_test"].get<double>();
            for (const auto& l : r.value("loss", json::array())) {
              job->runs[i].losses.emplace_back(l.at(0).get<std::size_t>(), l.at(1).get<double>());
            }
          }
        }
        jobs[job->id] = job;
      } catch (const std::exception&) {
        // unreadable record: skip it
      }
    }
  }

  void persist_job(const Job& job) {
    json j = job.snapshot(config.poll_interval);
    j["result_id"] = job.result_id;
    write_file_atomic(config.data_dir / "jobs" / (job.id + ".json"), j.dump());
  }

  void persist_session(const std::string& dataset_id, const json& request) {
    write_file_atomic(config.data_dir / "sessions" / (dataset_id + ".json"), request.dump());
  }

  // --- analysis helpers ---

  std::string raw_dataset(const std::string& id) {
    auto bytes = store.get(id);
    if (!bytes) throw HttpError{404, "unknown dataset_id '" + id + "'", "NotFound"};
    return *bytes;
  }

  std::shared_ptr<const AnalysisState> compute_analysis(const std::string& dataset_id, const json& request) {
    const std::string bytes = raw_dataset(dataset_id);
    const Table table = parse_table(bytes);
    std::string output = request.value("output_column", std::string());
    if (output.empty()) {
      output = std::find(table.columns.begin(), table.columns.end(), "p_star") != table.columns.end()
                   ? "p_star"
                   : table.columns.back();
    }
    Dataset data = parse_csv(bytes, output);
    const bool normalize = request.value("normalize", true);
    if (normalize) data = normalize_max(data);
    const std::string base = request.value("log_base", std::string("e"));
    if (base != "e" && base != "10") throw Error(ErrorCode::BadConfig, "log_base must be \"e\" or \"10\"");
    if (!request.contains("dimension_matrix")) throw Error(ErrorCode::BadConfig, "dimension_matrix is required");
    const auto dims = DimensionMatrix::from_json(request.at("dimension_matrix"));
    auto state = std::make_shared<AnalysisState>(AnalysisState{
        {{"dimension_matrix", dims.to_json()}, {"output_column", output}, {"normalize", normalize}, {"log_base", base}},
        output,
        analyze(data, dims, base == "e" ? LogBase::Natural : LogBase::Ten),
        data.output});
    return state;
  }

  /// Session for a dataset, reloading a persisted analysis request after restart.
  Session& session_for(const std::string& dataset_id, std::unique_lock<std::mutex>& lock) {
    auto it = sessions.find(dataset_id);
    if (it != sessions.end() && it->second.state) return it->second;
    const fs::path file = config.data_dir / "sessions" / (dataset_id + ".json");
    if (!is_hex_id(dataset_id) || !fs::exists(file)) {
      if (!store.contains(dataset_id)) throw HttpError{404, "unknown dataset_id '" + dataset_id + "'", "NotFound"};
      throw HttpError{404, "dataset '" + dataset_id + "' has not been analyzed", "NotAnalyzed"};
    }
    lock.unlock();
    auto state = compute_analysis(dataset_id, json::parse(read_file(file)));
    lock.lock();
    auto& s = sessions[dataset_id];
    if (!s.state) s.state = std::move(state);
    return s;
  }

  // --- handlers ---

  json handle_upload(const std::string& body) {
    if (body.empty()) throw HttpError{400, "empty body: expected CSV text", "ParseError"};
    const Table table = parse_table(body);
    if (table.values.rows() == 0) throw HttpError{400, "CSV has a header but no data rows", "ParseError"};
    const std::string id = store.put(body);
    json stats = json::array();
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      const auto col = table.values.column(c);
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
      double ss = 0.0;
      for (double v : col) ss += (v - mean) * (v - mean);
      const double sd = col.size() > 1 ? std::sqrt(ss / static_cast<double>(col.size() - 1)) : 0.0;
      stats.push_back({{"column", table.columns[c]},
                       {"min", *std::min_element(col.begin(), col.end())},
                       {"max", *std::max_element(col.begin(), col.end())},
                       {"mean", mean},
                       {"std", sd}});
    }
    return {{"dataset_id", id}, {"columns", table.columns}, {"row_count", table.values.rows()}, {"stats", stats}};
  }

  json handle_analyze(const json& body) {
    const std::string id = body.at("dataset_id").get<std::string>();
    raw_dataset(id);
    json request = json::object();
    for (const char* key : {"dimension_matrix", "output_column", "normalize", "log_base"})
      if (body.contains(key)) request[key] = body[key];
    auto state = compute_analysis(id, request);
    persist_session(id, state->request);
    {
      std::lock_guard lock(sessions_mutex);
      auto& s = sessions[id];
      if (!s.state || s.state->request != state->request) {
        s.filters.clear();
        s.suggested_k.reset();
      }
      s.state = state;
    }
    json j = analysis_json(state->analysis, 20);
    j["dataset_id"] = id;
    j["output_column"] = state->output_column;
    j["normalized"] = state->request["normalize"];
    return j;
  }

  json handle_filter(const json& body) {
    const std::string id = body.at("dataset_id").get<std::string>();
    const double threshold = body.value("threshold", kDefaultThreshold);
    std::optional<std::size_t> slices;
    if (body.contains("H") && !body["H"].is_null()) slices = body["H"].get<std::size_t>();
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(ErrorCode::BadConfig, "threshold must lie in [0, 1]");

    std::unique_lock lock(sessions_mutex);
    Session& s = session_for(id, lock);
    const std::size_t key = slices.value_or(0);
    bool recomputed = false;
    FilterOutcome outcome;
    if (auto it = s.filters.find(key); it != s.filters.end()) {
      outcome = FilterOutcome{with_threshold(it->second.pca, threshold), with_threshold(it->second.sir, threshold)};
    } else {
      auto state = s.state;
      lock.unlock();
      outcome = run_filters(state->analysis.features.values, state->y, threshold, slices);
      lock.lock();
      s.filters[key] = outcome;
      recomputed = true;
    }
    s.suggested_k = outcome.consensus_k();
    json j = outcome.to_json();
    j["dataset_id"] = id;
    j["threshold"] = threshold;
    j["recomputed"] = recomputed;
    return j;
  }

  std::pair<int, json> handle_discover(const json& body) {
    const std::string id = body.at("dataset_id").get<std::string>();
    json cfg_json = body.value("train_config", json::object());
    std::shared_ptr<const AnalysisState> state;
    std::optional<std::size_t> suggested;
    {
      std::unique_lock lock(sessions_mutex);
      Session& s = session_for(id, lock);
      state = s.state;
      suggested = s.suggested_k;
    }
    if (!cfg_json.is_object()) throw Error(ErrorCode::BadConfig, "train_config must be an object");
    if (!cfg_json.contains("k")) {
      if (!suggested) throw HttpError{400, "k not given and no filter result for this dataset", "BadConfig"};
      cfg_json["k"] = *suggested;
    }
    const TrainConfig cfg = TrainConfig::from_json(cfg_json);
    const std::size_t nullity = state->analysis.basis.nullity();
    if (cfg.k > nullity) {
      throw HttpError{400, "k=" + std::to_string(cfg.k) + " exceeds the nullity " + std::to_string(nullity), "BadConfig"};
    }
    Matrix truth;
    if (body.contains("truth") && !body["truth"].is_null()) {
      truth = Matrix::from_rows(body["truth"].get<std::vector<std::vector<double>>>());
      if (truth.cols() != nullity) throw HttpError{400, "truth rows must have one entry per basis vector", "BadConfig"};
    }

    const std::string hash = sha256_hex(id + "\n" + state->request.dump() + "\n" + cfg.to_json().dump() + "\n" +
                                        json(truth.to_rows()).dump());
    auto job = std::make_shared<Job>();
    {
      std::lock_guard lock(jobs_mutex);
      for (const auto& [_, other] : jobs) {
        std::lock_guard jl(other->mutex);
        if (other->config_hash == hash && (other->state == JobState::Queued || other->state == JobState::Running)) {
          return {409, {{"error", "an identical job is already " + to_string(other->state)}, {"code", "Conflict"},
                        {"job_id", other->id}}};
        }
      }
      job->id = random_token();
      job->dataset_id = id;
      job->config_hash = hash;
      job->config = cfg;
      job->truth = truth;
      job->analysis = state;
      job->created = now_seconds();
      job->runs.resize(cfg.ensemble_size);
      jobs[job->id] = job;
      queue.push_back(job);
    }
    jobs_cv.notify_one();
    return {202, {{"job_id", job->id}, {"status_url", "/api/jobs/" + job->id}}};
  }

  std::shared_ptr<Job> find_job(const std::string& id) {
    std::lock_guard lock(jobs_mutex);
    auto it = jobs.find(id);
    if (it == jobs.end()) throw HttpError{404, "unknown job '" + id + "'", "NotFound"};
    return it->second;
  }

  // --- workers ---

  void worker_loop() {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(jobs_mutex);
        jobs_cv.wait(lock, [&] { return shutting_down || !queue.empty(); });
        if (shutting_down) return;
        job = queue.front();
        queue.pop_front();
      }
      execute(*job);
    }
  }

  void execute(Job& job) {
    {
      std::lock_guard lock(job.mutex);
      if (job.stop.stop_requested()) {
        job.state = JobState::Failed;
        job.error = "cancelled";
        job.finished = now_seconds();
      } else {
        job.state = JobState::Running;
        job.started = now_seconds();
      }
    }
    if (job.state == JobState::Failed) {
      persist_job(job);
      return;
    }
    try {
      const auto& a = *job.analysis;
      DiscoveryProblem problem{a.analysis.features.values, a.y, job.truth};
      EnsembleOptions opts;
      opts.threads = ensemble_threads;
      opts.stop = job.stop.get_token();
      opts.on_progress = [&job](const RunProgress& p) {
        std::lock_guard lock(job.mutex);
        auto& r = job.runs[p.run];
        if (p.finished) {
          r.finished = true;
          r.failed = p.failed;
          r.r2_test = p.r2_test;
          return;
        }
        r.epochs_done = std::max(r.epochs_done, p.epoch);
        if (r.losses.empty() || r.losses.back().first < p.epoch) r.losses.emplace_back(p.epoch, p.loss);
      };
      const auto e = run_ensemble(problem, job.config, opts);
      json result{{"job_id", job.id},
                  {"dataset_id", job.dataset_id},
                  {"output_column", a.output_column},
                  {"ensemble", e.to_json()},
                  {"gamma_table", table_json(gamma_table(e, job.truth.rows() > 0))},
                  {"groups", group_expressions(e, a.analysis.basis)},
                  {"scatter", e.best() ? table_json(scatter_table(e, problem, a.output_column)) : json()},
                  {"histogram", job.truth.rows() > 0 ? table_json(histogram_table(e)) : json()}};
      const std::string rid = store.put(result.dump());
      std::lock_guard lock(job.mutex);
      job.result_id = rid;
      job.state = JobState::Done;
      job.finished = now_seconds();
      for (auto& r : job.runs) r.finished = true;
    } catch (const std::exception& ex) {
      std::lock_guard lock(job.mutex);
      job.state = JobState::Failed;
      job.error = job.stop.stop_requested() ? "cancelled" : ex.what();
      job.finished = now_seconds();
    }
    try {
      persist_job(job);
    } catch (const std::exception&) {
      // the in-memory record stays authoritative
    }
  }

  // --- routing ---

  static void send_json(httplib::Response& res, int status, const json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  template <typename F>
  static httplib::Server::Handler wrap(F&& body) {
    return [body = std::forward<F>(body)](const httplib::Request& req, httplib::Response& res) {
      try {
        body(req, res);
      } catch (const HttpError& e) {
        send_json(res, e.status, {{"error", e.message}, {"code", e.code}});
      } catch (const Error& e) {
        send_json(res, status_for(e.code()), {{"error", e.what()}, {"code", std::string(to_string(e.code()))}});
      } catch (const json::exception& e) {
        send_json(res, 400, {{"error", std::string("bad request body: ") + e.what()}, {"code", "BadRequest"}});
      }
    };
  }

  static json parse_body(const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw HttpError{400, std::string("body is not valid JSON: ") + e.what(), "BadRequest"};
    }
  }

  void routes() {
    server.set_payload_max_length(kMaxUploadBytes);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.status == 413) {
        res.set_content(json{{"error", "payload exceeds 50 MB"}, {"code", "PayloadTooLarge"}}.dump(),
                        "application/json");
      }
    });

    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"version", PILAW_VERSION}});
    });
    server.Post("/api/datasets", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200, handle_upload(req.body));
                }));
    server.Post("/api/analyze", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200, handle_analyze(parse_body(req)));
                }));
    server.Post("/api/filter", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200, handle_filter(parse_body(req)));
                }));
    server.Post("/api/discover", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  auto [status, j] = handle_discover(parse_body(req));
                  send_json(res, status, j);
                }));
    server.Get("/api/jobs/:id", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, find_job(req.path_params.at("id"))->snapshot(config.poll_interval));
               }));
    server.Post("/api/jobs/:id/cancel", wrap([this](const httplib::Request& req, httplib::Response& res) {
                  auto job = find_job(req.path_params.at("id"));
                  {
                    std::lock_guard lock(job->mutex);
                    if (job->state == JobState::Done || job->state == JobState::Failed) {
                      throw HttpError{409, "job already " + to_string(job->state), "Conflict"};
                    }
                  }
                  job->stop.request_stop();
                  send_json(res, 202, job->snapshot(config.poll_interval));
                }));
    server.Get("/api/results/:id", wrap([this](const httplib::Request& req, httplib::Response& res) {
                 auto job = find_job(req.path_params.at("id"));
                 std::string rid;
                 {
                   std::lock_guard lock(job->mutex);
                   if (job->state != JobState::Done) {
                     throw HttpError{409, "job is " + to_string(job->state) + ", not done", "Conflict"};
                   }
                   rid = job->result_id;
                 }
                 auto bytes = store.get(rid);
                 if (!bytes) throw HttpError{404, "result object missing from the store", "NotFound"};
                 res.status = 200;
                 res.set_content(*bytes, "application/json");
               }));

    if (config.static_dir && fs::is_directory(*config.static_dir)) {
      server.set_mount_point("/", config.static_dir->string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            "<!doctype html><html><head><meta charset=\"utf-8\"><title>pilaw</title></head>"
            "<body><h1>pilaw service</h1><p>UI bundle not installed. The JSON API lives under "
            "<code>/api/</code>.</p></body></html>",
            "text/html");
      });
    }
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::start() {
  auto& s = impl_->server;
  if (impl_->config.port == 0) {
    impl_->bound_port = s.bind_to_any_port(impl_->config.host);
  } else {
    impl_->bound_port = s.bind_to_port(impl_->config.host, impl_->config.port) ? impl_->config.port : -1;
  }
  if (impl_->bound_port <= 0) {
    throw Error(ErrorCode::Io, "cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  }
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->bound_port;
}

bool Service::run() {
  start();
  wait();
  return true;
}

void Service::wait() {
  if (impl_->listener.joinable()) impl_->listener.join();
}

void Service::stop() { impl_->server.stop(); }

int Service::port() const noexcept { return impl_->bound_port; }

}  // namespace pilaw

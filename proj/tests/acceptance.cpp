// Runs every primary acceptance criterion and prints one PASS/FAIL line each.
// Usage: pilaw_acceptance [criterion ...]
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "pilaw/error.hpp"
#include "pilaw/filtering.hpp"
#include "pilaw/hash.hpp"
#include "pilaw/pipeline.hpp"
#include "support.hpp"

using namespace pilaw;
using namespace pilaw::oracle;
using json = nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

DiscoveryProblem problem_for(const SyntheticSpec& spec) {
  const auto c = generate_synthetic(spec);
  const auto data = normalize_max(c.data);
  return {log_pi_features(data, c.basis).values, data.output, Matrix::from_rows(c.gammas)};
}

SyntheticSpec noisy_walkthrough(std::uint64_t seed, double noise) {
  auto s = test::walkthrough_spec(seed);
  if (noise > 0) {
    s.noise.model = NoiseModel::MultiplicativeUniform;
    s.noise.level = noise;
  }
  return s;
}

// --- 1 ---------------------------------------------------------------------

Verdict nullspace_exactness() {
  Rng rng(500, 1);
  const Stopwatch clock;
  std::size_t bad = 0, checked_vectors = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 1 + rng.below(5);
    const std::size_t n = 2 + rng.below(9);
    std::vector<std::string> dims, vars;
    for (std::size_t i = 0; i < d; ++i) dims.push_back("d" + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) vars.push_back("v" + std::to_string(j));
    std::vector<std::vector<int>> rows(d, std::vector<int>(n));
    for (auto& row : rows)
      for (auto& x : row) x = static_cast<int>(rng.below(7)) - 3;
    const DimensionMatrix m(dims, vars, rows);
    const std::size_t r = oracle_rank(m);
    if (r == n) {
      try {
        (void)nullspace_basis(m);
        ++bad;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoNullSpace) ++bad;
      }
      continue;
    }
    const auto b = nullspace_basis(m);
    if (b.nullity() != n - r) ++bad;
    for (const auto& v : b.vectors()) {
      ++checked_vectors;
      for (std::size_t i = 0; i < d; ++i) {
        cpp_int s = 0;
        for (std::size_t j = 0; j < n; ++j) s += cpp_int(rows[i][j]) * cpp_int(v.integer_form[j]);
        if (s != 0) ++bad;
      }
      std::int64_t g = 0;
      for (auto x : v.integer_form) g = std::gcd(g, x < 0 ? -x : x);
      if (g != 1) ++bad;
    }
  }
  const double t = clock.seconds();
  return {bad == 0 && t < 10.0, fmt("%zu violations over 500 matrices (%zu vectors), %.2f s", bad, checked_vectors, t)};
}

// --- 2 ---------------------------------------------------------------------

/// The printed vectors are rounded to 3 decimals, but each has exact zeros in
/// the two trailing free columns it does not use. The exact vector behind each
/// print is the unique null vector with that support, computed here by cofactor
/// expansion on the 4x5 submatrix and independent of the RREF code.
std::vector<double> exact_from_support(const DimensionMatrix& d, std::span<const double> printed) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < printed.size(); ++j)
    if (printed[j] != 0.0) cols.push_back(j);
  const std::size_t rows = d.dim_count();
  std::vector<double> w(printed.size(), 0.0);
  for (std::size_t skip = 0; skip < cols.size(); ++skip) {
    std::vector<std::vector<cpp_int>> minor;
    for (std::size_t i = 0; i < rows; ++i) {
      std::vector<cpp_int> row;
      for (std::size_t c = 0; c < cols.size(); ++c)
        if (c != skip) row.emplace_back(d(i, cols[c]));
      minor.push_back(row);
    }
    // determinant by Laplace expansion is fine at 4x4
    std::function<cpp_int(const std::vector<std::vector<cpp_int>>&)> det = [&](const auto& a) -> cpp_int {
      if (a.size() == 1) return a[0][0];
      cpp_int s = 0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        std::vector<std::vector<cpp_int>> sub;
        for (std::size_t i = 1; i < a.size(); ++i) {
          std::vector<cpp_int> row;
          for (std::size_t j = 0; j < a.size(); ++j)
            if (j != c) row.push_back(a[i][j]);
          sub.push_back(row);
        }
        s += (c % 2 ? -1 : 1) * a[0][c] * det(sub);
      }
      return s;
    };
    w[cols[skip]] = (skip % 2 ? -1.0 : 1.0) * det(minor).convert_to<double>();
  }
  const double nrm = linalg::norm(w);
  const double sign = w[cols[0]] < 0 ? -1.0 : 1.0;
  for (auto& x : w) x *= sign / nrm;
  return w;
}

double residual_onto(std::span<const double> v, const Matrix& span_rows) {
  const Matrix q = linalg::orthonormal_rows(span_rows);
  std::vector<double> r(v.begin(), v.end());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double c = linalg::dot(v, q.row(i));
    for (std::size_t j = 0; j < r.size(); ++j) r[j] -= c * q(i, j);
  }
  return linalg::norm(r);
}

Verdict walkthrough_basis() {
  const auto d = test::walkthrough_matrix();
  const auto b = nullspace_basis(d);
  const Matrix span = b.unit_matrix();
  bool ok = b.nullity() == 3;
  double worst_exact = 0.0, worst_print = 0.0, worst_rounded = 0.0;
  for (const auto& printed : test::walkthrough_printed_basis()) {
    const auto exact = exact_from_support(d, printed);
    worst_print = std::max(worst_print, test::max_abs_diff(exact, printed));
    worst_exact = std::max(worst_exact, residual_onto(exact, span));
    worst_rounded = std::max(worst_rounded, residual_onto(printed, span));
  }
  ok = ok && worst_print <= 5e-4 && worst_exact < 1e-9;
  return {ok, fmt("nullity %zu; exact vectors behind the prints: residual %.1e, agree with printed digits within "
                  "%.1e; 3-decimal prints themselves: residual %.1e",
                  b.nullity(), worst_exact, worst_print, worst_rounded)};
}

// --- 3 ---------------------------------------------------------------------

Verdict single_group_recovery() {
  const Stopwatch clock;
  TrainConfig cfg;
  cfg.lambda = 0.02;
  cfg.ensemble_size = 20;
  const auto e = run_ensemble(problem_for(test::walkthrough_spec(0)), cfg);
  std::size_t good = 0;
  for (auto a : e.accepted) {
    const auto& r = e.runs[a];
    if (r.truth_error && *r.truth_error < 0.10 && r.r2_test && *r.r2_test > 0.99) ++good;
  }
  const double t = clock.seconds();
  const bool ok = !e.accepted.empty() && 5 * good >= 4 * e.accepted.size() && t < 180.0;
  return {ok, fmt("%zu of %zu accepted runs within 0.10 and r2 > 0.99 (%zu runs, %.1f s)", good, e.accepted.size(),
                  e.runs.size(), t)};
}

// --- 4 ---------------------------------------------------------------------

Verdict filtering_ratios() {
  const auto p = problem_for(test::walkthrough_spec(0));
  const auto f = run_filters(p.features, p.y, 0.75, std::nullopt);
  const auto& pr = f.pca.ratios;
  const auto& sr = f.sir.ratios;
  const bool pattern = pr.size() == 4 && std::abs(pr[0] - 0.835) <= 0.05 && pr[1] < 0.15 && pr[2] < 0.15 && pr[3] < 0.05;
  const bool sir = !sr.empty() && std::abs(sr[0] - 0.987) <= 0.03;
  const bool k = f.pca.suggested_k == 1 && f.sir.suggested_k == 1;
  return {pattern && sir && k, fmt("PCA [%.3f, %.3f, %.3f, %.3f] k=%zu, SIR first %.3f k=%zu", pr[0], pr[1], pr[2], pr[3],
                                   f.pca.suggested_k, sr[0], f.sir.suggested_k)};
}

// --- 5 ---------------------------------------------------------------------

Verdict noise_ordering() {
  const double levels[] = {0.0, 0.05, 0.12, 0.20};
  bool ok = true;
  std::ostringstream detail;
  for (double noise : levels) {
    std::size_t sir_wins = 0, sir_above = 0;
    double sir_min = 1.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = problem_for(noisy_walkthrough(seed, noise));
      const auto f = run_filters(p.features, p.y, 0.75, std::nullopt);
      if (f.sir.ratios[0] > f.pca.ratios[0]) ++sir_wins;
      if (f.sir.ratios[0] > 0.75) ++sir_above;
      sir_min = std::min(sir_min, f.sir.ratios[0]);
    }
    ok = ok && sir_wins >= 8;
    if (noise == 0.20) ok = ok && sir_above == 10;
    detail << fmt("noise %.2f: SIR > PCA in %zu/10, min SIR %.3f; ", noise, sir_wins, sir_min);
  }
  return {ok, detail.str()};
}

// --- 6 ---------------------------------------------------------------------

double grid_distance(const DiscoveryResult& r) {
  double s = 0.0;
  for (double x : r.gamma_normalized.data()) s += std::abs(x - std::round(2 * x) / 2);
  return s / static_cast<double>(r.gamma_normalized.data().size());
}

Verdict quantization_effect() {
  const auto noisy = problem_for(noisy_walkthrough(0, 0.12));
  TrainConfig cfg;
  cfg.ensemble_size = 20;
  cfg.r2_min = -1e9;
  double mean[2] = {0, 0};
  const double lambdas[2] = {0.0, 0.12};
  for (int i = 0; i < 2; ++i) {
    cfg.lambda = lambdas[i];
    const auto e = run_ensemble(noisy, cfg);
    for (const auto& r : e.runs) mean[i] += grid_distance(r);
    mean[i] /= static_cast<double>(e.runs.size());
  }
  const bool tighter = mean[1] < mean[0];

  const auto heavy = problem_for(noisy_walkthrough(0, 0.20));
  cfg.lambda = 0.12;
  cfg.r2_min = 0.5;
  cfg.r2_margin = 0.02;
  const auto e = run_ensemble(heavy, cfg);
  std::size_t below = 0;
  double acc = 0.0, rej = 0.0;
  std::size_t n_acc = 0, n_rej = 0;
  const std::set<std::size_t> accepted(e.accepted.begin(), e.accepted.end());
  for (std::size_t i = 0; i < e.runs.size(); ++i) {
    const double err = e.runs[i].truth_error.value_or(INFINITY);
    if (err < 0.15) ++below;
    if (accepted.count(i)) {
      acc += err;
      ++n_acc;
    } else {
      rej += err;
      ++n_rej;
    }
  }
  const double mean_acc = n_acc ? acc / static_cast<double>(n_acc) : INFINITY;
  const double mean_rej = n_rej ? rej / static_cast<double>(n_rej) : INFINITY;
  const bool bimodal = below >= 2 && n_acc > 0 && n_rej > 0 && mean_acc < mean_rej;
  return {tighter && bimodal,
          fmt("12%% noise grid distance %.4f (lambda 0) vs %.4f (lambda 0.12); 20%% noise: %zu runs below 0.15, "
              "accepted %zu mean error %.3f vs rejected %zu mean error %.3f",
              mean[0], mean[1], below, n_acc, mean_acc, n_rej, mean_rej)};
}

// --- 7 ---------------------------------------------------------------------

Verdict two_group_subspace() {
  const Stopwatch clock;
  const auto config = read_json(fs::path(PILAW_SOURCE_DIR) / "configs" / "two_group.json");
  const auto spec = SyntheticSpec::from_json(config["generate"]);
  json train = config["discover"];
  train.erase("enabled");
  train.erase("threads");
  const auto cfg = TrainConfig::from_json(train);
  const auto p = problem_for(spec);
  const auto e = run_ensemble(p, cfg);
  double worst = 0.0;
  const Matrix truth = Matrix::from_rows({{1, 1, 0}, {2, 0, 1}});
  for (auto a : e.accepted)
    for (double r : subspace_residual(e.runs[a].gamma_normalized, truth)) worst = std::max(worst, r);

  const Matrix expected = Matrix::from_rows({{1, 0, 0.5}, {0, 1, -0.5}});
  double sparse_err = INFINITY;
  if (e.subspace && e.subspace->rows() == 2) {
    sparse_err = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      double plus = 0.0, minus = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        plus = std::max(plus, std::abs((*e.subspace)(i, j) - expected(i, j)));
        minus = std::max(minus, std::abs(-(*e.subspace)(i, j) - expected(i, j)));
      }
      sparse_err = std::max(sparse_err, std::min(plus, minus));
    }
  }
  const double t = clock.seconds();
  const bool ok = !e.accepted.empty() && worst < 0.15 && sparse_err <= 0.10 && t < 600.0;
  std::string rows;
  if (e.subspace)
    for (std::size_t i = 0; i < e.subspace->rows(); ++i)
      rows += fmt(" [%.3f, %.3f, %.3f]", (*e.subspace)(i, 0), (*e.subspace)(i, 1), (*e.subspace)(i, 2));
  return {ok, fmt("%zu/%zu accepted, worst residual %.3f, sparsified%s (max deviation %.3f), %.1f s", e.accepted.size(),
                  e.runs.size(), worst, rows.c_str(), sparse_err, t)};
}

// --- 8 ---------------------------------------------------------------------

Verdict oracle_suites() {
  Rng rng(8, 8);
  std::size_t quant_mismatch = 0;
  const TargetSet sets[] = {TargetSet::Integer, TargetSet::HalfInteger, TargetSet::QuarterInteger};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> g(1 + rng.below(6));
    for (auto& x : g) x = rng.uniform(-7, 7);
    if (quantization_loss(g, sets[trial % 3]) != brute_force_quantization(g, sets[trial % 3])) ++quant_mismatch;
  }

  double grad_worst = 0.0;
  int problems = 0;
  for (int attempt = 0; attempt < 400 && problems < 20; ++attempt) {
    Network net = build_network(1 + attempt % 2, 3, 2 + attempt % 3, 6, 1000 + attempt);
    Matrix x(8, 3);
    std::vector<double> y(8);
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1, 1);
      y[r] = rng.uniform(-1, 1);
    }
    double margin = INFINITY;
    for (std::size_t r = 0; r < 8; ++r) margin = std::min(margin, reference_forward(net, x.row(r)).min_abs_pre);
    if (margin < 1e-3) continue;
    ++problems;
    GradientEvaluator eval(net.architecture());
    std::vector<double> grad(net.params().size());
    (void)eval.evaluate(net, x, y, grad);
    const double eps = 1e-5;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double saved = net.params()[i];
      net.params()[i] = saved + eps;
      const double up = mse(net, x, y);
      net.params()[i] = saved - eps;
      const double down = mse(net, x, y);
      net.params()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      grad_worst = std::max(grad_worst, std::abs(grad[i] - numeric) / std::max({std::abs(grad[i]), std::abs(numeric), 1e-6}));
    }
  }

  double eig_worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + trial % 2;
    const Matrix a = random_symmetric(rng, n, 1.0 + trial % 5);
    const auto eig = linalg::jacobi_eigen(a);
    const auto roots = char_poly_roots(a);
    for (std::size_t i = 0; i < n; ++i) eig_worst = std::max(eig_worst, std::abs(eig.values[i] - roots[i]));
  }
  const bool ok = quant_mismatch == 0 && problems >= 10 && grad_worst < 1e-5 && eig_worst < 1e-8;
  return {ok, fmt("quantization mismatches %zu/1000; gradient max rel error %.1e over %d problems; eigenvalue max "
                  "error %.1e over 1000 matrices",
                  quant_mismatch, grad_worst, problems, eig_worst)};
}

// --- 9 ---------------------------------------------------------------------

int run_pipeline(const fs::path& out) {
  const std::string cmd = std::string(PILAW_BIN) + " --quiet --config " + PILAW_SOURCE_DIR +
                          "/configs/walkthrough.json --out " + out.string() + " pipeline > " +
                          (out.parent_path() / (out.filename().string() + ".log")).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict cli_end_to_end() {
  const auto dir = test::scratch_dir("acceptance_cli");
  const int first = run_pipeline(dir / "a");
  const int second = run_pipeline(dir / "b");
  if (first != 0 || second != 0) return {false, fmt("exit codes %d and %d", first, second)};
  const auto ma = read_json(dir / "a" / "manifest.json");
  const auto mb = read_json(dir / "b" / "manifest.json");
  std::size_t unparsable = 0, differing = 0, count = 0;
  for (const auto& art : ma["artifacts"]) {
    ++count;
    const auto rel = art["path"].get<std::string>();
    const auto bytes = read_file(dir / "a" / rel);
    try {
      if (art["kind"] == "json") {
        if (!json::accept(bytes)) ++unparsable;
      } else {
        (void)parse_table(bytes, true);
      }
    } catch (const std::exception&) {
      ++unparsable;
    }
    if (sha256_hex(bytes) != art["sha256"] || !fs::exists(dir / "b" / rel) || read_file(dir / "b" / rel) != bytes)
      ++differing;
  }
  const bool same_list = ma["artifacts"] == mb["artifacts"];
  const bool ok = count > 0 && unparsable == 0 && differing == 0 && same_list;
  return {ok, fmt("%zu artifacts, %zu unparsable, %zu differ between runs", count, unparsable, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria = {
      {"null-space exactness", nullspace_exactness},
      {"walkthrough basis", walkthrough_basis},
      {"single-group recovery", single_group_recovery},
      {"filtering ratios", filtering_ratios},
      {"noise robustness ordering", noise_ordering},
      {"quantization effect and bimodality", quantization_effect},
      {"two-group subspace", two_group_subspace},
      {"oracle suites", oracle_suites},
      {"CLI end-to-end", cli_end_to_end},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

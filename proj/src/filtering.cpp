#include "pilaw/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pilaw/error.hpp"
#include "pilaw/linalg.hpp"

namespace pilaw {

namespace {

constexpr double kConstantColumnStd = 1e-12;

FilterReport finish_report(FilterMethod method, const Matrix& covariance, double threshold,
                           const Standardized& s) {
  auto eig = linalg::jacobi_eigen(covariance);
  for (double& v : eig.values) v = std::max(v, 0.0);
  const double total = std::accumulate(eig.values.begin(), eig.values.end(), 0.0);
  if (!(total > 1e-300)) {
    throw Error(ErrorCode::DegenerateData, to_string(method) + ": covariance is zero, no direction explains variance");
  }
  FilterReport report;
  report.method = method;
  report.eigenvalues = eig.values;
  report.ratios.reserve(eig.values.size());
  for (double v : eig.values) report.ratios.push_back(v / total);
  report.directions = std::move(eig.vectors);
  report.threshold = threshold;
  report.suggested_k = estimate_k(report.ratios, threshold);
  report.kept_columns = s.kept;
  report.warnings = s.warnings;
  return report;
}

}  // namespace

std::string to_string(FilterMethod method) { return method == FilterMethod::PCA ? "PCA" : "SIR"; }

Standardized standardize(const Matrix& x) {
  const std::size_t m = x.rows();
  if (m < 2) throw Error(ErrorCode::TooFewSamples, "standardization needs at least two samples");
  Standardized s;
  s.means.resize(x.cols());
  s.stds.resize(x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m; ++r) mean += x(r, c);
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (std::size_t r = 0; r < m; ++r) ss += (x(r, c) - mean) * (x(r, c) - mean);
    s.means[c] = mean;
    s.stds[c] = std::sqrt(ss / static_cast<double>(m - 1));
    if (s.stds[c] > kConstantColumnStd) s.kept.push_back(c);
    else s.warnings.push_back("column " + std::to_string(c) + " is constant and was dropped");
  }
  if (s.kept.empty()) throw Error(ErrorCode::DegenerateData, "all columns are constant");
  s.values = Matrix(m, s.kept.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < s.kept.size(); ++k) {
      const std::size_t c = s.kept[k];
      s.values(r, k) = (x(r, c) - s.means[c]) / s.stds[c];
    }
  return s;
}

std::size_t estimate_k(std::span<const double> ratios, double threshold) {
  double cumulative = 0.0;
  for (std::size_t j = 0; j < ratios.size(); ++j) {
    cumulative += ratios[j];
    if (cumulative >= threshold - 1e-12) return j + 1;
  }
  return ratios.size();
}

std::size_t estimate_k(const FilterReport& report) { return estimate_k(report.ratios, report.threshold); }

FilterReport with_threshold(FilterReport report, double threshold) {
  report.threshold = threshold;
  report.suggested_k = estimate_k(report.ratios, threshold);
  return report;
}

Matrix append_column(const Matrix& x, std::span<const double> y) {
  if (y.size() != x.rows()) throw Error(ErrorCode::LengthMismatch, "column length differs from row count");
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c);
    out(r, x.cols()) = y[r];
  }
  return out;
}

FilterReport pca_report(const Matrix& x, double threshold) {
  const auto s = standardize(x);
  const std::size_t m = s.values.rows();
  const std::size_t q = s.values.cols();
  Matrix cov(q, q);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = i; j < q; ++j) {
      double sum = 0.0;
      for (std::size_t r = 0; r < m; ++r) sum += s.values(r, i) * s.values(r, j);
      cov(i, j) = cov(j, i) = sum / static_cast<double>(m - 1);
    }
  return finish_report(FilterMethod::PCA, cov, threshold, s);
}

std::size_t SirConfig::slice_count(std::size_t samples) const {
  if (slices) return *slices;
  return std::max<std::size_t>(2, std::min<std::size_t>(10, samples / 5));
}

std::vector<std::size_t> slice_sizes(std::size_t samples, std::size_t slices) {
  std::vector<std::size_t> sizes(slices);
  for (std::size_t h = 0; h < slices; ++h) sizes[h] = (h + 1) * samples / slices - h * samples / slices;
  return sizes;
}

FilterReport sir_report(const Matrix& x, std::span<const double> y, const SirConfig& config) {
  const std::size_t m = x.rows();
  if (y.size() != m) throw Error(ErrorCode::LengthMismatch, "response length differs from sample count");
  const std::size_t h_count = config.slice_count(m);
  if (h_count < 2) {
    throw Error(ErrorCode::DegenerateData, "SIR needs at least two slices; a single slice mean equals the grand mean");
  }
  if (m < 2 * h_count) {
    throw Error(ErrorCode::TooFewSamples, "SIR with " + std::to_string(h_count) + " slices needs at least " +
                                              std::to_string(2 * h_count) + " samples, got " + std::to_string(m));
  }
  const auto s = standardize(x);
  const std::size_t q = s.values.cols();

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });

  const auto sizes = slice_sizes(m, h_count);
  Matrix slice_means(h_count, q);
  std::vector<double> weights(h_count);
  std::size_t cursor = 0;
  for (std::size_t h = 0; h < h_count; ++h) {
    for (std::size_t i = 0; i < sizes[h]; ++i, ++cursor) {
      auto row = s.values.row(order[cursor]);
      for (std::size_t c = 0; c < q; ++c) slice_means(h, c) += row[c];
    }
    for (std::size_t c = 0; c < q; ++c) slice_means(h, c) /= static_cast<double>(sizes[h]);
    weights[h] = static_cast<double>(sizes[h]) / static_cast<double>(m);
  }

  std::vector<double> grand(q, 0.0);
  for (std::size_t h = 0; h < h_count; ++h)
    for (std::size_t c = 0; c < q; ++c) grand[c] += weights[h] * slice_means(h, c);

  Matrix cov(q, q);
  for (std::size_t h = 0; h < h_count; ++h)
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < q; ++j)
        cov(i, j) += weights[h] * (slice_means(h, i) - grand[i]) * (slice_means(h, j) - grand[j]);

  return finish_report(FilterMethod::SIR, cov, config.threshold, s);
}

nlohmann::json FilterReport::to_json() const {
  return {{"method", to_string(method)},
          {"eigenvalues", eigenvalues},
          {"ratios", ratios},
          {"suggested_k", suggested_k},
          {"threshold", threshold},
          {"directions", directions.to_rows()},
          {"kept_columns", kept_columns},
          {"warnings", warnings}};
}

FilterReport FilterReport::from_json(const nlohmann::json& j) {
  try {
    FilterReport r;
    const auto method = j.at("method").get<std::string>();
    if (method == "PCA") r.method = FilterMethod::PCA;
    else if (method == "SIR") r.method = FilterMethod::SIR;
    else throw Error(ErrorCode::ParseError, "unknown filter method " + method);
    r.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    r.ratios = j.at("ratios").get<std::vector<double>>();
    r.suggested_k = j.at("suggested_k").get<std::size_t>();
    r.threshold = j.at("threshold").get<double>();
    r.directions = Matrix::from_rows(j.at("directions").get<std::vector<std::vector<double>>>());
    r.kept_columns = j.value("kept_columns", std::vector<std::size_t>{});
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("filter report: ") + e.what());
  }
}

}  // namespace pilaw

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pilaw/matrix.hpp"

namespace pilaw {

struct Architecture {
  std::size_t groups = 1;         // k: rows of the gamma layer
  std::size_t basis = 1;          // N - r: inputs to the gamma layer
  std::size_t hidden_layers = 4;  // ReLU layers
  std::size_t width = 10;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Gamma layer (k x n, no bias, no activation), `hidden_layers` ReLU layers
/// of `width` units, and a linear scalar output. All parameters live in one
/// flat vector so the optimizer can treat them uniformly:
///   [gamma | W0 b0 | W1 b1 | ... | W_out b_out]
class Network {
 public:
  Network(Architecture arch, std::vector<double> params);

  [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }
  [[nodiscard]] std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }

  [[nodiscard]] std::span<const double> gamma_row(std::size_t j) const;
  [[nodiscard]] Matrix gamma() const;
  [[nodiscard]] std::size_t gamma_size() const noexcept { return arch_.groups * arch_.basis; }

  /// (rows, cols) of every weight matrix, gamma layer first.
  [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> layer_shapes() const;

  [[nodiscard]] double predict(std::span<const double> x) const;
  [[nodiscard]] std::vector<double> predict(const Matrix& x) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static Network from_json(const nlohmann::json& j);

  static std::size_t parameter_count(const Architecture& arch);

  friend bool operator==(const Network&, const Network&) = default;

 private:
  friend class GradientEvaluator;

  struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weights = 0;  // offset of the out x in block
    std::size_t bias = 0;     // offset of the bias vector
    friend bool operator==(const Dense&, const Dense&) = default;
  };

  void build_layout();

  Architecture arch_;
  std::vector<double> params_;
  std::vector<Dense> layers_;  // hidden layers then the output layer
};

inline constexpr std::uint64_t kStreamNetworkInit = 1u << 23;

/// Throws BadArchitecture unless 1 <= k <= n_basis and width >= 1.
Network build_network(std::size_t k, std::size_t n_basis, std::size_t hidden_layers, std::size_t width,
                      std::uint64_t seed);

/// Mean squared prediction error with reverse-mode gradients. Owns scratch
/// buffers; one instance per thread.
class GradientEvaluator {
 public:
  explicit GradientEvaluator(const Architecture& arch);

  /// Returns the MSE over the rows of x; writes d(MSE)/d(params) into grad.
  double evaluate(const Network& net, const Matrix& x, std::span<const double> y, std::span<double> grad);

 private:
  std::vector<std::vector<double>> pre_;   // pre-activations per dense layer
  std::vector<std::vector<double>> post_;  // activations per dense layer input
  std::vector<std::vector<double>> delta_;
};

}  // namespace pilaw

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pilaw/dataset.hpp"
#include "pilaw/dimension.hpp"
#include "pilaw/rng.hpp"

namespace pilaw::test {

inline DimensionMatrix walkthrough_matrix() {
  return DimensionMatrix({"M", "L", "T", "Theta"}, {"p1", "p2", "p3", "p4", "p5", "p6", "p7"},
                         {{2, -2, -1, 2, 2, 2, 0},
                          {-2, 0, 0, 1, 1, 0, 0},
                          {1, -2, 0, -1, 2, -1, 1},
                          {0, 2, -2, 1, 2, -2, 2}});
}

/// Printed unit basis vectors for the walkthrough matrix (3 decimals).
inline std::vector<std::vector<double>> walkthrough_printed_basis() {
  return {{0.259, 0.376, 0.803, 0.181, 0.337, 0, 0},
          {0.265, 0.059, 0.706, 0.530, 0, -0.383, 0},
          {0.177, 0.142, 0.781, 0.355, 0, 0, 0.461}};
}

inline SyntheticSpec walkthrough_spec(std::uint64_t seed = 0) {
  SyntheticSpec s{.dimension_matrix = walkthrough_matrix(), .gammas = {{1, 1, 0}}, .law = {}, .discrete_levels = std::nullopt, .noise = {}};
  s.law.form = ScalingLaw::Form::Poly;
  s.law.coeffs = {2, 1, 2};
  s.seed = seed;
  return s;
}

inline SyntheticSpec two_group_spec(std::uint64_t seed = 0, double noise = 0.0) {
  SyntheticSpec s{.dimension_matrix = walkthrough_matrix(), .gammas = {{1, 1, 0}, {2, 0, 1}}, .law = {}, .discrete_levels = std::nullopt, .noise = {}};
  ScalingLaw e;
  e.form = ScalingLaw::Form::Exp;
  e.a = 1;
  e.b = 2;
  e.group = 0;
  ScalingLaw p;
  p.form = ScalingLaw::Form::Pow;
  p.c = -0.5;
  p.group = 1;
  s.law.form = ScalingLaw::Form::Sum;
  s.law.terms = {e, p};
  if (noise > 0) {
    s.noise.model = NoiseModel::MultiplicativeUniform;
    s.noise.level = noise;
  }
  s.seed = seed;
  return s;
}

/// Pi = prod_l p_l^w_l, computed directly with pow rather than through logs.
inline double power_product(std::span<const double> p, std::span<const double> w) {
  double out = 1.0;
  for (std::size_t l = 0; l < p.size(); ++l) out *= std::pow(p[l], w[l]);
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pilaw_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace pilaw::test

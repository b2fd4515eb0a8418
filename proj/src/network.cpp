#include "pilaw/network.hpp"

#include <algorithm>
#include <cmath>

#include "pilaw/error.hpp"
#include "pilaw/rng.hpp"

namespace pilaw {

std::size_t Network::parameter_count(const Architecture& arch) {
  std::size_t count = arch.groups * arch.basis;
  std::size_t in = arch.groups;
  for (std::size_t l = 0; l < arch.hidden_layers; ++l) {
    count += arch.width * in + arch.width;
    in = arch.width;
  }
  return count + in + 1;
}

Network::Network(Architecture arch, std::vector<double> params) : arch_(arch), params_(std::move(params)) {
  if (arch_.groups < 1 || arch_.basis < arch_.groups || (arch_.hidden_layers > 0 && arch_.width < 1)) {
    throw Error(ErrorCode::BadArchitecture, "need 1 <= k <= n_basis and width >= 1");
  }
  if (params_.size() != parameter_count(arch_)) {
    throw Error(ErrorCode::BadArchitecture, "parameter vector has " + std::to_string(params_.size()) +
                                                " entries, architecture needs " +
                                                std::to_string(parameter_count(arch_)));
  }
  build_layout();
}

void Network::build_layout() {
  layers_.clear();
  std::size_t offset = gamma_size();
  std::size_t in = arch_.groups;
  for (std::size_t l = 0; l <= arch_.hidden_layers; ++l) {
    const std::size_t out = l == arch_.hidden_layers ? 1 : arch_.width;
    Dense d{in, out, offset, offset + out * in};
    offset = d.bias + out;
    layers_.push_back(d);
    in = out;
  }
}

std::span<const double> Network::gamma_row(std::size_t j) const {
  return std::span<const double>(params_).subspan(j * arch_.basis, arch_.basis);
}

Matrix Network::gamma() const {
  Matrix g(arch_.groups, arch_.basis);
  for (std::size_t j = 0; j < arch_.groups; ++j)
    for (std::size_t i = 0; i < arch_.basis; ++i) g(j, i) = params_[j * arch_.basis + i];
  return g;
}

std::vector<std::pair<std::size_t, std::size_t>> Network::layer_shapes() const {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  shapes.emplace_back(arch_.groups, arch_.basis);
  for (const auto& d : layers_) shapes.emplace_back(d.out, d.in);
  return shapes;
}

double Network::predict(std::span<const double> x) const {
  std::vector<double> act(arch_.groups, 0.0);
  for (std::size_t j = 0; j < arch_.groups; ++j)
    for (std::size_t i = 0; i < arch_.basis; ++i) act[j] += params_[j * arch_.basis + i] * x[i];
  std::vector<double> next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& d = layers_[l];
    next.assign(d.out, 0.0);
    for (std::size_t o = 0; o < d.out; ++o) {
      double s = params_[d.bias + o];
      const double* w = &params_[d.weights + o * d.in];
      for (std::size_t i = 0; i < d.in; ++i) s += w[i] * act[i];
      next[o] = l + 1 < layers_.size() ? std::max(0.0, s) : s;
    }
    act.swap(next);
  }
  return act[0];
}

std::vector<double> Network::predict(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict(x.row(r));
  return out;
}

nlohmann::json Network::to_json() const {
  return {{"architecture",
           {{"groups", arch_.groups}, {"basis", arch_.basis}, {"hidden_layers", arch_.hidden_layers},
            {"width", arch_.width}}},
          {"layout", "gamma(k x n) | per hidden layer W(width x in) b(width) | W_out(1 x in) b_out(1); row-major"},
          {"parameters", params_}};
}

Network Network::from_json(const nlohmann::json& j) {
  try {
    const auto& a = j.at("architecture");
    Architecture arch{a.at("groups").get<std::size_t>(), a.at("basis").get<std::size_t>(),
                      a.at("hidden_layers").get<std::size_t>(), a.at("width").get<std::size_t>()};
    return Network(arch, j.at("parameters").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("network: ") + e.what());
  }
}

Network build_network(std::size_t k, std::size_t n_basis, std::size_t hidden_layers, std::size_t width,
                      std::uint64_t seed) {
  const Architecture arch{k, n_basis, hidden_layers, width};
  if (k < 1 || n_basis < k || (hidden_layers > 0 && width < 1)) {
    throw Error(ErrorCode::BadArchitecture, "need 1 <= k <= n_basis and width >= 1 (k=" + std::to_string(k) +
                                                ", n_basis=" + std::to_string(n_basis) + ")");
  }
  Rng rng(seed, kStreamNetworkInit);
  std::vector<double> params;
  params.reserve(Network::parameter_count(arch));
  for (std::size_t i = 0; i < k * n_basis; ++i) params.push_back(rng.uniform(-1.0, 1.0));
  std::size_t in = k;
  for (std::size_t l = 0; l <= hidden_layers; ++l) {
    const bool output = l == hidden_layers;
    const std::size_t out = output ? 1 : width;
    // He-normal weights for ReLU layers, Glorot-style for the linear output.
    const double w_scale = std::sqrt((output ? 1.0 : 2.0) / static_cast<double>(in));
    const double b_scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < out * in; ++i) params.push_back(w_scale * rng.normal());
    for (std::size_t i = 0; i < out; ++i) params.push_back(output ? 0.0 : rng.uniform(-b_scale, b_scale));
    in = out;
  }
  return Network(arch, std::move(params));
}

GradientEvaluator::GradientEvaluator(const Architecture& arch) {
  const std::size_t dense = arch.hidden_layers + 1;
  pre_.resize(dense);
  delta_.resize(dense);
  post_.resize(dense + 1);
  post_[0].resize(arch.groups);
  for (std::size_t l = 0; l < dense; ++l) {
    const std::size_t out = l == arch.hidden_layers ? 1 : arch.width;
    pre_[l].resize(out);
    delta_[l].resize(out);
    post_[l + 1].resize(out);
  }
}

double GradientEvaluator::evaluate(const Network& net, const Matrix& x, std::span<const double> y,
                                   std::span<double> grad) {
  const auto& arch = net.arch_;
  const auto& layers = net.layers_;
  const double* p = net.params_.data();
  double* g = grad.data();
  std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t m = x.rows();
  const double inv_m = 1.0 / static_cast<double>(m);
  const std::size_t dense = layers.size();
  std::vector<double> dz(arch.groups);

  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const auto xr = x.row(r);
    for (std::size_t j = 0; j < arch.groups; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < arch.basis; ++i) s += p[j * arch.basis + i] * xr[i];
      post_[0][j] = s;
    }
    for (std::size_t l = 0; l < dense; ++l) {
      const auto& d = layers[l];
      const double* in = post_[l].data();
      for (std::size_t o = 0; o < d.out; ++o) {
        const double* w = p + d.weights + o * d.in;
        double s = p[d.bias + o];
        for (std::size_t i = 0; i < d.in; ++i) s += w[i] * in[i];
        pre_[l][o] = s;
        post_[l + 1][o] = l + 1 < dense ? (s > 0.0 ? s : 0.0) : s;
      }
    }
    const double err = post_[dense][0] - y[r];
    loss += err * err;

    delta_[dense - 1][0] = 2.0 * err * inv_m;
    for (std::size_t l = dense; l-- > 0;) {
      const auto& d = layers[l];
      const double* in = post_[l].data();
      const double* delta = delta_[l].data();
      for (std::size_t o = 0; o < d.out; ++o) {
        const double dl = delta[o];
        if (dl == 0.0) continue;
        double* gw = g + d.weights + o * d.in;
        for (std::size_t i = 0; i < d.in; ++i) gw[i] += dl * in[i];
        g[d.bias + o] += dl;
      }
      // Gradient with respect to this layer's input.
      double* back = l > 0 ? delta_[l - 1].data() : dz.data();
      for (std::size_t i = 0; i < d.in; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < d.out; ++o) s += p[d.weights + o * d.in + i] * delta[o];
        back[i] = (l > 0 && pre_[l - 1][i] <= 0.0) ? 0.0 : s;
      }
    }
    for (std::size_t j = 0; j < arch.groups; ++j) {
      const double dj = dz[j];
      for (std::size_t i = 0; i < arch.basis; ++i) g[j * arch.basis + i] += dj * xr[i];
    }
  }
  return loss * inv_m;
}

}  // namespace pilaw

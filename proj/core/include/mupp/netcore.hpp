#pragma once

#include "mupp/param_algebra.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mupp {

enum class ActivationKind { relu, tanh, sigma_gelu };

struct Activation {
  ActivationKind kind = ActivationKind::tanh;
  double sigma = 0.05;  // sigma_gelu only
};

double sigma_gelu(double x, double sigma);
/// d/dx sigma_gelu = (1 + erf(x/σ)) / 2.
double sigma_gelu_deriv(double x, double sigma);
double activate(const Activation& act, double x);
double activate_deriv(const Activation& act, double x);
/// "relu", "tanh", "sigma_gelu" or "sigma_gelu(0.05)".
std::string to_string(const Activation& act);
Activation parse_activation(const std::string& text);

enum class LossKind { mse, cross_entropy };
std::string to_string(LossKind kind);
LossKind parse_loss(const std::string& text);

/// Depth L counts hidden layers, so there are L+1 weight matrices.
struct NetShape {
  int L = 2;
  int d_in = 16;
  int width = 64;
  int d_out = 4;
};

using Weights = std::vector<Eigen::MatrixXd>;

struct NetworkState {
  Weights layers;                   // W^l has shape fan_out × fan_in
  std::vector<double> multipliers;  // n^{-a_l}
  int width = 0;
  std::vector<int> dims;            // d_in, n, ..., n, d_out
  Activation activation;
  std::uint64_t seed = 0;
  /// Incremented on every weight mutation so stale caches are detected.
  std::uint64_t version = 0;

  int depth() const { return static_cast<int>(layers.size()) - 1; }
  void touch() { ++version; }
};

struct InitOptions {
  bool zero_output = false;
};

/// W^l_{ij} = s_l · n^{-b_l} · z_{ij} with s_1 = 1/√d_in and s_l = 1 otherwise.
/// z is drawn from the (seed, layer) substream in row-major order, so
/// parameterizations that differ only in exponents share raw normals.
NetworkState init_network(const Parameterization& p, const NetShape& shape, const Activation& act,
                          std::uint64_t seed, const InitOptions& opts = {});
/// Fan-ratio initialization; multipliers are 1.
NetworkState init_network_spectral(const NetShape& shape, const Activation& act, std::uint64_t seed,
                                   const InitOptions& opts = {});

struct PassCache {
  std::vector<Eigen::MatrixXd> h;  // L preactivations, one column per sample
  std::vector<Eigen::MatrixXd> x;  // x[0] = input, x[l] = φ(h^l)
  Eigen::MatrixXd f;
  /// Non-null when the pass used W + ε. Must outlive the cache.
  const Weights* perturbation = nullptr;
  std::uint64_t version = 0;
  const NetworkState* owner = nullptr;
};

/// batch has one column per sample (d_in × B). An empty matrix inside
/// `perturbation` means a zero perturbation for that layer.
PassCache forward(const NetworkState& net, const Eigen::MatrixXd& batch,
                  const Weights* perturbation = nullptr);

struct LossValue {
  double value = 0;
  Eigen::MatrixXd chi;  // dL/df, batch-mean convention
};

/// mse: ½‖f − onehot(y)‖²; cross_entropy: softmax cross-entropy. Both are
/// averaged over the batch and multiplied by `scale`.
LossValue evaluate_loss(LossKind kind, const Eigen::MatrixXd& f, const std::vector<int>& labels,
                        double scale = 1.0);

struct GradientSet {
  Weights grads;
  Eigen::MatrixXd chi;
  std::vector<double> fro;
};

/// Exact gradients including multiplier factors. Throws std::logic_error if
/// the cache is stale or belongs to another network.
GradientSet backward(const NetworkState& net, const PassCache& cache, const Eigen::MatrixXd& chi);

/// Power iteration from a fixed-seed start: at most 100 iterations, stops at
/// relative change below 1e-9. Zero matrix gives 0.
double spectral_norm(const Eigen::MatrixXd& m, int max_iter = 100, double rel_tol = 1e-9);

/// √(‖v‖²/len(v)).
double coordinate_scale(const Eigen::Ref<const Eigen::MatrixXd>& v);

/// Header (magic, dims, activation, seed, multipliers) followed by row-major
/// little-endian float64 weights in layer order.
std::vector<std::uint8_t> encode_checkpoint(const NetworkState& net);
NetworkState decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const NetworkState& net, const std::string& path);
NetworkState load_checkpoint(const std::string& path);

}  // namespace mupp

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mupp {

enum class Split { train, test };
std::string to_string(Split s);

struct Dataset {
  Eigen::MatrixXd inputs;  // count × d_in
  std::vector<int> labels;
  int classes = 0;
  Split split = Split::train;
  std::string provenance;

  int count() const { return static_cast<int>(labels.size()); }
  int d_in() const { return static_cast<int>(inputs.cols()); }
  /// Columns of the requested rows, ready for a forward pass (d_in × B).
  Eigen::MatrixXd batch_inputs(const std::vector<int>& rows) const;
  std::vector<int> batch_labels(const std::vector<int>& rows) const;
};

struct SyntheticSpec {
  int classes = 4;
  int d_in = 16;
  int n_per_class = 256;
  double separation = 2.0;
  std::uint64_t seed = 0;
};

/// Class c is centered at separation·μ_c, where μ_c are seeded unit vectors
/// (orthonormalized when classes ≤ d_in). Unit isotropic noise. Sample i has
/// class i mod k. Train and test use disjoint noise substreams.
Dataset synthetic_gaussians(const SyntheticSpec& spec, Split split);

struct CifarOptions {
  Split split = Split::train;
};

/// Records of 3073 bytes: label, then 1024 R, 1024 G, 1024 B pixels.
/// Pixels map to [0, 1]. Throws std::runtime_error on empty or truncated
/// files and on labels above 9.
Dataset load_cifar10_binary(const std::vector<std::string>& paths, const CifarOptions& opts = {});
Dataset decode_cifar10(const std::vector<std::uint8_t>& bytes, const CifarOptions& opts = {});
/// Inverse of decode for unstandardized data.
std::vector<std::uint8_t> encode_cifar10(const Dataset& data);

struct ChannelStats {
  double mean[3] = {0, 0, 0};
  double std[3] = {1, 1, 1};
};
/// Per-channel statistics; call on the train split only.
ChannelStats channel_stats(const Dataset& train);
void standardize(Dataset& data, const ChannelStats& stats);

}  // namespace mupp

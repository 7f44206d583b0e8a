#include "mupp/datagen.hpp"

#include "mupp/random.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace mupp {

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Eigen::MatrixXd Dataset::batch_inputs(const std::vector<int>& rows) const {
  Eigen::MatrixXd out(inputs.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = inputs.row(rows[j]).transpose();
  return out;
}

std::vector<int> Dataset::batch_labels(const std::vector<int>& rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(labels[r]);
  return out;
}

Dataset synthetic_gaussians(const SyntheticSpec& spec, Split split) {
  if (spec.classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (spec.d_in < 1) throw std::invalid_argument("d_in must be at least 1");
  if (spec.n_per_class < 1) throw std::invalid_argument("n_per_class must be at least 1");
  const int k = spec.classes, d = spec.d_in;

  const CounterRng mean_rng(spec.seed, stream_id(StreamDomain::data_means, 0));
  Eigen::MatrixXd mu(k, d);
  std::uint64_t counter = 0;
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j) mu(c, j) = mean_rng.normal(counter++);
  for (int c = 0; c < k; ++c) {
    if (k <= d)
      for (int p = 0; p < c; ++p) mu.row(c) -= mu.row(c).dot(mu.row(p)) * mu.row(p);
    mu.row(c).normalize();
  }

  const CounterRng noise(spec.seed, stream_id(StreamDomain::data_noise, split == Split::train ? 0 : 1));
  Dataset ds;
  ds.classes = k;
  ds.split = split;
  const int count = k * spec.n_per_class;
  ds.inputs.resize(count, d);
  ds.labels.resize(count);
  counter = 0;
  for (int i = 0; i < count; ++i) {
    const int c = i % k;
    ds.labels[i] = c;
    for (int j = 0; j < d; ++j) ds.inputs(i, j) = spec.separation * mu(c, j) + noise.normal(counter++);
  }
  ds.provenance = "synthetic_gaussians(k=" + std::to_string(k) + ",d_in=" + std::to_string(d) +
                  ",n_per_class=" + std::to_string(spec.n_per_class) +
                  ",separation=" + std::to_string(spec.separation) + ",seed=" + std::to_string(spec.seed) +
                  "," + to_string(split) + ")";
  return ds;
}

namespace {

constexpr int kRecord = 3073;
constexpr int kPixels = 3072;

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : bytes) h = (h ^ b) * 1099511628211ULL;
  return h;
}

}  // namespace

Dataset decode_cifar10(const std::vector<std::uint8_t>& bytes, const CifarOptions& opts) {
  if (bytes.empty()) throw std::runtime_error("empty CIFAR-10 file");
  if (bytes.size() % kRecord != 0)
    throw std::runtime_error("truncated CIFAR-10 record: size " + std::to_string(bytes.size()) +
                             " is not a multiple of 3073");
  const int n = static_cast<int>(bytes.size() / kRecord);
  Dataset ds;
  ds.classes = 10;
  ds.split = opts.split;
  ds.inputs.resize(n, kPixels);
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + static_cast<std::size_t>(i) * kRecord;
    if (rec[0] > 9) throw std::runtime_error("CIFAR-10 label byte > 9 in record " + std::to_string(i));
    ds.labels[i] = rec[0];
    for (int j = 0; j < kPixels; ++j) ds.inputs(i, j) = rec[1 + j] / 255.0;
  }
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  ds.provenance = "cifar10-binary(records=" + std::to_string(n) + ",fnv1a=" + digest + ")";
  return ds;
}

Dataset load_cifar10_binary(const std::vector<std::string>& paths, const CifarOptions& opts) {
  std::vector<std::uint8_t> all;
  for (const auto& p : paths) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + p);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.empty()) throw std::runtime_error("empty CIFAR-10 file: " + p);
    if (bytes.size() % kRecord != 0) throw std::runtime_error("truncated CIFAR-10 record in " + p);
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return decode_cifar10(all, opts);
}

std::vector<std::uint8_t> encode_cifar10(const Dataset& data) {
  if (data.inputs.cols() != kPixels) throw std::invalid_argument("CIFAR-10 encoding needs 3072 features");
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(data.count()) * kRecord);
  for (int i = 0; i < data.count(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] > 9) throw std::invalid_argument("label out of range");
    out.push_back(static_cast<std::uint8_t>(data.labels[i]));
    for (int j = 0; j < kPixels; ++j) {
      const double v = std::round(data.inputs(i, j) * 255.0);
      if (v < 0 || v > 255) throw std::invalid_argument("pixel outside [0, 1]; data is standardized");
      out.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return out;
}

ChannelStats channel_stats(const Dataset& train) {
  if (train.inputs.cols() != kPixels) throw std::invalid_argument("channel stats need 3072 features");
  ChannelStats s;
  for (int ch = 0; ch < 3; ++ch) {
    const auto block = train.inputs.middleCols(ch * 1024, 1024);
    const double mean = block.mean();
    const double var = (block.array() - mean).square().mean();
    s.mean[ch] = mean;
    s.std[ch] = var > 0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

void standardize(Dataset& data, const ChannelStats& stats) {
  if (data.inputs.cols() != kPixels) throw std::invalid_argument("standardize needs 3072 features");
  for (int ch = 0; ch < 3; ++ch) {
    auto block = data.inputs.middleCols(ch * 1024, 1024);
    block = (block.array() - stats.mean[ch]) / stats.std[ch];
  }
}

}  // namespace mupp

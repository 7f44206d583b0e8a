#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mupp/datagen.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace mupp;

namespace {

// Nearest class mean with means estimated on train; optimal for isotropic
// Gaussians with equal priors.
double lda_accuracy(const Dataset& train, const Dataset& test) {
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(train.classes, train.d_in());
  std::vector<int> counts(train.classes, 0);
  for (int i = 0; i < train.count(); ++i) {
    means.row(train.labels[i]) += train.inputs.row(i);
    ++counts[train.labels[i]];
  }
  for (int c = 0; c < train.classes; ++c) means.row(c) /= counts[c];
  int hit = 0;
  for (int i = 0; i < test.count(); ++i) {
    Eigen::Index best;
    (means.rowwise() - test.inputs.row(i)).rowwise().squaredNorm().minCoeff(&best);
    hit += best == test.labels[i];
  }
  return static_cast<double>(hit) / test.count();
}

std::vector<std::uint8_t> two_records() {
  std::vector<std::uint8_t> bytes(2 * 3073);
  bytes[0] = 3;
  bytes[3073] = 9;
  for (int k = 0; k < 3072; ++k) {
    bytes[1 + k] = static_cast<std::uint8_t>(k % 256);
    bytes[3074 + k] = static_cast<std::uint8_t>(255 - k % 256);
  }
  return bytes;
}

}  // namespace

TEST_CASE("well separated gaussians are linearly separable") {
  SyntheticSpec s{2, 32, 500, 6.0, 1};
  CHECK(lda_accuracy(synthetic_gaussians(s, Split::train), synthetic_gaussians(s, Split::test)) >= 0.99);
}

TEST_CASE("zero separation gives chance accuracy") {
  SyntheticSpec s{4, 16, 1000, 0.0, 2};
  CHECK(std::abs(lda_accuracy(synthetic_gaussians(s, Split::train), synthetic_gaussians(s, Split::test)) - 0.25) <=
        0.05);
}

TEST_CASE("synthetic data layout and determinism") {
  SyntheticSpec s{3, 8, 10, 2.0, 5};
  const auto a = synthetic_gaussians(s, Split::train);
  const auto b = synthetic_gaussians(s, Split::train);
  const auto t = synthetic_gaussians(s, Split::test);
  CHECK(a.count() == 30);
  CHECK(a.d_in() == 8);
  for (int i = 0; i < a.count(); ++i) CHECK(a.labels[i] == i % 3);
  CHECK(a.inputs == b.inputs);
  CHECK(a.inputs != t.inputs);
  const auto cols = a.batch_inputs({4, 1});
  CHECK(cols.rows() == 8);
  CHECK(cols.col(0) == a.inputs.row(4).transpose());
  CHECK(a.batch_labels({4, 1}) == std::vector<int>{1, 1});
}

TEST_CASE("cifar records decode to exact tensors") {
  const auto bytes = two_records();
  const auto d = decode_cifar10(bytes);
  REQUIRE(d.count() == 2);
  CHECK(d.d_in() == 3072);
  CHECK(d.labels == std::vector<int>{3, 9});
  CHECK(d.inputs(0, 0) == 0.0);
  CHECK(d.inputs(0, 255) == 1.0);
  CHECK(d.inputs(0, 1024 + 7) == doctest::Approx(7.0 / 255.0));
  CHECK(d.inputs(1, 0) == 1.0);
  CHECK(encode_cifar10(d) == bytes);

  const auto path = (std::filesystem::temp_directory_path() / "mupp_cifar_test.bin").string();
  {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK(load_cifar10_binary({path, path}).count() == 4);
  std::remove(path.c_str());
}

TEST_CASE("cifar errors") {
  CHECK_THROWS_AS(decode_cifar10({}), std::runtime_error);
  auto truncated = two_records();
  truncated.pop_back();
  CHECK_THROWS_AS(decode_cifar10(truncated), std::runtime_error);
  auto bad_label = two_records();
  bad_label[0] = 10;
  CHECK_THROWS_AS(decode_cifar10(bad_label), std::runtime_error);
  CHECK_THROWS(load_cifar10_binary({"/nonexistent/data_batch_1.bin"}));
}

TEST_CASE("channel standardization") {
  auto d = decode_cifar10(two_records());
  const auto stats = channel_stats(d);
  standardize(d, stats);
  for (int ch = 0; ch < 3; ++ch) {
    const auto block = d.inputs.middleCols(ch * 1024, 1024);
    CHECK(std::abs(block.mean()) < 1e-12);
    CHECK(std::sqrt((block.array() - block.mean()).square().mean()) == doctest::Approx(1.0));
  }
}

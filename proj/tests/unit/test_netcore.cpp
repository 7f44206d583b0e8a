#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mupp/netcore.hpp"
#include "mupp/random.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace mupp;

namespace {

Eigen::MatrixXd gaussian(int rows, int cols, std::uint64_t seed) {
  const CounterRng rng(seed, 99);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows * cols; ++i) m.data()[i] = rng.normal(i);
  return m;
}

}  // namespace

TEST_CASE("sigma_gelu approximates relu for small sigma") {
  CHECK(std::abs(sigma_gelu(3.0, 0.01) - 3.0) < 1e-6);
  CHECK(std::abs(sigma_gelu(-3.0, 0.01)) < 1e-6);
  CHECK(sigma_gelu_deriv(0.0, 0.05) == doctest::Approx(0.5));
  const double h = 1e-6;
  for (double x : {-0.1, 0.02, 0.3})
    CHECK(sigma_gelu_deriv(x, 0.05) ==
          doctest::Approx((sigma_gelu(x + h, 0.05) - sigma_gelu(x - h, 0.05)) / (2 * h)).epsilon(1e-6));
  CHECK(parse_activation("sigma_gelu(0.1)").sigma == doctest::Approx(0.1));
  CHECK(to_string(parse_activation("tanh")) == "tanh");
  CHECK_THROWS(parse_activation("swish"));
}

TEST_CASE("spectral norm against SVD") {
  CHECK(spectral_norm(Eigen::MatrixXd::Identity(7, 7)) == doctest::Approx(1.0));
  CHECK(spectral_norm(Eigen::MatrixXd::Zero(5, 3)) == 0.0);
  const Eigen::VectorXd u = gaussian(9, 1, 1), v = gaussian(4, 1, 2);
  CHECK(spectral_norm(u * v.transpose()) == doctest::Approx(u.norm() * v.norm()).epsilon(1e-9));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Eigen::MatrixXd m = gaussian(40, 25, 10 + s);
    const double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    CHECK(spectral_norm(m, 1000, 1e-13) == doctest::Approx(svd).epsilon(1e-6));
  }
}

TEST_CASE("coordinate scale") {
  CHECK(coordinate_scale(Eigen::VectorXd::Ones(50)) == doctest::Approx(1.0));
  CHECK(coordinate_scale(Eigen::VectorXd::Zero(50)) == 0.0);
  for (std::uint64_t s = 0; s < 4; ++s) CHECK(std::abs(coordinate_scale(gaussian(10000, 1, s)) - 1.0) < 0.05);
}

TEST_CASE("tiny network matches hand computation") {
  Parameterization p = preset("mup", 1);
  NetworkState net = init_network(p, {1, 2, 2, 1}, {ActivationKind::tanh}, 0);
  net.layers[0] << 0.5, -1.0, 0.25, 2.0;
  net.layers[1] << 1.5, -0.5;
  net.multipliers = {1.0, 1.0};
  net.touch();
  Eigen::MatrixXd x(2, 1);
  x << 1.0, 0.5;
  const double h0 = 0.5 * 1.0 - 1.0 * 0.5, h1 = 0.25 * 1.0 + 2.0 * 0.5;
  const double f = 1.5 * std::tanh(h0) - 0.5 * std::tanh(h1);
  const auto c = forward(net, x);
  CHECK(c.h[0](0, 0) == doctest::Approx(h0));
  CHECK(c.h[0](1, 0) == doctest::Approx(h1));
  CHECK(c.f(0, 0) == doctest::Approx(f));

  // ½(f − 1)² with a single output: dL/dW2 = (f − 1) x¹ᵀ.
  const auto lv = evaluate_loss(LossKind::mse, c.f, {0});
  CHECK(lv.value == doctest::Approx(0.5 * (f - 1) * (f - 1)));
  const auto g = backward(net, c, lv.chi);
  CHECK(g.grads[1](0, 0) == doctest::Approx((f - 1) * std::tanh(h0)));
  CHECK(g.grads[1](0, 1) == doctest::Approx((f - 1) * std::tanh(h1)));
  const double dh1 = (f - 1) * -0.5 * (1 - std::tanh(h1) * std::tanh(h1));
  CHECK(g.grads[0](1, 1) == doctest::Approx(dh1 * 0.5));
}

TEST_CASE("zero input through tanh gives zero output") {
  const NetworkState net = init_network(preset("mup", 2), {2, 5, 16, 3}, {ActivationKind::tanh}, 4);
  CHECK(forward(net, Eigen::MatrixXd::Zero(5, 3)).f.norm() == 0.0);
}

TEST_CASE("gradients match central finite differences") {
  for (auto act : {ActivationKind::tanh, ActivationKind::sigma_gelu})
    for (auto kind : {LossKind::cross_entropy, LossKind::mse})
      for (bool perturbed : {false, true}) {
        NetworkState net = init_network(preset("mup", 2), {2, 5, 12, 3}, {act, 0.5}, 3);
        const Eigen::MatrixXd x = gaussian(5, 4, 7);
        const std::vector<int> y{0, 2, 1, 2};
        Weights eps;
        if (perturbed)
          for (std::size_t l = 0; l < net.layers.size(); ++l)
            eps.push_back(0.1 * gaussian(net.layers[l].rows(), net.layers[l].cols(), 20 + l));
        const auto c = forward(net, x, perturbed ? &eps : nullptr);
        const auto g = backward(net, c, evaluate_loss(kind, c.f, y).chi);
        auto loss_perturbed = [&]() {
          return evaluate_loss(kind, forward(net, x, perturbed ? &eps : nullptr).f, y).value;
        };
        const double h = 1e-6;
        double worst = 0;
        for (std::size_t l = 0; l < net.layers.size(); ++l)
          for (int k = 0; k < std::min<int>(6, net.layers[l].size()); ++k) {
            const int idx = (k * 7) % net.layers[l].size();
            const double w = net.layers[l].data()[idx];
            net.layers[l].data()[idx] = w + h;
            const double up = loss_perturbed();
            net.layers[l].data()[idx] = w - h;
            const double down = loss_perturbed();
            net.layers[l].data()[idx] = w;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(fd - g.grads[l].data()[idx]) / (std::abs(fd) + 1e-8));
          }
        CHECK(worst < 1e-5);
      }
}

TEST_CASE("stale caches are rejected") {
  NetworkState net = init_network(preset("mup", 1), {1, 3, 8, 2}, {}, 1);
  const auto c = forward(net, Eigen::MatrixXd::Ones(3, 1));
  net.touch();
  CHECK_THROWS_AS(backward(net, c, Eigen::MatrixXd::Ones(2, 1)), std::logic_error);
  CHECK_THROWS_AS(forward(net, Eigen::MatrixXd::Ones(4, 1)), std::invalid_argument);
}

TEST_CASE("initialization scales") {
  const int n = 512;
  const NetworkState net = init_network(preset("mup", 2), {2, 16, n, 4}, {}, 5);
  const double hidden_std = std::sqrt(net.layers[1].squaredNorm() / net.layers[1].size());
  CHECK(hidden_std == doctest::Approx(1.0 / std::sqrt(n)).epsilon(0.02));
  const double input_std = std::sqrt(net.layers[0].squaredNorm() / net.layers[0].size());
  CHECK(input_std == doctest::Approx(1.0 / 4.0).epsilon(0.02));

  const NetworkState spec = init_network_spectral({2, 16, n, 4}, {}, 5);
  CHECK(std::sqrt(spec.layers[1].squaredNorm() / spec.layers[1].size()) ==
        doctest::Approx(1.0 / std::sqrt(n)).epsilon(0.02));

  const NetworkState zero = init_network(preset("mup", 2), {2, 16, 64, 4}, {}, 5, {true});
  CHECK(forward(zero, gaussian(16, 3, 1)).f.norm() == 0.0);

  // Same seed, different exponents: identical raw normals up to scale.
  const NetworkState a = init_network(preset("mup", 2), {2, 16, 64, 4}, {}, 9);
  const NetworkState b = init_network(preset("sp", 2), {2, 16, 64, 4}, {}, 9);
  const double ratio = b.layers[2](0, 0) / a.layers[2](0, 0);
  CHECK((b.layers[2] - ratio * a.layers[2]).norm() < 1e-12 * b.layers[2].norm());
}

TEST_CASE("checkpoint round trip") {
  const NetworkState net = init_network(preset("mupp", 2), {2, 6, 10, 3}, {ActivationKind::sigma_gelu, 0.1}, 8);
  const auto back = decode_checkpoint(encode_checkpoint(net));
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) CHECK(back.layers[l] == net.layers[l]);
  CHECK(back.multipliers == net.multipliers);
  CHECK(back.dims == net.dims);
  CHECK(back.seed == net.seed);
  CHECK(back.activation.kind == net.activation.kind);

  const auto path = (std::filesystem::temp_directory_path() / "mupp_ckpt_test.bin").string();
  save_checkpoint(net, path);
  CHECK(load_checkpoint(path).layers[1] == net.layers[1]);
  std::remove(path.c_str());

  auto bytes = encode_checkpoint(net);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS(decode_checkpoint(bytes));
}

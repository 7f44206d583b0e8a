#include "mupp/netcore.hpp"

#include "mupp/random.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

namespace mupp {

double sigma_gelu(double x, double sigma) {
  const double z = x / sigma;
  return 0.5 * x * (1.0 + std::erf(z)) + sigma * std::exp(-z * z) / (2.0 * std::sqrt(std::numbers::pi));
}

double sigma_gelu_deriv(double x, double sigma) { return 0.5 * (1.0 + std::erf(x / sigma)); }

double activate(const Activation& act, double x) {
  switch (act.kind) {
    case ActivationKind::relu: return x > 0 ? x : 0.0;
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::sigma_gelu: return sigma_gelu(x, act.sigma);
  }
  return 0;
}

double activate_deriv(const Activation& act, double x) {
  switch (act.kind) {
    case ActivationKind::relu: return x > 0 ? 1.0 : 0.0;
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::sigma_gelu: return sigma_gelu_deriv(x, act.sigma);
  }
  return 0;
}

std::string to_string(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigma_gelu: return "sigma_gelu(" + std::to_string(act.sigma) + ")";
  }
  return "unknown";
}

Activation parse_activation(const std::string& text) {
  Activation a;
  if (text == "relu") {
    a.kind = ActivationKind::relu;
  } else if (text == "tanh") {
    a.kind = ActivationKind::tanh;
  } else if (text.rfind("sigma_gelu", 0) == 0) {
    a.kind = ActivationKind::sigma_gelu;
    auto open = text.find('(');
    if (open != std::string::npos) {
      auto close = text.find(')', open);
      if (close == std::string::npos) throw std::invalid_argument("malformed activation: " + text);
      a.sigma = std::stod(text.substr(open + 1, close - open - 1));
    } else if (text != "sigma_gelu") {
      throw std::invalid_argument("unknown activation: " + text);
    }
    if (!(a.sigma > 0)) throw std::invalid_argument("sigma_gelu requires sigma > 0");
  } else {
    throw std::invalid_argument("unknown activation: " + text);
  }
  return a;
}

std::string to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "cross_entropy"; }

LossKind parse_loss(const std::string& text) {
  if (text == "mse") return LossKind::mse;
  if (text == "cross_entropy" || text == "ce") return LossKind::cross_entropy;
  throw std::invalid_argument("unknown loss: " + text);
}

namespace {

void check_shape(const NetShape& s) {
  if (s.L < 1 || s.d_in < 1 || s.width < 1 || s.d_out < 1)
    throw std::invalid_argument("network dimensions must be positive");
}

std::vector<int> dims_of(const NetShape& s) {
  std::vector<int> d{s.d_in};
  for (int l = 0; l < s.L; ++l) d.push_back(s.width);
  d.push_back(s.d_out);
  return d;
}

Eigen::MatrixXd gaussian(int rows, int cols, double std, std::uint64_t seed, int layer) {
  Eigen::MatrixXd m(rows, cols);
  const CounterRng rng(seed, stream_id(StreamDomain::init, static_cast<std::uint32_t>(layer)));
  std::uint64_t k = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = std * rng.normal(k++);
  return m;
}

double npow(int n, const Rational& e) { return std::pow(static_cast<double>(n), -to_double(e)); }

}  // namespace

NetworkState init_network(const Parameterization& p, const NetShape& shape, const Activation& act,
                          std::uint64_t seed, const InitOptions& opts) {
  p.validate();
  check_shape(shape);
  if (p.L != shape.L) throw std::invalid_argument("parameterization depth does not match network depth");
  NetworkState net;
  net.width = shape.width;
  net.dims = dims_of(shape);
  net.activation = act;
  net.seed = seed;
  for (int l = 0; l <= shape.L; ++l) {
    const double base = l == 0 ? 1.0 / std::sqrt(static_cast<double>(shape.d_in)) : 1.0;
    const double std = base * npow(shape.width, p.b[l]);
    net.layers.push_back(gaussian(net.dims[l + 1], net.dims[l], std, seed, l + 1));
    net.multipliers.push_back(npow(shape.width, p.a[l]));
  }
  if (opts.zero_output) net.layers.back().setZero();
  return net;
}

NetworkState init_network_spectral(const NetShape& shape, const Activation& act, std::uint64_t seed,
                                   const InitOptions& opts) {
  check_shape(shape);
  NetworkState net;
  net.width = shape.width;
  net.dims = dims_of(shape);
  net.activation = act;
  net.seed = seed;
  for (int l = 0; l <= shape.L; ++l) {
    const auto f = spectral_scaling(net.dims[l], net.dims[l + 1]);
    net.layers.push_back(gaussian(net.dims[l + 1], net.dims[l], f.init_std, seed, l + 1));
    net.multipliers.push_back(1.0);
  }
  if (opts.zero_output) net.layers.back().setZero();
  return net;
}

namespace {

const Eigen::MatrixXd* perturbation_of(const Weights* eps, int l) {
  if (!eps || (*eps)[l].size() == 0) return nullptr;
  return &(*eps)[l];
}

/// (W + ε) · x without materializing W + ε.
Eigen::MatrixXd apply(const Eigen::MatrixXd& W, const Eigen::MatrixXd* eps, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z = W * x;
  if (eps) z.noalias() += *eps * x;
  return z;
}

/// (W + ε)ᵀ · d.
Eigen::MatrixXd apply_transposed(const Eigen::MatrixXd& W, const Eigen::MatrixXd* eps, const Eigen::MatrixXd& d) {
  Eigen::MatrixXd z = W.transpose() * d;
  if (eps) z.noalias() += eps->transpose() * d;
  return z;
}

}  // namespace

PassCache forward(const NetworkState& net, const Eigen::MatrixXd& batch, const Weights* perturbation) {
  const int L = net.depth();
  if (batch.rows() != net.dims[0])
    throw std::invalid_argument("batch feature dimension " + std::to_string(batch.rows()) +
                                " does not match d_in " + std::to_string(net.dims[0]));
  if (perturbation && static_cast<int>(perturbation->size()) != L + 1)
    throw std::invalid_argument("perturbation must have one matrix per layer");
  PassCache c;
  c.perturbation = perturbation;
  c.version = net.version;
  c.owner = &net;
  c.x.reserve(L + 1);
  c.h.reserve(L);
  c.x.push_back(batch);
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd h = net.multipliers[l] * apply(net.layers[l], perturbation_of(perturbation, l), c.x.back());
    Eigen::MatrixXd x = h.unaryExpr([&](double v) { return activate(net.activation, v); });
    c.h.push_back(std::move(h));
    c.x.push_back(std::move(x));
  }
  c.f = net.multipliers[L] * apply(net.layers[L], perturbation_of(perturbation, L), c.x.back());
  return c;
}

LossValue evaluate_loss(LossKind kind, const Eigen::MatrixXd& f, const std::vector<int>& labels, double scale) {
  const Eigen::Index B = f.cols();
  if (static_cast<Eigen::Index>(labels.size()) != B) throw std::invalid_argument("label count mismatch");
  LossValue out;
  out.chi.resize(f.rows(), B);
  double total = 0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const int y = labels[j];
    if (y < 0 || y >= f.rows()) throw std::invalid_argument("label out of range");
    if (kind == LossKind::mse) {
      Eigen::VectorXd r = f.col(j);
      r(y) -= 1.0;
      total += 0.5 * r.squaredNorm();
      out.chi.col(j) = r;
    } else {
      const double m = f.col(j).maxCoeff();
      Eigen::VectorXd e = (f.col(j).array() - m).exp();
      const double z = e.sum();
      total += -(f(y, j) - m - std::log(z));
      e /= z;
      e(y) -= 1.0;
      out.chi.col(j) = e;
    }
  }
  out.value = scale * total / static_cast<double>(B);
  out.chi *= scale / static_cast<double>(B);
  return out;
}

GradientSet backward(const NetworkState& net, const PassCache& cache, const Eigen::MatrixXd& chi) {
  if (cache.owner != &net || cache.version != net.version)
    throw std::logic_error("stale pass cache: weights changed since the forward pass");
  const int L = net.depth();
  if (chi.rows() != cache.f.rows() || chi.cols() != cache.f.cols())
    throw std::invalid_argument("loss gradient shape does not match outputs");
  GradientSet g;
  g.chi = chi;
  g.grads.resize(L + 1);
  g.grads[L] = net.multipliers[L] * (chi * cache.x[L].transpose());
  Eigen::MatrixXd dx =
      net.multipliers[L] * apply_transposed(net.layers[L], perturbation_of(cache.perturbation, L), chi);
  for (int l = L - 1; l >= 0; --l) {
    Eigen::MatrixXd dh = dx.cwiseProduct(
        cache.h[l].unaryExpr([&](double v) { return activate_deriv(net.activation, v); }));
    g.grads[l] = net.multipliers[l] * (dh * cache.x[l].transpose());
    if (l > 0)
      dx = net.multipliers[l] * apply_transposed(net.layers[l], perturbation_of(cache.perturbation, l), dh);
  }
  for (const auto& G : g.grads) g.fro.push_back(G.norm());
  return g;
}

double spectral_norm(const Eigen::MatrixXd& m, int max_iter, double rel_tol) {
  if (m.size() == 0) return 0.0;
  if (!m.allFinite()) throw std::invalid_argument("spectral_norm: non-finite entries");
  const bool tall = m.rows() >= m.cols();
  const Eigen::Index k = tall ? m.cols() : m.rows();
  const CounterRng rng(0x5EEDULL, stream_id(StreamDomain::power_iteration, 0));
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = rng.normal(static_cast<std::uint64_t>(i));
  v.normalize();
  double sigma = 0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd u = tall ? Eigen::VectorXd(m * v) : Eigen::VectorXd(m.transpose() * v);
    const double s = u.norm();
    if (s == 0) return it == 0 && m.norm() == 0 ? 0.0 : sigma;
    Eigen::VectorXd w = tall ? Eigen::VectorXd(m.transpose() * u) : Eigen::VectorXd(m * u);
    const double wn = w.norm();
    const bool done = sigma > 0 && std::abs(s - sigma) <= rel_tol * s;
    sigma = s;
    if (done || wn == 0) break;
    v = w / wn;
  }
  return sigma;
}

double coordinate_scale(const Eigen::Ref<const Eigen::MatrixXd>& v) {
  if (v.size() == 0) throw std::invalid_argument("coordinate_scale of an empty vector");
  return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

namespace {

constexpr char kMagic[8] = {'M', 'U', 'P', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormat = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > b.size()) throw std::runtime_error("checkpoint truncated");
  }
  std::uint64_t uint(int bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
    pos += bytes;
    return v;
  }
  double f64() {
    std::uint64_t v = uint(8);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetworkState& net) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kFormat);
  put_u32(out, static_cast<std::uint32_t>(net.dims.size()));
  for (int d : net.dims) put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(net.width));
  put_u32(out, static_cast<std::uint32_t>(net.activation.kind));
  put_f64(out, net.activation.sigma);
  put_u64(out, net.seed);
  for (double m : net.multipliers) put_f64(out, m);
  for (const auto& W : net.layers)
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) put_f64(out, W(i, j));
  return out;
}

NetworkState decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw std::runtime_error("not a checkpoint file");
  r.pos = 8;
  if (r.uint(4) != kFormat) throw std::runtime_error("unsupported checkpoint version");
  const auto ndims = r.uint(4);
  if (ndims < 3 || ndims > 1024) throw std::runtime_error("checkpoint has invalid depth");
  NetworkState net;
  for (std::uint64_t i = 0; i < ndims; ++i) net.dims.push_back(static_cast<int>(r.uint(4)));
  net.width = static_cast<int>(r.uint(4));
  const auto kind = r.uint(4);
  if (kind > 2) throw std::runtime_error("checkpoint has unknown activation");
  net.activation.kind = static_cast<ActivationKind>(kind);
  net.activation.sigma = r.f64();
  net.seed = r.uint(8);
  for (std::uint64_t l = 0; l + 1 < ndims; ++l) net.multipliers.push_back(r.f64());
  for (std::uint64_t l = 0; l + 1 < ndims; ++l) {
    Eigen::MatrixXd W(net.dims[l + 1], net.dims[l]);
    r.need(static_cast<std::size_t>(W.size()) * 8);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = r.f64();
    net.layers.push_back(std::move(W));
  }
  if (r.pos != bytes.size()) throw std::runtime_error("checkpoint has trailing bytes");
  return net;
}

void save_checkpoint(const NetworkState& net, const std::string& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NetworkState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mupp

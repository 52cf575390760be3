#include "figphm/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "figphm/error.hpp"
#include "figphm/rng.hpp"

namespace figphm::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.shape().size() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) throw std::invalid_argument("tensor: value count does not match shape");
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require_rank(input, 2, "conv1d input");
  require_rank(kernels, 3, "conv1d kernels");
  const std::size_t steps = input.extent(0), channels = input.extent(1);
  const std::size_t filters = kernels.extent(0), width = kernels.extent(1);
  if (kernels.extent(2) != channels) throw std::invalid_argument("conv1d: channel mismatch");
  if (bias.size() != filters) throw std::invalid_argument("conv1d: bias size mismatch");
  if (steps < width) throw std::invalid_argument("sequence shorter than kernel");
  const std::size_t out_steps = steps - width + 1;
  const std::size_t span = width * channels;
  Tensor out({out_steps, filters});
  const double* in = input.values().data();
  const double* k = kernels.values().data();
  for (std::size_t t = 0; t < out_steps; ++t) {
    const double* window = in + t * channels;
    for (std::size_t f = 0; f < filters; ++f) {
      const double* kf = k + f * span;
      double acc = 0;
      for (std::size_t i = 0; i < span; ++i) acc += window[i] * kf[i];
      out.at(t, f) = bias[f] + acc;
    }
  }
  return out;
}

void conv1d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output,
                     Tensor* grad_input, Tensor& grad_kernels, Tensor& grad_bias) {
  const std::size_t channels = input.extent(1);
  const std::size_t filters = kernels.extent(0), width = kernels.extent(1);
  const std::size_t out_steps = grad_output.extent(0);
  const std::size_t span = width * channels;
  const double* in = input.values().data();
  const double* k = kernels.values().data();
  double* gk = grad_kernels.values().data();
  double* gin = grad_input ? grad_input->values().data() : nullptr;
  for (std::size_t t = 0; t < out_steps; ++t) {
    const double* window = in + t * channels;
    for (std::size_t f = 0; f < filters; ++f) {
      const double g = grad_output.at(t, f);
      if (g == 0.0) continue;
      grad_bias[f] += g;
      double* gkf = gk + f * span;
      for (std::size_t i = 0; i < span; ++i) gkf[i] += g * window[i];
      if (gin) {
        const double* kf = k + f * span;
        double* gw = gin + t * channels;
        for (std::size_t i = 0; i < span; ++i) gw[i] += g * kf[i];
      }
    }
  }
}

PoolResult maxpool1d(const Tensor& input, std::size_t pool) {
  require_rank(input, 2, "maxpool1d input");
  if (pool == 0) throw std::invalid_argument("maxpool1d: pool must be positive");
  const std::size_t steps = input.extent(0), features = input.extent(1);
  if (steps < pool) throw std::invalid_argument("maxpool1d: sequence shorter than pool");
  const std::size_t out_steps = steps / pool;
  PoolResult r{Tensor({out_steps, features}), std::vector<std::size_t>(out_steps * features)};
  for (std::size_t o = 0; o < out_steps; ++o) {
    for (std::size_t f = 0; f < features; ++f) {
      std::size_t best = o * pool * features + f;
      for (std::size_t i = 1; i < pool; ++i) {
        const std::size_t idx = (o * pool + i) * features + f;
        if (input[idx] > input[best]) best = idx;
      }
      r.output.at(o, f) = input[best];
      r.argmax[o * features + f] = best;
    }
  }
  return r;
}

Tensor maxpool1d_backward(const Tensor& grad_output, std::span<const std::size_t> argmax,
                          const std::vector<std::size_t>& input_shape) {
  Tensor grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_output[i];
  return grad;
}

DropoutResult dropout(const Tensor& input, double rate, Mode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  DropoutResult r{input, {}};
  if (mode == Mode::eval || rate == 0.0) return r;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  r.mask.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    r.output[i] = input[i] * r.mask[i];
  }
  return r;
}

Tensor dropout_backward(const Tensor& grad_output, std::span<const double> mask) {
  Tensor grad = grad_output;
  if (mask.empty()) return grad;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
  return grad;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_output) {
  Tensor grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(pre_activation[i] > 0)) grad[i] = 0.0;
  }
  return grad;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias, Activation activation) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.extent(0), n = weights.extent(1);
  if (input.size() != n || bias.size() != m) throw std::invalid_argument("dense: shape mismatch");
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0;
    for (std::size_t c = 0; c < n; ++c) acc += weights.at(r, c) * input[c];
    acc += bias[r];
    switch (activation) {
      case Activation::none: out[r] = acc; break;
      case Activation::relu: out[r] = acc > 0 ? acc : 0.0; break;
      case Activation::sigmoid: out[r] = sigmoid(acc); break;
    }
  }
  return out;
}

void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output,
                    const Tensor& grad_output, Activation activation, Tensor* grad_input,
                    Tensor& grad_weights, Tensor& grad_bias) {
  const std::size_t m = weights.extent(0), n = weights.extent(1);
  for (std::size_t r = 0; r < m; ++r) {
    double g = grad_output[r];
    switch (activation) {
      case Activation::none: break;
      case Activation::relu: g = output[r] > 0 ? g : 0.0; break;
      case Activation::sigmoid: g *= output[r] * (1.0 - output[r]); break;
    }
    grad_bias[r] += g;
    for (std::size_t c = 0; c < n; ++c) {
      grad_weights.at(r, c) += g * input[c];
      if (grad_input) (*grad_input)[c] += g * weights.at(r, c);
    }
  }
}

double bce_loss(double p, double y) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

double bce_loss_logit(double z, double y) {
  // -log(sigmoid(z)) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z).
  auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  const double lo = -std::log1p(-kProbabilityClamp), hi = -std::log(kProbabilityClamp);
  return y * std::clamp(softplus(-z), lo, hi) + (1.0 - y) * std::clamp(softplus(z), lo, hi);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double gradient_check(const std::function<double(std::span<const double>)>& loss,
                      std::span<const double> point, std::span<const double> analytic, double epsilon) {
  if (point.size() != analytic.size()) throw std::invalid_argument("gradient_check: size mismatch");
  std::vector<double> x(point.begin(), point.end());
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + epsilon;
    const double up = loss(x);
    x[i] = orig - epsilon;
    const double down = loss(x);
    x[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * epsilon)));
  }
  return worst;
}

namespace {

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((bits >> (8 * i)) & 0xFF) << (8 * (7 - i));
    return out;
  }
  return bits;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& manifest,
                      std::span<const double> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  nlohmann::json m = manifest;
  m["version"] = std::string(kCheckpointVersion);
  m["param_count"] = params.size();
  out << kCheckpointVersion << '\n' << m.dump() << '\n';
  for (double v : params) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string tag, manifest_line;
  if (!std::getline(in, tag) || tag != kCheckpointVersion) {
    throw DataError(path.string() + ": not a " + std::string(kCheckpointVersion) + " checkpoint");
  }
  if (!std::getline(in, manifest_line)) throw DataError(path.string() + ": missing manifest");
  Checkpoint ckpt;
  try {
    ckpt.manifest = nlohmann::json::parse(manifest_line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad manifest: " + e.what());
  }
  if (!ckpt.manifest.is_object() || !ckpt.manifest.contains("param_count") ||
      !ckpt.manifest["param_count"].is_number_unsigned()) {
    throw DataError(path.string() + ": manifest lacks param_count");
  }
  const auto count = ckpt.manifest["param_count"].get<std::size_t>();
  ckpt.params.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw DataError(path.string() + ": truncated parameter payload");
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    ckpt.params[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  return ckpt;
}

}  // namespace figphm::nn

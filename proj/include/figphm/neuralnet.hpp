#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace figphm::nn {

// Dense row-major array of doubles. `grad` is empty unless a caller sizes it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

  std::vector<double>& grad() { return grad_; }
  const std::vector<double>& grad() const { return grad_; }
  void zero_grad() { grad_.assign(values_.size(), 0.0); }

  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
};

enum class Mode { train, eval };
enum class Activation { none, relu, sigmoid };

// Valid convolution, stride 1: input T x d, kernels F x w x d, bias F.
// Returns (T - w + 1) x F. Throws std::invalid_argument when T < w.
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

// Accumulates parameter gradients; grad_input may be null.
void conv1d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output,
                     Tensor* grad_input, Tensor& grad_kernels, Tensor& grad_bias);

struct PoolResult {
  Tensor output;
  // Flat index into the input for every output cell.
  std::vector<std::size_t> argmax;
};

// Non-overlapping windows along axis 0 of a T x F input; the tail past
// floor(T / pool) * pool is dropped; ties go to the lowest index.
PoolResult maxpool1d(const Tensor& input, std::size_t pool);
Tensor maxpool1d_backward(const Tensor& grad_output, std::span<const std::size_t> argmax,
                          const std::vector<std::size_t>& input_shape);

struct DropoutResult {
  Tensor output;
  // 0 for dropped units, 1/(1-rate) for survivors; empty in eval mode.
  std::vector<double> mask;
};

// Inverted dropout. Throws std::invalid_argument unless 0 <= rate < 1.
DropoutResult dropout(const Tensor& input, double rate, Mode mode, std::uint64_t seed);
Tensor dropout_backward(const Tensor& grad_output, std::span<const double> mask);

double sigmoid(double x);
Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_output);

// activation(W . input + b) with W m x n.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias, Activation activation);
// grad_output is with respect to the activated output.
void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output,
                    const Tensor& grad_output, Activation activation, Tensor* grad_input,
                    Tensor& grad_weights, Tensor& grad_bias);

inline constexpr double kProbabilityClamp = 1e-7;

double bce_loss(double p, double y);
// Same value as bce_loss(sigmoid(z), y) without the cancellation in 1 - p.
double bce_loss_logit(double z, double y);

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam update in place. Moment vectors are sized on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|), with n the central difference
// (f(x + eps) - f(x - eps)) / (2 eps) in each coordinate.
double gradient_check(const std::function<double(std::span<const double>)>& loss,
                      std::span<const double> point, std::span<const double> analytic, double epsilon);

double relative_error(double analytic, double numeric);

inline constexpr std::string_view kCheckpointVersion = "figphm-ckpt-1";

// Line 1: version tag. Line 2: JSON manifest. Rest: parameters as
// little-endian IEEE-754 doubles in declaration order.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& manifest,
                      std::span<const double> params);

struct Checkpoint {
  nlohmann::json manifest;
  std::vector<double> params;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace figphm::nn

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exnet/rng.hpp"
#include "exnet/tensor.hpp"

namespace exnet {

enum class Mode { train, eval };

/// A learnable tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// Non-learnable persistent state (batch-norm running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

/// Layer with a hand-written backward pass.
///
/// forward() records whatever backward() needs (inputs, masks, argmax
/// indices). backward() takes dLoss/dOutput, *accumulates* parameter
/// gradients and returns dLoss/dInput. Calling backward() before any
/// forward() throws StateError.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] virtual std::string_view kind() const = 0;

  /// Shape inference for a full batch shape (leading dimension N).
  [[nodiscard]] virtual Shape output_shape(const Shape& input) const = 0;

  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& upstream) = 0;

  virtual std::vector<ParamRef<T>> parameters() { return {}; }
  virtual std::vector<BufferRef<T>> buffers() { return {}; }
  [[nodiscard]] virtual std::size_t parameter_count() const { return 0; }
  /// Elements of non-learnable state such as running statistics.
  [[nodiscard]] virtual std::size_t buffer_count() const { return 0; }

  /// Hash of the piecewise-linear branch taken by the last forward (ReLU
  /// sign pattern, pooling argmax). Zero for smooth layers. Gradient checks
  /// use it to reject probes that straddle a kink.
  [[nodiscard]] virtual std::uint64_t activation_signature() const { return 0; }

  /// When false, backward() may skip the input gradient and return an empty
  /// tensor. Used for the first layer of a network.
  void set_input_grad_required(bool required) noexcept { input_grad_required_ = required; }
  [[nodiscard]] bool input_grad_required() const noexcept { return input_grad_required_; }

 protected:
  void require_forward() const;
  void check_upstream(const Tensor<T>& upstream, const Shape& expected) const;

  std::string name_;
  bool has_forward_ = false;
  Mode last_mode_ = Mode::eval;
  bool input_grad_required_ = true;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;       // [out_ch, in_ch, kh, kw]
  Tensor<T> bias;         // [out_ch]
  Tensor<T> weight_grad;
  Tensor<T> bias_grad;
};

/// Valid (unpadded) cross-correlation with per-channel bias, stride 1,
/// computed per sample as weight[out, in*k*k] x im2col(input).
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3);

  std::string_view kind() const override { return "Conv2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& upstream) override;
  std::vector<ParamRef<T>> parameters() override;
  std::size_t parameter_count() const override;

  /// He-uniform: U(-b, b) with b = sqrt(6 / fan_in); bias zero.
  void init_he_uniform(Rng& rng);

  [[nodiscard]] ConvParams<T>& params() noexcept { return p_; }
  [[nodiscard]] const ConvParams<T>& params() const noexcept { return p_; }
  [[nodiscard]] std::size_t in_channels() const noexcept { return in_; }
  [[nodiscard]] std::size_t out_channels() const noexcept { return out_; }
  [[nodiscard]] std::size_t kernel() const noexcept { return k_; }

 private:
  std::size_t in_, out_, k_;
  ConvParams<T> p_;
  Tensor<T> input_;
  std::vector<T> cols_;
  std::vector<T> scratch_;
};

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  Tensor<T> gamma_grad;
  Tensor<T> beta_grad;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

/// Per-channel batch normalization over [N,C,H,W].
///
/// Train mode: mean and biased variance over the N*H*W elements of each
/// channel, normalize with epsilon, then gamma * x_hat + beta. Running
/// statistics blend in the batch mean and the *unbiased* batch variance with
/// weight `momentum`. Eval mode normalizes with the running statistics.
template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  BatchNorm2d(std::string name, std::size_t channels, double epsilon = 1e-5, double momentum = 0.1);

  std::string_view kind() const override { return "BatchNorm2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  /// Full gradient through the batch mean and variance. Throws StateError
  /// after an eval-mode forward.
  Tensor<T> backward(const Tensor<T>& upstream) override;
  std::vector<ParamRef<T>> parameters() override;
  std::vector<BufferRef<T>> buffers() override;
  std::size_t parameter_count() const override;
  std::size_t buffer_count() const override { return p_.running_mean.size() + p_.running_var.size(); }

  [[nodiscard]] BatchNormParams<T>& params() noexcept { return p_; }
  [[nodiscard]] const BatchNormParams<T>& params() const noexcept { return p_; }
  [[nodiscard]] std::size_t channels() const noexcept { return c_; }

 private:
  std::size_t c_;
  BatchNormParams<T> p_;
  Tensor<T> x_hat_;
  std::vector<double> inv_std_;
};

/// max(0, z); the subgradient at z == 0 is taken as 0.
template <typename T>
class ReLU : public Layer<T> {
 public:
  explicit ReLU(std::string name) : Layer<T>(std::move(name)) {}

  std::string_view kind() const override { return "ReLU"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& upstream) override;
  std::uint64_t activation_signature() const override;

 private:
  Shape shape_;
  std::vector<std::uint8_t> positive_;
};

/// Non-overlapping max pooling with floor semantics: a trailing row or
/// column that does not fill a window is dropped (109 -> 54). Ties go to the
/// first maximum in row-major window order.
template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  explicit MaxPool2d(std::string name, std::size_t window = 2);

  std::string_view kind() const override { return "MaxPool2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& upstream) override;
  std::uint64_t activation_signature() const override;

  /// Per output element, the argmax as a linear index into its input [H,W] plane.
  [[nodiscard]] std::span<const std::uint32_t> argmax() const noexcept { return argmax_; }

 private:
  std::size_t window_;
  Shape in_shape_;
  Shape out_shape_;
  std::vector<std::uint32_t> argmax_;
};

/// [N, d1, d2, ...] -> [N, d1*d2*...], channel-major row-major (memory order).
template <typename T>
class Flatten : public Layer<T> {
 public:
  explicit Flatten(std::string name) : Layer<T>(std::move(name)) {}

  std::string_view kind() const override { return "Flatten"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& upstream) override;

 private:
  Shape in_shape_;
};

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]
  Tensor<T> weight_grad;
  Tensor<T> bias_grad;
};

/// y = x * weight^T + bias over [N, in].
template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features);

  std::string_view kind() const override { return "Linear"; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& upstream) override;
  std::vector<ParamRef<T>> parameters() override;
  std::size_t parameter_count() const override;

  void init_he_uniform(Rng& rng);

  [[nodiscard]] LinearParams<T>& params() noexcept { return p_; }
  [[nodiscard]] const LinearParams<T>& params() const noexcept { return p_; }
  [[nodiscard]] std::size_t in_features() const noexcept { return in_; }
  [[nodiscard]] std::size_t out_features() const noexcept { return out_; }

 private:
  std::size_t in_, out_;
  LinearParams<T> p_;
  Tensor<T> input_;
  Tensor<T> weight_t_;
};

/// Inverted dropout: in train mode each element is zeroed with probability
/// p and survivors are scaled by 1/(1-p); eval mode is the identity.
template <typename T>
class Dropout : public Layer<T> {
 public:
  Dropout(std::string name, double rate, std::uint64_t seed);

  std::string_view kind() const override { return "Dropout"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& upstream) override;

  [[nodiscard]] double rate() const noexcept { return rate_; }

  /// While frozen, train-mode forwards reuse the previous mask (as long as
  /// the input size is unchanged). Used by gradient checks.
  void set_mask_frozen(bool frozen) noexcept { frozen_ = frozen; }
  [[nodiscard]] std::span<const std::uint8_t> mask() const noexcept { return keep_; }

 private:
  double rate_;
  Rng rng_;
  bool frozen_ = false;
  std::vector<std::uint8_t> keep_;
};

/// Throws ConfigError unless 0 <= rate < 1.
void validate_dropout_rate(double rate);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;   // dLoss/dLogits, [N, classes]
  Tensor<T> probs;  // softmax rows
};

/// Mean over the batch of -log softmax(logits)[label], evaluated with
/// max-subtraction. grad = (softmax - onehot) / N.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace exnet

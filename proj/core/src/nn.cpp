#include "exnet/nn.hpp"

#include <cmath>
#include <limits>

namespace exnet {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void expect_rank(const Shape& shape, std::size_t rank, std::string_view who) {
  if (shape.size() != rank) {
    throw_shape_error(std::string(who) + " expects rank-" + std::to_string(rank) + " input, got " +
                      shape_str(shape));
  }
}

template <typename T>
void fill_he_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

template <typename T>
void Layer<T>::require_forward() const {
  if (!has_forward_) throw StateError(name_ + ": backward called without a recorded forward");
}

template <typename T>
void Layer<T>::check_upstream(const Tensor<T>& upstream, const Shape& expected) const {
  if (upstream.shape() != expected) {
    throw_shape_error(name_ + ": upstream gradient " + shape_str(upstream.shape()) +
                      " does not match forward output " + shape_str(expected));
  }
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
    : Layer<T>(std::move(name)), in_(in_channels), out_(out_channels), k_(kernel) {
  if (in_ == 0 || out_ == 0 || k_ == 0) throw_shape_error("conv channels and kernel must be >= 1");
  p_.weight = Tensor<T>({out_, in_, k_, k_});
  p_.bias = Tensor<T>({out_});
  p_.weight_grad = Tensor<T>({out_, in_, k_, k_});
  p_.bias_grad = Tensor<T>({out_});
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& input) const {
  expect_rank(input, 4, this->name_);
  if (input[1] != in_) {
    throw_shape_error(this->name_ + ": expected " + std::to_string(in_) + " input channels, got " +
                      shape_str(input));
  }
  const auto [ho, wo] = window_output(input[2], input[3], Window{k_, k_, 1});
  return {input[0], out_, ho, wo};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& input, Mode mode) {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
  const std::size_t plane = out_shape[2] * out_shape[3];
  const std::size_t patch = in_ * k_ * k_;
  const Window win{k_, k_, 1};

  Tensor<T> out(out_shape);
  cols_.resize(patch * plane);
  for (std::size_t s = 0; s < n; ++s) {
    kernels::im2col(input.data() + s * in_ * h * w, cols_.data(), in_, h, w, win);
    T* y = out.data() + s * out_ * plane;
    kernels::gemm(p_.weight.data(), cols_.data(), y, out_, patch, plane);
    for (std::size_t o = 0; o < out_; ++o) {
      const T b = p_.bias[o];
      T* row = y + o * plane;
      for (std::size_t j = 0; j < plane; ++j) row[j] += b;
    }
  }
  input_ = input;
  this->has_forward_ = true;
  this->last_mode_ = mode;
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& upstream) {
  this->require_forward();
  const Shape out_shape = output_shape(input_.shape());
  this->check_upstream(upstream, out_shape);
  const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t plane = out_shape[2] * out_shape[3];
  const std::size_t patch = in_ * k_ * k_;
  const Window win{k_, k_, 1};

  Tensor<T> dx;
  std::vector<T> weight_t;
  std::vector<T> dcols;
  if (this->input_grad_required_) {
    dx = Tensor<T>(input_.shape());
    weight_t.resize(patch * out_);
    kernels::transpose(p_.weight.data(), weight_t.data(), out_, patch);
    dcols.resize(patch * plane);
  }
  std::vector<T> cols_t(plane * patch);
  std::vector<T> dw(out_ * patch);
  cols_.resize(patch * plane);

  for (std::size_t s = 0; s < n; ++s) {
    const T* dy = upstream.data() + s * out_ * plane;
    kernels::im2col(input_.data() + s * in_ * h * w, cols_.data(), in_, h, w, win);
    kernels::transpose(cols_.data(), cols_t.data(), patch, plane);
    kernels::gemm(dy, cols_t.data(), dw.data(), out_, plane, patch);
    for (std::size_t i = 0; i < dw.size(); ++i) p_.weight_grad[i] += dw[i];
    for (std::size_t o = 0; o < out_; ++o) {
      T acc{};
      const T* row = dy + o * plane;
      for (std::size_t j = 0; j < plane; ++j) acc += row[j];
      p_.bias_grad[o] += acc;
    }
    if (this->input_grad_required_) {
      kernels::gemm(weight_t.data(), dy, dcols.data(), patch, out_, plane);
      kernels::col2im(dcols.data(), dx.data() + s * in_ * h * w, in_, h, w, win);
    }
  }
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> Conv2d<T>::parameters() {
  return {{this->name_ + ".weight", &p_.weight, &p_.weight_grad},
          {this->name_ + ".bias", &p_.bias, &p_.bias_grad}};
}

template <typename T>
std::size_t Conv2d<T>::parameter_count() const {
  return p_.weight.size() + p_.bias.size();
}

template <typename T>
void Conv2d<T>::init_he_uniform(Rng& rng) {
  fill_he_uniform(p_.weight, in_ * k_ * k_, rng);
  p_.bias.fill(T{});
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels, double epsilon, double momentum)
    : Layer<T>(std::move(name)), c_(channels) {
  if (c_ == 0) throw_shape_error("batchnorm needs at least one channel");
  if (!(epsilon > 0.0)) throw ConfigError("batchnorm epsilon must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("batchnorm momentum must be in (0,1)");
  p_.gamma = Tensor<T>({c_}, T{1});
  p_.beta = Tensor<T>({c_}, T{0});
  p_.running_mean = Tensor<T>({c_}, T{0});
  p_.running_var = Tensor<T>({c_}, T{1});
  p_.gamma_grad = Tensor<T>({c_});
  p_.beta_grad = Tensor<T>({c_});
  p_.epsilon = epsilon;
  p_.momentum = momentum;
}

template <typename T>
Shape BatchNorm2d<T>::output_shape(const Shape& input) const {
  expect_rank(input, 4, this->name_);
  if (input[1] != c_) {
    throw_shape_error(this->name_ + ": expected " + std::to_string(c_) + " channels, got " +
                      shape_str(input));
  }
  return input;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& input, Mode mode) {
  output_shape(input.shape());
  const std::size_t n = input.dim(0);
  const std::size_t plane = input.dim(2) * input.dim(3);
  const std::size_t m = n * plane;
  if (mode == Mode::train && m < 2) {
    throw DataError(this->name_ + ": degenerate batch (one element per channel) in train mode");
  }

  Tensor<T> out(input.shape());
  x_hat_ = Tensor<T>(input.shape());
  inv_std_.assign(c_, 0.0);
  const double eps = p_.epsilon;

  for (std::size_t c = 0; c < c_; ++c) {
    double mean;
    double var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* x = input.data() + (s * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += x[i];
      }
      mean = sum / static_cast<double>(m);
      // Second pass refines the mean; a constant channel recovers its value exactly.
      double resid = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* x = input.data() + (s * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) resid += static_cast<double>(x[i]) - mean;
      }
      mean += resid / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* x = input.data() + (s * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(x[i]) - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(m);
      const double mom = p_.momentum;
      const double unbiased = sq / static_cast<double>(m - 1);
      p_.running_mean[c] = static_cast<T>((1.0 - mom) * p_.running_mean[c] + mom * mean);
      p_.running_var[c] = static_cast<T>((1.0 - mom) * p_.running_var[c] + mom * unbiased);
    } else {
      mean = p_.running_mean[c];
      var = p_.running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps);
    inv_std_[c] = inv_std;
    const double g = p_.gamma[c];
    const double b = p_.beta[c];
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c_ + c) * plane;
      const T* x = input.data() + base;
      T* xh = x_hat_.data() + base;
      T* y = out.data() + base;
      for (std::size_t i = 0; i < plane; ++i) {
        const double norm = (static_cast<double>(x[i]) - mean) * inv_std;
        xh[i] = static_cast<T>(norm);
        y[i] = static_cast<T>(g * norm + b);
      }
    }
  }
  this->has_forward_ = true;
  this->last_mode_ = mode;
  return out;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& upstream) {
  this->require_forward();
  if (this->last_mode_ != Mode::train) {
    throw StateError(this->name_ + ": backward requires a train-mode forward");
  }
  this->check_upstream(upstream, x_hat_.shape());
  const std::size_t n = x_hat_.dim(0);
  const std::size_t plane = x_hat_.dim(2) * x_hat_.dim(3);
  const double m = static_cast<double>(n * plane);

  Tensor<T> dx(x_hat_.shape());
  for (std::size_t c = 0; c < c_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c_ + c) * plane;
      const T* dy = upstream.data() + base;
      const T* xh = x_hat_.data() + base;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xh += static_cast<double>(dy[i]) * static_cast<double>(xh[i]);
      }
    }
    p_.gamma_grad[c] += static_cast<T>(sum_dy_xh);
    p_.beta_grad[c] += static_cast<T>(sum_dy);
    if (!this->input_grad_required_) continue;
    const double scale = static_cast<double>(p_.gamma[c]) * inv_std_[c] / m;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t base = (s * c_ + c) * plane;
      const T* dy = upstream.data() + base;
      const T* xh = x_hat_.data() + base;
      T* out = dx.data() + base;
      for (std::size_t i = 0; i < plane; ++i) {
        out[i] = static_cast<T>(scale * (m * dy[i] - sum_dy - static_cast<double>(xh[i]) * sum_dy_xh));
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> BatchNorm2d<T>::parameters() {
  return {{this->name_ + ".gamma", &p_.gamma, &p_.gamma_grad},
          {this->name_ + ".beta", &p_.beta, &p_.beta_grad}};
}

template <typename T>
std::vector<BufferRef<T>> BatchNorm2d<T>::buffers() {
  return {{this->name_ + ".running_mean", &p_.running_mean},
          {this->name_ + ".running_var", &p_.running_var}};
}

template <typename T>
std::size_t BatchNorm2d<T>::parameter_count() const {
  return p_.gamma.size() + p_.beta.size();
}

// ------------------------------------------------------------------ ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& input, Mode mode) {
  Tensor<T> out(input.shape());
  positive_.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool pos = input[i] > T{0};
    positive_[i] = pos;
    out[i] = pos ? input[i] : T{0};
  }
  shape_ = input.shape();
  this->has_forward_ = true;
  this->last_mode_ = mode;
  return out;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& upstream) {
  this->require_forward();
  this->check_upstream(upstream, shape_);
  Tensor<T> dx(shape_);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = positive_[i] ? upstream[i] : T{0};
  return dx;
}

template <typename T>
std::uint64_t ReLU<T>::activation_signature() const {
  return fnv1a(positive_.data(), positive_.size());
}

// ------------------------------------------------------------- MaxPool2d

template <typename T>
MaxPool2d<T>::MaxPool2d(std::string name, std::size_t window) : Layer<T>(std::move(name)), window_(window) {
  if (window_ == 0) throw_shape_error("pool window must be >= 1");
}

template <typename T>
Shape MaxPool2d<T>::output_shape(const Shape& input) const {
  expect_rank(input, 4, this->name_);
  const auto [ho, wo] = window_output(input[2], input[3], Window{window_, window_, window_});
  return {input[0], input[1], ho, wo};
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& input, Mode mode) {
  out_shape_ = output_shape(input.shape());
  in_shape_ = input.shape();
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ho = out_shape_[2], wo = out_shape_[3];

  Tensor<T> out(out_shape_);
  argmax_.resize(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* x = input.data() + p * h * w;
    T* y = out.data() + p * ho * wo;
    std::uint32_t* idx = argmax_.data() + p * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = oy * window_ * w + ox * window_;
        T best_v = x[best];
        for (std::size_t ky = 0; ky < window_; ++ky) {
          for (std::size_t kx = 0; kx < window_; ++kx) {
            const std::size_t at = (oy * window_ + ky) * w + ox * window_ + kx;
            if (x[at] > best_v) {
              best_v = x[at];
              best = at;
            }
          }
        }
        y[oy * wo + ox] = best_v;
        idx[oy * wo + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
  this->has_forward_ = true;
  this->last_mode_ = mode;
  return out;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& upstream) {
  this->require_forward();
  this->check_upstream(upstream, out_shape_);
  Tensor<T> dx(in_shape_);
  const std::size_t planes = in_shape_[0] * in_shape_[1];
  const std::size_t in_plane = in_shape_[2] * in_shape_[3];
  const std::size_t out_plane = out_shape_[2] * out_shape_[3];
  for (std::size_t p = 0; p < planes; ++p) {
    T* d = dx.data() + p * in_plane;
    const T* up = upstream.data() + p * out_plane;
    const std::uint32_t* idx = argmax_.data() + p * out_plane;
    for (std::size_t j = 0; j < out_plane; ++j) d[idx[j]] += up[j];
  }
  return dx;
}

template <typename T>
std::uint64_t MaxPool2d<T>::activation_signature() const {
  return fnv1a(argmax_.data(), argmax_.size() * sizeof(std::uint32_t));
}

// --------------------------------------------------------------- Flatten

template <typename T>
Shape Flatten<T>::output_shape(const Shape& input) const {
  if (input.size() < 2) throw_shape_error(this->name_ + ": flatten expects a batch dimension");
  return {input[0], shape_size(input) / input[0]};
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& input, Mode mode) {
  in_shape_ = input.shape();
  this->has_forward_ = true;
  this->last_mode_ = mode;
  return input.reshaped(output_shape(in_shape_));
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& upstream) {
  this->require_forward();
  this->check_upstream(upstream, output_shape(in_shape_));
  return upstream.reshaped(in_shape_);
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : Layer<T>(std::move(name)), in_(in_features), out_(out_features) {
  if (in_ == 0 || out_ == 0) throw_shape_error("linear dimensions must be >= 1");
  p_.weight = Tensor<T>({out_, in_});
  p_.bias = Tensor<T>({out_});
  p_.weight_grad = Tensor<T>({out_, in_});
  p_.bias_grad = Tensor<T>({out_});
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& input) const {
  expect_rank(input, 2, this->name_);
  if (input[1] != in_) {
    throw_shape_error(this->name_ + ": expected " + std::to_string(in_) + " features, got " +
                      shape_str(input));
  }
  return {input[0], out_};
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& input, Mode mode) {
  const Shape out_shape = output_shape(input.shape());
  if (weight_t_.shape() != Shape{in_, out_}) weight_t_ = Tensor<T>({in_, out_});
  kernels::transpose(p_.weight.data(), weight_t_.data(), out_, in_);
  Tensor<T> out(out_shape);
  const std::size_t n = input.dim(0);
  kernels::gemm(input.data(), weight_t_.data(), out.data(), n, in_, out_);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < out_; ++o) out[s * out_ + o] += p_.bias[o];
  }
  input_ = input;
  this->has_forward_ = true;
  this->last_mode_ = mode;
  return out;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& upstream) {
  this->require_forward();
  const std::size_t n = input_.dim(0);
  this->check_upstream(upstream, Shape{n, out_});

  std::vector<T> up_t(out_ * n);
  kernels::transpose(upstream.data(), up_t.data(), n, out_);
  std::vector<T> dw(out_ * in_);
  kernels::gemm(up_t.data(), input_.data(), dw.data(), out_, n, in_);
  for (std::size_t i = 0; i < dw.size(); ++i) p_.weight_grad[i] += dw[i];
  for (std::size_t o = 0; o < out_; ++o) {
    T acc{};
    for (std::size_t s = 0; s < n; ++s) acc += upstream[s * out_ + o];
    p_.bias_grad[o] += acc;
  }
  if (!this->input_grad_required_) return {};
  Tensor<T> dx({n, in_});
  kernels::gemm(upstream.data(), p_.weight.data(), dx.data(), n, out_, in_);
  return dx;
}

template <typename T>
std::vector<ParamRef<T>> Linear<T>::parameters() {
  return {{this->name_ + ".weight", &p_.weight, &p_.weight_grad},
          {this->name_ + ".bias", &p_.bias, &p_.bias_grad}};
}

template <typename T>
std::size_t Linear<T>::parameter_count() const {
  return p_.weight.size() + p_.bias.size();
}

template <typename T>
void Linear<T>::init_he_uniform(Rng& rng) {
  fill_he_uniform(p_.weight, in_, rng);
  p_.bias.fill(T{});
}

// --------------------------------------------------------------- Dropout

void validate_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  }
}

template <typename T>
Dropout<T>::Dropout(std::string name, double rate, std::uint64_t seed)
    : Layer<T>(std::move(name)), rate_(rate), rng_(seed) {
  validate_dropout_rate(rate);
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& input, Mode mode) {
  this->has_forward_ = true;
  this->last_mode_ = mode;
  if (mode == Mode::eval) return input;
  if (!frozen_ || keep_.size() != input.size()) {
    keep_.resize(input.size());
    for (auto& k : keep_) k = rng_.uniform() >= rate_;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = keep_[i] ? input[i] * scale : T{0};
  return out;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& upstream) {
  this->require_forward();
  if (this->last_mode_ == Mode::eval) return upstream;
  if (upstream.size() != keep_.size()) throw_shape_error(this->name_ + ": upstream size mismatch");
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  Tensor<T> dx(upstream.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = keep_[i] ? upstream[i] * scale : T{0};
  return dx;
}

// ---------------------------------------------------------------- loss

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw_shape_error("logits must be [N, classes]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw DataError("label count " + std::to_string(labels.size()) + " does not match batch " +
                    std::to_string(n));
  }
  LossResult<T> r;
  r.grad = Tensor<T>(logits.shape());
  r.probs = Tensor<T>(logits.shape());
  double total = 0.0;
  std::vector<double> e(k);
  for (std::size_t s = 0; s < n; ++s) {
    const int label = labels[s];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(k) +
                      " classes");
    }
    const T* row = logits.data() + s * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = std::exp(static_cast<double>(row[j]) - mx);
      sum += e[j];
    }
    total -= (static_cast<double>(row[label]) - mx) - std::log(sum);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = e[j] / sum;
      r.probs[s * k + j] = static_cast<T>(p);
      const double onehot = static_cast<std::size_t>(label) == j ? 1.0 : 0.0;
      r.grad[s * k + j] = static_cast<T>((p - onehot) / static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

#define EXNET_INSTANTIATE(T)                                   \
  template class Layer<T>;                                     \
  template class Conv2d<T>;                                    \
  template class BatchNorm2d<T>;                               \
  template class ReLU<T>;                                      \
  template class MaxPool2d<T>;                                 \
  template class Flatten<T>;                                   \
  template class Linear<T>;                                    \
  template class Dropout<T>;                                   \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>);

EXNET_INSTANTIATE(float)
EXNET_INSTANTIATE(double)

#undef EXNET_INSTANTIATE

}  // namespace exnet

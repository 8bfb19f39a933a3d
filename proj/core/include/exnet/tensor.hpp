#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exnet/error.hpp"

namespace exnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);
Shape row_major_strides(const Shape& shape);

/// Throws ShapeError unless the shape is non-empty with every dimension >= 1.
void validate_shape(const Shape& shape);

/// Dense row-major tensor owning its elements.
///
/// A default-constructed tensor is the empty placeholder (rank 0, no data);
/// every other tensor has a validated shape and product(shape) elements.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
      throw_shape_error("data length " + std::to_string(data_.size()) + " does not match shape " +
                        shape_str(shape_));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, T{}); }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] Shape strides() const { return row_major_strides(shape_); }

  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Reinterprets the element buffer under a new shape of equal size.
  void reshape(Shape shape) {
    validate_shape(shape);
    if (shape_size(shape) != data_.size()) {
      throw_shape_error("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    shape_ = std::move(shape);
  }

  [[nodiscard]] Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  [[nodiscard]] Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw_shape_error("index rank " + std::to_string(index.size()) + " for tensor of shape " +
                        shape_str(shape_));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (const std::size_t i : index) {
      if (i >= shape_[axis]) throw_shape_error("index out of range on axis " + std::to_string(axis));
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return flat;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Square convolution window geometry shared by im2col and col2im.
struct Window {
  std::size_t kh = 3;
  std::size_t kw = 3;
  std::size_t stride = 1;
};

/// Output spatial size of a valid (unpadded) window sweep.
std::pair<std::size_t, std::size_t> window_output(std::size_t h, std::size_t w, const Window& win);

/// Worker threads used by the matmul kernels. Any value produces bit-identical
/// results: each output element is owned by exactly one thread.
void set_num_threads(unsigned n);
unsigned num_threads();

namespace kernels {

/// c[m,n] = a[m,k] * b[k,n]. Each output element is summed strictly
/// left-to-right over k; the result does not depend on blocking or threads.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

/// out[cols, rows] = in[rows, cols]^T.
template <typename T>
void transpose(const T* in, T* out, std::size_t rows, std::size_t cols);

/// Unfolds one [channels, h, w] image into [channels*kh*kw, ho*wo] columns.
/// Row index is channel-major, then kernel row, then kernel column.
template <typename T>
void im2col(const T* image, T* cols, std::size_t channels, std::size_t h, std::size_t w,
            const Window& win);

/// Adjoint of im2col: scatter-adds columns back into a zeroed image buffer.
template <typename T>
void col2im(const T* cols, T* image, std::size_t channels, std::size_t h, std::size_t w,
            const Window& win);

}  // namespace kernels

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> identity(std::size_t n);

template <typename T>
Tensor<T> im2col(const Tensor<T>& input, const Window& win);

template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& input_shape, const Window& win);

/// Inner product over all elements, accumulated in double in index order.
template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace exnet

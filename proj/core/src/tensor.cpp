#include "exnet/tensor.hpp"

#include <atomic>
#include <sstream>
#include <thread>

namespace exnet {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i > 1; --i) strides[i - 2] = strides[i - 1] * shape[i - 1];
  return strides;
}

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw_shape_error("tensor shape must have at least one dimension");
  for (const std::size_t d : shape) {
    if (d == 0) throw_shape_error("zero-sized dimension in " + shape_str(shape));
  }
}

std::pair<std::size_t, std::size_t> window_output(std::size_t h, std::size_t w, const Window& win) {
  if (win.kh == 0 || win.kw == 0 || win.stride == 0) throw_shape_error("window must be non-empty");
  if (h < win.kh || w < win.kw) {
    throw_shape_error("window " + std::to_string(win.kh) + "x" + std::to_string(win.kw) +
                      " larger than input " + std::to_string(h) + "x" + std::to_string(w));
  }
  return {(h - win.kh) / win.stride + 1, (w - win.kw) / win.stride + 1};
}

namespace {

std::atomic<unsigned> g_threads{std::max(1u, std::thread::hardware_concurrency())};

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(g_threads.load(), count);
  if (workers <= 1) {
    for (std::size_t t = 0; t < count; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t t = next++; t < count; t = next++) fn(t);
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(run);
  run();
}

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 512;
constexpr std::size_t kParallelWork = std::size_t{1} << 20;

template <typename T>
void gemm_tile(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t k,
               std::size_t n, std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
  std::size_t i = i0;
  for (; i + kRowBlock <= i1; i += kRowBlock) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    for (std::size_t j = j0; j < j1; ++j) c0[j] = c1[j] = c2[j] = c3[j] = T{};
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p];
      const T v1 = a0[k + p];
      const T v2 = a0[2 * k + p];
      const T v3 = a0[3 * k + p];
      const T* __restrict bp = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) {
        const T bv = bp[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < i1; ++i) {
    T* __restrict ci = c + i * n;
    for (std::size_t j = j0; j < j1; ++j) ci[j] = T{};
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v = ai[p];
      const T* __restrict bp = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) ci[j] += v * bp[j];
    }
  }
}

}  // namespace

void set_num_threads(unsigned n) { g_threads = std::max(1u, n); }
unsigned num_threads() { return g_threads.load(); }

namespace kernels {

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t row_tiles = (m + kRowBlock - 1) / kRowBlock;
  const std::size_t col_tiles = (n + kColBlock - 1) / kColBlock;
  auto tile = [&](std::size_t t) {
    const std::size_t rt = t / col_tiles;
    const std::size_t ct = t % col_tiles;
    const std::size_t i0 = rt * kRowBlock;
    const std::size_t j0 = ct * kColBlock;
    gemm_tile(a, b, c, k, n, i0, std::min(m, i0 + kRowBlock), j0, std::min(n, j0 + kColBlock));
  };
  const std::size_t tiles = row_tiles * col_tiles;
  if (m * n * k < kParallelWork) {
    for (std::size_t t = 0; t < tiles; ++t) tile(t);
  } else {
    parallel_for(tiles, tile);
  }
}

template <typename T>
void transpose(const T* in, T* out, std::size_t rows, std::size_t cols) {
  constexpr std::size_t B = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += B) {
    const std::size_t r1 = std::min(rows, r0 + B);
    for (std::size_t c0 = 0; c0 < cols; c0 += B) {
      const std::size_t c1 = std::min(cols, c0 + B);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

template <typename T>
void im2col(const T* image, T* cols, std::size_t channels, std::size_t h, std::size_t w,
            const Window& win) {
  const auto [ho, wo] = window_output(h, w, win);
  const std::size_t plane = ho * wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = image + c * h * w;
    for (std::size_t ki = 0; ki < win.kh; ++ki) {
      for (std::size_t kj = 0; kj < win.kw; ++kj, ++row) {
        T* dst = cols + row * plane;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const T* line = src + (oy * win.stride + ki) * w + kj;
          T* out = dst + oy * wo;
          if (win.stride == 1) {
            std::copy(line, line + wo, out);
          } else {
            for (std::size_t ox = 0; ox < wo; ++ox) out[ox] = line[ox * win.stride];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, T* image, std::size_t channels, std::size_t h, std::size_t w,
            const Window& win) {
  const auto [ho, wo] = window_output(h, w, win);
  const std::size_t plane = ho * wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = image + c * h * w;
    for (std::size_t ki = 0; ki < win.kh; ++ki) {
      for (std::size_t kj = 0; kj < win.kw; ++kj, ++row) {
        const T* src = cols + row * plane;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          T* line = dst + (oy * win.stride + ki) * w + kj;
          const T* in = src + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) line[ox * win.stride] += in[ox];
        }
      }
    }
  }
}

}  // namespace kernels

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw_shape_error("matmul expects rank-2 operands");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw_shape_error("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  }
  Tensor<T> c({m, n});
  kernels::gemm(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw_shape_error("transpose expects a rank-2 tensor");
  Tensor<T> out({a.dim(1), a.dim(0)});
  kernels::transpose(a.data(), out.data(), a.dim(0), a.dim(1));
  return out;
}

template <typename T>
Tensor<T> identity(std::size_t n) {
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = T{1};
  return out;
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& input, const Window& win) {
  if (input.rank() != 3) throw_shape_error("im2col expects [C,H,W], got " + shape_str(input.shape()));
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const auto [ho, wo] = window_output(h, w, win);
  Tensor<T> cols({c * win.kh * win.kw, ho * wo});
  kernels::im2col(input.data(), cols.data(), c, h, w, win);
  return cols;
}

template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& input_shape, const Window& win) {
  if (input_shape.size() != 3) throw_shape_error("col2im expects a [C,H,W] target shape");
  validate_shape(input_shape);
  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  const auto [ho, wo] = window_output(h, w, win);
  const Shape expected{c * win.kh * win.kw, ho * wo};
  if (cols.shape() != expected) {
    throw_shape_error("col2im columns " + shape_str(cols.shape()) + " inconsistent with input " +
                      shape_str(input_shape) + " (expected " + shape_str(expected) + ")");
  }
  Tensor<T> image(input_shape);
  kernels::col2im(cols.data(), image.data(), c, h, w, win);
  return image;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) throw_shape_error("dot of tensors with different sizes");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

#define EXNET_INSTANTIATE(T)                                                                     \
  template void kernels::gemm<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t); \
  template void kernels::transpose<T>(const T*, T*, std::size_t, std::size_t);                   \
  template void kernels::im2col<T>(const T*, T*, std::size_t, std::size_t, std::size_t,          \
                                   const Window&);                                               \
  template void kernels::col2im<T>(const T*, T*, std::size_t, std::size_t, std::size_t,          \
                                   const Window&);                                               \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                             \
  template Tensor<T> identity<T>(std::size_t);                                                   \
  template Tensor<T> im2col<T>(const Tensor<T>&, const Window&);                                 \
  template Tensor<T> col2im<T>(const Tensor<T>&, const Shape&, const Window&);                   \
  template double dot<T>(const Tensor<T>&, const Tensor<T>&);

EXNET_INSTANTIATE(float)
EXNET_INSTANTIATE(double)

#undef EXNET_INSTANTIATE

}  // namespace exnet

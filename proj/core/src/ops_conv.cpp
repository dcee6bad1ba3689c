#include <string>

#include "gemm.hpp"
#include "usema/ops.hpp"

namespace usema {
namespace {

struct Geometry {
  std::int64_t channels, height, width;  // image being sampled
  std::int64_t kh, kw, stride, pad;
  std::int64_t out_h, out_w;             // sampling grid
};

// col[(c*kh + i)*kw + j][oy*out_w + ox] = img[c][oy*s - p + i][ox*s - p + j] (0 outside).
template <typename T>
void im2col(const T* img, const Geometry& g, T* col) {
  const std::int64_t grid = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * grid;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t y = oy * g.stride - g.pad + i;
          T* dst = row + oy * g.out_w;
          if (y < 0 || y >= g.height) {
            std::fill_n(dst, g.out_w, T{0});
            continue;
          }
          const T* src = plane + y * g.width;
          if (g.stride == 1) {
            const std::int64_t x0 = j - g.pad;
            for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
              const std::int64_t x = x0 + ox;
              dst[ox] = (x >= 0 && x < g.width) ? src[x] : T{0};
            }
          } else {
            for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
              const std::int64_t x = ox * g.stride - g.pad + j;
              dst[ox] = (x >= 0 && x < g.width) ? src[x] : T{0};
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: img[c][y][x] += col[...] for every sampled position.
template <typename T>
void col2im(const T* col, const Geometry& g, T* img) {
  const std::int64_t grid = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * grid;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t y = oy * g.stride - g.pad + i;
          if (y < 0 || y >= g.height) continue;
          const T* src = row + oy * g.out_w;
          T* dst = plane + y * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t x = ox * g.stride - g.pad + j;
            if (x >= 0 && x < g.width) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Geometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

// Valid output columns [lo, hi) whose input column ox*s - p + j lies inside [0, width).
void valid_range(std::int64_t j, const Geometry& g, std::int64_t& lo, std::int64_t& hi) {
  // ox*s >= p - j  and  ox*s <= width - 1 + p - j
  const std::int64_t a = g.pad - j;
  lo = a <= 0 ? 0 : (a + g.stride - 1) / g.stride;
  const std::int64_t b = g.width - 1 + g.pad - j;
  hi = b < 0 ? 0 : std::min(g.out_w, b / g.stride + 1);
  if (hi < lo) hi = lo;
}

template <typename T>
void depthwise_forward(const T* x, const T* w, T* y, std::int64_t planes, std::int64_t channels,
                       const Geometry& g) {
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t c = p % channels;
    const T* src = x + p * g.height * g.width;
    const T* k = w + c * g.kh * g.kw;
    T* dst = y + p * g.out_h * g.out_w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T wv = k[i * g.kw + j];
        std::int64_t lo, hi;
        valid_range(j, g, lo, hi);
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= g.height) continue;
          const std::int64_t off = iy * g.width - g.pad + j;
          T* drow = dst + oy * g.out_w;
          for (std::int64_t ox = lo; ox < hi; ++ox) drow[ox] += wv * src[off + ox * g.stride];
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, std::int64_t planes,
                        std::int64_t channels, const Geometry& g) {
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t c = p % channels;
    const T* src = x + p * g.height * g.width;
    const T* k = w + c * g.kh * g.kw;
    const T* grow_base = dy + p * g.out_h * g.out_w;
    T* dsrc = dx ? dx + p * g.height * g.width : nullptr;
    T* dk = dw ? dw + c * g.kh * g.kw : nullptr;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T wv = k[i * g.kw + j];
        std::int64_t lo, hi;
        valid_range(j, g, lo, hi);
        T acc = 0;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= g.height) continue;
          const std::int64_t off = iy * g.width - g.pad + j;
          const T* grow = grow_base + oy * g.out_w;
          if (dk) {
            for (std::int64_t ox = lo; ox < hi; ++ox) acc += grow[ox] * src[off + ox * g.stride];
          }
          if (dsrc) {
            for (std::int64_t ox = lo; ox < hi; ++ox) dsrc[off + ox * g.stride] += wv * grow[ox];
          }
        }
        if (dk) dk[i * g.kw + j] += acc;
      }
    }
  }
}

template <typename T>
void add_channel_bias(T* y, const T* bias, std::int64_t batch, std::int64_t channels,
                      std::int64_t plane) {
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t c = 0; c < channels; ++c) {
      T* p = y + (n * channels + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) p[i] += bias[c];
    }
}

template <typename T>
void accumulate_channel_bias_grad(const T* dy, T* db, std::int64_t batch, std::int64_t channels,
                                  std::int64_t plane) {
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* p = dy + (n * channels + c) * plane;
      T acc = 0;
      for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      db[c] += acc;
    }
}

void check_bias(bool has_bias, const Shape& bias, std::int64_t channels, const char* op) {
  if (has_bias && (bias.size() != 1 || bias[0] != channels)) {
    throw DimensionError(std::string(op) + ": bias " + shape_str(bias) + " for " +
                         std::to_string(channels) + " output channels");
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
              Conv2dOptions options) {
  const auto& xs = input.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4) {
    throw DimensionError("conv2d: expected [B, C, H, W] input and [O, C/g, kh, kw] kernel, got " +
                         shape_str(xs) + " and " + shape_str(ks));
  }
  const std::int64_t groups = options.groups;
  const std::int64_t batch = xs[0], channels = xs[1], height = xs[2], width = xs[3];
  const std::int64_t out_ch = ks[0];
  if (groups < 1 || channels % groups != 0 || out_ch % groups != 0 ||
      ks[1] != channels / groups) {
    throw DimensionError("conv2d: kernel " + shape_str(ks) + " incompatible with input " +
                         shape_str(xs) + " and groups " + std::to_string(groups));
  }
  if (options.stride < 1 || options.padding < 0) {
    throw DimensionError("conv2d: stride must be >= 1 and padding >= 0");
  }
  if (ks[2] > height + 2 * options.padding || ks[3] > width + 2 * options.padding) {
    throw DimensionError("conv2d: kernel " + shape_str(ks) + " larger than padded input " +
                         shape_str(xs));
  }
  const bool has_bias = bias.defined();
  check_bias(has_bias, has_bias ? bias.shape() : Shape{}, out_ch, "conv2d");

  Geometry g{channels / groups, height, width, ks[2], ks[3], options.stride, options.padding, 0, 0};
  g.out_h = (height + 2 * g.pad - g.kh) / g.stride + 1;
  g.out_w = (width + 2 * g.pad - g.kw) / g.stride + 1;
  const std::int64_t grid = g.out_h * g.out_w;
  const std::int64_t cg = channels / groups, og = out_ch / groups;
  const std::int64_t patch = cg * g.kh * g.kw;
  const bool depthwise = groups == channels && out_ch == channels;

  Tensor<T> out({batch, out_ch, g.out_h, g.out_w});
  const T* x = input.value().ptr();
  const T* w = kernel.value().ptr();
  if (depthwise) {
    Geometry dg = g;
    dg.channels = 1;
    depthwise_forward(x, w, out.ptr(), batch * channels, channels, dg);
  } else {
    std::vector<T> col(is_pointwise(g) ? 0 : static_cast<std::size_t>(patch * grid));
    for (std::int64_t n = 0; n < batch; ++n) {
      for (std::int64_t gi = 0; gi < groups; ++gi) {
        const T* img = x + (n * channels + gi * cg) * height * width;
        const T* cols = img;
        if (!col.empty()) {
          im2col(img, g, col.data());
          cols = col.data();
        }
        detail::gemm(false, false, static_cast<int>(og), static_cast<int>(grid),
                     static_cast<int>(patch), T{1}, w + gi * og * patch, static_cast<int>(patch),
                     cols, static_cast<int>(grid), T{0},
                     out.ptr() + (n * out_ch + gi * og) * grid, static_cast<int>(grid));
      }
    }
  }
  if (has_bias) add_channel_bias(out.ptr(), bias.value().ptr(), batch, out_ch, grid);

  std::vector<Var<T>> parents{input, kernel};
  if (has_bias) parents.push_back(bias);
  return record<T>(
      "conv2d", std::move(out), std::move(parents),
      [g, batch, channels, out_ch, groups, cg, og, patch, grid, depthwise,
       has_bias](Node<T>& self) {
        Node<T>& xin = *self.parents[0];
        Node<T>& ker = *self.parents[1];
        const T* dy = self.grad.ptr();
        const T* x = xin.value.ptr();
        const T* w = ker.value.ptr();
        const std::int64_t hw = g.height * g.width;
        if (depthwise) {
          Geometry dg = g;
          dg.channels = 1;
          T* dx = xin.requires_grad ? xin.grad_buffer().ptr() : nullptr;
          T* dw = ker.requires_grad ? ker.grad_buffer().ptr() : nullptr;
          depthwise_backward(x, w, dy, dx, dw, batch * channels, channels, dg);
        } else {
          const bool pointwise = is_pointwise(g);
          std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(patch * grid));
          std::vector<T> dcol(pointwise || !xin.requires_grad ? 0
                                                               : static_cast<std::size_t>(patch * grid));
          for (std::int64_t n = 0; n < batch; ++n) {
            for (std::int64_t gi = 0; gi < groups; ++gi) {
              const T* img = x + (n * channels + gi * cg) * hw;
              const T* dyg = dy + (n * out_ch + gi * og) * grid;
              if (ker.requires_grad) {
                const T* cols = img;
                if (!pointwise) {
                  im2col(img, g, col.data());
                  cols = col.data();
                }
                detail::gemm(false, true, static_cast<int>(og), static_cast<int>(patch),
                             static_cast<int>(grid), T{1}, dyg, static_cast<int>(grid), cols,
                             static_cast<int>(grid), T{1}, ker.grad_buffer().ptr() + gi * og * patch,
                             static_cast<int>(patch));
              }
              if (xin.requires_grad) {
                T* dimg = xin.grad_buffer().ptr() + (n * channels + gi * cg) * hw;
                if (pointwise) {
                  detail::gemm(true, false, static_cast<int>(patch), static_cast<int>(grid),
                               static_cast<int>(og), T{1}, w + gi * og * patch,
                               static_cast<int>(patch), dyg, static_cast<int>(grid), T{1}, dimg,
                               static_cast<int>(grid));
                } else {
                  detail::gemm(true, false, static_cast<int>(patch), static_cast<int>(grid),
                               static_cast<int>(og), T{1}, w + gi * og * patch,
                               static_cast<int>(patch), dyg, static_cast<int>(grid), T{0},
                               dcol.data(), static_cast<int>(grid));
                  col2im(dcol.data(), g, dimg);
                }
              }
            }
          }
        }
        if (has_bias && self.parents[2]->requires_grad) {
          accumulate_channel_bias_grad(dy, self.parents[2]->grad_buffer().ptr(), batch, out_ch,
                                       grid);
        }
      });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias,
                        std::int64_t stride, std::int64_t padding) {
  const auto& xs = input.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4 || ks[0] != xs[1]) {
    throw DimensionError("conv_transpose2d: kernel " + shape_str(ks) +
                         " incompatible with input " + shape_str(xs));
  }
  if (stride < 1 || padding < 0) {
    throw DimensionError("conv_transpose2d: stride must be >= 1 and padding >= 0");
  }
  const std::int64_t batch = xs[0], in_ch = xs[1], height = xs[2], width = xs[3];
  const std::int64_t out_ch = ks[1], kh = ks[2], kw = ks[3];
  const std::int64_t out_h = (height - 1) * stride - 2 * padding + kh;
  const std::int64_t out_w = (width - 1) * stride - 2 * padding + kw;
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("conv_transpose2d: kernel " + shape_str(ks) +
                         " too small for padding " + std::to_string(padding));
  }
  const bool has_bias = bias.defined();
  check_bias(has_bias, has_bias ? bias.shape() : Shape{}, out_ch, "conv_transpose2d");

  // The output image is sampled by the conv2d geometry whose grid is the input.
  const Geometry g{out_ch, out_h, out_w, kh, kw, stride, padding, height, width};
  const std::int64_t grid = height * width;
  const std::int64_t patch = out_ch * kh * kw;
  const std::int64_t out_plane = out_h * out_w;

  Tensor<T> out({batch, out_ch, out_h, out_w});
  std::vector<T> col(static_cast<std::size_t>(patch * grid));
  for (std::int64_t n = 0; n < batch; ++n) {
    detail::gemm(true, false, static_cast<int>(patch), static_cast<int>(grid),
                 static_cast<int>(in_ch), T{1}, kernel.value().ptr(), static_cast<int>(patch),
                 input.value().ptr() + n * in_ch * grid, static_cast<int>(grid), T{0}, col.data(),
                 static_cast<int>(grid));
    col2im(col.data(), g, out.ptr() + n * out_ch * out_plane);
  }
  if (has_bias) add_channel_bias(out.ptr(), bias.value().ptr(), batch, out_ch, out_plane);

  std::vector<Var<T>> parents{input, kernel};
  if (has_bias) parents.push_back(bias);
  return record<T>(
      "conv_transpose2d", std::move(out), std::move(parents),
      [g, batch, in_ch, out_ch, grid, patch, out_plane, has_bias](Node<T>& self) {
        Node<T>& xin = *self.parents[0];
        Node<T>& ker = *self.parents[1];
        std::vector<T> col(static_cast<std::size_t>(patch * grid));
        for (std::int64_t n = 0; n < batch; ++n) {
          im2col(self.grad.ptr() + n * out_ch * out_plane, g, col.data());
          if (xin.requires_grad) {
            detail::gemm(false, false, static_cast<int>(in_ch), static_cast<int>(grid),
                         static_cast<int>(patch), T{1}, ker.value.ptr(), static_cast<int>(patch),
                         col.data(), static_cast<int>(grid), T{1},
                         xin.grad_buffer().ptr() + n * in_ch * grid, static_cast<int>(grid));
          }
          if (ker.requires_grad) {
            detail::gemm(false, true, static_cast<int>(in_ch), static_cast<int>(patch),
                         static_cast<int>(grid), T{1}, xin.value.ptr() + n * in_ch * grid,
                         static_cast<int>(grid), col.data(), static_cast<int>(grid), T{1},
                         ker.grad_buffer().ptr(), static_cast<int>(patch));
          }
        }
        if (has_bias && self.parents[2]->requires_grad) {
          accumulate_channel_bias_grad(self.grad.ptr(), self.parents[2]->grad_buffer().ptr(),
                                       batch, out_ch, out_plane);
        }
      });
}

template Var<float> conv2d(const Var<float>&, const Var<float>&, const Var<float>&,
                           Conv2dOptions);
template Var<double> conv2d(const Var<double>&, const Var<double>&, const Var<double>&,
                            Conv2dOptions);
template Var<float> conv_transpose2d(const Var<float>&, const Var<float>&, const Var<float>&,
                                     std::int64_t, std::int64_t);
template Var<double> conv_transpose2d(const Var<double>&, const Var<double>&,
                                      const Var<double>&, std::int64_t, std::int64_t);

}  // namespace usema

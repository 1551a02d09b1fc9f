#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freconv/parallel.hpp"
#include "freconv/tensor.hpp"

namespace freconv {

// Full description of one 2D convolution. Convolution here is
// cross-correlation (no kernel flip), the convention of modern CNN stacks.
struct ConvSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 1;    // odd extent K
  std::int64_t stride = 1;
  std::int64_t padding = 0;   // zero padding
  std::int64_t dilation = 1;  // tap spacing r
  std::int64_t groups = 1;
  bool has_bias = false;

  // K + (K-1)(r-1)
  std::int64_t effective_kernel() const { return kernel + (kernel - 1) * (dilation - 1); }

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0) throw ParamError("conv channels must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ParamError("conv kernel must be odd and >= 1");
    if (stride < 1) throw ParamError("conv stride must be >= 1");
    if (padding < 0) throw ParamError("conv padding must be >= 0");
    if (dilation < 1) throw ParamError("conv dilation must be >= 1");
    if (groups < 1) throw ParamError("conv groups must be >= 1");
    if (in_channels % groups != 0 || out_channels % groups != 0)
      throw ParamError("conv channels (" + std::to_string(in_channels) + "," +
                       std::to_string(out_channels) + ") not divisible by groups " +
                       std::to_string(groups));
  }

  // floor((extent + 2p - effective_kernel)/stride) + 1
  std::int64_t out_extent(std::int64_t in_extent) const {
    return (in_extent + 2 * padding - effective_kernel()) / stride + 1;
  }

  Shape4 weight_shape() const {
    return Shape4{out_channels, in_channels / groups, kernel, kernel};
  }

  // Padding that keeps spatial extents at ceil(extent/stride).
  std::int64_t same_padding() const { return dilation * (kernel - 1) / 2; }

  bool operator==(const ConvSpec&) const = default;
};

template <typename T>
struct ConvParams {
  Tensor<T> weights;        // [out, in/g, K, K]
  std::vector<T> bias;      // length out_channels, empty when spec.has_bias is false

  static ConvParams zeros(const ConvSpec& spec) {
    ConvParams p;
    p.weights = Tensor<T>(spec.weight_shape());
    if (spec.has_bias) p.bias.assign(static_cast<std::size_t>(spec.out_channels), T(0));
    return p;
  }
};

namespace detail {

template <typename T>
void check_conv_input(const Tensor<T>& x, const ConvSpec& spec) {
  spec.validate();
  if (x.c() != spec.in_channels)
    throw ShapeError("conv input has " + std::to_string(x.c()) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  if (spec.out_extent(x.h()) < 1 || spec.out_extent(x.w()) < 1)
    throw ShapeError("conv output extent would be non-positive for input " + shape_str(x.shape));
}

template <typename T>
void check_conv_params(const ConvSpec& spec, const ConvParams<T>& params) {
  if (params.weights.shape != spec.weight_shape())
    throw ShapeError("conv weights are " + shape_str(params.weights.shape) + ", spec expects " +
                     shape_str(spec.weight_shape()));
  if (spec.has_bias && params.bias.size() != static_cast<std::size_t>(spec.out_channels))
    throw ShapeError("conv bias length " + std::to_string(params.bias.size()) +
                     ", spec expects " + std::to_string(spec.out_channels));
}

// C[m,n] += A[m,k] * B[k,n], all row-major dense.
template <typename T>
void matmul_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Lowers one sample's group slice into a patch matrix of shape
// [cpg*K*K, out_h*out_w]. Out-of-image taps contribute zero rows.
template <typename T>
void im2col(const T* x, std::int64_t h, std::int64_t w, const ConvSpec& spec,
            std::int64_t out_h, std::int64_t out_w, T* col) {
  const std::int64_t cpg = spec.in_channels / spec.groups;
  const std::int64_t K = spec.kernel;
  for (std::int64_t ch = 0; ch < cpg; ++ch) {
    const T* plane = x + ch * h * w;
    for (std::int64_t ky = 0; ky < K; ++ky) {
      for (std::int64_t kx = 0; kx < K; ++kx) {
        T* crow = col + ((ch * K + ky) * K + kx) * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          const std::int64_t iy = oy * spec.stride - spec.padding + ky * spec.dilation;
          T* dst = crow + oy * out_w;
          if (iy < 0 || iy >= h) {
            for (std::int64_t ox = 0; ox < out_w; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* src = plane + iy * w;
          for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const std::int64_t ix = ox * spec.stride - spec.padding + kx * spec.dilation;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a patch matrix back into a sample's group slice.
template <typename T>
void col2im_acc(const T* col, std::int64_t h, std::int64_t w, const ConvSpec& spec,
                std::int64_t out_h, std::int64_t out_w, T* x) {
  const std::int64_t cpg = spec.in_channels / spec.groups;
  const std::int64_t K = spec.kernel;
  for (std::int64_t ch = 0; ch < cpg; ++ch) {
    T* plane = x + ch * h * w;
    for (std::int64_t ky = 0; ky < K; ++ky) {
      for (std::int64_t kx = 0; kx < K; ++kx) {
        const T* crow = col + ((ch * K + ky) * K + kx) * out_h * out_w;
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          const std::int64_t iy = oy * spec.stride - spec.padding + ky * spec.dilation;
          if (iy < 0 || iy >= h) continue;
          const T* src = crow + oy * out_w;
          T* dst = plane + iy * w;
          for (std::int64_t ox = 0; ox < out_w; ++ox) {
            const std::int64_t ix = ox * spec.stride - spec.padding + kx * spec.dilation;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Reference path: the literal grouped, dilated cross-correlation sum. Kept
// as the in-repo oracle for the lowered path below; do not optimize.
template <typename T>
Tensor<T> conv2d_forward_direct(const Tensor<T>& x, const ConvSpec& spec,
                                const ConvParams<T>& params) {
  detail::check_conv_input(x, spec);
  detail::check_conv_params(spec, params);
  const std::int64_t out_h = spec.out_extent(x.h());
  const std::int64_t out_w = spec.out_extent(x.w());
  const std::int64_t cpg = spec.in_channels / spec.groups;
  const std::int64_t opg = spec.out_channels / spec.groups;
  Tensor<T> out(x.n(), spec.out_channels, out_h, out_w);
  for (std::int64_t i = 0; i < x.n(); ++i)
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      const std::int64_t g = oc / opg;
      for (std::int64_t oy = 0; oy < out_h; ++oy)
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          T acc = spec.has_bias ? params.bias[static_cast<std::size_t>(oc)] : T(0);
          for (std::int64_t ic = 0; ic < cpg; ++ic)
            for (std::int64_t ky = 0; ky < spec.kernel; ++ky)
              for (std::int64_t kx = 0; kx < spec.kernel; ++kx) {
                const std::int64_t iy = oy * spec.stride - spec.padding + ky * spec.dilation;
                const std::int64_t ix = ox * spec.stride - spec.padding + kx * spec.dilation;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += x.at(i, g * cpg + ic, iy, ix) * params.weights.at(oc, ic, ky, kx);
              }
          out.at(i, oc, oy, ox) = acc;
        }
    }
  return out;
}

// Production path: patch-matrix lowering (im2col) plus a dense GEMM per
// sample and group. Bit-deterministic for any thread count: samples are
// independent and write disjoint output slices.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvSpec& spec, const ConvParams<T>& params) {
  detail::check_conv_input(x, spec);
  detail::check_conv_params(spec, params);
  const std::int64_t out_h = spec.out_extent(x.h());
  const std::int64_t out_w = spec.out_extent(x.w());
  const std::int64_t cpg = spec.in_channels / spec.groups;
  const std::int64_t opg = spec.out_channels / spec.groups;
  const std::int64_t patch = cpg * spec.kernel * spec.kernel;
  const std::int64_t sites = out_h * out_w;
  Tensor<T> out(x.n(), spec.out_channels, out_h, out_w);

  parallel_for(0, x.n(), [&](std::int64_t i) {
    std::vector<T> col(static_cast<std::size_t>(patch * sites));
    for (std::int64_t g = 0; g < spec.groups; ++g) {
      const T* xg = x.data.data() + x.offset(i, g * cpg, 0, 0);
      detail::im2col(xg, x.h(), x.w(), spec, out_h, out_w, col.data());
      T* og = out.data.data() + out.offset(i, g * opg, 0, 0);
      detail::matmul_acc(params.weights.data.data() + g * opg * patch, col.data(), og, opg,
                         patch, sites);
    }
    if (spec.has_bias)
      for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
        T* plane = out.data.data() + out.offset(i, oc, 0, 0);
        const T b = params.bias[static_cast<std::size_t>(oc)];
        for (std::int64_t s = 0; s < sites; ++s) plane[s] += b;
      }
  });
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_weights;
  std::vector<T> grad_bias;
};

// Exact analytic gradients of conv2d_forward. Weight gradients accumulate
// over samples in fixed batch order.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvSpec& spec,
                             const ConvParams<T>& params, const Tensor<T>& grad_out) {
  detail::check_conv_input(x, spec);
  detail::check_conv_params(spec, params);
  const std::int64_t out_h = spec.out_extent(x.h());
  const std::int64_t out_w = spec.out_extent(x.w());
  if (grad_out.shape != Shape4{x.n(), spec.out_channels, out_h, out_w})
    throw ShapeError("grad_out is " + shape_str(grad_out.shape) + ", expected " +
                     shape_str({x.n(), spec.out_channels, out_h, out_w}));

  const std::int64_t cpg = spec.in_channels / spec.groups;
  const std::int64_t opg = spec.out_channels / spec.groups;
  const std::int64_t patch = cpg * spec.kernel * spec.kernel;
  const std::int64_t sites = out_h * out_w;

  ConvGrads<T> grads;
  grads.grad_x = Tensor<T>(x.shape);
  grads.grad_weights = Tensor<T>(spec.weight_shape());
  if (spec.has_bias) grads.grad_bias.assign(static_cast<std::size_t>(spec.out_channels), T(0));

  std::vector<T> col(static_cast<std::size_t>(patch * sites));
  std::vector<T> gcol(static_cast<std::size_t>(patch * sites));
  for (std::int64_t i = 0; i < x.n(); ++i) {
    for (std::int64_t g = 0; g < spec.groups; ++g) {
      const T* xg = x.data.data() + x.offset(i, g * cpg, 0, 0);
      const T* go = grad_out.data.data() + grad_out.offset(i, g * opg, 0, 0);
      const T* wg = params.weights.data.data() + g * opg * patch;

      // dW[oc, p] += sum_s go[oc, s] * col[p, s]
      detail::im2col(xg, x.h(), x.w(), spec, out_h, out_w, col.data());
      T* gw = grads.grad_weights.data.data() + g * opg * patch;
      for (std::int64_t oc = 0; oc < opg; ++oc) {
        const T* gorow = go + oc * sites;
        T* gwrow = gw + oc * patch;
        for (std::int64_t p = 0; p < patch; ++p) {
          const T* crow = col.data() + p * sites;
          T acc = T(0);
          for (std::int64_t s = 0; s < sites; ++s) acc += gorow[s] * crow[s];
          gwrow[p] += acc;
        }
      }

      // dcol[p, s] = sum_oc W[oc, p] * go[oc, s], then scatter back.
      std::fill(gcol.begin(), gcol.end(), T(0));
      for (std::int64_t oc = 0; oc < opg; ++oc) {
        const T* wrow = wg + oc * patch;
        const T* gorow = go + oc * sites;
        for (std::int64_t p = 0; p < patch; ++p) {
          const T wv = wrow[p];
          if (wv == T(0)) continue;
          T* grow = gcol.data() + p * sites;
          for (std::int64_t s = 0; s < sites; ++s) grow[s] += wv * gorow[s];
        }
      }
      detail::col2im_acc(gcol.data(), x.h(), x.w(), spec, out_h, out_w,
                         grads.grad_x.data.data() + grads.grad_x.offset(i, g * cpg, 0, 0));
    }
    if (spec.has_bias)
      for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
        const T* plane = grad_out.data.data() + grad_out.offset(i, oc, 0, 0);
        T acc = T(0);
        for (std::int64_t s = 0; s < sites; ++s) acc += plane[s];
        grads.grad_bias[static_cast<std::size_t>(oc)] += acc;
      }
  }
  return grads;
}

}  // namespace freconv

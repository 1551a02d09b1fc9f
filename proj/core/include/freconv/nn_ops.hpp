#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "freconv/tensor.hpp"

namespace freconv {

enum class Activation { kRelu, kSigmoid };

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Activation kind) {
  Tensor<T> out(x.shape);
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i)
      out.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
  }
  return out;
}

// For sigmoid, y must be the forward output; for relu, x the forward input.
template <typename T>
Tensor<T> activation_backward(const Tensor<T>& x, const Tensor<T>& y, Activation kind,
                              const Tensor<T>& grad_out) {
  Tensor<T> grad(x.shape);
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < x.size(); ++i)
      grad.data[i] = x.data[i] > T(0) ? grad_out.data[i] : T(0);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i)
      grad.data[i] = grad_out.data[i] * y.data[i] * (T(1) - y.data[i]);
  }
  return grad;
}

// Per-channel spatial mean; output [n, c, 1, 1].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.h() * x.w() < 1) throw ShapeError("global_avg_pool needs a non-empty spatial plane");
  Tensor<T> out(x.n(), x.c(), 1, 1);
  const std::int64_t plane = x.h() * x.w();
  for (std::int64_t i = 0; i < x.n(); ++i)
    for (std::int64_t j = 0; j < x.c(); ++j) {
      const T* p = x.data.data() + x.offset(i, j, 0, 0);
      T acc = T(0);
      for (std::int64_t s = 0; s < plane; ++s) acc += p[s];
      out.at(i, j, 0, 0) = acc / static_cast<T>(plane);
    }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape4& x_shape, const Tensor<T>& grad_out) {
  Tensor<T> grad(x_shape);
  const std::int64_t plane = x_shape[2] * x_shape[3];
  const T inv = T(1) / static_cast<T>(plane);
  for (std::int64_t i = 0; i < x_shape[0]; ++i)
    for (std::int64_t j = 0; j < x_shape[1]; ++j) {
      const T g = grad_out.at(i, j, 0, 0) * inv;
      T* p = grad.data.data() + grad.offset(i, j, 0, 0);
      for (std::int64_t s = 0; s < plane; ++s) p[s] = g;
    }
  return grad;
}

// ---------------------------------------------------------------------------
// Batch normalization

struct BnConsts {
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
};

template <typename T>
struct BnParams {
  std::vector<T> gamma;  // scale, length c
  std::vector<T> beta;   // shift, length c

  static BnParams identity(std::int64_t channels) {
    BnParams p;
    p.gamma.assign(static_cast<std::size_t>(channels), T(1));
    p.beta.assign(static_cast<std::size_t>(channels), T(0));
    return p;
  }
};

// Caller-owned running statistics; the one documented mutation in the op set.
template <typename T>
struct BnStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  static BnStats fresh(std::int64_t channels) {
    BnStats s;
    s.running_mean.assign(static_cast<std::size_t>(channels), T(0));
    s.running_var.assign(static_cast<std::size_t>(channels), T(1));
    return s;
  }
};

enum class Mode { kTrain, kEval };

// Cache of batch statistics needed by the backward pass.
template <typename T>
struct BnCache {
  std::vector<T> mean;
  std::vector<T> inv_std;
  Tensor<T> x_hat;
};

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const BnParams<T>& params, BnStats<T>& stats,
                            Mode mode, BnCache<T>* cache = nullptr) {
  const std::int64_t c = x.c();
  if (params.gamma.size() != static_cast<std::size_t>(c) ||
      params.beta.size() != static_cast<std::size_t>(c))
    throw ShapeError("batchnorm affine params do not match channel count");
  if (stats.running_mean.size() != static_cast<std::size_t>(c))
    throw ShapeError("batchnorm running stats do not match channel count");

  const std::int64_t plane = x.h() * x.w();
  const std::int64_t count = x.n() * plane;
  if (count < 1) throw ShapeError("batchnorm needs at least one element per channel");

  Tensor<T> out(x.shape);
  std::vector<T> mean(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));

  if (mode == Mode::kTrain) {
    for (std::int64_t j = 0; j < c; ++j) {
      T m = T(0);
      for (std::int64_t i = 0; i < x.n(); ++i) {
        const T* p = x.data.data() + x.offset(i, j, 0, 0);
        for (std::int64_t s = 0; s < plane; ++s) m += p[s];
      }
      m /= static_cast<T>(count);
      T v = T(0);
      for (std::int64_t i = 0; i < x.n(); ++i) {
        const T* p = x.data.data() + x.offset(i, j, 0, 0);
        for (std::int64_t s = 0; s < plane; ++s) {
          const T d = p[s] - m;
          v += d * d;
        }
      }
      v /= static_cast<T>(count);  // biased variance, floor applied via eps
      mean[static_cast<std::size_t>(j)] = m;
      var[static_cast<std::size_t>(j)] = v;
      const T mom = static_cast<T>(BnConsts::kMomentum);
      stats.running_mean[static_cast<std::size_t>(j)] =
          (T(1) - mom) * stats.running_mean[static_cast<std::size_t>(j)] + mom * m;
      stats.running_var[static_cast<std::size_t>(j)] =
          (T(1) - mom) * stats.running_var[static_cast<std::size_t>(j)] + mom * v;
    }
  } else {
    mean = stats.running_mean;
    var = stats.running_var;
  }

  if (cache) {
    cache->mean = mean;
    cache->inv_std.assign(static_cast<std::size_t>(c), T(0));
    cache->x_hat = Tensor<T>(x.shape);
  }
  for (std::int64_t j = 0; j < c; ++j) {
    const T m = mean[static_cast<std::size_t>(j)];
    const T inv_std = T(1) / std::sqrt(var[static_cast<std::size_t>(j)] +
                                       static_cast<T>(BnConsts::kEps));
    if (cache) cache->inv_std[static_cast<std::size_t>(j)] = inv_std;
    const T g = params.gamma[static_cast<std::size_t>(j)];
    const T b = params.beta[static_cast<std::size_t>(j)];
    for (std::int64_t i = 0; i < x.n(); ++i) {
      const T* p = x.data.data() + x.offset(i, j, 0, 0);
      T* q = out.data.data() + out.offset(i, j, 0, 0);
      T* xh = cache ? cache->x_hat.data.data() + cache->x_hat.offset(i, j, 0, 0) : nullptr;
      for (std::int64_t s = 0; s < plane; ++s) {
        const T hat = (p[s] - m) * inv_std;
        if (xh) xh[s] = hat;
        q[s] = g * hat + b;
      }
    }
  }
  return out;
}

template <typename T>
struct BnGrads {
  Tensor<T> grad_x;
  std::vector<T> grad_gamma;
  std::vector<T> grad_beta;
};

// Backward through train-mode normalization (batch statistics participate).
template <typename T>
BnGrads<T> batchnorm_backward(const Tensor<T>& x, const BnParams<T>& params,
                              const BnCache<T>& cache, const Tensor<T>& grad_out) {
  const std::int64_t c = x.c();
  const std::int64_t plane = x.h() * x.w();
  const std::int64_t count = x.n() * plane;
  BnGrads<T> g;
  g.grad_x = Tensor<T>(x.shape);
  g.grad_gamma.assign(static_cast<std::size_t>(c), T(0));
  g.grad_beta.assign(static_cast<std::size_t>(c), T(0));

  for (std::int64_t j = 0; j < c; ++j) {
    T sum_gy = T(0), sum_gy_xhat = T(0);
    for (std::int64_t i = 0; i < x.n(); ++i) {
      const T* go = grad_out.data.data() + grad_out.offset(i, j, 0, 0);
      const T* xh = cache.x_hat.data.data() + cache.x_hat.offset(i, j, 0, 0);
      for (std::int64_t s = 0; s < plane; ++s) {
        sum_gy += go[s];
        sum_gy_xhat += go[s] * xh[s];
      }
    }
    g.grad_beta[static_cast<std::size_t>(j)] = sum_gy;
    g.grad_gamma[static_cast<std::size_t>(j)] = sum_gy_xhat;

    const T gamma = params.gamma[static_cast<std::size_t>(j)];
    const T inv_std = cache.inv_std[static_cast<std::size_t>(j)];
    const T inv_count = T(1) / static_cast<T>(count);
    for (std::int64_t i = 0; i < x.n(); ++i) {
      const T* go = grad_out.data.data() + grad_out.offset(i, j, 0, 0);
      const T* xh = cache.x_hat.data.data() + cache.x_hat.offset(i, j, 0, 0);
      T* gx = g.grad_x.data.data() + g.grad_x.offset(i, j, 0, 0);
      for (std::int64_t s = 0; s < plane; ++s)
        gx[s] = gamma * inv_std *
                (go[s] - inv_count * sum_gy - xh[s] * inv_count * sum_gy_xhat);
    }
  }
  return g;
}

// Backward through eval-mode normalization (running stats are constants).
template <typename T>
Tensor<T> batchnorm_backward_eval(const BnParams<T>& params, const BnStats<T>& stats,
                                  const Tensor<T>& grad_out) {
  Tensor<T> grad(grad_out.shape);
  const std::int64_t plane = grad_out.h() * grad_out.w();
  for (std::int64_t j = 0; j < grad_out.c(); ++j) {
    const T scale = params.gamma[static_cast<std::size_t>(j)] /
                    std::sqrt(stats.running_var[static_cast<std::size_t>(j)] +
                              static_cast<T>(BnConsts::kEps));
    for (std::int64_t i = 0; i < grad_out.n(); ++i) {
      const T* go = grad_out.data.data() + grad_out.offset(i, j, 0, 0);
      T* gx = grad.data.data() + grad.offset(i, j, 0, 0);
      for (std::int64_t s = 0; s < plane; ++s) gx[s] = scale * go[s];
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Spatial pooling (host-network plumbing)

struct PoolSpec {
  enum class Kind { kMax, kAvg } kind = Kind::kMax;
  std::int64_t kernel = 2;
  std::int64_t stride = 2;
  std::int64_t padding = 0;

  std::int64_t out_extent(std::int64_t in_extent) const {
    return (in_extent + 2 * padding - kernel) / stride + 1;
  }

  bool operator==(const PoolSpec&) const = default;
};

template <typename T>
Tensor<T> pool_forward(const Tensor<T>& x, const PoolSpec& spec,
                       std::vector<std::int64_t>* argmax = nullptr) {
  const std::int64_t out_h = spec.out_extent(x.h());
  const std::int64_t out_w = spec.out_extent(x.w());
  if (out_h < 1 || out_w < 1) throw ShapeError("pool output extent non-positive");
  Tensor<T> out(x.n(), x.c(), out_h, out_w);
  if (argmax) argmax->assign(out.size(), -1);
  std::size_t oi = 0;
  for (std::int64_t i = 0; i < x.n(); ++i)
    for (std::int64_t j = 0; j < x.c(); ++j)
      for (std::int64_t oy = 0; oy < out_h; ++oy)
        for (std::int64_t ox = 0; ox < out_w; ++ox, ++oi) {
          if (spec.kind == PoolSpec::Kind::kMax) {
            T best = -std::numeric_limits<T>::infinity();
            std::int64_t best_idx = -1;
            for (std::int64_t ky = 0; ky < spec.kernel; ++ky)
              for (std::int64_t kx = 0; kx < spec.kernel; ++kx) {
                const std::int64_t iy = oy * spec.stride - spec.padding + ky;
                const std::int64_t ix = ox * spec.stride - spec.padding + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                const T v = x.at(i, j, iy, ix);
                if (v > best) {  // first max wins on ties
                  best = v;
                  best_idx = static_cast<std::int64_t>(x.offset(i, j, iy, ix));
                }
              }
            out.data[oi] = best;
            if (argmax) (*argmax)[oi] = best_idx;
          } else {
            T acc = T(0);
            for (std::int64_t ky = 0; ky < spec.kernel; ++ky)
              for (std::int64_t kx = 0; kx < spec.kernel; ++kx) {
                const std::int64_t iy = oy * spec.stride - spec.padding + ky;
                const std::int64_t ix = ox * spec.stride - spec.padding + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += x.at(i, j, iy, ix);
              }
            out.data[oi] = acc / static_cast<T>(spec.kernel * spec.kernel);
          }
        }
  return out;
}

template <typename T>
Tensor<T> pool_backward(const Tensor<T>& x, const PoolSpec& spec, const Tensor<T>& grad_out,
                        const std::vector<std::int64_t>& argmax) {
  Tensor<T> grad(x.shape);
  if (spec.kind == PoolSpec::Kind::kMax) {
    for (std::size_t oi = 0; oi < grad_out.size(); ++oi)
      if (argmax[oi] >= 0) grad.data[static_cast<std::size_t>(argmax[oi])] += grad_out.data[oi];
    return grad;
  }
  const std::int64_t out_h = grad_out.h(), out_w = grad_out.w();
  const T inv = T(1) / static_cast<T>(spec.kernel * spec.kernel);
  for (std::int64_t i = 0; i < x.n(); ++i)
    for (std::int64_t j = 0; j < x.c(); ++j)
      for (std::int64_t oy = 0; oy < out_h; ++oy)
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const T g = grad_out.at(i, j, oy, ox) * inv;
          for (std::int64_t ky = 0; ky < spec.kernel; ++ky)
            for (std::int64_t kx = 0; kx < spec.kernel; ++kx) {
              const std::int64_t iy = oy * spec.stride - spec.padding + ky;
              const std::int64_t ix = ox * spec.stride - spec.padding + kx;
              if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
              grad.at(i, j, iy, ix) += g;
            }
        }
  return grad;
}

// ---------------------------------------------------------------------------
// Linear head and softmax cross-entropy

template <typename T>
struct LinearParams {
  Tensor<T> weights;  // [classes, features, 1, 1]
  std::vector<T> bias;

  static LinearParams zeros(std::int64_t features, std::int64_t classes) {
    LinearParams p;
    p.weights = Tensor<T>(classes, features, 1, 1);
    p.bias.assign(static_cast<std::size_t>(classes), T(0));
    return p;
  }
};

// x is flattened per sample to c*h*w features; logits come back as [n, classes, 1, 1].
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const LinearParams<T>& params) {
  const std::int64_t features = x.c() * x.h() * x.w();
  const std::int64_t classes = params.weights.n();
  if (params.weights.c() != features)
    throw ShapeError("linear expects " + std::to_string(params.weights.c()) +
                     " features, input flattens to " + std::to_string(features));
  Tensor<T> out(x.n(), classes, 1, 1);
  for (std::int64_t i = 0; i < x.n(); ++i) {
    const T* xi = x.data.data() + static_cast<std::size_t>(i * features);
    for (std::int64_t k = 0; k < classes; ++k) {
      const T* wk = params.weights.data.data() + static_cast<std::size_t>(k * features);
      T acc = params.bias[static_cast<std::size_t>(k)];
      for (std::int64_t f = 0; f < features; ++f) acc += wk[f] * xi[f];
      out.at(i, k, 0, 0) = acc;
    }
  }
  return out;
}

template <typename T>
struct LinearGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_weights;
  std::vector<T> grad_bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const LinearParams<T>& params,
                               const Tensor<T>& grad_out) {
  const std::int64_t features = x.c() * x.h() * x.w();
  const std::int64_t classes = params.weights.n();
  LinearGrads<T> g;
  g.grad_x = Tensor<T>(x.shape);
  g.grad_weights = Tensor<T>(params.weights.shape);
  g.grad_bias.assign(static_cast<std::size_t>(classes), T(0));
  for (std::int64_t i = 0; i < x.n(); ++i) {
    const T* xi = x.data.data() + static_cast<std::size_t>(i * features);
    T* gxi = g.grad_x.data.data() + static_cast<std::size_t>(i * features);
    for (std::int64_t k = 0; k < classes; ++k) {
      const T go = grad_out.at(i, k, 0, 0);
      const T* wk = params.weights.data.data() + static_cast<std::size_t>(k * features);
      T* gwk = g.grad_weights.data.data() + static_cast<std::size_t>(k * features);
      g.grad_bias[static_cast<std::size_t>(k)] += go;
      for (std::int64_t f = 0; f < features; ++f) {
        gxi[f] += go * wk[f];
        gwk[f] += go * xi[f];
      }
    }
  }
  return g;
}

// Mean softmax cross-entropy over the batch. grad_logits is d(loss)/d(logits).
template <typename T>
T cross_entropy(const Tensor<T>& logits, const std::vector<std::int64_t>& labels,
                Tensor<T>* grad_logits = nullptr) {
  const std::int64_t n = logits.n();
  const std::int64_t classes = logits.c();
  if (labels.size() != static_cast<std::size_t>(n))
    throw ShapeError("label count does not match batch size");
  if (grad_logits) *grad_logits = Tensor<T>(logits.shape);
  T loss = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes)
      throw ParamError("label " + std::to_string(y) + " out of range [0," +
                       std::to_string(classes) + ")");
    const T* row = logits.data.data() + static_cast<std::size_t>(i * classes);
    T mx = row[0];
    for (std::int64_t k = 1; k < classes; ++k) mx = std::max(mx, row[k]);
    T denom = T(0);
    for (std::int64_t k = 0; k < classes; ++k) denom += std::exp(row[k] - mx);
    loss += -(row[y] - mx - std::log(denom));
    if (grad_logits) {
      T* grow = grad_logits->data.data() + static_cast<std::size_t>(i * classes);
      for (std::int64_t k = 0; k < classes; ++k) {
        const T p = std::exp(row[k] - mx) / denom;
        grow[k] = (p - (k == y ? T(1) : T(0))) / static_cast<T>(n);
      }
    }
  }
  return loss / static_cast<T>(n);
}

}  // namespace freconv

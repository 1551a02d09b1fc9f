#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "freconv/conv.hpp"
#include "freconv/doe.hpp"
#include "freconv/nn_ops.hpp"
#include "freconv/rng.hpp"
#include "freconv/tensor.hpp"

namespace freconv {

enum class KernelMode { kDck, kGck };
enum class SplitMode { kAttention, kDirect };
enum class BranchMode { kAsymmetric, kSame };

// All FreConv hyperparameters. Sub-convolution specs are derived, never
// stored, so every parameter shape follows from the config alone.
struct FreConvConfig {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t stride = 1;
  std::int64_t n_split = 2;                  // N
  std::vector<std::int64_t> kernel_set;      // per-stage odd kernels, ascending
  KernelMode mode = KernelMode::kGck;
  std::int64_t base_group = 2;               // g1; grouping of the 3x3-equivalent base
  std::int64_t attn_reduction = 16;
  SplitMode split_mode = SplitMode::kAttention;
  BranchMode branch_mode = BranchMode::kAsymmetric;

  std::int64_t branch_channels() const { return in_channels / n_split; }

  bool operator==(const FreConvConfig&) const = default;

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0)
      throw ConfigError("freconv channels must be positive");
    if (stride < 1) throw ConfigError("freconv stride must be >= 1");
    if (n_split != 2 && n_split != 4 && n_split != 8 && n_split != 16)
      throw ConfigError("split count N must be in {2,4,8,16}");
    if (n_split >= in_channels)
      throw ConfigError("degenerate split: N=" + std::to_string(n_split) +
                        " >= in_channels=" + std::to_string(in_channels));
    if (in_channels % n_split != 0)
      throw ConfigError("in_channels " + std::to_string(in_channels) +
                        " not divisible by N=" + std::to_string(n_split));
    if (attn_reduction < 1 || branch_channels() % attn_reduction != 0)
      throw ConfigError("attention reduction " + std::to_string(attn_reduction) +
                        " must divide branch channels " + std::to_string(branch_channels()));
    if (base_group != 2 && base_group != 4 && base_group != 8 && base_group != 16)
      throw ConfigError("base group g1 must be in {2,4,8,16}");
    if (branch_mode == BranchMode::kAsymmetric) {
      if (kernel_set.empty()) throw ConfigError("kernel set must be non-empty");
      for (std::size_t i = 0; i < kernel_set.size(); ++i) {
        const std::int64_t k = kernel_set[i];
        if (k < 3 || k > 9 || k % 2 == 0)
          throw ConfigError("kernel set entries must be odd in [3,9]");
        if (i > 0 && kernel_set[i - 1] >= k)
          throw ConfigError("kernel set must be strictly ascending");
      }
      if (out_channels < static_cast<std::int64_t>(kernel_set.size()))
        throw ConfigError("out_channels smaller than kernel set size");
    }
    // Force sub-conv spec construction so unsatisfiable groupings fail here.
    (void)derived_convs();
  }

  // Output channels per multi-scale sub-conv: equal split, remainder to the
  // smallest kernel. Each larger-kernel share is then rounded down to a
  // multiple of its group (the ideal g2 in GCK mode, g1 in DCK mode) so the
  // grouping never has to degrade; rounded-off channels also flow to the
  // smallest kernel.
  std::vector<std::int64_t> kernel_out_alloc() const {
    const auto m = static_cast<std::int64_t>(kernel_set.size());
    std::vector<std::int64_t> alloc(kernel_set.size(), out_channels / m);
    alloc[0] += out_channels % m;
    std::int64_t leftover = 0;
    for (std::size_t i = 1; i < kernel_set.size(); ++i) {
      const std::int64_t group =
          mode == KernelMode::kGck ? resolve_gck(kernel_set[i], base_group) : base_group;
      if (alloc[i] >= group) {
        const std::int64_t rounded = (alloc[i] / group) * group;
        leftover += alloc[i] - rounded;
        alloc[i] = rounded;
      }
    }
    alloc[0] += leftover;
    return alloc;
  }

  struct Derived {
    std::vector<ConvSpec> multiscale;  // one per kernel_set entry
    ConvSpec hfe_pointwise;            // subtrahend, branch -> out
    ConvSpec lfe;                      // pointwise, branch -> out
    ConvSpec attn_reduce;              // C -> C/r, 1x1, bias
    ConvSpec attn_expand;              // C/r -> C, 1x1, bias
    ConvSpec same_branch;              // 3x3 grouped-2, branch -> out
  };

  Derived derived_convs() const {
    Derived d;
    const std::int64_t cb = branch_channels();
    if (branch_mode == BranchMode::kAsymmetric) {
      const auto alloc = kernel_out_alloc();
      for (std::size_t i = 0; i < kernel_set.size(); ++i) {
        const std::int64_t k = kernel_set[i];
        ConvSpec s;
        s.in_channels = cb;
        s.out_channels = alloc[i];
        s.stride = stride;
        if (mode == KernelMode::kDck) {
          s.kernel = 3;
          s.dilation = resolve_dck(k);
          std::int64_t g = base_group;
          while (g > 1 && (cb % g != 0 || alloc[i] % g != 0)) g /= 2;
          if (g < 2)
            throw ConfigError("base group " + std::to_string(base_group) +
                              " has no divisor of channels " + std::to_string(cb) + "->" +
                              std::to_string(alloc[i]));
          s.groups = g;
        } else {
          s.kernel = k;
          s.dilation = 1;
          s.groups = resolve_gck_for_channels(k, base_group, cb, alloc[i]);
        }
        s.padding = s.same_padding();
        d.multiscale.push_back(s);
      }
      d.hfe_pointwise = ConvSpec{cb, out_channels, 1, stride, 0, 1, 1, false};
      d.lfe = ConvSpec{cb, out_channels, 1, stride, 0, 1, 1, false};
    } else {
      ConvSpec s{cb, out_channels, 3, stride, 1, 1, 2, false};
      if (cb % 2 != 0 || out_channels % 2 != 0)
        throw ConfigError("same-branch mode needs channel counts divisible by 2");
      d.same_branch = s;
    }
    if (split_mode == SplitMode::kAttention) {
      const std::int64_t bottleneck = in_channels / attn_reduction > 0
                                          ? in_channels / attn_reduction
                                          : 1;
      d.attn_reduce = ConvSpec{in_channels, bottleneck, 1, 1, 0, 1, 1, true};
      d.attn_expand = ConvSpec{bottleneck, in_channels, 1, 1, 0, 1, 1, true};
    }
    return d;
  }
};

template <typename T>
struct FreConvParams {
  // Attention sub-network, one reduce/expand pair per branch weighting.
  ConvParams<T> attn_a1, attn_a2;  // alpha (top / low-frequency) path
  ConvParams<T> attn_b1, attn_b2;  // beta (bottom / high-frequency) path
  // High-frequency branch: multi-scale convs minus a pointwise subtrahend.
  std::vector<ConvParams<T>> multiscale;
  ConvParams<T> hfe_pointwise;
  // Low-frequency branch.
  ConvParams<T> lfe;
  // Same-branch ablation convs.
  ConvParams<T> same_hfe, same_lfe;
  // One batch norm per branch output.
  BnParams<T> bn_hfe, bn_lfe;
};

template <typename T>
struct FreConvState {
  BnStats<T> bn_hfe, bn_lfe;

  static FreConvState fresh(const FreConvConfig& cfg) {
    return FreConvState{BnStats<T>::fresh(cfg.out_channels), BnStats<T>::fresh(cfg.out_channels)};
  }
};

namespace detail {

template <typename T>
void he_normal_fill(Rng& rng, Tensor<T>& w, std::int64_t fan_in) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
void small_normal_fill(Rng& rng, Tensor<T>& w, double stddev = 0.01) {
  for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, stddev));
}

}  // namespace detail

// Places the Difference-of-Exponential taps on the diagonal channel map of
// one realized multi-scale sub-conv: output channel j reads input channel
// (j mod channels-per-group) within its group. The taps are rescaled so
// every sub-conv's zero-DC composite filter has the same norm (1/sqrt of
// fan-in); without this the widest kernel's filter energy swamps the bank.
// Off-diagonal weights get symmetry-breaking noise at 1% of the tap scale.
// `k_logical` is the kernel-set entry; for a dilated realization the wide
// exponential is evaluated at the dilated tap offsets.
template <typename T>
void doe_init_subconv(Rng& rng, const ConvSpec& spec, std::int64_t k_logical,
                      ConvParams<T>& params) {
  const DoEInit init = DoEInit::for_kernel(k_logical);
  DoEInit realized = init;
  realized.kernel = spec.kernel;
  const std::vector<double> wide = doe_wide_taps(realized, spec.dilation);
  const std::int64_t cpg = spec.in_channels / spec.groups;
  const std::int64_t fan_in = cpg * spec.kernel * spec.kernel;

  const double sum = doe_zero_dc_subtrahend(wide);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < wide.size(); ++i) {
    const double composite = wide[i] - (i == wide.size() / 2 ? sum : 0.0);
    norm2 += composite * composite;
  }
  const double scale = 1.0 / (std::sqrt(norm2) * std::sqrt(static_cast<double>(fan_in)));

  detail::small_normal_fill(rng, params.weights, 0.01 * alpha_coeff(init.sigma0) * scale);
  for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
    const std::int64_t ic = oc % cpg;
    for (std::int64_t ky = 0; ky < spec.kernel; ++ky)
      for (std::int64_t kx = 0; kx < spec.kernel; ++kx)
        params.weights.at(oc, ic, ky, kx) =
            static_cast<T>(wide[static_cast<std::size_t>(ky * spec.kernel + kx)] * scale);
  }
}

// Zero-DC normalization: the pointwise subtrahend weight for every
// (out, in) channel pair is set to the tap sum of the realized multi-scale
// weights for that pair, so the composite high-frequency filter has exactly
// zero response to spatially constant input.
template <typename T>
void doe_init_pointwise_subtrahend(const FreConvConfig& cfg,
                                   const std::vector<ConvParams<T>>& multiscale,
                                   ConvParams<T>& pointwise) {
  const auto derived = cfg.derived_convs();
  const std::int64_t cb = cfg.branch_channels();
  std::int64_t oc_base = 0;
  for (std::size_t k = 0; k < derived.multiscale.size(); ++k) {
    const ConvSpec& spec = derived.multiscale[k];
    const std::int64_t cpg = spec.in_channels / spec.groups;
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      const std::int64_t group = oc / (spec.out_channels / spec.groups);
      for (std::int64_t ic = 0; ic < cb; ++ic) {
        T sum = T(0);
        const std::int64_t ic_local = ic - group * cpg;
        if (ic_local >= 0 && ic_local < cpg)
          for (std::int64_t ky = 0; ky < spec.kernel; ++ky)
            for (std::int64_t kx = 0; kx < spec.kernel; ++kx)
              sum += multiscale[k].weights.at(oc, ic_local, ky, kx);
        pointwise.weights.at(oc_base + oc, ic, 0, 0) = sum;
      }
    }
    oc_base += spec.out_channels;
  }
}

template <typename T>
FreConvParams<T> init_freconv_params(const FreConvConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto d = cfg.derived_convs();
  FreConvParams<T> p;
  if (cfg.split_mode == SplitMode::kAttention) {
    p.attn_a1 = ConvParams<T>::zeros(d.attn_reduce);
    p.attn_a2 = ConvParams<T>::zeros(d.attn_expand);
    p.attn_b1 = ConvParams<T>::zeros(d.attn_reduce);
    p.attn_b2 = ConvParams<T>::zeros(d.attn_expand);
    // Small weights, zero biases: alpha and beta start near 0.5.
    detail::small_normal_fill(rng, p.attn_a1.weights);
    detail::small_normal_fill(rng, p.attn_a2.weights);
    detail::small_normal_fill(rng, p.attn_b1.weights);
    detail::small_normal_fill(rng, p.attn_b2.weights);
  }
  if (cfg.branch_mode == BranchMode::kAsymmetric) {
    for (std::size_t i = 0; i < d.multiscale.size(); ++i) {
      ConvParams<T> cp = ConvParams<T>::zeros(d.multiscale[i]);
      doe_init_subconv(rng, d.multiscale[i], cfg.kernel_set[i], cp);
      p.multiscale.push_back(std::move(cp));
    }
    p.hfe_pointwise = ConvParams<T>::zeros(d.hfe_pointwise);
    doe_init_pointwise_subtrahend(cfg, p.multiscale, p.hfe_pointwise);
    p.lfe = ConvParams<T>::zeros(d.lfe);
    detail::he_normal_fill(rng, p.lfe.weights, cfg.branch_channels());
  } else {
    // Both branches start from identical weights: one draw, two copies.
    p.same_hfe = ConvParams<T>::zeros(d.same_branch);
    detail::he_normal_fill(rng, p.same_hfe.weights,
                           d.same_branch.in_channels / d.same_branch.groups * 9);
    p.same_lfe = p.same_hfe;
  }
  p.bn_hfe = BnParams<T>::identity(cfg.out_channels);
  p.bn_lfe = BnParams<T>::identity(cfg.out_channels);
  return p;
}

// ---------------------------------------------------------------------------
// Forward

template <typename T>
struct SplitCache {
  Tensor<T> x;
  Tensor<T> s;                       // channel statistics (gap)
  Tensor<T> a1, r1, alpha;           // alpha path: conv, relu, sigmoid(conv)
  Tensor<T> b1, rb1, beta;
};

// Sums the N contiguous channel chunks of a weighted feature map.
template <typename T>
Tensor<T> chunk_sum(const Tensor<T>& x, std::int64_t n_split, const T* channel_scale) {
  const std::int64_t cb = x.c() / n_split;
  Tensor<T> out(x.n(), cb, x.h(), x.w());
  const std::int64_t plane = x.h() * x.w();
  for (std::int64_t i = 0; i < x.n(); ++i)
    for (std::int64_t c = 0; c < x.c(); ++c) {
      const T scale = channel_scale ? channel_scale[i * x.c() + c] : T(1);
      const T* src = x.data.data() + x.offset(i, c, 0, 0);
      T* dst = out.data.data() + out.offset(i, c % cb, 0, 0);
      for (std::int64_t s = 0; s < plane; ++s) dst[s] += scale * src[s];
    }
  return out;
}

// Attention-based (or direct) feature split. Both outputs have C/N channels
// and unchanged spatial extents.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> feature_split(const Tensor<T>& x, const FreConvConfig& cfg,
                                              const FreConvParams<T>& params,
                                              SplitCache<T>* cache = nullptr) {
  if (x.c() != cfg.in_channels)
    throw ShapeError("feature_split input has " + std::to_string(x.c()) +
                     " channels, config expects " + std::to_string(cfg.in_channels));
  if (cfg.split_mode == SplitMode::kDirect) {
    Tensor<T> top = chunk_sum(x, cfg.n_split, static_cast<const T*>(nullptr));
    Tensor<T> bottom = top;
    if (cache) cache->x = x;
    return {std::move(top), std::move(bottom)};
  }
  const auto d = cfg.derived_convs();
  Tensor<T> s = global_avg_pool(x);
  Tensor<T> a1 = conv2d_forward(s, d.attn_reduce, params.attn_a1);
  Tensor<T> r1 = activation_forward(a1, Activation::kRelu);
  Tensor<T> alpha = activation_forward(conv2d_forward(r1, d.attn_expand, params.attn_a2),
                                       Activation::kSigmoid);
  Tensor<T> b1 = conv2d_forward(s, d.attn_reduce, params.attn_b1);
  Tensor<T> rb1 = activation_forward(b1, Activation::kRelu);
  Tensor<T> beta = activation_forward(conv2d_forward(rb1, d.attn_expand, params.attn_b2),
                                      Activation::kSigmoid);

  Tensor<T> top = chunk_sum(x, cfg.n_split, alpha.data.data());
  Tensor<T> bottom = chunk_sum(x, cfg.n_split, beta.data.data());
  if (cache) {
    cache->x = x;
    cache->s = std::move(s);
    cache->a1 = std::move(a1);
    cache->r1 = std::move(r1);
    cache->alpha = std::move(alpha);
    cache->b1 = std::move(b1);
    cache->rb1 = std::move(rb1);
    cache->beta = std::move(beta);
  }
  return {std::move(top), std::move(bottom)};
}

// High-frequency branch, pre-norm: multi-scale convolution (channel concat
// of the per-kernel outputs) minus the pointwise subtrahend.
template <typename T>
Tensor<T> hfe_forward(const Tensor<T>& x_bottom, const FreConvConfig& cfg,
                      const FreConvParams<T>& params,
                      std::vector<Tensor<T>>* ms_out = nullptr) {
  const auto d = cfg.derived_convs();
  Tensor<T> concat(x_bottom.n(), cfg.out_channels, d.multiscale[0].out_extent(x_bottom.h()),
                   d.multiscale[0].out_extent(x_bottom.w()));
  std::int64_t oc_base = 0;
  for (std::size_t k = 0; k < d.multiscale.size(); ++k) {
    Tensor<T> o = conv2d_forward(x_bottom, d.multiscale[k], params.multiscale[k]);
    const std::int64_t plane = o.h() * o.w();
    for (std::int64_t i = 0; i < o.n(); ++i)
      for (std::int64_t c = 0; c < o.c(); ++c)
        std::copy_n(o.data.data() + o.offset(i, c, 0, 0), plane,
                    concat.data.data() + concat.offset(i, oc_base + c, 0, 0));
    oc_base += o.c();
    if (ms_out) ms_out->push_back(std::move(o));
  }
  Tensor<T> pw = conv2d_forward(x_bottom, d.hfe_pointwise, params.hfe_pointwise);
  return elementwise_sub(concat, pw);
}

// Low-frequency branch, pre-norm: a single pointwise convolution.
template <typename T>
Tensor<T> lfe_forward(const Tensor<T>& x_top, const FreConvConfig& cfg,
                      const FreConvParams<T>& params) {
  return conv2d_forward(x_top, cfg.derived_convs().lfe, params.lfe);
}

template <typename T>
struct FreConvCache {
  SplitCache<T> split;
  Tensor<T> x_top, x_bottom;
  Tensor<T> hfe_raw, lfe_raw;
  BnCache<T> bn_hfe, bn_lfe;
  Mode mode = Mode::kEval;
};

template <typename T>
Tensor<T> freconv_forward(const Tensor<T>& x, const FreConvConfig& cfg,
                          const FreConvParams<T>& params, FreConvState<T>& state, Mode mode,
                          FreConvCache<T>* cache = nullptr) {
  auto [top, bottom] = feature_split(x, cfg, params, cache ? &cache->split : nullptr);
  const auto d = cfg.derived_convs();
  Tensor<T> hfe_raw, lfe_raw;
  if (cfg.branch_mode == BranchMode::kAsymmetric) {
    hfe_raw = hfe_forward(bottom, cfg, params);
    lfe_raw = lfe_forward(top, cfg, params);
  } else {
    hfe_raw = conv2d_forward(bottom, d.same_branch, params.same_hfe);
    lfe_raw = conv2d_forward(top, d.same_branch, params.same_lfe);
  }
  Tensor<T> hfe_bn = batchnorm_forward(hfe_raw, params.bn_hfe, state.bn_hfe, mode,
                                       cache ? &cache->bn_hfe : nullptr);
  Tensor<T> lfe_bn = batchnorm_forward(lfe_raw, params.bn_lfe, state.bn_lfe, mode,
                                       cache ? &cache->bn_lfe : nullptr);
  if (cache) {
    cache->x_top = std::move(top);
    cache->x_bottom = std::move(bottom);
    cache->hfe_raw = std::move(hfe_raw);
    cache->lfe_raw = std::move(lfe_raw);
    cache->mode = mode;
  }
  return elementwise_add(hfe_bn, lfe_bn);
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
struct FreConvGrads {
  Tensor<T> grad_x;
  FreConvParams<T> params;  // same layout as the parameters, holding gradients
};

namespace detail {

// Backward of the weighted chunk sum: distributes branch gradients back to
// the full-channel tensor and, in attention mode, to the channel weights.
template <typename T>
void chunk_sum_backward(const Tensor<T>& x, std::int64_t n_split, const T* channel_scale,
                        const Tensor<T>& grad_sum, Tensor<T>& grad_x_acc,
                        Tensor<T>* grad_scale) {
  const std::int64_t cb = x.c() / n_split;
  const std::int64_t plane = x.h() * x.w();
  for (std::int64_t i = 0; i < x.n(); ++i)
    for (std::int64_t c = 0; c < x.c(); ++c) {
      const T scale = channel_scale ? channel_scale[i * x.c() + c] : T(1);
      const T* gs = grad_sum.data.data() + grad_sum.offset(i, c % cb, 0, 0);
      const T* xs = x.data.data() + x.offset(i, c, 0, 0);
      T* gx = grad_x_acc.data.data() + grad_x_acc.offset(i, c, 0, 0);
      T gscale = T(0);
      for (std::int64_t s = 0; s < plane; ++s) {
        gx[s] += scale * gs[s];
        gscale += xs[s] * gs[s];
      }
      if (grad_scale) grad_scale->at(i, c, 0, 0) += gscale;
    }
}

template <typename T>
void add_bias_grads(std::vector<T>& acc, const std::vector<T>& g) {
  if (acc.empty()) acc.assign(g.size(), T(0));
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

}  // namespace detail

template <typename T>
FreConvGrads<T> freconv_backward(const FreConvConfig& cfg, const FreConvParams<T>& params,
                                 const FreConvState<T>& state, const FreConvCache<T>& cache,
                                 const Tensor<T>& grad_out) {
  const auto d = cfg.derived_convs();
  FreConvGrads<T> out;

  // Integration is a plain sum: both branch norms see grad_out.
  Tensor<T> grad_hfe_raw, grad_lfe_raw;
  if (cache.mode == Mode::kTrain) {
    BnGrads<T> gh = batchnorm_backward(cache.hfe_raw, params.bn_hfe, cache.bn_hfe, grad_out);
    BnGrads<T> gl = batchnorm_backward(cache.lfe_raw, params.bn_lfe, cache.bn_lfe, grad_out);
    grad_hfe_raw = std::move(gh.grad_x);
    grad_lfe_raw = std::move(gl.grad_x);
    out.params.bn_hfe.gamma = std::move(gh.grad_gamma);
    out.params.bn_hfe.beta = std::move(gh.grad_beta);
    out.params.bn_lfe.gamma = std::move(gl.grad_gamma);
    out.params.bn_lfe.beta = std::move(gl.grad_beta);
  } else {
    // Eval mode: running stats are constants; affine grads still flow.
    grad_hfe_raw = batchnorm_backward_eval(params.bn_hfe, state.bn_hfe, grad_out);
    grad_lfe_raw = batchnorm_backward_eval(params.bn_lfe, state.bn_lfe, grad_out);
    auto affine_grads = [&](const BnCache<T>& bc, BnParams<T>& g) {
      g.gamma.assign(static_cast<std::size_t>(cfg.out_channels), T(0));
      g.beta.assign(static_cast<std::size_t>(cfg.out_channels), T(0));
      for (std::size_t i = 0; i < grad_out.size(); ++i) {
        const auto ch = static_cast<std::size_t>(
            (static_cast<std::int64_t>(i) / (grad_out.h() * grad_out.w())) % grad_out.c());
        g.gamma[ch] += grad_out.data[i] * bc.x_hat.data[i];
        g.beta[ch] += grad_out.data[i];
      }
    };
    affine_grads(cache.bn_hfe, out.params.bn_hfe);
    affine_grads(cache.bn_lfe, out.params.bn_lfe);
  }

  Tensor<T> grad_top(cache.x_top.shape), grad_bottom(cache.x_bottom.shape);
  if (cfg.branch_mode == BranchMode::kAsymmetric) {
    // LFE branch.
    ConvGrads<T> gl = conv2d_backward(cache.x_top, d.lfe, params.lfe, grad_lfe_raw);
    grad_top = std::move(gl.grad_x);
    out.params.lfe.weights = std::move(gl.grad_weights);

    // HFE branch: concat(ms) - pointwise.
    std::int64_t oc_base = 0;
    for (std::size_t k = 0; k < d.multiscale.size(); ++k) {
      const ConvSpec& spec = d.multiscale[k];
      Tensor<T> slice(grad_hfe_raw.n(), spec.out_channels, grad_hfe_raw.h(), grad_hfe_raw.w());
      const std::int64_t plane = slice.h() * slice.w();
      for (std::int64_t i = 0; i < slice.n(); ++i)
        for (std::int64_t c = 0; c < spec.out_channels; ++c)
          std::copy_n(grad_hfe_raw.data.data() + grad_hfe_raw.offset(i, oc_base + c, 0, 0),
                      plane, slice.data.data() + slice.offset(i, c, 0, 0));
      oc_base += spec.out_channels;
      ConvGrads<T> gm = conv2d_backward(cache.x_bottom, spec, params.multiscale[k], slice);
      grad_bottom = out.params.multiscale.empty() && k == 0
                        ? std::move(gm.grad_x)
                        : elementwise_add(grad_bottom, gm.grad_x);
      ConvParams<T> pg;
      pg.weights = std::move(gm.grad_weights);
      out.params.multiscale.push_back(std::move(pg));
    }
    Tensor<T> neg(grad_hfe_raw.shape);
    for (std::size_t i = 0; i < neg.size(); ++i) neg.data[i] = -grad_hfe_raw.data[i];
    ConvGrads<T> gp = conv2d_backward(cache.x_bottom, d.hfe_pointwise, params.hfe_pointwise, neg);
    grad_bottom = elementwise_add(grad_bottom, gp.grad_x);
    out.params.hfe_pointwise.weights = std::move(gp.grad_weights);
  } else {
    ConvGrads<T> gh = conv2d_backward(cache.x_bottom, d.same_branch, params.same_hfe,
                                      grad_hfe_raw);
    ConvGrads<T> gl = conv2d_backward(cache.x_top, d.same_branch, params.same_lfe, grad_lfe_raw);
    grad_bottom = std::move(gh.grad_x);
    grad_top = std::move(gl.grad_x);
    out.params.same_hfe.weights = std::move(gh.grad_weights);
    out.params.same_lfe.weights = std::move(gl.grad_weights);
  }

  // Split backward.
  const Tensor<T>& x = cache.split.x;
  out.grad_x = Tensor<T>(x.shape);
  if (cfg.split_mode == SplitMode::kDirect) {
    detail::chunk_sum_backward(x, cfg.n_split, static_cast<const T*>(nullptr), grad_top,
                               out.grad_x, static_cast<Tensor<T>*>(nullptr));
    detail::chunk_sum_backward(x, cfg.n_split, static_cast<const T*>(nullptr), grad_bottom,
                               out.grad_x, static_cast<Tensor<T>*>(nullptr));
    return out;
  }

  Tensor<T> grad_alpha(cache.split.alpha.shape), grad_beta(cache.split.beta.shape);
  detail::chunk_sum_backward(x, cfg.n_split, cache.split.alpha.data.data(), grad_top, out.grad_x,
                             &grad_alpha);
  detail::chunk_sum_backward(x, cfg.n_split, cache.split.beta.data.data(), grad_bottom,
                             out.grad_x, &grad_beta);

  // Through each attention path: sigmoid <- conv <- relu <- conv <- gap.
  Tensor<T> grad_s(cache.split.s.shape);
  auto attention_backward = [&](const Tensor<T>& gate, Tensor<T>& grad_gate,
                                const Tensor<T>& pre1, const Tensor<T>& post1,
                                const ConvParams<T>& reduce, const ConvParams<T>& expand,
                                ConvParams<T>& grad_reduce, ConvParams<T>& grad_expand) {
    Tensor<T> g2 = activation_backward(gate, gate, Activation::kSigmoid, grad_gate);
    ConvGrads<T> ge = conv2d_backward(post1, d.attn_expand, expand, g2);
    Tensor<T> gr = activation_backward(pre1, post1, Activation::kRelu, ge.grad_x);
    ConvGrads<T> gc = conv2d_backward(cache.split.s, d.attn_reduce, reduce, gr);
    grad_s = elementwise_add(grad_s, gc.grad_x);
    grad_expand.weights = std::move(ge.grad_weights);
    grad_expand.bias = std::move(ge.grad_bias);
    grad_reduce.weights = std::move(gc.grad_weights);
    grad_reduce.bias = std::move(gc.grad_bias);
  };
  attention_backward(cache.split.alpha, grad_alpha, cache.split.a1, cache.split.r1,
                     params.attn_a1, params.attn_a2, out.params.attn_a1, out.params.attn_a2);
  attention_backward(cache.split.beta, grad_beta, cache.split.b1, cache.split.rb1,
                     params.attn_b1, params.attn_b2, out.params.attn_b1, out.params.attn_b2);
  out.grad_x = elementwise_add(out.grad_x, global_avg_pool_backward(x.shape, grad_s));
  return out;
}

}  // namespace freconv

#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "freconv/arch.hpp"
#include "freconv/freconv_layer.hpp"

namespace freconv {

// Runtime parameters and state of one graph node. Only the fields matching
// the node's kind are populated.
template <typename T>
struct NodeRuntime {
  ConvParams<T> conv;
  FreConvParams<T> freconv;
  FreConvState<T> freconv_state;
  BnParams<T> bn;
  BnStats<T> bn_stats;
  LinearParams<T> linear;
};

template <typename T>
struct GraphParams {
  std::map<std::string, NodeRuntime<T>> nodes;
};

// View over one flat parameter vector; order is fixed by graph node order
// and a fixed per-kind field order, so checkpoints and SGD state align.
template <typename T>
struct ParamEntry {
  std::string name;
  std::vector<T>* values = nullptr;
  bool trainable = true;
};

namespace detail {

template <typename T>
void he_init_conv(Rng& rng, const ConvSpec& spec, ConvParams<T>& p) {
  p = ConvParams<T>::zeros(spec);
  const std::int64_t fan_in = (spec.in_channels / spec.groups) * spec.kernel * spec.kernel;
  he_normal_fill(rng, p.weights, fan_in);
}

template <typename T>
void collect_node_params(const LayerNode& node, NodeRuntime<T>& rt,
                         std::vector<ParamEntry<T>>& out) {
  auto add = [&](const std::string& suffix, std::vector<T>& v, bool trainable = true) {
    out.push_back(ParamEntry<T>{node.id + "." + suffix, &v, trainable});
  };
  switch (node.kind) {
    case NodeKind::kConv:
      add("weight", rt.conv.weights.data);
      if (node.conv.has_bias) add("bias", rt.conv.bias);
      break;
    case NodeKind::kLinear:
      add("weight", rt.linear.weights.data);
      add("bias", rt.linear.bias);
      break;
    case NodeKind::kBatchNorm:
      add("gamma", rt.bn.gamma);
      add("beta", rt.bn.beta);
      add("running_mean", rt.bn_stats.running_mean, false);
      add("running_var", rt.bn_stats.running_var, false);
      break;
    case NodeKind::kFreConv: {
      FreConvParams<T>& p = rt.freconv;
      if (node.freconv.split_mode == SplitMode::kAttention) {
        add("attn_a1.weight", p.attn_a1.weights.data);
        add("attn_a1.bias", p.attn_a1.bias);
        add("attn_a2.weight", p.attn_a2.weights.data);
        add("attn_a2.bias", p.attn_a2.bias);
        add("attn_b1.weight", p.attn_b1.weights.data);
        add("attn_b1.bias", p.attn_b1.bias);
        add("attn_b2.weight", p.attn_b2.weights.data);
        add("attn_b2.bias", p.attn_b2.bias);
      }
      if (node.freconv.branch_mode == BranchMode::kAsymmetric) {
        for (std::size_t k = 0; k < p.multiscale.size(); ++k)
          add("ms" + std::to_string(node.freconv.kernel_set[k]) + ".weight",
              p.multiscale[k].weights.data);
        add("hfe_pw.weight", p.hfe_pointwise.weights.data);
        add("lfe.weight", p.lfe.weights.data);
      } else {
        add("same_hfe.weight", p.same_hfe.weights.data);
        add("same_lfe.weight", p.same_lfe.weights.data);
      }
      add("bn_hfe.gamma", p.bn_hfe.gamma);
      add("bn_hfe.beta", p.bn_hfe.beta);
      add("bn_lfe.gamma", p.bn_lfe.gamma);
      add("bn_lfe.beta", p.bn_lfe.beta);
      add("bn_hfe.running_mean", rt.freconv_state.bn_hfe.running_mean, false);
      add("bn_hfe.running_var", rt.freconv_state.bn_hfe.running_var, false);
      add("bn_lfe.running_mean", rt.freconv_state.bn_lfe.running_mean, false);
      add("bn_lfe.running_var", rt.freconv_state.bn_lfe.running_var, false);
      break;
    }
    default:
      break;
  }
}

}  // namespace detail

template <typename T>
GraphParams<T> init_graph_params(const ArchGraph& graph, std::uint64_t seed) {
  GraphParams<T> params;
  Rng rng(seed);
  for (const auto& node : graph.nodes) {
    switch (node.kind) {
      case NodeKind::kConv: {
        NodeRuntime<T> rt;
        detail::he_init_conv(rng, node.conv, rt.conv);
        params.nodes.emplace(node.id, std::move(rt));
        break;
      }
      case NodeKind::kFreConv: {
        NodeRuntime<T> rt;
        rt.freconv = init_freconv_params<T>(node.freconv, rng);
        rt.freconv_state = FreConvState<T>::fresh(node.freconv);
        params.nodes.emplace(node.id, std::move(rt));
        break;
      }
      case NodeKind::kBatchNorm: {
        NodeRuntime<T> rt;
        rt.bn = BnParams<T>::identity(node.bn_channels);
        rt.bn_stats = BnStats<T>::fresh(node.bn_channels);
        params.nodes.emplace(node.id, std::move(rt));
        break;
      }
      case NodeKind::kLinear: {
        NodeRuntime<T> rt;
        rt.linear = LinearParams<T>::zeros(node.linear_in, node.linear_out);
        detail::small_normal_fill(rng, rt.linear.weights);
        params.nodes.emplace(node.id, std::move(rt));
        break;
      }
      default:
        break;
    }
  }
  return params;
}

// Structural clone with every value zeroed; used as a gradient accumulator.
template <typename T>
GraphParams<T> clone_zeroed(const ArchGraph& graph, const GraphParams<T>& params) {
  GraphParams<T> out = params;
  std::vector<ParamEntry<T>> entries;
  for (const auto& node : graph.nodes) {
    auto it = out.nodes.find(node.id);
    if (it != out.nodes.end()) detail::collect_node_params(node, it->second, entries);
  }
  for (auto& e : entries) std::fill(e.values->begin(), e.values->end(), T(0));
  return out;
}

template <typename T>
std::vector<ParamEntry<T>> collect_params(const ArchGraph& graph, GraphParams<T>& params) {
  std::vector<ParamEntry<T>> entries;
  for (const auto& node : graph.nodes) {
    auto it = params.nodes.find(node.id);
    if (it != params.nodes.end()) detail::collect_node_params(node, it->second, entries);
  }
  return entries;
}

// Per-node forward caches kept alive for the backward pass.
template <typename T>
struct ExecTrace {
  std::map<std::string, Tensor<T>> outputs;  // includes "input"
  std::map<std::string, BnCache<T>> bn_caches;
  std::map<std::string, FreConvCache<T>> freconv_caches;
  std::map<std::string, std::vector<std::int64_t>> pool_argmax;
  Mode mode = Mode::kEval;
};

// Topological evaluation. Train mode updates batch-norm running statistics
// inside `params`; eval mode is pure.
template <typename T>
Tensor<T> execute(const ArchGraph& graph, const Tensor<T>& x, GraphParams<T>& params, Mode mode,
                  ExecTrace<T>* trace = nullptr) {
  if (x.c() != graph.input_shape[0] || x.h() != graph.input_shape[1] ||
      x.w() != graph.input_shape[2])
    throw ShapeError("graph '" + graph.name + "' expects input [" +
                     std::to_string(graph.input_shape[0]) + "," +
                     std::to_string(graph.input_shape[1]) + "," +
                     std::to_string(graph.input_shape[2]) + "], got " + shape_str(x.shape));

  std::map<std::string, Tensor<T>> outputs;
  outputs.emplace("input", x);
  Tensor<T> result;
  for (const auto& node : graph.nodes) {
    const Tensor<T>& in = outputs.at(node.inputs.front());
    Tensor<T> out;
    try {
      switch (node.kind) {
        case NodeKind::kConv:
          out = conv2d_forward(in, node.conv, params.nodes.at(node.id).conv);
          break;
        case NodeKind::kFreConv: {
          NodeRuntime<T>& rt = params.nodes.at(node.id);
          FreConvCache<T>* cache = nullptr;
          if (trace) cache = &trace->freconv_caches[node.id];
          out = freconv_forward(in, node.freconv, rt.freconv, rt.freconv_state, mode, cache);
          break;
        }
        case NodeKind::kBatchNorm: {
          NodeRuntime<T>& rt = params.nodes.at(node.id);
          BnCache<T>* cache = nullptr;
          if (trace) cache = &trace->bn_caches[node.id];
          out = batchnorm_forward(in, rt.bn, rt.bn_stats, mode, cache);
          break;
        }
        case NodeKind::kActivation:
          out = activation_forward(in, node.activation);
          break;
        case NodeKind::kPool: {
          std::vector<std::int64_t>* argmax = nullptr;
          if (trace && node.pool.kind == PoolSpec::Kind::kMax)
            argmax = &trace->pool_argmax[node.id];
          out = pool_forward(in, node.pool, argmax);
          break;
        }
        case NodeKind::kGap:
          out = global_avg_pool(in);
          break;
        case NodeKind::kLinear:
          out = linear_forward(in, params.nodes.at(node.id).linear);
          break;
        case NodeKind::kAdd: {
          out = in;
          for (std::size_t i = 1; i < node.inputs.size(); ++i)
            out = elementwise_add(out, outputs.at(node.inputs[i]));
          break;
        }
        case NodeKind::kConcat: {
          std::int64_t channels = 0;
          for (const auto& src : node.inputs) channels += outputs.at(src).c();
          out = Tensor<T>(in.n(), channels, in.h(), in.w());
          std::int64_t base = 0;
          for (const auto& src : node.inputs) {
            const Tensor<T>& t = outputs.at(src);
            const std::int64_t plane = t.h() * t.w();
            for (std::int64_t i = 0; i < t.n(); ++i)
              for (std::int64_t ch = 0; ch < t.c(); ++ch)
                std::copy_n(t.data.data() + t.offset(i, ch, 0, 0), plane,
                            out.data.data() + out.offset(i, base + ch, 0, 0));
            base += t.c();
          }
          break;
        }
      }
    } catch (const Error& e) {
      throw Error("node '" + node.id + "': " + e.what());
    }
    result = out;
    outputs.emplace(node.id, std::move(out));
  }
  if (trace) {
    trace->outputs = std::move(outputs);
    trace->mode = mode;
  }
  return result;
}

// Reverse topological sweep. Gradients for parameters are accumulated into
// `grads` (same structure as params, see clone_zeroed); returns d(loss)/d(input).
template <typename T>
Tensor<T> execute_backward(const ArchGraph& graph, const GraphParams<T>& params,
                           const ExecTrace<T>& trace, const Tensor<T>& grad_logits,
                           GraphParams<T>& grads) {
  std::map<std::string, Tensor<T>> grad_map;
  grad_map[graph.terminal().id] = grad_logits;

  auto accumulate = [&](const std::string& id, Tensor<T> g) {
    auto it = grad_map.find(id);
    if (it == grad_map.end())
      grad_map.emplace(id, std::move(g));
    else
      it->second = elementwise_add(it->second, g);
  };

  for (auto rit = graph.nodes.rbegin(); rit != graph.nodes.rend(); ++rit) {
    const LayerNode& node = *rit;
    auto git = grad_map.find(node.id);
    if (git == grad_map.end()) continue;  // branch not on the loss path
    const Tensor<T>& gout = git->second;
    const Tensor<T>& in = trace.outputs.at(node.inputs.front());

    switch (node.kind) {
      case NodeKind::kConv: {
        ConvGrads<T> g = conv2d_backward(in, node.conv, params.nodes.at(node.id).conv, gout);
        ConvParams<T>& acc = grads.nodes.at(node.id).conv;
        for (std::size_t i = 0; i < g.grad_weights.size(); ++i)
          acc.weights.data[i] += g.grad_weights.data[i];
        detail::add_bias_grads(acc.bias, g.grad_bias);
        accumulate(node.inputs.front(), std::move(g.grad_x));
        break;
      }
      case NodeKind::kFreConv: {
        const NodeRuntime<T>& rt = params.nodes.at(node.id);
        FreConvGrads<T> g = freconv_backward(node.freconv, rt.freconv, rt.freconv_state,
                                             trace.freconv_caches.at(node.id), gout);
        accumulate_freconv_grads(grads.nodes.at(node.id).freconv, g.params);
        accumulate(node.inputs.front(), std::move(g.grad_x));
        break;
      }
      case NodeKind::kBatchNorm: {
        const NodeRuntime<T>& rt = params.nodes.at(node.id);
        NodeRuntime<T>& acc = grads.nodes.at(node.id);
        if (trace.mode == Mode::kTrain) {
          BnGrads<T> g = batchnorm_backward(in, rt.bn, trace.bn_caches.at(node.id), gout);
          for (std::size_t i = 0; i < g.grad_gamma.size(); ++i) {
            acc.bn.gamma[i] += g.grad_gamma[i];
            acc.bn.beta[i] += g.grad_beta[i];
          }
          accumulate(node.inputs.front(), std::move(g.grad_x));
        } else {
          const BnCache<T>& bc = trace.bn_caches.at(node.id);
          const std::int64_t plane = gout.h() * gout.w();
          for (std::size_t i = 0; i < gout.size(); ++i) {
            const auto ch = static_cast<std::size_t>(
                (static_cast<std::int64_t>(i) / plane) % gout.c());
            acc.bn.gamma[ch] += gout.data[i] * bc.x_hat.data[i];
            acc.bn.beta[ch] += gout.data[i];
          }
          accumulate(node.inputs.front(),
                     batchnorm_backward_eval(rt.bn, rt.bn_stats, gout));
        }
        break;
      }
      case NodeKind::kActivation: {
        const Tensor<T>& out = trace.outputs.at(node.id);
        accumulate(node.inputs.front(), activation_backward(in, out, node.activation, gout));
        break;
      }
      case NodeKind::kPool: {
        std::vector<std::int64_t> empty;
        const auto* argmax = &empty;
        if (node.pool.kind == PoolSpec::Kind::kMax) argmax = &trace.pool_argmax.at(node.id);
        accumulate(node.inputs.front(), pool_backward(in, node.pool, gout, *argmax));
        break;
      }
      case NodeKind::kGap:
        accumulate(node.inputs.front(), global_avg_pool_backward(in.shape, gout));
        break;
      case NodeKind::kLinear: {
        LinearGrads<T> g = linear_backward(in, params.nodes.at(node.id).linear, gout);
        NodeRuntime<T>& acc = grads.nodes.at(node.id);
        for (std::size_t i = 0; i < g.grad_weights.size(); ++i)
          acc.linear.weights.data[i] += g.grad_weights.data[i];
        for (std::size_t i = 0; i < g.grad_bias.size(); ++i)
          acc.linear.bias[i] += g.grad_bias[i];
        accumulate(node.inputs.front(), std::move(g.grad_x));
        break;
      }
      case NodeKind::kAdd:
        for (const auto& src : node.inputs) accumulate(src, gout);
        break;
      case NodeKind::kConcat: {
        std::int64_t base = 0;
        for (const auto& src : node.inputs) {
          const Tensor<T>& t = trace.outputs.at(src);
          Tensor<T> slice(t.shape);
          const std::int64_t plane = t.h() * t.w();
          for (std::int64_t i = 0; i < t.n(); ++i)
            for (std::int64_t ch = 0; ch < t.c(); ++ch)
              std::copy_n(gout.data.data() + gout.offset(i, base + ch, 0, 0), plane,
                          slice.data.data() + slice.offset(i, ch, 0, 0));
          base += t.c();
          accumulate(src, std::move(slice));
        }
        break;
      }
    }
    if (node.id != graph.terminal().id) grad_map.erase(git);
  }
  return grad_map.count("input") ? grad_map.at("input")
                                 : Tensor<T>(trace.outputs.at("input").shape);
}

// Elementwise accumulation of one FreConv gradient bundle into another.
template <typename T>
void accumulate_freconv_grads(FreConvParams<T>& acc, const FreConvParams<T>& g) {
  auto add_tensor = [](Tensor<T>& a, const Tensor<T>& b) {
    if (a.data.empty()) {
      a = b;
      return;
    }
    for (std::size_t i = 0; i < b.data.size(); ++i) a.data[i] += b.data[i];
  };
  auto add_conv = [&](ConvParams<T>& a, const ConvParams<T>& b) {
    add_tensor(a.weights, b.weights);
    detail::add_bias_grads(a.bias, b.bias);
  };
  add_conv(acc.attn_a1, g.attn_a1);
  add_conv(acc.attn_a2, g.attn_a2);
  add_conv(acc.attn_b1, g.attn_b1);
  add_conv(acc.attn_b2, g.attn_b2);
  if (acc.multiscale.size() < g.multiscale.size()) acc.multiscale.resize(g.multiscale.size());
  for (std::size_t i = 0; i < g.multiscale.size(); ++i)
    add_conv(acc.multiscale[i], g.multiscale[i]);
  add_conv(acc.hfe_pointwise, g.hfe_pointwise);
  add_conv(acc.lfe, g.lfe);
  add_conv(acc.same_hfe, g.same_hfe);
  add_conv(acc.same_lfe, g.same_lfe);
  detail::add_bias_grads(acc.bn_hfe.gamma, g.bn_hfe.gamma);
  detail::add_bias_grads(acc.bn_hfe.beta, g.bn_hfe.beta);
  detail::add_bias_grads(acc.bn_lfe.gamma, g.bn_lfe.gamma);
  detail::add_bias_grads(acc.bn_lfe.beta, g.bn_lfe.beta);
}

}  // namespace freconv

#include "freconv/arch.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace freconv {

using nlohmann::json;

std::string node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::kConv: return "conv";
    case NodeKind::kFreConv: return "freconv";
    case NodeKind::kBatchNorm: return "batchnorm";
    case NodeKind::kActivation: return "activation";
    case NodeKind::kPool: return "pool";
    case NodeKind::kGap: return "gap";
    case NodeKind::kLinear: return "linear";
    case NodeKind::kAdd: return "add";
    case NodeKind::kConcat: return "concat";
  }
  throw ConfigError("unknown node kind");
}

NodeKind node_kind_from_name(const std::string& name) {
  if (name == "conv") return NodeKind::kConv;
  if (name == "freconv") return NodeKind::kFreConv;
  if (name == "batchnorm") return NodeKind::kBatchNorm;
  if (name == "activation") return NodeKind::kActivation;
  if (name == "pool") return NodeKind::kPool;
  if (name == "gap") return NodeKind::kGap;
  if (name == "linear") return NodeKind::kLinear;
  if (name == "add") return NodeKind::kAdd;
  if (name == "concat") return NodeKind::kConcat;
  throw FormatError("unknown node kind '" + name + "'");
}

const LayerNode* ArchGraph::find(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

void ArchGraph::validate() const {
  if (nodes.empty()) throw ConfigError("graph '" + name + "' has no nodes");
  std::set<std::string> seen;
  std::set<std::string> consumed;
  for (const auto& n : nodes) {
    if (n.id == "input") throw ConfigError("node id 'input' is reserved");
    if (!seen.insert(n.id).second) throw ConfigError("duplicate node id '" + n.id + "'");
    if (n.inputs.empty()) throw ConfigError("node '" + n.id + "' has no inputs");
    for (const auto& in : n.inputs) {
      if (in != "input" && seen.find(in) == seen.end())
        throw ConfigError("node '" + n.id + "' input '" + in +
                          "' does not resolve to an earlier node");
      consumed.insert(in);
    }
  }
  // Exactly one terminal: every node except the last must feed something.
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    if (consumed.find(nodes[i].id) == consumed.end())
      throw ConfigError("node '" + nodes[i].id + "' is a second terminal");
  if (consumed.count(nodes.back().id))
    throw ConfigError("terminal node '" + nodes.back().id + "' feeds another node");
}

std::map<std::string, Shape4> propagate_shapes(const ArchGraph& graph) {
  graph.validate();
  std::map<std::string, Shape4> shapes;
  shapes["input"] = Shape4{1, graph.input_shape[0], graph.input_shape[1], graph.input_shape[2]};
  for (const auto& n : graph.nodes) {
    const Shape4 in = shapes.at(n.inputs.front());
    Shape4 out = in;
    switch (n.kind) {
      case NodeKind::kConv: {
        n.conv.validate();
        if (in[1] != n.conv.in_channels)
          throw ConfigError("node '" + n.id + "': input has " + std::to_string(in[1]) +
                            " channels, conv expects " + std::to_string(n.conv.in_channels));
        out = {in[0], n.conv.out_channels, n.conv.out_extent(in[2]), n.conv.out_extent(in[3])};
        if (out[2] < 1 || out[3] < 1)
          throw ConfigError("node '" + n.id + "': non-positive output extent");
        break;
      }
      case NodeKind::kFreConv: {
        n.freconv.validate();
        if (in[1] != n.freconv.in_channels)
          throw ConfigError("node '" + n.id + "': input has " + std::to_string(in[1]) +
                            " channels, freconv expects " +
                            std::to_string(n.freconv.in_channels));
        const std::int64_t s = n.freconv.stride;
        out = {in[0], n.freconv.out_channels, (in[2] - 1) / s + 1, (in[3] - 1) / s + 1};
        break;
      }
      case NodeKind::kBatchNorm:
        if (in[1] != n.bn_channels)
          throw ConfigError("node '" + n.id + "': batchnorm channels mismatch");
        break;
      case NodeKind::kActivation:
        break;
      case NodeKind::kPool:
        out = {in[0], in[1], n.pool.out_extent(in[2]), n.pool.out_extent(in[3])};
        if (out[2] < 1 || out[3] < 1)
          throw ConfigError("node '" + n.id + "': non-positive pool extent");
        break;
      case NodeKind::kGap:
        out = {in[0], in[1], 1, 1};
        break;
      case NodeKind::kLinear:
        if (in[1] * in[2] * in[3] != n.linear_in)
          throw ConfigError("node '" + n.id + "': input flattens to " +
                            std::to_string(in[1] * in[2] * in[3]) + ", linear expects " +
                            std::to_string(n.linear_in));
        out = {in[0], n.linear_out, 1, 1};
        break;
      case NodeKind::kAdd:
        for (const auto& other : n.inputs)
          if (shapes.at(other) != in)
            throw ConfigError("node '" + n.id + "': add inputs disagree on shape");
        break;
      case NodeKind::kConcat: {
        std::int64_t channels = 0;
        for (const auto& other : n.inputs) {
          const Shape4 s = shapes.at(other);
          if (s[2] != in[2] || s[3] != in[3])
            throw ConfigError("node '" + n.id + "': concat inputs disagree on spatial extents");
          channels += s[1];
        }
        out = {in[0], channels, in[2], in[3]};
        break;
      }
    }
    shapes[n.id] = out;
  }
  return shapes;
}

std::vector<std::int64_t> stage_kernel_schedule(std::int64_t stage) {
  if (stage < 1) throw ParamError("stage index must be >= 1");
  static const std::vector<std::int64_t> full = {3, 5, 7, 9};
  const std::int64_t drop = std::min<std::int64_t>(stage - 1, 3);
  return std::vector<std::int64_t>(full.begin(), full.end() - drop);
}

ArchFamily arch_family_from_name(const std::string& name) {
  if (name == "resnet50") return ArchFamily::kResNet50;
  if (name == "resnet101") return ArchFamily::kResNet101;
  if (name == "resnet152") return ArchFamily::kResNet152;
  if (name == "vgg16") return ArchFamily::kVgg16;
  if (name == "densenet121") return ArchFamily::kDenseNet121;
  throw ParamError("unknown architecture family '" + name + "'");
}

std::string arch_family_name(ArchFamily family) {
  switch (family) {
    case ArchFamily::kResNet50: return "resnet50";
    case ArchFamily::kResNet101: return "resnet101";
    case ArchFamily::kResNet152: return "resnet152";
    case ArchFamily::kVgg16: return "vgg16";
    case ArchFamily::kDenseNet121: return "densenet121";
  }
  throw ParamError("unknown architecture family");
}

namespace {

// Incremental graph assembly: tracks the running tail id and emits nodes.
struct Builder {
  ArchGraph graph;
  std::string tail = "input";
  bool is_freconv = false;
  FreConvBuildOptions options;

  LayerNode& push(LayerNode n) {
    graph.nodes.push_back(std::move(n));
    tail = graph.nodes.back().id;
    return graph.nodes.back();
  }

  std::string conv(const std::string& id, std::int64_t stage, std::int64_t in, std::int64_t out,
                   std::int64_t k, std::int64_t stride, std::int64_t pad, bool bias = false) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kConv;
    n.stage = stage;
    n.inputs = {tail};
    n.conv = ConvSpec{in, out, k, stride, pad, 1, 1, bias};
    push(std::move(n));
    return id;
  }

  // A 3x3 convolution site: emits a FreConv node in variant graphs when the
  // input channel count admits the configured split, a plain conv otherwise.
  std::string conv3x3_site(const std::string& id, std::int64_t stage, std::int64_t in,
                           std::int64_t out, std::int64_t stride, bool bias = false) {
    const bool replaceable =
        is_freconv && in % options.n_split == 0 && in > options.n_split;
    if (!replaceable) return conv(id, stage, in, out, 3, stride, 1, bias);
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kFreConv;
    n.stage = stage;
    n.inputs = {tail};
    n.freconv.in_channels = in;
    n.freconv.out_channels = out;
    n.freconv.stride = stride;
    n.freconv.n_split = options.n_split;
    n.freconv.kernel_set = stage_kernel_schedule(std::max<std::int64_t>(stage, 1));
    n.freconv.mode = options.mode;
    n.freconv.base_group = options.base_group;
    n.freconv.attn_reduction = options.attn_reduction;
    n.freconv.split_mode = options.split_mode;
    n.freconv.branch_mode = options.branch_mode;
    push(std::move(n));
    return id;
  }

  std::string bn(const std::string& id, std::int64_t stage, std::int64_t channels) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kBatchNorm;
    n.stage = stage;
    n.inputs = {tail};
    n.bn_channels = channels;
    push(std::move(n));
    return id;
  }

  std::string relu(const std::string& id, std::int64_t stage) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kActivation;
    n.stage = stage;
    n.inputs = {tail};
    n.activation = Activation::kRelu;
    push(std::move(n));
    return id;
  }

  // Max pooling, or its strided-convolution replacement in variant graphs.
  std::string maxpool_site(const std::string& id, std::int64_t stage, std::int64_t channels,
                           std::int64_t k, std::int64_t stride, std::int64_t pad,
                           bool with_bn = true) {
    if (!is_freconv || options.downsample == Downsample::kPool) {
      LayerNode n;
      n.id = id;
      n.kind = NodeKind::kPool;
      n.stage = stage;
      n.inputs = {tail};
      n.pool = PoolSpec{PoolSpec::Kind::kMax, k, stride, pad};
      push(std::move(n));
      return id;
    }
    conv(id + ".conv", stage, channels, channels, 3, stride, 1, !with_bn);
    if (with_bn) bn(id + ".bn", stage, channels);
    relu(id + ".relu", stage);
    return tail;
  }

  std::string avgpool(const std::string& id, std::int64_t stage, std::int64_t k,
                      std::int64_t stride) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kPool;
    n.stage = stage;
    n.inputs = {tail};
    n.pool = PoolSpec{PoolSpec::Kind::kAvg, k, stride, 0};
    push(std::move(n));
    return id;
  }

  std::string gap(const std::string& id) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kGap;
    n.inputs = {tail};
    push(std::move(n));
    return id;
  }

  std::string linear(const std::string& id, std::int64_t in, std::int64_t out) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kLinear;
    n.inputs = {tail};
    n.linear_in = in;
    n.linear_out = out;
    push(std::move(n));
    return id;
  }

  std::string add(const std::string& id, std::int64_t stage,
                  const std::vector<std::string>& inputs) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kAdd;
    n.stage = stage;
    n.inputs = inputs;
    push(std::move(n));
    return id;
  }

  std::string concat(const std::string& id, std::int64_t stage,
                     const std::vector<std::string>& inputs) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kConcat;
    n.stage = stage;
    n.inputs = inputs;
    push(std::move(n));
    return id;
  }
};

ArchGraph build_resnet(int depth, ArchVariant variant, const FreConvBuildOptions& options,
                       std::int64_t classes, std::int64_t input_hw) {
  std::vector<int> blocks;
  if (depth == 50) blocks = {3, 4, 6, 3};
  else if (depth == 101) blocks = {3, 4, 23, 3};
  else blocks = {3, 8, 36, 3};

  Builder b;
  b.is_freconv = variant == ArchVariant::kFreConv;
  b.options = options;
  b.graph.name = (b.is_freconv ? "freconv-resnet" : "resnet") + std::to_string(depth);
  b.graph.input_shape = {3, input_hw, input_hw};
  b.graph.classes = classes;

  // Stem: the 7x7 stride-2 conv is never replaced; only the max pool is.
  b.conv("stem.conv", 0, 3, 64, 7, 2, 3);
  b.bn("stem.bn", 0, 64);
  b.relu("stem.relu", 0);
  b.maxpool_site("stem.pool", 0, 64, 3, 2, 1);

  std::int64_t in_ch = 64;
  for (int stage = 1; stage <= 4; ++stage) {
    const std::int64_t mid = 64ll << (stage - 1);
    const std::int64_t out = mid * 4;
    for (int block = 1; block <= blocks[static_cast<std::size_t>(stage - 1)]; ++block) {
      const std::string p = "s" + std::to_string(stage) + ".b" + std::to_string(block) + ".";
      const std::int64_t stride = (stage > 1 && block == 1) ? 2 : 1;
      const std::string block_in = b.tail;

      b.conv(p + "conv1", stage, in_ch, mid, 1, 1, 0);
      b.bn(p + "bn1", stage, mid);
      b.relu(p + "relu1", stage);
      b.conv3x3_site(p + "conv2", stage, mid, mid, stride);
      b.bn(p + "bn2", stage, mid);
      b.relu(p + "relu2", stage);
      b.conv(p + "conv3", stage, mid, out, 1, 1, 0);
      const std::string main = b.bn(p + "bn3", stage, out);

      std::string shortcut = block_in;
      if (block == 1) {
        b.tail = block_in;
        b.conv(p + "down.conv", stage, in_ch, out, 1, stride, 0);
        shortcut = b.bn(p + "down.bn", stage, out);
      }
      b.add(p + "add", stage, {main, shortcut});
      b.relu(p + "relu3", stage);
      in_ch = out;
    }
  }
  b.gap("gap");
  b.linear("fc", 2048, classes);
  b.graph.validate();
  return b.graph;
}

ArchGraph build_vgg16(ArchVariant variant, const FreConvBuildOptions& options,
                      std::int64_t classes, std::int64_t input_hw) {
  Builder b;
  b.is_freconv = variant == ArchVariant::kFreConv;
  b.options = options;
  b.graph.name = b.is_freconv ? "freconv-vgg16" : "vgg16";
  b.graph.input_shape = {3, input_hw, input_hw};
  b.graph.classes = classes;

  const std::vector<std::vector<std::int64_t>> stages = {
      {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
  std::int64_t in_ch = 3;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto stage = static_cast<std::int64_t>(s + 1);
    for (std::size_t i = 0; i < stages[s].size(); ++i) {
      const std::int64_t out = stages[s][i];
      const std::string id =
          "conv" + std::to_string(stage) + "_" + std::to_string(i + 1);
      // VGG convolutions carry biases (no batch norm in the classic net).
      b.conv3x3_site(id, stage, in_ch, out, 1, true);
      b.relu("relu" + std::to_string(stage) + "_" + std::to_string(i + 1), stage);
      in_ch = out;
    }
    // Pool replacement in VGG follows the house style: conv + relu, no norm.
    if (!b.is_freconv || options.downsample == Downsample::kPool) {
      LayerNode n;
      n.id = "pool" + std::to_string(stage);
      n.kind = NodeKind::kPool;
      n.stage = stage;
      n.inputs = {b.tail};
      n.pool = PoolSpec{PoolSpec::Kind::kMax, 2, 2, 0};
      b.push(std::move(n));
    } else {
      b.conv("pool" + std::to_string(stage) + ".conv", stage, in_ch, in_ch, 3, 2, 1, true);
      b.relu("pool" + std::to_string(stage) + ".relu", stage);
    }
  }
  const std::int64_t spatial = input_hw / 32;
  b.linear("fc6", 512 * spatial * spatial, 4096);
  b.relu("relu6", 0);
  b.linear("fc7", 4096, 4096);
  b.relu("relu7", 0);
  b.linear("fc8", 4096, classes);
  b.graph.validate();
  return b.graph;
}

ArchGraph build_densenet121(ArchVariant variant, const FreConvBuildOptions& options,
                            std::int64_t classes, std::int64_t input_hw) {
  constexpr std::int64_t growth = 32;
  constexpr std::int64_t bn_size = 4;
  const std::vector<int> block_layers = {6, 12, 24, 16};

  Builder b;
  b.is_freconv = variant == ArchVariant::kFreConv;
  b.options = options;
  b.graph.name = b.is_freconv ? "freconv-densenet121" : "densenet121";
  b.graph.input_shape = {3, input_hw, input_hw};
  b.graph.classes = classes;

  b.conv("stem.conv", 0, 3, 64, 7, 2, 3);
  b.bn("stem.bn", 0, 64);
  b.relu("stem.relu", 0);
  b.maxpool_site("stem.pool", 0, 64, 3, 2, 1);

  std::int64_t channels = 64;
  for (std::size_t blk = 0; blk < block_layers.size(); ++blk) {
    const auto stage = static_cast<std::int64_t>(blk + 1);
    std::string features = b.tail;
    for (int layer = 1; layer <= block_layers[blk]; ++layer) {
      const std::string p =
          "db" + std::to_string(stage) + ".l" + std::to_string(layer) + ".";
      b.tail = features;
      b.bn(p + "bn1", stage, channels);
      b.relu(p + "relu1", stage);
      b.conv(p + "conv1", stage, channels, bn_size * growth, 1, 1, 0);
      b.bn(p + "bn2", stage, bn_size * growth);
      b.relu(p + "relu2", stage);
      const std::string out = b.conv3x3_site(p + "conv2", stage, bn_size * growth, growth, 1);
      features = b.concat(p + "cat", stage, {features, out});
      channels += growth;
    }
    if (blk + 1 < block_layers.size()) {
      const std::string p = "tr" + std::to_string(stage) + ".";
      b.bn(p + "bn", stage, channels);
      b.relu(p + "relu", stage);
      b.conv(p + "conv", stage, channels, channels / 2, 1, 1, 0);
      // Transition down-sampling is average pooling in the baseline and is
      // not a max pool, so the strided-conv replacement does not apply.
      b.avgpool(p + "pool", stage, 2, 2);
      channels /= 2;
    }
  }
  b.bn("final.bn", 0, channels);
  b.relu("final.relu", 0);
  b.gap("gap");
  b.linear("fc", channels, classes);
  b.graph.validate();
  return b.graph;
}

}  // namespace

ArchGraph build_arch(ArchFamily family, ArchVariant variant, const FreConvBuildOptions& options,
                     std::int64_t classes, std::int64_t input_hw) {
  switch (family) {
    case ArchFamily::kResNet50: return build_resnet(50, variant, options, classes, input_hw);
    case ArchFamily::kResNet101: return build_resnet(101, variant, options, classes, input_hw);
    case ArchFamily::kResNet152: return build_resnet(152, variant, options, classes, input_hw);
    case ArchFamily::kVgg16: return build_vgg16(variant, options, classes, input_hw);
    case ArchFamily::kDenseNet121:
      return build_densenet121(variant, options, classes, input_hw);
  }
  throw ParamError("unknown architecture family");
}

// ---------------------------------------------------------------------------
// JSON serialization

namespace {

json spec_to_json(const LayerNode& n) {
  json spec = json::object();
  switch (n.kind) {
    case NodeKind::kConv:
      spec = {{"in", n.conv.in_channels},   {"out", n.conv.out_channels},
              {"kernel", n.conv.kernel},    {"stride", n.conv.stride},
              {"padding", n.conv.padding},  {"dilation", n.conv.dilation},
              {"groups", n.conv.groups},    {"bias", n.conv.has_bias}};
      break;
    case NodeKind::kFreConv:
      spec = {{"in", n.freconv.in_channels},
              {"out", n.freconv.out_channels},
              {"stride", n.freconv.stride},
              {"n", n.freconv.n_split},
              {"kernels", n.freconv.kernel_set},
              {"mode", n.freconv.mode == KernelMode::kDck ? "dck" : "gck"},
              {"g1", n.freconv.base_group},
              {"attn_reduction", n.freconv.attn_reduction},
              {"split", n.freconv.split_mode == SplitMode::kAttention ? "attention" : "direct"},
              {"branch",
               n.freconv.branch_mode == BranchMode::kAsymmetric ? "asymmetric" : "same"}};
      break;
    case NodeKind::kBatchNorm:
      spec = {{"channels", n.bn_channels}};
      break;
    case NodeKind::kActivation:
      spec = {{"fn", n.activation == Activation::kRelu ? "relu" : "sigmoid"}};
      break;
    case NodeKind::kPool:
      spec = {{"fn", n.pool.kind == PoolSpec::Kind::kMax ? "max" : "avg"},
              {"kernel", n.pool.kernel},
              {"stride", n.pool.stride},
              {"padding", n.pool.padding}};
      break;
    case NodeKind::kLinear:
      spec = {{"in", n.linear_in}, {"out", n.linear_out}};
      break;
    case NodeKind::kGap:
    case NodeKind::kAdd:
    case NodeKind::kConcat:
      break;
  }
  return spec;
}

void spec_from_json(const json& spec, LayerNode& n) {
  switch (n.kind) {
    case NodeKind::kConv:
      n.conv.in_channels = spec.at("in").get<std::int64_t>();
      n.conv.out_channels = spec.at("out").get<std::int64_t>();
      n.conv.kernel = spec.at("kernel").get<std::int64_t>();
      n.conv.stride = spec.at("stride").get<std::int64_t>();
      n.conv.padding = spec.at("padding").get<std::int64_t>();
      n.conv.dilation = spec.at("dilation").get<std::int64_t>();
      n.conv.groups = spec.at("groups").get<std::int64_t>();
      n.conv.has_bias = spec.at("bias").get<bool>();
      break;
    case NodeKind::kFreConv: {
      n.freconv.in_channels = spec.at("in").get<std::int64_t>();
      n.freconv.out_channels = spec.at("out").get<std::int64_t>();
      n.freconv.stride = spec.at("stride").get<std::int64_t>();
      n.freconv.n_split = spec.at("n").get<std::int64_t>();
      n.freconv.kernel_set = spec.at("kernels").get<std::vector<std::int64_t>>();
      const std::string mode = spec.at("mode").get<std::string>();
      if (mode != "dck" && mode != "gck") throw FormatError("freconv mode must be dck|gck");
      n.freconv.mode = mode == "dck" ? KernelMode::kDck : KernelMode::kGck;
      n.freconv.base_group = spec.at("g1").get<std::int64_t>();
      n.freconv.attn_reduction = spec.at("attn_reduction").get<std::int64_t>();
      const std::string split = spec.at("split").get<std::string>();
      if (split != "attention" && split != "direct")
        throw FormatError("freconv split must be attention|direct");
      n.freconv.split_mode = split == "attention" ? SplitMode::kAttention : SplitMode::kDirect;
      const std::string branch = spec.at("branch").get<std::string>();
      if (branch != "asymmetric" && branch != "same")
        throw FormatError("freconv branch must be asymmetric|same");
      n.freconv.branch_mode =
          branch == "asymmetric" ? BranchMode::kAsymmetric : BranchMode::kSame;
      break;
    }
    case NodeKind::kBatchNorm:
      n.bn_channels = spec.at("channels").get<std::int64_t>();
      break;
    case NodeKind::kActivation: {
      const std::string fn = spec.at("fn").get<std::string>();
      if (fn != "relu" && fn != "sigmoid") throw FormatError("activation fn must be relu|sigmoid");
      n.activation = fn == "relu" ? Activation::kRelu : Activation::kSigmoid;
      break;
    }
    case NodeKind::kPool: {
      const std::string fn = spec.at("fn").get<std::string>();
      if (fn != "max" && fn != "avg") throw FormatError("pool fn must be max|avg");
      n.pool.kind = fn == "max" ? PoolSpec::Kind::kMax : PoolSpec::Kind::kAvg;
      n.pool.kernel = spec.at("kernel").get<std::int64_t>();
      n.pool.stride = spec.at("stride").get<std::int64_t>();
      n.pool.padding = spec.at("padding").get<std::int64_t>();
      break;
    }
    case NodeKind::kLinear:
      n.linear_in = spec.at("in").get<std::int64_t>();
      n.linear_out = spec.at("out").get<std::int64_t>();
      break;
    case NodeKind::kGap:
    case NodeKind::kAdd:
    case NodeKind::kConcat:
      break;
  }
}

}  // namespace

std::string graph_to_json(const ArchGraph& graph) {
  json j;
  j["name"] = graph.name;
  j["input_shape"] = graph.input_shape;
  j["classes"] = graph.classes;
  json nodes = json::array();
  for (const auto& n : graph.nodes) {
    json node;
    node["id"] = n.id;
    node["kind"] = node_kind_name(n.kind);
    node["spec"] = spec_to_json(n);
    node["inputs"] = n.inputs;
    node["stage"] = n.stage;
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  return j.dump(2) + "\n";
}

ArchGraph graph_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("architecture JSON parse failure: ") + e.what());
  }
  try {
    ArchGraph g;
    g.name = j.at("name").get<std::string>();
    const auto shape = j.at("input_shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 3) throw FormatError("input_shape must have 3 extents");
    g.input_shape = {shape[0], shape[1], shape[2]};
    g.classes = j.at("classes").get<std::int64_t>();
    for (const auto& node : j.at("nodes")) {
      LayerNode n;
      n.id = node.at("id").get<std::string>();
      n.kind = node_kind_from_name(node.at("kind").get<std::string>());
      n.inputs = node.at("inputs").get<std::vector<std::string>>();
      n.stage = node.value("stage", std::int64_t{0});
      spec_from_json(node.at("spec"), n);
      g.nodes.push_back(std::move(n));
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw FormatError(std::string("architecture JSON field failure: ") + e.what());
  }
}

void write_graph(const std::string& path, const ArchGraph& graph) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os << graph_to_json(graph);
}

ArchGraph read_graph(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  std::stringstream ss;
  ss << is.rdbuf();
  return graph_from_json(ss.str());
}

bool operator==(const LayerNode& a, const LayerNode& b) {
  if (a.id != b.id || a.kind != b.kind || a.inputs != b.inputs || a.stage != b.stage)
    return false;
  switch (a.kind) {
    case NodeKind::kConv: return a.conv == b.conv;
    case NodeKind::kFreConv: return a.freconv == b.freconv;
    case NodeKind::kBatchNorm: return a.bn_channels == b.bn_channels;
    case NodeKind::kActivation: return a.activation == b.activation;
    case NodeKind::kPool: return a.pool == b.pool;
    case NodeKind::kLinear: return a.linear_in == b.linear_in && a.linear_out == b.linear_out;
    case NodeKind::kGap:
    case NodeKind::kAdd:
    case NodeKind::kConcat: return true;
  }
  return false;
}

bool operator==(const ArchGraph& a, const ArchGraph& b) {
  return a.name == b.name && a.input_shape == b.input_shape && a.classes == b.classes &&
         a.nodes == b.nodes;
}

}  // namespace freconv

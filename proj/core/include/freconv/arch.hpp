#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "freconv/conv.hpp"
#include "freconv/freconv_layer.hpp"
#include "freconv/nn_ops.hpp"

namespace freconv {

enum class NodeKind {
  kConv,
  kFreConv,
  kBatchNorm,
  kActivation,
  kPool,
  kGap,
  kLinear,
  kAdd,
  kConcat,
};

std::string node_kind_name(NodeKind kind);
NodeKind node_kind_from_name(const std::string& name);

// One layer of an architecture graph. The reserved id "input" refers to the
// graph input tensor and never appears as a node id.
struct LayerNode {
  std::string id;
  NodeKind kind = NodeKind::kConv;
  std::vector<std::string> inputs;
  std::int64_t stage = 0;  // 0 = stem/head, >= 1 = backbone stage

  // Kind-specific spec; exactly one of these is meaningful.
  ConvSpec conv;
  FreConvConfig freconv;
  std::int64_t bn_channels = 0;
  Activation activation = Activation::kRelu;
  PoolSpec pool;
  std::int64_t linear_in = 0;
  std::int64_t linear_out = 0;
};

// Ordered DAG of layer nodes. Nodes are stored in topological order; the
// last node is the single terminal producing the classification logits.
struct ArchGraph {
  std::string name;
  std::array<std::int64_t, 3> input_shape{0, 0, 0};  // c, h, w
  std::int64_t classes = 0;
  std::vector<LayerNode> nodes;

  const LayerNode& terminal() const { return nodes.back(); }
  const LayerNode* find(const std::string& id) const;

  // Checks id uniqueness, input resolution, topological order, and single
  // terminal. Throws ConfigError on violation.
  void validate() const;
};

// Dry-run shape propagation with batch extent 1; validates every edge
// without allocating tensor data. Returns the output shape of each node.
std::map<std::string, Shape4> propagate_shapes(const ArchGraph& graph);

// Kernel set available at a backbone stage: {3,5,7,9} in stage 1, dropping
// the largest kernel per stage, floored at {3}.
std::vector<std::int64_t> stage_kernel_schedule(std::int64_t stage);

enum class ArchFamily { kResNet50, kResNet101, kResNet152, kVgg16, kDenseNet121 };
enum class ArchVariant { kBaseline, kFreConv };
enum class Downsample { kStrided, kPool };

ArchFamily arch_family_from_name(const std::string& name);
std::string arch_family_name(ArchFamily family);

// Knobs applied to every FreConv node of a variant graph, plus the
// down-sampling ablation toggle.
struct FreConvBuildOptions {
  KernelMode mode = KernelMode::kGck;
  std::int64_t n_split = 2;
  std::int64_t base_group = 2;
  std::int64_t attn_reduction = 16;
  SplitMode split_mode = SplitMode::kAttention;
  BranchMode branch_mode = BranchMode::kAsymmetric;
  Downsample downsample = Downsample::kStrided;
};

// Builds a baseline or FreConv-equipped graph. Variant graphs replace every
// 3x3 convolution whose input is not the raw image with a FreConv node
// (kernel set per stage schedule) and, unless downsample=kPool, replace max
// pooling with a strided 3x3 convolution.
ArchGraph build_arch(ArchFamily family, ArchVariant variant, const FreConvBuildOptions& options,
                     std::int64_t classes = 1000, std::int64_t input_hw = 224);

// JSON serialization of the architecture description file; round-trips
// losslessly.
std::string graph_to_json(const ArchGraph& graph);
ArchGraph graph_from_json(const std::string& text);
void write_graph(const std::string& path, const ArchGraph& graph);
ArchGraph read_graph(const std::string& path);

bool operator==(const LayerNode& a, const LayerNode& b);
bool operator==(const ArchGraph& a, const ArchGraph& b);

}  // namespace freconv

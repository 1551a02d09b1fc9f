#include "freconv/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "freconv/tensor_io.hpp"

namespace freconv {

using nlohmann::json;

ArchGraph build_toy_net(const SynthSpec& data, SplitMode split_mode) {
  ArchGraph g;
  g.name = split_mode == SplitMode::kAttention ? "toy-freconv" : "toy-freconv-direct";
  g.input_shape = {data.channels, data.image_size, data.image_size};
  g.classes = 2;

  auto freconv_node = [&](const std::string& id, std::int64_t stage, std::int64_t in,
                          std::int64_t out, std::int64_t attn_reduction,
                          const std::string& input) {
    LayerNode n;
    n.id = id;
    n.kind = NodeKind::kFreConv;
    n.stage = stage;
    n.inputs = {input};
    n.freconv.in_channels = in;
    n.freconv.out_channels = out;
    n.freconv.stride = 2;
    n.freconv.n_split = 2;
    n.freconv.kernel_set = stage_kernel_schedule(stage);
    n.freconv.mode = KernelMode::kDck;  // group-divisibility safe at toy widths
    n.freconv.base_group = 2;
    n.freconv.attn_reduction = attn_reduction;
    n.freconv.split_mode = split_mode;
    n.freconv.branch_mode = BranchMode::kAsymmetric;
    g.nodes.push_back(std::move(n));
  };

  freconv_node("fre1", 1, data.channels, 16, 2, "input");
  LayerNode r1;
  r1.id = "relu1";
  r1.kind = NodeKind::kActivation;
  r1.stage = 1;
  r1.inputs = {"fre1"};
  g.nodes.push_back(r1);
  freconv_node("fre2", 2, 16, 32, 4, "relu1");
  LayerNode r2;
  r2.id = "relu2";
  r2.kind = NodeKind::kActivation;
  r2.stage = 2;
  r2.inputs = {"fre2"};
  g.nodes.push_back(r2);
  LayerNode gap;
  gap.id = "gap";
  gap.kind = NodeKind::kGap;
  gap.inputs = {"relu2"};
  g.nodes.push_back(gap);
  LayerNode fc;
  fc.id = "fc";
  fc.kind = NodeKind::kLinear;
  fc.inputs = {"gap"};
  fc.linear_in = 32;
  fc.linear_out = 2;
  g.nodes.push_back(fc);
  g.validate();
  return g;
}

namespace {

Tensor<float> gather_batch(const Tensor<float>& images,
                           const std::vector<std::int64_t>& indices, std::int64_t begin,
                           std::int64_t end, std::vector<std::int64_t>* labels_out,
                           const std::vector<std::int64_t>& labels) {
  const std::int64_t n = end - begin;
  Tensor<float> batch(n, images.c(), images.h(), images.w());
  const std::int64_t sample = images.c() * images.h() * images.w();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t src = indices[static_cast<std::size_t>(begin + i)];
    std::copy_n(images.data.data() + src * sample, sample, batch.data.data() + i * sample);
    if (labels_out) labels_out->push_back(labels[static_cast<std::size_t>(src)]);
  }
  return batch;
}

// Names the first node whose output left the reals, in topological order.
std::string first_nonfinite_node(const ArchGraph& graph, const ExecTrace<float>& trace) {
  for (const auto& node : graph.nodes) {
    auto it = trace.outputs.find(node.id);
    if (it == trace.outputs.end()) continue;
    for (float v : it->second.data)
      if (!std::isfinite(v)) return node.id;
  }
  return "<loss>";
}

}  // namespace

TrainResult train(const ArchGraph& graph, GraphParams<float>& params,
                  const SynthDataset<float>& dataset, const TrainConfig& config) {
  config.validate();
  const std::int64_t total = dataset.images.n();
  if (total < 1) throw ParamError("training set is empty");

  auto entries = collect_params(graph, params);
  GraphParams<float> grads = clone_zeroed(graph, params);
  auto grad_entries = collect_params(graph, grads);
  std::vector<std::vector<float>> velocity(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i)
    velocity[i].assign(entries[i].values->size(), 0.0f);

  Rng shuffle_rng(config.seed ^ 0x5DEECE66Dull);
  std::vector<std::int64_t> order(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;

  TrainResult result;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the portable generator keeps runs reproducible.
    for (std::int64_t i = total - 1; i > 0; --i) {
      const auto j = static_cast<std::int64_t>(shuffle_rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    double epoch_loss = 0.0;
    std::int64_t batches = 0;
    for (std::int64_t begin = 0; begin < total; begin += config.batch_size, ++batches) {
      const std::int64_t end = std::min(total, begin + config.batch_size);
      std::vector<std::int64_t> batch_labels;
      Tensor<float> batch =
          gather_batch(dataset.images, order, begin, end, &batch_labels, dataset.labels);

      ExecTrace<float> trace;
      Tensor<float> logits = execute(graph, batch, params, Mode::kTrain, &trace);
      Tensor<float> grad_logits;
      const float loss = cross_entropy(logits, batch_labels, &grad_logits);
      if (!std::isfinite(loss))
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                    ", batch " + std::to_string(batches + 1) + ", first non-finite node '" +
                    first_nonfinite_node(graph, trace) + "'");
      epoch_loss += static_cast<double>(loss);

      for (auto& e : grad_entries) std::fill(e.values->begin(), e.values->end(), 0.0f);
      execute_backward(graph, params, trace, grad_logits, grads);

      for (std::size_t p = 0; p < entries.size(); ++p) {
        if (!entries[p].trainable) continue;
        std::vector<float>& theta = *entries[p].values;
        const std::vector<float>& g = *grad_entries[p].values;
        std::vector<float>& v = velocity[p];
        const auto lr = static_cast<float>(config.learning_rate);
        const auto mu = static_cast<float>(config.momentum);
        const auto wd = static_cast<float>(config.weight_decay);
        for (std::size_t i = 0; i < theta.size(); ++i) {
          v[i] = mu * v[i] + g[i] + wd * theta[i];
          theta[i] -= lr * v[i];
        }
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

double evaluate(const ArchGraph& graph, GraphParams<float>& params,
                const SynthDataset<float>& dataset, std::int64_t batch_size) {
  const std::int64_t total = dataset.images.n();
  std::vector<std::int64_t> order(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;
  std::int64_t correct = 0;
  for (std::int64_t begin = 0; begin < total; begin += batch_size) {
    const std::int64_t end = std::min(total, begin + batch_size);
    std::vector<std::int64_t> batch_labels;
    Tensor<float> batch =
        gather_batch(dataset.images, order, begin, end, &batch_labels, dataset.labels);
    Tensor<float> logits = execute(graph, batch, params, Mode::kEval);
    for (std::int64_t i = 0; i < logits.n(); ++i) {
      std::int64_t best = 0;
      for (std::int64_t k = 1; k < logits.c(); ++k)
        if (logits.at(i, k, 0, 0) > logits.at(i, best, 0, 0)) best = k;  // ties keep lowest
      if (best == batch_labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::string param_file_name(const std::string& param_name) {
  std::string s = param_name;
  for (char& c : s)
    if (c == '.' || c == '/') c = '_';
  return s + ".frtn";
}

json train_config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},     {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},   {"seed", c.seed}};
}

json synth_spec_json(const SynthSpec& s) {
  return {{"image_size", s.image_size},
          {"channels", s.channels},
          {"samples_per_class", s.samples_per_class},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed}};
}

}  // namespace

void save_checkpoint(const std::string& dir, const ArchGraph& graph,
                     GraphParams<float>& params, const TrainConfig& config,
                     const SynthSpec& data_spec, const TrainResult& result) {
  std::filesystem::create_directories(dir);
  write_graph(dir + "/arch.json", graph);

  json manifest;
  manifest["arch_file"] = "arch.json";
  manifest["train"] = train_config_json(config);
  manifest["data"] = synth_spec_json(data_spec);
  manifest["epoch_losses"] = result.epoch_losses;
  json files = json::array();
  for (auto& e : collect_params(graph, params)) {
    const std::string file = param_file_name(e.name);
    Tensor<float> t(1, 1, 1, static_cast<std::int64_t>(e.values->size()));
    t.data = *e.values;
    write_tensor(dir + "/" + file, t);
    files.push_back({{"name", e.name}, {"file", file}, {"trainable", e.trainable}});
  }
  manifest["params"] = std::move(files);

  std::ofstream os(dir + "/manifest.json", std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + dir + "/manifest.json' for writing");
  os << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw FormatError("cannot open '" + dir + "/manifest.json' for reading");
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest parse failure: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.graph = read_graph(dir + "/" + manifest.at("arch_file").get<std::string>());
    const json& t = manifest.at("train");
    ck.config.epochs = t.at("epochs").get<std::int64_t>();
    ck.config.batch_size = t.at("batch_size").get<std::int64_t>();
    ck.config.learning_rate = t.at("learning_rate").get<double>();
    ck.config.momentum = t.at("momentum").get<double>();
    ck.config.weight_decay = t.at("weight_decay").get<double>();
    ck.config.seed = t.at("seed").get<std::uint64_t>();
    const json& d = manifest.at("data");
    ck.data_spec.image_size = d.at("image_size").get<std::int64_t>();
    ck.data_spec.channels = d.at("channels").get<std::int64_t>();
    ck.data_spec.samples_per_class = d.at("samples_per_class").get<std::int64_t>();
    ck.data_spec.noise_sigma = d.at("noise_sigma").get<double>();
    ck.data_spec.seed = d.at("seed").get<std::uint64_t>();
    ck.epoch_losses = manifest.at("epoch_losses").get<std::vector<double>>();

    ck.params = init_graph_params<float>(ck.graph, 0);
    auto entries = collect_params(ck.graph, ck.params);
    for (const json& f : manifest.at("params")) {
      const std::string name = f.at("name").get<std::string>();
      const std::string file = f.at("file").get<std::string>();
      auto it = std::find_if(entries.begin(), entries.end(),
                             [&](const ParamEntry<float>& e) { return e.name == name; });
      if (it == entries.end())
        throw FormatError("manifest parameter '" + name + "' is not part of the architecture");
      Tensor<float> t = read_tensor_as<float>(dir + "/" + file);
      if (t.data.size() != it->values->size())
        throw FormatError("parameter '" + name + "' has " + std::to_string(t.data.size()) +
                          " values, architecture expects " +
                          std::to_string(it->values->size()));
      *it->values = std::move(t.data);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest field failure: ") + e.what());
  }
  return ck;
}

}  // namespace freconv

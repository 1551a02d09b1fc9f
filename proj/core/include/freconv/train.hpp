#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freconv/arch.hpp"
#include "freconv/executor.hpp"
#include "freconv/synth.hpp"

namespace freconv {

struct TrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw ParamError("epochs and batch size must be >= 1");
    if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0))
      throw ParamError("train hyperparameters must be non-negative");
  }
};

// The desk-scale reference network: two FreConv blocks, global average
// pooling, and a linear head. `split_mode` toggles the ablation pair.
ArchGraph build_toy_net(const SynthSpec& data, SplitMode split_mode = SplitMode::kAttention);

struct TrainResult {
  std::vector<double> epoch_losses;  // mean cross-entropy per epoch
};

// SGD with momentum and weight decay over every trainable parameter.
// Deterministic: (seed, config, dataset) fixes the trained parameters
// bitwise. Aborts with diagnostics naming the epoch, batch, and first
// non-finite node when the loss leaves the reals.
TrainResult train(const ArchGraph& graph, GraphParams<float>& params,
                  const SynthDataset<float>& dataset, const TrainConfig& config);

// Fraction of argmax-correct predictions; ties break toward the lowest
// class index.
double evaluate(const ArchGraph& graph, GraphParams<float>& params,
                const SynthDataset<float>& dataset, std::int64_t batch_size = 64);

// Checkpoint layout: <dir>/arch.json, one FRTN file per parameter tensor,
// and manifest.json mapping parameter names to files plus training state.
void save_checkpoint(const std::string& dir, const ArchGraph& graph,
                     GraphParams<float>& params, const TrainConfig& config,
                     const SynthSpec& data_spec, const TrainResult& result);

struct Checkpoint {
  ArchGraph graph;
  GraphParams<float> params;
  TrainConfig config;
  SynthSpec data_spec;
  std::vector<double> epoch_losses;
};

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace freconv

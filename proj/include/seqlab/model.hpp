#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "seqlab/optim.hpp"
#include "seqlab/tensor.hpp"
#include "seqlab/vocab.hpp"

namespace seqlab::models {

using diffcore::ParamStore;

enum class Family { rnn, transformer };

struct ModelConfig {
  Family family = Family::transformer;
  int emb_dim = 32;
  int hidden_dim = 32;   // rnn state size / transformer model dim
  int enc_layers = 1;
  int dec_layers = 2;    // N
  int heads = 2;         // H, transformer only
  int ffn_dim = 64;      // transformer only
  double dropout = 0.0;
  int src_vocab = 0;
  int tgt_vocab = 0;

  void validate() const;
  bool same_architecture(const ModelConfig& o) const;
};

Family parse_family(const std::string& name);
std::string family_name(Family f);

// One alignment map: T rows (output steps) by L columns (source positions),
// each row a categorical distribution.
using AttentionMap = Tensor;

// Cross-attention maps per (decoder layer, head); dense over the full grid.
struct AttentionStack {
  int layers = 0, heads = 0;
  std::vector<AttentionMap> maps;

  AttentionStack() = default;
  AttentionStack(int n_layers, int n_heads) : layers(n_layers), heads(n_heads), maps(static_cast<std::size_t>(n_layers) * n_heads) {}

  AttentionMap& at(int layer, int head) { return maps[static_cast<std::size_t>(layer) * heads + head]; }
  const AttentionMap& at(int layer, int head) const { return maps[static_cast<std::size_t>(layer) * heads + head]; }
};

// Which (layer, head) cross attentions get forced. Stored 0-indexed; the
// config syntax "1-2:1-8" uses 1-indexed inclusive ranges.
struct HeadSelection {
  std::set<std::pair<int, int>> pairs;

  bool contains(int layer, int head) const { return pairs.count({layer, head}) != 0; }
  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
  bool within(int layers, int heads) const;

  static HeadSelection parse(const std::string& spec);
  std::string str() const;
};

struct Model {
  ModelConfig cfg;
  ParamStore params;
};

// Deterministic per seed: uniform [-0.1, 0.1] for RNN weights, normal with
// std 1/sqrt(fan_in) for transformer projections, zero biases, unit LN gains.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

inline Model init_model(const ModelConfig& cfg, std::uint64_t seed) { return Model{cfg, init_params(cfg, seed)}; }

// Checkpoint: text manifest (config as key=value lines, then one line per
// parameter: path, dtype, shape) followed by the raw little-endian scalar
// payloads in manifest order. Round-trips bit-exactly.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace seqlab::models

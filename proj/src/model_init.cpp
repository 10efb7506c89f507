#include <stdexcept>

#include "seqlab/model.hpp"
#include "seqlab/rng.hpp"

namespace seqlab::models {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::runtime_error(std::string("ModelConfig: ") + name + " must be positive");
  };
  positive(emb_dim, "emb_dim");
  positive(hidden_dim, "hidden_dim");
  positive(enc_layers, "enc_layers");
  positive(dec_layers, "dec_layers");
  positive(src_vocab, "src_vocab");
  positive(tgt_vocab, "tgt_vocab");
  if (dropout < 0.0 || dropout >= 1.0) throw std::runtime_error("ModelConfig: dropout must be in [0, 1)");
  if (family == Family::transformer) {
    positive(heads, "heads");
    positive(ffn_dim, "ffn_dim");
    if (hidden_dim % heads != 0) throw std::runtime_error("ModelConfig: hidden_dim must be divisible by heads");
    if (emb_dim != hidden_dim) throw std::runtime_error("ModelConfig: transformer requires emb_dim == hidden_dim");
  } else {
    if (hidden_dim % 2 != 0) throw std::runtime_error("ModelConfig: rnn hidden_dim must be even (bidirectional split)");
  }
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
  return family == o.family && emb_dim == o.emb_dim && hidden_dim == o.hidden_dim &&
         enc_layers == o.enc_layers && dec_layers == o.dec_layers &&
         (family == Family::rnn || (heads == o.heads && ffn_dim == o.ffn_dim)) &&
         src_vocab == o.src_vocab && tgt_vocab == o.tgt_vocab;
}

Family parse_family(const std::string& name) {
  if (name == "rnn") return Family::rnn;
  if (name == "transformer") return Family::transformer;
  throw std::runtime_error("unknown model family: " + name);
}

std::string family_name(Family f) { return f == Family::rnn ? "rnn" : "transformer"; }

bool HeadSelection::within(int layers, int heads) const {
  for (const auto& [l, h] : pairs)
    if (l < 0 || l >= layers || h < 0 || h >= heads) return false;
  return true;
}

namespace {

std::pair<int, int> parse_range(const std::string& s) {
  auto dash = s.find('-');
  if (dash == std::string::npos) {
    int v = std::stoi(s);
    return {v, v};
  }
  return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
}

}  // namespace

HeadSelection HeadSelection::parse(const std::string& spec) {
  HeadSelection sel;
  if (spec.empty() || spec == "none") return sel;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    auto end = spec.find(',', pos);
    if (end == std::string::npos) end = spec.size();
    std::string seg = spec.substr(pos, end - pos);
    auto colon = seg.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("HeadSelection: expected layers:heads in '" + seg + "'");
    auto [l0, l1] = parse_range(seg.substr(0, colon));
    auto [h0, h1] = parse_range(seg.substr(colon + 1));
    if (l0 < 1 || h0 < 1 || l1 < l0 || h1 < h0)
      throw std::runtime_error("HeadSelection: bad range in '" + seg + "' (1-indexed, ascending)");
    for (int l = l0; l <= l1; ++l)
      for (int h = h0; h <= h1; ++h) sel.pairs.insert({l - 1, h - 1});
    pos = end + 1;
  }
  return sel;
}

std::string HeadSelection::str() const {
  if (pairs.empty()) return "none";
  // group contiguous head runs per layer, 1-indexed
  std::string out;
  auto it = pairs.begin();
  while (it != pairs.end()) {
    int layer = it->first;
    int run_start = it->second, run_end = it->second;
    auto next = std::next(it);
    while (next != pairs.end() && next->first == layer && next->second == run_end + 1) {
      run_end = next->second;
      it = next;
      next = std::next(it);
    }
    if (!out.empty()) out += ",";
    out += std::to_string(layer + 1) + ":" + std::to_string(run_start + 1);
    if (run_end != run_start) out += "-" + std::to_string(run_end + 1);
    it = next;
  }
  return out;
}

namespace {

Tensor uniform_init(Rng& rng, std::vector<int> shape, double lim) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.data) x = rng.uniform(-lim, lim);
  return t;
}

Tensor normal_init(Rng& rng, std::vector<int> shape, double std) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.data) x = rng.normal() * std;
  return t;
}

void add_lstm(ParamStore& p, Rng& rng, const std::string& prefix, int in, int hidden) {
  p.add(prefix + ".Wih", uniform_init(rng, {in, 4 * hidden}, 0.1));
  p.add(prefix + ".Whh", uniform_init(rng, {hidden, 4 * hidden}, 0.1));
  p.add(prefix + ".b", Tensor::zeros({4 * hidden}));
}

void add_proj(ParamStore& p, Rng& rng, const std::string& w, const std::string& b, int in, int out) {
  p.add(w, normal_init(rng, {in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
  if (!b.empty()) p.add(b, Tensor::zeros({out}));
}

void add_attention_block(ParamStore& p, Rng& rng, const std::string& prefix, int d) {
  for (const char* w : {"Wq", "Wk", "Wv", "Wo"}) {
    std::string base = prefix + "." + w;
    add_proj(p, rng, base, prefix + ".b" + std::string(1, w[1]), d, d);
  }
}

void add_layer_norm(ParamStore& p, const std::string& prefix, int d) {
  p.add(prefix + ".g", Tensor::full({d}, 1.0));
  p.add(prefix + ".b", Tensor::zeros({d}));
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(splitmix64(seed));
  ParamStore p;
  if (cfg.family == Family::rnn) {
    int h = cfg.hidden_dim, h2 = h / 2;
    p.add("src_emb.W", uniform_init(rng, {cfg.src_vocab, cfg.emb_dim}, 0.1));
    p.add("tgt_emb.W", uniform_init(rng, {cfg.tgt_vocab, cfg.emb_dim}, 0.1));
    for (int l = 0; l < cfg.enc_layers; ++l) {
      int in = l == 0 ? cfg.emb_dim : h;
      add_lstm(p, rng, "enc.l" + std::to_string(l) + ".fwd", in, h2);
      add_lstm(p, rng, "enc.l" + std::to_string(l) + ".bwd", in, h2);
    }
    for (int l = 0; l < cfg.dec_layers; ++l) {
      int in = l == 0 ? cfg.emb_dim : h;
      add_lstm(p, rng, "dec.l" + std::to_string(l), in, h);
    }
    p.add("attn.W", uniform_init(rng, {h, h}, 0.1));  // general dot-product bilinear form
    p.add("out.W", uniform_init(rng, {2 * h, cfg.tgt_vocab}, 0.1));
    p.add("out.b", Tensor::zeros({cfg.tgt_vocab}));
  } else {
    int d = cfg.hidden_dim;
    // embedding rows get unit-ish norm after the sqrt(d) lookup scaling
    double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
    p.add("src_emb.W", normal_init(rng, {cfg.src_vocab, d}, emb_std));
    p.add("tgt_emb.W", normal_init(rng, {cfg.tgt_vocab, d}, emb_std));
    for (int l = 0; l < cfg.enc_layers; ++l) {
      std::string base = "enc.l" + std::to_string(l);
      add_attention_block(p, rng, base + ".self", d);
      add_layer_norm(p, base + ".ln1", d);
      add_proj(p, rng, base + ".ffn.W1", base + ".ffn.b1", d, cfg.ffn_dim);
      add_proj(p, rng, base + ".ffn.W2", base + ".ffn.b2", cfg.ffn_dim, d);
      add_layer_norm(p, base + ".ln2", d);
    }
    for (int l = 0; l < cfg.dec_layers; ++l) {
      std::string base = "dec.l" + std::to_string(l);
      add_attention_block(p, rng, base + ".self", d);
      add_layer_norm(p, base + ".ln1", d);
      add_attention_block(p, rng, base + ".cross", d);
      add_layer_norm(p, base + ".ln2", d);
      add_proj(p, rng, base + ".ffn.W1", base + ".ffn.b1", d, cfg.ffn_dim);
      add_proj(p, rng, base + ".ffn.W2", base + ".ffn.b2", cfg.ffn_dim, d);
      add_layer_norm(p, base + ".ln3", d);
    }
    add_proj(p, rng, "out.W", "out.b", d, cfg.tgt_vocab);
  }
  return p;
}

}  // namespace seqlab::models

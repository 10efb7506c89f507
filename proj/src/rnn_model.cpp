#include <cmath>
#include <string>

#include "seqlab/model_graph.hpp"
#include "seqlab/rng.hpp"

namespace seqlab::models {

using diffcore::Graph;
using diffcore::Var;

namespace {

std::uint64_t drop_seed(std::uint64_t base, const std::string& path, int step) {
  return mix_seed(mix_seed(base, hash_str(path)), static_cast<std::uint64_t>(step));
}

struct LstmParams {
  Var wih, whh, b;
};

LstmParams lstm_params(Graph& g, const Model& m, const std::string& prefix) {
  return {g.param(prefix + ".Wih", m.params.at(prefix + ".Wih")),
          g.param(prefix + ".Whh", m.params.at(prefix + ".Whh")),
          g.param(prefix + ".b", m.params.at(prefix + ".b"))};
}

}  // namespace

TokenSeq shift_right(const TokenSeq& target) {
  TokenSeq history;
  history.reserve(target.size());
  history.push_back(Vocab::BOS);
  for (std::size_t i = 0; i + 1 < target.size(); ++i) history.push_back(target[i]);
  return history;
}

Var rnn_encode(Graph& g, const Model& m, const TokenSeq& src, bool train, std::uint64_t seed) {
  if (src.empty()) diffcore::op_fail("rnn_encode", "empty source sequence");
  const ModelConfig& cfg = m.cfg;
  int L = static_cast<int>(src.size());
  int h2 = cfg.hidden_dim / 2;
  Var emb_table = g.param("src_emb.W", m.params.at("src_emb.W"));
  std::vector<Var> layer_in(src.size());
  for (int l = 0; l < L; ++l) layer_in[l] = g.embed(emb_table, src[l]);

  for (int layer = 0; layer < cfg.enc_layers; ++layer) {
    std::string base = "enc.l" + std::to_string(layer);
    LstmParams fwd = lstm_params(g, m, base + ".fwd");
    LstmParams bwd = lstm_params(g, m, base + ".bwd");
    for (int l = 0; l < L; ++l)
      layer_in[l] = g.dropout(layer_in[l], cfg.dropout, drop_seed(seed, base + ".in", l), train);
    std::vector<Var> fwd_h(src.size()), bwd_h(src.size());
    Var h = g.constant(Tensor::zeros({h2})), c = g.constant(Tensor::zeros({h2}));
    for (int l = 0; l < L; ++l) {
      auto [hn, cn] = g.lstm_cell(layer_in[l], h, c, fwd.wih, fwd.whh, fwd.b);
      fwd_h[l] = hn;
      h = hn;
      c = cn;
    }
    h = g.constant(Tensor::zeros({h2}));
    c = g.constant(Tensor::zeros({h2}));
    for (int l = L - 1; l >= 0; --l) {
      auto [hn, cn] = g.lstm_cell(layer_in[l], h, c, bwd.wih, bwd.whh, bwd.b);
      bwd_h[l] = hn;
      h = hn;
      c = cn;
    }
    for (int l = 0; l < L; ++l) layer_in[l] = g.concat(fwd_h[l], bwd_h[l]);
  }
  return g.stack_rows(layer_in);
}

RnnState rnn_initial_state(Graph& g, const Model& m) {
  RnnState st;
  for (int l = 0; l < m.cfg.dec_layers; ++l) {
    st.h.push_back(g.constant(Tensor::zeros({m.cfg.hidden_dim})));
    st.c.push_back(g.constant(Tensor::zeros({m.cfg.hidden_dim})));
  }
  return st;
}

RnnStepOut rnn_step(Graph& g, const Model& m, Var enc, const RnnState& st, int prev_token,
                    const Tensor* override_row, bool train, std::uint64_t seed, int step_index) {
  const ModelConfig& cfg = m.cfg;
  const Tensor& enc_val = g.value(enc);
  int L = enc_val.shape[0];
  if (override_row) {
    if (override_row->rank() != 1 || override_row->shape[0] != L)
      diffcore::op_fail("rnn_step", "override row shape " + override_row->shape_str() + " vs L=" + std::to_string(L));
    double s = 0.0;
    for (double x : override_row->data) {
      if (x < 0.0) diffcore::op_fail("rnn_step", "override row has negative mass");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-6) diffcore::op_fail("rnn_step", "override row sums to " + std::to_string(s));
  }

  Var emb_table = g.param("tgt_emb.W", m.params.at("tgt_emb.W"));
  Var x = g.embed(emb_table, prev_token);
  RnnStepOut out;
  for (int l = 0; l < cfg.dec_layers; ++l) {
    std::string base = "dec.l" + std::to_string(l);
    x = g.dropout(x, cfg.dropout, drop_seed(seed, base + ".in", step_index), train);
    LstmParams lp = lstm_params(g, m, base);
    auto [hn, cn] = g.lstm_cell(x, st.h[l], st.c[l], lp.wih, lp.whh, lp.b);
    out.next.h.push_back(hn);
    out.next.c.push_back(cn);
    x = hn;
  }
  Var query = x;  // top decoder layer state s_t

  // general dot-product score: score_l = s_t^T W h_l
  Var attn_w = g.param("attn.W", m.params.at("attn.W"));
  Var projected = g.matmul(enc, g.transpose(attn_w));  // [L x h]
  Var scores = g.matvec(projected, query);             // [L]
  out.attn = g.softmax(scores);

  Var weights = override_row ? g.constant(*override_row) : out.attn;
  Var context = g.weighted_sum(weights, enc);

  Var features = g.concat(query, context);
  features = g.dropout(features, cfg.dropout, drop_seed(seed, "out.in", step_index), train);
  Var logits = g.linear(features, g.param("out.W", m.params.at("out.W")), g.param("out.b", m.params.at("out.b")));
  out.logp = g.log_softmax(logits);
  return out;
}

}  // namespace seqlab::models

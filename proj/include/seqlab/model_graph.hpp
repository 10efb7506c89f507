#pragma once

// Graph-level builders for both model families. The training regimes compose
// these directly so gradients flow through whole rollouts; the eval-mode
// wrappers in model_eval.hpp run them on a throwaway tape.

#include <cstdint>
#include <vector>

#include "seqlab/graph.hpp"
#include "seqlab/model.hpp"

namespace seqlab::models {

using diffcore::Graph;
using diffcore::Var;

// ---- RNN (bidirectional LSTM encoder, LSTM decoder, single cross attention)

struct RnnState {
  std::vector<Var> h, c;  // one per decoder layer
};

struct RnnStepOut {
  Var logp;  // [V_tgt] log-probabilities
  Var attn;  // [L] predicted alignment row (always computed)
  RnnState next;
};

Var rnn_encode(Graph& g, const Model& m, const TokenSeq& src, bool train, std::uint64_t seed);
RnnState rnn_initial_state(Graph& g, const Model& m);

// One decoder step. `override_row`, when given, must be a stochastic row of
// length L; the context is then computed from it while the predicted
// alignment is still returned.
RnnStepOut rnn_step(Graph& g, const Model& m, Var enc, const RnnState& st, int prev_token,
                    const Tensor* override_row, bool train, std::uint64_t seed, int step_index);

// ---- Transformer (parallel decoder with per-head cross-attention forcing)

struct TrDecodeOut {
  Var logp;                // [T x V_tgt] log-probabilities, row t conditioned on history[0..t]
  std::vector<Var> cross;  // layers*heads entries, each [T x L] predicted rows
  int layers = 0, heads = 0;

  Var cross_at(int layer, int head) const { return cross[static_cast<std::size_t>(layer) * heads + head]; }
};

Var tr_encode(Graph& g, const Model& m, const TokenSeq& src, bool train, std::uint64_t seed);

// `history` is the decoder input (BOS followed by the shifted target). For
// heads in `sel`, downstream values are computed from the matching rows of
// `inject`; predicted rows are returned for every head regardless.
TrDecodeOut tr_decode(Graph& g, const Model& m, Var enc, const TokenSeq& history,
                      const AttentionStack* inject, const HeadSelection* sel, bool train,
                      std::uint64_t seed);

// decoder input for target y_{1:T}: [BOS, y_1, ..., y_{T-1}]
TokenSeq shift_right(const TokenSeq& target);

}  // namespace seqlab::models

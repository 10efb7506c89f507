#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqlab/tensor.hpp"

namespace seqlab::diffcore {

using seqlab::Tensor;

// Named gradient set, one tensor per parameter path. std::map keeps the
// iteration order lexicographic, which the optimizer and tests rely on.
using Gradients = std::map<std::string, Tensor>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Ops append nodes during the forward pass; backward()
// walks the tape in reverse and accumulates gradients into parameter leaves.
// Every op validates shapes and fails fast on non-finite outputs.
class Graph {
 public:
  Var constant(Tensor t);
  Var scalar(double v) { return constant(Tensor::vec({v})); }

  // Parameter leaf. Repeated calls with the same path return the same node, so
  // gradient contributions from all uses accumulate. `t` must outlive the graph.
  Var param(const std::string& path, const Tensor& t);

  // elementwise, same shape
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);

  // linear algebra
  Var matmul(Var a, Var b);                 // [m x k] * [k x n]
  Var matvec(Var a, Var x);                 // [m x k] * [k]
  Var transpose(Var a);                     // [m x n] -> [n x m]
  Var linear(Var x, Var w, Var b = Var{});  // x*w (+ b); x rank 1 or 2, w [in x out]
  Var weighted_sum(Var w, Var m);           // [L] weights over rows of [L x d]

  // nonlinearities / normalization
  Var softmax(Var a);                              // rank 1, or row-wise for rank 2
  Var softmax_masked(Var a, const Tensor& addm);   // softmax(a + addm), addm constant
  Var log_softmax(Var a);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var relu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);  // last-dim

  // seeded inverted dropout; identity when rate == 0 or !train
  Var dropout(Var x, double rate, std::uint64_t seed, bool train);

  // structure
  Var concat(Var a, Var b);                     // rank 1
  Var concat_cols(const std::vector<Var>& ps);  // rank 2, same row count
  Var stack_rows(const std::vector<Var>& ps);   // rank-1 rows -> rank 2
  Var row(Var a, int i);                        // pick row i of rank 2
  Var col_slice(Var a, int from, int len);      // column block of rank 2
  Var slice(Var a, int from, int len);          // rank 1
  Var sum(Var a);                               // total sum -> scalar
  Var pick(Var a, int i);                       // rank 1 -> scalar
  Var pick_rows(Var a, const std::vector<int>& ids);  // gather a[t, ids[t]] -> [T]

  // embeddings
  Var embed(Var table, int id);                          // one row -> [d]
  Var embed_rows(Var table, const std::vector<int>& ids);  // -> [n x d]

  // KL(ref || pred) for one categorical row; ref is a constant stochastic row,
  // pred entries are floored at `floor` inside the log ratio. Returns a scalar.
  Var kl_row(const Tensor& ref, Var pred, double floor);

  // LSTM cell: gates [i f g o] from x*wih + h*whh + b. Returns (h', c').
  std::pair<Var, Var> lstm_cell(Var x, Var h, Var c, Var wih, Var whh, Var b);

  const Tensor& value(Var v) const { return nodes_[v.id].val; }
  std::size_t size() const { return nodes_.size(); }

  // Backpropagate from a scalar loss. Accumulates into `out` (zero-filled for
  // every parameter the graph saw but the loss did not touch).
  void backward(Var loss, Gradients& out);

 private:
  struct Node {
    const char* op;
    Tensor val;
    std::function<void(Graph&, int)> back;  // empty for leaves
    int param_leaf = -1;                    // index into param_paths_ for param leaves
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<std::pair<int, std::string>> param_leaves_;  // (node id, path)
  std::unordered_map<std::string, int> param_cache_;

  Var push(const char* op, Tensor val, std::function<void(Graph&, int)> back);
  Tensor& grad_buf(int id);           // zero-filled on demand
  bool has_grad(int id) const { return !grads_[id].data.empty(); }
  const Tensor& grad(int id) const { return grads_[id]; }
  const Tensor& val(int id) const { return nodes_[id].val; }

  friend struct GraphOpsDetail;
};

[[noreturn]] void op_fail(const char* op, const std::string& msg);

}  // namespace seqlab::diffcore

#include "seqlab/graph.hpp"

#include <algorithm>
#include <cmath>

#include "seqlab/rng.hpp"

namespace seqlab::diffcore {

void op_fail(const char* op, const std::string& msg) {
  throw std::runtime_error(std::string(op) + ": " + msg);
}

namespace {

void check_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) op_fail(op, "non-finite output");
}

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) op_fail(op, msg);
}

void softmax_row(const double* x, double* out, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
}

void log_softmax_row(const double* x, double* out, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(x[i] - mx);
  double lz = std::log(z) + mx;
  for (int i = 0; i < n; ++i) out[i] = x[i] - lz;
}

}  // namespace

Var Graph::push(const char* op, Tensor val, std::function<void(Graph&, int)> back) {
  check_finite(op, val);
  nodes_.push_back(Node{op, std::move(val), std::move(back), -1});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
  Tensor& g = grads_[id];
  if (g.data.empty()) g = Tensor::zeros(nodes_[id].val.shape);
  return g;
}

Var Graph::constant(Tensor t) { return push("constant", std::move(t), nullptr); }

Var Graph::param(const std::string& path, const Tensor& t) {
  auto it = param_cache_.find(path);
  if (it != param_cache_.end()) return Var{it->second};
  Var v = push("param", t, nullptr);
  nodes_[v.id].param_leaf = static_cast<int>(param_leaves_.size());
  param_leaves_.emplace_back(v.id, path);
  param_cache_.emplace(path, v.id);
  return v;
}

Var Graph::add(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  require(ta.same_shape(tb), "add", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  int ia = a.id, ib = b.id;
  return push("add", std::move(out), [ia, ib](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor &ga = g.grad_buf(ia), &gb = g.grad_buf(ib);
    for (std::size_t i = 0; i < go.data.size(); ++i) {
      ga.data[i] += go.data[i];
      gb.data[i] += go.data[i];
    }
  });
}

Var Graph::sub(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  require(ta.same_shape(tb), "sub", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  int ia = a.id, ib = b.id;
  return push("sub", std::move(out), [ia, ib](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor &ga = g.grad_buf(ia), &gb = g.grad_buf(ib);
    for (std::size_t i = 0; i < go.data.size(); ++i) {
      ga.data[i] += go.data[i];
      gb.data[i] -= go.data[i];
    }
  });
}

Var Graph::mul(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  require(ta.same_shape(tb), "mul", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  int ia = a.id, ib = b.id;
  return push("mul", std::move(out), [ia, ib](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    const Tensor &va = g.val(ia), &vb = g.val(ib);
    Tensor &ga = g.grad_buf(ia), &gb = g.grad_buf(ib);
    for (std::size_t i = 0; i < go.data.size(); ++i) {
      ga.data[i] += go.data[i] * vb.data[i];
      gb.data[i] += go.data[i] * va.data[i];
    }
  });
}

Var Graph::scale(Var a, double c) {
  Tensor out = val(a.id);
  for (double& x : out.data) x *= c;
  int ia = a.id;
  return push("scale", std::move(out), [ia, c](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += c * go.data[i];
  });
}

Var Graph::matmul(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  require(ta.rank() == 2 && tb.rank() == 2, "matmul", "expects rank-2 inputs, got " + ta.shape_str() + ", " + tb.shape_str());
  require(ta.shape[1] == tb.shape[0], "matmul", "inner dims differ: " + ta.shape_str() + " vs " + tb.shape_str());
  int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = ta.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      const double* brow = tb.row_ptr(p);
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  int ia = a.id, ib = b.id;
  return push("matmul", std::move(out), [ia, ib, m, k, n](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    const Tensor &va = g.val(ia), &vb = g.val(ib);
    Tensor &ga = g.grad_buf(ia), &gb = g.grad_buf(ib);
    // dA += dC * B^T ; dB += A^T * dC
    for (int i = 0; i < m; ++i) {
      const double* grow = go.row_ptr(i);
      double* garow = ga.row_ptr(i);
      for (int p = 0; p < k; ++p) {
        const double* brow = vb.row_ptr(p);
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
        garow[p] += acc;
      }
      const double* arow = va.row_ptr(i);
      for (int p = 0; p < k; ++p) {
        double av = arow[p];
        double* gbrow = gb.row_ptr(p);
        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
      }
    }
  });
}

Var Graph::matvec(Var a, Var x) {
  const Tensor &ta = val(a.id), &tx = val(x.id);
  require(ta.rank() == 2 && tx.rank() == 1, "matvec", "expects [m x k] * [k], got " + ta.shape_str() + ", " + tx.shape_str());
  require(ta.shape[1] == tx.shape[0], "matvec", "inner dims differ: " + ta.shape_str() + " vs " + tx.shape_str());
  int m = ta.shape[0], k = ta.shape[1];
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    const double* arow = ta.row_ptr(i);
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += arow[p] * tx.data[p];
    out.data[i] = acc;
  }
  int ia = a.id, ix = x.id;
  return push("matvec", std::move(out), [ia, ix, m, k](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    const Tensor &va = g.val(ia), &vx = g.val(ix);
    Tensor &ga = g.grad_buf(ia), &gx = g.grad_buf(ix);
    for (int i = 0; i < m; ++i) {
      double gi = go.data[i];
      double* garow = ga.row_ptr(i);
      const double* arow = va.row_ptr(i);
      for (int p = 0; p < k; ++p) {
        garow[p] += gi * vx.data[p];
        gx.data[p] += gi * arow[p];
      }
    }
  });
}

Var Graph::transpose(Var a) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, "transpose", "expects rank 2, got " + ta.shape_str());
  int m = ta.shape[0], n = ta.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
  int ia = a.id;
  return push("transpose", std::move(out), [ia, m, n](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += go.at(j, i);
  });
}

Var Graph::linear(Var x, Var w, Var b) {
  const Tensor &tx = val(x.id), &tw = val(w.id);
  require(tw.rank() == 2, "linear", "weight must be rank 2, got " + tw.shape_str());
  int in = tw.shape[0], out_dim = tw.shape[1];
  bool with_bias = b.valid();
  if (with_bias) {
    const Tensor& tb = val(b.id);
    require(tb.rank() == 1 && tb.shape[0] == out_dim, "linear",
            "bias shape " + tb.shape_str() + " does not match output dim " + std::to_string(out_dim));
  }
  if (tx.rank() == 1) {
    require(tx.shape[0] == in, "linear", "input " + tx.shape_str() + " vs weight " + tw.shape_str());
    Tensor out = Tensor::zeros({out_dim});
    if (with_bias) out.data = val(b.id).data;
    for (int i = 0; i < in; ++i) {
      double xi = tx.data[i];
      const double* wrow = tw.row_ptr(i);
      for (int j = 0; j < out_dim; ++j) out.data[j] += xi * wrow[j];
    }
    int ix = x.id, iw = w.id, ib = with_bias ? b.id : -1;
    return push("linear", std::move(out), [ix, iw, ib, in, out_dim](Graph& g, int self) {
      const Tensor& go = g.grad(self);
      const Tensor &vx = g.val(ix), &vw = g.val(iw);
      Tensor &gx = g.grad_buf(ix), &gw = g.grad_buf(iw);
      for (int i = 0; i < in; ++i) {
        const double* wrow = vw.row_ptr(i);
        double* gwrow = gw.row_ptr(i);
        double acc = 0.0;
        double xi = vx.data[i];
        for (int j = 0; j < out_dim; ++j) {
          acc += go.data[j] * wrow[j];
          gwrow[j] += xi * go.data[j];
        }
        gx.data[i] += acc;
      }
      if (ib >= 0) {
        Tensor& gb = g.grad_buf(ib);
        for (int j = 0; j < out_dim; ++j) gb.data[j] += go.data[j];
      }
    });
  }
  require(tx.rank() == 2 && tx.shape[1] == in, "linear", "input " + tx.shape_str() + " vs weight " + tw.shape_str());
  int rows = tx.shape[0];
  Tensor out = Tensor::zeros({rows, out_dim});
  for (int r = 0; r < rows; ++r) {
    double* orow = out.row_ptr(r);
    if (with_bias) {
      const Tensor& tb = val(b.id);
      for (int j = 0; j < out_dim; ++j) orow[j] = tb.data[j];
    }
    const double* xrow = tx.row_ptr(r);
    for (int i = 0; i < in; ++i) {
      double xi = xrow[i];
      const double* wrow = tw.row_ptr(i);
      for (int j = 0; j < out_dim; ++j) orow[j] += xi * wrow[j];
    }
  }
  int ix = x.id, iw = w.id, ib = with_bias ? b.id : -1;
  return push("linear", std::move(out), [ix, iw, ib, rows, in, out_dim](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    const Tensor &vx = g.val(ix), &vw = g.val(iw);
    Tensor &gx = g.grad_buf(ix), &gw = g.grad_buf(iw);
    for (int r = 0; r < rows; ++r) {
      const double* grow = go.row_ptr(r);
      const double* xrow = vx.row_ptr(r);
      double* gxrow = gx.row_ptr(r);
      for (int i = 0; i < in; ++i) {
        const double* wrow = vw.row_ptr(i);
        double* gwrow = gw.row_ptr(i);
        double acc = 0.0;
        double xi = xrow[i];
        for (int j = 0; j < out_dim; ++j) {
          acc += grow[j] * wrow[j];
          gwrow[j] += xi * grow[j];
        }
        gxrow[i] += acc;
      }
    }
    if (ib >= 0) {
      Tensor& gb = g.grad_buf(ib);
      for (int r = 0; r < rows; ++r) {
        const double* grow = go.row_ptr(r);
        for (int j = 0; j < out_dim; ++j) gb.data[j] += grow[j];
      }
    }
  });
}

Var Graph::weighted_sum(Var w, Var m) {
  const Tensor &tw = val(w.id), &tm = val(m.id);
  require(tw.rank() == 1 && tm.rank() == 2, "weighted_sum", "expects [L] and [L x d], got " + tw.shape_str() + ", " + tm.shape_str());
  require(tw.shape[0] == tm.shape[0], "weighted_sum", "row count differs: " + tw.shape_str() + " vs " + tm.shape_str());
  int L = tm.shape[0], d = tm.shape[1];
  Tensor out = Tensor::zeros({d});
  for (int l = 0; l < L; ++l) {
    double wl = tw.data[l];
    const double* mrow = tm.row_ptr(l);
    for (int j = 0; j < d; ++j) out.data[j] += wl * mrow[j];
  }
  int iw = w.id, im = m.id;
  return push("weighted_sum", std::move(out), [iw, im, L, d](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    const Tensor &vw = g.val(iw), &vm = g.val(im);
    Tensor &gw = g.grad_buf(iw), &gm = g.grad_buf(im);
    for (int l = 0; l < L; ++l) {
      const double* mrow = vm.row_ptr(l);
      double* gmrow = gm.row_ptr(l);
      double acc = 0.0;
      double wl = vw.data[l];
      for (int j = 0; j < d; ++j) {
        acc += go.data[j] * mrow[j];
        gmrow[j] += wl * go.data[j];
      }
      gw.data[l] += acc;
    }
  });
}

struct GraphOpsDetail {
  static std::function<void(Graph&, int)> softmax_back(int ia) {
    return [ia](Graph& g, int self) {
      const Tensor& p = g.val(self);
      const Tensor& go = g.grad(self);
      Tensor& ga = g.grad_buf(ia);
      int rows = p.rank() == 2 ? p.shape[0] : 1;
      int n = p.rank() == 2 ? p.shape[1] : p.shape[0];
      for (int r = 0; r < rows; ++r) {
        const double* pr = p.data.data() + static_cast<std::size_t>(r) * n;
        const double* gr = go.data.data() + static_cast<std::size_t>(r) * n;
        double* ar = ga.data.data() + static_cast<std::size_t>(r) * n;
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += gr[i] * pr[i];
        for (int i = 0; i < n; ++i) ar[i] += pr[i] * (gr[i] - dot);
      }
    };
  }
};

Var Graph::softmax(Var a) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 1 || ta.rank() == 2, "softmax", "expects rank 1 or 2, got " + ta.shape_str());
  Tensor out = ta;
  int rows = ta.rank() == 2 ? ta.shape[0] : 1;
  int n = ta.rank() == 2 ? ta.shape[1] : ta.shape[0];
  for (int r = 0; r < rows; ++r)
    softmax_row(ta.data.data() + static_cast<std::size_t>(r) * n, out.data.data() + static_cast<std::size_t>(r) * n, n);
  return push("softmax", std::move(out), GraphOpsDetail::softmax_back(a.id));
}

Var Graph::softmax_masked(Var a, const Tensor& addm) {
  const Tensor& ta = val(a.id);
  require(ta.same_shape(addm), "softmax_masked", "mask shape " + addm.shape_str() + " vs input " + ta.shape_str());
  Tensor shifted = ta;
  for (std::size_t i = 0; i < shifted.data.size(); ++i) shifted.data[i] += addm.data[i];
  Tensor out = shifted;
  int rows = ta.rank() == 2 ? ta.shape[0] : 1;
  int n = ta.rank() == 2 ? ta.shape[1] : ta.shape[0];
  for (int r = 0; r < rows; ++r)
    softmax_row(shifted.data.data() + static_cast<std::size_t>(r) * n, out.data.data() + static_cast<std::size_t>(r) * n, n);
  // mask is constant, so the backward is the plain softmax one
  return push("softmax_masked", std::move(out), GraphOpsDetail::softmax_back(a.id));
}

Var Graph::log_softmax(Var a) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 1 || ta.rank() == 2, "log_softmax", "expects rank 1 or 2, got " + ta.shape_str());
  Tensor out = ta;
  int rows = ta.rank() == 2 ? ta.shape[0] : 1;
  int n = ta.rank() == 2 ? ta.shape[1] : ta.shape[0];
  for (int r = 0; r < rows; ++r)
    log_softmax_row(ta.data.data() + static_cast<std::size_t>(r) * n, out.data.data() + static_cast<std::size_t>(r) * n, n);
  int ia = a.id;
  return push("log_softmax", std::move(out), [ia, rows, n](Graph& g, int self) {
    const Tensor& ls = g.val(self);
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (int r = 0; r < rows; ++r) {
      const double* lr = ls.data.data() + static_cast<std::size_t>(r) * n;
      const double* gr = go.data.data() + static_cast<std::size_t>(r) * n;
      double* ar = ga.data.data() + static_cast<std::size_t>(r) * n;
      double tot = 0.0;
      for (int i = 0; i < n; ++i) tot += gr[i];
      for (int i = 0; i < n; ++i) ar[i] += gr[i] - std::exp(lr[i]) * tot;
    }
  });
}

Var Graph::sigmoid(Var a) {
  Tensor out = val(a.id);
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  int ia = a.id;
  return push("sigmoid", std::move(out), [ia](Graph& g, int self) {
    const Tensor& y = g.val(self);
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Var Graph::tanh_(Var a) {
  Tensor out = val(a.id);
  for (double& x : out.data) x = std::tanh(x);
  int ia = a.id;
  return push("tanh", std::move(out), [ia](Graph& g, int self) {
    const Tensor& y = g.val(self);
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var Graph::relu(Var a) {
  Tensor out = val(a.id);
  for (double& x : out.data) x = x > 0.0 ? x : 0.0;
  int ia = a.id;
  return push("relu", std::move(out), [ia](Graph& g, int self) {
    const Tensor& vx = g.val(ia);
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t i = 0; i < go.data.size(); ++i)
      if (vx.data[i] > 0.0) ga.data[i] += go.data[i];
  });
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor &tx = val(x.id), &tg = val(gain.id), &tb = val(bias.id);
  int n = tx.rank() == 2 ? tx.shape[1] : tx.shape[0];
  int rows = tx.rank() == 2 ? tx.shape[0] : 1;
  require(tg.rank() == 1 && tg.shape[0] == n && tb.rank() == 1 && tb.shape[0] == n, "layer_norm",
          "gain/bias " + tg.shape_str() + "/" + tb.shape_str() + " vs feature dim " + std::to_string(n));
  Tensor out = tx;
  for (int r = 0; r < rows; ++r) {
    const double* xr = tx.data.data() + static_cast<std::size_t>(r) * n;
    double* orow = out.data.data() + static_cast<std::size_t>(r) * n;
    double mu = 0.0;
    for (int i = 0; i < n; ++i) mu += xr[i];
    mu /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= n;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < n; ++i) orow[i] = tg.data[i] * (xr[i] - mu) * inv + tb.data[i];
  }
  int ix = x.id, ig = gain.id, ib = bias.id;
  return push("layer_norm", std::move(out), [ix, ig, ib, rows, n, eps](Graph& g, int self) {
    const Tensor& vx = g.val(ix);
    const Tensor& vg = g.val(ig);
    const Tensor& go = g.grad(self);
    Tensor &gx = g.grad_buf(ix), &gg = g.grad_buf(ig), &gb = g.grad_buf(ib);
    std::vector<double> xhat(n), dxhat(n);
    for (int r = 0; r < rows; ++r) {
      const double* xr = vx.data.data() + static_cast<std::size_t>(r) * n;
      const double* gr = go.data.data() + static_cast<std::size_t>(r) * n;
      double* gxr = gx.data.data() + static_cast<std::size_t>(r) * n;
      double mu = 0.0;
      for (int i = 0; i < n; ++i) mu += xr[i];
      mu /= n;
      double var = 0.0;
      for (int i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
      var /= n;
      double inv = 1.0 / std::sqrt(var + eps);
      double m1 = 0.0, m2 = 0.0;
      for (int i = 0; i < n; ++i) {
        xhat[i] = (xr[i] - mu) * inv;
        dxhat[i] = gr[i] * vg.data[i];
        gg.data[i] += gr[i] * xhat[i];
        gb.data[i] += gr[i];
        m1 += dxhat[i];
        m2 += dxhat[i] * xhat[i];
      }
      m1 /= n;
      m2 /= n;
      for (int i = 0; i < n; ++i) gxr[i] += inv * (dxhat[i] - m1 - xhat[i] * m2);
    }
  });
}

Var Graph::dropout(Var x, double rate, std::uint64_t seed, bool train) {
  if (!train || rate <= 0.0) return x;
  require(rate < 1.0, "dropout", "rate must be < 1");
  const Tensor& tx = val(x.id);
  Rng rng(seed);
  std::vector<double> mask(tx.data.size());
  double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform01() >= rate ? keep_scale : 0.0;
  Tensor out = tx;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];
  int ix = x.id;
  return push("dropout", std::move(out), [ix, mask = std::move(mask)](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buf(ix);
    for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i] * mask[i];
  });
}

Var Graph::concat(Var a, Var b) {
  const Tensor &ta = val(a.id), &tb = val(b.id);
  require(ta.rank() == 1 && tb.rank() == 1, "concat", "expects rank-1 inputs, got " + ta.shape_str() + ", " + tb.shape_str());
  Tensor out = Tensor::zeros({ta.shape[0] + tb.shape[0]});
  std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
  std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + ta.shape[0]);
  int ia = a.id, ib = b.id, na = ta.shape[0], nb = tb.shape[0];
  return push("concat", std::move(out), [ia, ib, na, nb](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor &ga = g.grad_buf(ia), &gb = g.grad_buf(ib);
    for (int i = 0; i < na; ++i) ga.data[i] += go.data[i];
    for (int i = 0; i < nb; ++i) gb.data[i] += go.data[na + i];
  });
}

Var Graph::concat_cols(const std::vector<Var>& ps) {
  require(!ps.empty(), "concat_cols", "no inputs");
  int rows = val(ps[0].id).shape[0];
  int total = 0;
  for (Var p : ps) {
    const Tensor& t = val(p.id);
    require(t.rank() == 2 && t.shape[0] == rows, "concat_cols", "row count mismatch at " + t.shape_str());
    total += t.shape[1];
  }
  Tensor out = Tensor::zeros({rows, total});
  int off = 0;
  for (Var p : ps) {
    const Tensor& t = val(p.id);
    for (int r = 0; r < rows; ++r)
      std::copy(t.row_ptr(r), t.row_ptr(r) + t.shape[1], out.row_ptr(r) + off);
    off += t.shape[1];
  }
  std::vector<int> ids;
  std::vector<int> widths;
  for (Var p : ps) {
    ids.push_back(p.id);
    widths.push_back(val(p.id).shape[1]);
  }
  return push("concat_cols", std::move(out), [ids, widths, rows](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    int off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor& gp = g.grad_buf(ids[k]);
      for (int r = 0; r < rows; ++r) {
        const double* grow = go.row_ptr(r) + off;
        double* prow = gp.row_ptr(r);
        for (int j = 0; j < widths[k]; ++j) prow[j] += grow[j];
      }
      off += widths[k];
    }
  });
}

Var Graph::stack_rows(const std::vector<Var>& ps) {
  require(!ps.empty(), "stack_rows", "no inputs");
  int n = val(ps[0].id).shape[0];
  for (Var p : ps)
    require(val(p.id).rank() == 1 && val(p.id).shape[0] == n, "stack_rows", "row length mismatch at " + val(p.id).shape_str());
  Tensor out = Tensor::zeros({static_cast<int>(ps.size()), n});
  for (std::size_t r = 0; r < ps.size(); ++r)
    std::copy(val(ps[r].id).data.begin(), val(ps[r].id).data.end(), out.row_ptr(static_cast<int>(r)));
  std::vector<int> ids;
  for (Var p : ps) ids.push_back(p.id);
  return push("stack_rows", std::move(out), [ids, n](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      Tensor& gp = g.grad_buf(ids[r]);
      const double* grow = go.row_ptr(static_cast<int>(r));
      for (int j = 0; j < n; ++j) gp.data[j] += grow[j];
    }
  });
}

Var Graph::row(Var a, int i) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, "row", "expects rank 2, got " + ta.shape_str());
  require(i >= 0 && i < ta.shape[0], "row", "row " + std::to_string(i) + " out of " + ta.shape_str());
  Tensor out = Tensor::zeros({ta.shape[1]});
  std::copy(ta.row_ptr(i), ta.row_ptr(i) + ta.shape[1], out.data.begin());
  int ia = a.id, n = ta.shape[1];
  return push("row", std::move(out), [ia, i, n](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    double* arow = ga.row_ptr(i);
    for (int j = 0; j < n; ++j) arow[j] += go.data[j];
  });
}

Var Graph::col_slice(Var a, int from, int len) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, "col_slice", "expects rank 2, got " + ta.shape_str());
  require(from >= 0 && len > 0 && from + len <= ta.shape[1], "col_slice",
          "slice [" + std::to_string(from) + "," + std::to_string(from + len) + ") out of " + ta.shape_str());
  int rows = ta.shape[0];
  Tensor out = Tensor::zeros({rows, len});
  for (int r = 0; r < rows; ++r)
    std::copy(ta.row_ptr(r) + from, ta.row_ptr(r) + from + len, out.row_ptr(r));
  int ia = a.id;
  return push("col_slice", std::move(out), [ia, from, len, rows](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (int r = 0; r < rows; ++r) {
      const double* grow = go.row_ptr(r);
      double* arow = ga.row_ptr(r) + from;
      for (int j = 0; j < len; ++j) arow[j] += grow[j];
    }
  });
}

Var Graph::slice(Var a, int from, int len) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 1, "slice", "expects rank 1, got " + ta.shape_str());
  require(from >= 0 && len > 0 && from + len <= ta.shape[0], "slice",
          "slice [" + std::to_string(from) + "," + std::to_string(from + len) + ") out of " + ta.shape_str());
  Tensor out = Tensor::zeros({len});
  std::copy(ta.data.begin() + from, ta.data.begin() + from + len, out.data.begin());
  int ia = a.id;
  return push("slice", std::move(out), [ia, from, len](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (int j = 0; j < len; ++j) ga.data[from + j] += go.data[j];
  });
}

Var Graph::sum(Var a) {
  const Tensor& ta = val(a.id);
  double s = 0.0;
  for (double x : ta.data) s += x;
  int ia = a.id;
  return push("sum", Tensor::vec({s}), [ia](Graph& g, int self) {
    double go = g.grad(self).data[0];
    Tensor& ga = g.grad_buf(ia);
    for (double& x : ga.data) x += go;
  });
}

Var Graph::pick(Var a, int i) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 1, "pick", "expects rank 1, got " + ta.shape_str());
  require(i >= 0 && i < ta.shape[0], "pick", "index " + std::to_string(i) + " out of " + ta.shape_str());
  int ia = a.id;
  return push("pick", Tensor::vec({ta.data[i]}), [ia, i](Graph& g, int self) {
    g.grad_buf(ia).data[i] += g.grad(self).data[0];
  });
}

Var Graph::pick_rows(Var a, const std::vector<int>& ids) {
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, "pick_rows", "expects rank 2, got " + ta.shape_str());
  require(static_cast<int>(ids.size()) == ta.shape[0], "pick_rows",
          "need one index per row of " + ta.shape_str() + ", got " + std::to_string(ids.size()));
  Tensor out = Tensor::zeros({ta.shape[0]});
  for (int t = 0; t < ta.shape[0]; ++t) {
    require(ids[t] >= 0 && ids[t] < ta.shape[1], "pick_rows", "index " + std::to_string(ids[t]) + " out of " + ta.shape_str());
    out.data[t] = ta.at(t, ids[t]);
  }
  int ia = a.id;
  return push("pick_rows", std::move(out), [ia, ids](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_buf(ia);
    for (std::size_t t = 0; t < ids.size(); ++t) ga.at(static_cast<int>(t), ids[t]) += go.data[t];
  });
}

Var Graph::embed(Var table, int id) {
  const Tensor& tt = val(table.id);
  require(tt.rank() == 2, "embed", "table must be rank 2, got " + tt.shape_str());
  require(id >= 0 && id < tt.shape[0], "embed", "token id " + std::to_string(id) + " out of " + tt.shape_str());
  Tensor out = Tensor::zeros({tt.shape[1]});
  std::copy(tt.row_ptr(id), tt.row_ptr(id) + tt.shape[1], out.data.begin());
  int it = table.id, n = tt.shape[1];
  return push("embed", std::move(out), [it, id, n](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    double* trow = g.grad_buf(it).row_ptr(id);
    for (int j = 0; j < n; ++j) trow[j] += go.data[j];
  });
}

Var Graph::embed_rows(Var table, const std::vector<int>& ids) {
  const Tensor& tt = val(table.id);
  require(tt.rank() == 2, "embed_rows", "table must be rank 2, got " + tt.shape_str());
  require(!ids.empty(), "embed_rows", "empty id list");
  int n = tt.shape[1];
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), n});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    require(ids[t] >= 0 && ids[t] < tt.shape[0], "embed_rows", "token id " + std::to_string(ids[t]) + " out of " + tt.shape_str());
    std::copy(tt.row_ptr(ids[t]), tt.row_ptr(ids[t]) + n, out.row_ptr(static_cast<int>(t)));
  }
  int it = table.id;
  return push("embed_rows", std::move(out), [it, ids, n](Graph& g, int self) {
    const Tensor& go = g.grad(self);
    Tensor& gt = g.grad_buf(it);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const double* grow = go.row_ptr(static_cast<int>(t));
      double* trow = gt.row_ptr(ids[t]);
      for (int j = 0; j < n; ++j) trow[j] += grow[j];
    }
  });
}

Var Graph::kl_row(const Tensor& ref, Var pred, double floor) {
  const Tensor& tp = val(pred.id);
  require(tp.rank() == 1 && ref.rank() == 1, "kl_row", "expects rank-1 rows");
  require(ref.shape[0] == tp.shape[0], "kl_row", "length mismatch " + ref.shape_str() + " vs " + tp.shape_str());
  double kl = 0.0;
  for (int i = 0; i < ref.shape[0]; ++i) {
    double r = ref.data[i];
    if (r <= 0.0) continue;  // 0 * log 0 := 0
    kl += r * (std::log(r) - std::log(std::max(tp.data[i], floor)));
  }
  int ip = pred.id;
  return push("kl_row", Tensor::vec({kl}), [ip, ref, floor](Graph& g, int self) {
    double go = g.grad(self).data[0];
    const Tensor& vp = g.val(ip);
    Tensor& gp = g.grad_buf(ip);
    for (int i = 0; i < ref.shape[0]; ++i) {
      if (ref.data[i] <= 0.0 || vp.data[i] <= floor) continue;
      gp.data[i] -= go * ref.data[i] / vp.data[i];
    }
  });
}

std::pair<Var, Var> Graph::lstm_cell(Var x, Var h, Var c, Var wih, Var whh, Var b) {
  int hidden = val(h.id).shape[0];
  require(val(b.id).shape[0] == 4 * hidden, "lstm_cell",
          "bias " + val(b.id).shape_str() + " vs 4*hidden " + std::to_string(4 * hidden));
  Var z = add(linear(x, wih, b), linear(h, whh));
  Var in_g = sigmoid(slice(z, 0, hidden));
  Var forget_g = sigmoid(slice(z, hidden, hidden));
  Var cand = tanh_(slice(z, 2 * hidden, hidden));
  Var out_g = sigmoid(slice(z, 3 * hidden, hidden));
  Var c_next = add(mul(forget_g, c), mul(in_g, cand));
  Var h_next = mul(out_g, tanh_(c_next));
  return {h_next, c_next};
}

void Graph::backward(Var loss, Gradients& out) {
  if (!loss.valid() || loss.id >= static_cast<int>(nodes_.size())) op_fail("backward", "invalid loss var");
  if (nodes_[loss.id].val.numel() != 1) op_fail("backward", "loss must be scalar, got " + nodes_[loss.id].val.shape_str());
  grads_.assign(nodes_.size(), Tensor{});
  grad_buf(loss.id).data[0] = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (!has_grad(i) || !nodes_[i].back) continue;
    nodes_[i].back(*this, i);
  }
  // Every parameter the graph saw gets an entry; untouched ones stay zero.
  for (const auto& [id, path] : param_leaves_) {
    Tensor& dst = out[path];
    if (dst.data.empty()) dst = Tensor::zeros(nodes_[id].val.shape);
    if (!has_grad(id)) continue;
    const Tensor& g = grads_[id];
    if (!g.all_finite()) op_fail("backward", "NaN gradient for parameter " + path);
    for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
  }
  grads_.clear();
}

}  // namespace seqlab::diffcore

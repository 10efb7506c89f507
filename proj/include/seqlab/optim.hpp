#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "seqlab/graph.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab::diffcore {

// Named parameter set. std::map iteration is lexicographic by path, which
// checkpointing, Adam and the gradient tests all rely on.
class ParamStore {
 public:
  void add(const std::string& path, Tensor t);
  const Tensor& at(const std::string& path) const;
  Tensor& at_mut(const std::string& path);
  bool contains(const std::string& path) const { return params_.count(path) != 0; }
  std::size_t size() const { return params_.size(); }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

Gradients zero_gradients(const ParamStore& store);
void accumulate(Gradients& into, const Gradients& from);
void scale_gradients(Gradients& g, double s);
double global_norm(const Gradients& g);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm; otherwise leaves them unchanged. Idempotent.
void clip_grad_norm(Gradients& g, double max_norm);

struct AdamState {
  std::map<std::string, Tensor> m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction; eps sits inside the denominator after
// the square root.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr);

enum class ScheduleKind { constant, halved_on_finetune, inverse_sqrt_warmup };

struct LRSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base = 1e-3;
  long warmup = 1;  // inverse_sqrt_warmup only
};

double lr_at(const LRSchedule& s, long step);

ScheduleKind parse_schedule(const std::string& name);
std::string schedule_name(ScheduleKind k);

}  // namespace seqlab::diffcore

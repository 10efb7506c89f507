#include "seqlab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace seqlab::diffcore {

void ParamStore::add(const std::string& path, Tensor t) {
  if (params_.count(path)) throw std::runtime_error("ParamStore: duplicate parameter path " + path);
  if (!t.all_finite()) throw std::runtime_error("ParamStore: non-finite init for " + path);
  params_.emplace(path, std::move(t));
}

const Tensor& ParamStore::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::runtime_error("ParamStore: unknown parameter " + path);
  return it->second;
}

Tensor& ParamStore::at_mut(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::runtime_error("ParamStore: unknown parameter " + path);
  return it->second;
}

Gradients zero_gradients(const ParamStore& store) {
  Gradients g;
  for (const auto& [path, t] : store) g.emplace(path, Tensor::zeros(t.shape));
  return g;
}

void accumulate(Gradients& into, const Gradients& from) {
  for (const auto& [path, t] : from) {
    Tensor& dst = into[path];
    if (dst.data.empty()) dst = Tensor::zeros(t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) dst.data[i] += t.data[i];
  }
}

void scale_gradients(Gradients& g, double s) {
  for (auto& [path, t] : g)
    for (double& x : t.data) x *= s;
}

double global_norm(const Gradients& g) {
  double sq = 0.0;
  for (const auto& [path, t] : g)
    for (double x : t.data) sq += x * x;
  return std::sqrt(sq);
}

void clip_grad_norm(Gradients& g, double max_norm) {
  if (!(max_norm > 0.0)) throw std::runtime_error("clip_grad_norm: max_norm must be > 0");
  double norm = global_norm(g);
  if (norm <= max_norm) return;
  scale_gradients(g, max_norm / norm);
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr) {
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [path, theta] : params) {
    auto git = grads.find(path);
    if (git == grads.end()) throw std::runtime_error("adam_step: missing gradient for " + path);
    const Tensor& g = git->second;
    if (!g.same_shape(theta)) throw std::runtime_error("adam_step: gradient shape mismatch for " + path);
    Tensor& m = state.m[path];
    Tensor& v = state.v[path];
    if (m.data.empty()) m = Tensor::zeros(theta.shape);
    if (v.data.empty()) v = Tensor::zeros(theta.shape);
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      theta.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_at(const LRSchedule& s, long step) {
  if (step < 1) throw std::runtime_error("lr_at: step must be >= 1");
  switch (s.kind) {
    case ScheduleKind::constant:
      return s.base;
    case ScheduleKind::halved_on_finetune:
      return 0.5 * s.base;
    case ScheduleKind::inverse_sqrt_warmup: {
      if (s.warmup < 1) throw std::runtime_error("lr_at: warmup must be >= 1");
      double st = static_cast<double>(step), w = static_cast<double>(s.warmup);
      return step <= s.warmup ? s.base * st / w : s.base * std::sqrt(w / st);
    }
  }
  throw std::runtime_error("lr_at: unknown schedule kind");
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "halved-on-finetune") return ScheduleKind::halved_on_finetune;
  if (name == "inverse-sqrt-warmup") return ScheduleKind::inverse_sqrt_warmup;
  throw std::runtime_error("unknown lr schedule: " + name);
}

std::string schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::halved_on_finetune: return "halved-on-finetune";
    case ScheduleKind::inverse_sqrt_warmup: return "inverse-sqrt-warmup";
  }
  return "constant";
}

}  // namespace seqlab::diffcore

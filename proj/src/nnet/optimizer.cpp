#include <cmath>

#include "scdc/error.hpp"
#include "scdc/nnet.hpp"

namespace scdc::nn {

void optimizer_step(std::span<Parameter* const> params, OptimizerState& state, const OptimizerConfig& config) {
  for (const Parameter* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw ShapeError("optimizer_step: gradient shape mismatch for '" + p->name + "'");
    }
    if (!p->grad.allFinite()) throw TrainingDivergence("optimizer_step: non-finite gradient for '" + p->name + "'");
  }
  if (state.first.size() != params.size()) {
    state.first.clear();
    state.second.clear();
    for (const Parameter* p : params) {
      state.first.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
      if (config.kind == OptimizerKind::kAdam) state.second.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
    }
    state.steps = 0;
  }
  ++state.steps;
  const double sign = config.ascent ? 1.0 : -1.0;

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& v = state.first[k];
    if (config.kind == OptimizerKind::kSgdMomentum) {
      v = config.momentum * v + p.grad;
      p.value += sign * config.learning_rate * v;
    } else {
      Tensor& s = state.second[k];
      v = config.beta1 * v + (1.0 - config.beta1) * p.grad;
      s = config.beta2 * s + (1.0 - config.beta2) * p.grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.steps));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.steps));
      p.value.array() += sign * config.learning_rate * (v.array() / c1) / ((s.array() / c2).sqrt() + config.epsilon);
    }
  }
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd" || name == "momentum") return OptimizerKind::kSgdMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw InvalidParameter("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

}  // namespace scdc::nn

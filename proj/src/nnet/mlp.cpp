#include <cmath>
#include <string>

#include "scdc/error.hpp"
#include "scdc/nnet.hpp"

namespace scdc::nn {

namespace {

Parameter uniform_weight(const std::string& name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
  return Parameter(name, std::move(w));
}

Parameter zero_bias(const std::string& name, std::size_t width) {
  return Parameter(name, Tensor::Zero(1, static_cast<Eigen::Index>(width)));
}

}  // namespace

Mlp::Mlp(MlpSpec spec, std::mt19937_64& rng) : spec_(std::move(spec)) {
  if (spec_.input == 0) throw ShapeError("Mlp: input width must be positive");
  if (spec_.heads.empty()) throw ShapeError("Mlp: at least one output head is required");
  std::size_t fan_in = spec_.input;
  for (std::size_t l = 0; l < spec_.hidden.size(); ++l) {
    const std::size_t width = spec_.hidden[l];
    if (width == 0) throw ShapeError("Mlp: hidden width must be positive");
    layers_w_.push_back(uniform_weight("hidden" + std::to_string(l) + ".w", fan_in, width, rng));
    layers_b_.push_back(zero_bias("hidden" + std::to_string(l) + ".b", width));
    fan_in = width;
  }
  for (const HeadSpec& h : spec_.heads) {
    if (h.width == 0) throw ShapeError("Mlp: head '" + h.name + "' has zero width");
    heads_w_.push_back(uniform_weight(h.name + ".w", fan_in, h.width, rng));
    heads_b_.push_back(zero_bias(h.name + ".b", h.width));
    if (spec_.skip) skips_w_.push_back(uniform_weight(h.name + ".skip", spec_.input, h.width, rng));
  }
}

std::map<std::string, Var> Mlp::forward(Tape& tape, const Var& input) {
  if (input.cols() != static_cast<Eigen::Index>(spec_.input)) {
    throw ShapeError("Mlp::forward: input has " + std::to_string(input.cols()) + " columns, expected " +
                     std::to_string(spec_.input));
  }
  Var h = input;
  for (std::size_t l = 0; l < layers_w_.size(); ++l) {
    h = relu(add(matmul(h, tape.parameter(layers_w_[l])), tape.parameter(layers_b_[l])));
  }
  std::map<std::string, Var> out;
  for (std::size_t k = 0; k < spec_.heads.size(); ++k) {
    Var y = add(matmul(h, tape.parameter(heads_w_[k])), tape.parameter(heads_b_[k]));
    if (spec_.skip) y = add(y, matmul(input, tape.parameter(skips_w_[k])));
    if (spec_.heads[k].clamp) y = clamp(y, spec_.heads[k].clamp->first, spec_.heads[k].clamp->second);
    out.emplace(spec_.heads[k].name, y);
  }
  return out;
}

std::map<std::string, Tensor> Mlp::forward(const Tensor& input) {
  Tape tape;
  std::map<std::string, Tensor> out;
  for (auto& [name, v] : forward(tape, tape.constant(input))) out.emplace(name, v.value());
  return out;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < layers_w_.size(); ++l) {
    out.push_back(&layers_w_[l]);
    out.push_back(&layers_b_[l]);
  }
  for (std::size_t k = 0; k < heads_w_.size(); ++k) {
    out.push_back(&heads_w_[k]);
    out.push_back(&heads_b_[k]);
  }
  for (Parameter& p : skips_w_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<Mlp*>(this)->parameters()) out.push_back(p);
  return out;
}

void Mlp::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::size_t Mlp::num_weights() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

}  // namespace scdc::nn

#pragma once

// Tape-level local message passing shared by the value API, the objectives
// and the trainer.

#include <cstddef>
#include <vector>

#include "scdc/vmp.hpp"

namespace scdc::vmp::detail {

struct GlobalVars {
  nn::Var log_pi;  // 1 x K
  nn::Var A;       // K x d
  nn::Var At;      // d x K
  nn::Var B;       // K x d*d
  nn::Var Bt;      // d*d x K
  nn::Var c;       // 1 x K

  GlobalVars(nn::Tape& tape, const GlobalExpectations& e);
};

struct Message {
  std::size_t from = 0;
  double weight = 0.0;
};

/// messages[i] lists every annotation touching i, seen from i.
std::vector<std::vector<Message>> incoming_messages(const LocalProblem& problem, const WorkerAccuracy& workers);

// eta_x = q A + h_r, and J = q B + diag(jdiag_r).
nn::Var x_natural_h(const GlobalVars& g, const nn::Var& q, const nn::Var& h_r);
nn::Var x_natural_J(const GlobalVars& g, const nn::Var& q, const nn::Var& jdiag_r);
// eta_z = E ln pi + <E eta(mu, Sigma), (E t(x), 1)> + sum_j w_ij q_j.
nn::Var z_natural(const GlobalVars& g, const GaussVars& x, const std::vector<nn::Var>& q,
                  const std::vector<Message>& messages);

/// KL(q(z)||p(z|pi)) averaged over q(pi).
nn::Var local_kl_z(const GlobalVars& g, const nn::Var& logits);
/// E_{q(z) q(mu,Sigma)} KL(q(x) || p(x | mu_z, Sigma_z)).
nn::Var local_kl_x(const GlobalVars& g, const nn::Var& q, const nn::Var& h, const nn::Var& J, const GaussVars& x);

/// <h_r, E x> + <diag(jdiag_r), E x x^T>.
nn::Var linear_observation(const nn::Var& h_r, const nn::Var& jdiag_r, const GaussVars& x);

/// Sum over annotations of w q_i.q_j + offset.
nn::Var relational_term(nn::Tape& tape, const LocalProblem& problem, const WorkerAccuracy& workers,
                        const std::vector<nn::Var>& q);

class Engine {
 public:
  Engine(nn::Tape& tape, const GlobalExpectations& e, const LocalProblem& problem, const WorkerAccuracy& workers);

  /// Per-item potential rows (1 x d each).
  void set_potentials(std::vector<nn::Var> h, std::vector<nn::Var> jdiag);
  /// q(z_i) = softmax(E ln pi), or softmax(init.z[i]) when given.
  void initialize(const LocalVariational* init);
  void update_x(std::size_t i);
  void update_z(std::size_t i);
  /// Returns the number of sweeps performed; last_change() reports the final
  /// max-abs change.
  std::size_t run(std::size_t sweeps, double tolerance);
  double last_change() const { return last_change_; }

  LocalVariational snapshot() const;

  nn::Tape& tape() const { return *tape_; }
  const GlobalVars& globals() const { return globals_; }
  std::size_t size() const { return q_.size(); }

  std::vector<nn::Var> q_;
  std::vector<nn::Var> logits_;
  std::vector<nn::Var> h_;
  std::vector<nn::Var> J_;
  std::vector<GaussVars> x_;
  std::vector<nn::Var> h_r_;
  std::vector<nn::Var> jdiag_r_;

 private:
  nn::Tape* tape_;
  GlobalVars globals_;
  std::vector<std::vector<Message>> messages_;
  double last_change_ = 0.0;
  bool has_init_ = false;
};

}  // namespace scdc::vmp::detail

#include <cmath>

#include "engine.hpp"
#include "scdc/error.hpp"

namespace scdc::vmp {

using nn::Tape;
using nn::Tensor;
using nn::Var;
using Eigen::Index;

namespace {

Tensor row_tensor(const Eigen::VectorXd& v) { return Tensor(v.transpose()); }

Tensor flat_tensor(const Eigen::MatrixXd& m) {
  Tensor t(1, m.size());
  for (Index a = 0; a < m.rows(); ++a) {
    for (Index b = 0; b < m.cols(); ++b) t(0, a * m.cols() + b) = m(a, b);
  }
  return t;
}

// Locals placed on a tape as constants.
struct LocalVars {
  std::vector<Var> logits, q, h, J;
  std::vector<GaussVars> x;

  LocalVars(Tape& tape, const LocalVariational& locals) {
    for (std::size_t i = 0; i < locals.size(); ++i) {
      logits.push_back(tape.constant(row_tensor(locals.z[i].eta)));
      q.push_back(nn::softmax_rows(logits.back()));
      h.push_back(tape.constant(row_tensor(locals.x[i].h)));
      J.push_back(tape.constant(flat_tensor(locals.x[i].J)));
      x.push_back(gauss_vars(h.back(), J.back()));
    }
  }
};

double dirichlet_kl(const expfam::DirichletNat& q, const expfam::DirichletNat& p) {
  const Eigen::VectorXd et = expfam::dirichlet_expected_stats(q);
  return (q.eta - p.eta).dot(et) - (expfam::log_partition(q) - expfam::log_partition(p));
}

double niw_kl(const expfam::NiwNat& q, const expfam::NiwNat& p) {
  const expfam::NiwExpectedStats et = expfam::niw_expected_stats(q);
  const double inner = (q.h1 - p.h1).dot(et.prec_mean) + (q.h2 - p.h2).cwiseProduct(et.neg_half_prec).sum() +
                       (q.h3 - p.h3) * et.neg_half_quad + (q.h4 - p.h4) * et.neg_half_logdet;
  return inner - (expfam::log_partition(q) - expfam::log_partition(p));
}

double beta_kl(const expfam::BetaNat& q, const expfam::BetaNat& p) {
  const Eigen::Vector2d et = expfam::beta_expected_stats(q);
  return (q.eta - p.eta).dot(et) - (expfam::log_partition(q) - expfam::log_partition(p));
}

// Relational term minus the local KL, shared by both objective variants.
double common_terms(const GlobalVariational& globals, const GlobalVariational& prior, const LocalVariational& locals,
                    const LocalProblem& problem, const WorkerAccuracy& workers) {
  if (locals.size() != problem.size()) throw ShapeError("final_objective: locals do not match the problem");
  const GlobalExpectations e = GlobalExpectations::compute(globals);
  Tape tape;
  LocalVars lv(tape, locals);
  const double rel = detail::relational_term(tape, problem, workers, lv.q).scalar();
  return rel - local_kl(e, locals) - global_kl(globals, prior);
}

}  // namespace

std::vector<LocalKl> local_kl_terms(const GlobalExpectations& e, const LocalVariational& locals) {
  Tape tape;
  detail::GlobalVars g(tape, e);
  LocalVars lv(tape, locals);
  std::vector<LocalKl> out;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    out.push_back({detail::local_kl_z(g, lv.logits[i]).scalar(),
                   detail::local_kl_x(g, lv.q[i], lv.h[i], lv.J[i], lv.x[i]).scalar()});
  }
  return out;
}

double local_kl(const GlobalExpectations& e, const LocalVariational& locals) {
  double total = 0.0;
  for (const LocalKl& k : local_kl_terms(e, locals)) total += k.total();
  return total;
}

double global_kl(const GlobalVariational& q, const GlobalVariational& prior) {
  if (q.K() != prior.K() || q.M() != prior.M()) throw ShapeError("global_kl: mismatched parameter sets");
  double kl = dirichlet_kl(q.pi, prior.pi);
  for (std::size_t k = 0; k < q.K(); ++k) kl += niw_kl(q.components[k], prior.components[k]);
  for (std::size_t m = 0; m < q.M(); ++m) {
    kl += beta_kl(q.workers[m].alpha, prior.workers[m].alpha);
    kl += beta_kl(q.workers[m].beta, prior.workers[m].beta);
  }
  return kl;
}

double final_objective(const GlobalVariational& globals, const GlobalVariational& prior, const LocalVariational& locals,
                       const LocalProblem& problem, const WorkerAccuracy& workers,
                       const RecognitionPotential& observation) {
  if (observation.size() != locals.size()) throw ShapeError("final_objective: one observation row per item required");
  Tape tape;
  LocalVars lv(tape, locals);
  double obs = 0.0;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    const auto r = static_cast<Index>(i);
    obs += detail::linear_observation(tape.constant(Tensor(observation.h.row(r))),
                                      tape.constant(Tensor(observation.jdiag.row(r))), lv.x[i])
               .scalar();
  }
  return obs + common_terms(globals, prior, locals, problem, workers);
}

double final_objective(const GlobalVariational& globals, const GlobalVariational& prior, const LocalVariational& locals,
                       const LocalProblem& problem, const WorkerAccuracy& workers, nn::Mlp& decoder,
                       const Eigen::MatrixXd& observations, const std::vector<Eigen::MatrixXd>& samples) {
  if (static_cast<std::size_t>(observations.rows()) != locals.size() || samples.size() != locals.size()) {
    throw ShapeError("final_objective: observations and samples must have one entry per item");
  }
  double obs = 0.0;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    const Eigen::MatrixXd& s = samples[i];
    if (s.rows() == 0) throw ShapeError("final_objective: item without samples");
    Tape tape;
    auto heads = decoder.forward(tape, tape.constant(Tensor(s)));
    const Tensor o = Tensor(observations.row(static_cast<Index>(i))).replicate(s.rows(), 1);
    const double ll = nn::gaussian_diag_log_density(tape.constant(o), heads.at("mean"), heads.at("log_var")).scalar();
    obs += ll / static_cast<double>(s.rows());
  }
  if (!std::isfinite(obs)) throw TrainingDivergence("final_objective: non-finite decoder likelihood");
  return obs + common_terms(globals, prior, locals, problem, workers);
}

double surrogate_objective(const GlobalVariational& globals, const GlobalVariational& prior,
                           const LocalVariational& locals, const LocalProblem& problem, const WorkerAccuracy& workers,
                           const RecognitionPotential& potential) {
  return final_objective(globals, prior, locals, problem, workers, potential);
}

}  // namespace scdc::vmp

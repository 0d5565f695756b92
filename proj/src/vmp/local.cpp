#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

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

Eigen::MatrixXd unflat(const Tensor& t, Index d) {
  Eigen::MatrixXd m(d, d);
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) m(a, b) = t(0, a * d + b);
  }
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

// ------------------------------------------------------------------ detail

namespace detail {

GlobalVars::GlobalVars(Tape& tape, const GlobalExpectations& e)
    : log_pi(tape.constant(row_tensor(e.log_pi))),
      A(tape.constant(Tensor(e.A))),
      At(tape.constant(Tensor(e.A.transpose()))),
      B(tape.constant(Tensor(e.B))),
      Bt(tape.constant(Tensor(e.B.transpose()))),
      c(tape.constant(row_tensor(e.c))) {}

std::vector<std::vector<Message>> incoming_messages(const LocalProblem& problem, const WorkerAccuracy& workers) {
  std::vector<std::vector<Message>> out(problem.size());
  for (const Annotation& a : problem.annotations) {
    const double w = message_weight(a.label, workers.logs(a.m));
    out[a.i].push_back({a.j, w});
    out[a.j].push_back({a.i, w});
  }
  return out;
}

Var x_natural_h(const GlobalVars& g, const Var& q, const Var& h_r) { return nn::add(nn::matmul(q, g.A), h_r); }

Var x_natural_J(const GlobalVars& g, const Var& q, const Var& jdiag_r) {
  return nn::add(nn::matmul(q, g.B), nn::diag_embed(jdiag_r));
}

Var z_natural(const GlobalVars& g, const GaussVars& x, const std::vector<Var>& q, const std::vector<Message>& messages) {
  Var eta = nn::add(nn::add(g.log_pi, nn::matmul(x.mean, g.At)), nn::add(nn::matmul(x.second, g.Bt), g.c));
  for (const Message& m : messages) eta = nn::add(eta, nn::scale(q[m.from], m.weight));
  return eta;
}

Var local_kl_z(const GlobalVars& g, const Var& logits) {
  Var q = nn::softmax_rows(logits);
  return nn::dot(q, nn::sub(nn::log_softmax_rows(logits), g.log_pi));
}

Var local_kl_x(const GlobalVars& g, const Var& q, const Var& h, const Var& J, const GaussVars& x) {
  Var dh = nn::sub(h, nn::matmul(q, g.A));
  Var dJ = nn::sub(J, nn::matmul(q, g.B));
  Var inner = nn::add(nn::dot(dh, x.mean), nn::dot(dJ, x.second));
  return nn::sub(nn::sub(inner, gauss_log_partition(h, x)), nn::dot(q, g.c));
}

Var linear_observation(const Var& h_r, const Var& jdiag_r, const GaussVars& x) {
  return nn::add(nn::dot(h_r, x.mean), nn::dot(nn::diag_embed(jdiag_r), x.second));
}

Var relational_term(Tape& tape, const LocalProblem& problem, const WorkerAccuracy& workers, const std::vector<Var>& q) {
  Var total = tape.constant(Tensor::Zero(1, 1));
  for (const Annotation& a : problem.annotations) {
    const WorkerLogs& w = workers.logs(a.m);
    Var term = nn::add_const(nn::scale(nn::dot(q[a.i], q[a.j]), message_weight(a.label, w)),
                             annotation_offset(a.label, w));
    total = nn::add(total, term);
  }
  return total;
}

Engine::Engine(Tape& tape, const GlobalExpectations& e, const LocalProblem& problem, const WorkerAccuracy& workers)
    : tape_(&tape), globals_(tape, e), messages_(incoming_messages(problem, workers)) {
  const std::size_t n = problem.size();
  q_.resize(n);
  logits_.resize(n);
  h_.resize(n);
  J_.resize(n);
  x_.resize(n);
}

void Engine::set_potentials(std::vector<Var> h, std::vector<Var> jdiag) {
  if (h.size() != size() || jdiag.size() != size()) throw ShapeError("Engine: one potential row per item required");
  h_r_ = std::move(h);
  jdiag_r_ = std::move(jdiag);
}

void Engine::initialize(const LocalVariational* init) {
  has_init_ = init != nullptr;
  for (std::size_t i = 0; i < size(); ++i) {
    if (init != nullptr) {
      logits_[i] = tape_->constant(row_tensor(init->z[i].eta));
      h_[i] = tape_->constant(row_tensor(init->x[i].h));
      J_[i] = tape_->constant(flat_tensor(init->x[i].J));
    } else {
      logits_[i] = globals_.log_pi;
    }
    q_[i] = nn::softmax_rows(logits_[i]);
  }
}

void Engine::update_x(std::size_t i) {
  h_[i] = x_natural_h(globals_, q_[i], h_r_[i]);
  J_[i] = x_natural_J(globals_, q_[i], jdiag_r_[i]);
  x_[i] = gauss_vars(h_[i], J_[i]);
}

void Engine::update_z(std::size_t i) {
  logits_[i] = z_natural(globals_, x_[i], q_, messages_[i]);
  q_[i] = nn::softmax_rows(logits_[i]);
}

std::size_t Engine::run(std::size_t sweeps, double tolerance) {
  if (sweeps == 0) throw InvalidParameter("local message passing needs at least one sweep");
  if (h_r_.size() != size()) throw ContractError("Engine::run before set_potentials");
  const std::size_t n = size();
  bool have_prev = has_init_;
  std::size_t done = 0;
  for (std::size_t s = 0; s < sweeps; ++s) {
    std::vector<Tensor> prev_q(n), prev_h(n), prev_J(n);
    for (std::size_t i = 0; i < n; ++i) {
      prev_q[i] = q_[i].value();
      if (have_prev) {
        prev_h[i] = h_[i].value();
        prev_J[i] = J_[i].value();
      }
    }
    for (std::size_t i = 0; i < n; ++i) update_x(i);
    for (std::size_t i = 0; i < n; ++i) update_z(i);
    ++done;
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      change = std::max(change, max_abs_diff(q_[i].value(), prev_q[i]));
      if (have_prev) {
        change = std::max(change, max_abs_diff(h_[i].value(), prev_h[i]));
        change = std::max(change, max_abs_diff(J_[i].value(), prev_J[i]));
      } else {
        change = std::numeric_limits<double>::infinity();
      }
    }
    last_change_ = change;
    have_prev = true;
    if (change < tolerance) break;
  }
  return done;
}

LocalVariational Engine::snapshot() const {
  LocalVariational out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.z.push_back({logits_[i].value().row(0).transpose()});
    const Index d = h_[i].cols();
    out.x.push_back({h_[i].value().row(0).transpose(), unflat(J_[i].value(), d)});
  }
  return out;
}

}  // namespace detail

// -------------------------------------------------------------- public API

RecognitionPotential RecognitionPotential::rows(std::span<const std::size_t> idx) const {
  RecognitionPotential out;
  out.h.resize(static_cast<Index>(idx.size()), h.cols());
  out.jdiag.resize(static_cast<Index>(idx.size()), jdiag.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.h.row(static_cast<Index>(r)) = h.row(static_cast<Index>(idx[r]));
    out.jdiag.row(static_cast<Index>(r)) = jdiag.row(static_cast<Index>(idx[r]));
  }
  return out;
}

nn::MlpSpec recognition_spec(std::size_t input, std::size_t d, std::vector<std::size_t> hidden) {
  return {input, std::move(hidden), {{"h", d, std::nullopt}, {"j", d, std::nullopt}}};
}

PotentialVars recognition_potential(Tape& tape, nn::Mlp& net, const Var& o) {
  auto heads = net.forward(tape, o);
  Var h = heads.at("h");
  Var jdiag = nn::add_const(nn::neg(nn::softplus(heads.at("j"))), -kPotentialFloor);
  if (!h.value().allFinite() || !jdiag.value().allFinite()) {
    throw TrainingDivergence("recognition network produced a non-finite potential");
  }
  return {h, jdiag};
}

RecognitionPotential recognition_potential(nn::Mlp& net, const Eigen::MatrixXd& o) {
  Tape tape;
  PotentialVars p = recognition_potential(tape, net, tape.constant(Tensor(o)));
  return {Eigen::MatrixXd(p.h.value()), Eigen::MatrixXd(p.jdiag.value())};
}

GlobalExpectations GlobalExpectations::compute(const GlobalVariational& g) {
  GlobalExpectations e;
  const auto K = static_cast<Index>(g.K()), d = static_cast<Index>(g.d());
  e.log_pi = expfam::dirichlet_expected_stats(g.pi);
  e.A.resize(K, d);
  e.B.resize(K, d * d);
  e.c.resize(K);
  for (Index k = 0; k < K; ++k) {
    const expfam::NiwExpectedStats s = expfam::niw_expected_stats(g.components[static_cast<std::size_t>(k)]);
    e.A.row(k) = s.prec_mean.transpose();
    for (Index a = 0; a < d; ++a) {
      for (Index b = 0; b < d; ++b) e.B(k, a * d + b) = s.neg_half_prec(a, b);
    }
    e.c[k] = s.neg_half_quad + s.neg_half_logdet;
  }
  return e;
}

Eigen::MatrixXd LocalVariational::responsibilities() const {
  if (z.empty()) return {};
  Eigen::MatrixXd q(static_cast<Index>(z.size()), z.front().eta.size());
  for (std::size_t i = 0; i < z.size(); ++i) q.row(static_cast<Index>(i)) = expfam::categorical_expected_stats(z[i]).transpose();
  return q;
}

std::vector<GaussianStats> LocalVariational::x_stats() const {
  std::vector<GaussianStats> out;
  for (const auto& p : x) {
    const expfam::GaussianMoments m = expfam::gaussian_nat_to_moment(p);
    out.push_back({m.mean, m.cov + m.mean * m.mean.transpose()});
  }
  return out;
}

LocalProblem LocalProblem::build(std::span<const std::size_t> items, std::span<const Annotation> annotations) {
  LocalProblem p;
  std::unordered_map<std::size_t, std::size_t> pos;
  auto local = [&](std::size_t global) {
    auto [it, inserted] = pos.emplace(global, p.items.size());
    if (inserted) p.items.push_back(global);
    return it->second;
  };
  for (std::size_t i : items) {
    if (pos.count(i)) throw InvalidParameter("LocalProblem: duplicate item " + std::to_string(i));
    local(i);
  }
  for (const Annotation& a : annotations) {
    const std::size_t li = local(a.i), lj = local(a.j);
    p.annotations.push_back({li, lj, a.m, a.label});
  }
  return p;
}

LocalProblem LocalProblem::all(std::size_t n, const AnnotationStore& store) {
  LocalProblem p;
  p.items.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.items[i] = i;
  p.annotations = store.triples();
  return p;
}

namespace {

struct ValueEngine {
  Tape tape;
  detail::Engine engine;

  ValueEngine(const GlobalExpectations& e, const LocalProblem& problem, const WorkerAccuracy& workers,
              const RecognitionPotential& potential)
      : engine(tape, e, problem, workers) {
    if (potential.size() != problem.size()) throw ShapeError("one recognition potential per local item required");
    std::vector<Var> h, jd;
    for (std::size_t i = 0; i < problem.size(); ++i) {
      h.push_back(tape.constant(Tensor(potential.h.row(static_cast<Index>(i)))));
      jd.push_back(tape.constant(Tensor(potential.jdiag.row(static_cast<Index>(i)))));
    }
    engine.set_potentials(std::move(h), std::move(jd));
  }
};

}  // namespace

expfam::GaussianNat update_local_x(std::size_t i, const LocalVariational& locals, const GlobalExpectations& e,
                                   const RecognitionPotential& potential) {
  Tape tape;
  detail::GlobalVars g(tape, e);
  Var q = tape.constant(row_tensor(expfam::categorical_expected_stats(locals.z.at(i))));
  const auto row = static_cast<Index>(i);
  Var h = detail::x_natural_h(g, q, tape.constant(Tensor(potential.h.row(row))));
  Var J = detail::x_natural_J(g, q, tape.constant(Tensor(potential.jdiag.row(row))));
  const auto d = static_cast<Index>(e.d());
  expfam::GaussianNat out{h.value().row(0).transpose(), unflat(J.value(), d)};
  try {
    expfam::gaussian_nat_to_moment(out);
  } catch (const LinAlgError&) {
    throw LinAlgError("update_local_x: precision of item " + std::to_string(i) + " is not negative definite");
  }
  return out;
}

expfam::CategoricalNat update_local_z(std::size_t i, const LocalVariational& locals, const GlobalExpectations& e,
                                      const LocalProblem& problem, const WorkerAccuracy& workers) {
  Tape tape;
  detail::GlobalVars g(tape, e);
  std::vector<Var> q;
  for (const auto& z : locals.z) q.push_back(tape.constant(row_tensor(expfam::categorical_expected_stats(z))));
  const auto& xi = locals.x.at(i);
  GaussVars x = gauss_vars(tape.constant(row_tensor(xi.h)), tape.constant(flat_tensor(xi.J)));
  const auto messages = detail::incoming_messages(problem, workers);
  Var eta = detail::z_natural(g, x, q, messages.at(i));
  return {eta.value().row(0).transpose()};
}

LocalResult block_coordinate_local(const LocalProblem& problem, const RecognitionPotential& potential,
                                   const GlobalExpectations& e, const WorkerAccuracy& workers, std::size_t sweeps,
                                   double tolerance, const LocalVariational* init) {
  if (init != nullptr && init->size() != problem.size()) throw ShapeError("initial locals do not match the problem");
  ValueEngine v(e, problem, workers, potential);
  v.engine.initialize(init);
  LocalResult r;
  r.sweeps = v.engine.run(sweeps, tolerance);
  r.last_change = v.engine.last_change();
  r.locals = v.engine.snapshot();
  return r;
}

std::vector<int> predict_clusters(const Eigen::MatrixXd& responsibilities) {
  std::vector<int> out;
  for (Index i = 0; i < responsibilities.rows(); ++i) {
    Index k = 0;
    responsibilities.row(i).maxCoeff(&k);
    out.push_back(static_cast<int>(k));
  }
  return out;
}

}  // namespace scdc::vmp

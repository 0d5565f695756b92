#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "engine.hpp"
#include "scdc/error.hpp"
#include "scdc/metrics.hpp"

namespace scdc::vmp {

using nn::Tape;
using nn::Tensor;
using nn::Var;
using Eigen::Index;

namespace {

constexpr std::size_t kRestartSamples = 10;

nn::MlpSpec decoder_spec(std::size_t d, std::size_t output, std::vector<std::size_t> hidden,
                         std::pair<double, double> clamp) {
  return {d, std::move(hidden), {{"mean", output, std::nullopt}, {"log_var", output, clamp}}};
}

std::vector<nn::Parameter*> network_parameters(BayesModel& model) {
  std::vector<nn::Parameter*> params = model.recognition.parameters();
  for (nn::Parameter* p : model.decoder.parameters()) params.push_back(p);
  return params;
}

WorkerAccuracy worker_accuracy(const GlobalVariational& g) {
  return WorkerAccuracy::posterior(std::span<const WorkerBeta>(g.workers));
}

void check_config(const BayesConfig& c) {
  if (c.K < 1 || c.d < 1) throw InvalidParameter("K and d must be positive");
  if (c.prior.K != c.K || c.prior.d != c.d) throw InvalidParameter("prior dimensions do not match K and d");
  if (c.batch_size < 1) throw InvalidParameter("batch size must be at least 1");
  if (c.sweeps < 1) throw InvalidParameter("local sweeps must be at least 1");
  if (c.x_samples < 1) throw InvalidParameter("at least one x sample per item is required");
  if (c.global_step < 0.0 || c.global_step > 1.0) throw InvalidParameter("global step must lie in [0, 1]");
  if (c.restarts < 1) throw InvalidParameter("at least one restart is required");
  if (!(c.log_var_clamp.first < c.log_var_clamp.second)) throw InvalidParameter("empty log-variance clamp range");
}

GlobalVariational apply_with_backoff(const GlobalVariational& g, const GlobalNatGrad& grad, double step) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    try {
      return apply_natural_gradient(g, grad, step);
    } catch (const StepRejected&) {
      step *= 0.5;
    }
  }
  throw TrainingDivergence("natural-gradient step rejected even after shrinking");
}

}  // namespace

BayesModel init_bayes_model(std::size_t input_dim, std::size_t num_workers, const BayesConfig& config,
                            std::mt19937_64& rng) {
  check_config(config);
  BayesModel m;
  m.prior = config.prior;
  m.worker_prior = config.worker_prior;
  m.globals = init_global(config.prior, num_workers, config.init, rng);
  nn::MlpSpec rs = recognition_spec(input_dim, config.d, config.hidden);
  nn::MlpSpec ds = decoder_spec(config.d, input_dim, config.hidden, config.log_var_clamp);
  rs.skip = ds.skip = config.skip;
  m.recognition = nn::Mlp(rs, rng);
  m.decoder = nn::Mlp(ds, rng);
  return m;
}

IterationResult bayes_iteration(Tape& tape, BayesModel& model, const Eigen::MatrixXd& observations,
                                std::span<const std::size_t> batch, const AnnotationBatch& annotations,
                                std::size_t num_items, const BayesConfig& config, std::mt19937_64& rng,
                                double kl_weight) {
  if (batch.empty()) throw InvalidParameter("bayes_iteration: empty data batch");
  const LocalProblem problem = LocalProblem::build(batch, annotations.triples);
  const std::size_t n = problem.size(), nb = batch.size();
  const Index D = observations.cols();
  const auto d = static_cast<Index>(model.globals.d());

  Eigen::MatrixXd o(static_cast<Index>(n), D);
  for (std::size_t i = 0; i < n; ++i) o.row(static_cast<Index>(i)) = observations.row(static_cast<Index>(problem.items[i]));
  PotentialVars pot = recognition_potential(tape, model.recognition, tape.constant(Tensor(o)));

  const GlobalExpectations e = GlobalExpectations::compute(model.globals);
  const WorkerAccuracy workers = worker_accuracy(model.globals);
  detail::Engine engine(tape, e, problem, workers);
  std::vector<Var> hr, jr;
  for (std::size_t i = 0; i < n; ++i) {
    hr.push_back(nn::row(pot.h, static_cast<Index>(i)));
    jr.push_back(nn::row(pot.jdiag, static_cast<Index>(i)));
  }
  engine.set_potentials(std::move(hr), std::move(jr));
  engine.initialize(nullptr);
  engine.run(config.sweeps, kSweepTolerance);

  // Decoder term from reparameterized draws x = mean + L eps of the batch items.
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Var> draws;
  Tensor orep(static_cast<Index>(nb * config.x_samples), D);
  for (std::size_t s = 0; s < config.x_samples; ++s) {
    for (std::size_t i = 0; i < nb; ++i) {
      Tensor eps(1, d);
      for (Index a = 0; a < d; ++a) eps(0, a) = n01(rng);
      draws.push_back(gauss_sample(engine.x_[i], eps));
      orep.row(static_cast<Index>(s * nb + i)) = o.row(static_cast<Index>(i));
    }
  }
  auto heads = model.decoder.forward(tape, nn::vstack(draws));
  Var loglik = nn::scale(nn::gaussian_diag_log_density(tape.constant(orep), heads.at("mean"), heads.at("log_var")),
                         1.0 / static_cast<double>(config.x_samples));

  Var kl = tape.constant(Tensor::Zero(1, 1));
  for (std::size_t i = 0; i < nb; ++i) {
    kl = nn::add(kl, detail::local_kl_z(engine.globals(), engine.logits_[i]));
    kl = nn::add(kl, detail::local_kl_x(engine.globals(), engine.q_[i], engine.h_[i], engine.J_[i], engine.x_[i]));
  }
  Var rel = detail::relational_term(tape, problem, workers, engine.q_);

  const double data_scale = static_cast<double>(num_items) / static_cast<double>(nb);
  const double gkl = global_kl(model.globals, model.prior_globals());
  IterationResult out;
  out.objective = nn::add_const(nn::add(nn::scale(nn::sub(loglik, kl), data_scale), nn::scale(rel, annotations.scale)),
                                -gkl);
  out.training = kl_weight == 1.0 ? out.objective
                                  : nn::add_const(nn::add(nn::scale(nn::sub(loglik, nn::scale(kl, kl_weight)), data_scale),
                                                          nn::scale(rel, annotations.scale)),
                                                  -gkl);

  Eigen::MatrixXd q_all(static_cast<Index>(n), static_cast<Index>(model.globals.K()));
  for (std::size_t i = 0; i < n; ++i) q_all.row(static_cast<Index>(i)) = engine.q_[i].value();
  std::vector<GaussianStats> stats;
  for (std::size_t i = 0; i < nb; ++i) {
    const Eigen::VectorXd mean = engine.x_[i].mean.value().row(0).transpose();
    Eigen::MatrixXd second(d, d);
    for (Index a = 0; a < d; ++a) {
      for (Index b = 0; b < d; ++b) second(a, b) = engine.x_[i].second.value()(0, a * d + b);
    }
    stats.push_back({mean, second});
  }
  out.natgrad = mixture_natural_gradient(model.prior, q_all.topRows(static_cast<Index>(nb)), stats, model.globals,
                                         data_scale);
  if (config.update_workers) {
    for (std::size_t m = 0; m < model.globals.M(); ++m) {
      out.natgrad.workers.push_back(beta_natural_gradient(problem.annotations, q_all, model.worker_prior,
                                                          model.globals.workers[m], m, annotations.scale));
    }
  }
  return out;
}

Eigen::MatrixXd infer_responsibilities(BayesModel& model, const Eigen::MatrixXd& observations,
                                       const AnnotationStore& store, std::size_t sweeps) {
  const auto n = static_cast<std::size_t>(observations.rows());
  const RecognitionPotential pot = recognition_potential(model.recognition, observations);
  const LocalProblem problem = LocalProblem::all(n, store);
  const LocalResult r = block_coordinate_local(problem, pot, GlobalExpectations::compute(model.globals),
                                               worker_accuracy(model.globals), sweeps, kSweepTolerance);
  return r.locals.responsibilities();
}

void refit_globals(BayesModel& model, const Eigen::MatrixXd& observations, const AnnotationStore& store,
                   std::size_t iterations, bool update_workers, std::size_t sweeps) {
  const auto n = static_cast<std::size_t>(observations.rows());
  const RecognitionPotential pot = recognition_potential(model.recognition, observations);
  const LocalProblem problem = LocalProblem::all(n, store);
  for (std::size_t it = 0; it < iterations; ++it) {
    const LocalResult r = block_coordinate_local(problem, pot, GlobalExpectations::compute(model.globals),
                                                 worker_accuracy(model.globals), sweeps, kSweepTolerance);
    const Eigen::MatrixXd q = r.locals.responsibilities();
    GlobalNatGrad g = mixture_natural_gradient(model.prior, q, r.locals.x_stats(), model.globals, 1.0);
    if (update_workers) {
      for (std::size_t m = 0; m < model.globals.M(); ++m) {
        g.workers.push_back(beta_natural_gradient(problem.annotations, q, model.worker_prior,
                                                  model.globals.workers[m], m, 1.0));
      }
    }
    model.globals = apply_with_backoff(model.globals, g, 1.0);
  }
}

double full_objective(BayesModel& model, const Eigen::MatrixXd& observations, const AnnotationStore& store,
                      std::size_t samples, std::mt19937_64& rng) {
  if (samples < 1) throw InvalidParameter("full_objective: at least one sample per item is required");
  const auto n = static_cast<std::size_t>(observations.rows());
  const RecognitionPotential pot = recognition_potential(model.recognition, observations);
  const LocalProblem problem = LocalProblem::all(n, store);
  const WorkerAccuracy workers = worker_accuracy(model.globals);
  const LocalResult r = block_coordinate_local(problem, pot, GlobalExpectations::compute(model.globals), workers,
                                               20, kSweepTolerance);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Eigen::MatrixXd> draws;
  for (const expfam::GaussianNat& x : r.locals.x) {
    const expfam::GaussianMoments m = expfam::gaussian_nat_to_moment(x);
    const Eigen::MatrixXd L = m.cov.llt().matrixL();
    Eigen::MatrixXd s(static_cast<Index>(samples), m.mean.size());
    for (Index a = 0; a < s.rows(); ++a) {
      Eigen::VectorXd eps(m.mean.size());
      for (Index b = 0; b < eps.size(); ++b) eps(b) = n01(rng);
      s.row(a) = (m.mean + L * eps).transpose();
    }
    draws.push_back(std::move(s));
  }
  return final_objective(model.globals, model.prior_globals(), r.locals, problem, workers, model.decoder, observations,
                         draws);
}

namespace {

BayesTrainResult train_once(const Dataset& data, const AnnotationStore& store, const BayesConfig& config,
                            std::mt19937_64& rng) {
  const std::size_t N = data.size();
  BayesTrainResult result;
  result.model = init_bayes_model(data.dim(), store.num_workers(), config, rng);
  BayesModel& model = result.model;

  const std::size_t Na = store.num_annotations();
  std::size_t ann_batch = config.annotation_batch_size;
  if (ann_batch == 0 && Na > 0) {
    ann_batch = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(Na) * static_cast<double>(config.batch_size) /
                                                 static_cast<double>(N))));
  }
  const double threshold = config.effective_threshold > 0.0 ? config.effective_threshold : 2.0 / static_cast<double>(N);

  nn::OptimizerConfig opt = config.optimizer;
  opt.ascent = true;
  nn::OptimizerState opt_state;
  std::vector<nn::Parameter*> params = network_parameters(model);
  MinibatchIterator batches(N, config.batch_size, rng);
  std::size_t t = 0;

  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      double total = 0.0;
      std::size_t count = 0;
      for (const auto& batch : batches.next_epoch()) {
        AnnotationBatch ann;
        if (Na > 0) ann = sample_annotation_minibatch(store, ann_batch, rng);
        for (nn::Parameter* p : params) p->zero_grad();
        Tape tape;
        const double kl_weight =
            config.kl_warmup_epochs == 0
                ? 1.0
                : std::min(1.0, static_cast<double>(epoch) / static_cast<double>(config.kl_warmup_epochs));
        IterationResult it = bayes_iteration(tape, model, data.observations, batch, ann, N, config, rng, kl_weight);
        const double J = it.objective.scalar();
        if (!std::isfinite(J)) throw TrainingDivergence("non-finite objective estimate at epoch " + std::to_string(epoch));
        tape.backward(nn::scale(it.training, 1.0 / static_cast<double>(N)));
        nn::optimizer_step(params, opt_state, opt);
        const double step = config.robbins_monro
                                ? config.global_step / std::pow(1.0 + static_cast<double>(t), config.decay)
                                : config.global_step;
        if (epoch > config.warmup_epochs) model.globals = apply_with_backoff(model.globals, it.natgrad, step);
        total += J;
        ++count;
        ++t;
      }
      if (epoch == config.warmup_epochs && config.refit_iterations > 0) {
        refit_globals(model, data.observations, store, config.refit_iterations, config.update_workers);
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.objective = count ? total / static_cast<double>(count) : 0.0;
      rec.effective_k = effective_components(model.globals, threshold);
      if (config.record_metrics && data.labels) {
        const std::vector<int> pred = predict_clusters(infer_responsibilities(model, data.observations, store));
        rec.accuracy = clustering_accuracy(pred, *data.labels);
        rec.nmi = nmi(pred, *data.labels);
      }
      result.history.push_back(rec);
    }
  } catch (const TrainingDivergence& e) {
    result.diverged = true;
    result.message = e.what();
  } catch (const LinAlgError& e) {
    result.diverged = true;
    result.message = e.what();
  }
  return result;
}

}  // namespace

BayesTrainResult train_bayes_scdc(const Dataset& data, const AnnotationStore& store, const BayesConfig& config,
                                  std::mt19937_64& rng) {
  check_config(config);
  data.validate();
  if (data.size() == 0) throw InvalidParameter("train_bayes_scdc: empty dataset");
  if (store.num_annotations() > 0 && store.num_items() != data.size()) {
    throw InvalidParameter("annotation store does not match the dataset size");
  }
  std::optional<BayesTrainResult> best;
  std::vector<double> scores;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    BayesTrainResult run = train_once(data, store, config, rng);
    double score = -std::numeric_limits<double>::infinity();
    if (!run.diverged) {
      try {
        score = full_objective(run.model, data.observations, store, kRestartSamples, rng);
      } catch (const Error&) {
        score = -std::numeric_limits<double>::infinity();
      }
    }
    scores.push_back(score);
    if (!best || score > best->restart_objectives.front()) {
      best = std::move(run);
      best->restart_objectives = {score};
      best->chosen_restart = r;
    }
  }
  best->restart_objectives = scores;
  return std::move(*best);
}

}  // namespace scdc::vmp

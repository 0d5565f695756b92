#include "scdc/amortized.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "scdc/error.hpp"
#include "scdc/metrics.hpp"

namespace scdc::amortized {

using nn::Tape;
using nn::Tensor;
using nn::Var;
using Eigen::Index;

namespace {

// Per-row ln N(x; mean, diag exp(log_var)) as an n x 1 column; mean and
// log_var may be single rows broadcast over x.
Var row_log_density(const Var& x, const Var& mean, const Var& log_var) {
  const Var diff = nn::sub(x, mean);
  const Var quad = nn::mul(nn::square(diff), nn::exp(nn::neg(log_var)));
  const Var terms = nn::add_const(nn::add(quad, log_var), std::log(2.0 * std::numbers::pi));
  return nn::scale(nn::row_sum(terms), -0.5);
}

nn::MlpSpec gaussian_head_spec(std::size_t input, std::size_t output, std::vector<std::size_t> hidden,
                               std::pair<double, double> clamp) {
  return {input, std::move(hidden), {{"mean", output, std::nullopt}, {"log_var", output, clamp}}};
}

double logit(double p) { return std::log(p) - std::log1p(-p); }
double sigmoid(double a) { return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

void check_config(const ScdcConfig& c) {
  if (c.K < 1 || c.d < 1) throw InvalidParameter("K and d must be positive");
  if (c.batch_size < 1) throw InvalidParameter("batch size must be at least 1");
  if (!(c.mean_spread >= 0.0)) throw InvalidParameter("mean spread must be nonnegative");
  if (!(c.log_var_clamp.first < c.log_var_clamp.second)) throw InvalidParameter("empty log-variance clamp range");
}

}  // namespace

Eigen::VectorXd PointParams::pi() const {
  const Eigen::VectorXd l = pi_logits.value.row(0).transpose();
  const Eigen::VectorXd e = (l.array() - l.maxCoeff()).exp();
  return e / e.sum();
}

std::vector<std::pair<double, double>> PointParams::accuracies() const {
  std::vector<std::pair<double, double>> out;
  for (Index m = 0; m < worker_logits.value.rows(); ++m) {
    out.emplace_back(sigmoid(worker_logits.value(m, 0)), sigmoid(worker_logits.value(m, 1)));
  }
  return out;
}

std::vector<nn::Parameter*> PointParams::parameters() { return {&pi_logits, &means, &log_vars, &worker_logits}; }

std::vector<nn::Parameter*> ScdcModel::parameters() {
  std::vector<nn::Parameter*> out = point.parameters();
  for (nn::Mlp* net : {&posterior.encoder_z, &posterior.encoder_x, &decoder}) {
    for (nn::Parameter* p : net->parameters()) out.push_back(p);
  }
  return out;
}

ScdcModel init_scdc_model(std::size_t input_dim, std::size_t num_workers, const ScdcConfig& config,
                          std::mt19937_64& rng) {
  check_config(config);
  const auto K = static_cast<Index>(config.K), d = static_cast<Index>(config.d);
  ScdcModel m;
  nn::MlpSpec ez{input_dim, config.hidden, {{"logits", config.K, std::nullopt}}};
  nn::MlpSpec ex = gaussian_head_spec(config.K + input_dim, config.d, config.hidden, config.log_var_clamp);
  nn::MlpSpec dec = gaussian_head_spec(config.d, input_dim, config.hidden, config.log_var_clamp);
  ez.skip = ex.skip = dec.skip = config.skip;
  m.posterior.encoder_z = nn::Mlp(ez, rng);
  m.posterior.encoder_x = nn::Mlp(ex, rng);
  m.decoder = nn::Mlp(dec, rng);

  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor means(K, d);
  for (Index k = 0; k < K; ++k) {
    for (Index a = 0; a < d; ++a) means(k, a) = config.mean_spread * n01(rng);
  }
  m.point.pi_logits = nn::Parameter("pi_logits", Tensor::Zero(1, K));
  m.point.means = nn::Parameter("means", means);
  m.point.log_vars = nn::Parameter("log_vars", Tensor::Zero(K, d));
  // Accuracies start from Beta(1, 1) draws.
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Tensor w(static_cast<Index>(num_workers), 2);
  for (Index r = 0; r < w.rows(); ++r) {
    for (Index c = 0; c < 2; ++c) w(r, c) = logit(std::clamp(u01(rng), kAccuracyFloor, 1.0 - kAccuracyFloor));
  }
  m.point.worker_logits = nn::Parameter("worker_logits", w);
  return m;
}

Var z_logits(Tape& tape, ScdcModel& model, const Var& o) {
  return model.posterior.encoder_z.forward(tape, o).at("logits");
}

Var elbo_local(Tape& tape, ScdcModel& model, const Var& o, std::span<const Tensor> noise, double scale,
               double kl_weight) {
  const Index n = o.rows();
  const auto K = static_cast<Index>(model.point.K()), d = static_cast<Index>(model.point.d());
  if (n == 0) throw InvalidParameter("elbo_local: empty batch");
  if (static_cast<Index>(noise.size()) != K) throw ShapeError("elbo_local: one noise block per component required");

  const Var logits = z_logits(tape, model, o);
  const Var q = nn::softmax_rows(logits);
  const Var log_q = nn::log_softmax_rows(logits);
  const Var log_pi = nn::log_softmax_rows(tape.parameter(model.point.pi_logits));
  const Var means = tape.parameter(model.point.means);
  const Var log_vars = tape.parameter(model.point.log_vars);

  std::vector<Var> terms;
  for (Index k = 0; k < K; ++k) {
    if (noise[static_cast<std::size_t>(k)].rows() != n || noise[static_cast<std::size_t>(k)].cols() != d) {
      throw ShapeError("elbo_local: noise block must be rows(o) x d");
    }
    Tensor onehot = Tensor::Zero(n, K);
    onehot.col(k).setOnes();
    const std::vector<Var> parts = {tape.constant(onehot), o};
    auto enc = model.posterior.encoder_x.forward(tape, nn::hstack(parts));
    const Var& mean = enc.at("mean");
    const Var& lv = enc.at("log_var");
    const Var x = nn::add(mean, nn::mul(nn::exp(nn::scale(lv, 0.5)), tape.constant(noise[static_cast<std::size_t>(k)])));
    auto dec = model.decoder.forward(tape, x);
    Var term = row_log_density(x, nn::row(means, k), nn::row(log_vars, k));
    term = nn::sub(term, row_log_density(x, mean, lv));
    term = nn::add(term, nn::slice_cols(log_pi, k, 1));
    if (kl_weight != 1.0) term = nn::scale(term, kl_weight);
    terms.push_back(nn::add(term, row_log_density(o, dec.at("mean"), dec.at("log_var"))));
  }
  const Var per_k = nn::hstack(terms);  // n x K
  const Var entropy_part = kl_weight != 1.0 ? nn::scale(log_q, kl_weight) : log_q;
  return nn::scale(nn::sum(nn::mul(q, nn::sub(per_k, entropy_part))), scale);
}

Var elbo_rel(Tape& tape, std::span<const Annotation> annotations, const Var& q, const Var& worker_logits,
             double scale) {
  Var total = tape.constant(Tensor::Zero(1, 1));
  for (const Annotation& a : annotations) {
    if (static_cast<Index>(std::max(a.i, a.j)) >= q.rows() || static_cast<Index>(a.m) >= worker_logits.rows()) {
      throw ShapeError("elbo_rel: annotation index out of range");
    }
    const Var w = nn::row(worker_logits, static_cast<Index>(a.m));
    const Var la = nn::slice_cols(w, 0, 1), lb = nn::slice_cols(w, 1, 1);
    // Same cluster: Bern(L | alpha); different: Bern(L | 1 - beta).
    const Var same = a.label == 1 ? nn::log_sigmoid(la) : nn::log_sigmoid(nn::neg(la));
    const Var diff = a.label == 1 ? nn::log_sigmoid(nn::neg(lb)) : nn::log_sigmoid(lb);
    const Var p_same = nn::dot(nn::row(q, static_cast<Index>(a.i)), nn::row(q, static_cast<Index>(a.j)));
    total = nn::add(total, nn::add(diff, nn::mul(p_same, nn::sub(same, diff))));
  }
  return nn::scale(total, scale);
}

double elbo_rel(std::span<const Annotation> annotations, const Eigen::MatrixXd& q,
                std::span<const std::pair<double, double>> alpha_beta) {
  Tape tape;
  Tensor w(static_cast<Index>(alpha_beta.size()), 2);
  for (std::size_t m = 0; m < alpha_beta.size(); ++m) {
    const auto [a, b] = alpha_beta[m];
    if (!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0)) throw DomainError("elbo_rel: accuracies must lie in (0, 1)");
    w(static_cast<Index>(m), 0) = logit(a);
    w(static_cast<Index>(m), 1) = logit(b);
  }
  return elbo_rel(tape, annotations, tape.constant(Tensor(q)), tape.constant(w), 1.0).scalar();
}

Var scdc_iteration(Tape& tape, ScdcModel& model, const Eigen::MatrixXd& observations,
                   std::span<const std::size_t> batch, const AnnotationBatch& annotations, std::size_t num_items,
                   std::mt19937_64& rng, double kl_weight) {
  if (batch.empty()) throw InvalidParameter("scdc_iteration: empty data batch");
  const vmp::LocalProblem problem = vmp::LocalProblem::build(batch, annotations.triples);
  const Index D = observations.cols();
  const auto nb = static_cast<Index>(batch.size());
  const auto d = static_cast<Index>(model.point.d());

  Tensor o(static_cast<Index>(problem.size()), D);
  for (std::size_t i = 0; i < problem.size(); ++i) {
    o.row(static_cast<Index>(i)) = observations.row(static_cast<Index>(problem.items[i]));
  }
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Tensor> noise;
  for (std::size_t k = 0; k < model.point.K(); ++k) {
    Tensor e(nb, d);
    for (Index r = 0; r < nb; ++r) {
      for (Index a = 0; a < d; ++a) e(r, a) = n01(rng);
    }
    noise.push_back(std::move(e));
  }
  const Var data_rows = tape.constant(o.topRows(nb));
  Var J = elbo_local(tape, model, data_rows, noise,
                     static_cast<double>(num_items) / static_cast<double>(batch.size()), kl_weight);
  if (!problem.annotations.empty()) {
    const Var q = nn::softmax_rows(z_logits(tape, model, tape.constant(o)));
    J = nn::add(J, elbo_rel(tape, problem.annotations, q, tape.parameter(model.point.worker_logits),
                            annotations.scale));
  }
  return J;
}

Eigen::MatrixXd responsibilities(ScdcModel& model, const Eigen::MatrixXd& observations) {
  const Tensor logits = model.posterior.encoder_z.forward(Tensor(observations)).at("logits");
  Eigen::MatrixXd q(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Eigen::RowVectorXd e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    q.row(r) = e / e.sum();
  }
  return q;
}

std::vector<int> predict_cluster(ScdcModel& model, const Eigen::MatrixXd& observations) {
  const Tensor logits = model.posterior.encoder_z.forward(Tensor(observations)).at("logits");
  std::vector<int> out;
  for (Index r = 0; r < logits.rows(); ++r) {
    Index best = 0;
    for (Index k = 1; k < logits.cols(); ++k) {
      if (logits(r, k) > logits(r, best)) best = k;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

std::size_t effective_components(const ScdcModel& model, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidParameter("threshold must lie in (0, 1)");
  const Eigen::VectorXd pi = model.point.pi();
  return static_cast<std::size_t>((pi.array() > threshold).count());
}

ScdcTrainResult train_scdc(const Dataset& data, const AnnotationStore& store, const ScdcConfig& config,
                           std::mt19937_64& rng) {
  check_config(config);
  data.validate();
  const std::size_t N = data.size();
  if (N == 0) throw InvalidParameter("train_scdc: empty dataset");
  if (store.num_annotations() > 0 && store.num_items() != N) {
    throw InvalidParameter("annotation store does not match the dataset size");
  }

  ScdcTrainResult result;
  result.model = init_scdc_model(data.dim(), store.num_workers(), config, rng);
  ScdcModel& model = result.model;

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
  nn::OptimizerState state;
  std::vector<nn::Parameter*> params = model.parameters();
  MinibatchIterator batches(N, config.batch_size, rng);

  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      const double kl_weight =
          config.kl_warmup_epochs == 0
              ? 1.0
              : std::min(1.0, static_cast<double>(epoch) / static_cast<double>(config.kl_warmup_epochs));
      double total = 0.0;
      std::size_t count = 0;
      for (const auto& batch : batches.next_epoch()) {
        AnnotationBatch ann;
        if (Na > 0) ann = sample_annotation_minibatch(store, ann_batch, rng);
        for (nn::Parameter* p : params) p->zero_grad();
        Tape tape;
        const Var J = scdc_iteration(tape, model, data.observations, batch, ann, N, rng, kl_weight);
        if (!std::isfinite(J.scalar())) {
          throw TrainingDivergence("non-finite ELBO estimate at epoch " + std::to_string(epoch));
        }
        tape.backward(nn::scale(J, 1.0 / static_cast<double>(N)));
        nn::optimizer_step(params, state, opt);
        total += J.scalar();
        ++count;
      }
      vmp::EpochRecord rec;
      rec.epoch = epoch;
      rec.objective = count ? total / static_cast<double>(count) : 0.0;
      rec.effective_k = effective_components(model, threshold);
      if (config.record_metrics && data.labels) {
        const std::vector<int> pred = predict_cluster(model, data.observations);
        rec.accuracy = clustering_accuracy(pred, *data.labels);
        rec.nmi = nmi(pred, *data.labels);
      }
      result.history.push_back(rec);
    }
  } catch (const TrainingDivergence& e) {
    result.diverged = true;
    result.message = e.what();
  }
  return result;
}

}  // namespace scdc::amortized

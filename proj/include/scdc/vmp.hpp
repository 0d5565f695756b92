#pragma once

// BayesSCDC inference: recognition potentials, local variational message
// passing for q(x_i) q(z_i), the surrogate and final objectives, and the
// stochastic natural-gradient training loop.
//
// Local updates are written once against the autodiff tape. Training runs
// them on Vars that depend on the recognition network, so the reparameterized
// objective differentiates through the unrolled sweeps; the plain-value API
// below runs the same code on constants.

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scdc/data.hpp"
#include "scdc/expfam.hpp"
#include "scdc/mixture.hpp"
#include "scdc/nnet.hpp"
#include "scdc/relational.hpp"

namespace scdc::vmp {

inline constexpr double kPotentialFloor = 1e-4;
inline constexpr std::size_t kDefaultSweeps = 4;
inline constexpr double kSweepTolerance = 1e-6;

// ------------------------------------------------------- Gaussian tape ops
// Row-vector conventions: h is 1 x d, J is 1 x d*d (row-major flattening).

/// Packed [mean, vec(Sigma)] (1 x (d + d*d)) with Sigma = -1/2 sym(J)^-1.
nn::Var gauss_mean_cov(const nn::Var& h, const nn::Var& J);
/// Lower Cholesky factor of sym(Sigma), flattened row-major.
nn::Var cholesky_flat(const nn::Var& sigma);

struct GaussVars {
  nn::Var mean;    // 1 x d
  nn::Var cov;     // 1 x d*d
  nn::Var second;  // 1 x d*d, E[x x^T]
  nn::Var chol;    // 1 x d*d
};
GaussVars gauss_vars(const nn::Var& h, const nn::Var& J);
/// 1/2 h.mean + 1/2 ln|Sigma|.
nn::Var gauss_log_partition(const nn::Var& h, const GaussVars& g);
/// mean + L eps for a 1 x d noise row.
nn::Var gauss_sample(const GaussVars& g, const nn::Tensor& eps);

// ---------------------------------------------------- potentials and locals

/// One row per item: h (n x d) and the strictly negative diagonal precision
/// potential jdiag (n x d).
struct RecognitionPotential {
  Eigen::MatrixXd h;
  Eigen::MatrixXd jdiag;

  std::size_t size() const { return static_cast<std::size_t>(h.rows()); }
  RecognitionPotential rows(std::span<const std::size_t> idx) const;
};

/// Recognition MLPs carry heads "h" and "j"; jdiag = -softplus(j) - 1e-4.
nn::MlpSpec recognition_spec(std::size_t input, std::size_t d, std::vector<std::size_t> hidden);
RecognitionPotential recognition_potential(nn::Mlp& net, const Eigen::MatrixXd& o);

struct PotentialVars {
  nn::Var h;
  nn::Var jdiag;
};
PotentialVars recognition_potential(nn::Tape& tape, nn::Mlp& net, const nn::Var& o);

/// Expected natural parameters of the globals, laid out for the local
/// updates: A row k = E[Sigma_k^-1 mu_k], B row k = vec E[-1/2 Sigma_k^-1],
/// c_k = E[-1/2 mu_k^T Sigma_k^-1 mu_k] + E[-1/2 ln|Sigma_k|].
struct GlobalExpectations {
  Eigen::VectorXd log_pi;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd c;

  static GlobalExpectations compute(const GlobalVariational& g);
  std::size_t K() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(A.cols()); }
};

struct LocalVariational {
  std::vector<expfam::CategoricalNat> z;
  std::vector<expfam::GaussianNat> x;

  std::size_t size() const { return z.size(); }
  Eigen::MatrixXd responsibilities() const;  // n x K
  std::vector<GaussianStats> x_stats() const;
};

/// A set of items solved jointly. Annotations are re-indexed to positions in
/// `items`; every endpoint is part of the problem.
struct LocalProblem {
  std::vector<std::size_t> items;
  std::vector<Annotation> annotations;

  /// The given items followed by any annotation endpoints not among them.
  static LocalProblem build(std::span<const std::size_t> items, std::span<const Annotation> annotations);
  static LocalProblem all(std::size_t n, const AnnotationStore& store);
  std::size_t size() const { return items.size(); }
};

expfam::GaussianNat update_local_x(std::size_t i, const LocalVariational& locals, const GlobalExpectations& e,
                                   const RecognitionPotential& potential);
expfam::CategoricalNat update_local_z(std::size_t i, const LocalVariational& locals, const GlobalExpectations& e,
                                      const LocalProblem& problem, const WorkerAccuracy& workers);

struct LocalResult {
  LocalVariational locals;
  std::size_t sweeps = 0;
  double last_change = 0.0;
};

/// Sweeps of (all x-updates, then z-updates in item order) until `sweeps`
/// rounds or a max-abs parameter change below `tolerance`. Without `init`,
/// q(z_i) starts at softmax(E ln pi).
LocalResult block_coordinate_local(const LocalProblem& problem, const RecognitionPotential& potential,
                                   const GlobalExpectations& e, const WorkerAccuracy& workers,
                                   std::size_t sweeps = kDefaultSweeps, double tolerance = kSweepTolerance,
                                   const LocalVariational* init = nullptr);

// --------------------------------------------------------------- objectives

struct LocalKl {
  double z = 0.0;
  double x = 0.0;
  double total() const { return z + x; }
};

std::vector<LocalKl> local_kl_terms(const GlobalExpectations& e, const LocalVariational& locals);
double local_kl(const GlobalExpectations& e, const LocalVariational& locals);
/// KL(q(Theta) || p(Theta)) over pi, every component and every worker Beta.
double global_kl(const GlobalVariational& q, const GlobalVariational& prior);

/// J with the decoder log-likelihood replaced by the linear observation term
/// <r_i, E t(x_i)>; with the recognition potentials as r this is the
/// surrogate objective.
double final_objective(const GlobalVariational& globals, const GlobalVariational& prior, const LocalVariational& locals,
                       const LocalProblem& problem, const WorkerAccuracy& workers,
                       const RecognitionPotential& observation);

/// J with a Monte-Carlo decoder term: samples[i] holds draws from q(x_i), and
/// log p(o_i | x) is the diagonal-Gaussian decoder with heads "mean" and
/// "log_var". `observations` rows align with problem.items.
double final_objective(const GlobalVariational& globals, const GlobalVariational& prior, const LocalVariational& locals,
                       const LocalProblem& problem, const WorkerAccuracy& workers, nn::Mlp& decoder,
                       const Eigen::MatrixXd& observations, const std::vector<Eigen::MatrixXd>& samples);

double surrogate_objective(const GlobalVariational& globals, const GlobalVariational& prior,
                           const LocalVariational& locals, const LocalProblem& problem, const WorkerAccuracy& workers,
                           const RecognitionPotential& potential);

// ------------------------------------------------------------------ training

struct BayesConfig {
  std::size_t K = 15;
  std::size_t d = 2;
  std::size_t epochs = 20;
  std::size_t batch_size = 50;
  std::size_t annotation_batch_size = 0;  // 0: N_a |B| / N
  std::vector<std::size_t> hidden = {40, 40};
  bool skip = false;  // linear input-to-output path in both networks
  nn::OptimizerConfig optimizer{nn::OptimizerKind::kAdam, 1e-2};
  double global_step = 0.1;
  std::size_t warmup_epochs = 0;  // networks only; globals frozen
  std::size_t kl_warmup_epochs = 0;  // local KL weight ramps linearly to 1 over these epochs
  std::size_t refit_iterations = 0;  // full-batch step-1 global updates when warmup ends
  std::size_t restarts = 1;          // independent runs; the best full-data J is kept
  std::pair<double, double> log_var_clamp = {nn::kLogVarMin, nn::kLogVarMax};  // decoder variance head
  bool robbins_monro = false;  // step_t = global_step / (1 + t)^decay
  double decay = 0.6;
  std::size_t sweeps = kDefaultSweeps;
  std::size_t x_samples = 1;
  MixturePrior prior = MixturePrior::sparse_default(15, 2);
  WorkerBeta worker_prior = {expfam::BetaNat::from_shape(1.0, 1.0), expfam::BetaNat::from_shape(1.0, 1.0)};
  GlobalInit init;
  bool update_workers = true;
  double effective_threshold = 0.0;  // 0: 2 / N
  bool record_metrics = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double objective = 0.0;
  double accuracy = 0.0;
  double nmi = 0.0;
  std::size_t effective_k = 0;
};

struct BayesModel {
  MixturePrior prior;
  WorkerBeta worker_prior;
  GlobalVariational globals;
  nn::Mlp recognition;
  nn::Mlp decoder;

  GlobalVariational prior_globals() const { return prior_as_global(prior, worker_prior, globals.M()); }
};

struct BayesTrainResult {
  BayesModel model;
  std::vector<EpochRecord> history;  // of the kept run
  std::vector<double> restart_objectives;
  std::size_t chosen_restart = 0;
  bool diverged = false;
  std::string message;
};

BayesModel init_bayes_model(std::size_t input_dim, std::size_t num_workers, const BayesConfig& config,
                            std::mt19937_64& rng);

/// The J estimate of one training iteration for batch B and annotation batch
/// S, recorded on `tape` so networks can be differentiated. Also returns the
/// natural gradient of the globals.
struct IterationResult {
  nn::Var objective;  // J estimate (unnormalized)
  nn::Var training;   // the same with the local KL scaled by kl_weight
  GlobalNatGrad natgrad;
};
IterationResult bayes_iteration(nn::Tape& tape, BayesModel& model, const Eigen::MatrixXd& observations,
                                std::span<const std::size_t> batch, const AnnotationBatch& annotations,
                                std::size_t num_items, const BayesConfig& config, std::mt19937_64& rng,
                                double kl_weight = 1.0);

BayesTrainResult train_bayes_scdc(const Dataset& data, const AnnotationStore& store, const BayesConfig& config,
                                  std::mt19937_64& rng);

/// `iterations` rounds of full-data local inference followed by a step-1
/// natural-gradient update of every global factor (a conjugate VB refit).
void refit_globals(BayesModel& model, const Eigen::MatrixXd& observations, const AnnotationStore& store,
                   std::size_t iterations, bool update_workers, std::size_t sweeps = 20);

/// Full-data J: local inference over every item with every annotation and a
/// Monte-Carlo decoder term with `samples` draws per item.
double full_objective(BayesModel& model, const Eigen::MatrixXd& observations, const AnnotationStore& store,
                      std::size_t samples, std::mt19937_64& rng);

/// Local inference over every item with every annotation; row i is q(z_i).
Eigen::MatrixXd infer_responsibilities(BayesModel& model, const Eigen::MatrixXd& observations,
                                       const AnnotationStore& store, std::size_t sweeps = 20);
std::vector<int> predict_clusters(const Eigen::MatrixXd& responsibilities);

}  // namespace scdc::vmp

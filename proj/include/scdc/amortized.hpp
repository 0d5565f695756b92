#pragma once

// Amortized SCDC: encoders q(z|o) and q(x|z,o), point mixture and worker
// parameters, the ELBO with the z-sum taken analytically, and the joint
// gradient-ascent training loop.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scdc/data.hpp"
#include "scdc/nnet.hpp"
#include "scdc/relational.hpp"
#include "scdc/vmp.hpp"

namespace scdc::amortized {

/// pi = softmax(pi_logits); component k is N(means_k, diag exp(log_vars_k));
/// worker m has alpha = sigmoid(worker_logits(m, 0)), beta = sigmoid(worker_logits(m, 1)).
struct PointParams {
  nn::Parameter pi_logits;      // 1 x K
  nn::Parameter means;          // K x d
  nn::Parameter log_vars;       // K x d
  nn::Parameter worker_logits;  // M x 2

  std::size_t K() const { return static_cast<std::size_t>(means.value.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(means.value.cols()); }
  std::size_t M() const { return static_cast<std::size_t>(worker_logits.value.rows()); }
  Eigen::VectorXd pi() const;
  std::vector<std::pair<double, double>> accuracies() const;
  std::vector<nn::Parameter*> parameters();
};

struct AmortizedPosterior {
  nn::Mlp encoder_z;  // o -> "logits" (K)
  nn::Mlp encoder_x;  // [one-hot z, o] -> "mean", "log_var" (d each)
};

struct ScdcModel {
  PointParams point;
  AmortizedPosterior posterior;
  nn::Mlp decoder;  // x -> "mean", "log_var" (D each)

  std::vector<nn::Parameter*> parameters();
};

struct ScdcConfig {
  std::size_t K = 15;
  std::size_t d = 2;
  std::size_t epochs = 20;
  std::size_t batch_size = 50;
  std::size_t annotation_batch_size = 0;  // 0: N_a |B| / N
  std::vector<std::size_t> hidden = {40, 40};
  bool skip = false;  // linear input-to-output path in all three networks
  nn::OptimizerConfig optimizer{nn::OptimizerKind::kAdam, 1e-3};
  std::size_t kl_warmup_epochs = 0;  // weight on every term but ln p(o | x) ramps linearly to 1
  std::pair<double, double> log_var_clamp = {nn::kLogVarMin, nn::kLogVarMax};
  double mean_spread = 1.0;  // initial component means ~ N(0, spread^2 I)
  double effective_threshold = 0.0;  // 0: 2 / N
  bool record_metrics = true;
};

ScdcModel init_scdc_model(std::size_t input_dim, std::size_t num_workers, const ScdcConfig& config,
                          std::mt19937_64& rng);

/// Encoder logits of q(z|o), one row per observation.
nn::Var z_logits(nn::Tape& tape, ScdcModel& model, const nn::Var& o);

/// scale * sum over rows of o of
///   sum_k q(k|o) [ln pi_k + ln N(x_k; mu_k, Sigma_k) + ln p(o | x_k) - ln q(x_k | k, o)] + H[q(z|o)]
/// with x_k = mean_k(o) + sd_k(o) * noise[k] (noise[k] is rows(o) x d). With kl_weight != 1 every term
/// except ln p(o | x_k) is scaled by it.
nn::Var elbo_local(nn::Tape& tape, ScdcModel& model, const nn::Var& o, std::span<const nn::Tensor> noise,
                   double scale, double kl_weight = 1.0);

/// scale * sum over annotations of E_{q(z_i) q(z_j)} ln p(L | z_i, z_j, alpha_m, beta_m). Annotation
/// endpoints index rows of q (n x K simplexes); worker_logits is M x 2.
nn::Var elbo_rel(nn::Tape& tape, std::span<const Annotation> annotations, const nn::Var& q,
                 const nn::Var& worker_logits, double scale);
double elbo_rel(std::span<const Annotation> annotations, const Eigen::MatrixXd& q,
                std::span<const std::pair<double, double>> alpha_beta);

/// ELBO estimate of one iteration over data batch B and annotation batch S:
/// elbo_local with scale N/|B| plus elbo_rel with the batch scale.
nn::Var scdc_iteration(nn::Tape& tape, ScdcModel& model, const Eigen::MatrixXd& observations,
                       std::span<const std::size_t> batch, const AnnotationBatch& annotations, std::size_t num_items,
                       std::mt19937_64& rng, double kl_weight = 1.0);

struct ScdcTrainResult {
  ScdcModel model;
  std::vector<vmp::EpochRecord> history;
  bool diverged = false;
  std::string message;
};

ScdcTrainResult train_scdc(const Dataset& data, const AnnotationStore& store, const ScdcConfig& config,
                           std::mt19937_64& rng);

/// Rows of q(z|o).
Eigen::MatrixXd responsibilities(ScdcModel& model, const Eigen::MatrixXd& observations);
/// argmax_k q(z = k | o), ties to the lowest index.
std::vector<int> predict_cluster(ScdcModel& model, const Eigen::MatrixXd& observations);
std::size_t effective_components(const ScdcModel& model, double threshold);

}  // namespace scdc::amortized

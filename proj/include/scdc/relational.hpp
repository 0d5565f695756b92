#pragma once

// Two-coin worker model over sparse pairwise same-cluster annotations.
//
// Worker m reports label 1 for a same-cluster pair with probability alpha_m
// (sensitivity) and label 0 for a different-cluster pair with probability
// beta_m (specificity). Annotations are stored once per unordered pair and
// worker, as (i, j, m, label) with i < j.

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scdc/expfam.hpp"

namespace scdc {

inline constexpr double kAccuracyFloor = 1e-6;

struct Annotation {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t m = 0;
  int label = 0;

  bool operator==(const Annotation&) const = default;
};

class AnnotationStore {
 public:
  AnnotationStore() = default;
  AnnotationStore(std::size_t num_items, std::size_t num_workers);

  /// Stores the triple in canonical orientation. Re-adding an identical triple
  /// is a no-op; a conflicting label for the same (pair, worker) throws.
  void add(std::size_t i, std::size_t j, std::size_t m, int label);

  std::optional<int> label(std::size_t i, std::size_t j, std::size_t m) const;
  bool observed(std::size_t i, std::size_t j, std::size_t m) const { return label(i, j, m).has_value(); }

  const std::vector<Annotation>& triples() const { return triples_; }
  /// Indices into triples() of the annotations touching item i.
  const std::vector<std::size_t>& incident(std::size_t i) const { return incident_[i]; }

  std::size_t num_items() const { return num_items_; }
  std::size_t num_workers() const { return num_workers_; }
  std::size_t num_annotations() const { return triples_.size(); }
  std::size_t num_annotated_items() const;
  std::vector<std::size_t> annotated_items() const;
  std::vector<std::size_t> per_worker_counts() const;

 private:
  std::size_t num_items_ = 0;
  std::size_t num_workers_ = 0;
  std::vector<Annotation> triples_;
  std::vector<std::vector<std::size_t>> incident_;
};

struct WorkerBeta {
  expfam::BetaNat alpha;
  expfam::BetaNat beta;
};

/// E[ln alpha], E[ln(1-alpha)], E[ln beta], E[ln(1-beta)] for one worker.
struct WorkerLogs {
  double log_alpha = 0.0;
  double log1m_alpha = 0.0;
  double log_beta = 0.0;
  double log1m_beta = 0.0;
};

/// Per-worker accuracies, either as point values or as Beta posteriors. The
/// expected logarithms are computed once at construction.
class WorkerAccuracy {
 public:
  WorkerAccuracy() = default;
  /// Values are clamped to [1e-6, 1 - 1e-6]; anything outside (0, 1) throws.
  static WorkerAccuracy point(std::span<const std::pair<double, double>> alpha_beta);
  static WorkerAccuracy posterior(std::span<const WorkerBeta> posteriors);

  std::size_t size() const { return logs_.size(); }
  bool bayesian() const { return bayesian_; }
  const WorkerLogs& logs(std::size_t m) const { return logs_.at(m); }
  /// Expected log-odds weight E[logit alpha] + E[logit beta].
  double weight(std::size_t m) const;

 private:
  std::vector<WorkerLogs> logs_;
  bool bayesian_ = false;
};

double annotation_log_likelihood(int label, bool same_cluster, double alpha, double beta);

/// Log-likelihood difference between the same-cluster and different-cluster
/// hypotheses for one label.
double message_weight(int label, const WorkerLogs& w);
/// The hypothesis-independent part E[L ln((1-beta)/beta) + ln beta].
double annotation_offset(int label, const WorkerLogs& w);
/// Zero when worker m did not annotate (i, j).
double message_weight(const AnnotationStore& store, std::size_t i, std::size_t j, std::size_t m,
                      const WorkerAccuracy& workers);

double worker_weight(double alpha, double beta);

/// E_q log p(L | Z, alpha, beta); q_z holds one simplex per row.
double expected_rel_loglik(const AnnotationStore& store, const Eigen::MatrixXd& q_z, const WorkerAccuracy& workers);
double expected_rel_loglik(std::span<const Annotation> triples, const Eigen::MatrixXd& q_z,
                           const WorkerAccuracy& workers);

struct BetaNatGrad {
  Eigen::Vector2d alpha = Eigen::Vector2d::Zero();
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
};

/// Natural gradient of the objective in worker m's Beta posteriors, with the
/// annotation counts from `triples` multiplied by `scale`.
BetaNatGrad beta_natural_gradient(std::span<const Annotation> triples, const Eigen::MatrixXd& q_z,
                                  const WorkerBeta& prior, const WorkerBeta& current, std::size_t m,
                                  double scale = 1.0);
BetaNatGrad beta_natural_gradient(const AnnotationStore& store, const Eigen::MatrixXd& q_z, const WorkerBeta& prior,
                                  const WorkerBeta& current, std::size_t m);

struct AnnotationBatch {
  std::vector<Annotation> triples;
  double scale = 1.0;  // N_a / |S|
};

AnnotationBatch sample_annotation_minibatch(const AnnotationStore& store, std::size_t batch_size,
                                            std::mt19937_64& rng);

}  // namespace scdc

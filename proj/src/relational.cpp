#include "scdc/relational.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "scdc/error.hpp"

namespace scdc {

namespace {

double clamp_accuracy(double a, const char* what) {
  if (!(a > 0.0 && a < 1.0)) {
    throw DomainError(std::string(what) + " must lie strictly inside (0, 1), got " + std::to_string(a));
  }
  return std::clamp(a, kAccuracyFloor, 1.0 - kAccuracyFloor);
}

double same_cluster_probability(const Eigen::MatrixXd& q_z, std::size_t i, std::size_t j) {
  const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
  if (ii >= q_z.rows() || jj >= q_z.rows()) throw ShapeError("annotation endpoint outside the responsibility matrix");
  return q_z.row(ii).dot(q_z.row(jj));
}

}  // namespace

AnnotationStore::AnnotationStore(std::size_t num_items, std::size_t num_workers)
    : num_items_(num_items), num_workers_(num_workers), incident_(num_items) {}

std::optional<int> AnnotationStore::label(std::size_t i, std::size_t j, std::size_t m) const {
  if (i > j) std::swap(i, j);
  if (j >= num_items_) return std::nullopt;
  for (std::size_t t : incident_[i]) {
    const Annotation& a = triples_[t];
    if (a.i == i && a.j == j && a.m == m) return a.label;
  }
  return std::nullopt;
}

void AnnotationStore::add(std::size_t i, std::size_t j, std::size_t m, int label) {
  if (i == j) throw InvalidParameter("annotation: self-pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
  if (i > j) std::swap(i, j);
  if (j >= num_items_) throw InvalidParameter("annotation: item index " + std::to_string(j) + " out of range");
  if (m >= num_workers_) throw InvalidParameter("annotation: worker index " + std::to_string(m) + " out of range");
  if (label != 0 && label != 1) throw InvalidParameter("annotation: label must be 0 or 1");
  if (auto existing = this->label(i, j, m)) {
    if (*existing == label) return;
    throw InvalidParameter("annotation: conflicting labels for pair (" + std::to_string(i) + "," +
                           std::to_string(j) + ") from worker " + std::to_string(m));
  }
  triples_.push_back({i, j, m, label});
  incident_[i].push_back(triples_.size() - 1);
  incident_[j].push_back(triples_.size() - 1);
}

std::size_t AnnotationStore::num_annotated_items() const {
  return static_cast<std::size_t>(std::count_if(incident_.begin(), incident_.end(), [](const auto& v) { return !v.empty(); }));
}

std::vector<std::size_t> AnnotationStore::annotated_items() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < num_items_; ++i) {
    if (!incident_[i].empty()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> AnnotationStore::per_worker_counts() const {
  std::vector<std::size_t> counts(num_workers_, 0);
  for (const Annotation& a : triples_) ++counts[a.m];
  return counts;
}

WorkerAccuracy WorkerAccuracy::point(std::span<const std::pair<double, double>> alpha_beta) {
  WorkerAccuracy w;
  for (const auto& [alpha, beta] : alpha_beta) {
    const double a = clamp_accuracy(alpha, "alpha"), b = clamp_accuracy(beta, "beta");
    w.logs_.push_back({std::log(a), std::log1p(-a), std::log(b), std::log1p(-b)});
  }
  return w;
}

WorkerAccuracy WorkerAccuracy::posterior(std::span<const WorkerBeta> posteriors) {
  WorkerAccuracy w;
  w.bayesian_ = true;
  for (const WorkerBeta& p : posteriors) {
    const Eigen::Vector2d ea = expfam::beta_expected_stats(p.alpha);
    const Eigen::Vector2d eb = expfam::beta_expected_stats(p.beta);
    w.logs_.push_back({ea[0], ea[1], eb[0], eb[1]});
  }
  return w;
}

double WorkerAccuracy::weight(std::size_t m) const {
  const WorkerLogs& w = logs(m);
  return (w.log_alpha - w.log1m_alpha) + (w.log_beta - w.log1m_beta);
}

double annotation_log_likelihood(int label, bool same_cluster, double alpha, double beta) {
  const double a = clamp_accuracy(alpha, "alpha"), b = clamp_accuracy(beta, "beta");
  if (same_cluster) return label == 1 ? std::log(a) : std::log1p(-a);
  return label == 1 ? std::log1p(-b) : std::log(b);
}

double message_weight(int label, const WorkerLogs& w) {
  return label == 1 ? w.log_alpha - w.log1m_beta : w.log1m_alpha - w.log_beta;
}

double annotation_offset(int label, const WorkerLogs& w) { return label == 1 ? w.log1m_beta : w.log_beta; }

double message_weight(const AnnotationStore& store, std::size_t i, std::size_t j, std::size_t m,
                      const WorkerAccuracy& workers) {
  const auto l = store.label(i, j, m);
  return l ? message_weight(*l, workers.logs(m)) : 0.0;
}

double worker_weight(double alpha, double beta) {
  const double a = clamp_accuracy(alpha, "alpha"), b = clamp_accuracy(beta, "beta");
  return std::log(a / (1.0 - a)) + std::log(b / (1.0 - b));
}

double expected_rel_loglik(std::span<const Annotation> triples, const Eigen::MatrixXd& q_z,
                           const WorkerAccuracy& workers) {
  double total = 0.0;
  for (const Annotation& a : triples) {
    const WorkerLogs& w = workers.logs(a.m);
    total += message_weight(a.label, w) * same_cluster_probability(q_z, a.i, a.j) + annotation_offset(a.label, w);
  }
  return total;
}

double expected_rel_loglik(const AnnotationStore& store, const Eigen::MatrixXd& q_z, const WorkerAccuracy& workers) {
  return expected_rel_loglik(std::span<const Annotation>(store.triples()), q_z, workers);
}

BetaNatGrad beta_natural_gradient(std::span<const Annotation> triples, const Eigen::MatrixXd& q_z,
                                  const WorkerBeta& prior, const WorkerBeta& current, std::size_t m, double scale) {
  Eigen::Vector2d ca = Eigen::Vector2d::Zero(), cb = Eigen::Vector2d::Zero();
  for (const Annotation& a : triples) {
    if (a.m != m) continue;
    const double p = same_cluster_probability(q_z, a.i, a.j);
    const double l = a.label;
    ca += p * Eigen::Vector2d(l, 1.0 - l);
    cb += (1.0 - p) * Eigen::Vector2d(1.0 - l, l);
  }
  BetaNatGrad g;
  g.alpha = prior.alpha.eta + scale * ca - current.alpha.eta;
  g.beta = prior.beta.eta + scale * cb - current.beta.eta;
  return g;
}

BetaNatGrad beta_natural_gradient(const AnnotationStore& store, const Eigen::MatrixXd& q_z, const WorkerBeta& prior,
                                  const WorkerBeta& current, std::size_t m) {
  return beta_natural_gradient(std::span<const Annotation>(store.triples()), q_z, prior, current, m, 1.0);
}

AnnotationBatch sample_annotation_minibatch(const AnnotationStore& store, std::size_t batch_size,
                                            std::mt19937_64& rng) {
  if (batch_size == 0) throw InvalidParameter("annotation batch size must be at least 1");
  const std::size_t n = store.num_annotations();
  AnnotationBatch batch;
  if (batch_size >= n) {
    batch.triples = store.triples();
    return batch;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first batch_size slots are a uniform subset.
  for (std::size_t k = 0; k < batch_size; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  for (std::size_t k = 0; k < batch_size; ++k) batch.triples.push_back(store.triples()[idx[k]]);
  batch.scale = static_cast<double>(n) / static_cast<double>(batch_size);
  return batch;
}

}  // namespace scdc

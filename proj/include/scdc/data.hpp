#pragma once

// Datasets, the Pinwheel generator, simulated worker annotations, text file
// formats and minibatch schedules.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scdc/relational.hpp"

namespace scdc {

struct Dataset {
  Eigen::MatrixXd observations;  // N x D
  std::optional<std::vector<int>> labels;
  std::vector<std::size_t> annotated;

  std::size_t size() const { return static_cast<std::size_t>(observations.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(observations.cols()); }
  std::size_t num_classes() const;
  void validate() const;
};

struct PinwheelConfig {
  std::size_t clusters = 5;
  std::size_t per_cluster = 100;
  double radial_std = 0.3;
  double tangential_std = 0.05;
  double rate = 0.25;
  double scale = 1.0;
};

/// Spiral arms: per point f = (1 + radial_std e1, tangential_std e2), rotated
/// by the arm's base angle plus rate * exp(f1). Points are ordered by arm.
Dataset pinwheel_generate(const PinwheelConfig& config, std::mt19937_64& rng);

struct WorkerPool {
  std::vector<std::pair<double, double>> accuracy;  // (alpha_m, beta_m)

  static WorkerPool uniform(std::size_t workers, double alpha, double beta);
  std::size_t size() const { return accuracy.size(); }
  void validate() const;
};

struct SimulationResult {
  AnnotationStore store;
  std::vector<std::size_t> subset;
  std::vector<std::string> warnings;
};

/// Draws the annotated subset uniformly, then for each worker draws distinct
/// pairs from it. A same-cluster pair is labeled 1 with probability alpha_m; a
/// different-cluster pair is labeled 0 with probability beta_m. With
/// `balanced`, each worker gets as many same-cluster pairs as
/// different-cluster pairs (up to one).
SimulationResult simulate_annotations(const Dataset& data, const WorkerPool& pool, std::size_t pairs_per_worker,
                                      std::size_t subset_size, std::mt19937_64& rng, bool balanced = false);

/// Each epoch is a fresh shuffle of 0..n-1 cut into consecutive batches; the
/// last batch may be short.
class MinibatchIterator {
 public:
  MinibatchIterator(std::size_t n, std::size_t batch_size, std::mt19937_64& rng);
  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::mt19937_64* rng_;
};

/// Per-column zero mean, unit variance (constant columns are only centered).
void standardize(Eigen::MatrixXd& x);

void save_observations(const std::filesystem::path& path, const Eigen::MatrixXd& x);
Eigen::MatrixXd load_observations(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> load_labels(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const AnnotationStore& store);
/// num_workers = 0 infers the pool size as one more than the largest worker
/// index present.
AnnotationStore load_annotations(const std::filesystem::path& path, std::size_t num_items, std::size_t num_workers = 0);

}  // namespace scdc

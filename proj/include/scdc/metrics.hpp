#pragma once

// Partition comparison scores and worker-weight diagnostics.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace scdc {

/// counts(p, t) = number of items with the p-th distinct predicted label and
/// the t-th distinct true label (distinct labels in increasing order).
struct ContingencyTable {
  Eigen::MatrixXd counts;
  std::vector<int> pred_labels;
  std::vector<int> true_labels;

  double total() const { return counts.sum(); }
};

ContingencyTable contingency(std::span<const int> pred, std::span<const int> truth);

/// Mutual information over sqrt(H(pred) H(truth)). When either entropy is
/// zero the score is 1 for identical partitions and 0 otherwise.
double nmi(std::span<const int> pred, std::span<const int> truth);

/// Minimum-cost assignment; result[r] is the column assigned to row r. A
/// rectangular input is padded with zero-cost rows or columns, and rows
/// matched to padding get -1.
std::vector<int> hungarian_solve(const Eigen::MatrixXd& cost);

/// Fraction of items matched under the best one-to-one label mapping.
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Spearman correlation between estimated and true worker weights.
double worker_weight_recovery(std::span<const double> estimated, std::span<const double> truth);

}  // namespace scdc

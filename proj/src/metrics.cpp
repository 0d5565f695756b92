#include "scdc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scdc/error.hpp"

namespace scdc {

namespace {

std::vector<int> distinct(std::span<const int> x) {
  std::vector<int> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

Eigen::Index position(const std::vector<int>& sorted, int value) {
  return std::lower_bound(sorted.begin(), sorted.end(), value) - sorted.begin();
}

double entropy(const Eigen::VectorXd& counts, double n) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0.0) h -= (counts[k] / n) * std::log(counts[k] / n);
  }
  return h;
}

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    while (e + 1 < order.size() && x[order[e + 1]] == x[order[s]]) ++e;
    const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
    for (std::size_t t = s; t <= e; ++t) r[order[t]] = avg;
    s = e + 1;
  }
  return r;
}

}  // namespace

ContingencyTable contingency(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw ShapeError("contingency: label vectors differ in length");
  ContingencyTable t;
  t.pred_labels = distinct(pred);
  t.true_labels = distinct(truth);
  t.counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.pred_labels.size()),
                                   static_cast<Eigen::Index>(t.true_labels.size()));
  for (std::size_t n = 0; n < pred.size(); ++n) {
    t.counts(position(t.pred_labels, pred[n]), position(t.true_labels, truth[n])) += 1.0;
  }
  return t;
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) throw ShapeError("nmi: empty labelings");
  const ContingencyTable t = contingency(pred, truth);
  const double n = t.total();
  const Eigen::VectorXd rows = t.counts.rowwise().sum();
  const Eigen::VectorXd cols = t.counts.colwise().sum().transpose();
  const double hu = entropy(rows, n), hv = entropy(cols, n);
  if (hu == 0.0 || hv == 0.0) {
    // Identical partitions here means both are a single block.
    return (t.counts.rows() == 1 && t.counts.cols() == 1) ? 1.0 : 0.0;
  }
  double mi = 0.0;
  for (Eigen::Index a = 0; a < t.counts.rows(); ++a) {
    for (Eigen::Index b = 0; b < t.counts.cols(); ++b) {
      const double c = t.counts(a, b);
      if (c > 0.0) mi += (c / n) * std::log(c * n / (rows[a] * cols[b]));
    }
  }
  return std::clamp(mi / std::sqrt(hu * hv), 0.0, 1.0);
}

std::vector<int> hungarian_solve(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw InvalidParameter("hungarian_solve: non-finite cost");
  const Eigen::Index rows = cost.rows(), cols = cost.cols();
  const Eigen::Index n = std::max(rows, cols);
  if (n == 0) return {};
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  a.topLeftCorner(rows, cols) = cost;

  // Shortest augmenting paths with row/column potentials (1-based, index 0 is
  // the virtual start column).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(p[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> assignment(static_cast<std::size_t>(rows), -1);
  for (Eigen::Index j = 1; j <= n; ++j) {
    const Eigen::Index i = p[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= rows && j <= cols) assignment[static_cast<std::size_t>(i - 1)] = static_cast<int>(j - 1);
  }
  return assignment;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) throw ShapeError("clustering_accuracy: empty labelings");
  const ContingencyTable t = contingency(pred, truth);
  const std::vector<int> match = hungarian_solve(-t.counts);
  double hits = 0.0;
  for (std::size_t r = 0; r < match.size(); ++r) {
    if (match[r] >= 0) hits += t.counts(static_cast<Eigen::Index>(r), match[r]);
  }
  return hits / t.total();
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("spearman: need two equal-length series of length >= 2");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double worker_weight_recovery(std::span<const double> estimated, std::span<const double> truth) {
  return spearman(estimated, truth);
}

}  // namespace scdc

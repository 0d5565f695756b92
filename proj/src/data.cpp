#include "scdc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>

#include "scdc/error.hpp"

namespace scdc {

namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::size_t Dataset::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
}

void Dataset::validate() const {
  if (!observations.allFinite()) throw InvalidParameter("dataset: non-finite observation");
  if (labels) {
    if (labels->size() != size()) throw ShapeError("dataset: label count differs from observation count");
    for (int l : *labels) {
      if (l < 0) throw InvalidParameter("dataset: negative label");
    }
  }
  std::vector<std::size_t> a = annotated;
  std::sort(a.begin(), a.end());
  if (std::adjacent_find(a.begin(), a.end()) != a.end()) throw InvalidParameter("dataset: duplicate annotated index");
  if (!a.empty() && a.back() >= size()) throw InvalidParameter("dataset: annotated index out of range");
}

Dataset pinwheel_generate(const PinwheelConfig& c, std::mt19937_64& rng) {
  if (c.clusters == 0 || c.per_cluster == 0) throw InvalidParameter("pinwheel: counts must be positive");
  if (c.radial_std < 0.0 || c.tangential_std < 0.0 || !(c.scale > 0.0)) {
    throw InvalidParameter("pinwheel: scales must be nonnegative and the output scale positive");
  }
  const std::size_t n = c.clusters * c.per_cluster;
  Dataset d;
  d.observations.resize(static_cast<Eigen::Index>(n), 2);
  d.labels.emplace();
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t label = t / c.per_cluster;
    const double f0 = 1.0 + c.radial_std * n01(rng);
    const double f1 = c.tangential_std * n01(rng);
    const double base = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(c.clusters);
    const double angle = base + c.rate * std::exp(f0);
    const double cs = std::cos(angle), sn = std::sin(angle);
    // Row vector f times the rotation [[cos, -sin], [sin, cos]].
    d.observations(static_cast<Eigen::Index>(t), 0) = c.scale * (f0 * cs + f1 * sn);
    d.observations(static_cast<Eigen::Index>(t), 1) = c.scale * (-f0 * sn + f1 * cs);
    d.labels->push_back(static_cast<int>(label));
  }
  return d;
}

WorkerPool WorkerPool::uniform(std::size_t workers, double alpha, double beta) {
  WorkerPool p;
  p.accuracy.assign(workers, {alpha, beta});
  return p;
}

void WorkerPool::validate() const {
  if (accuracy.empty()) throw InvalidParameter("worker pool is empty");
  for (const auto& [a, b] : accuracy) {
    if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0)) {
      throw InvalidParameter("worker accuracies must lie in [0, 1]");
    }
  }
}

SimulationResult simulate_annotations(const Dataset& data, const WorkerPool& pool, std::size_t pairs_per_worker,
                                      std::size_t subset_size, std::mt19937_64& rng, bool balanced) {
  if (!data.labels) throw InvalidParameter("simulate_annotations: dataset has no ground-truth labels");
  pool.validate();
  const std::size_t n = data.size();
  if (subset_size > n) throw InvalidParameter("simulate_annotations: subset larger than the dataset");
  if (subset_size < 2) throw InvalidParameter("simulate_annotations: subset needs at least two items");

  SimulationResult res;
  res.store = AnnotationStore(n, pool.size());

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t k = 0; k < subset_size; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(perm[k], perm[pick(rng)]);
  }
  res.subset.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(subset_size));
  std::sort(res.subset.begin(), res.subset.end());

  const auto& y = *data.labels;
  const std::size_t max_pairs = subset_size * (subset_size - 1) / 2;
  std::size_t pairs = pairs_per_worker;
  if (pairs > max_pairs) {
    res.warnings.push_back("pairs per worker clamped from " + std::to_string(pairs) + " to " +
                           std::to_string(max_pairs));
    pairs = max_pairs;
  }

  std::uniform_int_distribution<std::size_t> item(0, subset_size - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t m = 0; m < pool.size(); ++m) {
    const auto [alpha, beta] = pool.accuracy[m];
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    std::size_t want_same = balanced ? (pairs + 1) / 2 : 0;
    std::size_t want_diff = balanced ? pairs / 2 : 0;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 1000 * (pairs + 10);
    while (chosen.size() < pairs && attempts++ < max_attempts) {
      std::size_t a = res.subset[item(rng)], b = res.subset[item(rng)];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      if (chosen.count({a, b})) continue;
      const bool same = y[a] == y[b];
      if (balanced) {
        if (same && want_same == 0) continue;
        if (!same && want_diff == 0) continue;
        (same ? want_same : want_diff) -= 1;
      }
      chosen.insert({a, b});
      const double r = u01(rng);
      const int label = same ? (r < alpha ? 1 : 0) : (r < beta ? 0 : 1);
      res.store.add(a, b, m, label);
    }
    if (chosen.size() < pairs) {
      res.warnings.push_back("worker " + std::to_string(m) + ": only " + std::to_string(chosen.size()) +
                             " pairs could be drawn");
    }
  }
  return res;
}

MinibatchIterator::MinibatchIterator(std::size_t n, std::size_t batch_size, std::mt19937_64& rng)
    : n_(n), batch_size_(batch_size), rng_(&rng) {
  if (batch_size == 0) throw InvalidParameter("batch size must be at least 1");
}

std::vector<std::vector<std::size_t>> MinibatchIterator::next_epoch() {
  std::vector<std::size_t> idx(n_);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t k = n_; k > 1; --k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::swap(idx[k - 1], idx[pick(*rng_)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_; start += batch_size_) {
    const std::size_t end = std::min(n_, start + batch_size_);
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start), idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void standardize(Eigen::MatrixXd& x) {
  if (x.rows() == 0) return;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    x.col(c).array() -= mean;
    const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(x.rows()));
    if (sd > 0.0) x.col(c) /= sd;
  }
}

void save_observations(const std::filesystem::path& path, const Eigen::MatrixXd& x) {
  std::ofstream out = open_out(path);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (c) out << ',';
      out << format_double(x(r, c));
    }
    out << '\n';
  }
  finish_write(out, path);
}

Eigen::MatrixXd load_observations(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (std::string_view field : split_commas(line)) {
      double v = 0.0;
      if (!parse_number(field, v) || !std::isfinite(v)) {
        throw ParseError(where(path, lineno) + ": invalid number '" + std::string(field) + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(where(path, lineno) + ": expected " + std::to_string(rows.front().size()) + " values, found " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return x;
}

void save_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream out = open_out(path);
  for (int l : labels) out << l << '\n';
  finish_write(out, path);
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    int v = 0;
    if (!parse_number(t, v) || v < 0) throw ParseError(where(path, lineno) + ": invalid label '" + std::string(t) + "'");
    labels.push_back(v);
  }
  return labels;
}

void save_annotations(const std::filesystem::path& path, const AnnotationStore& store) {
  std::ofstream out = open_out(path);
  for (const Annotation& a : store.triples()) out << a.i << ',' << a.j << ',' << a.m << ',' << a.label << '\n';
  finish_write(out, path);
}

AnnotationStore load_annotations(const std::filesystem::path& path, std::size_t num_items, std::size_t num_workers) {
  std::ifstream in = open_in(path);
  struct Row {
    std::size_t i, j, m;
    int label;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t max_worker = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != 4) {
      throw ParseError(where(path, lineno) + ": expected 4 fields i,j,m,label, found " + std::to_string(fields.size()));
    }
    Row r{0, 0, 0, 0, lineno};
    if (!parse_number(fields[0], r.i) || !parse_number(fields[1], r.j) || !parse_number(fields[2], r.m) ||
        !parse_number(fields[3], r.label)) {
      throw ParseError(where(path, lineno) + ": malformed row '" + line + "'");
    }
    max_worker = std::max(max_worker, r.m);
    rows.push_back(r);
  }
  const std::size_t workers = num_workers > 0 ? num_workers : (rows.empty() ? 0 : max_worker + 1);
  AnnotationStore store(num_items, workers);
  for (const Row& r : rows) {
    try {
      store.add(r.i, r.j, r.m, r.label);
    } catch (const InvalidParameter& e) {
      throw ParseError(where(path, r.line) + ": " + e.what());
    }
  }
  return store;
}

}  // namespace scdc

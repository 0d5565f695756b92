#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>
#include <string>

#include "scdc/amortized.hpp"
#include "scdc/checkpoint.hpp"
#include "scdc/config.hpp"
#include "scdc/data.hpp"
#include "scdc/error.hpp"
#include "scdc/metrics.hpp"
#include "scdc/mixture.hpp"
#include "scdc/vmp.hpp"

namespace py = pybind11;
using namespace scdc;

namespace {

using IntRows = Eigen::Matrix<long long, Eigen::Dynamic, 4, Eigen::RowMajor>;

IntRows annotation_rows(const AnnotationStore& store) {
  IntRows out(static_cast<Eigen::Index>(store.num_annotations()), 4);
  Eigen::Index r = 0;
  for (const Annotation& a : store.triples()) {
    out.row(r++) << static_cast<long long>(a.i), static_cast<long long>(a.j), static_cast<long long>(a.m), a.label;
  }
  return out;
}

AnnotationStore store_from(const IntRows& rows, std::size_t num_items, std::size_t num_workers) {
  std::size_t M = num_workers;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    if (rows(r, 0) < 0 || rows(r, 1) < 0 || rows(r, 2) < 0) throw InvalidParameter("negative annotation index");
    M = std::max(M, static_cast<std::size_t>(rows(r, 2)) + 1);
  }
  AnnotationStore store(num_items, M);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    store.add(static_cast<std::size_t>(rows(r, 0)), static_cast<std::size_t>(rows(r, 1)),
              static_cast<std::size_t>(rows(r, 2)), static_cast<int>(rows(r, 3)));
  }
  return store;
}

RunConfig config_from(const py::dict& settings) {
  RunConfig cfg;
  for (const auto& [k, v] : settings) cfg.set(py::str(k), py::str(v));
  cfg.validate();
  if (!cfg.seed) throw UsageError("a seed is required");
  return cfg;
}

// A trained model plus its training history.
struct Model {
  Checkpoint checkpoint;
  std::vector<vmp::EpochRecord> history;
  bool diverged = false;
  std::string message;

  std::size_t num_workers() const {
    return checkpoint.bayes ? checkpoint.bayes->globals.M() : checkpoint.scdc->point.M();
  }

  std::vector<int> predict(const Eigen::MatrixXd& x, const IntRows& annotations) {
    if (checkpoint.scdc) return amortized::predict_cluster(*checkpoint.scdc, x);
    const AnnotationStore store = store_from(annotations, static_cast<std::size_t>(x.rows()), num_workers());
    return vmp::predict_clusters(vmp::infer_responsibilities(*checkpoint.bayes, x, store));
  }

  // Rows of (alpha, beta, weight) per worker.
  Eigen::MatrixXd workers() const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(num_workers()), 3);
    if (checkpoint.bayes) {
      const auto& w = checkpoint.bayes->globals.workers;
      const WorkerAccuracy acc = WorkerAccuracy::posterior(w);
      for (std::size_t m = 0; m < w.size(); ++m) {
        const double a = w[m].alpha.tau1() / (w[m].alpha.tau1() + w[m].alpha.tau2());
        const double b = w[m].beta.tau1() / (w[m].beta.tau1() + w[m].beta.tau2());
        out.row(static_cast<Eigen::Index>(m)) << a, b, acc.weight(m);
      }
    } else {
      const auto ab = checkpoint.scdc->point.accuracies();
      for (std::size_t m = 0; m < ab.size(); ++m) {
        out.row(static_cast<Eigen::Index>(m)) << ab[m].first, ab[m].second, worker_weight(ab[m].first, ab[m].second);
      }
    }
    return out;
  }

  std::size_t effective_k(double threshold) const {
    return checkpoint.bayes ? effective_components(checkpoint.bayes->globals, threshold)
                            : amortized::effective_components(*checkpoint.scdc, threshold);
  }
};

Model train(const Eigen::MatrixXd& x, const std::optional<std::vector<int>>& labels, const IntRows& annotations,
            std::size_t num_workers, const py::dict& settings) {
  const RunConfig cfg = config_from(settings);
  Dataset data;
  data.observations = x;
  data.labels = labels;
  const AnnotationStore store = store_from(annotations, data.size(), num_workers);
  data.annotated = store.annotated_items();
  std::mt19937_64 rng(*cfg.seed);
  Model out;
  out.checkpoint.model = cfg.model;
  py::gil_scoped_release release;
  if (cfg.model == "bayes") {
    vmp::BayesTrainResult r = vmp::train_bayes_scdc(data, store, cfg.bayes(), rng);
    out.checkpoint.bayes = std::move(r.model);
    out.history = std::move(r.history);
    out.diverged = r.diverged;
    out.message = r.message;
  } else {
    amortized::ScdcTrainResult r = amortized::train_scdc(data, store, cfg.scdc(), rng);
    out.checkpoint.scdc = std::move(r.model);
    out.history = std::move(r.history);
    out.diverged = r.diverged;
    out.message = r.message;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_scdc, m) {
  m.doc() = "Semi-crowdsourced deep clustering";

  // Translators registered later are tried first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<InvalidParameter>(m, "InvalidParameter", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  m.def(
      "pinwheel",
      [](std::size_t clusters, std::size_t per_cluster, std::uint64_t seed, double radial_std, double tangential_std,
         double rate) {
        PinwheelConfig c;
        c.clusters = clusters;
        c.per_cluster = per_cluster;
        c.radial_std = radial_std;
        c.tangential_std = tangential_std;
        c.rate = rate;
        std::mt19937_64 rng(seed);
        Dataset d = pinwheel_generate(c, rng);
        return py::make_tuple(d.observations, *d.labels);
      },
      py::arg("clusters") = 5, py::arg("per_cluster") = 100, py::kw_only(), py::arg("seed"),
      py::arg("radial_std") = 0.3, py::arg("tangential_std") = 0.05, py::arg("rate") = 0.25,
      "Pinwheel observations (N x 2) and arm labels.");

  m.def(
      "simulate_annotations",
      [](const std::vector<int>& labels, const std::vector<std::pair<double, double>>& accuracy,
         std::size_t pairs, std::size_t subset, std::uint64_t seed, bool balanced) {
        Dataset d;
        d.labels = labels;
        d.observations = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), 1);
        WorkerPool pool{accuracy};
        std::mt19937_64 rng(seed);
        return annotation_rows(simulate_annotations(d, pool, pairs, subset, rng, balanced).store);
      },
      py::arg("labels"), py::arg("accuracy"), py::arg("pairs"), py::arg("subset"), py::kw_only(), py::arg("seed"),
      py::arg("balanced") = false, "Rows (i, j, worker, label) for workers with the given (alpha, beta).");

  m.def("clustering_accuracy", [](const std::vector<int>& p, const std::vector<int>& t) {
    return clustering_accuracy(p, t);
  });
  m.def("nmi", [](const std::vector<int>& p, const std::vector<int>& t) { return nmi(p, t); });
  m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman(a, b); });
  m.def("worker_weight", &worker_weight, py::arg("alpha"), py::arg("beta"));
  m.def("config_keys", &RunConfig::keys);

  py::class_<vmp::EpochRecord>(m, "EpochRecord")
      .def_readonly("epoch", &vmp::EpochRecord::epoch)
      .def_readonly("objective", &vmp::EpochRecord::objective)
      .def_readonly("accuracy", &vmp::EpochRecord::accuracy)
      .def_readonly("nmi", &vmp::EpochRecord::nmi)
      .def_readonly("effective_k", &vmp::EpochRecord::effective_k);

  py::class_<Model>(m, "Model")
      .def_property_readonly("kind", [](const Model& s) { return s.checkpoint.model; })
      .def_readonly("history", &Model::history)
      .def_readonly("diverged", &Model::diverged)
      .def_readonly("message", &Model::message)
      .def("predict", &Model::predict, py::arg("x"), py::arg("annotations") = IntRows(0, 4))
      .def("workers", &Model::workers, "Rows of (alpha, beta, weight).")
      .def("effective_k", &Model::effective_k, py::arg("threshold"))
      .def("save", [](const Model& s, const std::filesystem::path& p) { save_checkpoint(p, s.checkpoint); })
      .def_static("load", [](const std::filesystem::path& p) {
        Model out;
        out.checkpoint = load_checkpoint(p);
        return out;
      });

  m.def("train", &train, py::arg("x"), py::arg("labels") = std::nullopt, py::arg("annotations") = IntRows(0, 4),
        py::arg("num_workers") = 0, py::arg("config") = py::dict(),
        "Train with a dict of run-config keys; `seed` is required.");
}

// scdc: generate data, simulate annotators, train, evaluate and inspect.
//
// Exit codes: 0 success, 1 usage, 2 I/O or parse failure, 3 numerical
// divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scdc/amortized.hpp"
#include "scdc/checkpoint.hpp"
#include "scdc/config.hpp"
#include "scdc/data.hpp"
#include "scdc/error.hpp"
#include "scdc/metrics.hpp"
#include "scdc/mixture.hpp"
#include "scdc/relational.hpp"
#include "scdc/vmp.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace scdc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitDivergence = 3;

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  return out;
}

struct WorkerRow {
  double alpha = 0.0;
  double beta = 0.0;
  double weight = 0.0;
};

std::vector<WorkerRow> worker_rows(const Checkpoint& cp) {
  std::vector<WorkerRow> out;
  if (cp.bayes) {
    const auto& workers = cp.bayes->globals.workers;
    const WorkerAccuracy acc = WorkerAccuracy::posterior(workers);
    for (std::size_t m = 0; m < workers.size(); ++m) {
      const auto mean = [](const expfam::BetaNat& b) { return b.tau1() / (b.tau1() + b.tau2()); };
      out.push_back({mean(workers[m].alpha), mean(workers[m].beta), acc.weight(m)});
    }
  } else if (cp.scdc) {
    for (const auto& [a, b] : cp.scdc->point.accuracies()) out.push_back({a, b, worker_weight(a, b)});
  }
  return out;
}

json workers_record(const std::vector<WorkerRow>& rows) {
  json w = json::array();
  for (std::size_t m = 0; m < rows.size(); ++m) {
    w.push_back({{"worker", m}, {"alpha", rows[m].alpha}, {"beta", rows[m].beta}, {"weight", rows[m].weight}});
  }
  return {{"workers", w}};
}

void print_worker_table(const std::vector<WorkerRow>& rows) {
  std::printf("worker  alpha     beta      weight\n");
  for (std::size_t m = 0; m < rows.size(); ++m) {
    std::printf("%6zu  %.6f  %.6f  %.6f\n", m, rows[m].alpha, rows[m].beta, rows[m].weight);
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_metrics(const fs::path& path, const std::vector<vmp::EpochRecord>& history, bool labeled,
                   const std::vector<WorkerRow>& workers) {
  std::ofstream out = open_out(path);
  for (const vmp::EpochRecord& r : history) {
    json rec = {{"epoch", r.epoch}, {"objective", r.objective}, {"effective_k", r.effective_k}};
    if (labeled) {
      rec["accuracy"] = r.accuracy;
      rec["nmi"] = r.nmi;
    }
    out << rec.dump() << '\n';
  }
  out << workers_record(workers).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

// Model, data and store for one checkpoint-based command.
struct Loaded {
  Dataset data;
  AnnotationStore store;
};

Loaded load_inputs(const fs::path& data_path, const fs::path& labels_path, const fs::path& annotations_path,
                   std::size_t num_workers) {
  Loaded in;
  in.data.observations = load_observations(data_path);
  const std::size_t N = in.data.size();
  if (!labels_path.empty()) {
    in.data.labels = load_labels(labels_path);
    if (in.data.labels->size() != N) {
      throw ParseError(labels_path.string() + ": " + std::to_string(in.data.labels->size()) + " labels for " +
                       std::to_string(N) + " observations");
    }
  }
  in.store = annotations_path.empty() ? AnnotationStore(N, num_workers)
                                      : load_annotations(annotations_path, N, num_workers);
  in.data.annotated = in.store.annotated_items();
  return in;
}

// ------------------------------------------------------------ gen-pinwheel

struct GenOptions {
  PinwheelConfig pinwheel;
  std::optional<std::uint64_t> seed;
  fs::path out = "pinwheel.csv";
  fs::path labels = "pinwheel_labels.txt";
};

int run_gen(const GenOptions& o) {
  std::mt19937_64 rng(*o.seed);
  const Dataset d = pinwheel_generate(o.pinwheel, rng);
  save_observations(o.out, d.observations);
  save_labels(o.labels, *d.labels);
  std::printf("seed %llu\n", static_cast<unsigned long long>(*o.seed));
  std::printf("wrote %zu rows to %s and labels to %s\n", d.size(), o.out.string().c_str(), o.labels.string().c_str());
  return 0;
}

// ---------------------------------------------------- simulate-annotations

struct SimOptions {
  fs::path labels;
  fs::path data;
  std::size_t workers = 20;
  std::size_t pairs = 49;
  double alpha = 0.9;
  double beta = 0.9;
  std::string accuracies;
  std::size_t subset = 100;
  bool balanced = false;
  std::optional<std::uint64_t> seed;
  fs::path out = "annotations.csv";
};

int run_simulate(const SimOptions& o) {
  Dataset d;
  d.labels = load_labels(o.labels);
  const std::size_t N = d.labels->size();
  if (!o.data.empty()) {
    d.observations = load_observations(o.data);
    if (d.size() != N) throw ParseError(o.data.string() + " does not match the label count");
  } else {
    d.observations = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), 1);
  }
  WorkerPool pool = WorkerPool::uniform(o.workers, o.alpha, o.beta);
  if (!o.accuracies.empty()) {
    pool.accuracy.clear();
    for (double a : parse_doubles(o.accuracies)) pool.accuracy.emplace_back(a, a);
  }
  std::mt19937_64 rng(*o.seed);
  const SimulationResult sim = simulate_annotations(d, pool, o.pairs, o.subset, rng, o.balanced);
  for (const std::string& w : sim.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  save_annotations(o.out, sim.store);
  std::printf("N_a %zu\n", sim.store.num_annotations());
  const std::vector<std::size_t> counts = sim.store.per_worker_counts();
  for (std::size_t m = 0; m < counts.size(); ++m) std::printf("worker %zu %zu\n", m, counts[m]);
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  fs::path config;
  std::map<std::string, std::string> flags;  // only those given on the command line
};

int run_train(const TrainOptions& o) {
  RunConfig cfg;
  std::map<std::string, std::string> from_file;
  if (!o.config.empty()) {
    for (const auto& [k, v] : read_config_file(o.config)) {
      cfg.set(k, v);
      from_file[k] = v;
    }
  }
  for (const auto& [k, v] : o.flags) {
    const auto it = from_file.find(k);
    if (it != from_file.end() && it->second != v) {
      std::fprintf(stderr, "notice: --%s %s overrides %s = %s from %s\n", k.c_str(), v.c_str(), k.c_str(),
                   it->second.c_str(), o.config.string().c_str());
    }
    cfg.set(k, v);
  }
  cfg.validate();
  if (!cfg.seed) throw UsageError("train requires --seed");
  if (cfg.data.empty()) throw UsageError("train requires --data");
  if (cfg.threads > 1) std::fprintf(stderr, "notice: running single-threaded; --threads %zu ignored\n", cfg.threads);
  if (cfg.checkpoint.empty()) cfg.checkpoint = "checkpoint.json";
  if (cfg.metrics.empty()) cfg.metrics = "metrics.jsonl";

  Loaded in = load_inputs(cfg.data, cfg.labels, cfg.annotations, 0);
  const std::size_t M = in.store.num_workers();
  std::mt19937_64 rng(*cfg.seed);
  Checkpoint cp;
  cp.model = cfg.model;
  std::vector<vmp::EpochRecord> history;
  std::string divergence;

  if (cfg.model == "bayes") {
    const vmp::BayesConfig bc = cfg.bayes();
    if (cfg.epochs == 0) {
      cp.bayes = vmp::init_bayes_model(in.data.dim(), M, bc, rng);
    } else {
      vmp::BayesTrainResult r = vmp::train_bayes_scdc(in.data, in.store, bc, rng);
      cp.bayes = std::move(r.model);
      history = std::move(r.history);
      if (r.diverged) divergence = r.message;
    }
  } else {
    const amortized::ScdcConfig sc = cfg.scdc();
    if (cfg.epochs == 0) {
      cp.scdc = amortized::init_scdc_model(in.data.dim(), M, sc, rng);
    } else {
      amortized::ScdcTrainResult r = amortized::train_scdc(in.data, in.store, sc, rng);
      cp.scdc = std::move(r.model);
      history = std::move(r.history);
      if (r.diverged) divergence = r.message;
    }
  }

  save_checkpoint(cfg.checkpoint, cp);
  write_metrics(cfg.metrics, history, in.data.labels.has_value(), worker_rows(cp));
  for (const vmp::EpochRecord& r : history) {
    std::printf("epoch %zu objective %.6g effective_k %zu", r.epoch, r.objective, r.effective_k);
    if (in.data.labels) std::printf(" accuracy %.4f nmi %.4f", r.accuracy, r.nmi);
    std::printf("\n");
  }
  std::printf("wrote %s and %s\n", cfg.checkpoint.string().c_str(), cfg.metrics.string().c_str());
  if (!divergence.empty()) {
    std::fprintf(stderr, "error: training diverged: %s\n", divergence.c_str());
    return kExitDivergence;
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvalOptions {
  fs::path checkpoint;
  fs::path data;
  fs::path labels;
  fs::path annotations;
  fs::path predicted;
  fs::path out;
};

int run_evaluate(const EvalOptions& o) {
  const std::vector<int> truth = load_labels(o.labels);
  std::vector<int> pred;
  std::optional<std::size_t> effective_k;
  std::vector<WorkerRow> workers;

  if (!o.predicted.empty()) {
    pred = load_labels(o.predicted);
  } else {
    if (o.checkpoint.empty()) throw UsageError("evaluate requires --checkpoint or --predicted");
    if (o.data.empty()) throw UsageError("evaluate with a checkpoint requires --data");
    Checkpoint cp = load_checkpoint(o.checkpoint);
    const std::size_t M = cp.bayes ? cp.bayes->globals.M() : cp.scdc->point.M();
    Loaded in = load_inputs(o.data, {}, o.annotations, M);
    const double threshold = 2.0 / static_cast<double>(in.data.size());
    if (cp.bayes) {
      pred = vmp::predict_clusters(vmp::infer_responsibilities(*cp.bayes, in.data.observations, in.store));
      effective_k = effective_components(cp.bayes->globals, threshold);
    } else {
      pred = amortized::predict_cluster(*cp.scdc, in.data.observations);
      effective_k = amortized::effective_components(*cp.scdc, threshold);
    }
    workers = worker_rows(cp);
  }
  if (pred.size() != truth.size()) {
    throw ParseError("predictions cover " + std::to_string(pred.size()) + " items but " + o.labels.string() + " has " +
                     std::to_string(truth.size()));
  }

  const double acc = clustering_accuracy(pred, truth);
  const double score = nmi(pred, truth);
  std::printf("accuracy %.6f\n", acc);
  std::printf("nmi %.6f\n", score);
  if (effective_k) std::printf("effective_k %zu\n", *effective_k);
  if (!workers.empty()) print_worker_table(workers);

  if (!o.out.empty()) {
    std::ofstream out = open_out(o.out);
    json rec = {{"accuracy", acc}, {"nmi", score}};
    if (effective_k) rec["effective_k"] = *effective_k;
    out << rec.dump() << '\n';
    if (!workers.empty()) out << workers_record(workers).dump() << '\n';
    if (!out) throw IoError("failed writing " + o.out.string());
  }
  return 0;
}

// --------------------------------------------------------- inspect-workers

struct InspectOptions {
  fs::path checkpoint;
  std::string truth;
};

int run_inspect(const InspectOptions& o) {
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const std::vector<WorkerRow> rows = worker_rows(cp);
  print_worker_table(rows);
  if (!o.truth.empty()) {
    const std::vector<double> acc = parse_doubles(o.truth);
    if (acc.size() != rows.size()) {
      throw UsageError("--true-accuracies lists " + std::to_string(acc.size()) + " workers, checkpoint has " +
                       std::to_string(rows.size()));
    }
    std::vector<double> est, truth;
    for (std::size_t m = 0; m < rows.size(); ++m) {
      est.push_back(rows[m].weight);
      truth.push_back(worker_weight(acc[m], acc[m]));
    }
    std::printf("spearman %.6f\n", worker_weight_recovery(est, truth));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-crowdsourced deep clustering"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* g = app.add_subcommand("gen-pinwheel", "Write a Pinwheel dataset");
  g->add_option("--clusters", gen.pinwheel.clusters)->check(CLI::PositiveNumber);
  g->add_option("--per-cluster", gen.pinwheel.per_cluster)->check(CLI::PositiveNumber);
  g->add_option("--radial-std", gen.pinwheel.radial_std);
  g->add_option("--tangential-std", gen.pinwheel.tangential_std);
  g->add_option("--rate", gen.pinwheel.rate);
  g->add_option("--scale", gen.pinwheel.scale);
  g->add_option("--seed", gen.seed)->required();
  g->add_option("--out", gen.out, "observations file");
  g->add_option("--labels-out", gen.labels, "labels file");

  SimOptions sim;
  CLI::App* s = app.add_subcommand("simulate-annotations", "Simulate pairwise worker annotations");
  s->add_option("--labels", sim.labels)->required();
  s->add_option("--data", sim.data, "observations, checked against the label count");
  s->add_option("--workers", sim.workers)->check(CLI::PositiveNumber);
  s->add_option("--pairs", sim.pairs, "pairs per worker");
  s->add_option("--alpha", sim.alpha);
  s->add_option("--beta", sim.beta);
  s->add_option("--accuracies", sim.accuracies, "comma-separated alpha = beta per worker; overrides --workers");
  s->add_option("--subset", sim.subset, "size of the annotated subset");
  s->add_flag("--balanced", sim.balanced, "as many same-cluster as different-cluster pairs per worker");
  s->add_option("--seed", sim.seed)->required();
  s->add_option("--out", sim.out);

  TrainOptions train;
  std::map<std::string, std::string> train_values;
  CLI::App* t = app.add_subcommand("train", "Train BayesSCDC (--model bayes) or amortized SCDC (--model scdc)");
  t->add_option("--config", train.config, "flat key = value file; flags take precedence");
  std::vector<std::pair<std::string, CLI::Option*>> train_opts;
  for (const std::string& key : RunConfig::keys()) {
    train_opts.emplace_back(key, t->add_option("--" + key, train_values[key]));
  }

  EvalOptions ev;
  CLI::App* e = app.add_subcommand("evaluate", "Score a checkpoint or a prediction file against labels");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_option("--data", ev.data);
  e->add_option("--labels", ev.labels)->required();
  e->add_option("--annotations", ev.annotations, "used for transductive inference with a bayes checkpoint");
  e->add_option("--predicted", ev.predicted, "labels file to score instead of a checkpoint");
  e->add_option("--out", ev.out, "metrics file");

  InspectOptions ins;
  CLI::App* w = app.add_subcommand("inspect-workers", "Print estimated worker accuracies and weights");
  w->add_option("--checkpoint", ins.checkpoint)->required();
  w->add_option("--true-accuracies", ins.truth, "comma-separated true alpha = beta; prints the rank correlation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (g->parsed()) return run_gen(gen);
    if (s->parsed()) return run_simulate(sim);
    if (t->parsed()) {
      for (const auto& [key, opt] : train_opts) {
        if (opt->count() > 0) train.flags[key] = train_values[key];
      }
      return run_train(train);
    }
    if (e->parsed()) return run_evaluate(ev);
    if (w->parsed()) return run_inspect(ins);
  } catch (const UsageError& err) {
    std::fprintf(stderr, "usage error: %s\n", err.what());
    return kExitUsage;
  } catch (const InvalidParameter& err) {
    std::fprintf(stderr, "invalid parameter: %s\n", err.what());
    return kExitUsage;
  } catch (const IoError& err) {
    std::fprintf(stderr, "I/O error: %s\n", err.what());
    return kExitIo;
  } catch (const ParseError& err) {
    std::fprintf(stderr, "parse error: %s\n", err.what());
    return kExitIo;
  } catch (const TrainingDivergence& err) {
    std::fprintf(stderr, "error: training diverged: %s\n", err.what());
    return kExitDivergence;
  } catch (const LinAlgError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitDivergence;
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitUsage;
  } catch (const fs::filesystem_error& err) {
    std::fprintf(stderr, "I/O error: %s\n", err.what());
    return kExitIo;
  }
  return kExitUsage;
}

#include "scdc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "scdc/error.hpp"

namespace scdc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw UsageError("bad value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError("bad value for " + key + ": '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter num(T RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"model", [](RunConfig& c, const std::string&, const std::string& v) { c.model = v; }},
      {"K", num(&RunConfig::K)},
      {"d", num(&RunConfig::d)},
      {"epochs", num(&RunConfig::epochs)},
      {"batch_size", num(&RunConfig::batch_size)},
      {"annotation_batch_size", num(&RunConfig::annotation_batch_size)},
      {"hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.hidden = parse_list(k, v); }},
      {"skip", [](RunConfig& c, const std::string& k, const std::string& v) { c.skip = parse_bool(k, v); }},
      {"optimizer",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           nn::parse_optimizer_kind(v);
         } catch (const Error&) {
           throw UsageError("bad value for " + k + ": '" + v + "'");
         }
         c.optimizer = v;
       }},
      {"learning_rate", num(&RunConfig::learning_rate)},
      {"momentum", num(&RunConfig::momentum)},
      {"global_step", num(&RunConfig::global_step)},
      {"robbins_monro",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.robbins_monro = parse_bool(k, v); }},
      {"decay", num(&RunConfig::decay)},
      {"warmup_epochs", num(&RunConfig::warmup_epochs)},
      {"kl_warmup_epochs", num(&RunConfig::kl_warmup_epochs)},
      {"refit_iterations", num(&RunConfig::refit_iterations)},
      {"restarts", num(&RunConfig::restarts)},
      {"sweeps", num(&RunConfig::sweeps)},
      {"x_samples", num(&RunConfig::x_samples)},
      {"alpha0", num(&RunConfig::alpha0)},
      {"kappa", num(&RunConfig::kappa)},
      {"m_spread", num(&RunConfig::m_spread)},
      {"s_scale", num(&RunConfig::s_scale)},
      {"nu", num(&RunConfig::nu)},
      {"worker_a", num(&RunConfig::worker_a)},
      {"worker_b", num(&RunConfig::worker_b)},
      {"log_var_min", num(&RunConfig::log_var_min)},
      {"log_var_max", num(&RunConfig::log_var_max)},
      {"update_workers",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.update_workers = parse_bool(k, v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"threads", num(&RunConfig::threads)},
      {"data", [](RunConfig& c, const std::string&, const std::string& v) { c.data = v; }},
      {"labels", [](RunConfig& c, const std::string&, const std::string& v) { c.labels = v; }},
      {"annotations", [](RunConfig& c, const std::string&, const std::string& v) { c.annotations = v; }},
      {"checkpoint", [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }},
      {"metrics", [](RunConfig& c, const std::string&, const std::string& v) { c.metrics = v; }},
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [k, fn] : setters()) {
    if (k == key) {
      fn(*this, key, trim(value));
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& [name, fn] : setters()) k.push_back(name);
    return k;
  }();
  return out;
}

void RunConfig::validate() const {
  if (model != "bayes" && model != "scdc") throw UsageError("model must be 'bayes' or 'scdc', got '" + model + "'");
  if (K == 0 || d == 0 || batch_size == 0 || sweeps == 0 || x_samples == 0 || restarts == 0 || threads == 0) {
    throw UsageError("K, d, batch_size, sweeps, x_samples, restarts and threads must be positive");
  }
  if (hidden.empty()) throw UsageError("hidden must list at least one layer width");
  for (std::size_t h : hidden) {
    if (h == 0) throw UsageError("hidden layer widths must be positive");
  }
  if (!(log_var_min < log_var_max)) throw UsageError("log_var_min must be below log_var_max");
}

vmp::BayesConfig RunConfig::bayes() const {
  vmp::BayesConfig c;
  c.K = K;
  c.d = d;
  c.epochs = epochs;
  c.batch_size = batch_size;
  c.annotation_batch_size = annotation_batch_size;
  c.hidden = hidden;
  c.skip = skip;
  c.optimizer.kind = nn::parse_optimizer_kind(optimizer);
  if (learning_rate > 0.0) c.optimizer.learning_rate = learning_rate;
  c.optimizer.momentum = momentum;
  c.global_step = global_step;
  c.robbins_monro = robbins_monro;
  c.decay = decay;
  c.warmup_epochs = warmup_epochs;
  c.kl_warmup_epochs = kl_warmup_epochs;
  c.refit_iterations = refit_iterations;
  c.restarts = restarts;
  c.sweeps = sweeps;
  c.x_samples = x_samples;
  c.log_var_clamp = {log_var_min, log_var_max};
  c.prior = MixturePrior::sparse_default(K, d);
  if (alpha0 > 0.0) c.prior.alpha0 = alpha0;
  c.prior.niw.kappa = kappa;
  const double base = static_cast<double>(d) + kappa;
  c.prior.niw.S = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) *
                  (s_scale > 0.0 ? s_scale : base);
  c.prior.niw.nu = nu > 0.0 ? nu : base;
  c.worker_prior = {expfam::BetaNat::from_shape(worker_a, worker_b), expfam::BetaNat::from_shape(worker_a, worker_b)};
  if (m_spread > 0.0) c.init.spread = m_spread;
  c.update_workers = update_workers;
  return c;
}

amortized::ScdcConfig RunConfig::scdc() const {
  amortized::ScdcConfig c;
  c.K = K;
  c.d = d;
  c.epochs = epochs;
  c.batch_size = batch_size;
  c.annotation_batch_size = annotation_batch_size;
  c.hidden = hidden;
  c.skip = skip;
  c.optimizer.kind = nn::parse_optimizer_kind(optimizer);
  if (learning_rate > 0.0) c.optimizer.learning_rate = learning_rate;
  c.optimizer.momentum = momentum;
  c.kl_warmup_epochs = kl_warmup_epochs;
  if (m_spread > 0.0) c.mean_spread = m_spread;
  c.log_var_clamp = {log_var_min, log_var_max};
  return c;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return out;
}

}  // namespace scdc

#pragma once

// Run configuration shared by the CLI and the bindings: every setting has a
// flat `key = value` spelling, and the two training configs are derived
// from it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scdc/amortized.hpp"
#include "scdc/vmp.hpp"

namespace scdc {

struct RunConfig {
  std::string model = "bayes";  // bayes | scdc
  std::size_t K = 15;
  std::size_t d = 2;
  std::size_t epochs = 20;
  std::size_t batch_size = 50;
  std::size_t annotation_batch_size = 0;
  std::vector<std::size_t> hidden = {40, 40};
  bool skip = false;  // linear input-to-output path in the networks
  std::string optimizer = "adam";
  double learning_rate = 0.0;   // 0: 1e-2 for bayes, 1e-3 for scdc
  double momentum = 0.9;
  double global_step = 0.1;     // natural-gradient step for the globals
  bool robbins_monro = false;
  double decay = 0.6;
  std::size_t warmup_epochs = 0;
  std::size_t kl_warmup_epochs = 0;
  std::size_t refit_iterations = 0;
  std::size_t restarts = 1;
  std::size_t sweeps = vmp::kDefaultSweeps;
  std::size_t x_samples = 1;
  double alpha0 = 0.0;  // 0: 0.05 / K
  double kappa = 0.5;
  double m_spread = 0.0;  // std of initial component locations; 0: 3 for bayes, 1 for scdc
  double s_scale = 0.0;   // 0: d + kappa
  double nu = 0.0;        // 0: d + kappa
  double worker_a = 1.0;  // Beta prior on each accuracy
  double worker_b = 1.0;
  double log_var_min = nn::kLogVarMin;
  double log_var_max = nn::kLogVarMax;
  bool update_workers = true;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::filesystem::path data;
  std::filesystem::path labels;
  std::filesystem::path annotations;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;

  /// Sets one key from its text form. Throws UsageError for an unknown key or
  /// a malformed value.
  void set(const std::string& key, const std::string& value);
  /// Every accepted key, in declaration order.
  static const std::vector<std::string>& keys();
  /// Throws UsageError when a count is zero or the model tag is unknown.
  void validate() const;

  vmp::BayesConfig bayes() const;
  amortized::ScdcConfig scdc() const;
};

/// Reads `key = value` lines; blank lines and lines starting with '#' are
/// skipped. Throws IoError or ParseError (with path:line).
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

}  // namespace scdc

#pragma once

// Checkpoints: one JSON document holding every natural parameter, point
// parameter and network weight (with shapes) of a trained model.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "scdc/amortized.hpp"
#include "scdc/vmp.hpp"

namespace scdc {

struct Checkpoint {
  std::string model;  // bayes | scdc
  std::optional<vmp::BayesModel> bayes;
  std::optional<amortized::ScdcModel> scdc;
};

/// Throws IoError when the file cannot be written.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws IoError for a missing file and ParseError for malformed content.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_to_string(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace scdc

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tikmv/dynamics.hpp"
#include "tikmv/studies.hpp"

namespace tikmv::cli {

enum class ModelType { lq, fixture };

struct FrozenConfig {
  FrozenSource source = FrozenSource::reference;
  // For source "paths": a CSV written by write_paths_csv whose Y columns are Ybar.
  std::filesystem::path paths_file;
};

struct ExperimentConfig {
  int version = 1;
  ModelType type = ModelType::lq;
  LQModel lq;
  FixtureSpec fixture;
  StudyConfig study;
  FrozenConfig frozen;
  std::size_t trajectory_particles = 1;
  std::filesystem::path out_dir = ".";
};

/// Parses and validates a JSON config. Relative paths inside the config are
/// resolved against `base_dir`. Throws ConfigError on invalid content;
/// JSON syntax errors surface as ConfigError with a "parse error" prefix.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

// Structural checks that need the finished config: eps list, beta rule,
// r positive definite on the grid, monotone fast drift.
void validate_config(const ExperimentConfig& config);

// "0.5" -> 0.5, list parsing for --eps ("0.5,0.1,1e-3").
std::vector<double> parse_eps_list(const std::string& text);

}  // namespace tikmv::cli

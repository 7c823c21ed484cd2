#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "config.hpp"

namespace tikmv::cli {

struct RunOptions {
  std::filesystem::path out_dir;
  bool record_runtime = false;
  bool quiet = false;
};

// Each writes its files into options.out_dir and returns the paths written.
std::vector<std::filesystem::path> run_riccati(const ExperimentConfig& config, const RunOptions& options);
std::vector<std::filesystem::path> run_converge(const ExperimentConfig& config, const RunOptions& options);
std::vector<std::filesystem::path> run_fixture(const ExperimentConfig& config, const RunOptions& options);
std::vector<std::filesystem::path> run_frozen(const ExperimentConfig& config, const RunOptions& options);

// Full command line entry point. Exit codes: 0 success, 1 numerical failure,
// 2 usage, config or parse failure.
int main_entry(int argc, char** argv);

}  // namespace tikmv::cli

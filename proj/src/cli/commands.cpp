#include "commands.hpp"

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"
#include "tikmv/lq.hpp"
#include "tikmv/solver.hpp"

namespace tikmv::cli {

namespace fs = std::filesystem;

namespace {

void require_lq(const ExperimentConfig& config, const char* command) {
  if (config.type != ModelType::lq) throw ConfigError(std::string(command) + " requires an lq model");
}

fs::path write_output(const RunOptions& options, const std::string& name,
                      const std::function<void(std::ostream&)>& writer) {
  fs::create_directories(options.out_dir);
  const fs::path path = options.out_dir / name;
  io::write_file_atomic(path, writer);
  return path;
}

// The first `count` paths of an ensemble (0 keeps all).
PathEnsemble leading_paths(const PathEnsemble& paths, std::size_t count) {
  const std::size_t P = count == 0 ? paths.slow.particles() : std::min(count, paths.slow.particles());
  auto cut = [&](const Track& t) {
    Track out(t.grid(), P, t.dim());
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t n = 0; n < t.grid().nodes(); ++n) out.at(i, n) = t.at(i, n);
    return out;
  };
  PathEnsemble out{paths.grid, paths.noise_seed, cut(paths.slow), std::nullopt, std::nullopt};
  if (paths.fast) out.fast = cut(*paths.fast);
  if (paths.aux) out.aux = cut(*paths.aux);
  return out;
}

StudyConfig with_logging(const ExperimentConfig& config, const RunOptions& options) {
  StudyConfig study = config.study;
  if (!options.quiet) {
    study.on_row = [](const ErrorRow& row) {
      std::cerr << "eps=" << io::format_double(row.eps) << " s2_error_X=" << io::format_double(row.s2_error_X)
                << " h2_error_A=" << io::format_double(row.h2_error_A) << " runtime_ms=" << row.runtime_ms << '\n';
    };
  }
  return study;
}

std::vector<fs::path> write_study(const StudyResult& result, const ExperimentConfig& config, const RunOptions& options,
                                  const std::string& stem, const std::string& title) {
  std::vector<fs::path> written;
  written.push_back(write_output(options, stem + ".csv",
                                 [&](std::ostream& out) { result.table.write_csv(out, options.record_runtime); }));

  std::vector<io::Series> series(2);
  series[0] = {"s2 error X", "#1f77b4", {}, {}};
  series[1] = {"h2 error A", "#d62728", {}, {}};
  for (const auto& row : result.table.rows()) {
    series[0].x.push_back(row.eps);
    series[0].y.push_back(row.s2_error_X);
    series[1].x.push_back(row.eps);
    series[1].y.push_back(row.h2_error_A);
  }
  written.push_back(write_output(options, stem + ".svg", [&](std::ostream& out) {
    out << io::loglog_svg(series, title, "eps", "error");
  }));

  if (result.finest) {
    const PathEnsemble traj = leading_paths(*result.finest, config.trajectory_particles);
    written.push_back(write_output(options, "trajectory_" + io::format_double(result.finest_eps) + ".csv",
                                   [&](std::ostream& out) { write_paths_csv(out, traj); }));
    const PathEnsemble ref = leading_paths(result.reference, config.trajectory_particles);
    written.push_back(write_output(options, "trajectory_reference.csv",
                                   [&](std::ostream& out) { write_paths_csv(out, ref); }));
  }
  return written;
}

}  // namespace

std::vector<fs::path> run_riccati(const ExperimentConfig& config, const RunOptions& options) {
  require_lq(config, "riccati");
  const TimeGrid grid(config.study.horizon, config.study.steps);
  std::vector<fs::path> written;
  const RiccatiPath smp = solve_riccati_smp(config.lq, grid, config.study.riccati_smp_substeps);
  written.push_back(write_output(options, "riccati_smp.csv", [&](std::ostream& out) { write_riccati_csv(out, smp); }));
  for (double eps : config.study.eps_list) {
    RiccatiPath ts;
    try {
      ts = solve_riccati_twoscale(config.lq, eps, grid, config.study.riccati);
    } catch (const NumericalError& e) {
      throw NumericalError("eps=" + io::format_double(eps) + ": " + e.what());
    }
    written.push_back(write_output(options, "riccati_ts_" + io::format_double(eps) + ".csv",
                                   [&](std::ostream& out) { write_riccati_csv(out, ts); }));
  }
  return written;
}

std::vector<fs::path> run_converge(const ExperimentConfig& config, const RunOptions& options) {
  require_lq(config, "converge");
  const StudyResult result = lq_convergence_study(config.lq, with_logging(config, options));
  return write_study(result, config, options, "errors", "Approximation errors vs eps");
}

std::vector<fs::path> run_fixture(const ExperimentConfig& config, const RunOptions& options) {
  if (config.type != ModelType::fixture) throw ConfigError("fixture requires a fixture model");
  const StudyResult result = fixture_convergence_study(config.fixture, with_logging(config, options));
  return write_study(result, config, options, "fixture_errors", "Fixture errors vs eps (" + to_string(config.fixture.kind) + ")");
}

std::vector<fs::path> run_frozen(const ExperimentConfig& config, const RunOptions& options) {
  require_lq(config, "frozen");
  FrozenSpec spec;
  spec.source = config.frozen.source;
  if (spec.source == FrozenSource::track) {
    std::ifstream in(config.frozen.paths_file);
    if (!in) throw ConfigError("cannot open frozen.paths_file " + config.frozen.paths_file.string());
    PathEnsemble paths = [&] {
      try {
        return read_paths_csv(in);
      } catch (const InvalidInput& e) {
        throw ConfigError(std::string("frozen.paths_file: ") + e.what());
      }
    }();
    if (!paths.aux) throw ConfigError("frozen.paths_file carries no Y columns");
    spec.ybar = std::move(*paths.aux);
  }
  const StudyResult result = frozen_study(config.lq, spec, with_logging(config, options));
  return write_study(result, config, options, "frozen_errors", "Frozen-system errors vs eps");
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Two-scale McKean-Vlasov control experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir, eps_override;
  std::optional<std::uint64_t> seed;
  bool record_runtime = false, quiet = false;

  using Runner = std::vector<fs::path> (*)(const ExperimentConfig&, const RunOptions&);
  Runner runner = nullptr;
  const std::pair<const char*, Runner> commands[] = {
      {"riccati", run_riccati}, {"converge", run_converge}, {"fixture", run_fixture}, {"frozen", run_frozen}};
  const char* descriptions[] = {"Solve the Riccati equations and write lambda, theta tables",
                                "Eps sweep of the two-scale LQ system against the optimal pair",
                                "Eps sweep of a synthetic monotone fixture",
                                "Eps sweep of the frozen forward system"};
  for (std::size_t c = 0; c < 4; ++c) {
    CLI::App* sub = app.add_subcommand(commands[c].first, descriptions[c]);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out_dir, "Output directory (default: config 'out' or .)");
    sub->add_option("--eps", eps_override, "Comma-separated eps list override");
    sub->add_flag("--record-runtime", record_runtime, "Write measured runtimes into error tables");
    sub->add_flag("--quiet", quiet, "No progress output");
    const Runner r = commands[c].second;
    sub->callback([&runner, r] { runner = r; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  configure_threads_from_env();
  try {
    ExperimentConfig config = load_config(config_path);
    if (seed) config.study.seed = *seed;
    if (!eps_override.empty()) config.study.eps_list = parse_eps_list(eps_override);
    validate_config(config);
    RunOptions options;
    options.out_dir = out_dir.empty() ? config.out_dir : fs::path(out_dir);
    options.record_runtime = record_runtime;
    options.quiet = quiet;
    for (const auto& path : runner(config, options)) {
      if (!quiet) std::cerr << "wrote " << path.string() << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const Unsupported& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tikmv::cli

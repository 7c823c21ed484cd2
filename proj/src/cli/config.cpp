#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"

namespace tikmv::cli {

namespace {

using nlohmann::json;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

const json& require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  return j;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + " must be finite");
  return v;
}

std::size_t count(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(where + " must be a nonnegative integer");
  return j.get<std::size_t>();
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a string");
  return j.get<std::string>();
}

// A number is a 1x1 matrix; otherwise nested row-major arrays.
MatrixXd matrix(const json& j, const std::string& where) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, number(j, where));
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a number or a nonempty array of rows");
  const auto rows = static_cast<Index>(j.size());
  if (!j.front().is_array() || j.front().empty()) throw ConfigError(where + " must be an array of nonempty rows");
  const auto cols = static_cast<Index>(j.front().size());
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw ConfigError(where + " has ragged rows");
    for (Index c = 0; c < cols; ++c) {
      m(r, c) = number(row[static_cast<std::size_t>(c)], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  return m;
}

VectorXd vector(const json& j, const std::string& where) {
  if (j.is_number()) return VectorXd::Constant(1, number(j, where));
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a number or a nonempty array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

// Constant matrix, or {"nodes": [...]} with one matrix per grid node.
TimeMatrix time_matrix(const json& j, const std::string& where, const TimeGrid& grid) {
  if (j.is_object()) {
    reject_unknown(j, where, {"nodes"});
    if (!j.contains("nodes") || !j["nodes"].is_array()) throw ConfigError(where + ".nodes must be an array");
    const json& nodes = j["nodes"];
    if (nodes.size() != grid.nodes()) {
      throw ConfigError(where + ".nodes has " + std::to_string(nodes.size()) + " entries, expected N+1 = " +
                        std::to_string(grid.nodes()));
    }
    std::vector<MatrixXd> table;
    table.reserve(nodes.size());
    for (std::size_t n = 0; n < nodes.size(); ++n) table.push_back(matrix(nodes[n], where + ".nodes[" + std::to_string(n) + "]"));
    return TimeMatrix(grid, std::move(table));
  }
  return TimeMatrix(matrix(j, where));
}

InitialLaw initial_law(const json& j, const std::string& where) {
  if (!j.is_object()) return InitialLaw::constant(vector(j, where));
  const std::string law = j.contains("law") ? text(j["law"], where + ".law") : "constant";
  if (law == "constant") {
    reject_unknown(j, where, {"law", "value"});
    if (!j.contains("value")) throw ConfigError(where + ".value is required");
    return InitialLaw::constant(vector(j["value"], where + ".value"));
  }
  if (law == "two_point") {
    reject_unknown(j, where, {"law", "a", "b"});
    if (!j.contains("a") || !j.contains("b")) throw ConfigError(where + " needs atoms a and b");
    VectorXd a = vector(j["a"], where + ".a"), b = vector(j["b"], where + ".b");
    if (a.size() != b.size()) throw ConfigError(where + ": atoms differ in dimension");
    return InitialLaw::two_point(std::move(a), std::move(b));
  }
  if (law == "normal") {
    reject_unknown(j, where, {"law", "mean", "std"});
    if (!j.contains("mean") || !j.contains("std")) throw ConfigError(where + " needs mean and std");
    VectorXd mean = vector(j["mean"], where + ".mean"), sd = vector(j["std"], where + ".std");
    if (mean.size() != sd.size()) throw ConfigError(where + ": mean and std differ in dimension");
    if ((sd.array() < 0.0).any()) throw ConfigError(where + ".std must be nonnegative");
    return InitialLaw::normal(std::move(mean), std::move(sd));
  }
  throw ConfigError(where + ".law must be constant, two_point or normal");
}

LQModel parse_lq(const json& j, const TimeGrid& grid) {
  reject_unknown(j, "model", {"type", "d", "k", "m", "b0", "b1", "b2", "q", "r", "sigma", "q_term", "xi", "eta"});
  LQModel model;
  model.dims.d = j.contains("d") ? count(j["d"], "model.d") : 1;
  model.dims.k = j.contains("k") ? count(j["k"], "model.k") : 1;
  model.dims.m = j.contains("m") ? count(j["m"], "model.m") : 1;
  if (model.dims.d == 0 || model.dims.k == 0 || model.dims.m == 0) throw ConfigError("model dimensions must be positive");
  const auto d = static_cast<Index>(model.dims.d), k = static_cast<Index>(model.dims.k),
             m = static_cast<Index>(model.dims.m);
  for (const char* key : {"b1", "b2", "q", "r", "sigma", "q_term"}) {
    if (!j.contains(key)) throw ConfigError(std::string("model.") + key + " is required");
  }
  model.b0 = j.contains("b0") ? vector(j["b0"], "model.b0") : VectorXd::Zero(d);
  model.b1 = time_matrix(j["b1"], "model.b1", grid);
  model.b2 = time_matrix(j["b2"], "model.b2", grid);
  model.q_run = time_matrix(j["q"], "model.q", grid);
  model.r = time_matrix(j["r"], "model.r", grid);
  model.sigma = matrix(j["sigma"], "model.sigma");
  model.q_term = matrix(j["q_term"], "model.q_term");
  model.xi = j.contains("xi") ? initial_law(j["xi"], "model.xi") : InitialLaw::constant(VectorXd::Ones(d));
  model.eta = j.contains("eta") ? initial_law(j["eta"], "model.eta") : InitialLaw::constant(VectorXd::Zero(k));
  (void)m;
  if (model.xi.dim() != model.dims.d) throw ConfigError("model.xi must have dimension d");
  if (model.eta.dim() != model.dims.k) throw ConfigError("model.eta must have dimension k");
  model.validate(grid);
  return model;
}

FixtureSpec parse_fixture(const json& j) {
  reject_unknown(j, "model", {"type", "kind", "lambda", "sigma", "fast_sigma", "xi", "eta", "reference_refinement"});
  FixtureSpec f;
  if (!j.contains("kind")) throw ConfigError("model.kind is required for fixtures");
  const auto kind = parse_synthetic_kind(text(j["kind"], "model.kind"));
  if (!kind) throw ConfigError("model.kind must be decay, tracking, meanfield_tracking or expanding");
  f.kind = *kind;
  if (j.contains("lambda")) f.lambda = number(j["lambda"], "model.lambda");
  if (!(f.lambda > 0.0)) {
    throw ConfigError("fast drift B is not monotone: model.lambda must be positive");
  }
  if (j.contains("sigma")) f.options.sigma = number(j["sigma"], "model.sigma");
  if (j.contains("fast_sigma")) f.options.fast_sigma = number(j["fast_sigma"], "model.fast_sigma");
  if (j.contains("xi")) f.xi = initial_law(j["xi"], "model.xi");
  if (j.contains("eta")) f.eta = initial_law(j["eta"], "model.eta");
  if (f.xi.dim() != 1 || f.eta.dim() != 1) throw ConfigError("fixture initial laws must be scalar");
  if (j.contains("reference_refinement")) {
    f.reference_refinement = count(j["reference_refinement"], "model.reference_refinement");
    if (f.reference_refinement == 0) throw ConfigError("model.reference_refinement must be positive");
  }
  return f;
}

SolverOptions parse_solver(const json& j) {
  require_object(j, "solver");
  reject_unknown(j, "solver", {"fast_scheme", "fast_substeps", "blowup_threshold"});
  SolverOptions o;
  if (j.contains("fast_scheme")) {
    const std::string s = text(j["fast_scheme"], "solver.fast_scheme");
    if (s == "semi_implicit") o.fast_scheme = FastScheme::semi_implicit;
    else if (s == "explicit") o.fast_scheme = FastScheme::explicit_euler;
    else throw ConfigError("solver.fast_scheme must be semi_implicit or explicit");
  }
  if (j.contains("fast_substeps")) o.fast_substeps = count(j["fast_substeps"], "solver.fast_substeps");
  if (o.fast_substeps == 0) throw ConfigError("solver.fast_substeps must be positive");
  if (j.contains("blowup_threshold")) o.blowup_threshold = number(j["blowup_threshold"], "solver.blowup_threshold");
  return o;
}

void parse_riccati(const json& j, StudyConfig& study) {
  require_object(j, "riccati");
  reject_unknown(j, "riccati", {"method", "substeps", "smp_substeps"});
  if (j.contains("method")) {
    const std::string s = text(j["method"], "riccati.method");
    if (s == "implicit_euler") study.riccati.method = RiccatiMethod::implicit_euler;
    else if (s == "rk4") study.riccati.method = RiccatiMethod::rk4;
    else throw ConfigError("riccati.method must be implicit_euler or rk4");
  }
  if (j.contains("substeps")) study.riccati.substeps = count(j["substeps"], "riccati.substeps");
  if (j.contains("smp_substeps")) study.riccati_smp_substeps = count(j["smp_substeps"], "riccati.smp_substeps");
  if (study.riccati.substeps == 0 || study.riccati_smp_substeps == 0) throw ConfigError("riccati substeps must be positive");
}

FrozenConfig parse_frozen(const json& j, const std::filesystem::path& base_dir) {
  require_object(j, "frozen");
  reject_unknown(j, "frozen", {"source", "paths_file"});
  FrozenConfig f;
  const std::string s = j.contains("source") ? text(j["source"], "frozen.source") : "reference";
  if (s == "reference") f.source = FrozenSource::reference;
  else if (s == "zero") f.source = FrozenSource::zero;
  else if (s == "paths") f.source = FrozenSource::track;
  else throw ConfigError("frozen.source must be reference, zero or paths");
  if (f.source == FrozenSource::track) {
    if (!j.contains("paths_file")) throw ConfigError("frozen.paths_file is required for source 'paths'");
    f.paths_file = text(j["paths_file"], "frozen.paths_file");
    if (f.paths_file.is_relative()) f.paths_file = base_dir / f.paths_file;
  }
  return f;
}

}  // namespace

std::vector<double> parse_eps_list(const std::string& list) {
  std::vector<double> out;
  for (const auto& field : io::split_csv_line(list)) {
    try {
      out.push_back(io::parse_double(field));
    } catch (const Error&) {
      throw ConfigError("--eps: cannot parse '" + field + "' as a number");
    }
  }
  if (out.empty()) throw ConfigError("--eps: empty list");
  return out;
}

ExperimentConfig parse_config(const std::string& content, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(content);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  require_object(j, "config");
  reject_unknown(j, "config", {"version", "model", "T", "N", "M", "seed", "eps_list", "beta", "beta_power", "G",
                               "noise_mode", "solver", "riccati", "frozen", "slack", "trajectory_particles", "out"});
  ExperimentConfig c;
  if (!j.contains("version")) throw ConfigError("config.version is required");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != 1) throw ConfigError("config.version must be 1");
  c.version = 1;

  StudyConfig& s = c.study;
  if (j.contains("T")) s.horizon = number(j["T"], "T");
  if (j.contains("N")) s.steps = count(j["N"], "N");
  if (j.contains("M")) s.particles = count(j["M"], "M");
  if (!(s.horizon > 0.0)) throw ConfigError("T must be positive");
  if (s.steps == 0) throw ConfigError("N must be positive");
  if (s.particles == 0) throw ConfigError("M must be positive");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("eps_list")) {
    if (!j["eps_list"].is_array()) throw ConfigError("eps_list must be an array");
    for (std::size_t i = 0; i < j["eps_list"].size(); ++i) {
      s.eps_list.push_back(number(j["eps_list"][i], "eps_list[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("beta")) s.beta = number(j["beta"], "beta");
  if (j.contains("beta_power")) s.beta_power = number(j["beta_power"], "beta_power");
  if (j.contains("slack")) s.slack = number(j["slack"], "slack");
  if (j.contains("solver")) s.solver = parse_solver(j["solver"]);
  if (j.contains("noise_mode")) {
    const std::string mode = text(j["noise_mode"], "noise_mode");
    if (mode == "shared") s.solver.noise_mode = NoiseMode::shared;
    else if (mode == "independent") s.solver.noise_mode = NoiseMode::independent;
    else throw ConfigError("noise_mode must be shared or independent");
  }
  if (j.contains("riccati")) parse_riccati(j["riccati"], s);
  if (j.contains("frozen")) c.frozen = parse_frozen(j["frozen"], base_dir);
  if (j.contains("trajectory_particles")) c.trajectory_particles = count(j["trajectory_particles"], "trajectory_particles");
  if (j.contains("out")) {
    c.out_dir = text(j["out"], "out");
    if (c.out_dir.is_relative()) c.out_dir = base_dir / c.out_dir;
  }

  if (!j.contains("model")) throw ConfigError("config.model is required");
  const json& model = require_object(j["model"], "model");
  const std::string type = model.contains("type") ? text(model["type"], "model.type") : "lq";
  const TimeGrid grid(s.horizon, s.steps);
  Dims dims;
  if (type == "lq") {
    c.type = ModelType::lq;
    c.lq = parse_lq(model, grid);
    dims = c.lq.dims;
    s.model_id = "lq";
  } else if (type == "fixture") {
    c.type = ModelType::fixture;
    c.fixture = parse_fixture(model);
    s.model_id = to_string(c.fixture.kind);
  } else {
    throw ConfigError("model.type must be lq or fixture");
  }
  s.G = j.contains("G") ? matrix(j["G"], "G") : Eigen::MatrixXd::Ones(static_cast<Index>(dims.k), static_cast<Index>(dims.m));
  if (s.G.rows() != static_cast<Index>(dims.k) || s.G.cols() != static_cast<Index>(dims.m)) {
    throw ConfigError("G must be k x m");
  }
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

void validate_config(const ExperimentConfig& c) {
  const StudyConfig& s = c.study;
  for (double e : s.eps_list) {
    if (!(e > 0.0)) throw ConfigError("eps_list entries must be strictly positive");
  }
  if (!(s.beta_power > 1.0)) {
    throw ConfigError("fast noise amplitude beta*eps^" + io::format_double(s.beta_power) +
                      " is not o(eps): beta_power must exceed 1");
  }
  if (!(s.beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  if (!(s.slack >= 1.0)) throw ConfigError("slack must be >= 1");
  if (c.type == ModelType::lq) {
    c.lq.validate(TimeGrid(s.horizon, s.steps));
  } else {
    // Certify the one-sided bound <B(a) - B(a'), a - a'> <= -lambda |a - a'|^2 empirically.
    SyntheticModel fx = synthetic_monotone_model(c.fixture.kind, c.fixture.lambda, c.fixture.options);
    fx.coefficients.horizon = s.horizon;
    const double probe = monotonicity_probe(fx.coefficients, 64, 4.0, s.seed);
    if (!(probe < 0.0)) {
      throw ConfigError("fast drift B is not monotone: probe constant " + io::format_double(probe) + " >= 0");
    }
  }
}

}  // namespace tikmv::cli

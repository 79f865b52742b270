// Declarative experiment configuration: strict JSON schema (unknown keys are
// rejected), full error collection instead of first-error bailout, preset
// resolution, and a canonical echo that reproduces the run when re-executed.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "ensemble.hpp"
#include "experiments.hpp"
#include "integrate.hpp"
#include "lindblad.hpp"

namespace qmeas {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RunMode { Trajectory, Ensemble, Lindblad, RabiFeedback, BellJzJz, Qec };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::Trajectory: return "trajectory";
    case RunMode::Ensemble: return "ensemble";
    case RunMode::Lindblad: return "lindblad";
    case RunMode::RabiFeedback: return "rabi-feedback";
    case RunMode::BellJzJz: return "bell-jzjz";
    case RunMode::Qec: return "qec";
  }
  return "?";
}

struct InitialStateSpec {
  enum class Preset { Basis, Plus, Bell, Custom };
  Preset preset = Preset::Plus;
  int index = 0;   // basis preset
  CMatrix matrix;  // custom preset
};

struct ProjectorSpec {
  enum class Preset { ZBasis, JzJz, LogicalError, Custom };
  Preset preset = Preset::ZBasis;
  int qubits = 3;  // logical-error preset
  std::vector<CMatrix> matrices;
  std::vector<std::string> labels;
};

struct HamiltonianSpec {
  enum class Preset { None, SigmaX, JointSigmaX, Custom };
  Preset preset = Preset::None;
  double omega = 1.0;
  CMatrix matrix;
};

struct LindbladSpec {
  enum class Preset { DephasingZ, ProjectorDephasing, Custom };
  Preset preset = Preset::DephasingZ;
  double gamma = 1.0;
  std::vector<CMatrix> operators;
};

struct ExperimentConfig {
  RunMode mode = RunMode::Trajectory;
  int dimension = 2;
  std::optional<std::uint64_t> seed;
  double g = 1.0;
  InitialStateSpec initial_state;
  ProjectorSpec projectors;
  HamiltonianSpec hamiltonian;
  LindbladSpec lindblad;
  bool lindblad_present = false;
  WeightStrategy strategy = WeightStrategy::instantaneous_born();
  bool strategy_present = false;
  IntegratorParams integrator;
  long trajectories = 1;
  int target_projector = 0;
  double logical_weight = 0.7;
  FeedbackParams feedback;
  bool individual_shifts = false;
  std::string samples_path = "samples.csv";
  std::string summary_path = "summary.json";

  std::uint64_t master_seed() const { return seed.value_or(0); }

  DensityMatrix build_initial() const {
    switch (initial_state.preset) {
      case InitialStateSpec::Preset::Basis:
        return pure_density(basis_state(dimension, initial_state.index));
      case InitialStateSpec::Preset::Plus:
        return pure_density(plus_state(dimension));
      case InitialStateSpec::Preset::Bell:
        return pure_density(bell_state());
      case InitialStateSpec::Preset::Custom: {
        const auto report = validate_density(initial_state.matrix);
        if (!report.pass)
          throw StateError("initial_state.matrix is not a valid density matrix "
                           "(hermiticity defect " + std::to_string(report.hermiticity_defect) +
                           ", trace defect " + std::to_string(report.trace_defect) +
                           ", min eigenvalue " + std::to_string(report.min_eigenvalue) + ")");
        return initial_state.matrix;
      }
    }
    throw StateError("unknown initial state preset");
  }

  ProjectorSet build_projectors() const {
    switch (projectors.preset) {
      case ProjectorSpec::Preset::ZBasis: return zbasis_projectors(dimension);
      case ProjectorSpec::Preset::JzJz: return jzjz_projectors();
      case ProjectorSpec::Preset::LogicalError: return logical_error_projectors(projectors.qubits);
      case ProjectorSpec::Preset::Custom: {
        std::vector<Projector> items;
        for (std::size_t i = 0; i < projectors.matrices.size(); ++i) {
          const std::string label = i < projectors.labels.size() ? projectors.labels[i]
                                                                 : std::to_string(i);
          items.push_back(make_projector(projectors.matrices[i], label));
        }
        return make_projector_set(std::move(items));
      }
    }
    throw StateError("unknown projector preset");
  }

  std::optional<Hamiltonian> build_hamiltonian() const {
    switch (hamiltonian.preset) {
      case HamiltonianSpec::Preset::None: return std::nullopt;
      case HamiltonianSpec::Preset::SigmaX: return CMatrix(0.5 * hamiltonian.omega * pauli_x());
      case HamiltonianSpec::Preset::JointSigmaX: {
        const CMatrix eye2 = CMatrix::Identity(2, 2);
        return CMatrix(0.5 * hamiltonian.omega *
                       (kron(pauli_x(), eye2) + kron(eye2, pauli_x())));
      }
      case HamiltonianSpec::Preset::Custom: {
        if (hermiticity_defect(hamiltonian.matrix) > Tolerances{}.herm)
          throw StateError("hamiltonian.matrix is not Hermitian");
        return hamiltonian.matrix;
      }
    }
    throw StateError("unknown hamiltonian preset");
  }

  LindbladSet build_lindblad() const {
    switch (lindblad.preset) {
      case LindbladSpec::Preset::DephasingZ:
        return {CMatrix(std::sqrt(lindblad.gamma) * pauli_z())};
      case LindbladSpec::Preset::ProjectorDephasing: {
        LindbladSet out;
        for (const auto& p : build_projectors().items)
          out.push_back(std::sqrt(lindblad.gamma) * p.mat);
        return out;
      }
      case LindbladSpec::Preset::Custom: return lindblad.operators;
    }
    throw StateError("unknown lindblad preset");
  }
};

struct ParseResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;
  bool ok() const { return config.has_value() && errors.empty(); }
};

// ---------------------------------------------------------------------------
// Parsing internals

namespace config_detail {

struct Errors {
  std::vector<std::string> list;
  void add(const std::string& path, const std::string& message) {
    list.push_back(path.empty() ? message : path + ": " + message);
  }
};

inline void check_keys(const Json& obj, const std::string& path,
                       const std::vector<std::string>& allowed, Errors& errors) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) errors.add(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

inline bool expect_object(const Json& j, const std::string& path, Errors& errors) {
  if (j.is_object()) return true;
  errors.add(path, "expected an object");
  return false;
}

inline std::optional<double> get_number(const Json& obj, const char* key, const std::string& path,
                                        Errors& errors) {
  if (!obj.contains(key)) return std::nullopt;
  const Json& v = obj.at(key);
  if (!v.is_number()) {
    errors.add(path + "." + key, "expected a number");
    return std::nullopt;
  }
  return v.get<double>();
}

inline std::optional<long> get_integer(const Json& obj, const char* key, const std::string& path,
                                       Errors& errors) {
  if (!obj.contains(key)) return std::nullopt;
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) {
    errors.add(path + "." + key, "expected an integer");
    return std::nullopt;
  }
  return v.get<long>();
}

inline std::optional<std::string> get_string(const Json& obj, const char* key,
                                             const std::string& path, Errors& errors) {
  if (!obj.contains(key)) return std::nullopt;
  const Json& v = obj.at(key);
  if (!v.is_string()) {
    errors.add(path + "." + key, "expected a string");
    return std::nullopt;
  }
  return v.get<std::string>();
}

// Matrix entries are numbers (real) or [re, im] pairs.
inline std::optional<Complex> parse_entry(const Json& e) {
  if (e.is_number()) return Complex(e.get<double>(), 0.0);
  if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number())
    return Complex(e[0].get<double>(), e[1].get<double>());
  return std::nullopt;
}

inline std::optional<CMatrix> parse_matrix(const Json& j, const std::string& path, Errors& errors) {
  if (!j.is_array() || j.empty()) {
    errors.add(path, "expected a non-empty array of rows");
    return std::nullopt;
  }
  const std::size_t rows = j.size();
  CMatrix m(rows, rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != rows) {
      errors.add(path, "expected a square matrix (row " + std::to_string(r) + ")");
      return std::nullopt;
    }
    for (std::size_t c = 0; c < rows; ++c) {
      const auto entry = parse_entry(j[r][c]);
      if (!entry) {
        errors.add(path, "entry (" + std::to_string(r) + "," + std::to_string(c) +
                             ") must be a number or an [re, im] pair");
        return std::nullopt;
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *entry;
    }
  }
  return m;
}

inline Json matrix_to_json(const CMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(Json::array({m(r, c).real(), m(r, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Dimension a spec pins down on its own; 0 when it works for any dimension.
inline int intrinsic_dim(const InitialStateSpec& s) {
  switch (s.preset) {
    case InitialStateSpec::Preset::Bell: return 4;
    case InitialStateSpec::Preset::Custom: return static_cast<int>(s.matrix.rows());
    default: return 0;
  }
}
inline int intrinsic_dim(const ProjectorSpec& s) {
  switch (s.preset) {
    case ProjectorSpec::Preset::JzJz: return 4;
    case ProjectorSpec::Preset::LogicalError: return 1 << s.qubits;
    case ProjectorSpec::Preset::Custom:
      return s.matrices.empty() ? 0 : static_cast<int>(s.matrices.front().rows());
    default: return 0;
  }
}
inline int intrinsic_dim(const HamiltonianSpec& s) {
  switch (s.preset) {
    case HamiltonianSpec::Preset::SigmaX: return 2;
    case HamiltonianSpec::Preset::JointSigmaX: return 4;
    case HamiltonianSpec::Preset::Custom: return static_cast<int>(s.matrix.rows());
    default: return 0;
  }
}

}  // namespace config_detail

// ---------------------------------------------------------------------------

inline ParseResult parse_config(const std::string& text) {
  using namespace config_detail;
  ParseResult result;
  Errors errors;

  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    result.errors.push_back(std::string("invalid JSON: ") + e.what());
    return result;
  }
  if (!root.is_object()) {
    result.errors.push_back("config must be a JSON object");
    return result;
  }

  ExperimentConfig cfg;

  const auto mode_str = get_string(root, "mode", "", errors);
  if (!mode_str) {
    errors.add("mode", "required field is missing");
    result.errors = errors.list;
    return result;
  }
  if (*mode_str == "trajectory") cfg.mode = RunMode::Trajectory;
  else if (*mode_str == "ensemble") cfg.mode = RunMode::Ensemble;
  else if (*mode_str == "lindblad") cfg.mode = RunMode::Lindblad;
  else if (*mode_str == "rabi-feedback") cfg.mode = RunMode::RabiFeedback;
  else if (*mode_str == "bell-jzjz") cfg.mode = RunMode::BellJzJz;
  else if (*mode_str == "qec") cfg.mode = RunMode::Qec;
  else {
    errors.add("mode", "unknown mode '" + *mode_str + "'");
    result.errors = errors.list;
    return result;
  }

  // Per-mode key allowlist; anything else is rejected outright.
  std::vector<std::string> allowed{"mode", "dimension", "seed", "g", "initial_state",
                                   "integrator", "outputs"};
  switch (cfg.mode) {
    case RunMode::Trajectory:
      allowed.insert(allowed.end(), {"projectors", "hamiltonian", "target_projector"});
      break;
    case RunMode::Ensemble:
      allowed.insert(allowed.end(), {"projectors", "hamiltonian", "strategy", "trajectories"});
      break;
    case RunMode::Lindblad:
      allowed.insert(allowed.end(), {"projectors", "hamiltonian", "lindblad"});
      break;
    case RunMode::RabiFeedback:
      allowed.insert(allowed.end(), {"hamiltonian", "strategy", "feedback"});
      break;
    case RunMode::BellJzJz:
      allowed.insert(allowed.end(), {"hamiltonian", "strategy", "feedback"});
      break;
    case RunMode::Qec:
      allowed.insert(allowed.end(), {"projectors", "strategy", "logical_weight"});
      break;
  }
  check_keys(root, "", allowed, errors);

  if (const auto v = get_integer(root, "dimension", "", errors)) {
    if (*v < 2) errors.add("dimension", "must be at least 2");
    else cfg.dimension = static_cast<int>(*v);
  }
  bool dimension_given = root.contains("dimension");

  if (root.contains("seed")) {
    const Json& s = root.at("seed");
    if (s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0))
      cfg.seed = s.get<std::uint64_t>();
    else
      errors.add("seed", "expected a non-negative integer");
  }

  if (const auto v = get_number(root, "g", "", errors)) {
    if (*v < 0.0) errors.add("g", "must be >= 0");
    else cfg.g = *v;
  }

  // initial_state
  if (root.contains("initial_state") && expect_object(root.at("initial_state"), "initial_state", errors)) {
    const Json& obj = root.at("initial_state");
    check_keys(obj, "initial_state", {"preset", "index", "matrix"}, errors);
    const auto preset = get_string(obj, "preset", "initial_state", errors);
    if (preset) {
      if (*preset == "basis") cfg.initial_state.preset = InitialStateSpec::Preset::Basis;
      else if (*preset == "plus") cfg.initial_state.preset = InitialStateSpec::Preset::Plus;
      else if (*preset == "bell") cfg.initial_state.preset = InitialStateSpec::Preset::Bell;
      else if (*preset == "custom") cfg.initial_state.preset = InitialStateSpec::Preset::Custom;
      else errors.add("initial_state.preset", "unknown preset '" + *preset + "'");
    } else {
      errors.add("initial_state.preset", "required field is missing");
    }
    if (const auto v = get_integer(obj, "index", "initial_state", errors))
      cfg.initial_state.index = static_cast<int>(*v);
    if (obj.contains("matrix")) {
      if (const auto m = parse_matrix(obj.at("matrix"), "initial_state.matrix", errors))
        cfg.initial_state.matrix = *m;
    }
    if (cfg.initial_state.preset == InitialStateSpec::Preset::Custom &&
        cfg.initial_state.matrix.size() == 0)
      errors.add("initial_state.matrix", "required for the custom preset");
  } else {
    // Mode defaults: plus state for the generic modes, ground state for the
    // single-qubit experiment, Bell pair for the two-qubit one.
    if (cfg.mode == RunMode::RabiFeedback) cfg.initial_state.preset = InitialStateSpec::Preset::Basis;
    else if (cfg.mode == RunMode::BellJzJz) cfg.initial_state.preset = InitialStateSpec::Preset::Bell;
    else cfg.initial_state.preset = InitialStateSpec::Preset::Plus;
  }

  // projectors
  if (root.contains("projectors") && expect_object(root.at("projectors"), "projectors", errors)) {
    const Json& obj = root.at("projectors");
    check_keys(obj, "projectors", {"preset", "qubits", "matrices", "labels"}, errors);
    const auto preset = get_string(obj, "preset", "projectors", errors);
    if (preset) {
      if (*preset == "z-basis") cfg.projectors.preset = ProjectorSpec::Preset::ZBasis;
      else if (*preset == "jz-jz") cfg.projectors.preset = ProjectorSpec::Preset::JzJz;
      else if (*preset == "logical-error") cfg.projectors.preset = ProjectorSpec::Preset::LogicalError;
      else if (*preset == "custom") cfg.projectors.preset = ProjectorSpec::Preset::Custom;
      else errors.add("projectors.preset", "unknown preset '" + *preset + "'");
    } else {
      errors.add("projectors.preset", "required field is missing");
    }
    if (const auto v = get_integer(obj, "qubits", "projectors", errors)) {
      if (*v < 2 || *v > 6) errors.add("projectors.qubits", "must lie in [2,6]");
      else cfg.projectors.qubits = static_cast<int>(*v);
    }
    if (obj.contains("matrices")) {
      const Json& arr = obj.at("matrices");
      if (!arr.is_array() || arr.empty()) {
        errors.add("projectors.matrices", "expected a non-empty array of matrices");
      } else {
        for (std::size_t i = 0; i < arr.size(); ++i)
          if (const auto m = parse_matrix(arr[i], "projectors.matrices[" + std::to_string(i) + "]",
                                          errors))
            cfg.projectors.matrices.push_back(*m);
      }
    }
    if (obj.contains("labels")) {
      const Json& arr = obj.at("labels");
      if (!arr.is_array()) {
        errors.add("projectors.labels", "expected an array of strings");
      } else {
        for (const auto& l : arr) {
          if (!l.is_string()) {
            errors.add("projectors.labels", "expected an array of strings");
            break;
          }
          cfg.projectors.labels.push_back(l.get<std::string>());
        }
      }
    }
    if (cfg.projectors.preset == ProjectorSpec::Preset::Custom && cfg.projectors.matrices.empty())
      errors.add("projectors.matrices", "required for the custom preset");
  } else {
    cfg.projectors.preset = cfg.mode == RunMode::Qec ? ProjectorSpec::Preset::LogicalError
                                                     : ProjectorSpec::Preset::ZBasis;
  }

  // hamiltonian
  if (root.contains("hamiltonian") && expect_object(root.at("hamiltonian"), "hamiltonian", errors)) {
    const Json& obj = root.at("hamiltonian");
    check_keys(obj, "hamiltonian", {"preset", "omega", "matrix"}, errors);
    const auto preset = get_string(obj, "preset", "hamiltonian", errors);
    if (preset) {
      if (*preset == "none") cfg.hamiltonian.preset = HamiltonianSpec::Preset::None;
      else if (*preset == "sigma-x") cfg.hamiltonian.preset = HamiltonianSpec::Preset::SigmaX;
      else if (*preset == "joint-sigma-x") cfg.hamiltonian.preset = HamiltonianSpec::Preset::JointSigmaX;
      else if (*preset == "custom") cfg.hamiltonian.preset = HamiltonianSpec::Preset::Custom;
      else errors.add("hamiltonian.preset", "unknown preset '" + *preset + "'");
    } else {
      errors.add("hamiltonian.preset", "required field is missing");
    }
    if (const auto v = get_number(obj, "omega", "hamiltonian", errors)) {
      if (!(*v > 0.0)) errors.add("hamiltonian.omega", "must be positive");
      else cfg.hamiltonian.omega = *v;
    }
    if (obj.contains("matrix")) {
      if (const auto m = parse_matrix(obj.at("matrix"), "hamiltonian.matrix", errors))
        cfg.hamiltonian.matrix = *m;
    }
    if (cfg.hamiltonian.preset == HamiltonianSpec::Preset::Custom &&
        cfg.hamiltonian.matrix.size() == 0)
      errors.add("hamiltonian.matrix", "required for the custom preset");
  } else {
    cfg.hamiltonian.preset = cfg.mode == RunMode::RabiFeedback ? HamiltonianSpec::Preset::SigmaX
                             : cfg.mode == RunMode::BellJzJz   ? HamiltonianSpec::Preset::JointSigmaX
                                                               : HamiltonianSpec::Preset::None;
  }
  if (cfg.mode == RunMode::RabiFeedback && cfg.hamiltonian.preset != HamiltonianSpec::Preset::SigmaX)
    errors.add("hamiltonian.preset", "rabi-feedback drives with the sigma-x preset");
  if (cfg.mode == RunMode::BellJzJz && cfg.hamiltonian.preset != HamiltonianSpec::Preset::JointSigmaX)
    errors.add("hamiltonian.preset", "bell-jzjz drives with the joint-sigma-x preset");

  // lindblad
  if (root.contains("lindblad") && expect_object(root.at("lindblad"), "lindblad", errors)) {
    cfg.lindblad_present = true;
    const Json& obj = root.at("lindblad");
    check_keys(obj, "lindblad", {"preset", "gamma", "operators"}, errors);
    const auto preset = get_string(obj, "preset", "lindblad", errors);
    if (preset) {
      if (*preset == "dephasing-z") cfg.lindblad.preset = LindbladSpec::Preset::DephasingZ;
      else if (*preset == "projector-dephasing")
        cfg.lindblad.preset = LindbladSpec::Preset::ProjectorDephasing;
      else if (*preset == "custom") cfg.lindblad.preset = LindbladSpec::Preset::Custom;
      else errors.add("lindblad.preset", "unknown preset '" + *preset + "'");
    } else {
      errors.add("lindblad.preset", "required field is missing");
    }
    if (const auto v = get_number(obj, "gamma", "lindblad", errors)) {
      if (!(*v > 0.0)) errors.add("lindblad.gamma", "must be positive");
      else cfg.lindblad.gamma = *v;
    }
    if (obj.contains("operators")) {
      const Json& arr = obj.at("operators");
      if (!arr.is_array() || arr.empty()) {
        errors.add("lindblad.operators", "expected a non-empty array of matrices");
      } else {
        for (std::size_t i = 0; i < arr.size(); ++i)
          if (const auto m = parse_matrix(arr[i], "lindblad.operators[" + std::to_string(i) + "]",
                                          errors))
            cfg.lindblad.operators.push_back(*m);
      }
    }
    if (cfg.lindblad.preset == LindbladSpec::Preset::Custom && cfg.lindblad.operators.empty())
      errors.add("lindblad.operators", "required for the custom preset");
  }

  // strategy
  if (root.contains("strategy") && expect_object(root.at("strategy"), "strategy", errors)) {
    cfg.strategy_present = true;
    const Json& obj = root.at("strategy");
    check_keys(obj, "strategy", {"kind", "epsilon", "outcome"}, errors);
    const auto kind = get_string(obj, "kind", "strategy", errors);
    if (kind) {
      if (*kind == "uniform") cfg.strategy = WeightStrategy::uniform();
      else if (*kind == "frozen-born") cfg.strategy = WeightStrategy::frozen_born();
      else if (*kind == "instantaneous-born") cfg.strategy = WeightStrategy::instantaneous_born();
      else if (*kind == "noisy-instantaneous-born")
        cfg.strategy = WeightStrategy{WeightStrategy::Kind::NoisyInstantaneousBorn};
      else if (*kind == "fixed-outcome") cfg.strategy = WeightStrategy{WeightStrategy::Kind::FixedOutcome};
      else errors.add("strategy.kind", "unknown kind '" + *kind + "'");
    } else {
      errors.add("strategy.kind", "required field is missing");
    }
    if (const auto v = get_number(obj, "epsilon", "strategy", errors)) {
      if (*v < 0.0) errors.add("strategy.epsilon", "must be >= 0");
      else cfg.strategy.epsilon = *v;
    }
    if (const auto v = get_integer(obj, "outcome", "strategy", errors))
      cfg.strategy.outcome = static_cast<int>(*v);
    if (cfg.strategy.epsilon > 0.0 &&
        cfg.strategy.kind != WeightStrategy::Kind::NoisyInstantaneousBorn)
      errors.add("strategy.epsilon", "only meaningful for noisy-instantaneous-born");
    if (obj.contains("outcome") && cfg.strategy.kind != WeightStrategy::Kind::FixedOutcome)
      errors.add("strategy.outcome", "only meaningful for fixed-outcome");
  } else if (cfg.mode == RunMode::RabiFeedback || cfg.mode == RunMode::BellJzJz) {
    cfg.strategy = WeightStrategy{WeightStrategy::Kind::NoisyInstantaneousBorn};
  }
  if ((cfg.mode == RunMode::RabiFeedback || cfg.mode == RunMode::BellJzJz) &&
      cfg.strategy.kind != WeightStrategy::Kind::NoisyInstantaneousBorn &&
      cfg.strategy.kind != WeightStrategy::Kind::InstantaneousBorn)
    errors.add("strategy.kind", "feedback experiments run on (noisy-)instantaneous-born weights");

  // integrator
  if (cfg.mode == RunMode::Qec) cfg.integrator.duration = 10.0;
  if (cfg.mode == RunMode::RabiFeedback || cfg.mode == RunMode::BellJzJz)
    cfg.integrator.duration = 30.0;
  bool method_given = false;
  if (root.contains("integrator") && expect_object(root.at("integrator"), "integrator", errors)) {
    const Json& obj = root.at("integrator");
    check_keys(obj, "integrator", {"step", "duration", "renormalize_every", "method"}, errors);
    if (const auto v = get_number(obj, "step", "integrator", errors)) cfg.integrator.step = *v;
    if (const auto v = get_number(obj, "duration", "integrator", errors))
      cfg.integrator.duration = *v;
    if (const auto v = get_integer(obj, "renormalize_every", "integrator", errors))
      cfg.integrator.renormalize_every = static_cast<int>(*v);
    if (const auto m = get_string(obj, "method", "integrator", errors)) {
      method_given = true;
      if (*m == "rk4") cfg.integrator.method = StepMethod::RungeKutta4;
      else if (*m == "euler-maruyama") cfg.integrator.method = StepMethod::EulerMaruyama;
      else errors.add("integrator.method", "expected 'rk4' or 'euler-maruyama'");
    }
    try {
      cfg.integrator.validate();
    } catch (const std::exception& e) {
      errors.add("integrator", e.what());
    }
  }
  // Default method follows the strategy; an explicit mismatch is rejected.
  // The feedback experiments pick their stepping internally and ignore it.
  const bool noisy = cfg.strategy.kind == WeightStrategy::Kind::NoisyInstantaneousBorn;
  const bool strategy_modes = cfg.mode == RunMode::Ensemble || cfg.mode == RunMode::Qec;
  if (strategy_modes) {
    if (!method_given)
      cfg.integrator.method = noisy ? StepMethod::EulerMaruyama : StepMethod::RungeKutta4;
    else if (noisy && cfg.integrator.method != StepMethod::EulerMaruyama)
      errors.add("integrator.method", "noisy weights integrate with euler-maruyama");
    else if (!noisy && cfg.integrator.method != StepMethod::RungeKutta4)
      errors.add("integrator.method", "deterministic strategies integrate with rk4");
  }

  // mode-specific scalars
  if (root.contains("trajectories")) {
    if (const auto v = get_integer(root, "trajectories", "", errors)) {
      if (*v < 1) errors.add("trajectories", "must be >= 1");
      else cfg.trajectories = *v;
    }
  } else if (cfg.mode == RunMode::Ensemble) {
    errors.add("trajectories", "required for ensemble mode");
  }
  if (const auto v = get_integer(root, "target_projector", "", errors))
    cfg.target_projector = static_cast<int>(*v);
  if (const auto v = get_number(root, "logical_weight", "", errors)) {
    if (!(*v >= 0.0 && *v <= 1.0)) errors.add("logical_weight", "must lie in [0,1]");
    else cfg.logical_weight = *v;
  }

  // feedback
  if (root.contains("feedback") && expect_object(root.at("feedback"), "feedback", errors)) {
    const Json& obj = root.at("feedback");
    check_keys(obj, "feedback", {"gain", "clamp", "actuator"}, errors);
    if (const auto v = get_number(obj, "gain", "feedback", errors)) {
      if (*v < 0.0) errors.add("feedback.gain", "must be >= 0");
      else cfg.feedback.gain = *v;
    }
    if (const auto v = get_number(obj, "clamp", "feedback", errors)) {
      if (!(*v > 0.0 && *v <= 1.0)) errors.add("feedback.clamp", "must lie in (0,1]");
      else cfg.feedback.clamp_fraction = *v;
    }
    if (const auto a = get_string(obj, "actuator", "feedback", errors)) {
      if (*a == "joint") cfg.individual_shifts = false;
      else if (*a == "individual") cfg.individual_shifts = true;
      else errors.add("feedback.actuator", "expected 'joint' or 'individual'");
      if (cfg.mode != RunMode::BellJzJz)
        errors.add("feedback.actuator", "only meaningful for bell-jzjz");
    }
  }

  // outputs
  if (root.contains("outputs") && expect_object(root.at("outputs"), "outputs", errors)) {
    const Json& obj = root.at("outputs");
    check_keys(obj, "outputs", {"samples", "summary"}, errors);
    if (const auto v = get_string(obj, "samples", "outputs", errors)) {
      if (v->empty()) errors.add("outputs.samples", "must not be empty");
      else cfg.samples_path = *v;
    }
    if (const auto v = get_string(obj, "summary", "outputs", errors)) {
      if (v->empty()) errors.add("outputs.summary", "must not be empty");
      else cfg.summary_path = *v;
    }
  }

  // Dimension resolution: the explicit field and every intrinsic dimension
  // must agree.
  {
    struct Claim {
      int dim;
      const char* source;
    };
    std::vector<Claim> claims;
    if (dimension_given) claims.push_back({cfg.dimension, "dimension"});
    if (const int d = intrinsic_dim(cfg.initial_state)) claims.push_back({d, "initial_state"});
    if (const int d = intrinsic_dim(cfg.projectors)) claims.push_back({d, "projectors"});
    if (const int d = intrinsic_dim(cfg.hamiltonian)) claims.push_back({d, "hamiltonian"});
    for (const auto& op : cfg.lindblad.operators) {
      claims.push_back({static_cast<int>(op.rows()), "lindblad.operators"});
      break;
    }
    if (cfg.mode == RunMode::RabiFeedback) claims.push_back({2, "rabi-feedback mode"});
    if (cfg.mode == RunMode::BellJzJz) claims.push_back({4, "bell-jzjz mode"});
    if (!claims.empty()) {
      const int d = claims.front().dim;
      for (const auto& c : claims)
        if (c.dim != d) {
          errors.add("dimension", std::string("inconsistent dimensions: ") + claims.front().source +
                                      " gives " + std::to_string(d) + " but " + c.source +
                                      " gives " + std::to_string(c.dim));
          break;
        }
      cfg.dimension = d;
    }
  }

  // Stochastic runs must be seeded.
  if (cfg.strategy.stochastic() &&
      (cfg.mode == RunMode::Ensemble || cfg.mode == RunMode::Qec ||
       cfg.mode == RunMode::RabiFeedback || cfg.mode == RunMode::BellJzJz) &&
      !cfg.seed)
    errors.add("seed", "seed required for stochastic runs");

  // Final cross-checks by actually building the objects.
  if (errors.list.empty()) {
    try {
      const DensityMatrix rho0 = cfg.build_initial();
      if (rho0.rows() != cfg.dimension)
        errors.add("initial_state", "dimension mismatch against resolved dimension");
      if (cfg.mode != RunMode::RabiFeedback && cfg.mode != RunMode::BellJzJz) {
        if (cfg.mode != RunMode::Lindblad || root.contains("projectors")) {
          const ProjectorSet set = cfg.build_projectors();
          if (set.dim() != cfg.dimension) errors.add("projectors", "dimension mismatch");
          if (cfg.mode == RunMode::Trajectory &&
              (cfg.target_projector < 0 || cfg.target_projector >= set.size()))
            errors.add("target_projector", "index out of range");
          if (cfg.mode == RunMode::Qec && set.size() != 2)
            errors.add("projectors", "qec needs exactly two projectors (logical/error)");
          if (cfg.strategy.kind == WeightStrategy::Kind::FixedOutcome &&
              (cfg.strategy.outcome < 0 || cfg.strategy.outcome >= set.size()))
            errors.add("strategy.outcome", "index out of range");
        }
      }
      if (const auto h = cfg.build_hamiltonian())
        if (h->rows() != cfg.dimension) errors.add("hamiltonian", "dimension mismatch");
      if (cfg.mode == RunMode::Lindblad)
        for (const auto& l : cfg.build_lindblad())
          if (l.rows() != cfg.dimension) errors.add("lindblad", "dimension mismatch");
    } catch (const std::exception& e) {
      errors.add("", e.what());
    }
  }

  result.errors = errors.list;
  if (result.errors.empty()) result.config = cfg;
  return result;
}

// Canonical, strict-schema echo of a parsed config; re-parsing it reproduces
// the run exactly.
inline Json config_echo(const ExperimentConfig& cfg) {
  using namespace config_detail;
  Json j;
  j["mode"] = to_string(cfg.mode);
  j["dimension"] = cfg.dimension;
  if (cfg.seed) j["seed"] = *cfg.seed;
  j["g"] = cfg.g;

  Json init;
  switch (cfg.initial_state.preset) {
    case InitialStateSpec::Preset::Basis:
      init["preset"] = "basis";
      init["index"] = cfg.initial_state.index;
      break;
    case InitialStateSpec::Preset::Plus: init["preset"] = "plus"; break;
    case InitialStateSpec::Preset::Bell: init["preset"] = "bell"; break;
    case InitialStateSpec::Preset::Custom:
      init["preset"] = "custom";
      init["matrix"] = matrix_to_json(cfg.initial_state.matrix);
      break;
  }
  j["initial_state"] = std::move(init);

  const bool emit_projectors = cfg.mode == RunMode::Trajectory || cfg.mode == RunMode::Ensemble ||
                               cfg.mode == RunMode::Qec ||
                               (cfg.mode == RunMode::Lindblad);
  if (emit_projectors) {
    Json proj;
    switch (cfg.projectors.preset) {
      case ProjectorSpec::Preset::ZBasis: proj["preset"] = "z-basis"; break;
      case ProjectorSpec::Preset::JzJz: proj["preset"] = "jz-jz"; break;
      case ProjectorSpec::Preset::LogicalError:
        proj["preset"] = "logical-error";
        proj["qubits"] = cfg.projectors.qubits;
        break;
      case ProjectorSpec::Preset::Custom: {
        proj["preset"] = "custom";
        Json mats = Json::array();
        for (const auto& m : cfg.projectors.matrices) mats.push_back(matrix_to_json(m));
        proj["matrices"] = std::move(mats);
        if (!cfg.projectors.labels.empty()) proj["labels"] = cfg.projectors.labels;
        break;
      }
    }
    j["projectors"] = std::move(proj);
  }

  if (cfg.mode != RunMode::Qec) {
    Json ham;
    switch (cfg.hamiltonian.preset) {
      case HamiltonianSpec::Preset::None: ham["preset"] = "none"; break;
      case HamiltonianSpec::Preset::SigmaX:
        ham["preset"] = "sigma-x";
        ham["omega"] = cfg.hamiltonian.omega;
        break;
      case HamiltonianSpec::Preset::JointSigmaX:
        ham["preset"] = "joint-sigma-x";
        ham["omega"] = cfg.hamiltonian.omega;
        break;
      case HamiltonianSpec::Preset::Custom:
        ham["preset"] = "custom";
        ham["matrix"] = matrix_to_json(cfg.hamiltonian.matrix);
        break;
    }
    j["hamiltonian"] = std::move(ham);
  }

  if (cfg.mode == RunMode::Lindblad) {
    Json lb;
    switch (cfg.lindblad.preset) {
      case LindbladSpec::Preset::DephasingZ:
        lb["preset"] = "dephasing-z";
        lb["gamma"] = cfg.lindblad.gamma;
        break;
      case LindbladSpec::Preset::ProjectorDephasing:
        lb["preset"] = "projector-dephasing";
        lb["gamma"] = cfg.lindblad.gamma;
        break;
      case LindbladSpec::Preset::Custom: {
        lb["preset"] = "custom";
        Json ops = Json::array();
        for (const auto& m : cfg.lindblad.operators) ops.push_back(matrix_to_json(m));
        lb["operators"] = std::move(ops);
        break;
      }
    }
    j["lindblad"] = std::move(lb);
  }

  const bool emit_strategy = cfg.mode == RunMode::Ensemble || cfg.mode == RunMode::Qec ||
                             cfg.mode == RunMode::RabiFeedback || cfg.mode == RunMode::BellJzJz;
  if (emit_strategy) {
    Json st;
    switch (cfg.strategy.kind) {
      case WeightStrategy::Kind::Uniform: st["kind"] = "uniform"; break;
      case WeightStrategy::Kind::FrozenBorn: st["kind"] = "frozen-born"; break;
      case WeightStrategy::Kind::InstantaneousBorn: st["kind"] = "instantaneous-born"; break;
      case WeightStrategy::Kind::NoisyInstantaneousBorn:
        st["kind"] = "noisy-instantaneous-born";
        st["epsilon"] = cfg.strategy.epsilon;
        break;
      case WeightStrategy::Kind::FixedOutcome:
        st["kind"] = "fixed-outcome";
        st["outcome"] = cfg.strategy.outcome;
        break;
    }
    j["strategy"] = std::move(st);
  }

  Json integ;
  integ["step"] = cfg.integrator.step;
  integ["duration"] = cfg.integrator.duration;
  integ["renormalize_every"] = cfg.integrator.renormalize_every;
  integ["method"] = cfg.integrator.method == StepMethod::RungeKutta4 ? "rk4" : "euler-maruyama";
  j["integrator"] = std::move(integ);

  if (cfg.mode == RunMode::Ensemble) j["trajectories"] = cfg.trajectories;
  if (cfg.mode == RunMode::Trajectory) j["target_projector"] = cfg.target_projector;
  if (cfg.mode == RunMode::Qec) j["logical_weight"] = cfg.logical_weight;
  if (cfg.mode == RunMode::RabiFeedback || cfg.mode == RunMode::BellJzJz) {
    Json fb;
    fb["gain"] = cfg.feedback.gain;
    fb["clamp"] = cfg.feedback.clamp_fraction;
    if (cfg.mode == RunMode::BellJzJz)
      fb["actuator"] = cfg.individual_shifts ? "individual" : "joint";
    j["feedback"] = std::move(fb);
  }

  Json outs;
  outs["samples"] = cfg.samples_path;
  outs["summary"] = cfg.summary_path;
  j["outputs"] = std::move(outs);
  return j;
}

}  // namespace qmeas

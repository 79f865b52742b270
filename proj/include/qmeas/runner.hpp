// Run orchestration: dispatches a validated ExperimentConfig to the right
// integrator/experiment, writes the samples and summary files, and applies
// parameter sweeps on top of a base config.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "collapse.hpp"
#include "config.hpp"
#include "ensemble.hpp"
#include "experiments.hpp"
#include "io.hpp"
#include "lindblad.hpp"

namespace qmeas {

struct RunOptions {
  int threads = 1;
};

struct RunOutputs {
  std::filesystem::path samples;
  std::filesystem::path summary;
  Json summary_json;
};

namespace runner_detail {

inline Json vector_to_json(const RVector& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json summary_skeleton(const ExperimentConfig& cfg) {
  Json j;
  j["mode"] = to_string(cfg.mode);
  j["config"] = config_echo(cfg);
  if (cfg.seed) {
    j["master_seed"] = *cfg.seed;
    j["seed_streams"] = "mix64(master + (index + 1) * 0x9E3779B97F4A7C15)";
  }
  Json outs;
  outs["samples"] = cfg.samples_path;
  outs["summary"] = cfg.summary_path;
  j["outputs"] = std::move(outs);
  return j;
}

inline Json final_state_block(const TrajectoryRecord& record) {
  Json j;
  const auto& last = record.back();
  j["s"] = last.s;
  j["purity"] = last.purity;
  const auto report = validate_density(last.rho);
  j["hermiticity_defect"] = report.hermiticity_defect;
  j["trace_defect"] = report.trace_defect;
  j["min_eigenvalue"] = report.min_eigenvalue;
  return j;
}

}  // namespace runner_detail

inline RunOutputs execute_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                              const RunOptions& options = {}) {
  namespace fs = std::filesystem;
  using runner_detail::final_state_block;
  using runner_detail::summary_skeleton;
  using runner_detail::vector_to_json;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  Json summary = summary_skeleton(cfg);
  TrajectoryRecord samples_record;

  switch (cfg.mode) {
    case RunMode::Trajectory: {
      const DensityMatrix rho0 = cfg.build_initial();
      const ProjectorSet set = cfg.build_projectors();
      const Projector& target = set[cfg.target_projector];
      samples_record =
          integrate_trajectory(rho0, target, cfg.build_hamiltonian(), cfg.g, cfg.integrator);
      Json block = final_state_block(samples_record);
      block["fixed_point_distance"] = samples_record.back().fixed_point_distance;
      summary["trajectory"] = std::move(block);
      summary["trajectory"]["target_projector"] = cfg.target_projector;
      if (!cfg.build_hamiltonian()) {
        try {
          summary["trajectory"]["convergence_exponent"] =
              convergence_exponent(samples_record, target);
        } catch (const StateError&) {
          summary["trajectory"]["convergence_exponent"] = nullptr;
        }
      }
      break;
    }
    case RunMode::Ensemble: {
      const DensityMatrix rho0 = cfg.build_initial();
      const ProjectorSet set = cfg.build_projectors();
      EnsembleOptions opts;
      opts.threads = options.threads;
      const EnsembleStatistics stats =
          run_ensemble(cfg.trajectories, rho0, set, cfg.strategy, cfg.build_hamiltonian(), cfg.g,
                       cfg.integrator, cfg.master_seed(), opts);
      samples_record = mean_trajectory_record(stats, set);
      Json block;
      block["trajectories"] = stats.trajectories;
      block["outcome_counts"] = stats.outcome_counts;
      block["frequencies"] = vector_to_json(stats.frequencies);
      block["born_initial"] = vector_to_json(stats.born_initial);
      block["z_scores"] = vector_to_json(stats.z_scores);
      block["deterministic_outcomes"] = stats.deterministic_outcomes;
      Json seeds = Json::array();
      for (std::size_t i = 0; i < stats.trajectory_seeds.size() && i < 64; ++i)
        seeds.push_back(stats.trajectory_seeds[i]);
      block["trajectory_seeds_head"] = std::move(seeds);
      Json labels = Json::array();
      for (const auto& p : set.items) labels.push_back(p.label);
      block["outcome_labels"] = std::move(labels);
      summary["ensemble"] = std::move(block);
      break;
    }
    case RunMode::Lindblad: {
      const DensityMatrix rho0 = cfg.build_initial();
      const LindbladSet ls = cfg.build_lindblad();
      const ProjectorSet set = cfg.build_projectors();
      samples_record = integrate_master(rho0, cfg.build_hamiltonian(), ls, cfg.integrator, &set);
      summary["lindblad"] = final_state_block(samples_record);
      break;
    }
    case RunMode::RabiFeedback: {
      RabiFeedbackConfig rc;
      rc.omega = cfg.hamiltonian.omega;
      rc.g = cfg.g;
      rc.epsilon = cfg.strategy.epsilon;
      rc.feedback = cfg.feedback;
      rc.integrator = cfg.integrator;
      rc.seed = cfg.master_seed();
      rc.initial = cfg.build_initial();
      const ExperimentRecord record = rabi_feedback_run(rc);
      samples_record = record.trajectory;
      Json block = final_state_block(samples_record);
      block["mean_fidelity"] = record.mean_fidelity;
      block["final_fidelity"] = record.final_fidelity;
      block["feedback_gain"] = cfg.feedback.gain;
      block["epsilon"] = cfg.strategy.epsilon;
      block["omega"] = cfg.hamiltonian.omega;
      block["g"] = cfg.g;
      summary["experiment"] = std::move(block);
      break;
    }
    case RunMode::BellJzJz: {
      BellFeedbackConfig bc;
      bc.omega = cfg.hamiltonian.omega;
      bc.g = cfg.g;
      bc.epsilon = cfg.strategy.epsilon;
      bc.feedback = cfg.feedback;
      bc.individual_shifts = cfg.individual_shifts;
      bc.integrator = cfg.integrator;
      bc.seed = cfg.master_seed();
      bc.initial = cfg.build_initial();
      const ExperimentRecord record = bell_jzjz_run(bc);
      samples_record = record.trajectory;
      Json block = final_state_block(samples_record);
      block["mean_fidelity"] = record.mean_fidelity;
      block["final_fidelity"] = record.final_fidelity;
      block["feedback_gain"] = cfg.feedback.gain;
      block["actuator"] = cfg.individual_shifts ? "individual" : "joint";
      block["epsilon"] = cfg.strategy.epsilon;
      block["omega"] = cfg.hamiltonian.omega;
      block["g"] = cfg.g;
      summary["experiment"] = std::move(block);
      break;
    }
    case RunMode::Qec: {
      QecConfig qc;
      qc.qubits = cfg.projectors.qubits;
      qc.split = cfg.build_projectors();
      qc.logical_weight = cfg.logical_weight;
      qc.strategy = cfg.strategy;
      qc.g = cfg.g;
      qc.integrator = cfg.integrator;
      qc.seed = cfg.master_seed();
      if (cfg.initial_state.preset == InitialStateSpec::Preset::Custom)
        qc.initial = cfg.build_initial();
      const ExperimentRecord record = qec_demo_run(qc);
      samples_record = record.trajectory;
      Json block = final_state_block(samples_record);
      block["logical_weight_initial"] = samples_record.front().diagonals(0);
      block["logical_weight_final"] = samples_record.back().diagonals(0);
      block["degenerate_stationary"] = record.degenerate_stationary;
      block["mean_fidelity"] = record.mean_fidelity;
      block["final_fidelity"] = record.final_fidelity;
      summary["qec"] = std::move(block);
      break;
    }
  }

  RunOutputs outputs;
  outputs.samples = out_dir / cfg.samples_path;
  outputs.summary = out_dir / cfg.summary_path;
  emit_samples(samples_record, outputs.samples);
  emit_summary(summary, outputs.summary);
  outputs.summary_json = std::move(summary);
  return outputs;
}

// Applies `--param a.b.c --values v1,v2,...` style sweeps: each value is
// substituted into the base config JSON at the dotted path, re-validated and
// run into its own subdirectory.
inline Json execute_sweep(const Json& base_config, const std::string& param,
                          const std::vector<Json>& values, const std::filesystem::path& out_dir,
                          const RunOptions& options = {}) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  Json sweep;
  sweep["param"] = param;
  sweep["runs"] = Json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    Json cfg_json = base_config;
    Json* node = &cfg_json;
    std::string rest = param;
    while (true) {
      const auto dot = rest.find('.');
      const std::string key = rest.substr(0, dot);
      if (key.empty()) throw ConfigError("sweep: bad parameter path '" + param + "'");
      if (dot == std::string::npos) {
        (*node)[key] = values[i];
        break;
      }
      node = &(*node)[key];
      rest = rest.substr(dot + 1);
    }
    const ParseResult parsed = parse_config(cfg_json.dump());
    if (!parsed.ok()) {
      std::string message = "sweep value " + values[i].dump() + " rejected:";
      for (const auto& e : parsed.errors) message += "\n  " + e;
      throw ConfigError(message);
    }
    char tag[32];
    std::snprintf(tag, sizeof tag, "sweep_%03zu", i);
    const RunOutputs out = execute_run(*parsed.config, out_dir / tag, options);
    Json entry;
    entry["value"] = values[i];
    entry["dir"] = tag;
    Json run_summary = out.summary_json;
    run_summary.erase("config");
    entry["summary"] = std::move(run_summary);
    sweep["runs"].push_back(std::move(entry));
  }
  return sweep;
}

}  // namespace qmeas

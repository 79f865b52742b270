// qmeas command-line interface: run/validate/sweep declarative experiment
// configs and list the available presets.
//
// Exit codes: 0 success, 1 validation error, 2 runtime invariant breach,
// 3 I/O error.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qmeas/qmeas.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitIo = 3;

qmeas::ExperimentConfig load_config(const std::string& path,
                                    const std::optional<std::uint64_t>& seed_override) {
  const std::string text = qmeas::read_text_file(path);
  qmeas::ParseResult parsed = qmeas::parse_config(text);
  if (!parsed.ok()) {
    std::ostringstream out;
    out << "config '" << path << "' is invalid:";
    for (const auto& e : parsed.errors) out << "\n  " << e;
    throw qmeas::ConfigError(out.str());
  }
  if (seed_override) parsed.config->seed = *seed_override;
  return *parsed.config;
}

void print_presets() {
  std::cout << "modes:                trajectory ensemble lindblad rabi-feedback bell-jzjz qec\n"
            << "initial_state.preset: basis plus bell custom\n"
            << "projectors.preset:    z-basis jz-jz logical-error custom\n"
            << "hamiltonian.preset:   none sigma-x joint-sigma-x custom\n"
            << "lindblad.preset:      dephasing-z projector-dephasing custom\n"
            << "strategy.kind:        uniform frozen-born instantaneous-born"
               " noisy-instantaneous-born fixed-outcome\n"
            << "integrator.method:    rk4 euler-maruyama\n";
}

std::vector<qmeas::Json> parse_sweep_values(const std::string& csv) {
  std::vector<qmeas::Json> values;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      values.push_back(qmeas::Json::parse(item));
    } catch (const qmeas::Json::parse_error&) {
      values.push_back(qmeas::Json(item));  // bare strings are fine
    }
  }
  if (values.empty()) throw qmeas::ConfigError("sweep: --values is empty");
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qmeas - weak-measurement collapse dynamics simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
  bool quiet = false;
  std::string sweep_param;
  std::string sweep_values;

  auto add_common = [&](CLI::App* cmd, bool with_run_flags) {
    cmd->add_option("config,--config", config_path, "experiment config (JSON)")->required();
    if (with_run_flags) {
      cmd->add_option("--out-dir", out_dir, "output directory");
      cmd->add_option("--seed", seed_override, "override the master seed");
      cmd->add_option("--threads", threads, "worker threads for ensembles")
          ->check(CLI::PositiveNumber);
      cmd->add_flag("--quiet", quiet, "suppress progress output");
    }
  };

  CLI::App* run_cmd = app.add_subcommand("run", "execute one experiment config");
  add_common(run_cmd, true);

  CLI::App* validate_cmd = app.add_subcommand("validate", "check a config and report all errors");
  add_common(validate_cmd, false);

  CLI::App* presets_cmd = app.add_subcommand("presets", "preset catalogue");
  presets_cmd->add_subcommand("list", "list available presets")->parse_complete_callback(
      print_presets);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a config across parameter values");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--param", sweep_param, "dotted config path, e.g. feedback.gain")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitValidation;
  }

  try {
    if (run_cmd->parsed()) {
      const qmeas::ExperimentConfig cfg = load_config(config_path, seed_override);
      qmeas::RunOptions options;
      options.threads = threads;
      const qmeas::RunOutputs outputs = qmeas::execute_run(cfg, out_dir, options);
      if (!quiet)
        std::cout << "wrote " << outputs.samples.string() << "\n"
                  << "wrote " << outputs.summary.string() << "\n";
    } else if (validate_cmd->parsed()) {
      const std::string text = qmeas::read_text_file(config_path);
      const qmeas::ParseResult parsed = qmeas::parse_config(text);
      if (!parsed.ok()) {
        std::cerr << "invalid config:";
        for (const auto& e : parsed.errors) std::cerr << "\n  " << e;
        std::cerr << "\n";
        return kExitValidation;
      }
      std::cout << "OK: " << config_path << " (mode " << qmeas::to_string(parsed.config->mode)
                << ", dimension " << parsed.config->dimension << ")\n";
    } else if (sweep_cmd->parsed()) {
      std::optional<std::uint64_t> dummy;
      qmeas::ExperimentConfig base = load_config(config_path, dummy);  // validate the base first
      qmeas::Json base_json = qmeas::Json::parse(qmeas::read_text_file(config_path));
      if (seed_override) base_json["seed"] = *seed_override;
      qmeas::RunOptions options;
      options.threads = threads;
      const qmeas::Json sweep = qmeas::execute_sweep(base_json, sweep_param,
                                                     parse_sweep_values(sweep_values), out_dir,
                                                     options);
      const std::filesystem::path summary_path = std::filesystem::path(out_dir) / "sweep_summary.json";
      qmeas::emit_summary(sweep, summary_path);
      if (!quiet) std::cout << "wrote " << summary_path.string() << "\n";
      (void)base;
    }
  } catch (const qmeas::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const qmeas::IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitIo;
  } catch (const qmeas::InvariantBreach& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

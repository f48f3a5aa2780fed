// drqkd: simulator and analysis CLI for the dual-rail displaced-photon QKD
// protocol. Subcommands: simulate | validate | sweep | attack-compare.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drqkd/cli.hpp"
#include "drqkd/version.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::optional<std::string> format;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path, "Path to a JSON run configuration");
  cmd->add_option("--seed", flags.seed, "Session seed (overrides config)");
  cmd->add_option("--trials", flags.trials, "Trial count (overrides config)");
  cmd->add_option("--out", flags.out_dir, "Output directory (overrides config)");
  cmd->add_option("--threads", flags.threads, "Worker cap; does not affect results");
  cmd->add_option("--format", flags.format, "Emit json, csv or both (overrides config)")
      ->check(CLI::IsMember({"json", "csv", "both"}));
}

drqkd::cli::RunConfig build_config(const Flags& flags) {
  using drqkd::cli::EmitFormat;
  drqkd::cli::RunConfig cfg =
      flags.config_path.empty() ? drqkd::cli::RunConfig{} : drqkd::cli::load_config(flags.config_path);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.trials) {
    if (*flags.trials < 1) throw drqkd::ConfigError("--trials must be positive");
    cfg.trials = *flags.trials;
  }
  if (flags.out_dir) cfg.out_dir = *flags.out_dir;
  if (flags.threads) {
    if (*flags.threads < 1) throw drqkd::ConfigError("--threads must be positive");
    cfg.threads = *flags.threads;
  }
  if (flags.format) {
    cfg.format = *flags.format == "json" ? EmitFormat::Json
                 : *flags.format == "csv" ? EmitFormat::Csv
                                          : EmitFormat::Both;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-rail displaced-photon QKD simulator"};
  app.set_version_flag("--version", drqkd::version);
  app.require_subcommand(1);

  Flags flags;
  auto* simulate = app.add_subcommand("simulate", "Run a seeded protocol session");
  auto* validate = app.add_subcommand("validate", "Session plus theory and engine checks");
  auto* sweep = app.add_subcommand("sweep", "Scan one parameter axis");
  auto* compare = app.add_subcommand("attack-compare", "Run several eavesdropping strategies");
  for (auto* cmd : {simulate, validate, sweep, compare}) add_common_flags(cmd, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = build_config(flags);
    if (simulate->parsed()) return drqkd::cli::cmd_simulate(cfg, std::cout);
    if (validate->parsed()) return drqkd::cli::cmd_validate(cfg, std::cout);
    if (sweep->parsed()) return drqkd::cli::cmd_sweep(cfg, std::cout);
    if (compare->parsed()) return drqkd::cli::cmd_attack_compare(cfg, std::cout);
    return drqkd::cli::kExitRuntime;
  } catch (const drqkd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return drqkd::cli::kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return drqkd::cli::kExitRuntime;
  }
}

#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>

#include "gsc/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out, "override the output directory");
  cmd->add_option("--jobs", args.jobs, "worker threads for sample-parallel stages");
}

int load_and_run(const CommonArgs& args, const gsc::StageSet& stages) {
  gsc::ExperimentConfig cfg;
  try {
    cfg = gsc::parse_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.out) cfg.out_dir = *args.out;
    if (args.jobs) cfg.jobs = *args.jobs;
    cfg.data.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
  } catch (const gsc::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return gsc::kExitConfig;
  }
  std::fputs(gsc::resolved_config_echo(cfg).c_str(), stdout);
  try {
    return gsc::run_experiment(cfg, stages);
  } catch (const gsc::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return gsc::kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return gsc::kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"group basis pursuit toolkit"};
  app.require_subcommand(1);

  CommonArgs run_args, gen_args, solve_args, certify_args, train_args, attack_args;
  std::string report_dir;
  CommonArgs report_args;

  auto* run_cmd = app.add_subcommand("run", "full pipeline for the configured experiment");
  add_common(run_cmd, run_args);
  auto* gen_cmd = app.add_subcommand("gen-data", "generate datasets and dictionaries");
  add_common(gen_cmd, gen_args);
  auto* solve_cmd = app.add_subcommand("solve", "batch-solve the configured dataset");
  add_common(solve_cmd, solve_args);
  auto* certify_cmd = app.add_subcommand("certify", "evaluate recovery certificates");
  add_common(certify_cmd, certify_args);
  auto* train_cmd = app.add_subcommand("train", "dictionary/classifier/approximator training");
  add_common(train_cmd, train_args);
  auto* attack_cmd = app.add_subcommand("attack", "IFGSM sweeps over the epsilon grid");
  add_common(attack_cmd, attack_args);
  auto* report_cmd = app.add_subcommand("report", "render charts and tables from sweep CSVs");
  add_common(report_cmd, report_args, /*config_required=*/false);
  report_cmd->add_option("--dir", report_dir, "artifact directory (defaults to config out)");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) return load_and_run(run_args, gsc::StageSet{});
  if (gen_cmd->parsed())
    return load_and_run(gen_args, gsc::StageSet{true, false, false, false, false});
  if (solve_cmd->parsed())
    return load_and_run(solve_args, gsc::StageSet{false, true, false, false, false});
  if (train_cmd->parsed())
    return load_and_run(train_args, gsc::StageSet{false, false, true, false, false});
  if (attack_cmd->parsed())
    return load_and_run(attack_args, gsc::StageSet{false, false, false, true, false});
  if (certify_cmd->parsed()) {
    // certificate experiments run end to end; stage flags do not apply
    return load_and_run(certify_args, gsc::StageSet{});
  }
  if (report_cmd->parsed()) {
    try {
      if (!report_dir.empty()) return gsc::emit_report(report_dir);
      if (report_args.out) return gsc::emit_report(*report_args.out);
      if (!report_args.config_path.empty()) {
        const auto cfg = gsc::parse_config(report_args.config_path);
        return gsc::emit_report(report_args.out.value_or(cfg.out_dir));
      }
      std::fprintf(stderr, "report: need --dir, --out, or --config\n");
      return gsc::kExitConfig;
    } catch (const gsc::ConfigError& e) {
      std::fprintf(stderr, "%s\n", e.what());
      return gsc::kExitConfig;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "runtime failure: %s\n", e.what());
      return gsc::kExitRuntime;
    }
  }
  return gsc::kExitConfig;
}

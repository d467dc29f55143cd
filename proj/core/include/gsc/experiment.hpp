#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsc/attack.hpp"
#include "gsc/data.hpp"
#include "gsc/train.hpp"

namespace gsc {

// Resolved experiment configuration. Defaults here are the documented
// defaults; parse_config overrides them from the file and validates.
struct ExperimentConfig {
  std::string kind;  // synthetic-nopool | synthetic-pooled | mnist | certify | layered-bounds
  std::uint64_t seed = 42;
  std::string out_dir = "runs/out";
  int jobs = 1;

  // [data] synthetic generation
  SyntheticSpec data;

  // [mnist]
  std::string mnist_dir;
  int mnist_train_limit = 2000;
  int mnist_test_limit = 500;
  int mnist_groups = 32;  // 32 groups of 8 over 256 atoms

  // [solver]
  double gamma_bp = 0.05;   // weight for the singleton-l1 route
  double gamma_gbp = 0.45;  // weight for the l2-group route
  int solver_max_iter = 5000;

  // [packing]
  double target_mu = 0.0;
  int packing_rounds = 400;

  // [attack]
  std::vector<double> epsilons{0.0};
  int attack_steps = 10;
  double attack_gap_weight = 0.5;  // used by the +gap method variants
  int unroll_iterations = 300;

  std::vector<std::string> methods{"GBP"};

  // [certify]
  int certify_count = 200;
  double noise_level = 0.05;
  double c = 2.0 / 3.0;
  int active_groups = 1;
  int layered_count = 50;
  int layered_groups2 = 20;

  // [train]
  TrainConfig train;
};

/// Strict parser for the flat key = value / [section] format; unknown keys
/// raise ConfigError with a nearest-key suggestion.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

/// Canonical echo with every field resolved; byte-stable for hashing.
std::string resolved_config_echo(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

// exit codes: 0 success, 2 config error, 3 runtime failure, 4 failed checks
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitCheckFailed = 4;

struct StageSet {
  bool gen_data = true;
  bool solve = true;
  bool train = true;
  bool attack = true;
  bool report = true;
};

/// Runs the configured experiment end to end, writing every artifact under
/// cfg.out_dir. Idempotent for a fixed config + seed.
int run_experiment(const ExperimentConfig& cfg, const StageSet& stages = {});

/// Renders accuracy-vs-epsilon SVG charts and the group-statistics table from
/// the sweep CSVs found in artifact_dir.
int emit_report(const std::string& artifact_dir);

struct GroupStats {
  double inactive_rate = 0.0;    // mean fraction of groups predicted inactive
  double mean_group_acc = 0.0;   // mean per-group activity accuracy
  double exact_combo_rate = 0.0; // fraction of samples with the exact active set
};

/// Activity comparison between solved and true codes; a group counts as
/// active when its l2 norm exceeds the gate (the gap regularizer's rule).
GroupStats group_statistics(const Eigen::MatrixXd& solved_codes,
                            const Eigen::MatrixXd& true_codes, const GroupPartition& partition,
                            double gate);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     std::uint64_t config_hash_value);
std::vector<SweepRow> read_sweep_csv(const std::string& path);

}  // namespace gsc

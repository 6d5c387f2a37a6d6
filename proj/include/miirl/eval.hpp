#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "miirl/envs.hpp"
#include "miirl/trainers.hpp"

namespace miirl {

/// Expected value difference of a learned reward against one true intention:
/// both the expert policy (optimal under the true reward) and the policy
/// optimal under the learned reward are evaluated under the true reward, and
/// the start-distribution-weighted values are compared:
///   EVD = | E_start V(expert) - E_start V(learned-policy) |.
double evd(const BenchmarkEnv& env, int true_intention,
           const Eigen::VectorXd& learned_reward, double vi_tolerance = 1e-4);

struct EvalResult {
  double avg_evd = 0.0;
  double transfer_avg_evd = 0.0;
  int k_predicted = 0;
};

/// Average per-demonstration EVD: each demo contributes the EVD of the
/// learned reward of its MAP intention against its true intention; the
/// transferred score applies the same heads to the transferred environment.
EvalResult evaluate_run(const BenchmarkEnv& env,
                        const BenchmarkEnv& transferred,
                        const TrainResult& result,
                        const std::vector<Trajectory>& demos,
                        double vi_tolerance = 1e-4);

/// Per-iteration evaluator for the trainers; computes the average EVD on the
/// original environment and, when a transferred environment is given, the
/// transferred average as well. Expert-side values are computed once.
Evaluator make_evaluator(const BenchmarkEnv& env,
                         const BenchmarkEnv* transferred,
                         const std::vector<Trajectory>& demos,
                         double vi_tolerance = 1e-4, int eval_every = 1);

struct ExperimentConfig {
  EnvKind kind = EnvKind::MBinaryWorld;
  /// Desk-scale default; --paper-scale restores the full 32x32 M-worlds and
  /// the five-layer 256-wide base network.
  int grid_size = 16;
  bool paper_scale = false;
  int n_objects = 50;
  int n_outer_colors = 2;
  std::vector<int> intentions = {0, 1, 2};
  int demos_per_intention = 16;
  int demo_length = 0;  // 0 = kind default (40 for GridWorld, 8 for M-worlds)
  TrainConfig train;
  int repeats = 6;
  std::uint64_t seed = 0;
  /// Concentration sweep; empty = single point at train.alpha.
  std::vector<double> alphas;
  std::string out_dir = ".";
  int jobs = 1;
  int eval_every = 1;
  bool write_ppm = false;

  /// Applies paper_scale and per-kind defaults.
  ExperimentConfig resolved() const;
  /// Canonical key = value rendering (the manifest; also valid CLI config).
  std::string to_key_values() const;
};

struct RunRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::Sem;
  EnvKind env = EnvKind::MBinaryWorld;
  int iteration = 0;
  double avg_evd = 0.0;
  double transfer_avg_evd = 0.0;
  int k_predicted = 0;
  double wall_ms = 0.0;

  bool operator==(const RunRecord&) const = default;
};

struct SummaryRow {
  std::string config;  // configuration point label, e.g. "alpha=1"
  Algorithm algorithm = Algorithm::Sem;
  EnvKind env = EnvKind::MBinaryWorld;
  double alpha = 0.0;
  int repeats = 0;
  int failures = 0;
  bool degenerate = false;  // single repeat: standard errors reported as 0
  double mean_avg_evd = 0.0, se_avg_evd = 0.0;
  double mean_transfer_avg_evd = 0.0, se_transfer_avg_evd = 0.0;
  double mean_k_predicted = 0.0, se_k_predicted = 0.0;
};

/// Grayscale reward map destined for a plain-text PPM file.
struct RewardMapImage {
  std::string name;
  Eigen::VectorXd values;
  int width = 0;
  int height = 0;
};

struct ExperimentOutput {
  std::vector<RunRecord> records;
  std::vector<SummaryRow> summaries;
  std::vector<RewardMapImage> maps;
  std::vector<std::string> errors;  // one per failed repeat

  bool all_ok() const { return errors.empty(); }
};

/// Runs every configuration point (one per swept alpha, or a single point)
/// for the configured number of repeats: fresh environment, fresh transferred
/// environment, fresh demonstrations and training per repeat. Failed repeats
/// are recorded and excluded from the summary; the run continues.
ExperimentOutput run_experiment(const ExperimentConfig& config);

}  // namespace miirl

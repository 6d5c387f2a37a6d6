#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "miirl/mdp.hpp"

namespace miirl {

enum class EnvKind { GridWorld, MObjectWorld, MBinaryWorld };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

/// One expert demonstration: a fixed-length (state, action) sequence.
/// true_intention is ground truth carried along for evaluation only.
struct Trajectory {
  std::vector<std::pair<int, int>> steps;
  std::optional<int> true_intention;

  int length() const { return static_cast<int>(steps.size()); }
};

/// A benchmark MDP plus everything the learners and the evaluator need:
/// per-state binary features, per-state rule labels (the M-worlds' reward
/// rules), and the set of true per-state reward vectors, one per intention.
struct BenchmarkEnv {
  EnvKind kind;
  int grid_size = 0;
  std::uint64_t layout_seed = 0;
  int n_objects = 0;      // M-ObjectWorld only
  int n_outer_colors = 0; // M-ObjectWorld only
  TabularMdp mdp;
  Eigen::MatrixXd features;      // n_states x d, entries in {0, 1}
  std::vector<int> rule_labels;  // values in {1,2,3}; empty for GridWorld
  std::vector<Eigen::VectorXd> true_rewards;

  int n_states() const { return mdp.n_states(); }
  int n_intentions() const { return static_cast<int>(true_rewards.size()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

/// 8x8 grid, 4 actions, 20% chance the realized move is re-drawn uniformly
/// over all four directions. Features are the 16 indicators of the 2x2
/// regions; three linear reward functions with sparse uniform weights.
BenchmarkEnv make_gridworld(std::uint64_t seed);

/// size x size grid, 5 actions (moves + stay), 30% chance of a uniformly
/// random different action. Objects at distinct random cells with random
/// inner/outer colors; binary features threshold the Euclidean distance to
/// the nearest object of each color at every integer d in 1..size.
/// Rule 1: within 3 cells of an outer-color-1 object and within 2 of an
/// outer-color-2 object. Rule 2: within 3 of outer color 1 only. Rule 3:
/// everywhere else. Six true reward vectors from the fixed rule table.
BenchmarkEnv make_objectworld(std::uint64_t seed, int n_objects = 50,
                              int n_outer_colors = 2, int grid_size = 32);

/// size x size grid, same action/noise model as the object world. Every cell
/// is independently color 1 or 2 with probability 0.5; the feature vector is
/// the 3x3 neighborhood block (row-major, 1 iff color 1, off-grid cells count
/// as color 2). Rule 1: exactly 4 of the 9 block cells are color 1; rule 2:
/// exactly 5; rule 3 otherwise.
BenchmarkEnv make_binaryworld(std::uint64_t seed, int grid_size = 32);

/// True per-state reward for one intention.
const Eigen::VectorXd& intention_reward(const BenchmarkEnv& env, int intention);

/// Fresh layout with a new seed; kind, sizes, noise model, feature dimension
/// and reward rules unchanged, so a learned reward network applies directly.
BenchmarkEnv transfer_env(const BenchmarkEnv& env, std::uint64_t seed);

/// Expert rollouts: optimal policy for the intention's true reward, starts
/// drawn from the MDP start distribution, transitions sampled from the noisy
/// dynamics. Each trajectory carries true_intention = intention.
std::vector<Trajectory> sample_demonstrations(const BenchmarkEnv& env,
                                              int intention, int count,
                                              int length, std::uint64_t seed);

/// Plain-text archive: header with kind/size/seed/params, then one row per
/// state with the rule label and feature bits. Loading regenerates the
/// environment from the header and verifies the rows match bit-exactly.
void save_env(const BenchmarkEnv& env, const std::string& path);
BenchmarkEnv load_env(const std::string& path);

/// Plain-text demonstration archive (one line per trajectory:
/// intention followed by alternating state action pairs).
void save_demonstrations(const std::vector<Trajectory>& demos,
                         const std::string& path);
std::vector<Trajectory> load_demonstrations(const std::string& path);

}  // namespace miirl

#include "miirl/envs.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "miirl/rng.hpp"

namespace miirl {

namespace {

// Reward value per (intention, rule) for both M-worlds.
constexpr double kRuleRewards[6][3] = {
    {+5, -10, 0},   // A
    {-10, 0, +5},   // B
    {0, +5, -10},   // C
    {-10, +5, 0},   // D
    {+5, 0, -10},   // E
    {0, -10, +5},   // F
};

constexpr double kGridDiscount = 0.9;

// Moves: up, down, left, right (row-major grid, state = row * size + col).
constexpr int kRowDelta[4] = {-1, 1, 0, 0};
constexpr int kColDelta[4] = {0, 0, -1, 1};

int move_target(int state, int dir, int size) {
  const int row = state / size;
  const int col = state % size;
  const int nr = row + kRowDelta[dir];
  const int nc = col + kColDelta[dir];
  if (nr < 0 || nr >= size || nc < 0 || nc >= size) return state;  // stay
  return nr * size + nc;
}

/// GridWorld dynamics: 4 actions; with probability 0.8 the intended move is
/// taken, with probability 0.2 the realized move is re-drawn uniformly over
/// all four directions (so it may coincide with the intended one).
std::vector<Eigen::MatrixXd> gridworld_transitions(int size) {
  const int ns = size * size;
  std::vector<Eigen::MatrixXd> p(4, Eigen::MatrixXd::Zero(ns, ns));
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < 4; ++a) {
      p[a](s, move_target(s, a, size)) += 0.8;
      for (int d = 0; d < 4; ++d)
        p[a](s, move_target(s, d, size)) += 0.2 / 4.0;
    }
  }
  return p;
}

/// M-world dynamics: 5 actions (4 moves + stay); with probability 0.7 the
/// intended action executes, otherwise one of the other four actions is
/// drawn uniformly.
std::vector<Eigen::MatrixXd> mworld_transitions(int size) {
  const int ns = size * size;
  std::vector<Eigen::MatrixXd> p(5, Eigen::MatrixXd::Zero(ns, ns));
  auto target = [&](int s, int action) {
    return action == 4 ? s : move_target(s, action, size);
  };
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < 5; ++a) {
      p[a](s, target(s, a)) += 0.7;
      for (int other = 0; other < 5; ++other) {
        if (other == a) continue;
        p[a](s, target(s, other)) += 0.3 / 4.0;
      }
    }
  }
  return p;
}

Eigen::VectorXd uniform_start(int ns) {
  return Eigen::VectorXd::Constant(ns, 1.0 / ns);
}

std::vector<Eigen::VectorXd> mworld_rewards(const std::vector<int>& rules) {
  std::vector<Eigen::VectorXd> rewards(6);
  for (int i = 0; i < 6; ++i) {
    rewards[i].resize(static_cast<int>(rules.size()));
    for (std::size_t s = 0; s < rules.size(); ++s)
      rewards[i][static_cast<int>(s)] = kRuleRewards[i][rules[s] - 1];
  }
  return rewards;
}

}  // namespace

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::GridWorld: return "gridworld";
    case EnvKind::MObjectWorld: return "objectworld";
    case EnvKind::MBinaryWorld: return "binaryworld";
  }
  throw std::logic_error("unknown EnvKind");
}

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "gridworld") return EnvKind::GridWorld;
  if (name == "objectworld") return EnvKind::MObjectWorld;
  if (name == "binaryworld") return EnvKind::MBinaryWorld;
  throw std::invalid_argument("unknown environment kind: " + name);
}

BenchmarkEnv make_gridworld(std::uint64_t seed) {
  constexpr int kSize = 8;
  constexpr int kRegions = 16;  // (8/2)^2 regions of 2x2 cells
  const int ns = kSize * kSize;

  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(ns, kRegions);
  for (int s = 0; s < ns; ++s) {
    const int region = (s / kSize / 2) * (kSize / 2) + (s % kSize) / 2;
    features(s, region) = 1.0;
  }

  // Three linear reward functions; each weight is nonzero with probability
  // 0.2, drawn uniform on [-1, 1]; an all-zero draw is regenerated.
  Rng rng(seed);
  std::vector<Eigen::VectorXd> rewards;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(kRegions);
    do {
      for (int f = 0; f < kRegions; ++f)
        w[f] = rng.bernoulli(0.2) ? rng.uniform(-1.0, 1.0) : 0.0;
    } while (w.isZero());
    rewards.push_back(features * w);
  }

  return BenchmarkEnv{EnvKind::GridWorld,
                      kSize,
                      seed,
                      0,
                      0,
                      TabularMdp(gridworld_transitions(kSize), kGridDiscount,
                                 uniform_start(ns)),
                      std::move(features),
                      {},
                      std::move(rewards)};
}

BenchmarkEnv make_objectworld(std::uint64_t seed, int n_objects,
                              int n_outer_colors, int grid_size) {
  if (n_objects < 2) throw std::invalid_argument("objectworld: n_objects >= 2");
  if (n_outer_colors < 2)
    throw std::invalid_argument("objectworld: n_outer_colors >= 2");
  if (grid_size < 2) throw std::invalid_argument("objectworld: grid_size >= 2");
  const int ns = grid_size * grid_size;
  if (n_objects > ns)
    throw std::invalid_argument("objectworld: more objects than cells");

  Rng rng(seed);
  struct Object {
    int cell;
    int outer;
    int inner;
  };
  std::vector<Object> objects;
  std::vector<bool> occupied(ns, false);
  for (int i = 0; i < n_objects; ++i) {
    int cell;
    do {
      cell = rng.uniform_int(ns);
    } while (occupied[cell]);
    occupied[cell] = true;
    const int outer = 1 + rng.uniform_int(n_outer_colors);
    const int inner = 1 + rng.uniform_int(n_outer_colors);
    objects.push_back({cell, outer, inner});
  }

  // Nearest-object distances per color, separately for outer and inner.
  const int n_colors = n_outer_colors;
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd outer_dist = Eigen::MatrixXd::Constant(ns, n_colors, inf);
  Eigen::MatrixXd inner_dist = Eigen::MatrixXd::Constant(ns, n_colors, inf);
  for (int s = 0; s < ns; ++s) {
    const double row = s / grid_size;
    const double col = s % grid_size;
    for (const Object& o : objects) {
      const double dr = row - o.cell / grid_size;
      const double dc = col - o.cell % grid_size;
      const double d = std::sqrt(dr * dr + dc * dc);
      outer_dist(s, o.outer - 1) = std::min(outer_dist(s, o.outer - 1), d);
      inner_dist(s, o.inner - 1) = std::min(inner_dist(s, o.inner - 1), d);
    }
  }

  // f(s) bit layout: for each color c, grid_size outer thresholds then
  // grid_size inner thresholds, d = 1..grid_size.
  const int dim = 2 * n_colors * grid_size;
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(ns, dim);
  for (int s = 0; s < ns; ++s) {
    for (int c = 0; c < n_colors; ++c) {
      const int base = 2 * c * grid_size;
      for (int d = 1; d <= grid_size; ++d) {
        features(s, base + d - 1) = outer_dist(s, c) <= d ? 1.0 : 0.0;
        features(s, base + grid_size + d - 1) = inner_dist(s, c) <= d ? 1.0 : 0.0;
      }
    }
  }

  std::vector<int> rules(ns);
  for (int s = 0; s < ns; ++s) {
    const bool near_outer1 = outer_dist(s, 0) <= 3.0;
    const bool near_outer2 = n_colors > 1 && outer_dist(s, 1) <= 2.0;
    rules[s] = near_outer1 ? (near_outer2 ? 1 : 2) : 3;
  }

  return BenchmarkEnv{EnvKind::MObjectWorld,
                      grid_size,
                      seed,
                      n_objects,
                      n_outer_colors,
                      TabularMdp(mworld_transitions(grid_size), kGridDiscount,
                                 uniform_start(ns)),
                      std::move(features),
                      rules,
                      mworld_rewards(rules)};
}

BenchmarkEnv make_binaryworld(std::uint64_t seed, int grid_size) {
  if (grid_size < 2) throw std::invalid_argument("binaryworld: grid_size >= 2");
  const int ns = grid_size * grid_size;

  Rng rng(seed);
  std::vector<int> color(ns);  // 1 or 2
  for (int s = 0; s < ns; ++s) color[s] = rng.bernoulli(0.5) ? 1 : 2;

  // 3x3 neighborhood block, row-major; off-grid cells count as color 2.
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(ns, 9);
  std::vector<int> rules(ns);
  for (int s = 0; s < ns; ++s) {
    const int row = s / grid_size;
    const int col = s % grid_size;
    int ones = 0;
    int bit = 0;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc, ++bit) {
        const int nr = row + dr;
        const int nc = col + dc;
        if (nr < 0 || nr >= grid_size || nc < 0 || nc >= grid_size) continue;
        if (color[nr * grid_size + nc] == 1) {
          features(s, bit) = 1.0;
          ++ones;
        }
      }
    }
    rules[s] = ones == 4 ? 1 : ones == 5 ? 2 : 3;
  }

  return BenchmarkEnv{EnvKind::MBinaryWorld,
                      grid_size,
                      seed,
                      0,
                      0,
                      TabularMdp(mworld_transitions(grid_size), kGridDiscount,
                                 uniform_start(ns)),
                      std::move(features),
                      rules,
                      mworld_rewards(rules)};
}

const Eigen::VectorXd& intention_reward(const BenchmarkEnv& env, int intention) {
  if (intention < 0 || intention >= env.n_intentions())
    throw std::out_of_range("intention_reward: intention out of range");
  return env.true_rewards[intention];
}

BenchmarkEnv transfer_env(const BenchmarkEnv& env, std::uint64_t seed) {
  switch (env.kind) {
    case EnvKind::GridWorld:
      return make_gridworld(seed);
    case EnvKind::MObjectWorld:
      return make_objectworld(seed, env.n_objects, env.n_outer_colors,
                              env.grid_size);
    case EnvKind::MBinaryWorld:
      return make_binaryworld(seed, env.grid_size);
  }
  throw std::logic_error("unknown EnvKind");
}

std::vector<Trajectory> sample_demonstrations(const BenchmarkEnv& env,
                                              int intention, int count,
                                              int length, std::uint64_t seed) {
  if (length < 1)
    throw std::invalid_argument("sample_demonstrations: length >= 1");
  const Eigen::VectorXd& reward = intention_reward(env, intention);
  const DeterministicPolicy expert =
      optimal_policy(env.mdp, reward, 1e-8).policy;

  Rng rng(seed);
  const Eigen::VectorXd& start = env.mdp.start_distribution();
  std::vector<Trajectory> demos;
  demos.reserve(count);
  Eigen::VectorXd row(env.mdp.n_states());
  for (int i = 0; i < count; ++i) {
    Trajectory traj;
    traj.true_intention = intention;
    int s = rng.categorical({start.data(), static_cast<std::size_t>(start.size())});
    for (int t = 0; t < length; ++t) {
      const int a = expert[s];
      traj.steps.emplace_back(s, a);
      row = env.mdp.transition(a).row(s);
      s = rng.categorical({row.data(), static_cast<std::size_t>(row.size())});
    }
    demos.push_back(std::move(traj));
  }
  return demos;
}

void save_env(const BenchmarkEnv& env, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_env: cannot open " + path);
  out << "miirl-env 1\n";
  out << "kind=" << to_string(env.kind) << " size=" << env.grid_size
      << " seed=" << env.layout_seed << " objects=" << env.n_objects
      << " colors=" << env.n_outer_colors << "\n";
  for (int s = 0; s < env.n_states(); ++s) {
    out << s << ' ' << (env.rule_labels.empty() ? 0 : env.rule_labels[s]);
    for (int f = 0; f < env.feature_dim(); ++f)
      out << ' ' << static_cast<int>(env.features(s, f));
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_env: write failed for " + path);
}

BenchmarkEnv load_env(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_env: cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "miirl-env" || version != "1")
    throw std::runtime_error("load_env: bad header in " + path);

  std::string kind_str;
  int size = 0, objects = 0, colors = 0;
  std::uint64_t seed = 0;
  std::string token;
  for (int i = 0; i < 5; ++i) {
    in >> token;
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("load_env: malformed header field " + token);
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "kind") kind_str = value;
    else if (key == "size") size = std::stoi(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "objects") objects = std::stoi(value);
    else if (key == "colors") colors = std::stoi(value);
    else throw std::runtime_error("load_env: unknown header key " + key);
  }

  BenchmarkEnv env = [&] {
    switch (env_kind_from_string(kind_str)) {
      case EnvKind::GridWorld: return make_gridworld(seed);
      case EnvKind::MObjectWorld:
        return make_objectworld(seed, objects, colors, size);
      case EnvKind::MBinaryWorld: return make_binaryworld(seed, size);
    }
    throw std::logic_error("unknown EnvKind");
  }();

  // The stored rows must match the regenerated layout bit for bit.
  for (int s = 0; s < env.n_states(); ++s) {
    int state = -1, rule = -1;
    if (!(in >> state >> rule) || state != s)
      throw std::runtime_error("load_env: truncated or misordered rows");
    const int expect_rule = env.rule_labels.empty() ? 0 : env.rule_labels[s];
    if (rule != expect_rule)
      throw std::runtime_error("load_env: rule mismatch, file does not match seed");
    for (int f = 0; f < env.feature_dim(); ++f) {
      int bit = -1;
      if (!(in >> bit))
        throw std::runtime_error("load_env: truncated feature row");
      if (bit != static_cast<int>(env.features(s, f)))
        throw std::runtime_error("load_env: feature mismatch, file does not match seed");
    }
  }
  return env;
}

void save_demonstrations(const std::vector<Trajectory>& demos,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_demonstrations: cannot open " + path);
  out << "miirl-demos 1\n" << demos.size() << "\n";
  for (const Trajectory& traj : demos) {
    out << (traj.true_intention ? *traj.true_intention : -1);
    for (const auto& [s, a] : traj.steps) out << ' ' << s << ' ' << a;
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_demonstrations: write failed");
}

std::vector<Trajectory> load_demonstrations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_demonstrations: cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "miirl-demos" || version != "1")
    throw std::runtime_error("load_demonstrations: bad header in " + path);
  std::size_t count = 0;
  in >> count;
  std::string line;
  std::getline(in, line);
  std::vector<Trajectory> demos;
  demos.reserve(count);
  while (demos.size() < count && std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Trajectory traj;
    int intention;
    row >> intention;
    if (intention >= 0) traj.true_intention = intention;
    int s, a;
    while (row >> s >> a) traj.steps.emplace_back(s, a);
    if (traj.steps.empty())
      throw std::runtime_error("load_demonstrations: empty trajectory");
    demos.push_back(std::move(traj));
  }
  if (demos.size() != count)
    throw std::runtime_error("load_demonstrations: truncated file");
  return demos;
}

}  // namespace miirl

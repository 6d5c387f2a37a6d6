#include "miirl/eval.hpp"

#include <cmath>
#include <cstdlib>
#include <future>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "miirl/outputs.hpp"

namespace miirl {

namespace {

/// Records and summaries live at the CSV precision (9 significant digits),
/// so writing and re-parsing them is an exact identity.
double csv_precision(double value) {
  if (std::isnan(value)) return value;
  return std::strtod(format_double(value).c_str(), nullptr);
}

/// Start-distribution-weighted value of a policy under a reward.
template <typename Policy>
double start_value(const TabularMdp& mdp, const Policy& policy,
                   const Eigen::VectorXd& reward, double tol) {
  return mdp.start_distribution().dot(policy_evaluation(mdp, policy, reward, tol));
}

/// Expert-side start values per intention, computed once per environment.
class TrueValueCache {
 public:
  TrueValueCache(const BenchmarkEnv& env, double tol) : env_(env), tol_(tol) {}

  double value(int intention) {
    auto it = values_.find(intention);
    if (it != values_.end()) return it->second;
    const Eigen::VectorXd& truth = intention_reward(env_, intention);
    const DeterministicPolicy expert = optimal_policy(env_.mdp, truth, tol_).policy;
    const double v = start_value(env_.mdp, expert, truth, tol_);
    return values_.emplace(intention, v).first->second;
  }

 private:
  const BenchmarkEnv& env_;
  double tol_;
  std::map<int, double> values_;
};

/// Average per-demo EVD of a trained net on one environment.
double average_evd(const BenchmarkEnv& env, const RewardNet& net,
                   const std::vector<int>& assignments,
                   const std::vector<Trajectory>& demos, double tol,
                   TrueValueCache& truth) {
  if (assignments.size() != demos.size())
    throw std::invalid_argument("average_evd: assignment count mismatch");
  const BaseCache cache = base_forward(net, env.features);
  std::map<int, DeterministicPolicy> learned_policies;
  std::map<std::pair<int, int>, double> pair_values;

  double total = 0.0;
  for (std::size_t m = 0; m < demos.size(); ++m) {
    if (!demos[m].true_intention)
      throw std::invalid_argument("average_evd: demo lacks a true intention");
    const int i = *demos[m].true_intention;
    const int k = assignments[m];
    auto pit = pair_values.find({k, i});
    if (pit == pair_values.end()) {
      auto lit = learned_policies.find(k);
      if (lit == learned_policies.end()) {
        const Eigen::VectorXd learned = head_forward(net, cache, k);
        lit = learned_policies
                  .emplace(k, optimal_policy(env.mdp, learned, tol).policy)
                  .first;
      }
      const double v =
          start_value(env.mdp, lit->second, intention_reward(env, i), tol);
      pit = pair_values.emplace(std::make_pair(k, i), v).first;
    }
    total += std::abs(truth.value(i) - pit->second);
  }
  return total / static_cast<double>(demos.size());
}

std::string point_label(double alpha) {
  std::ostringstream out;
  out << "alpha=" << alpha;
  return out.str();
}

struct RepeatOutcome {
  bool ok = false;
  std::string error;
  std::vector<RunRecord> records;
  double final_avg_evd = 0.0;
  double final_transfer_avg_evd = 0.0;
  int final_k = 0;
  std::vector<RewardMapImage> maps;
};

BenchmarkEnv make_env(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case EnvKind::GridWorld: return make_gridworld(seed);
    case EnvKind::MObjectWorld:
      return make_objectworld(seed, cfg.n_objects, cfg.n_outer_colors,
                              cfg.grid_size);
    case EnvKind::MBinaryWorld: return make_binaryworld(seed, cfg.grid_size);
  }
  throw std::logic_error("unknown EnvKind");
}

RepeatOutcome run_repeat(const ExperimentConfig& cfg, double alpha,
                         std::size_t point, int repeat) {
  RepeatOutcome outcome;
  const std::uint64_t repeat_seed =
      Rng::derive(cfg.seed, point * 1000003ULL + static_cast<std::uint64_t>(repeat));
  std::ostringstream id;
  id << to_string(cfg.train.algorithm) << "-" << point_label(alpha) << "-rep"
     << repeat;
  try {
    const BenchmarkEnv env = make_env(cfg, Rng::derive(repeat_seed, 1));
    const BenchmarkEnv transferred = transfer_env(env, Rng::derive(repeat_seed, 2));

    std::vector<Trajectory> demos;
    for (std::size_t i = 0; i < cfg.intentions.size(); ++i) {
      std::vector<Trajectory> part = sample_demonstrations(
          env, cfg.intentions[i], cfg.demos_per_intention, cfg.demo_length,
          Rng::derive(repeat_seed, 10 + i));
      demos.insert(demos.end(), part.begin(), part.end());
    }

    TrainConfig tc = cfg.train;
    if (!tc.fixed_k) tc.alpha = alpha;
    tc.seed = Rng::derive(repeat_seed, 3);
    const Evaluator evaluator =
        cfg.eval_every > 0
            ? make_evaluator(env, &transferred, demos, tc.vi_tolerance,
                             cfg.eval_every)
            : Evaluator{};

    const TrainResult result = train(env.features, env.mdp, demos, tc, evaluator);
    const EvalResult final =
        evaluate_run(env, transferred, result, demos, tc.vi_tolerance);

    outcome.records.reserve(result.history.size());
    for (const IterationRecord& rec : result.history)
      outcome.records.push_back(
          RunRecord{id.str(), repeat_seed, tc.algorithm, cfg.kind,
                    rec.iteration, csv_precision(rec.avg_evd),
                    csv_precision(rec.transfer_avg_evd), rec.k,
                    csv_precision(rec.wall_ms)});
    outcome.final_avg_evd = csv_precision(final.avg_evd);
    outcome.final_transfer_avg_evd = csv_precision(final.transfer_avg_evd);
    outcome.final_k = final.k_predicted;

    if (cfg.write_ppm && repeat == 0) {
      const BaseCache cache = base_forward(result.net, env.features);
      for (int k = 0; k < result.net.n_heads(); ++k) {
        std::ostringstream name;
        name << id.str() << "-head" << k << "-learned.ppm";
        outcome.maps.push_back(RewardMapImage{name.str(),
                                              head_forward(result.net, cache, k),
                                              env.grid_size, env.grid_size});
      }
      for (int i : cfg.intentions) {
        std::ostringstream name;
        name << id.str() << "-intention" << i << "-true.ppm";
        outcome.maps.push_back(RewardMapImage{
            name.str(), intention_reward(env, i), env.grid_size, env.grid_size});
      }
    }
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.error = id.str() + ": " + e.what();
  }
  return outcome;
}

double sample_mean(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

/// Standard error sigma / sqrt(n) with the n-1 sample variance; 0 for n < 2.
double standard_error(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double mean = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(n - 1)) /
         std::sqrt(static_cast<double>(n));
}

}  // namespace

double evd(const BenchmarkEnv& env, int true_intention,
           const Eigen::VectorXd& learned_reward, double vi_tolerance) {
  if (learned_reward.size() != env.n_states())
    throw std::invalid_argument("evd: learned reward length");
  const Eigen::VectorXd& truth = intention_reward(env, true_intention);
  const DeterministicPolicy expert =
      optimal_policy(env.mdp, truth, vi_tolerance).policy;
  const DeterministicPolicy learned =
      optimal_policy(env.mdp, learned_reward, vi_tolerance).policy;
  return std::abs(start_value(env.mdp, expert, truth, vi_tolerance) -
                  start_value(env.mdp, learned, truth, vi_tolerance));
}

EvalResult evaluate_run(const BenchmarkEnv& env, const BenchmarkEnv& transferred,
                        const TrainResult& result,
                        const std::vector<Trajectory>& demos,
                        double vi_tolerance) {
  const std::vector<int> assignments = map_assignments(result);
  TrueValueCache truth(env, vi_tolerance);
  TrueValueCache transfer_truth(transferred, vi_tolerance);
  EvalResult out;
  out.avg_evd =
      average_evd(env, result.net, assignments, demos, vi_tolerance, truth);
  out.transfer_avg_evd = average_evd(transferred, result.net, assignments,
                                     demos, vi_tolerance, transfer_truth);
  out.k_predicted = result.crp.K();
  return out;
}

Evaluator make_evaluator(const BenchmarkEnv& env,
                         const BenchmarkEnv* transferred,
                         const std::vector<Trajectory>& demos,
                         double vi_tolerance, int eval_every) {
  if (eval_every < 1)
    throw std::invalid_argument("make_evaluator: eval_every must be >= 1");
  struct State {
    TrueValueCache truth;
    std::unique_ptr<TrueValueCache> transfer_truth;
    int calls = 0;
  };
  auto state = std::make_shared<State>(State{{env, vi_tolerance}, nullptr, 0});
  if (transferred != nullptr)
    state->transfer_truth =
        std::make_unique<TrueValueCache>(*transferred, vi_tolerance);

  return [&env, transferred, &demos, vi_tolerance, eval_every,
          state](const RewardNet& net, const CrpState& crp) {
    EvalSnapshot snap;
    const int call = state->calls++;
    if (call % eval_every != 0) return snap;
    snap.avg_evd = average_evd(env, net, crp.assignments, demos, vi_tolerance,
                               state->truth);
    if (transferred != nullptr)
      snap.transfer_avg_evd =
          average_evd(*transferred, net, crp.assignments, demos, vi_tolerance,
                      *state->transfer_truth);
    return snap;
  };
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig cfg = *this;
  if (cfg.kind == EnvKind::GridWorld) {
    cfg.grid_size = 8;
  } else if (cfg.paper_scale) {
    cfg.grid_size = 32;
  }
  if (cfg.paper_scale) cfg.train.net_shape = NetShape{5, 256, cfg.train.net_shape.head_bias};
  if (cfg.demo_length == 0)
    cfg.demo_length = cfg.kind == EnvKind::GridWorld ? 40 : 8;
  if (cfg.repeats < 1)
    throw std::invalid_argument("ExperimentConfig: repeats must be >= 1");
  if (cfg.demos_per_intention < 1)
    throw std::invalid_argument("ExperimentConfig: demos_per_intention >= 1");
  if (cfg.intentions.empty())
    throw std::invalid_argument("ExperimentConfig: no intentions");
  const int max_intention = cfg.kind == EnvKind::GridWorld ? 2 : 5;
  for (int i : cfg.intentions)
    if (i < 0 || i > max_intention)
      throw std::invalid_argument("ExperimentConfig: intention out of range");
  if (cfg.jobs < 1) cfg.jobs = 1;
  return cfg;
}

std::string ExperimentConfig::to_key_values() const {
  std::ostringstream out;
  auto list = [](const auto& xs) {
    std::ostringstream s;
    for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? "," : "") << xs[i];
    return s.str();
  };
  out << "kind = " << to_string(kind) << "\n";
  out << "size = " << grid_size << "\n";
  out << "paper_scale = " << (paper_scale ? "true" : "false") << "\n";
  out << "objects = " << n_objects << "\n";
  out << "colors = " << n_outer_colors << "\n";
  out << "intentions = " << list(intentions) << "\n";
  out << "per_intention = " << demos_per_intention << "\n";
  out << "length = " << demo_length << "\n";
  out << "algorithm = " << to_string(train.algorithm) << "\n";
  out << "alpha = " << train.alpha << "\n";
  out << "k_init = " << train.k_init << "\n";
  if (train.fixed_k) out << "fixed_k = " << *train.fixed_k << "\n";
  out << "iters = " << train.max_iter << "\n";
  out << "lr = " << train.lr << "\n";
  out << "vi_tolerance = " << train.vi_tolerance << "\n";
  out << "reward_features = " << train.reward_feature_dim << "\n";
  out << "hidden_layers = " << train.net_shape.hidden_layers << "\n";
  out << "hidden_width = " << train.net_shape.hidden_width << "\n";
  out << "head_bias = " << (train.net_shape.head_bias ? "true" : "false") << "\n";
  out << "timing = " << (train.record_timing ? "true" : "false") << "\n";
  out << "repeats = " << repeats << "\n";
  out << "seed = " << seed << "\n";
  if (!alphas.empty()) out << "alphas = " << list(alphas) << "\n";
  out << "jobs = " << jobs << "\n";
  out << "eval_every = " << eval_every << "\n";
  out << "ppm = " << (write_ppm ? "true" : "false") << "\n";
  return out.str();
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  const ExperimentConfig cfg = config.resolved();
  const std::vector<double> points =
      cfg.alphas.empty() ? std::vector<double>{cfg.train.alpha} : cfg.alphas;

  std::vector<std::vector<RepeatOutcome>> outcomes(
      points.size(), std::vector<RepeatOutcome>(cfg.repeats));

  // Repeats are independent; run them in up-to-`jobs` batches. Records are
  // assembled in (point, repeat, iteration) order regardless of schedule.
  std::vector<std::pair<std::size_t, int>> tasks;
  for (std::size_t p = 0; p < points.size(); ++p)
    for (int r = 0; r < cfg.repeats; ++r) tasks.emplace_back(p, r);

  if (cfg.jobs <= 1) {
    for (const auto& [p, r] : tasks)
      outcomes[p][r] = run_repeat(cfg, points[p], p, r);
  } else {
    std::size_t next = 0;
    while (next < tasks.size()) {
      std::vector<std::future<void>> batch;
      for (int j = 0; j < cfg.jobs && next < tasks.size(); ++j, ++next) {
        const auto [p, r] = tasks[next];
        batch.push_back(std::async(std::launch::async, [&, p, r] {
          outcomes[p][r] = run_repeat(cfg, points[p], p, r);
        }));
      }
      for (std::future<void>& f : batch) f.get();
    }
  }

  ExperimentOutput out;
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<double> finals, transfer_finals, ks;
    int failures = 0;
    for (int r = 0; r < cfg.repeats; ++r) {
      RepeatOutcome& outcome = outcomes[p][r];
      if (!outcome.ok) {
        ++failures;
        out.errors.push_back(outcome.error);
        continue;
      }
      out.records.insert(out.records.end(), outcome.records.begin(),
                         outcome.records.end());
      out.maps.insert(out.maps.end(),
                      std::make_move_iterator(outcome.maps.begin()),
                      std::make_move_iterator(outcome.maps.end()));
      finals.push_back(outcome.final_avg_evd);
      transfer_finals.push_back(outcome.final_transfer_avg_evd);
      ks.push_back(static_cast<double>(outcome.final_k));
    }
    SummaryRow row;
    row.config = point_label(points[p]);
    row.algorithm = cfg.train.algorithm;
    row.env = cfg.kind;
    row.alpha = points[p];
    row.repeats = static_cast<int>(finals.size());
    row.failures = failures;
    row.degenerate = finals.size() == 1;
    if (!finals.empty()) {
      row.mean_avg_evd = sample_mean(finals);
      row.se_avg_evd = standard_error(finals);
      row.mean_transfer_avg_evd = sample_mean(transfer_finals);
      row.se_transfer_avg_evd = standard_error(transfer_finals);
      row.mean_k_predicted = sample_mean(ks);
      row.se_k_predicted = standard_error(ks);
    }
    out.summaries.push_back(std::move(row));
  }
  return out;
}

}  // namespace miirl

#include "miirl/trainers.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "miirl/maxent.hpp"

namespace miirl {

namespace {

using Clock = std::chrono::steady_clock;

struct HeadRuntime {
  /// Policy snapshot from the start of the outer iteration (or from the
  /// spawn solve); the E-step likelihoods use this, per the algorithms.
  StochasticPolicy estep_policy;
  /// Policy tracking the current parameters; lazily re-solved after M-step
  /// updates. The M-step expectation E[mu] is computed under this one.
  StochasticPolicy fresh_policy;
  ValueVector values;
  std::map<int, Eigen::VectorXd> svf_by_horizon;
  bool dirty = false;  // parameters changed since fresh_policy was solved
};

/// Shared machinery of both trainers: the reward net, the partition state,
/// and one solved soft policy per head (re-solved each outer iteration,
/// reused across the trajectory sweep as the algorithms prescribe).
class Trainer {
 public:
  Trainer(const Eigen::MatrixXd& features, const TabularMdp& mdp,
          const std::vector<Trajectory>& demos, const TrainConfig& config)
      : features_(features),
        mdp_(mdp),
        demos_(demos),
        cfg_(config.resolved(static_cast<int>(demos.size()))),
        rng_(cfg_.seed),
        net_(cfg_.init_net ? *cfg_.init_net
                           : net_init(static_cast<int>(features.cols()),
                                      cfg_.reward_feature_dim,
                                      cfg_.k_init, rng_.fork_seed(),
                                      cfg_.net_shape)) {
    if (features_.rows() != mdp_.n_states())
      throw std::invalid_argument("train: feature rows != n_states");
    if (cfg_.init_net) {
      if (net_.n_heads() != cfg_.k_init)
        throw std::invalid_argument("train: init_net head count != k_init");
      if (net_.feature_dim != features_.cols())
        throw std::invalid_argument("train: init_net feature dimension");
      rng_.fork_seed();  // keep the stream aligned with the fresh-init path
    }
    const bool allow_empty = cfg_.fixed_k.has_value();
    if (cfg_.init_assignments) {
      crp_.alpha = cfg_.alpha;
      crp_.allow_empty = allow_empty;
      crp_.assignments = *cfg_.init_assignments;
      crp_.counts.assign(cfg_.k_init, 0);
      for (int a : crp_.assignments) {
        if (a < 0 || a >= cfg_.k_init)
          throw std::invalid_argument("train: init assignment out of range");
        ++crp_.counts[a];
      }
      crp_.validate();
    } else {
      crp_ = CrpState::round_robin(static_cast<int>(demos.size()), cfg_.k_init,
                                   cfg_.alpha, allow_empty);
    }
    runtimes_.resize(cfg_.k_init);
    candidate_warm_ = ValueVector::Zero(mdp_.n_states());
  }

  TrainResult run(const Evaluator& evaluator, bool sem) {
    const auto t0 = Clock::now();
    TrainResult result;
    for (int iter = 1; iter <= cfg_.max_iter; ++iter) {
      solve_all_policies();
      for (int m = 0; m < static_cast<int>(demos_.size()); ++m) {
        if (sem)
          visit_sem(iter, m);
        else
          visit_mcem(iter, m);
        if (net_.n_heads() != crp_.K())
          throw std::logic_error("train: head count diverged from K");
      }
      IterationRecord rec;
      rec.iteration = iter;
      rec.k = crp_.K();
      rec.counts = crp_.counts;
      if (cfg_.record_timing)
        rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      if (evaluator) {
        const EvalSnapshot snap = evaluator(net_, crp_);
        rec.avg_evd = snap.avg_evd;
        rec.transfer_avg_evd = snap.transfer_avg_evd;
      }
      result.history.push_back(std::move(rec));
    }
    result.net = std::move(net_);
    result.crp = std::move(crp_);
    return result;
  }

 private:
  void solve_all_policies() {
    const BaseCache cache = base_forward(net_, features_);
    for (int k = 0; k < net_.n_heads(); ++k) {
      solve_runtime(runtimes_[k], head_forward(net_, cache, k));
      runtimes_[k].estep_policy = runtimes_[k].fresh_policy;
    }
  }

  void solve_runtime(HeadRuntime& rt, const Eigen::VectorXd& reward) {
    SoftViOptions opts;
    opts.tolerance = cfg_.vi_tolerance;
    if (rt.values.size() == mdp_.n_states()) opts.warm_start = &rt.values;
    SoftViResult res = soft_value_iteration(mdp_, reward, opts);
    rt.fresh_policy = std::move(res.policy);
    rt.values = std::move(res.values);
    rt.svf_by_horizon.clear();
    rt.dirty = false;
  }

  HeadRuntime solve_candidate(int head) {
    HeadRuntime rt;
    rt.values = candidate_warm_;
    solve_runtime(rt, net_forward(net_, features_, head));
    rt.estep_policy = rt.fresh_policy;
    candidate_warm_ = rt.values;
    return rt;
  }

  /// E[mu] under the intention's policy at the current parameters; the
  /// policy is re-solved (warm) if an M-step touched it since the last use.
  const Eigen::VectorXd& fresh_svf(int head, int horizon) {
    HeadRuntime& rt = runtimes_[head];
    if (rt.dirty) {
      StochasticPolicy estep_keep = std::move(rt.estep_policy);
      solve_runtime(rt, net_forward(net_, features_, head));
      rt.estep_policy = std::move(estep_keep);
    }
    auto it = rt.svf_by_horizon.find(horizon);
    if (it == rt.svf_by_horizon.end())
      it = rt.svf_by_horizon
               .emplace(horizon, expected_svf(mdp_, rt.fresh_policy, horizon))
               .first;
    return it->second;
  }

  void mark_all_dirty() {
    // Every Adam step moves the shared base, so every head's policy ages.
    for (HeadRuntime& rt : runtimes_) rt.dirty = true;
  }

  /// Align net heads and runtimes with the partition after a reassignment.
  /// Pre-prune intention k maps to net head k; a newborn intention maps to
  /// the candidate head (spawned last, same index).
  void sync_heads(const AssignmentEvent& ev, int candidate_head,
                  HeadRuntime* candidate_rt) {
    const bool candidate_kept = ev.birth && candidate_head >= 0;
    const bool removals = !ev.removed.empty();
    if (!removals && candidate_head >= 0 && !candidate_kept) {
      // Only the unselected candidate to drop (always the last head).
      std::vector<int> occupied(static_cast<std::size_t>(net_.n_heads() - 1));
      for (std::size_t k = 0; k < occupied.size(); ++k)
        occupied[k] = static_cast<int>(k);
      prune_heads(net_, occupied);
      return;
    }
    if (!removals && !candidate_kept) return;  // nothing to do
    if (!removals && candidate_kept) {
      runtimes_.push_back(std::move(*candidate_rt));
      return;  // candidate head already in place as the last head
    }

    std::vector<int> occupied;
    for (std::size_t k = 0; k < ev.remap.size(); ++k) {
      if (ev.remap[k] < 0) continue;
      // Newborn intention index equals the candidate head index.
      occupied.push_back(static_cast<int>(k));
    }
    prune_heads(net_, occupied);

    std::vector<HeadRuntime> next(occupied.size());
    for (std::size_t k = 0; k < ev.remap.size(); ++k) {
      if (ev.remap[k] < 0) continue;
      if (candidate_kept && static_cast<int>(k) == candidate_head)
        next[ev.remap[k]] = std::move(*candidate_rt);
      else
        next[ev.remap[k]] = std::move(runtimes_[k]);
    }
    runtimes_ = std::move(next);
  }

  void visit_sem(int iter, int m) {
    const Trajectory& demo = demos_[m];
    const int horizon = demo.length();

    const bool use_candidate = crp_.alpha > 0.0;
    int candidate_head = -1;
    HeadRuntime candidate_rt;
    if (use_candidate) {
      candidate_head = spawn_head(net_, rng_.fork_seed());
      candidate_rt = solve_candidate(candidate_head);
    }

    const CrpPrior prior = crp_prior(crp_, m);
    const std::size_t n_kept = prior.kept.size();
    std::vector<double> logliks(n_kept + 1);
    for (std::size_t j = 0; j < n_kept; ++j)
      logliks[j] =
          trajectory_loglik(runtimes_[prior.kept[j]].estep_policy, demo);
    logliks[n_kept] =
        use_candidate ? trajectory_loglik(candidate_rt.estep_policy, demo) : 0.0;

    const Eigen::VectorXd gamma =
        estep_responsibilities(prior.kept_counts, crp_.alpha, logliks);
    const int idx = sstep_sample(gamma, rng_);
    const bool chose_new = idx == static_cast<int>(n_kept);

    const AssignmentEvent ev = apply_assignment(
        crp_, m, chose_new ? kNewIntention : prior.kept[idx]);
    sync_heads(ev, candidate_head, &candidate_rt);

    // M-step over all posterior components; weights of components whose head
    // survived feed the Adam step. Components with (numerically) no
    // responsibility contribute nothing and skip their E[mu] solve.
    const Eigen::VectorXd mu = trajectory_svf(demo, mdp_.n_states());
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(mdp_.n_states());
    constexpr double kGammaFloor = 1e-12;
    std::vector<Eigen::VectorXd> expected;
    expected.reserve(n_kept + 1);
    for (std::size_t j = 0; j < n_kept; ++j) {
      const int head_now = ev.remap[prior.kept[j]];
      expected.push_back(gamma[static_cast<int>(j)] >= kGammaFloor
                             ? fresh_svf(head_now, horizon)
                             : zero);
    }
    if (use_candidate && gamma[static_cast<int>(n_kept)] >= kGammaFloor) {
      if (ev.birth)
        expected.push_back(fresh_svf(ev.intention, horizon));
      else
        expected.push_back(expected_svf(mdp_, candidate_rt.fresh_policy, horizon));
    } else {
      expected.push_back(zero);
    }

    const std::vector<Eigen::VectorXd> weights =
        mstep_state_weights(gamma, mu, expected);
    std::vector<std::pair<int, Eigen::VectorXd>> weighted;
    weighted.reserve(weights.size());
    for (std::size_t j = 0; j < n_kept; ++j)
      weighted.emplace_back(ev.remap[prior.kept[j]], weights[j]);
    if (use_candidate && ev.birth)
      weighted.emplace_back(ev.intention, weights.back());

    adam_step(net_, net_backward_batch(net_, features_, weighted), cfg_.lr);
    mark_all_dirty();

    if (cfg_.log)
      *cfg_.log << "iter=" << iter << " m=" << m << " K=" << crp_.K()
                << " event=sstep chosen=" << ev.intention
                << " birth=" << (ev.birth ? 1 : 0)
                << " ll=" << logliks[idx] << "\n";
  }

  void visit_mcem(int iter, int m) {
    const Trajectory& demo = demos_[m];
    const int horizon = demo.length();

    const CrpPrior prior = crp_prior(crp_, m);
    const int j = rng_.categorical(
        {prior.probs.data(), static_cast<std::size_t>(prior.probs.size())});
    const bool propose_new = j == static_cast<int>(prior.kept.size());
    const int current = crp_.assignments[m];
    const double current_ll =
        trajectory_loglik(runtimes_[current].estep_policy, demo);

    int candidate_head = -1;
    HeadRuntime candidate_rt;
    double proposed_ll;
    int proposal = kNewIntention;
    if (propose_new) {
      candidate_head = spawn_head(net_, rng_.fork_seed());
      candidate_rt = solve_candidate(candidate_head);
      proposed_ll = trajectory_loglik(candidate_rt.estep_policy, demo);
    } else {
      proposal = prior.kept[j];
      proposed_ll =
          proposal == current
              ? current_ll
              : trajectory_loglik(runtimes_[proposal].estep_policy, demo);
    }

    const bool accepted =
        proposal == current || mh_accept(current_ll, proposed_ll, rng_);
    const AssignmentEvent ev =
        apply_assignment(crp_, m, accepted ? proposal : current);
    sync_heads(ev, candidate_head, &candidate_rt);

    // Hard one-hot responsibility on the resulting assignment.
    const Eigen::VectorXd mu = trajectory_svf(demo, mdp_.n_states());
    Eigen::VectorXd gamma(1);
    gamma << 1.0;
    const std::vector<Eigen::VectorXd> weights = mstep_state_weights(
        gamma, mu, {fresh_svf(ev.intention, horizon)});
    adam_step(net_,
              net_backward_batch(net_, features_, {{ev.intention, weights[0]}}),
              cfg_.lr);
    mark_all_dirty();

    if (cfg_.log)
      *cfg_.log << "iter=" << iter << " m=" << m << " K=" << crp_.K()
                << " event=mh proposal="
                << (propose_new ? std::string("new") : std::to_string(proposal))
                << " accepted=" << (accepted ? 1 : 0) << " ll=" << proposed_ll
                << "\n";
  }

  const Eigen::MatrixXd& features_;
  const TabularMdp& mdp_;
  const std::vector<Trajectory>& demos_;
  TrainConfig cfg_;
  Rng rng_;
  RewardNet net_;
  CrpState crp_;
  std::vector<HeadRuntime> runtimes_;
  ValueVector candidate_warm_;
};

}  // namespace

std::string to_string(Algorithm algorithm) {
  return algorithm == Algorithm::Sem ? "sem" : "mcem";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "sem") return Algorithm::Sem;
  if (name == "mcem") return Algorithm::Mcem;
  throw std::invalid_argument("unknown algorithm: " + name);
}

TrainConfig TrainConfig::resolved(int n_demos) const {
  TrainConfig cfg = *this;
  if (cfg.fixed_k) {
    if (*cfg.fixed_k < 1)
      throw std::invalid_argument("TrainConfig: fixed_k must be >= 1");
    cfg.alpha = 0.0;
    cfg.k_init = *cfg.fixed_k;
  }
  if (n_demos < 1) throw std::invalid_argument("TrainConfig: no demonstrations");
  if (cfg.alpha < 0.0)
    throw std::invalid_argument("TrainConfig: alpha must be >= 0");
  if (cfg.k_init < 1 || cfg.k_init > n_demos)
    throw std::invalid_argument("TrainConfig: k_init must be in [1, M]");
  if (cfg.max_iter < 0)
    throw std::invalid_argument("TrainConfig: max_iter must be >= 0");
  if (cfg.lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (cfg.vi_tolerance <= 0.0)
    throw std::invalid_argument("TrainConfig: vi_tolerance must be > 0");
  if (cfg.reward_feature_dim < 1)
    throw std::invalid_argument("TrainConfig: reward_feature_dim must be >= 1");
  if (cfg.init_assignments &&
      static_cast<int>(cfg.init_assignments->size()) != n_demos)
    throw std::invalid_argument("TrainConfig: init_assignments size");
  return cfg;
}

TrainResult train_sem(const Eigen::MatrixXd& features, const TabularMdp& mdp,
                      const std::vector<Trajectory>& demos,
                      const TrainConfig& config, const Evaluator& evaluator) {
  Trainer trainer(features, mdp, demos, config);
  return trainer.run(evaluator, /*sem=*/true);
}

TrainResult train_mcem(const Eigen::MatrixXd& features, const TabularMdp& mdp,
                       const std::vector<Trajectory>& demos,
                       const TrainConfig& config, const Evaluator& evaluator) {
  Trainer trainer(features, mdp, demos, config);
  return trainer.run(evaluator, /*sem=*/false);
}

TrainResult train(const Eigen::MatrixXd& features, const TabularMdp& mdp,
                  const std::vector<Trajectory>& demos,
                  const TrainConfig& config, const Evaluator& evaluator) {
  return config.algorithm == Algorithm::Sem
             ? train_sem(features, mdp, demos, config, evaluator)
             : train_mcem(features, mdp, demos, config, evaluator);
}

std::vector<int> map_assignments(const TrainResult& result) {
  return result.crp.assignments;
}

}  // namespace miirl

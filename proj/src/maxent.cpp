#include "miirl/maxent.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace miirl {

Eigen::VectorXd trajectory_svf(const Trajectory& traj, int n_states) {
  Eigen::VectorXd visits = Eigen::VectorXd::Zero(n_states);
  for (const auto& [s, a] : traj.steps) {
    if (s < 0 || s >= n_states)
      throw std::out_of_range("trajectory_svf: state index out of range");
    visits[s] += 1.0;
  }
  return visits;
}

Eigen::VectorXd expected_svf(const TabularMdp& mdp,
                             const StochasticPolicy& policy, int horizon) {
  if (horizon < 1) throw std::invalid_argument("expected_svf: horizon >= 1");
  if (policy.n_states() != mdp.n_states() ||
      policy.n_actions() != mdp.n_actions())
    throw std::invalid_argument("expected_svf: policy shape");

  Eigen::VectorXd d = mdp.start_distribution();
  Eigen::VectorXd visits = Eigen::VectorXd::Zero(mdp.n_states());
  Eigen::VectorXd d_next(mdp.n_states());
  for (int t = 0; t < horizon; ++t) {
    visits += d;
    if (t + 1 == horizon) break;
    d_next.setZero();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const Eigen::VectorXd weighted = d.array() * policy.probs.col(a).array();
      d_next += mdp.sparse_transition(a).transpose() * weighted;
    }
    d.swap(d_next);
  }
  return visits;
}

double trajectory_loglik(const StochasticPolicy& policy,
                         const Trajectory& traj) {
  const bool exact = policy.has_log_probs();
  double loglik = 0.0;
  for (const auto& [s, a] : traj.steps) {
    if (s < 0 || s >= policy.n_states() || a < 0 || a >= policy.n_actions())
      throw std::out_of_range("trajectory_loglik: step index out of range");
    if (exact) {
      loglik += policy.log_probs(s, a);
    } else {
      const double p = policy.probs(s, a);
      if (p <= 0.0) return -std::numeric_limits<double>::infinity();
      loglik += std::log(p);
    }
  }
  return loglik;
}

std::vector<Eigen::VectorXd> mstep_state_weights(
    const Eigen::VectorXd& gamma, const Eigen::VectorXd& traj_svf,
    const std::vector<Eigen::VectorXd>& expected_svfs) {
  if (static_cast<std::size_t>(gamma.size()) != expected_svfs.size())
    throw std::invalid_argument("mstep_state_weights: gamma / svf count mismatch");
  if (std::abs(gamma.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("mstep_state_weights: gamma must sum to 1");

  std::vector<Eigen::VectorXd> weights;
  weights.reserve(expected_svfs.size());
  for (int k = 0; k < gamma.size(); ++k) {
    if (expected_svfs[k].size() != traj_svf.size())
      throw std::invalid_argument("mstep_state_weights: svf length mismatch");
    weights.push_back(gamma[k] * (traj_svf - expected_svfs[k]));
  }
  return weights;
}

}  // namespace miirl

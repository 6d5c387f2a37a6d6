#include "miirl/mdp.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace miirl {

namespace {

constexpr double kRowSumTol = 1e-9;

/// Row-wise log-sum-exp with max subtraction. q is (S x A).
void logsumexp_rows(const Eigen::MatrixXd& q, Eigen::VectorXd& out) {
  const Eigen::VectorXd row_max = q.rowwise().maxCoeff();
  out = row_max.array() +
        (q.colwise() - row_max).array().exp().rowwise().sum().log();
}

[[noreturn]] void throw_divergence(const char* what, int cap, double residual) {
  std::ostringstream msg;
  msg << what << " did not converge after " << cap
      << " iterations (last residual " << residual << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace

StochasticPolicy StochasticPolicy::from_deterministic(
    const DeterministicPolicy& actions, int n_actions) {
  StochasticPolicy policy;
  policy.probs = Eigen::MatrixXd::Zero(static_cast<int>(actions.size()),
                                       n_actions);
  policy.log_probs = Eigen::MatrixXd::Constant(
      static_cast<int>(actions.size()), n_actions,
      -std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions)
      throw std::invalid_argument("from_deterministic: action out of range");
    policy.probs(static_cast<int>(s), actions[s]) = 1.0;
    policy.log_probs(static_cast<int>(s), actions[s]) = 0.0;
  }
  return policy;
}

TabularMdp::TabularMdp(std::vector<Eigen::MatrixXd> transitions,
                       double discount, Eigen::VectorXd start_distribution)
    : discount_(discount),
      start_(std::move(start_distribution)),
      dense_(std::move(transitions)) {
  if (dense_.empty()) throw std::invalid_argument("TabularMdp: no actions");
  n_actions_ = static_cast<int>(dense_.size());
  n_states_ = static_cast<int>(dense_[0].rows());
  if (n_states_ <= 0) throw std::invalid_argument("TabularMdp: no states");
  if (discount_ < 0.0 || discount_ >= 1.0)
    throw std::invalid_argument("TabularMdp: discount must be in [0, 1)");
  if (start_.size() != n_states_)
    throw std::invalid_argument("TabularMdp: start distribution size");
  if (std::abs(start_.sum() - 1.0) > kRowSumTol || start_.minCoeff() < 0.0)
    throw std::invalid_argument("TabularMdp: start distribution not a pmf");

  sparse_.reserve(dense_.size());
  for (const Eigen::MatrixXd& p : dense_) {
    if (p.rows() != n_states_ || p.cols() != n_states_)
      throw std::invalid_argument("TabularMdp: transition matrix shape");
    for (int s = 0; s < n_states_; ++s) {
      if (p.row(s).minCoeff() < 0.0 || p.row(s).maxCoeff() > 1.0 + kRowSumTol)
        throw std::invalid_argument("TabularMdp: probability out of [0, 1]");
      if (std::abs(p.row(s).sum() - 1.0) > kRowSumTol)
        throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
    }
    sparse_.emplace_back(p.sparseView());
  }
}

SoftViResult soft_value_iteration(const TabularMdp& mdp,
                                  const Eigen::VectorXd& reward,
                                  const SoftViOptions& opts) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  if (reward.size() != ns)
    throw std::invalid_argument("soft_value_iteration: reward size");
  if (opts.tolerance <= 0.0)
    throw std::invalid_argument("soft_value_iteration: tolerance must be > 0");

  Eigen::VectorXd v = opts.warm_start != nullptr ? *opts.warm_start
                                                 : Eigen::VectorXd::Zero(ns);
  if (v.size() != ns)
    throw std::invalid_argument("soft_value_iteration: warm start size");

  Eigen::MatrixXd q(ns, na);
  Eigen::VectorXd v_next(ns);
  double residual = 0.0;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    for (int a = 0; a < na; ++a)
      q.col(a) = reward + mdp.discount() * (mdp.sparse_transition(a) * v);
    logsumexp_rows(q, v_next);
    residual = (v_next - v).lpNorm<Eigen::Infinity>();
    v.swap(v_next);
    if (residual <= opts.tolerance) break;
  }
  if (iter == opts.max_iterations)
    throw_divergence("soft value iteration", opts.max_iterations, residual);

  // One more backup from the converged V so that rows normalize exactly.
  for (int a = 0; a < na; ++a)
    q.col(a) = reward + mdp.discount() * (mdp.sparse_transition(a) * v);
  logsumexp_rows(q, v_next);

  SoftViResult result;
  result.values = v_next;
  result.policy.log_probs = q.colwise() - v_next;
  result.policy.probs = result.policy.log_probs.array().exp();
  result.iterations = iter + 1;
  return result;
}

std::vector<StochasticPolicy> soft_value_iteration_finite(
    const TabularMdp& mdp, const Eigen::VectorXd& reward, int horizon) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  if (reward.size() != ns)
    throw std::invalid_argument("soft_value_iteration_finite: reward size");
  if (horizon < 1)
    throw std::invalid_argument("soft_value_iteration_finite: horizon >= 1");

  std::vector<StochasticPolicy> policies(horizon);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(ns);
  Eigen::MatrixXd q(ns, na);
  Eigen::VectorXd v_new(ns);
  for (int t = horizon - 1; t >= 0; --t) {
    for (int a = 0; a < na; ++a)
      q.col(a) = reward + mdp.sparse_transition(a) * v;
    logsumexp_rows(q, v_new);
    policies[t].log_probs = q.colwise() - v_new;
    policies[t].probs = policies[t].log_probs.array().exp();
    v = v_new;
  }
  return policies;
}

OptimalPolicyResult optimal_policy(const TabularMdp& mdp,
                                   const Eigen::VectorXd& reward,
                                   double tolerance, int max_iterations,
                                   const ValueVector* warm_start) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  if (reward.size() != ns)
    throw std::invalid_argument("optimal_policy: reward size");
  if (tolerance <= 0.0)
    throw std::invalid_argument("optimal_policy: tolerance must be > 0");

  Eigen::VectorXd v =
      warm_start != nullptr ? *warm_start : Eigen::VectorXd::Zero(ns);
  if (v.size() != ns)
    throw std::invalid_argument("optimal_policy: warm start size");

  Eigen::MatrixXd q(ns, na);
  double residual = 0.0;
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    for (int a = 0; a < na; ++a)
      q.col(a) = reward + mdp.discount() * (mdp.sparse_transition(a) * v);
    Eigen::VectorXd v_next = q.rowwise().maxCoeff();
    residual = (v_next - v).lpNorm<Eigen::Infinity>();
    v.swap(v_next);
    if (residual <= tolerance) break;
  }
  if (iter == max_iterations)
    throw_divergence("value iteration", max_iterations, residual);

  OptimalPolicyResult result;
  result.values = v;
  result.policy.resize(ns);
  result.iterations = iter + 1;
  for (int a = 0; a < na; ++a)
    q.col(a) = reward + mdp.discount() * (mdp.sparse_transition(a) * v);
  for (int s = 0; s < ns; ++s) {
    int best = 0;  // ties -> lowest action index
    for (int a = 1; a < na; ++a)
      if (q(s, a) > q(s, best)) best = a;
    result.policy[s] = best;
  }
  return result;
}

ValueVector policy_evaluation(const TabularMdp& mdp,
                              const StochasticPolicy& policy,
                              const Eigen::VectorXd& reward, double tolerance,
                              int max_iterations) {
  const int ns = mdp.n_states();
  const int na = mdp.n_actions();
  if (policy.n_states() != ns || policy.n_actions() != na)
    throw std::invalid_argument("policy_evaluation: policy shape");
  if (reward.size() != ns)
    throw std::invalid_argument("policy_evaluation: reward size");
  if (tolerance <= 0.0)
    throw std::invalid_argument("policy_evaluation: tolerance must be > 0");

  Eigen::VectorXd v = Eigen::VectorXd::Zero(ns);
  Eigen::VectorXd v_next(ns);
  double residual = 0.0;
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    v_next = reward;
    for (int a = 0; a < na; ++a)
      v_next.array() += policy.probs.col(a).array() *
                        (mdp.discount() * (mdp.sparse_transition(a) * v)).array();
    residual = (v_next - v).lpNorm<Eigen::Infinity>();
    v.swap(v_next);
    if (residual <= tolerance) break;
  }
  if (iter == max_iterations)
    throw_divergence("policy evaluation", max_iterations, residual);
  return v;
}

ValueVector policy_evaluation(const TabularMdp& mdp,
                              const DeterministicPolicy& policy,
                              const Eigen::VectorXd& reward, double tolerance,
                              int max_iterations) {
  if (static_cast<int>(policy.size()) != mdp.n_states())
    throw std::invalid_argument("policy_evaluation: policy size");
  return policy_evaluation(
      mdp, StochasticPolicy::from_deterministic(policy, mdp.n_actions()),
      reward, tolerance, max_iterations);
}

}  // namespace miirl

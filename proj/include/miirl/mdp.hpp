#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <vector>

namespace miirl {

using ValueVector = Eigen::VectorXd;
using DeterministicPolicy = std::vector<int>;

/// Per-state action distribution, probs(s, a) = pi(a | s).
/// Every row sums to 1; for soft policies this row normalization is what
/// realizes the trajectory-level partition constant. Solvers also populate
/// log_probs so likelihood computations stay exact where probs underflows.
struct StochasticPolicy {
  Eigen::MatrixXd probs;
  Eigen::MatrixXd log_probs;

  int n_states() const { return static_cast<int>(probs.rows()); }
  int n_actions() const { return static_cast<int>(probs.cols()); }
  bool has_log_probs() const {
    return log_probs.rows() == probs.rows() && log_probs.cols() == probs.cols();
  }

  static StochasticPolicy from_deterministic(const DeterministicPolicy& actions,
                                             int n_actions);
};

/// Finite MDP with dense transition tensor and a sparse per-action view used
/// by the solvers (grid transition rows have at most a handful of nonzeros).
class TabularMdp {
 public:
  /// transitions[a](s, s') = P(s' | s, a). Rows must sum to 1 within 1e-9.
  TabularMdp(std::vector<Eigen::MatrixXd> transitions, double discount,
             Eigen::VectorXd start_distribution);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double discount() const { return discount_; }
  const Eigen::VectorXd& start_distribution() const { return start_; }
  const std::vector<Eigen::MatrixXd>& transitions() const { return dense_; }
  const Eigen::MatrixXd& transition(int action) const { return dense_[action]; }

  /// Sparse row-major copy of transition(a), built once at construction.
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& sparse_transition(
      int action) const {
    return sparse_[action];
  }

 private:
  int n_states_ = 0;
  int n_actions_ = 0;
  double discount_ = 0.0;
  Eigen::VectorXd start_;
  std::vector<Eigen::MatrixXd> dense_;
  std::vector<Eigen::SparseMatrix<double, Eigen::RowMajor>> sparse_;
};

struct SoftViOptions {
  double tolerance = 1e-4;
  int max_iterations = 10'000;
  /// Optional warm start for the value recursion (size n_states).
  const ValueVector* warm_start = nullptr;
};

struct SoftViResult {
  StochasticPolicy policy;
  ValueVector values;  // converged soft (log-partition) values
  int iterations = 0;
};

/// Stationary maximum-entropy policy for a per-state reward:
///   Q(s,a) = r(s) + discount * sum_s' P(s'|s,a) V(s')
///   V(s)   = log sum_a exp Q(s,a)          (max-subtracted)
///   pi(a|s) = exp(Q(s,a) - V(s))
/// Iterates V to the max-norm tolerance; throws on hitting the iteration cap
/// with the last residual in the message.
SoftViResult soft_value_iteration(const TabularMdp& mdp,
                                  const Eigen::VectorXd& reward,
                                  const SoftViOptions& opts = {});

/// Finite-horizon, undiscounted variant: time-indexed policies from the
/// backward recursion with V_T = 0. On deterministic-transition MDPs the
/// product of the returned policy factors along a trajectory equals
/// exp(sum of state rewards) / Z, which is what the enumeration tests check.
std::vector<StochasticPolicy> soft_value_iteration_finite(
    const TabularMdp& mdp, const Eigen::VectorXd& reward, int horizon);

struct OptimalPolicyResult {
  DeterministicPolicy policy;
  ValueVector values;
  int iterations = 0;
};

/// Standard value iteration; greedy policy under the converged V*, argmax
/// ties broken by the lowest action index.
OptimalPolicyResult optimal_policy(const TabularMdp& mdp,
                                   const Eigen::VectorXd& reward,
                                   double tolerance = 1e-4,
                                   int max_iterations = 10'000,
                                   const ValueVector* warm_start = nullptr);

/// Fixed point of V(s) = r(s) + discount * sum_a pi(a|s) sum_s' P(s'|s,a) V(s').
ValueVector policy_evaluation(const TabularMdp& mdp,
                              const StochasticPolicy& policy,
                              const Eigen::VectorXd& reward,
                              double tolerance = 1e-4,
                              int max_iterations = 10'000);

ValueVector policy_evaluation(const TabularMdp& mdp,
                              const DeterministicPolicy& policy,
                              const Eigen::VectorXd& reward,
                              double tolerance = 1e-4,
                              int max_iterations = 10'000);

}  // namespace miirl

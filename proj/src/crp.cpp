#include "miirl/crp.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace miirl {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

CrpState CrpState::round_robin(int n, int k, double alpha, bool allow_empty) {
  if (n < 1) throw std::invalid_argument("CrpState: need at least 1 trajectory");
  if (k < 1 || k > n)
    throw std::invalid_argument("CrpState: k must be in [1, n]");
  if (alpha < 0.0) throw std::invalid_argument("CrpState: alpha must be >= 0");
  CrpState state;
  state.alpha = alpha;
  state.allow_empty = allow_empty;
  state.assignments.resize(n);
  state.counts.assign(k, 0);
  for (int m = 0; m < n; ++m) {
    state.assignments[m] = m % k;
    ++state.counts[m % k];
  }
  return state;
}

void CrpState::validate() const {
  if (counts.empty()) throw std::logic_error("CrpState: no intentions");
  std::vector<int> tally(counts.size(), 0);
  for (int a : assignments) {
    if (a < 0 || a >= K())
      throw std::logic_error("CrpState: assignment out of range");
    ++tally[a];
  }
  for (int k = 0; k < K(); ++k) {
    if (tally[k] != counts[k])
      throw std::logic_error("CrpState: counts inconsistent with assignments");
    if (!allow_empty && counts[k] < 1)
      throw std::logic_error("CrpState: unoccupied intention not pruned");
  }
}

CrpPrior crp_prior(const CrpState& state, std::optional<int> exclude) {
  std::vector<double> view(state.counts.begin(), state.counts.end());
  if (exclude) {
    if (*exclude < 0 || *exclude >= state.n_trajectories())
      throw std::invalid_argument("crp_prior: exclude index out of range");
    view[state.assignments[*exclude]] -= 1.0;
  }
  const double total = std::accumulate(view.begin(), view.end(), 0.0);
  const double denom = total + state.alpha;

  CrpPrior prior;
  if (denom <= 0.0) {
    // Single trajectory with alpha = 0: no mass anywhere by the formula.
    // Convention: all mass on the existing intentions by occupancy.
    if (state.K() < 1 || std::accumulate(state.counts.begin(),
                                         state.counts.end(), 0) == 0)
      throw std::runtime_error("crp_prior: degenerate state (no occupied intention and alpha = 0)");
    const double occupied_total =
        std::accumulate(state.counts.begin(), state.counts.end(), 0.0);
    for (int k = 0; k < state.K(); ++k) {
      if (state.counts[k] == 0 && !state.allow_empty) continue;
      prior.kept.push_back(k);
      prior.kept_counts.push_back(state.counts[k]);
    }
    prior.probs.resize(static_cast<int>(prior.kept.size()) + 1);
    for (std::size_t j = 0; j < prior.kept.size(); ++j)
      prior.probs[static_cast<int>(j)] = prior.kept_counts[j] / occupied_total;
    prior.probs[prior.probs.size() - 1] = 0.0;
    return prior;
  }

  for (int k = 0; k < state.K(); ++k) {
    if (view[k] <= 0.0 && !state.allow_empty) continue;  // emptied: dropped
    prior.kept.push_back(k);
    prior.kept_counts.push_back(view[k]);
  }
  prior.probs.resize(static_cast<int>(prior.kept.size()) + 1);
  for (std::size_t j = 0; j < prior.kept.size(); ++j)
    prior.probs[static_cast<int>(j)] = prior.kept_counts[j] / denom;
  prior.probs[prior.probs.size() - 1] = state.alpha / denom;
  return prior;
}

Eigen::VectorXd estep_responsibilities(const std::vector<double>& prior_counts,
                                       double alpha,
                                       const std::vector<double>& logliks) {
  if (logliks.size() != prior_counts.size() + 1)
    throw std::invalid_argument(
        "estep_responsibilities: need one log-likelihood per intention plus one for the fresh head");
  if (alpha < 0.0)
    throw std::invalid_argument("estep_responsibilities: alpha must be >= 0");

  const int n = static_cast<int>(logliks.size());
  Eigen::VectorXd log_terms(n);
  for (int k = 0; k < n - 1; ++k) {
    if (prior_counts[k] < 0.0)
      throw std::invalid_argument("estep_responsibilities: negative count");
    log_terms[k] = prior_counts[k] > 0.0 ? std::log(prior_counts[k]) + logliks[k]
                                         : -kInf;
  }
  log_terms[n - 1] = alpha > 0.0 ? std::log(alpha) + logliks[n - 1] : -kInf;

  const double max_term = log_terms.maxCoeff();
  if (!(max_term > -kInf))
    throw std::runtime_error("estep_responsibilities: no component has positive mass");

  Eigen::VectorXd gamma = (log_terms.array() - max_term).exp();
  gamma /= gamma.sum();
  return gamma;
}

int sstep_sample(const Eigen::VectorXd& gamma, Rng& rng) {
  if (std::abs(gamma.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("sstep_sample: gamma must sum to 1");
  return rng.categorical({gamma.data(), static_cast<std::size_t>(gamma.size())});
}

bool mh_accept(double current_loglik, double proposed_loglik, Rng& rng) {
  if (proposed_loglik >= current_loglik) return true;
  return std::log(rng.uniform()) < proposed_loglik - current_loglik;
}

AssignmentEvent apply_assignment(CrpState& state, int traj, int target) {
  if (traj < 0 || traj >= state.n_trajectories())
    throw std::invalid_argument("apply_assignment: trajectory index out of range");
  if (target != kNewIntention && (target < 0 || target >= state.K()))
    throw std::invalid_argument("apply_assignment: intention index out of range");

  AssignmentEvent event;
  const int old = state.assignments[traj];
  if (target == old) {
    event.intention = old;
    event.remap.resize(state.K());
    std::iota(event.remap.begin(), event.remap.end(), 0);
    return event;
  }

  --state.counts[old];
  if (target == kNewIntention) {
    state.assignments[traj] = state.K();
    state.counts.push_back(1);
    event.birth = true;
  } else {
    state.assignments[traj] = target;
    ++state.counts[target];
  }

  // Compact away emptied intentions (only the old one can have emptied).
  event.remap.assign(state.counts.size(), -1);
  if (state.allow_empty) {
    std::iota(event.remap.begin(), event.remap.end(), 0);
  } else {
    std::vector<int> compact;
    for (std::size_t k = 0; k < state.counts.size(); ++k) {
      if (state.counts[k] == 0) {
        event.removed.push_back(static_cast<int>(k));
        continue;
      }
      event.remap[k] = static_cast<int>(compact.size());
      compact.push_back(state.counts[k]);
    }
    if (!event.removed.empty()) {
      state.counts = std::move(compact);
      for (int& a : state.assignments) a = event.remap[a];
    }
  }
  event.intention = state.assignments[traj];
  return event;
}

}  // namespace miirl

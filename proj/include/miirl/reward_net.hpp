#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace miirl {

/// Base network architecture. The full-scale configuration is five hidden
/// layers of width 256; the desk-scale default keeps runs fast.
struct NetShape {
  int hidden_layers = 2;
  int hidden_width = 32;
  bool head_bias = true;
};

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in, y = x * w^T + b
  Eigen::VectorXd b;
};

struct LayerAdam {
  Eigen::MatrixXd mw, vw;
  Eigen::VectorXd mb, vb;
  long t = 0;
};

/// Intention-specific affine map from reward features to a scalar reward.
struct Head {
  Eigen::VectorXd w;
  double b = 0.0;
  Eigen::VectorXd mw, vw;
  double mb = 0.0, vb = 0.0;
  long t = 0;
};

/// Shared base MLP (ReLU hidden layers + linear projection to the reward
/// feature space) with a growable list of per-intention heads. All passes
/// are explicit; no autodiff.
struct RewardNet {
  int feature_dim = 0;
  int reward_feature_dim = 0;
  NetShape shape;
  std::vector<DenseLayer> base;  // hidden layers, then the projection last
  std::vector<LayerAdam> base_adam;
  std::vector<Head> heads;

  int n_heads() const { return static_cast<int>(heads.size()); }
};

/// Cached base pass over a feature matrix: per-layer pre-activations plus
/// the resulting reward features, reusable across heads.
struct BaseCache {
  std::vector<Eigen::MatrixXd> pre;        // hidden pre-activations
  std::vector<Eigen::MatrixXd> act;        // act[0] = input features
  Eigen::MatrixXd reward_features;          // n_states x reward_feature_dim
};

/// Gradients in the same layout as the parameters. Addable; gradients from
/// per-head backward calls accumulate (the base picks up every head's term).
struct NetGrads {
  std::vector<Eigen::MatrixXd> base_w;
  std::vector<Eigen::VectorXd> base_b;
  std::vector<Eigen::VectorXd> head_w;
  std::vector<double> head_b;

  NetGrads& operator+=(const NetGrads& other);
};

/// Uniform init scaled by 1/sqrt(fan_in), zero biases; deterministic in seed.
RewardNet net_init(int feature_dim, int reward_feature_dim, int k_init,
                   std::uint64_t seed, const NetShape& shape = {});

BaseCache base_forward(const RewardNet& net, const Eigen::MatrixXd& features);

/// Reward of every state under head k given a cached base pass.
Eigen::VectorXd head_forward(const RewardNet& net, const BaseCache& cache,
                             int k);

Eigen::VectorXd net_forward(const RewardNet& net,
                            const Eigen::MatrixXd& features, int k);

/// Gradient of sum_s weights[s] * reward_k(s) with respect to the base and
/// head k; all other heads receive exactly zero.
NetGrads net_backward(const RewardNet& net, const Eigen::MatrixXd& features,
                      int k, const Eigen::VectorXd& state_weights);

/// Same objective summed over several weighted heads in one base pass.
NetGrads net_backward_batch(
    const RewardNet& net, const Eigen::MatrixXd& features,
    const std::vector<std::pair<int, Eigen::VectorXd>>& weighted_heads);

NetGrads zero_grads(const RewardNet& net);

/// One ascent step of Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected
/// moments). Each head keeps its own step counter. Throws if any updated
/// parameter is non-finite.
void adam_step(RewardNet& net, const NetGrads& grads, double lr);

/// Append a freshly initialized head (same scheme as net_init) with fresh
/// Adam state; returns its index.
int spawn_head(RewardNet& net, std::uint64_t seed);

/// Drop heads not in `occupied`, compacting indices. Returns old -> new
/// index map (-1 for removed). Survivors keep parameters and Adam state.
std::vector<int> prune_heads(RewardNet& net, const std::vector<int>& occupied);

/// Flat binary checkpoint: magic, dims, then little-endian 64-bit floats in
/// declaration order (hidden layers, projection, heads). Parameters only.
void save_net(const RewardNet& net, std::ostream& out);
RewardNet load_net(std::istream& in);
void save_net(const RewardNet& net, const std::string& path);
RewardNet load_net(const std::string& path);

}  // namespace miirl

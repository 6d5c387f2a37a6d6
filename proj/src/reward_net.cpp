#include "miirl/reward_net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "miirl/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace miirl {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
constexpr char kMagic[8] = {'M', 'I', 'I', 'R', 'L', 'N', 'N', '1'};

DenseLayer init_layer(int out, int in, Rng& rng) {
  DenseLayer layer;
  layer.w.resize(out, in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < in; ++j) layer.w(i, j) = rng.uniform(-scale, scale);
  layer.b = Eigen::VectorXd::Zero(out);
  return layer;
}

LayerAdam zero_adam(const DenseLayer& layer) {
  LayerAdam adam;
  adam.mw = Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols());
  adam.vw = adam.mw;
  adam.mb = Eigen::VectorXd::Zero(layer.b.size());
  adam.vb = adam.mb;
  return adam;
}

Head init_head(int reward_feature_dim, Rng& rng) {
  Head head;
  head.w.resize(reward_feature_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(reward_feature_dim));
  for (int i = 0; i < reward_feature_dim; ++i)
    head.w[i] = rng.uniform(-scale, scale);
  head.mw = Eigen::VectorXd::Zero(reward_feature_dim);
  head.vw = head.mw;
  return head;
}

void check_features(const RewardNet& net, const Eigen::MatrixXd& features) {
  if (features.cols() != net.feature_dim)
    throw std::invalid_argument("reward net: feature width mismatch");
}

void check_head(const RewardNet& net, int k) {
  if (k < 0 || k >= net.n_heads())
    throw std::out_of_range("reward net: head index out of range");
}

/// Backward through projection and hidden layers given dL/d(reward features).
void base_backward(const RewardNet& net, const BaseCache& cache,
                   const Eigen::MatrixXd& d_phi, NetGrads& grads) {
  const int n_hidden = net.shape.hidden_layers;
  const DenseLayer& proj = net.base[n_hidden];
  grads.base_w[n_hidden] += d_phi.transpose() * cache.act[n_hidden];
  grads.base_b[n_hidden] += d_phi.colwise().sum();
  Eigen::MatrixXd d_act = d_phi * proj.w;
  for (int l = n_hidden - 1; l >= 0; --l) {
    const Eigen::MatrixXd d_pre =
        (cache.pre[l].array() > 0.0).cast<double>() * d_act.array();
    grads.base_w[l] += d_pre.transpose() * cache.act[l];
    grads.base_b[l] += d_pre.colwise().sum();
    if (l > 0) d_act = d_pre * net.base[l].w;
  }
}

template <typename Tensor>
void adam_update(Tensor& param, Tensor& m, Tensor& v, const Tensor& grad,
                 long t, double lr) {
  m.array() = kBeta1 * m.array() + (1.0 - kBeta1) * grad.array();
  v.array() = kBeta2 * v.array() + (1.0 - kBeta2) * grad.array().square();
  const double mc = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  // Ascent: the objective is maximized.
  param.array() += lr * (m.array() / mc) / ((v.array() / vc).sqrt() + kEps);
}

void adam_update_scalar(double& param, double& m, double& v, double grad,
                        long t, double lr) {
  m = kBeta1 * m + (1.0 - kBeta1) * grad;
  v = kBeta2 * v + (1.0 - kBeta2) * grad * grad;
  const double mc = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  param += lr * (m / mc) / (std::sqrt(v / vc) + kEps);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_doubles(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

NetGrads& NetGrads::operator+=(const NetGrads& other) {
  for (std::size_t l = 0; l < base_w.size(); ++l) {
    base_w[l] += other.base_w[l];
    base_b[l] += other.base_b[l];
  }
  for (std::size_t k = 0; k < head_w.size(); ++k) {
    head_w[k] += other.head_w[k];
    head_b[k] += other.head_b[k];
  }
  return *this;
}

RewardNet net_init(int feature_dim, int reward_feature_dim, int k_init,
                   std::uint64_t seed, const NetShape& shape) {
  if (feature_dim < 1 || reward_feature_dim < 1)
    throw std::invalid_argument("net_init: dims must be >= 1");
  if (k_init < 1) throw std::invalid_argument("net_init: k_init must be >= 1");
  if (shape.hidden_layers < 0 || (shape.hidden_layers > 0 && shape.hidden_width < 1))
    throw std::invalid_argument("net_init: bad shape");

  Rng rng(seed);
  RewardNet net;
  net.feature_dim = feature_dim;
  net.reward_feature_dim = reward_feature_dim;
  net.shape = shape;
  int in = feature_dim;
  for (int l = 0; l < shape.hidden_layers; ++l) {
    net.base.push_back(init_layer(shape.hidden_width, in, rng));
    in = shape.hidden_width;
  }
  net.base.push_back(init_layer(reward_feature_dim, in, rng));  // projection
  for (const DenseLayer& layer : net.base) net.base_adam.push_back(zero_adam(layer));
  for (int k = 0; k < k_init; ++k)
    net.heads.push_back(init_head(reward_feature_dim, rng));
  return net;
}

BaseCache base_forward(const RewardNet& net, const Eigen::MatrixXd& features) {
  check_features(net, features);
  BaseCache cache;
  cache.act.push_back(features);
  for (int l = 0; l < net.shape.hidden_layers; ++l) {
    const DenseLayer& layer = net.base[l];
    Eigen::MatrixXd pre =
        (cache.act.back() * layer.w.transpose()).rowwise() + layer.b.transpose();
    cache.act.push_back(pre.array().max(0.0).matrix());
    cache.pre.push_back(std::move(pre));
  }
  const DenseLayer& proj = net.base.back();
  cache.reward_features =
      (cache.act.back() * proj.w.transpose()).rowwise() + proj.b.transpose();
  return cache;
}

Eigen::VectorXd head_forward(const RewardNet& net, const BaseCache& cache,
                             int k) {
  check_head(net, k);
  return cache.reward_features * net.heads[k].w +
         Eigen::VectorXd::Constant(cache.reward_features.rows(),
                                   net.heads[k].b);
}

Eigen::VectorXd net_forward(const RewardNet& net,
                            const Eigen::MatrixXd& features, int k) {
  return head_forward(net, base_forward(net, features), k);
}

NetGrads zero_grads(const RewardNet& net) {
  NetGrads grads;
  for (const DenseLayer& layer : net.base) {
    grads.base_w.push_back(Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()));
    grads.base_b.push_back(Eigen::VectorXd::Zero(layer.b.size()));
  }
  for (const Head& head : net.heads) {
    grads.head_w.push_back(Eigen::VectorXd::Zero(head.w.size()));
    grads.head_b.push_back(0.0);
  }
  return grads;
}

NetGrads net_backward_batch(
    const RewardNet& net, const Eigen::MatrixXd& features,
    const std::vector<std::pair<int, Eigen::VectorXd>>& weighted_heads) {
  check_features(net, features);
  NetGrads grads = zero_grads(net);
  if (weighted_heads.empty()) return grads;
  const BaseCache cache = base_forward(net, features);

  Eigen::MatrixXd d_phi =
      Eigen::MatrixXd::Zero(features.rows(), net.reward_feature_dim);
  for (const auto& [k, weights] : weighted_heads) {
    check_head(net, k);
    if (weights.size() != features.rows())
      throw std::invalid_argument("net_backward: state weight length");
    grads.head_w[k] += cache.reward_features.transpose() * weights;
    if (net.shape.head_bias) grads.head_b[k] += weights.sum();
    d_phi += weights * net.heads[k].w.transpose();
  }
  base_backward(net, cache, d_phi, grads);

  for (std::size_t l = 0; l < grads.base_w.size(); ++l)
    if (!grads.base_w[l].allFinite() || !grads.base_b[l].allFinite())
      throw std::runtime_error("net_backward: non-finite gradient in base layer " +
                               std::to_string(l));
  for (std::size_t k = 0; k < grads.head_w.size(); ++k)
    if (!grads.head_w[k].allFinite() || !std::isfinite(grads.head_b[k]))
      throw std::runtime_error("net_backward: non-finite gradient in head " +
                               std::to_string(k));
  return grads;
}

NetGrads net_backward(const RewardNet& net, const Eigen::MatrixXd& features,
                      int k, const Eigen::VectorXd& state_weights) {
  return net_backward_batch(net, features, {{k, state_weights}});
}

void adam_step(RewardNet& net, const NetGrads& grads, double lr) {
  if (grads.base_w.size() != net.base.size() ||
      grads.head_w.size() != net.heads.size())
    throw std::invalid_argument("adam_step: gradient layout mismatch");
  for (std::size_t l = 0; l < net.base.size(); ++l) {
    LayerAdam& adam = net.base_adam[l];
    ++adam.t;
    adam_update(net.base[l].w, adam.mw, adam.vw, grads.base_w[l], adam.t, lr);
    adam_update(net.base[l].b, adam.mb, adam.vb, grads.base_b[l], adam.t, lr);
  }
  for (std::size_t k = 0; k < net.heads.size(); ++k) {
    Head& head = net.heads[k];
    ++head.t;
    adam_update(head.w, head.mw, head.vw, grads.head_w[k], head.t, lr);
    if (net.shape.head_bias)
      adam_update_scalar(head.b, head.mb, head.vb, grads.head_b[k], head.t, lr);
  }
  for (std::size_t l = 0; l < net.base.size(); ++l)
    if (!net.base[l].w.allFinite() || !net.base[l].b.allFinite())
      throw std::runtime_error("adam_step: non-finite parameter in base layer " +
                               std::to_string(l));
  for (std::size_t k = 0; k < net.heads.size(); ++k)
    if (!net.heads[k].w.allFinite() || !std::isfinite(net.heads[k].b))
      throw std::runtime_error("adam_step: non-finite parameter in head " +
                               std::to_string(k));
}

int spawn_head(RewardNet& net, std::uint64_t seed) {
  Rng rng(seed);
  net.heads.push_back(init_head(net.reward_feature_dim, rng));
  return net.n_heads() - 1;
}

std::vector<int> prune_heads(RewardNet& net, const std::vector<int>& occupied) {
  if (occupied.empty())
    throw std::invalid_argument("prune_heads: occupied set must be nonempty");
  std::vector<bool> keep(net.heads.size(), false);
  for (int k : occupied) {
    if (k < 0 || k >= net.n_heads())
      throw std::out_of_range("prune_heads: head index out of range");
    keep[k] = true;
  }
  std::vector<int> remap(net.heads.size(), -1);
  std::vector<Head> survivors;
  for (std::size_t k = 0; k < net.heads.size(); ++k) {
    if (!keep[k]) continue;
    remap[k] = static_cast<int>(survivors.size());
    survivors.push_back(std::move(net.heads[k]));
  }
  net.heads = std::move(survivors);
  return remap;
}

void save_net(const RewardNet& net, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(net.feature_dim));
  write_u32(out, static_cast<std::uint32_t>(net.reward_feature_dim));
  write_u32(out, static_cast<std::uint32_t>(net.shape.hidden_layers));
  write_u32(out, static_cast<std::uint32_t>(net.shape.hidden_width));
  write_u32(out, static_cast<std::uint32_t>(net.n_heads()));
  write_u32(out, net.shape.head_bias ? 1 : 0);
  for (const DenseLayer& layer : net.base) {
    // Row-major serialization regardless of Eigen's storage order.
    for (int i = 0; i < layer.w.rows(); ++i)
      for (int j = 0; j < layer.w.cols(); ++j) {
        const double v = layer.w(i, j);
        write_doubles(out, &v, 1);
      }
    write_doubles(out, layer.b.data(), static_cast<std::size_t>(layer.b.size()));
  }
  for (const Head& head : net.heads) {
    write_doubles(out, head.w.data(), static_cast<std::size_t>(head.w.size()));
    write_doubles(out, &head.b, 1);
  }
  if (!out) throw std::runtime_error("save_net: write failed");
}

RewardNet load_net(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_net: bad magic");
  const int feature_dim = static_cast<int>(read_u32(in));
  const int reward_feature_dim = static_cast<int>(read_u32(in));
  NetShape shape;
  shape.hidden_layers = static_cast<int>(read_u32(in));
  shape.hidden_width = static_cast<int>(read_u32(in));
  const int n_heads = static_cast<int>(read_u32(in));
  shape.head_bias = read_u32(in) != 0;
  if (n_heads < 1) throw std::runtime_error("load_net: checkpoint has no heads");

  RewardNet net = net_init(feature_dim, reward_feature_dim, n_heads, 0, shape);
  for (DenseLayer& layer : net.base) {
    for (int i = 0; i < layer.w.rows(); ++i)
      for (int j = 0; j < layer.w.cols(); ++j) {
        double v;
        read_doubles(in, &v, 1);
        layer.w(i, j) = v;
      }
    read_doubles(in, layer.b.data(), static_cast<std::size_t>(layer.b.size()));
  }
  for (Head& head : net.heads) {
    read_doubles(in, head.w.data(), static_cast<std::size_t>(head.w.size()));
    read_doubles(in, &head.b, 1);
    head.mw.setZero();
    head.vw.setZero();
    head.mb = head.vb = 0.0;
    head.t = 0;
  }
  if (!in) throw std::runtime_error("load_net: truncated checkpoint");
  for (LayerAdam& adam : net.base_adam) {
    adam.mw.setZero();
    adam.vw.setZero();
    adam.mb.setZero();
    adam.vb.setZero();
    adam.t = 0;
  }
  return net;
}

void save_net(const RewardNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_net: cannot open " + path);
  save_net(net, out);
}

RewardNet load_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_net: cannot open " + path);
  return load_net(in);
}

}  // namespace miirl

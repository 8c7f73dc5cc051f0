#pragma once

// Fusion subnet over concatenated per-part conv features:
//   flatten -> FC6 -> ReLU -> FC7 -> FC8 (6 logits) -> softmax
// trained with mini-batch SGD and Nesterov momentum. FC7 output is the
// extracted per-modality descriptor.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fer/error.hpp"
#include "fer/tensor.hpp"
#include "fer/tensor_file.hpp"

namespace fer {

inline constexpr int kNumClasses = 6;
inline constexpr std::size_t kConvGrid = 6;
inline constexpr std::size_t kConvChannels = 512;
inline constexpr std::size_t kPartFeatureSize = kConvGrid * kConvGrid * kConvChannels;  // 18432
inline constexpr std::size_t kFusedFeatureSize = 4 * kPartFeatureSize;                 // 73728

struct NetShape {
  std::size_t input = kFusedFeatureSize;
  std::size_t fc6 = 4096;
  std::size_t fc7 = 2048;
  std::size_t classes = kNumClasses;

  friend bool operator==(const NetShape&, const NetShape&) = default;
};

template <typename T>
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> weight;  // out x in, row-major
  std::vector<T> bias;    // out

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weight(in_dim * out_dim, T(0)), bias(out_dim, T(0)) {}

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

template <typename T>
struct FusionNet {
  DenseLayer<T> fc6, fc7, fc8;

  FusionNet() = default;
  explicit FusionNet(const NetShape& s) : fc6(s.input, s.fc6), fc7(s.fc6, s.fc7), fc8(s.fc7, s.classes) {}

  NetShape shape() const { return {fc6.in, fc6.out, fc7.out, fc8.out}; }
  std::size_t input_dim() const { return fc6.in; }

  /// Parameter buffers in a fixed order: fc6.w, fc6.b, fc7.w, fc7.b, fc8.w, fc8.b.
  std::array<std::span<T>, 6> parameters() {
    return {fc6.weight, fc6.bias, fc7.weight, fc7.bias, fc8.weight, fc8.bias};
  }
  std::array<std::span<const T>, 6> parameters() const {
    return {fc6.weight, fc6.bias, fc7.weight, fc7.bias, fc8.weight, fc8.bias};
  }
  static constexpr std::array<bool, 6> kIsWeight = {true, false, true, false, true, false};
  static constexpr std::array<const char*, 6> kNames = {"fc6.weight", "fc6.bias", "fc7.weight",
                                                        "fc7.bias",   "fc8.weight", "fc8.bias"};

  bool all_finite() const {
    for (auto p : parameters()) {
      for (T v : p) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const FusionNet&, const FusionNet&) = default;
};

namespace detail {
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Eigen::Map<const RowMat<T>> weights(const DenseLayer<T>& l) {
  return {l.weight.data(), static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in)};
}
template <typename T>
Eigen::Map<const Vec<T>> bias(const DenseLayer<T>& l) {
  return {l.bias.data(), static_cast<Eigen::Index>(l.out)};
}
}  // namespace detail

/// Numerically stable softmax (max subtraction).
template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> p(logits.size());
  if (logits.empty()) return p;
  const T m = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(logits[i] - m));
  for (T& v : p) v /= sum;
  return p;
}

template <typename T>
struct ForwardResult {
  std::vector<T> fc6;     // pre-activation
  std::vector<T> fc7;     // affine output, no activation
  std::vector<T> logits;
  std::vector<T> probs;
};

template <typename T>
ForwardResult<T> forward(const FusionNet<T>& net, std::span<const T> x) {
  if (x.size() != net.input_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "network expects " + std::to_string(net.input_dim()) +
                                              " inputs, got " + std::to_string(x.size()));
  }
  using V = detail::Vec<T>;
  Eigen::Map<const V> in(x.data(), static_cast<Eigen::Index>(x.size()));
  const V z6 = detail::weights(net.fc6) * in + detail::bias(net.fc6);
  const V a6 = z6.cwiseMax(T(0));
  const V z7 = detail::weights(net.fc7) * a6 + detail::bias(net.fc7);
  const V z8 = detail::weights(net.fc8) * z7 + detail::bias(net.fc8);
  ForwardResult<T> r;
  r.fc6.assign(z6.data(), z6.data() + z6.size());
  r.fc7.assign(z7.data(), z7.data() + z7.size());
  r.logits.assign(z8.data(), z8.data() + z8.size());
  r.probs = softmax<T>(r.logits);
  return r;
}

template <typename T>
int predict_class(const FusionNet<T>& net, std::span<const T> x) {
  const auto r = forward(net, x);
  return static_cast<int>(std::max_element(r.logits.begin(), r.logits.end()) - r.logits.begin());
}

template <typename T>
std::vector<T> extract_fc7(const FusionNet<T>& net, std::span<const T> x, bool post_relu = false) {
  auto fc7 = forward(net, x).fc7;
  if (post_relu) {
    for (T& v : fc7) v = std::max(v, T(0));
  }
  return fc7;
}

template <typename T>
struct Example {
  std::span<const T> x;
  int label = 0;
};

template <typename T>
struct LossAndGrads {
  T loss = 0;
  FusionNet<T> grads;
};

/// Mean softmax cross-entropy over the batch and its exact gradient. Weight
/// decay adds wd * w to weight gradients (biases excluded); the returned loss
/// is the data term only.
template <typename T>
LossAndGrads<T> loss_and_grads(const FusionNet<T>& net, std::span<const Example<T>> batch,
                               double weight_decay = 0.0) {
  if (batch.empty()) throw Error(ErrorCode::EmptySet, "empty batch");
  using M = detail::RowMat<T>;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto in_dim = static_cast<Eigen::Index>(net.input_dim());
  M X(n, in_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = batch[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(ex.x.size()) != in_dim) {
      throw Error(ErrorCode::ShapeMismatch, "batch element has " + std::to_string(ex.x.size()) + " inputs, expected " +
                                                std::to_string(in_dim));
    }
    if (ex.label < 0 || ex.label >= static_cast<int>(net.fc8.out)) {
      throw Error(ErrorCode::ShapeMismatch, "label " + std::to_string(ex.label) + " out of range");
    }
    X.row(i) = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(ex.x.data(), in_dim);
  }
  const auto W6 = detail::weights(net.fc6);
  const auto W7 = detail::weights(net.fc7);
  const auto W8 = detail::weights(net.fc8);

  M Z6 = X * W6.transpose();
  Z6.rowwise() += detail::bias(net.fc6).transpose();
  const M A6 = Z6.cwiseMax(T(0));
  M Z7 = A6 * W7.transpose();
  Z7.rowwise() += detail::bias(net.fc7).transpose();
  M Z8 = Z7 * W8.transpose();
  Z8.rowwise() += detail::bias(net.fc8).transpose();

  LossAndGrads<T> out;
  out.grads = FusionNet<T>(net.shape());
  M D8(n, Z8.cols());
  T loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const T m = Z8.row(i).maxCoeff();
    T sum = 0;
    for (Eigen::Index k = 0; k < Z8.cols(); ++k) sum += std::exp(Z8(i, k) - m);
    const T log_sum = std::log(sum) + m;
    const int y = batch[static_cast<std::size_t>(i)].label;
    loss += log_sum - Z8(i, y);
    for (Eigen::Index k = 0; k < Z8.cols(); ++k) D8(i, k) = std::exp(Z8(i, k) - log_sum);
    D8(i, y) -= T(1);
  }
  const T inv_n = T(1) / static_cast<T>(n);
  out.loss = loss * inv_n;
  D8 *= inv_n;

  const M D7 = D8 * W8;
  M D6 = D7 * W7;
  D6 = D6.cwiseProduct((Z6.array() > T(0)).template cast<T>().matrix());

  auto store = [&](DenseLayer<T>& g, const M& delta, const M& input, const DenseLayer<T>& p) {
    Eigen::Map<M> gw(g.weight.data(), static_cast<Eigen::Index>(g.out), static_cast<Eigen::Index>(g.in));
    gw.noalias() = delta.transpose() * input;
    Eigen::Map<detail::Vec<T>> gb(g.bias.data(), static_cast<Eigen::Index>(g.out));
    gb = delta.colwise().sum().transpose();
    if (weight_decay != 0.0) gw += static_cast<T>(weight_decay) * detail::weights(p);
  };
  store(out.grads.fc8, D8, Z7, net.fc8);
  store(out.grads.fc7, D7, A6, net.fc7);
  store(out.grads.fc6, D6, X, net.fc6);
  return out;
}

template <typename T>
struct OptState {
  FusionNet<T> velocity;

  OptState() = default;
  explicit OptState(const NetShape& s) : velocity(s) {}
};

/// Nesterov momentum in the form
///   v <- mu v - lr g;   theta <- theta - mu v_prev + (1 + mu) v
template <typename T>
void nesterov_update(std::span<T> theta, std::span<const T> grad, std::span<T> velocity, T lr, T momentum) {
  if (theta.size() != grad.size() || theta.size() != velocity.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T v_prev = velocity[i];
    const T v = momentum * v_prev - lr * grad[i];
    velocity[i] = v;
    theta[i] = theta[i] - momentum * v_prev + (T(1) + momentum) * v;
  }
}

template <typename T>
void nesterov_step(FusionNet<T>& net, const FusionNet<T>& grads, OptState<T>& state, T lr, T momentum) {
  if (net.shape() != grads.shape() || net.shape() != state.velocity.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match network shape");
  }
  auto p = net.parameters();
  auto g = grads.parameters();
  auto v = state.velocity.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) nesterov_update<T>(p[i], g[i], v[i], lr, momentum);
}

/// He initialization: N(0, 2 / fan_in) weights, row-major fan_out x fan_in.
template <typename T>
std::vector<T> he_init(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  if (fan_in < 1) throw Error(ErrorCode::ShapeMismatch, "fan_in must be >= 1");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> w(fan_in * fan_out);
  for (T& v : w) v = static_cast<T>(dist(rng));
  return w;
}

template <typename T>
FusionNet<T> make_initialized_net(const NetShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FusionNet<T> net(shape);
  net.fc6.weight = he_init<T>(shape.input, shape.fc6, rng);
  net.fc7.weight = he_init<T>(shape.fc6, shape.fc7, rng);
  net.fc8.weight = he_init<T>(shape.fc7, shape.classes, rng);
  return net;
}

struct TrainConfig {
  std::size_t batch_size = 12;
  double lr_start = 2e-4;
  double lr_end = 2e-5;
  std::size_t epochs = 150;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lr_start >= lr_end && lr_end > 0.0)) throw Error(ErrorCode::ConfigError, "need lr_start >= lr_end > 0");
    if (epochs < 1) throw Error(ErrorCode::ConfigError, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorCode::ConfigError, "batch_size must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::ConfigError, "momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error(ErrorCode::ConfigError, "weight_decay must be >= 0");
  }
};

/// Geometric decay from lr_start (first epoch) to lr_end (last epoch); epoch
/// is 0-based.
inline double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.epochs <= 1) return cfg.lr_start;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, t);
}

/// 1-based epoch with the lowest validation error; ties go to the later epoch.
inline std::size_t select_best_epoch(std::span<const double> val_errors) {
  if (val_errors.empty()) throw Error(ErrorCode::EmptySet, "no validation errors");
  std::size_t best = 0;
  for (std::size_t e = 1; e < val_errors.size(); ++e) {
    if (val_errors[e] <= val_errors[best]) best = e;
  }
  return best + 1;
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_error = 0.0;
};

template <typename T>
struct TrainResult {
  FusionNet<T> net;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

template <typename T>
double classification_error(const FusionNet<T>& net, std::span<const Example<T>> set) {
  if (set.empty()) return 0.0;
  std::size_t wrong = 0;
  for (const auto& ex : set) wrong += predict_class(net, ex.x) != ex.label;
  return static_cast<double>(wrong) / static_cast<double>(set.size());
}

/// Mini-batch SGD with Nesterov momentum. Returns the snapshot from the epoch
/// with the lowest validation error (later epoch on ties).
template <typename T>
TrainResult<T> train(const NetShape& shape, std::span<const Example<T>> train_set,
                     std::span<const Example<T>> val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorCode::EmptySet, "empty training set");
  if (val_set.empty()) throw Error(ErrorCode::EmptySet, "empty validation set");
  for (const auto& ex : train_set) {
    if (ex.label < 0 || ex.label >= static_cast<int>(shape.classes)) {
      throw Error(ErrorCode::ShapeMismatch, "training label out of range");
    }
  }

  TrainResult<T> result;
  FusionNet<T> net = make_initialized_net<T>(shape, cfg.seed);
  OptState<T> state(shape);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example<T>> batch;
  double best_val = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
      auto lg = loss_and_grads<T>(net, batch, cfg.weight_decay);
      if (!std::isfinite(static_cast<double>(lg.loss))) {
        throw Error(ErrorCode::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                                 ", batch starting at " + std::to_string(start) +
                                                 " (lr " + std::to_string(lr) + ")");
      }
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(stop - start);
      nesterov_step<T>(net, lg.grads, state, static_cast<T>(lr), static_cast<T>(cfg.momentum));
    }
    if (!net.all_finite()) {
      throw Error(ErrorCode::DivergedLoss, "non-finite parameters after epoch " + std::to_string(epoch + 1));
    }
    const double val_error = classification_error<T>(net, val_set);
    result.log.push_back({epoch + 1, lr, loss_sum / static_cast<double>(order.size()), val_error});
    if (val_error <= best_val) {
      best_val = val_error;
      result.net = net;
      result.best_epoch = epoch + 1;
    }
  }
  return result;
}

template <typename T>
std::vector<T> concat_vectors(std::span<const T> first, std::span<const T> second) {
  std::vector<T> out(first.begin(), first.end());
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

/// Texture-first concatenation of per-modality FC7 descriptors.
template <typename T>
std::vector<T> fuse_modalities(std::span<const T> texture_fc7, std::span<const T> depth_fc7) {
  if (texture_fc7.size() != depth_fc7.size()) {
    throw Error(ErrorCode::ShapeMismatch, "texture and depth descriptors differ in length");
  }
  return concat_vectors(texture_fc7, depth_fc7);
}

/// Channel-axis concatenation of per-part H x W x C maps, in the given order.
inline FeatureTensor concat_parts(std::span<const FeatureTensor> parts) {
  if (parts.size() != 4) throw Error(ErrorCode::ShapeMismatch, "expected 4 part feature maps");
  const std::vector<std::size_t> part_dims = {kConvGrid, kConvGrid, kConvChannels};
  for (const auto& p : parts) {
    if (p.dims != part_dims) {
      throw Error(ErrorCode::ShapeMismatch, "part feature map has shape " + shape_string(p.dims) + ", expected (6,6,512)");
    }
  }
  const std::size_t total_channels = kConvChannels * parts.size();
  FeatureTensor out({kConvGrid, kConvGrid, total_channels});
  for (std::size_t cell = 0; cell < kConvGrid * kConvGrid; ++cell) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].data.begin() + static_cast<std::ptrdiff_t>(cell * kConvChannels), kConvChannels,
                  out.data.begin() + static_cast<std::ptrdiff_t>(cell * total_channels + k * kConvChannels));
    }
  }
  return out;
}

template <typename T>
TensorFile net_to_tensors(const FusionNet<T>& net) {
  TensorFile file;
  const std::array<const DenseLayer<T>*, 3> layers = {&net.fc6, &net.fc7, &net.fc8};
  const std::array<const char*, 3> names = {"fc6", "fc7", "fc8"};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = *layers[i];
    file.push_back({std::string(names[i]) + ".weight",
                    FeatureTensor({l.out, l.in}, std::vector<float>(l.weight.begin(), l.weight.end()))});
    file.push_back({std::string(names[i]) + ".bias",
                    FeatureTensor({l.out}, std::vector<float>(l.bias.begin(), l.bias.end()))});
  }
  return file;
}

template <typename T>
FusionNet<T> net_from_tensors(const TensorFile& file) {
  auto layer = [&](const std::string& name) {
    const auto& w = find_tensor(file, name + ".weight");
    const auto& b = find_tensor(file, name + ".bias");
    if (w.dims.size() != 2 || b.dims.size() != 1 || b.dims[0] != w.dims[0]) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint layer " + name + " has inconsistent shapes");
    }
    DenseLayer<T> l(w.dims[1], w.dims[0]);
    std::copy(w.data.begin(), w.data.end(), l.weight.begin());
    std::copy(b.data.begin(), b.data.end(), l.bias.begin());
    return l;
  };
  FusionNet<T> net;
  net.fc6 = layer("fc6");
  net.fc7 = layer("fc7");
  net.fc8 = layer("fc8");
  if (net.fc7.in != net.fc6.out || net.fc8.in != net.fc7.out) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint layers do not chain");
  }
  return net;
}

}  // namespace fer

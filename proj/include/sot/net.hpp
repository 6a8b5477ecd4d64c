#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sot/common.hpp"
#include "sot/grid.hpp"
#include "sot/image.hpp"
#include "sot/layers.hpp"

namespace sot {

/// Output probabilities are clamped to [kProbClamp, 1 - kProbClamp] so the
/// cross-entropy loss stays finite.
inline constexpr float kProbClamp = 1e-7f;

struct TrainHyper {
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  float dropout = 0.5f;

  void validate() const {
    if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate))
      throw ConfigError("learning rate must be positive and finite");
    if (momentum < 0.0f || momentum >= 1.0f)
      throw ConfigError("momentum must be in [0,1)");
    if (weight_decay < 0.0f || !std::isfinite(weight_decay))
      throw ConfigError("weight decay must be non-negative");
    if (dropout < 0.0f || dropout >= 1.0f)
      throw ConfigError("dropout rate must be in [0,1)");
  }

  bool operator==(const TrainHyper&) const = default;
};

enum class ForwardMode { Train, Infer };

/// Per-layer parameter block; empty for parameterless layers. Also the
/// shape of gradients and momentum buffers.
template <typename T>
struct LayerParams {
  std::vector<T> weights;
  std::vector<T> bias;

  bool shape_matches(const LayerParams& o) const {
    return weights.size() == o.weights.size() && bias.size() == o.bias.size();
  }
};

/// Summed per-cell cross-entropy between a predicted probability map and a
/// binary target map (not averaged over cells). 64-bit accumulation.
inline double map_loss(const ProbabilityMap& pred, const TargetMap& target) {
  if (pred.size != target.size) {
    throw DimensionError("map_loss: prediction " + std::to_string(pred.size) +
                         "x" + std::to_string(pred.size) + " vs target " +
                         std::to_string(target.size) + "x" +
                         std::to_string(target.size));
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.values.size(); ++k) {
    const double p = pred.values[k];
    loss -= target.values[k] ? std::log(p) : std::log1p(-p);
  }
  return loss;
}

namespace detail {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Activation flowing between layers: spatial (c,h,w) or flat.
template <typename T>
struct Act {
  ActShape shape;
  std::vector<T> v;

  static Act make(const ActShape& s) {
    Act a;
    a.shape = s;
    a.v.assign(static_cast<std::size_t>(s.count()), T(0));
    return a;
  }
};

// start/end of multiscale-pool bin b out of g over extent n
inline int ms_bin_start(int b, int g, int n) { return (b * n) / g; }
inline int ms_bin_end(int b, int g, int n) {
  return ((b + 1) * n + g - 1) / g;  // ceil
}

}  // namespace detail

/// Minimal convolutional network with a sigmoid probability-map head.
/// Templated on the scalar so the gradient check can run a 64-bit shadow of
/// the 32-bit production network. Single-owner mutable state; inference on
/// a const instance is safe from several threads, mutation is not.
template <typename T>
class BasicNetwork {
 public:
  BasicNetwork(NetConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)), rng_(seeded_rng(seed, 1)) {
    shapes_ = cfg_.validate();
    Rng init = seeded_rng(seed, 0);
    params_.resize(cfg_.layers.size());
    momentum_.resize(cfg_.layers.size());
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      const LayerSpec& spec = cfg_.layers[i];
      const ActShape in = input_shape(i);
      int fan_in = 0, fan_out = 0, n_w = 0, n_b = 0;
      if (spec.kind == LayerKind::Conv) {
        fan_in = in.c * spec.kernel * spec.kernel;
        fan_out = spec.filters * spec.kernel * spec.kernel;
        n_w = spec.filters * fan_in;
        n_b = spec.filters;
      } else if (spec.kind == LayerKind::FullyConnected) {
        fan_in = in.count();
        fan_out = spec.width;
        n_w = fan_in * fan_out;
        n_b = spec.width;
      } else {
        continue;
      }
      const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
      std::uniform_real_distribution<float> dist(-a, a);
      params_[i].weights.resize(n_w);
      for (auto& w : params_[i].weights) w = static_cast<T>(dist(init));
      params_[i].bias.assign(n_b, T(0));
      momentum_[i].weights.assign(n_w, T(0));
      momentum_[i].bias.assign(n_b, T(0));
    }
  }

  /// Scalar-converting copy (used for the 64-bit gradient-check shadow).
  template <typename U>
  explicit BasicNetwork(const BasicNetwork<U>& other)
      : cfg_(other.config()), rng_(other.rng_state()) {
    shapes_ = cfg_.validate();
    params_.resize(cfg_.layers.size());
    momentum_.resize(cfg_.layers.size());
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      const auto& p = other.layer_params(i);
      const auto& m = other.layer_momentum(i);
      params_[i].weights.assign(p.weights.begin(), p.weights.end());
      params_[i].bias.assign(p.bias.begin(), p.bias.end());
      momentum_[i].weights.assign(m.weights.begin(), m.weights.end());
      momentum_[i].bias.assign(m.bias.begin(), m.bias.end());
    }
  }

  const NetConfig& config() const { return cfg_; }
  int map_size() const { return cfg_.map_size; }
  int input_side() const { return cfg_.input_side(); }
  std::size_t layer_count() const { return cfg_.layers.size(); }
  const LayerParams<T>& layer_params(std::size_t i) const { return params_[i]; }
  LayerParams<T>& layer_params_mut(std::size_t i) { return params_[i]; }
  const LayerParams<T>& layer_momentum(std::size_t i) const { return momentum_[i]; }
  const Rng& rng_state() const { return rng_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.weights.size() + p.bias.size();
    return n;
  }

  /// Overrides every dropout layer's rate (how TrainHyper.dropout is applied).
  void set_dropout_rate(float rate) {
    if (rate < 0.0f || rate >= 1.0f)
      throw ConfigError("dropout rate must be in [0,1)");
    for (auto& spec : cfg_.layers)
      if (spec.kind == LayerKind::Dropout) spec.drop_rate = rate;
  }

  /// Runs the stack on a batch of patches. Train mode draws dropout masks
  /// from the network RNG and caches activations for backward; infer mode
  /// is deterministic and leaves no cache.
  std::vector<ProbabilityMap> forward(std::span<const Frame> batch,
                                      ForwardMode mode) {
    auto values = forward_values(batch, mode);
    std::vector<ProbabilityMap> maps;
    maps.reserve(values.size());
    for (const auto& v : values) {
      ProbabilityMap m(cfg_.map_size);
      for (std::size_t k = 0; k < v.size(); ++k)
        m.values[k] = static_cast<float>(v[k]);
      maps.push_back(std::move(m));
    }
    return maps;
  }

  /// Forward returning raw T-typed clamped probabilities (length S*S each).
  std::vector<std::vector<T>> forward_values(std::span<const Frame> batch,
                                             ForwardMode mode) {
    if (batch.empty()) throw ContractError("forward: empty batch");
    const bool train = mode == ForwardMode::Train;
    if (train) {
      cache_.assign(batch.size(), ItemCache{});
      cache_valid_ = true;
    }
    std::vector<std::vector<T>> out;
    out.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      out.push_back(forward_item(batch[b], train ? &cache_[b] : nullptr));
    }
    return out;
  }

  /// Loss gradients w.r.t. every parameter for the batch of the preceding
  /// train-mode forward; loss = per-item summed cross-entropy, averaged
  /// over the batch. Requires that forward(.., Train) ran on this network.
  std::vector<LayerParams<T>> backward(const std::vector<TargetMap>& targets) {
    if (!cache_valid_)
      throw StateError("backward: no preceding train-mode forward");
    if (targets.size() != cache_.size())
      throw DimensionError("backward: " + std::to_string(targets.size()) +
                           " targets for a cached batch of " +
                           std::to_string(cache_.size()));
    const int s2 = cfg_.map_size * cfg_.map_size;
    std::vector<LayerParams<T>> grads(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      grads[i].weights.assign(params_[i].weights.size(), T(0));
      grads[i].bias.assign(params_[i].bias.size(), T(0));
    }
    const T inv_batch = T(1) / static_cast<T>(cache_.size());
    for (std::size_t b = 0; b < cache_.size(); ++b) {
      const TargetMap& t = targets[b];
      if (t.size != cfg_.map_size)
        throw DimensionError("backward: target map size " +
                             std::to_string(t.size) + ", expected " +
                             std::to_string(cfg_.map_size));
      // gradient at the sigmoid pre-activation: (p - t), batch-mean scaled
      std::vector<T> delta(static_cast<std::size_t>(s2));
      for (int k = 0; k < s2; ++k) {
        delta[static_cast<std::size_t>(k)] =
            (cache_[b].prob[static_cast<std::size_t>(k)] -
             static_cast<T>(t.values[static_cast<std::size_t>(k)])) *
            inv_batch;
      }
      backward_item(cache_[b], delta, grads);
    }
    return grads;
  }

  /// Momentum SGD with weight decay:
  ///   v <- momentum*v - lr*(g + weight_decay*w);  w <- w + v
  void sgd_step(const std::vector<LayerParams<T>>& grads,
                const TrainHyper& hyper) {
    if (grads.size() != params_.size())
      throw DimensionError("sgd_step: gradient layer count mismatch");
    const T lr = static_cast<T>(hyper.learning_rate);
    const T mom = static_cast<T>(hyper.momentum);
    const T wd = static_cast<T>(hyper.weight_decay);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!grads[i].shape_matches(params_[i]))
        throw DimensionError("sgd_step: gradient shape mismatch at layer " +
                             std::to_string(i));
      auto update = [&](std::vector<T>& w, std::vector<T>& v,
                        const std::vector<T>& g) {
        for (std::size_t k = 0; k < w.size(); ++k) {
          if (!std::isfinite(static_cast<double>(g[k])))
            throw TrainingError("sgd_step: non-finite gradient at layer " +
                                std::to_string(i));
          v[k] = mom * v[k] - lr * (g[k] + wd * w[k]);
          w[k] += v[k];
          if (!std::isfinite(static_cast<double>(w[k])))
            throw TrainingError("sgd_step: non-finite parameter at layer " +
                                std::to_string(i));
        }
      };
      update(params_[i].weights, momentum_[i].weights, grads[i].weights);
      update(params_[i].bias, momentum_[i].bias, grads[i].bias);
    }
  }

 private:
  template <typename U>
  friend class BasicNetwork;

  struct ItemCache {
    std::vector<detail::Act<T>> inputs;       // input of each layer
    std::vector<std::vector<int>> argmax;     // maxpool / multiscale-pool
    std::vector<std::vector<T>> mask;         // dropout (inverted scaling)
    std::vector<T> prob;                      // clamped output probabilities
  };

  ActShape input_shape(std::size_t layer) const {
    if (layer == 0)
      return {false, cfg_.in_channels, cfg_.input_side(), cfg_.input_side(), 0};
    return shapes_[layer - 1];
  }

  detail::Act<T> to_input(const Frame& patch) const {
    if (patch.width != cfg_.input_side() || patch.height != cfg_.input_side() ||
        patch.channels != cfg_.in_channels) {
      throw DimensionError(
          "forward: patch " + std::to_string(patch.channels) + "x" +
          std::to_string(patch.height) + "x" + std::to_string(patch.width) +
          ", network expects " + std::to_string(cfg_.in_channels) + "x" +
          std::to_string(cfg_.input_side()) + "x" +
          std::to_string(cfg_.input_side()));
    }
    detail::Act<T> a;
    a.shape = {false, cfg_.in_channels, cfg_.input_side(), cfg_.input_side(), 0};
    a.v.assign(patch.pixels.begin(), patch.pixels.end());
    return a;
  }

  std::vector<T> forward_item(const Frame& patch, ItemCache* cache) {
    detail::Act<T> cur = to_input(patch);
    if (cache) {
      cache->inputs.resize(cfg_.layers.size());
      cache->argmax.resize(cfg_.layers.size());
      cache->mask.resize(cfg_.layers.size());
    }
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      if (cache) cache->inputs[i] = cur;
      cur = forward_layer(i, std::move(cur), cache);
    }
    if (cache) cache->prob = cur.v;
    return std::move(cur.v);
  }

  detail::Act<T> forward_layer(std::size_t i, detail::Act<T> in,
                               ItemCache* cache) {
    const LayerSpec& spec = cfg_.layers[i];
    const ActShape out_shape = shapes_[i];
    switch (spec.kind) {
      case LayerKind::Conv:
        return conv_forward(spec, params_[i], in, out_shape);
      case LayerKind::Relu: {
        for (auto& x : in.v) x = x > T(0) ? x : T(0);
        return in;
      }
      case LayerKind::MaxPool:
        return maxpool_forward(spec, in, out_shape,
                               cache ? &cache->argmax[i] : nullptr);
      case LayerKind::MultiscalePool:
        return mspool_forward(spec, in, out_shape,
                              cache ? &cache->argmax[i] : nullptr);
      case LayerKind::FullyConnected:
        return fc_forward(params_[i], in, out_shape);
      case LayerKind::Dropout:
        return dropout_forward(spec, std::move(in),
                               cache ? &cache->mask[i] : nullptr);
      case LayerKind::SigmoidMap: {
        const T lo = static_cast<T>(kProbClamp);
        const T hi = T(1) - static_cast<T>(kProbClamp);
        for (auto& x : in.v) {
          const T p = T(1) / (T(1) + std::exp(-x));
          x = std::min(hi, std::max(lo, p));
        }
        return in;
      }
    }
    throw BuildError("unknown layer kind");
  }

  static detail::Act<T> conv_forward(const LayerSpec& spec,
                                     const LayerParams<T>& p,
                                     const detail::Act<T>& in,
                                     const ActShape& out_shape) {
    const int ic = in.shape.c, ih = in.shape.h, iw = in.shape.w;
    const int oc = out_shape.c, oh = out_shape.h, ow = out_shape.w;
    const int k = spec.kernel, st = spec.stride, pad = spec.pad;
    const int patch_len = ic * k * k;

    detail::MatX<T> cols(patch_len, oh * ow);
    im2col(in, k, st, pad, oh, ow, cols);

    detail::Act<T> out = detail::Act<T>::make(out_shape);
    Eigen::Map<const detail::MatX<T>> W(p.weights.data(), oc, patch_len);
    Eigen::Map<detail::MatX<T>> O(out.v.data(), oc, oh * ow);
    O.noalias() = W * cols;
    for (int f = 0; f < oc; ++f) O.row(f).array() += p.bias[f];
    return out;
  }

  static void im2col(const detail::Act<T>& in, int k, int st, int pad, int oh,
                     int ow, detail::MatX<T>& cols) {
    const int ic = in.shape.c, ih = in.shape.h, iw = in.shape.w;
    cols.setZero();
    for (int c = 0; c < ic; ++c) {
      const T* plane = in.v.data() + static_cast<std::size_t>(c) * ih * iw;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int row = (c * k + ky) * k + kx;
          for (int y = 0; y < oh; ++y) {
            const int sy = y * st - pad + ky;
            if (sy < 0 || sy >= ih) continue;
            const T* src = plane + static_cast<std::size_t>(sy) * iw;
            T* dst = cols.data() + static_cast<std::size_t>(row) * (oh * ow) +
                     static_cast<std::size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) {
              const int sx = x * st - pad + kx;
              if (sx >= 0 && sx < iw) dst[x] = src[sx];
            }
          }
        }
      }
    }
  }

  static void col2im(const detail::MatX<T>& cols, int k, int st, int pad,
                     int oh, int ow, detail::Act<T>& din) {
    const int ic = din.shape.c, ih = din.shape.h, iw = din.shape.w;
    for (int c = 0; c < ic; ++c) {
      T* plane = din.v.data() + static_cast<std::size_t>(c) * ih * iw;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int row = (c * k + ky) * k + kx;
          for (int y = 0; y < oh; ++y) {
            const int sy = y * st - pad + ky;
            if (sy < 0 || sy >= ih) continue;
            T* dst = plane + static_cast<std::size_t>(sy) * iw;
            const T* src = cols.data() +
                           static_cast<std::size_t>(row) * (oh * ow) +
                           static_cast<std::size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) {
              const int sx = x * st - pad + kx;
              if (sx >= 0 && sx < iw) dst[sx] += src[x];
            }
          }
        }
      }
    }
  }

  static detail::Act<T> maxpool_forward(const LayerSpec& spec,
                                        const detail::Act<T>& in,
                                        const ActShape& out_shape,
                                        std::vector<int>* argmax) {
    const int c = in.shape.c, ih = in.shape.h, iw = in.shape.w;
    const int oh = out_shape.h, ow = out_shape.w, p = spec.pool;
    detail::Act<T> out = detail::Act<T>::make(out_shape);
    if (argmax) argmax->assign(out.v.size(), 0);
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          int best_idx = ((ch * ih) + y * p) * iw + x * p;
          T best = in.v[static_cast<std::size_t>(best_idx)];
          for (int dy = 0; dy < p; ++dy) {
            for (int dx = 0; dx < p; ++dx) {
              const int idx = ((ch * ih) + y * p + dy) * iw + x * p + dx;
              const T v = in.v[static_cast<std::size_t>(idx)];
              if (v > best) {
                best = v;
                best_idx = idx;
              }
            }
          }
          const int o = (ch * oh + y) * ow + x;
          out.v[static_cast<std::size_t>(o)] = best;
          if (argmax) (*argmax)[static_cast<std::size_t>(o)] = best_idx;
        }
      }
    }
    return out;
  }

  // Max-pool the feature maps onto each fixed grid and concatenate
  // (grid-major, then channel, then row-major cells).
  static detail::Act<T> mspool_forward(const LayerSpec& spec,
                                       const detail::Act<T>& in,
                                       const ActShape& out_shape,
                                       std::vector<int>* argmax) {
    const int c = in.shape.c, ih = in.shape.h, iw = in.shape.w;
    detail::Act<T> out = detail::Act<T>::make(out_shape);
    if (argmax) argmax->assign(out.v.size(), 0);
    std::size_t o = 0;
    for (int g : spec.grids) {
      for (int ch = 0; ch < c; ++ch) {
        for (int by = 0; by < g; ++by) {
          const int y0 = detail::ms_bin_start(by, g, ih);
          const int y1 = detail::ms_bin_end(by, g, ih);
          for (int bx = 0; bx < g; ++bx) {
            const int x0 = detail::ms_bin_start(bx, g, iw);
            const int x1 = detail::ms_bin_end(bx, g, iw);
            int best_idx = (ch * ih + y0) * iw + x0;
            T best = in.v[static_cast<std::size_t>(best_idx)];
            for (int y = y0; y < y1; ++y) {
              for (int x = x0; x < x1; ++x) {
                const int idx = (ch * ih + y) * iw + x;
                const T v = in.v[static_cast<std::size_t>(idx)];
                if (v > best) {
                  best = v;
                  best_idx = idx;
                }
              }
            }
            out.v[o] = best;
            if (argmax) (*argmax)[o] = best_idx;
            ++o;
          }
        }
      }
    }
    return out;
  }

  static detail::Act<T> fc_forward(const LayerParams<T>& p,
                                   const detail::Act<T>& in,
                                   const ActShape& out_shape) {
    const int n_in = in.shape.count();
    const int n_out = out_shape.flat_len;
    detail::Act<T> out = detail::Act<T>::make(out_shape);
    Eigen::Map<const detail::MatX<T>> W(p.weights.data(), n_out, n_in);
    Eigen::Map<const detail::VecX<T>> x(in.v.data(), n_in);
    Eigen::Map<const detail::VecX<T>> b(p.bias.data(), n_out);
    Eigen::Map<detail::VecX<T>> y(out.v.data(), n_out);
    y.noalias() = W * x + b;
    return out;
  }

  detail::Act<T> dropout_forward(const LayerSpec& spec, detail::Act<T> in,
                                 std::vector<T>* mask) {
    // Inference (mask == nullptr) and rate 0 are the identity; inverted
    // scaling at train time means no rescale at inference.
    if (!mask || spec.drop_rate == 0.0f) return in;
    const float keep = 1.0f - spec.drop_rate;
    const T scale = T(1) / static_cast<T>(keep);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    mask->resize(in.v.size());
    for (std::size_t k = 0; k < in.v.size(); ++k) {
      const T m = u(rng_) < keep ? scale : T(0);
      (*mask)[k] = m;
      in.v[k] *= m;
    }
    return in;
  }

  void backward_item(const ItemCache& cache, std::vector<T> delta,
                     std::vector<LayerParams<T>>& grads) const {
    for (std::size_t ri = cfg_.layers.size(); ri-- > 0;) {
      const LayerSpec& spec = cfg_.layers[ri];
      const detail::Act<T>& in = cache.inputs[ri];
      switch (spec.kind) {
        case LayerKind::SigmoidMap:
          // fused with the cross-entropy loss: delta already holds dL/dz
          break;
        case LayerKind::FullyConnected: {
          const int n_in = in.shape.count();
          const int n_out = static_cast<int>(delta.size());
          Eigen::Map<const detail::VecX<T>> dz(delta.data(), n_out);
          Eigen::Map<const detail::VecX<T>> x(in.v.data(), n_in);
          Eigen::Map<detail::MatX<T>> dW(grads[ri].weights.data(), n_out, n_in);
          Eigen::Map<detail::VecX<T>> db(grads[ri].bias.data(), n_out);
          dW.noalias() += dz * x.transpose();
          db.noalias() += dz;
          Eigen::Map<const detail::MatX<T>> W(params_[ri].weights.data(), n_out,
                                              n_in);
          std::vector<T> dx(static_cast<std::size_t>(n_in));
          Eigen::Map<detail::VecX<T>> dxm(dx.data(), n_in);
          dxm.noalias() = W.transpose() * dz;
          delta = std::move(dx);
          break;
        }
        case LayerKind::Dropout: {
          const auto& mask = cache.mask[ri];
          if (!mask.empty())
            for (std::size_t k = 0; k < delta.size(); ++k) delta[k] *= mask[k];
          break;
        }
        case LayerKind::MultiscalePool:
        case LayerKind::MaxPool: {
          const auto& argmax = cache.argmax[ri];
          std::vector<T> dx(in.v.size(), T(0));
          for (std::size_t k = 0; k < delta.size(); ++k)
            dx[static_cast<std::size_t>(argmax[k])] += delta[k];
          delta = std::move(dx);
          break;
        }
        case LayerKind::Relu: {
          for (std::size_t k = 0; k < delta.size(); ++k)
            if (in.v[k] <= T(0)) delta[k] = T(0);
          break;
        }
        case LayerKind::Conv: {
          delta = conv_backward(spec, params_[ri], in, shapes_[ri], delta,
                                grads[ri]);
          break;
        }
      }
    }
  }

  static std::vector<T> conv_backward(const LayerSpec& spec,
                                      const LayerParams<T>& p,
                                      const detail::Act<T>& in,
                                      const ActShape& out_shape,
                                      const std::vector<T>& delta,
                                      LayerParams<T>& grad) {
    const int ic = in.shape.c;
    const int oc = out_shape.c, oh = out_shape.h, ow = out_shape.w;
    const int k = spec.kernel, st = spec.stride, pad = spec.pad;
    const int patch_len = ic * k * k;

    detail::MatX<T> cols(patch_len, oh * ow);
    im2col(in, k, st, pad, oh, ow, cols);

    Eigen::Map<const detail::MatX<T>> dO(delta.data(), oc, oh * ow);
    Eigen::Map<detail::MatX<T>> dW(grad.weights.data(), oc, patch_len);
    dW.noalias() += dO * cols.transpose();
    for (int f = 0; f < oc; ++f) grad.bias[f] += dO.row(f).sum();

    Eigen::Map<const detail::MatX<T>> W(p.weights.data(), oc, patch_len);
    detail::MatX<T> dcols(patch_len, oh * ow);
    dcols.noalias() = W.transpose() * dO;

    detail::Act<T> din = detail::Act<T>::make(in.shape);
    col2im(dcols, k, st, pad, oh, ow, din);
    return std::move(din.v);
  }

  NetConfig cfg_;
  std::vector<ActShape> shapes_;
  std::vector<LayerParams<T>> params_;
  std::vector<LayerParams<T>> momentum_;
  Rng rng_;
  std::vector<ItemCache> cache_;
  bool cache_valid_ = false;
};

using Network = BasicNetwork<float>;

/// Validates the layer chain and returns a parameter-initialized network.
/// Identical seeds give bit-identical parameters.
inline Network build_network(const NetConfig& cfg, std::uint64_t seed) {
  return Network(cfg, seed);
}

/// Mean (over the batch) of the per-item summed cross-entropy.
inline double batch_map_loss(const std::vector<ProbabilityMap>& preds,
                             const std::vector<TargetMap>& targets) {
  if (preds.size() != targets.size() || preds.empty())
    throw DimensionError("batch_map_loss: size mismatch or empty batch");
  double total = 0.0;
  for (std::size_t b = 0; b < preds.size(); ++b)
    total += map_loss(preds[b], targets[b]);
  return total / static_cast<double>(preds.size());
}

/// Compares analytic gradients against central finite differences on a
/// 64-bit shadow copy (dropout disabled). Returns the maximum relative
/// error max |a-n| / max(|a|, |n|, 1e-8) over every parameter.
inline double grad_check(const Network& net, const Frame& patch,
                         const TargetMap& target, double eps = 1e-3) {
  BasicNetwork<double> shadow(net);
  shadow.set_dropout_rate(0.0f);

  const Frame batch[1] = {patch};
  shadow.forward_values(std::span<const Frame>(batch, 1), ForwardMode::Train);
  const auto analytic = shadow.backward({target});

  auto loss_at = [&]() {
    auto v = shadow.forward_values(std::span<const Frame>(batch, 1),
                                   ForwardMode::Infer);
    double loss = 0.0;
    for (std::size_t k = 0; k < v[0].size(); ++k) {
      loss -= target.values[k] ? std::log(v[0][k]) : std::log1p(-v[0][k]);
    }
    return loss;
  };

  double max_rel = 0.0;
  for (std::size_t i = 0; i < shadow.layer_count(); ++i) {
    auto check_array = [&](std::vector<double>& w,
                           const std::vector<double>& a) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double orig = w[k];
        w[k] = orig + eps;
        const double lp = loss_at();
        w[k] = orig - eps;
        const double lm = loss_at();
        w[k] = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double denom =
            std::max({std::abs(a[k]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a[k] - numeric) / denom);
      }
    };
    check_array(shadow.layer_params_mut(i).weights, analytic[i].weights);
    check_array(shadow.layer_params_mut(i).bias, analytic[i].bias);
  }
  return max_rel;
}

}  // namespace sot

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sot/common.hpp"

namespace sot {

enum class LayerKind : std::uint32_t {
  Conv = 1,
  Relu = 2,
  MaxPool = 3,
  MultiscalePool = 4,
  FullyConnected = 5,
  Dropout = 6,
  SigmoidMap = 7,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::MultiscalePool: return "multiscale-pool";
    case LayerKind::FullyConnected: return "fully-connected";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::SigmoidMap: return "sigmoid-map";
  }
  return "?";
}

/// One layer of the stack. Only the fields for the layer's kind are
/// meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int filters = 0;          // conv: output channels
  int kernel = 0;           // conv: square kernel side
  int stride = 1;           // conv
  int pad = 0;              // conv: zero padding
  int pool = 2;             // maxpool: window and step
  std::vector<int> grids;   // multiscale-pool: fixed output grids
  int width = 0;            // fully-connected: output width
  float drop_rate = 0.0f;   // dropout

  static LayerSpec conv(int filters, int kernel, int stride = 1, int pad = 0) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  static LayerSpec relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
  }
  static LayerSpec maxpool(int pool = 2) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.pool = pool;
    return s;
  }
  static LayerSpec multiscale_pool(std::vector<int> grids) {
    LayerSpec s;
    s.kind = LayerKind::MultiscalePool;
    s.grids = std::move(grids);
    return s;
  }
  static LayerSpec fully_connected(int width) {
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.width = width;
    return s;
  }
  static LayerSpec dropout(float rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.drop_rate = rate;
    return s;
  }
  static LayerSpec sigmoid_map() {
    LayerSpec s;
    s.kind = LayerKind::SigmoidMap;
    return s;
  }

  bool operator==(const LayerSpec&) const = default;
};

/// Activation shape flowing between layers: spatial (c, h, w) until a
/// flattening layer, then a flat vector of `len` values.
struct ActShape {
  bool flat = false;
  int c = 0, h = 0, w = 0;
  int flat_len = 0;

  int count() const { return flat ? flat_len : c * h * w; }

  std::string str() const {
    if (flat) return "flat[" + std::to_string(flat_len) + "]";
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Shape of the activation a layer produces for the given input shape.
/// Throws BuildError naming the layer when the input is incompatible.
inline ActShape layer_output_shape(const LayerSpec& spec, const ActShape& in,
                                   int layer_index) {
  auto fail = [&](const std::string& why) -> ActShape {
    throw BuildError("layer " + std::to_string(layer_index) + " (" +
                     layer_kind_name(spec.kind) + "): " + why +
                     " (input " + in.str() + ")");
  };
  switch (spec.kind) {
    case LayerKind::Conv: {
      if (in.flat) return fail("needs a spatial input");
      if (spec.filters < 1 || spec.kernel < 1 || spec.stride < 1 || spec.pad < 0)
        return fail("bad conv parameters");
      const int h = (in.h + 2 * spec.pad - spec.kernel) / spec.stride + 1;
      const int w = (in.w + 2 * spec.pad - spec.kernel) / spec.stride + 1;
      if (in.h + 2 * spec.pad < spec.kernel || in.w + 2 * spec.pad < spec.kernel)
        return fail("kernel larger than padded input");
      return {false, spec.filters, h, w, 0};
    }
    case LayerKind::Relu:
      return in;
    case LayerKind::MaxPool: {
      if (in.flat) return fail("needs a spatial input");
      if (spec.pool < 1) return fail("bad pool size");
      const int h = in.h / spec.pool;
      const int w = in.w / spec.pool;
      if (h < 1 || w < 1) return fail("input smaller than pool window");
      return {false, in.c, h, w, 0};
    }
    case LayerKind::MultiscalePool: {
      if (in.flat) return fail("needs a spatial input");
      if (spec.grids.empty()) return fail("empty grid set");
      int cells = 0;
      for (int g : spec.grids) {
        if (g < 1) return fail("bad grid size");
        cells += g * g;
      }
      return {true, 0, 0, 0, in.c * cells};
    }
    case LayerKind::FullyConnected: {
      if (spec.width < 1) return fail("bad output width");
      return {true, 0, 0, 0, spec.width};
    }
    case LayerKind::Dropout: {
      if (spec.drop_rate < 0.0f || spec.drop_rate >= 1.0f)
        return fail("drop rate outside [0,1)");
      return in;
    }
    case LayerKind::SigmoidMap:
      if (!in.flat) return fail("needs a flat input");
      return in;
  }
  return fail("unknown layer kind");
}

/// Architecture description: the layer stack plus the map/input geometry.
struct NetConfig {
  std::vector<LayerSpec> layers;
  int map_size = 25;    // S
  int stride = 2;       // r; input side = S * r
  int in_channels = 3;

  int input_side() const { return map_size * stride; }

  /// Validates the chain and returns per-layer output shapes (layers.size()
  /// entries). Checks the final layer is sigmoid-map of length S*S.
  std::vector<ActShape> validate() const {
    if (layers.empty()) throw BuildError("empty layer stack");
    if (map_size < 1 || stride < 1 || (in_channels != 1 && in_channels != 3))
      throw BuildError("bad map size / stride / channel count");
    std::vector<ActShape> shapes;
    ActShape cur{false, in_channels, input_side(), input_side(), 0};
    for (std::size_t i = 0; i < layers.size(); ++i) {
      cur = layer_output_shape(layers[i], cur, static_cast<int>(i));
      shapes.push_back(cur);
    }
    const ActShape& last = shapes.back();
    if (layers.back().kind != LayerKind::SigmoidMap || !last.flat ||
        last.flat_len != map_size * map_size) {
      throw BuildError("final layer must be sigmoid-map with output length " +
                       std::to_string(map_size * map_size) + ", got " +
                       last.str());
    }
    return shapes;
  }

  /// Desk-scale default: trainable on a CPU in minutes.
  /// 3x [conv 16f 5x5 s1 p2 -> relu -> maxpool 2] -> multiscale {1,2,4}
  /// -> fc 512 -> dropout 0.5 -> fc S^2 -> sigmoid-map.
  static NetConfig desk_default(int map_size = 25, int stride = 2,
                                int in_channels = 3) {
    NetConfig cfg;
    cfg.map_size = map_size;
    cfg.stride = stride;
    cfg.in_channels = in_channels;
    for (int i = 0; i < 3; ++i) {
      cfg.layers.push_back(LayerSpec::conv(16, 5, 1, 2));
      cfg.layers.push_back(LayerSpec::relu());
      cfg.layers.push_back(LayerSpec::maxpool(2));
    }
    cfg.layers.push_back(LayerSpec::multiscale_pool({1, 2, 4}));
    cfg.layers.push_back(LayerSpec::fully_connected(512));
    cfg.layers.push_back(LayerSpec::dropout(0.5f));
    cfg.layers.push_back(LayerSpec::fully_connected(map_size * map_size));
    cfg.layers.push_back(LayerSpec::sigmoid_map());
    return cfg;
  }

  /// Small net for gradient checking (~1.4k parameters, S = 6).
  static NetConfig tiny(int map_size = 6, int stride = 2, int in_channels = 3) {
    NetConfig cfg;
    cfg.map_size = map_size;
    cfg.stride = stride;
    cfg.in_channels = in_channels;
    cfg.layers.push_back(LayerSpec::conv(4, 3, 1, 1));
    cfg.layers.push_back(LayerSpec::relu());
    cfg.layers.push_back(LayerSpec::maxpool(2));
    cfg.layers.push_back(LayerSpec::conv(6, 3, 1, 1));
    cfg.layers.push_back(LayerSpec::relu());
    cfg.layers.push_back(LayerSpec::maxpool(2));
    cfg.layers.push_back(LayerSpec::multiscale_pool({1, 2}));
    cfg.layers.push_back(LayerSpec::fully_connected(16));
    cfg.layers.push_back(LayerSpec::dropout(0.5f));
    cfg.layers.push_back(LayerSpec::fully_connected(map_size * map_size));
    cfg.layers.push_back(LayerSpec::sigmoid_map());
    return cfg;
  }

  bool operator==(const NetConfig&) const = default;
};

}  // namespace sot

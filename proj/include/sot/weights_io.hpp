#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sot/common.hpp"
#include "sot/layers.hpp"
#include "sot/net.hpp"

namespace sot {

// Weight file: little-endian binary, no padding.
//   magic "SODL" | u32 version=1 | u32 layer count | per layer:
//   u32 kind tag | u32 rank | u32 dims[rank] | f32 data
// conv stores rank 4 (out,in,kh,kw), fully-connected rank 2 (out,in); data is
// the weight tensor row-major immediately followed by the bias vector
// (dims[0] entries). Parameterless layers store rank 0 and no data.
// Structural parameters (stride, pad, pool, grids, rates, S, r) live in the
// architecture config, which the loader validates against.

static_assert(std::endian::native == std::endian::little,
              "weight file I/O assumes a little-endian host");

inline constexpr char kWeightMagic[4] = {'S', 'O', 'D', 'L'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError(path + ": cannot open");
  }

  std::size_t offset() const { return offset_; }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw IoError(path_ + ": truncated at byte offset " +
                    std::to_string(offset_));
    }
    offset_ += n;
  }

  std::uint32_t read_u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }

  [[noreturn]] void fail(const std::string& why, std::size_t at) const {
    throw IoError(path_ + ": " + why + " at byte offset " + std::to_string(at));
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

inline std::uint32_t weight_rank(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv: return 4;
    case LayerKind::FullyConnected: return 2;
    default: return 0;
  }
}

}  // namespace detail

inline void save_weights(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };

  out.write(kWeightMagic, 4);
  put_u32(kWeightVersion);
  const auto& cfg = net.config();
  put_u32(static_cast<std::uint32_t>(cfg.layers.size()));
  const auto shapes = cfg.validate();
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& spec = cfg.layers[i];
    put_u32(static_cast<std::uint32_t>(spec.kind));
    const std::uint32_t rank = detail::weight_rank(spec);
    put_u32(rank);
    const ActShape in = i == 0 ? ActShape{false, cfg.in_channels,
                                          cfg.input_side(), cfg.input_side(), 0}
                               : shapes[i - 1];
    if (spec.kind == LayerKind::Conv) {
      put_u32(static_cast<std::uint32_t>(spec.filters));
      put_u32(static_cast<std::uint32_t>(in.c));
      put_u32(static_cast<std::uint32_t>(spec.kernel));
      put_u32(static_cast<std::uint32_t>(spec.kernel));
    } else if (spec.kind == LayerKind::FullyConnected) {
      put_u32(static_cast<std::uint32_t>(spec.width));
      put_u32(static_cast<std::uint32_t>(in.count()));
    }
    const auto& p = net.layer_params(i);
    if (rank > 0) {
      out.write(reinterpret_cast<const char*>(p.weights.data()),
                static_cast<std::streamsize>(p.weights.size() * 4));
      out.write(reinterpret_cast<const char*>(p.bias.data()),
                static_cast<std::streamsize>(p.bias.size() * 4));
    }
  }
  if (!out) throw IoError(path + ": write failed");
}

/// Loads parameters saved by save_weights into a freshly built network with
/// the given architecture. The file's kinds and dims must match the config.
inline Network load_weights(const std::string& path, const NetConfig& cfg,
                            std::uint64_t seed = 0) {
  Network net = build_network(cfg, seed);
  detail::ByteReader r(path);

  char magic[4];
  std::size_t at = r.offset();
  r.read(magic, 4);
  if (std::memcmp(magic, kWeightMagic, 4) != 0) r.fail("bad magic", at);

  at = r.offset();
  const std::uint32_t version = r.read_u32();
  if (version != kWeightVersion) {
    r.fail("unsupported version " + std::to_string(version) + " (want " +
               std::to_string(kWeightVersion) + ")",
           at);
  }

  at = r.offset();
  const std::uint32_t n_layers = r.read_u32();
  if (n_layers != cfg.layers.size()) {
    r.fail("layer count " + std::to_string(n_layers) + ", config has " +
               std::to_string(cfg.layers.size()),
           at);
  }

  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& spec = cfg.layers[i];
    at = r.offset();
    const std::uint32_t kind = r.read_u32();
    if (kind != static_cast<std::uint32_t>(spec.kind)) {
      r.fail("layer " + std::to_string(i) + " kind tag " +
                 std::to_string(kind) + ", config expects " +
                 layer_kind_name(spec.kind),
             at);
    }
    at = r.offset();
    const std::uint32_t rank = r.read_u32();
    const std::uint32_t want_rank = detail::weight_rank(spec);
    if (rank != want_rank) {
      r.fail("layer " + std::to_string(i) + " rank " + std::to_string(rank) +
                 ", expected " + std::to_string(want_rank),
             at);
    }
    if (rank == 0) continue;
    std::vector<std::uint32_t> dims(rank);
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      at = r.offset();
      dims[d] = r.read_u32();
      count *= dims[d];
    }
    auto& p = net.layer_params_mut(i);
    if (count != p.weights.size() || dims[0] != p.bias.size()) {
      r.fail("layer " + std::to_string(i) + " dims do not match the config (" +
                 std::to_string(count) + " weights, config expects " +
                 std::to_string(p.weights.size()) + ")",
             at);
    }
    r.read(p.weights.data(), p.weights.size() * 4);
    r.read(p.bias.data(), p.bias.size() * 4);
  }
  return net;
}

}  // namespace sot

#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "axialvig/blocks.hpp"
#include "axialvig/gvt.hpp"

namespace axialvig::model {

struct StageConfig {
  Index channels = 0;
  int mbconv_repeats = 0;
  int dagc_repeats = 0;
  int k = 1;  // axial hop distance
};

struct ModelConfig {
  std::string name;
  std::array<StageConfig, 4> stages;
  Index classes = 1000;
  Index resolution = 224;

  void validate() const;
};

// Predefined configurations: "S", "M", "B", "toy" (full names accepted).
ModelConfig predefined(const std::string& name);

// Plain-text key-value serialization, `stage1.channels = 48` style.
std::string format_config(const ModelConfig& config);
ModelConfig parse_config(std::istream& in);
ModelConfig parse_config_file(const std::string& path);

// stem + all blocks + 3 downsamples + head
inline int unit_count(const ModelConfig& config) {
  int units = 1 + 3 + 1;
  for (const auto& s : config.stages)
    units += s.mbconv_repeats + s.dagc_repeats;
  return units;
}

template <typename S>
struct DagcBlockParams {
  blocks::GrapherParams<S> grapher;
  blocks::FFNParams<S> ffn;
};

template <typename S>
struct StageParams {
  std::vector<blocks::MBConvParams<S>> mbconvs;
  std::vector<DagcBlockParams<S>> dagcs;
};

template <typename S>
struct Model {
  ModelConfig config;
  blocks::StemParams<S> stem;
  std::array<StageParams<S>, 4> stages;
  std::array<blocks::DownsampleParams<S>, 3> downsamples;
  blocks::HeadParams<S> head;
};

// Deterministic build: one SplitMix64 stream consumed in depth-first block
// order, so equal seeds give bit-identical weights.
template <typename S>
Model<S> build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model<S> m;
  m.config = config;
  SplitMix64 rng(seed);
  m.stem = blocks::make_stem<S>(rng, config.stages[0].channels);
  for (int i = 0; i < 4; ++i) {
    const StageConfig& sc = config.stages[static_cast<std::size_t>(i)];
    auto& stage = m.stages[static_cast<std::size_t>(i)];
    for (int r = 0; r < sc.mbconv_repeats; ++r)
      stage.mbconvs.push_back(blocks::make_mbconv<S>(rng, sc.channels));
    for (int r = 0; r < sc.dagc_repeats; ++r)
      stage.dagcs.push_back(
          DagcBlockParams<S>{blocks::make_grapher<S>(rng, sc.channels, sc.k),
                             blocks::make_ffn<S>(rng, sc.channels)});
    if (i < 3)
      m.downsamples[static_cast<std::size_t>(i)] = blocks::make_downsample<S>(
          rng, sc.channels, config.stages[static_cast<std::size_t>(i + 1)].channels);
  }
  m.head = blocks::make_head<S>(rng, config.stages[3].channels, config.classes);
  return m;
}

template <typename S>
struct ForwardResult {
  Tensor<S> logits;                      // (N, classes)
  std::array<Index, 4> stage_extents{};  // spatial extent entering each stage
};

template <typename S>
ForwardResult<S> forward_traced(const Model<S>& m, const Tensor<S>& images) {
  const Index res = m.config.resolution;
  if (images.rank() != 4 || images.c() != 3 || images.h() != res ||
      images.w() != res)
    throw ShapeError("forward: expected input shape (N,3," +
                     std::to_string(res) + "," + std::to_string(res) +
                     "), got " + images.shape().str());
  blocks::EagerEngine<S> e;
  ForwardResult<S> result;
  Tensor<S> t = blocks::stem(images, m.stem);
  for (int i = 0; i < 4; ++i) {
    result.stage_extents[static_cast<std::size_t>(i)] = t.h();
    const auto& stage = m.stages[static_cast<std::size_t>(i)];
    for (const auto& mb : stage.mbconvs) t = blocks::mbconv(e, t, mb);
    for (const auto& db : stage.dagcs)
      t = blocks::dagc_block(e, t, db.grapher, db.ffn);
    if (i < 3) t = blocks::downsample(t, m.downsamples[static_cast<std::size_t>(i)]);
  }
  result.logits = blocks::head(t, m.head);
  return result;
}

template <typename S>
Tensor<S> forward(const Model<S>& m, const Tensor<S>& images) {
  return forward_traced(m, images).logits;
}

enum class TensorKind { param, buffer };

namespace detail {

template <typename S, typename F>
void visit_conv(ops::ConvParams<S>& p, const std::string& name, F&& f) {
  f(name + ".weight", p.weight, TensorKind::param);
  if (p.bias) f(name + ".bias", *p.bias, TensorKind::param);
}

template <typename S, typename F>
void visit_bn(ops::BatchNormParams<S>& p, const std::string& name, F&& f) {
  f(name + ".gamma", p.gamma, TensorKind::param);
  f(name + ".beta", p.beta, TensorKind::param);
  f(name + ".running_mean", p.running_mean, TensorKind::buffer);
  f(name + ".running_var", p.running_var, TensorKind::buffer);
}

template <typename S, typename F>
void visit_conv_bn(blocks::ConvBn<S>& p, const std::string& name, F&& f) {
  visit_conv(p.conv, name, f);
  visit_bn(p.bn, name + ".bn", f);
}

}  // namespace detail

// Canonical depth-first traversal of every tensor in the model; the order
// defines the weight-container manifest.
template <typename S, typename F>
void for_each_tensor(Model<S>& m, F&& f) {
  using namespace detail;
  visit_conv_bn(m.stem.conv1, "stem.conv1", f);
  visit_conv_bn(m.stem.conv2, "stem.conv2", f);
  for (int i = 0; i < 4; ++i) {
    const std::string sp = "stage" + std::to_string(i + 1) + ".";
    auto& stage = m.stages[static_cast<std::size_t>(i)];
    for (std::size_t r = 0; r < stage.mbconvs.size(); ++r) {
      const std::string bp = sp + "mbconv" + std::to_string(r) + ".";
      visit_conv_bn(stage.mbconvs[r].expand, bp + "expand", f);
      visit_conv_bn(stage.mbconvs[r].dw, bp + "dw", f);
      visit_conv_bn(stage.mbconvs[r].project, bp + "project", f);
    }
    for (std::size_t r = 0; r < stage.dagcs.size(); ++r) {
      const std::string bp = sp + "dagc" + std::to_string(r) + ".";
      visit_conv(stage.dagcs[r].grapher.cpe, bp + "grapher.cpe", f);
      visit_conv_bn(stage.dagcs[r].grapher.w_in, bp + "grapher.w_in", f);
      visit_conv_bn(stage.dagcs[r].grapher.dyn_out, bp + "grapher.dyn_out", f);
      visit_conv_bn(stage.dagcs[r].grapher.w_out, bp + "grapher.w_out", f);
      visit_conv_bn(stage.dagcs[r].ffn.w1, bp + "ffn.w1", f);
      visit_conv_bn(stage.dagcs[r].ffn.w2, bp + "ffn.w2", f);
    }
    if (i < 3)
      visit_conv_bn(m.downsamples[static_cast<std::size_t>(i)].conv,
                    "downsample" + std::to_string(i + 1), f);
  }
  visit_conv(m.head.fc1, "head.fc1", f);
  visit_conv(m.head.fc2, "head.fc2", f);
}

template <typename S, typename F>
void for_each_tensor(const Model<S>& m, F&& f) {
  for_each_tensor(const_cast<Model<S>&>(m),
                  [&](const std::string& name, Tensor<S>& t, TensorKind kind) {
                    f(name, static_cast<const Tensor<S>&>(t), kind);
                  });
}

// Element count over parameter tensors (BN running statistics are buffers).
template <typename S>
std::int64_t instantiated_param_count(const Model<S>& m) {
  std::int64_t total = 0;
  for_each_tensor(m, [&](const std::string&, const Tensor<S>& t, TensorKind k) {
    if (k == TensorKind::param) total += t.numel();
  });
  return total;
}

// Weight container: "GVTC", u32 version, u64 entry count, then per tensor a
// u32 name length, the name bytes, and a full GVT record. Entries follow the
// canonical manifest order.
inline constexpr char kWeightsMagic[4] = {'G', 'V', 'T', 'C'};
inline constexpr std::uint32_t kWeightsVersion = 1;

template <typename S>
void save_weights(const Model<S>& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("weights: cannot open " + path + " for writing");
  std::uint64_t count = 0;
  for_each_tensor(m, [&](const std::string&, const Tensor<S>&, TensorKind) {
    ++count;
  });
  gvt::detail::put_bytes(os, kWeightsMagic, 4);
  gvt::detail::put_u32(os, kWeightsVersion);
  gvt::detail::put_u64(os, count);
  for_each_tensor(m, [&](const std::string& name, const Tensor<S>& t,
                         TensorKind) {
    gvt::detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    gvt::detail::put_bytes(os, name.data(), name.size());
    gvt::write(os, t);
  });
  if (!os) throw FormatError("weights: write failed for " + path);
}

// Loads a container into a freshly built skeleton, checking every entry's
// name, order, and shape against the config before any tensor is kept.
template <typename S>
Model<S> load_weights(const ModelConfig& config, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("weights: cannot open " + path);
  char magic[4];
  gvt::detail::get_bytes(is, magic, 4, "weights magic");
  if (std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw FormatError("weights: bad magic bytes in " + path);
  const std::uint32_t version = gvt::detail::get_u32(is, "weights version");
  if (version != kWeightsVersion)
    throw FormatError("weights: unsupported version " +
                      std::to_string(version));
  const std::uint64_t count = gvt::detail::get_u64(is, "weights entry count");

  Model<S> m = build<S>(config, 0);
  std::uint64_t expected = 0;
  for_each_tensor(m, [&](const std::string&, const Tensor<S>&, TensorKind) {
    ++expected;
  });
  if (count != expected)
    throw FormatError("weights: container holds " + std::to_string(count) +
                      " tensors, config expects " + std::to_string(expected));

  for_each_tensor(m, [&](const std::string& name, Tensor<S>& t, TensorKind) {
    const std::uint32_t len = gvt::detail::get_u32(is, "entry name length");
    std::string got(len, '\0');
    gvt::detail::get_bytes(is, got.data(), len, "entry name");
    if (got != name)
      throw FormatError("weights: manifest order mismatch: expected '" + name +
                        "', found '" + got + "'");
    Tensor<S> loaded = gvt::read<S>(is);
    if (loaded.shape() != t.shape())
      throw FormatError("weights: shape mismatch for '" + name + "': file " +
                        loaded.shape().str() + ", config " + t.shape().str());
    t = std::move(loaded);
  });
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("weights: trailing bytes after last entry in " + path);
  return m;
}

}  // namespace axialvig::model

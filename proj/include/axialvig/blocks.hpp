#pragma once

#include <optional>
#include <string>
#include <unordered_map>

#include "axialvig/autodiff.hpp"
#include "axialvig/graph.hpp"
#include "axialvig/ops.hpp"
#include "axialvig/rng.hpp"

namespace axialvig::blocks {

template <typename S>
struct ConvBn {
  ops::ConvParams<S> conv;
  ops::BatchNormParams<S> bn;
};

// Eq. 1 weights: CPE depthwise 3x3, W_in 1x1 C->C, the concat conv 2C->C,
// W_out 1x1 C->C, each 1x1 followed by BN.
template <typename S>
struct GrapherParams {
  ops::ConvParams<S> cpe;  // depthwise 3x3, pad 1
  ConvBn<S> w_in;          // 1x1 C->C
  ConvBn<S> dyn_out;       // 1x1 2C->C over Concat(X, X_final)
  ConvBn<S> w_out;         // 1x1 C->C
  int k = 1;
};

template <typename S>
struct FFNParams {
  ConvBn<S> w1;  // 1x1 C->rC
  ConvBn<S> w2;  // 1x1 rC->C
  int expansion = 4;
};

template <typename S>
struct MBConvParams {
  ConvBn<S> expand;   // 1x1 C->eC
  ConvBn<S> dw;       // depthwise 3x3 eC->eC, pad 1
  ConvBn<S> project;  // 1x1 eC->C
  int expansion = 4;
};

template <typename S>
struct StemParams {
  ConvBn<S> conv1;  // 3x3 stride 2, 3 -> C1/2
  ConvBn<S> conv2;  // 3x3 stride 2, C1/2 -> C1
};

template <typename S>
struct DownsampleParams {
  ConvBn<S> conv;  // 3x3 stride 2, Ci -> Ci+1, no activation
};

template <typename S>
struct HeadParams {
  ops::ConvParams<S> fc1;  // 1x1 C4 -> 4*C4
  ops::ConvParams<S> fc2;  // 1x1 4*C4 -> classes
};

// ---------------------------------------------------------------------------
// Evaluation engines. Block bodies are written once against this interface
// and instantiated either eagerly (inference) or onto a Tape (gradient
// checks). The tape engine freezes DAGC masks as recorded constants, so
// differentiation and finite-difference replay both treat them as fixed.

template <typename S>
class EagerEngine {
 public:
  using Scalar = S;
  using Value = Tensor<S>;

  Value input(const Tensor<S>& t, const std::string& = {}) { return t; }

  Value conv2d(const Value& x, const ops::ConvParams<S>& p,
               const std::string& = {}) {
    return ops::conv2d(x, p);
  }
  Value batch_norm(const Value& x, const ops::BatchNormParams<S>& p,
                   const std::string& = {}) {
    return ops::batch_norm(x, p);
  }
  Value gelu(const Value& x) { return ops::gelu(x); }
  Value add(const Value& a, const Value& b) {
    return ops::elementwise(ops::EwOp::add, a, b);
  }
  Value concat_channels(const Value& a, const Value& b) {
    return ops::concat_channels(a, b);
  }
  Value global_avg_pool(const Value& x) { return ops::global_avg_pool(x); }

  Value dagc_aggregate(const Value& x, int k) {
    const auto stats = graph::estimate_stats(x);
    return graph::dagc_aggregate(x, k, stats.per_image).x_final;
  }
};

template <typename S>
class TapeEngine {
 public:
  using Scalar = S;
  using Value = typename Tape<S>::Id;

  explicit TapeEngine(Tape<S>& tape) : tape_(tape) {}

  Value input(const Tensor<S>& t, const std::string& name = {}) {
    return tape_.leaf(t, name);
  }

  Value conv2d(Value x, const ops::ConvParams<S>& p, const std::string& name) {
    Value w = lift(p.weight, name + ".weight");
    std::optional<Value> b;
    if (p.bias) b = lift(*p.bias, name + ".bias");
    return tape_.conv2d(x, w, b, p.stride, p.padding, p.groups);
  }
  Value batch_norm(Value x, const ops::BatchNormParams<S>& p,
                   const std::string& name) {
    Value g = lift(p.gamma, name + ".gamma");
    Value b = lift(p.beta, name + ".beta");
    return tape_.batch_norm(x, g, b, p.running_mean, p.running_var, p.epsilon);
  }
  Value gelu(Value x) { return tape_.gelu(x); }
  Value add(Value a, Value b) { return tape_.add(a, b); }
  Value concat_channels(Value a, Value b) {
    return tape_.concat_channels(a, b);
  }
  Value global_avg_pool(Value x) { return tape_.global_avg_pool(x); }

  // Stats and masks are computed from the recorded value of x and embedded
  // as constants; gradients flow only through mask * (x_rolled - x).
  // Values are copied out of the tape before further pushes can move nodes.
  Value dagc_aggregate(Value x, int k) {
    const Tensor<S> xv = tape_.value(x);
    const auto stats = graph::estimate_stats(xv);
    const Index N = xv.n(), H = xv.h(), W = xv.w();
    Value acc = tape_.constant(Tensor<S>::zeros(xv.shape()), "dagc.zero");
    for (Axis axis : {Axis::height, Axis::width}) {
      const Index extent = axis == Axis::height ? H : W;
      for (Index shift : graph::axial_offsets(extent, k)) {
        Value rolled = tape_.roll(x, shift, axis);
        const Tensor<S> rolled_v = tape_.value(rolled);
        const auto bits =
            graph::axial_offset_mask(xv, rolled_v, stats.per_image);
        tie_seen_ = tie_seen_ || mask_has_tie(xv, rolled_v, stats);
        Tensor<S> mask(Shape::nchw(N, 1, H, W));
        for (Index i = 0; i < mask.numel(); ++i)
          mask[i] = bits[static_cast<std::size_t>(i)] ? S(1) : S(0);
        Value diff = tape_.sub(rolled, x);
        Value masked = tape_.mul(diff, tape_.constant(std::move(mask)));
        acc = tape_.max(acc, masked);
      }
    }
    return acc;
  }

  // True if any per-node distance landed exactly on the mu - sigma threshold
  // while recording (within one part in 1e12); gradient checks resample then.
  bool tie_seen() const { return tie_seen_; }

  Tape<S>& tape() { return tape_; }

 private:
  Tape<S>& tape_;
  std::unordered_map<const void*, Value> lifted_;
  bool tie_seen_ = false;

  Value lift(const Tensor<S>& t, const std::string& name) {
    auto it = lifted_.find(t.data());
    if (it != lifted_.end()) return it->second;
    Value id = tape_.leaf(t, name);
    lifted_.emplace(t.data(), id);
    return id;
  }

  static bool mask_has_tie(const Tensor<S>& x, const Tensor<S>& rolled,
                           const graph::StatsResult& stats) {
    const Index N = x.n(), C = x.c(), plane = x.h() * x.w();
    for (Index n = 0; n < N; ++n) {
      const double thr = stats.per_image[static_cast<std::size_t>(n)].mu -
                         stats.per_image[static_cast<std::size_t>(n)].sigma;
      for (Index p = 0; p < plane; ++p) {
        double d2 = 0.0;
        for (Index c = 0; c < C; ++c) {
          const Index off = (n * C + c) * plane + p;
          const double d = static_cast<double>(rolled[off]) -
                           static_cast<double>(x[off]);
          d2 += d * d;
        }
        const double dist = std::sqrt(d2);
        if (std::abs(dist - thr) <= 1e-12 * std::max(1.0, std::abs(thr)))
          return true;
      }
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// Block bodies (Figure 4 e-g plus MBConv, stem, downsample, head).

template <class E>
using V = typename E::Value;

template <class E, typename S>
V<E> conv_bn(E& e, const V<E>& x, const ConvBn<S>& p, const std::string& name) {
  return e.batch_norm(e.conv2d(x, p.conv, name), p.bn, name + ".bn");
}

// Conditional positional encoding: x + depthwise3x3(x).
template <class E, typename S>
V<E> cpe(E& e, const V<E>& x, const ops::ConvParams<S>& p,
         const std::string& name = "cpe") {
  return e.add(x, e.conv2d(x, p, name));
}

// DynConv: BN(conv1x1_{2C->C}(Concat(x, dagc(x)))).
template <class E, typename S>
V<E> dyn_conv(E& e, const V<E>& x, int k, const ConvBn<S>& dyn_out,
              const std::string& name = "dyn_out") {
  V<E> x_final = e.dagc_aggregate(x, k);
  return conv_bn(e, e.concat_channels(x, x_final), dyn_out, name);
}

// Eq. 1: Y = W_out(GeLU(DynConv((x + CPE(x)) W_in))) + x.
template <class E, typename S>
V<E> dynamic_grapher(E& e, const V<E>& x, const GrapherParams<S>& p,
                     const std::string& name = "grapher") {
  V<E> t = cpe(e, x, p.cpe, name + ".cpe");
  t = conv_bn(e, t, p.w_in, name + ".w_in");
  t = dyn_conv(e, t, p.k, p.dyn_out, name + ".dyn_out");
  t = e.gelu(t);
  t = conv_bn(e, t, p.w_out, name + ".w_out");
  return e.add(t, x);
}

// Eq. 2: Z = W_2(GeLU(W_1 y)) + y.
template <class E, typename S>
V<E> ffn(E& e, const V<E>& y, const FFNParams<S>& p,
         const std::string& name = "ffn") {
  V<E> t = conv_bn(e, y, p.w1, name + ".w1");
  t = e.gelu(t);
  t = conv_bn(e, t, p.w2, name + ".w2");
  return e.add(t, y);
}

template <class E, typename S>
V<E> dagc_block(E& e, const V<E>& x, const GrapherParams<S>& gp,
                const FFNParams<S>& fp, const std::string& name = "dagc") {
  return ffn(e, dynamic_grapher(e, x, gp, name + ".grapher"), fp,
             name + ".ffn");
}

// Inverted residual: expand -> BN -> GeLU -> dw3x3 -> BN -> GeLU -> project
// -> BN, plus identity.
template <class E, typename S>
V<E> mbconv(E& e, const V<E>& x, const MBConvParams<S>& p,
            const std::string& name = "mbconv") {
  if (p.expand.conv.in_channels() != p.project.conv.out_channels())
    throw ConfigError("mbconv: input width " +
                      std::to_string(p.expand.conv.in_channels()) +
                      " != output width " +
                      std::to_string(p.project.conv.out_channels()));
  V<E> t = e.gelu(conv_bn(e, x, p.expand, name + ".expand"));
  t = e.gelu(conv_bn(e, t, p.dw, name + ".dw"));
  t = conv_bn(e, t, p.project, name + ".project");
  return e.add(x, t);
}

// Two stride-2 conv-BN-GeLU units; spatial extent divides by 4.
template <typename S>
Tensor<S> stem(const Tensor<S>& image, const StemParams<S>& p) {
  if (image.rank() != 4 || image.c() != 3)
    throw ShapeError("stem: expected rank-4 input with 3 channels, got " +
                     image.shape().str());
  if (image.h() % 4 != 0 || image.w() % 4 != 0)
    throw ShapeError("stem: spatial extents must divide by 4, got " +
                     image.shape().str());
  EagerEngine<S> e;
  Tensor<S> t = e.gelu(conv_bn(e, image, p.conv1, "stem.conv1"));
  return e.gelu(conv_bn(e, t, p.conv2, "stem.conv2"));
}

// Stride-2 3x3 conv + BN, no activation; halves resolution, widens channels.
template <typename S>
Tensor<S> downsample(const Tensor<S>& x, const DownsampleParams<S>& p) {
  if (x.rank() != 4) throw ShapeError("downsample: input must be rank-4");
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw ShapeError("downsample: spatial extents must be even, got " +
                     x.shape().str());
  EagerEngine<S> e;
  return conv_bn(e, x, p.conv, "downsample");
}

// Classification head: pool -> fc C4->4*C4 -> GeLU -> fc 4*C4->classes.
template <typename S>
Tensor<S> head(const Tensor<S>& x, const HeadParams<S>& p) {
  if (x.rank() != 4) throw ShapeError("head: input must be rank-4");
  const Index classes = p.fc2.out_channels();
  if (classes < 1) throw ConfigError("head: classes must be >= 1");
  EagerEngine<S> e;
  Tensor<S> t = e.global_avg_pool(x);
  t = e.gelu(e.conv2d(t, p.fc1, "head.fc1"));
  t = e.conv2d(t, p.fc2, "head.fc2");
  return t.reshaped(Shape{t.n(), classes});
}

// ---------------------------------------------------------------------------
// Parameter construction. Conv weights and biases draw uniform [-s, s] with
// s = 1/sqrt(fan_in); BN starts as the identity affine map.

template <typename S>
ops::ConvParams<S> make_conv(SplitMix64& rng, Index out_ch, Index in_ch,
                             Index k, int stride, int padding, int groups,
                             bool bias = true) {
  ops::ConvParams<S> p;
  const Index fan_in = (in_ch / groups) * k * k;
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  p.weight = Tensor<S>::uniform(Shape{out_ch, in_ch / groups, k, k}, rng,
                                static_cast<S>(-s), static_cast<S>(s));
  if (bias)
    p.bias = Tensor<S>::uniform(Shape{out_ch}, rng, static_cast<S>(-s),
                                static_cast<S>(s));
  p.stride = stride;
  p.padding = padding;
  p.groups = groups;
  return p;
}

template <typename S>
ops::BatchNormParams<S> make_bn(Index c) {
  ops::BatchNormParams<S> p;
  p.gamma = Tensor<S>::full(Shape{c}, S(1));
  p.beta = Tensor<S>::zeros(Shape{c});
  p.running_mean = Tensor<S>::zeros(Shape{c});
  p.running_var = Tensor<S>::full(Shape{c}, S(1));
  return p;
}

template <typename S>
ConvBn<S> make_conv_bn(SplitMix64& rng, Index out_ch, Index in_ch, Index k,
                       int stride, int padding, int groups = 1) {
  return ConvBn<S>{make_conv<S>(rng, out_ch, in_ch, k, stride, padding, groups),
                   make_bn<S>(out_ch)};
}

template <typename S>
GrapherParams<S> make_grapher(SplitMix64& rng, Index c, int k) {
  GrapherParams<S> p;
  p.cpe = make_conv<S>(rng, c, c, 3, 1, 1, static_cast<int>(c));
  p.w_in = make_conv_bn<S>(rng, c, c, 1, 1, 0);
  p.dyn_out = make_conv_bn<S>(rng, c, 2 * c, 1, 1, 0);
  p.w_out = make_conv_bn<S>(rng, c, c, 1, 1, 0);
  p.k = k;
  return p;
}

template <typename S>
FFNParams<S> make_ffn(SplitMix64& rng, Index c, int expansion = 4) {
  FFNParams<S> p;
  p.w1 = make_conv_bn<S>(rng, expansion * c, c, 1, 1, 0);
  p.w2 = make_conv_bn<S>(rng, c, expansion * c, 1, 1, 0);
  p.expansion = expansion;
  return p;
}

template <typename S>
MBConvParams<S> make_mbconv(SplitMix64& rng, Index c, int expansion = 4) {
  MBConvParams<S> p;
  const Index ec = expansion * c;
  p.expand = make_conv_bn<S>(rng, ec, c, 1, 1, 0);
  p.dw = make_conv_bn<S>(rng, ec, ec, 3, 1, 1, static_cast<int>(ec));
  p.project = make_conv_bn<S>(rng, c, ec, 1, 1, 0);
  p.expansion = expansion;
  return p;
}

template <typename S>
StemParams<S> make_stem(SplitMix64& rng, Index c1) {
  StemParams<S> p;
  p.conv1 = make_conv_bn<S>(rng, c1 / 2, 3, 3, 2, 1);
  p.conv2 = make_conv_bn<S>(rng, c1, c1 / 2, 3, 2, 1);
  return p;
}

template <typename S>
DownsampleParams<S> make_downsample(SplitMix64& rng, Index c_in, Index c_out) {
  return DownsampleParams<S>{make_conv_bn<S>(rng, c_out, c_in, 3, 2, 1)};
}

template <typename S>
HeadParams<S> make_head(SplitMix64& rng, Index c4, Index classes) {
  HeadParams<S> p;
  p.fc1 = make_conv<S>(rng, 4 * c4, c4, 1, 1, 0, 1);
  p.fc2 = make_conv<S>(rng, classes, 4 * c4, 1, 1, 0, 1);
  return p;
}

}  // namespace axialvig::blocks

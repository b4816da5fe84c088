#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "axialvig/tensor.hpp"

namespace axialvig::ops {

template <typename S>
struct ConvParams {
  Tensor<S> weight;                // (out_ch, in_ch/groups, kh, kw)
  std::optional<Tensor<S>> bias;   // (out_ch)
  int stride = 1;
  int padding = 0;
  int groups = 1;

  Index out_channels() const { return weight.dim(0); }
  Index in_channels() const { return weight.dim(1) * groups; }
  Index kh() const { return weight.dim(2); }
  Index kw() const { return weight.dim(3); }
};

template <typename S>
struct BatchNormParams {
  Tensor<S> gamma, beta, running_mean, running_var;  // all length C
  S epsilon = static_cast<S>(1e-5);
};

inline Index conv_out_extent(Index in, Index k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename S>
void validate_conv(const Tensor<S>& x, const Tensor<S>& weight,
                   const Tensor<S>* bias, int stride, int padding,
                   int groups) {
  if (x.rank() != 4)
    throw ShapeError("conv2d: input must be rank-4 NCHW, got rank " +
                     std::to_string(x.rank()));
  if (weight.rank() != 4)
    throw ShapeError("conv2d: weight must be rank-4, got rank " +
                     std::to_string(weight.rank()));
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (groups < 1) throw ConfigError("conv2d: groups must be >= 1");
  const Index in_ch = weight.dim(1) * groups;
  const Index out_ch = weight.dim(0);
  if (in_ch % groups != 0 || out_ch % groups != 0)
    throw ConfigError("conv2d: channel counts not divisible by groups=" +
                      std::to_string(groups));
  if (x.c() != in_ch)
    throw ShapeError("conv2d: channel axis mismatch: input has " +
                     std::to_string(x.c()) + ", weights expect " +
                     std::to_string(in_ch));
  if (bias && bias->numel() != out_ch)
    throw ShapeError("conv2d: bias length " + std::to_string(bias->numel()) +
                     " != out channels " + std::to_string(out_ch));
  if (conv_out_extent(x.h(), weight.dim(2), stride, padding) < 1)
    throw ShapeError("conv2d: height axis collapses: input " +
                     std::to_string(x.h()) + " with kernel " +
                     std::to_string(weight.dim(2)));
  if (conv_out_extent(x.w(), weight.dim(3), stride, padding) < 1)
    throw ShapeError("conv2d: width axis collapses: input " +
                     std::to_string(x.w()) + " with kernel " +
                     std::to_string(weight.dim(3)));
}

namespace detail {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRowMat = Eigen::Map<RowMat<S>>;
template <typename S>
using CMapRowMat = Eigen::Map<const RowMat<S>>;

// Depthwise path: one 2-D correlation per channel, no cross-channel GEMM.
template <typename S>
void conv2d_depthwise(const Tensor<S>& x, const Tensor<S>& weight,
                      const Tensor<S>* bias, int stride, int pad,
                      Tensor<S>& out) {
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const Index KH = weight.dim(2), KW = weight.dim(3);
  const Index OH = out.h(), OW = out.w();
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const S* xp = x.data() + x.offset(n, c, 0, 0);
      const S* wp = weight.data() + weight.offset(c, 0, 0, 0);
      const S b = bias ? (*bias)[c] : S(0);
      S* op = out.data() + out.offset(n, c, 0, 0);
      for (Index oh = 0; oh < OH; ++oh)
        for (Index ow = 0; ow < OW; ++ow) {
          S acc = b;
          for (Index kh = 0; kh < KH; ++kh) {
            const Index ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= H) continue;
            for (Index kw = 0; kw < KW; ++kw) {
              const Index iw = ow * stride - pad + kw;
              if (iw < 0 || iw >= W) continue;
              acc += wp[kh * KW + kw] * xp[ih * W + iw];
            }
          }
          op[oh * OW + ow] = acc;
        }
    }
}

// im2col for one (image, group): rows = Cg*KH*KW, cols = OH*OW, row-major.
template <typename S>
void im2col(const Tensor<S>& x, Index n, Index c0, Index cg, Index kh_,
            Index kw_, int stride, int pad, Index oh_, Index ow_, S* col) {
  const Index H = x.h(), W = x.w();
  Index r = 0;
  for (Index c = 0; c < cg; ++c)
    for (Index kh = 0; kh < kh_; ++kh)
      for (Index kw = 0; kw < kw_; ++kw, ++r) {
        const S* xp = x.data() + x.offset(n, c0 + c, 0, 0);
        S* row = col + r * (oh_ * ow_);
        for (Index oh = 0; oh < oh_; ++oh) {
          const Index ih = oh * stride - pad + kh;
          S* dst = row + oh * ow_;
          if (ih < 0 || ih >= H) {
            for (Index ow = 0; ow < ow_; ++ow) dst[ow] = S(0);
            continue;
          }
          const S* src = xp + ih * W;
          for (Index ow = 0; ow < ow_; ++ow) {
            const Index iw = ow * stride - pad + kw;
            dst[ow] = (iw < 0 || iw >= W) ? S(0) : src[iw];
          }
        }
      }
}

}  // namespace detail

// Zero-padded 2-D cross-correlation over NCHW (the usual conv layer).
// The raw-tensor overload lets the autodiff tape run convolutions over node
// values without copying weights into a ConvParams.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight,
                 const Tensor<S>* bias, int stride, int padding, int groups) {
  validate_conv(x, weight, bias, stride, padding, groups);
  const Index N = x.n(), H = x.h(), W = x.w();
  const Index OC = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
  const Index OH = conv_out_extent(H, KH, stride, padding);
  const Index OW = conv_out_extent(W, KW, stride, padding);
  Tensor<S> out(Shape::nchw(N, OC, OH, OW));

  const Index P = OH * OW;
  if (groups == x.c() && OC == x.c()) {
    detail::conv2d_depthwise(x, weight, bias, stride, padding, out);
    return out;
  }

  const Index G = groups;
  const Index CG = x.c() / G;
  const Index OG = OC / G;
  const Index K = CG * KH * KW;

  if (G == 1 && KH == 1 && KW == 1 && stride == 1 && padding == 0) {
    // 1x1 conv is a plain channel-mixing GEMM per image.
    detail::CMapRowMat<S> wmat(weight.data(), OC, K);
    for (Index n = 0; n < N; ++n) {
      detail::CMapRowMat<S> xmat(x.data() + x.offset(n, 0, 0, 0), K, P);
      detail::MapRowMat<S> omat(out.data() + out.offset(n, 0, 0, 0), OC, P);
      omat.noalias() = wmat * xmat;
    }
  } else {
    std::vector<S> col(static_cast<std::size_t>(K * P));
    for (Index n = 0; n < N; ++n)
      for (Index g = 0; g < G; ++g) {
        detail::im2col(x, n, g * CG, CG, KH, KW, stride, padding, OH, OW,
                       col.data());
        detail::CMapRowMat<S> wmat(weight.data() + weight.offset(g * OG, 0, 0, 0),
                                   OG, K);
        detail::CMapRowMat<S> cmat(col.data(), K, P);
        detail::MapRowMat<S> omat(out.data() + out.offset(n, g * OG, 0, 0), OG, P);
        omat.noalias() = wmat * cmat;
      }
  }

  if (bias) {
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < OC; ++c) {
        S* op = out.data() + out.offset(n, c, 0, 0);
        const S b = (*bias)[c];
        for (Index i = 0; i < P; ++i) op[i] += b;
      }
  }
  return out;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const ConvParams<S>& p) {
  return conv2d(x, p.weight, p.bias ? &*p.bias : nullptr, p.stride, p.padding,
                p.groups);
}

// Per-channel spatial filtering; requires groups == channels.
template <typename S>
Tensor<S> depthwise_conv2d(const Tensor<S>& x, const ConvParams<S>& p) {
  if (x.rank() != 4)
    throw ShapeError("depthwise_conv2d: input must be rank-4 NCHW");
  if (p.groups != x.c())
    throw ConfigError("depthwise_conv2d: groups=" + std::to_string(p.groups) +
                      " must equal channels=" + std::to_string(x.c()));
  return conv2d(x, p);
}

// Inference-form batch normalization: an affine map from stored statistics.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, const Tensor<S>& mean,
                     const Tensor<S>& var, S epsilon) {
  if (x.rank() != 4)
    throw ShapeError("batch_norm: input must be rank-4 NCHW");
  const Index C = x.c();
  if (gamma.numel() != C || beta.numel() != C || mean.numel() != C ||
      var.numel() != C)
    throw ShapeError("batch_norm: channel axis mismatch: input has " +
                     std::to_string(C) + " channels, params have " +
                     std::to_string(gamma.numel()));
  Tensor<S> out(x.shape());
  const Index plane = x.h() * x.w();
  for (Index c = 0; c < C; ++c) {
    const S inv_std = S(1) / std::sqrt(var[c] + epsilon);
    const S scale = gamma[c] * inv_std;
    const S shift = beta[c] - mean[c] * scale;
    for (Index n = 0; n < x.n(); ++n) {
      const S* xp = x.data() + x.offset(n, c, 0, 0);
      S* op = out.data() + out.offset(n, c, 0, 0);
      for (Index i = 0; i < plane; ++i) op[i] = xp[i] * scale + shift;
    }
  }
  return out;
}

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const BatchNormParams<S>& p) {
  return batch_norm(x, p.gamma, p.beta, p.running_mean, p.running_var,
                    p.epsilon);
}

// Exact GeLU, x * Phi(x) with the erf-based normal CDF (no tanh approximation).
inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

// d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
inline double gelu_grad_scalar(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  const double phi = inv_sqrt_2pi * std::exp(-0.5 * x * x);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  for (Index i = 0; i < x.numel(); ++i)
    out[i] = static_cast<S>(gelu_scalar(static_cast<double>(x[i])));
  return out;
}

// Circular shift along a spatial axis: output index i takes input index
// (i - shift) mod extent.
template <typename S>
Tensor<S> roll(const Tensor<S>& x, Index shift, Axis axis) {
  if (x.rank() != 4)
    throw ShapeError("roll: input must be rank-4 NCHW");
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const Index extent = axis == Axis::height ? H : W;
  const Index s = ((shift % extent) + extent) % extent;
  Tensor<S> out(x.shape());
  if (axis == Axis::height) {
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < H; ++i) {
          const Index j = (i - s + H) % H;
          std::memcpy(out.data() + out.offset(n, c, i, 0),
                      x.data() + x.offset(n, c, j, 0),
                      sizeof(S) * static_cast<std::size_t>(W));
        }
  } else {
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < H; ++i) {
          const S* src = x.data() + x.offset(n, c, i, 0);
          S* dst = out.data() + out.offset(n, c, i, 0);
          for (Index j = 0; j < W; ++j) dst[j] = src[(j - s + W) % W];
        }
  }
  return out;
}

enum class EwOp { max, sub, mul, add };

namespace detail {

template <typename S, typename F>
Tensor<S> ew_apply(const Tensor<S>& a, const Tensor<S>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<S> out(a.shape());
    for (Index i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  // Channel broadcast: b carries a singleton channel axis (mask case).
  if (a.rank() == 4 && b.rank() == 4 && b.c() == 1 && a.n() == b.n() &&
      a.h() == b.h() && a.w() == b.w()) {
    Tensor<S> out(a.shape());
    const Index plane = a.h() * a.w();
    for (Index n = 0; n < a.n(); ++n) {
      const S* bp = b.data() + b.offset(n, 0, 0, 0);
      for (Index c = 0; c < a.c(); ++c) {
        const S* ap = a.data() + a.offset(n, c, 0, 0);
        S* op = out.data() + out.offset(n, c, 0, 0);
        for (Index i = 0; i < plane; ++i) op[i] = f(ap[i], bp[i]);
      }
    }
    return out;
  }
  throw ShapeError("elementwise: shapes " + a.shape().str() + " and " +
                   b.shape().str() + " are not broadcastable");
}

}  // namespace detail

template <typename S>
Tensor<S> elementwise(EwOp op, const Tensor<S>& a, const Tensor<S>& b) {
  switch (op) {
    case EwOp::max:
      return detail::ew_apply(a, b, [](S x, S y) { return x >= y ? x : y; });
    case EwOp::sub:
      return detail::ew_apply(a, b, [](S x, S y) { return x - y; });
    case EwOp::mul:
      return detail::ew_apply(a, b, [](S x, S y) { return x * y; });
    case EwOp::add:
      return detail::ew_apply(a, b, [](S x, S y) { return x + y; });
  }
  throw ConfigError("elementwise: unknown op");
}

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw ShapeError("concat_channels: inputs must be rank-4 NCHW");
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: batch/spatial axes differ: " +
                     a.shape().str() + " vs " + b.shape().str());
  Tensor<S> out(Shape::nchw(a.n(), a.c() + b.c(), a.h(), a.w()));
  const Index plane = a.h() * a.w();
  for (Index n = 0; n < a.n(); ++n) {
    std::memcpy(out.data() + out.offset(n, 0, 0, 0),
                a.data() + a.offset(n, 0, 0, 0),
                sizeof(S) * static_cast<std::size_t>(a.c() * plane));
    std::memcpy(out.data() + out.offset(n, a.c(), 0, 0),
                b.data() + b.offset(n, 0, 0, 0),
                sizeof(S) * static_cast<std::size_t>(b.c() * plane));
  }
  return out;
}

template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, Index c0, Index c1) {
  if (x.rank() != 4) throw ShapeError("slice_channels: input must be rank-4");
  if (c0 < 0 || c1 <= c0 || c1 > x.c())
    throw ShapeError("slice_channels: range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") out of bounds for C=" +
                     std::to_string(x.c()));
  Tensor<S> out(Shape::nchw(x.n(), c1 - c0, x.h(), x.w()));
  const Index plane = x.h() * x.w();
  for (Index n = 0; n < x.n(); ++n)
    std::memcpy(out.data() + out.offset(n, 0, 0, 0),
                x.data() + x.offset(n, c0, 0, 0),
                sizeof(S) * static_cast<std::size_t>((c1 - c0) * plane));
  return out;
}

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.rank() != 4)
    throw ShapeError("global_avg_pool: input must be rank-4 NCHW");
  Tensor<S> out(Shape::nchw(x.n(), x.c(), 1, 1));
  const Index plane = x.h() * x.w();
  for (Index n = 0; n < x.n(); ++n)
    for (Index c = 0; c < x.c(); ++c) {
      const S* xp = x.data() + x.offset(n, c, 0, 0);
      double acc = 0.0;
      for (Index i = 0; i < plane; ++i) acc += static_cast<double>(xp[i]);
      out.at(n, c, 0, 0) = static_cast<S>(acc / static_cast<double>(plane));
    }
  return out;
}

template <typename S>
double sum_all(const Tensor<S>& x) {
  double acc = 0.0;
  for (Index i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  return acc;
}

template <typename S>
double mean_all(const Tensor<S>& x) {
  return sum_all(x) / static_cast<double>(x.numel());
}

}  // namespace axialvig::ops

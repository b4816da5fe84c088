#include <algorithm>
#include <cmath>
#include <limits>

#include "axialvig/verify.hpp"

namespace axialvig::verify {

Tensor<double> naive_conv2d(const Tensor<double>& x,
                            const ops::ConvParams<double>& p) {
  const Index N = x.n(), H = x.h(), W = x.w();
  const Index OC = p.out_channels(), CG = p.weight.dim(1);
  const Index KH = p.kh(), KW = p.kw();
  const Index OH = ops::conv_out_extent(H, KH, p.stride, p.padding);
  const Index OW = ops::conv_out_extent(W, KW, p.stride, p.padding);
  const Index OG = OC / p.groups;
  Tensor<double> out(Shape::nchw(N, OC, OH, OW));
  for (Index n = 0; n < N; ++n)
    for (Index oc = 0; oc < OC; ++oc)
      for (Index oh = 0; oh < OH; ++oh)
        for (Index ow = 0; ow < OW; ++ow) {
          double acc = p.bias ? (*p.bias)[oc] : 0.0;
          const Index g = oc / OG;
          for (Index icl = 0; icl < CG; ++icl)
            for (Index kh = 0; kh < KH; ++kh)
              for (Index kw = 0; kw < KW; ++kw) {
                const Index ih = oh * p.stride - p.padding + kh;
                const Index iw = ow * p.stride - p.padding + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += p.weight.at(oc, icl, kh, kw) *
                       x.at(n, g * CG + icl, ih, iw);
              }
          out.at(n, oc, oh, ow) = acc;
        }
  return out;
}

Tensor<double> naive_depthwise_conv2d(const Tensor<double>& x,
                                      const ops::ConvParams<double>& p) {
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const Index KH = p.kh(), KW = p.kw();
  const Index OH = ops::conv_out_extent(H, KH, p.stride, p.padding);
  const Index OW = ops::conv_out_extent(W, KW, p.stride, p.padding);
  Tensor<double> out(Shape::nchw(N, C, OH, OW));
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c)
      for (Index oh = 0; oh < OH; ++oh)
        for (Index ow = 0; ow < OW; ++ow) {
          double acc = p.bias ? (*p.bias)[c] : 0.0;
          for (Index kh = 0; kh < KH; ++kh)
            for (Index kw = 0; kw < KW; ++kw) {
              const Index ih = oh * p.stride - p.padding + kh;
              const Index iw = ow * p.stride - p.padding + kw;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              acc += p.weight.at(c, 0, kh, kw) * x.at(n, c, ih, iw);
            }
          out.at(n, c, oh, ow) = acc;
        }
  return out;
}

namespace {

double node_distance(const Tensor<double>& x, Index n, Index h0, Index w0,
                     Index h1, Index w1) {
  double d2 = 0.0;
  for (Index c = 0; c < x.c(); ++c) {
    const double d = x.at(n, c, h1, w1) - x.at(n, c, h0, w0);
    d2 += d * d;
  }
  return std::sqrt(d2);
}

}  // namespace

OracleAggregate oracle_dagc(const Tensor<double>& x, int k,
                            const std::vector<graph::StatPair>& stats) {
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  OracleAggregate res;
  res.x_final = Tensor<double>::zeros(x.shape());
  for (Index n = 0; n < N; ++n) {
    const double thr = stats[static_cast<std::size_t>(n)].mu -
                       stats[static_cast<std::size_t>(n)].sigma;
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w) {
        // The roll-based loops compare node (h,w) against (h - mK) mod H and
        // (w - mK) mod W; the enumeration must walk the same neighbors.
        for (Index m = 0; m * k < H; ++m) {
          const Index nh = ((h - m * k) % H + H) % H;
          if (node_distance(x, n, h, w, nh, w) < thr) {
            ++res.connections;
            for (Index c = 0; c < C; ++c) {
              const double diff = x.at(n, c, nh, w) - x.at(n, c, h, w);
              double& slot = res.x_final.at(n, c, h, w);
              if (diff > slot) slot = diff;
            }
          }
        }
        for (Index m = 0; m * k < W; ++m) {
          const Index nw = ((w - m * k) % W + W) % W;
          if (node_distance(x, n, h, w, h, nw) < thr) {
            ++res.connections;
            for (Index c = 0; c < C; ++c) {
              const double diff = x.at(n, c, h, nw) - x.at(n, c, h, w);
              double& slot = res.x_final.at(n, c, h, w);
              if (diff > slot) slot = diff;
            }
          }
        }
      }
  }
  return res;
}

Tensor<double> oracle_svga(const Tensor<double>& x, int k) {
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  Tensor<double> out = Tensor<double>::zeros(x.shape());
  for (Index n = 0; n < N; ++n)
    for (Index h = 0; h < H; ++h)
      for (Index w = 0; w < W; ++w)
        for (Index c = 0; c < C; ++c) {
          double best = 0.0;
          for (Index m = 0; m * k < H; ++m) {
            const Index nh = ((h - m * k) % H + H) % H;
            best = std::max(best, x.at(n, c, nh, w) - x.at(n, c, h, w));
          }
          for (Index m = 0; m * k < W; ++m) {
            const Index nw = ((w - m * k) % W + W) % W;
            best = std::max(best, x.at(n, c, h, nw) - x.at(n, c, h, w));
          }
          out.at(n, c, h, w) = best;
        }
  return out;
}

graph::NeighborTable oracle_knn_neighbors(const Tensor<double>& x, int k) {
  const Index N = x.n(), H = x.h(), W = x.w();
  const Index P = H * W;
  graph::NeighborTable table;
  table.n = N;
  table.nodes = P;
  table.k = k;
  table.indices.resize(static_cast<std::size_t>(N * P * k));
  std::vector<std::pair<double, std::int32_t>> all;
  for (Index n = 0; n < N; ++n)
    for (Index i = 0; i < P; ++i) {
      all.clear();
      for (Index j = 0; j < P; ++j) {
        if (j == i) continue;
        const double d =
            node_distance(x, n, i / W, i % W, j / W, j % W);
        all.emplace_back(d * d, static_cast<std::int32_t>(j));
      }
      std::stable_sort(all.begin(), all.end());
      for (int j = 0; j < k; ++j)
        table.indices[static_cast<std::size_t>((n * P + i) * k + j)] =
            all[static_cast<std::size_t>(j)].second;
    }
  return table;
}

Tensor<double> oracle_knn_aggregate(const Tensor<double>& x,
                                    const graph::NeighborTable& table) {
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const Index P = H * W;
  Tensor<double> out(x.shape());
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c)
      for (Index i = 0; i < P; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < table.k; ++j) {
          const Index nb = table.at(n, i, j);
          best = std::max(best, x.at(n, c, nb / W, nb % W) -
                                    x.at(n, c, i / W, i % W));
        }
        out.at(n, c, i / W, i % W) = best;
      }
  return out;
}

}  // namespace axialvig::verify

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "axialvig/ops.hpp"
#include "axialvig/tensor.hpp"

namespace axialvig::graph {

enum class Method { dagc, svga, knn };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::dagc: return "dagc";
    case Method::svga: return "svga";
    default: return "knn";
  }
}

struct GraphSpec {
  Method method = Method::dagc;
  int k = 1;  // hop distance for dagc/svga, neighbor count for knn
};

// Per-image estimate of the mean and population standard deviation of the
// inter-node feature distances sampled through the quadrant flip.
struct StatPair {
  double mu = 0.0;
  double sigma = 0.0;
};

// Node masks and counters recorded while building an axial graph.
// comparison_count counts node pairs examined (one mask decision each);
// distance_evals counts Euclidean distance computations, which is the same
// number for DAGC and zero for SVGA, whose connections are fixed up front.
struct OffsetMask {
  Axis axis;
  Index shift;
  std::vector<std::uint8_t> bits;  // (n,h,w), row-major
};

struct ConnectionTrace {
  Index n = 0, h = 0, w = 0;
  std::vector<OffsetMask> masks;
  std::int64_t connection_count = 0;
  std::int64_t comparison_count = 0;
  std::int64_t distance_evals = 0;
  std::vector<std::int64_t> per_image_connections;
};

// KNN neighbor lists: for each of the h*w nodes of each image, exactly k
// neighbor node indices (self excluded, ties broken by lower linear index).
struct NeighborTable {
  Index n = 0, nodes = 0;
  int k = 0;
  std::vector<std::int32_t> indices;  // (n, nodes, k), row-major
  std::int64_t distance_evals = 0;

  std::int32_t at(Index image, Index node, int j) const {
    return indices[(image * nodes + node) * k + j];
  }
};

// Swap diagonally opposite quadrants (size floor(H/2) x floor(W/2)); with an
// odd extent the central row/column stays in place.
template <typename S>
Tensor<S> quadrant_flip(const Tensor<S>& x) {
  if (x.rank() != 4)
    throw ShapeError("quadrant_flip: input must be rank-4 NCHW");
  const Index H = x.h(), W = x.w();
  if (H < 2)
    throw ShapeError("quadrant_flip: height axis must be >= 2, got " +
                     std::to_string(H));
  if (W < 2)
    throw ShapeError("quadrant_flip: width axis must be >= 2, got " +
                     std::to_string(W));
  const Index qh = H / 2, qw = W / 2;
  const Index dh = H - qh, dw = W - qw;  // offset of the lower/right quadrant
  Tensor<S> out = x;
  for (Index n = 0; n < x.n(); ++n)
    for (Index c = 0; c < x.c(); ++c)
      for (Index i = 0; i < qh; ++i)
        for (Index j = 0; j < qw; ++j) {
          std::swap(out.at(n, c, i, j), out.at(n, c, dh + i, dw + j));
          std::swap(out.at(n, c, i, dw + j), out.at(n, c, dh + i, j));
        }
  return out;
}

struct StatsResult {
  std::vector<StatPair> per_image;
  std::int64_t comparisons_per_image = 0;  // quadrant grid slots visited
};

// Estimate per-image mu/sigma from the channel-wise L2 distances between
// each node and its diagonally flipped partner. Each quadrant grid slot
// contributes both diagonal pairs; duplicated mirror values would leave the
// mean and population sigma unchanged, so every distinct pair enters once.
// Degenerate 1xW / Hx1 maps have an empty quadrant region and yield (0, 0).
template <typename S>
StatsResult estimate_stats(const Tensor<S>& x) {
  if (x.rank() != 4)
    throw ShapeError("estimate_stats: input must be rank-4 NCHW");
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const Index qh = H / 2, qw = W / 2;
  const Index dh = H - qh, dw = W - qw;
  StatsResult res;
  res.per_image.resize(static_cast<std::size_t>(N));
  res.comparisons_per_image = qh * qw;
  if (qh == 0 || qw == 0) return res;

  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(2 * qh * qw));
  for (Index n = 0; n < N; ++n) {
    dist.clear();
    for (Index i = 0; i < qh; ++i)
      for (Index j = 0; j < qw; ++j) {
        double d1 = 0.0, d2 = 0.0;
        for (Index c = 0; c < C; ++c) {
          const double a = static_cast<double>(x.at(n, c, i, j)) -
                           static_cast<double>(x.at(n, c, dh + i, dw + j));
          const double b = static_cast<double>(x.at(n, c, i, dw + j)) -
                           static_cast<double>(x.at(n, c, dh + i, j));
          d1 += a * a;
          d2 += b * b;
        }
        dist.push_back(std::sqrt(d1));
        dist.push_back(std::sqrt(d2));
      }
    const double count = static_cast<double>(dist.size());
    double mu = 0.0;
    for (double d : dist) mu += d;
    mu /= count;
    double var = 0.0;
    for (double d : dist) var += (d - mu) * (d - mu);
    var /= count;  // population convention
    res.per_image[static_cast<std::size_t>(n)] = {mu, std::sqrt(var)};
  }
  return res;
}

// Offsets {0, k, 2k, ...} strictly below extent; length = ceil(extent / k).
inline std::vector<Index> axial_offsets(Index extent, int k) {
  if (extent < 1)
    throw ConfigError("axial_offsets: extent must be >= 1");
  if (k < 1)
    throw ConfigError("axial_offsets: k must be >= 1");
  std::vector<Index> offsets;
  for (Index m = 0; m < extent; m += k) offsets.push_back(m);
  return offsets;
}

// Mask for one axial offset: 1 where the channel-wise L2 distance between a
// node and its rolled counterpart falls strictly below (mu - sigma) + bias.
template <typename S>
std::vector<std::uint8_t> axial_offset_mask(const Tensor<S>& x,
                                            const Tensor<S>& rolled,
                                            const std::vector<StatPair>& stats,
                                            double threshold_bias = 0.0) {
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(N * H * W));
  const Index plane = H * W;
  for (Index n = 0; n < N; ++n) {
    const double threshold =
        stats[static_cast<std::size_t>(n)].mu -
        stats[static_cast<std::size_t>(n)].sigma + threshold_bias;
    for (Index p = 0; p < plane; ++p) {
      double d2 = 0.0;
      for (Index c = 0; c < C; ++c) {
        const Index off = (n * C + c) * plane + p;
        const double d = static_cast<double>(rolled[off]) -
                         static_cast<double>(x[off]);
        d2 += d * d;
      }
      bits[static_cast<std::size_t>(n * plane + p)] =
          std::sqrt(d2) < threshold ? 1 : 0;
    }
  }
  return bits;
}

template <typename S>
struct AggregateResult {
  Tensor<S> x_final;
  ConnectionTrace trace;
};

namespace detail {

// Shared roll / mask / difference / max loop behind DAGC and SVGA.
// svga forces every mask bit to 1 and performs no distance evaluation.
template <typename S>
AggregateResult<S> axial_aggregate(const Tensor<S>& x, int k,
                                   const std::vector<StatPair>* stats,
                                   double threshold_bias) {
  if (x.rank() != 4)
    throw ShapeError("axial aggregate: input must be rank-4 NCHW");
  if (k < 1) throw ConfigError("axial aggregate: k must be >= 1");
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  if (stats && static_cast<Index>(stats->size()) != N)
    throw ShapeError("axial aggregate: stats batch size " +
                     std::to_string(stats->size()) + " != input batch " +
                     std::to_string(N));

  AggregateResult<S> res;
  res.x_final = Tensor<S>::zeros(x.shape());
  res.trace.n = N;
  res.trace.h = H;
  res.trace.w = W;
  res.trace.per_image_connections.assign(static_cast<std::size_t>(N), 0);

  const Index plane = H * W;
  for (Axis axis : {Axis::height, Axis::width}) {
    const Index extent = axis == Axis::height ? H : W;
    for (Index shift : axial_offsets(extent, k)) {
      Tensor<S> rolled = ops::roll(x, shift, axis);
      OffsetMask om;
      om.axis = axis;
      om.shift = shift;
      if (stats) {
        om.bits = axial_offset_mask(x, rolled, *stats, threshold_bias);
        res.trace.distance_evals += N * plane;
      } else {
        om.bits.assign(static_cast<std::size_t>(N * plane), 1);
      }
      res.trace.comparison_count += N * plane;
      for (Index n = 0; n < N; ++n) {
        std::int64_t conn = 0;
        const std::uint8_t* mb = om.bits.data() + n * plane;
        for (Index p = 0; p < plane; ++p) conn += mb[p];
        res.trace.per_image_connections[static_cast<std::size_t>(n)] += conn;
        res.trace.connection_count += conn;
        for (Index c = 0; c < C; ++c) {
          const Index base = (n * C + c) * plane;
          const S* xr = rolled.data() + base;
          const S* xp = x.data() + base;
          S* fp = res.x_final.data() + base;
          for (Index p = 0; p < plane; ++p) {
            const S v = mb[p] ? xr[p] - xp[p] : S(0);
            if (v > fp[p]) fp[p] = v;
          }
        }
      }
      res.trace.masks.push_back(std::move(om));
    }
  }
  return res;
}

}  // namespace detail

// Dynamic axial graph construction: roll down/right at every multiple of k,
// connect pairs whose distance is strictly below mu - sigma, and keep the
// per-channel max of the masked differences (zero-initialized, so the
// self-term contributes nothing).
template <typename S>
AggregateResult<S> dagc_aggregate(const Tensor<S>& x, int k,
                                  const std::vector<StatPair>& stats,
                                  double threshold_bias = 0.0) {
  return detail::axial_aggregate(x, k, &stats, threshold_bias);
}

// Static axial construction: identical loop with the mask forced all-ones.
template <typename S>
AggregateResult<S> svga_aggregate_traced(const Tensor<S>& x, int k) {
  return detail::axial_aggregate<S>(x, k, nullptr, 0.0);
}

template <typename S>
Tensor<S> svga_aggregate(const Tensor<S>& x, int k) {
  return svga_aggregate_traced(x, k).x_final;
}

// Exhaustive KNN by channel-wise L2 distance. Every node is scanned for
// every node (h*w distance evaluations per node); the self node is excluded
// from the selection and ties break toward the lower linear index.
template <typename S>
NeighborTable knn_neighbors(const Tensor<S>& x, int k) {
  if (x.rank() != 4)
    throw ShapeError("knn_neighbors: input must be rank-4 NCHW");
  const Index N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const Index P = H * W;
  if (k < 1) throw ConfigError("knn_neighbors: k must be >= 1");
  if (k >= P)
    throw ConfigError("knn_neighbors: k=" + std::to_string(k) +
                      " must be below node count " + std::to_string(P));

  NeighborTable table;
  table.n = N;
  table.nodes = P;
  table.k = k;
  table.indices.resize(static_cast<std::size_t>(N * P * k));

  // Node-major copy keeps the per-pair inner loop contiguous.
  std::vector<double> xt(static_cast<std::size_t>(P * C));
  std::vector<std::pair<double, std::int32_t>> cand;
  cand.reserve(static_cast<std::size_t>(P - 1));
  for (Index n = 0; n < N; ++n) {
    for (Index p = 0; p < P; ++p)
      for (Index c = 0; c < C; ++c)
        xt[static_cast<std::size_t>(p * C + c)] =
            static_cast<double>(x[(n * C + c) * P + p]);
    for (Index i = 0; i < P; ++i) {
      cand.clear();
      const double* xi = xt.data() + i * C;
      for (Index j = 0; j < P; ++j) {
        const double* xj = xt.data() + j * C;
        double d2 = 0.0;
        for (Index c = 0; c < C; ++c) {
          const double d = xi[c] - xj[c];
          d2 += d * d;
        }
        ++table.distance_evals;
        if (j != i) cand.emplace_back(d2, static_cast<std::int32_t>(j));
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      std::int32_t* row = table.indices.data() + (n * P + i) * k;
      for (int j = 0; j < k; ++j) row[j] = cand[static_cast<std::size_t>(j)].second;
    }
  }
  return table;
}

// Max-relative aggregation over a neighbor table: per node and channel, the
// max of (neighbor - self). No mask and no zero floor.
template <typename S>
Tensor<S> knn_aggregate(const Tensor<S>& x, const NeighborTable& table) {
  if (x.rank() != 4)
    throw ShapeError("knn_aggregate: input must be rank-4 NCHW");
  const Index N = x.n(), C = x.c(), P = x.h() * x.w();
  if (table.n != N || table.nodes != P)
    throw ShapeError("knn_aggregate: table built for " +
                     std::to_string(table.nodes) + " nodes, input has " +
                     std::to_string(P));
  Tensor<S> out(x.shape());
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c) {
      const S* xp = x.data() + (n * C + c) * P;
      S* op = out.data() + (n * C + c) * P;
      for (Index i = 0; i < P; ++i) {
        const std::int32_t* row = table.indices.data() + (n * P + i) * table.k;
        S best = xp[row[0]] - xp[i];
        for (int j = 1; j < table.k; ++j) {
          const S v = xp[row[j]] - xp[i];
          if (v > best) best = v;
        }
        op[i] = best;
      }
    }
  return out;
}

// Closed-form comparison accounting (distance evaluations, per image).
// The DAGC stats pass visits floor(H/2)*floor(W/2) quadrant grid slots.
struct ComparisonCounts {
  std::int64_t per_node = 0;
  std::int64_t total = 0;       // per image: per_node * (h*w)
  std::int64_t stats_pass = 0;  // per image, DAGC only
};

inline ComparisonCounts count_comparisons(Method method, Index h, Index w,
                                          int k) {
  if (h < 1 || w < 1) throw ConfigError("count_comparisons: empty image");
  if (k < 1) throw ConfigError("count_comparisons: k must be >= 1");
  ComparisonCounts counts;
  switch (method) {
    case Method::knn:
      counts.per_node = h * w;
      break;
    case Method::dagc:
      counts.per_node = (h + k - 1) / k + (w + k - 1) / k;
      counts.stats_pass = (h / 2) * (w / 2);
      break;
    case Method::svga:
      counts.per_node = 0;
      break;
  }
  counts.total = counts.per_node * h * w;
  return counts;
}

// Trace masks flattened to a (N, offsets, H, W) 0/1 tensor for inspection.
inline Tensor<float> trace_to_tensor(const ConnectionTrace& trace) {
  const Index offs = static_cast<Index>(trace.masks.size());
  if (offs == 0) throw ConfigError("trace_to_tensor: empty trace");
  Tensor<float> out(Shape::nchw(trace.n, offs, trace.h, trace.w));
  const Index plane = trace.h * trace.w;
  for (Index n = 0; n < trace.n; ++n)
    for (Index o = 0; o < offs; ++o) {
      const auto& bits = trace.masks[static_cast<std::size_t>(o)].bits;
      for (Index p = 0; p < plane; ++p)
        out[(n * offs + o) * plane + p] =
            bits[static_cast<std::size_t>(n * plane + p)] ? 1.0f : 0.0f;
    }
  return out;
}

// Neighbor indices as a (N, 1, nodes, k) f32 tensor for inspection.
inline Tensor<float> neighbors_to_tensor(const NeighborTable& table) {
  Tensor<float> out(Shape::nchw(table.n, 1, table.nodes, table.k));
  for (Index i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(table.indices[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace axialvig::graph

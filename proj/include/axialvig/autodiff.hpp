#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "axialvig/ops.hpp"
#include "axialvig/tensor.hpp"

namespace axialvig {

// Reverse-mode tape over the primitive operations. Recording evaluates each
// node immediately through the same kernels replay uses, so a forward replay
// reproduces recorded values bit-exactly. Single-threaded per instance.
template <typename S>
class Tape {
 public:
  using Id = std::int32_t;

  enum class Op : std::uint8_t {
    leaf,
    constant,
    conv2d,
    batch_norm,
    gelu,
    roll,
    add,
    sub,
    mul,
    max,
    concat_channels,
    global_avg_pool,
    sum_all,
    mean_all,
  };

  Id leaf(Tensor<S> value, std::string name = {}) {
    Node node;
    node.op = Op::leaf;
    node.value = std::move(value);
    node.name = std::move(name);
    node.requires_grad = true;
    return push(std::move(node));
  }

  Id constant(Tensor<S> value, std::string name = {}) {
    Node node;
    node.op = Op::constant;
    node.value = std::move(value);
    node.name = std::move(name);
    node.requires_grad = false;
    return push(std::move(node));
  }

  Id conv2d(Id x, Id weight, std::optional<Id> bias, int stride, int padding,
            int groups) {
    Node node = make(Op::conv2d, x, weight, bias ? *bias : kNone);
    node.stride = stride;
    node.padding = padding;
    node.groups = groups;
    return push(std::move(node));
  }

  // Running statistics are differentiation constants; gamma/beta are nodes.
  Id batch_norm(Id x, Id gamma, Id beta, Tensor<S> mean, Tensor<S> var,
                S epsilon) {
    Node node = make(Op::batch_norm, x, gamma, beta);
    node.aux_a = std::move(mean);
    node.aux_b = std::move(var);
    node.eps = epsilon;
    return push(std::move(node));
  }

  Id gelu(Id x) { return push(make(Op::gelu, x)); }

  Id roll(Id x, Index shift, Axis axis) {
    Node node = make(Op::roll, x);
    node.shift = shift;
    node.axis = axis;
    return push(std::move(node));
  }

  Id add(Id a, Id b) { return push(make(Op::add, a, b)); }
  Id sub(Id a, Id b) { return push(make(Op::sub, a, b)); }
  Id mul(Id a, Id b) { return push(make(Op::mul, a, b)); }
  // Ties route the adjoint to the first argument.
  Id max(Id a, Id b) { return push(make(Op::max, a, b)); }
  Id concat_channels(Id a, Id b) {
    return push(make(Op::concat_channels, a, b));
  }
  Id global_avg_pool(Id x) { return push(make(Op::global_avg_pool, x)); }
  Id sum_all(Id x) { return push(make(Op::sum_all, x)); }
  Id mean_all(Id x) { return push(make(Op::mean_all, x)); }

  Index size() const { return static_cast<Index>(nodes_.size()); }

  const Tensor<S>& value(Id id) const { return node(id).value; }
  const std::string& name(Id id) const { return node(id).name; }
  bool is_leaf(Id id) const { return node(id).op == Op::leaf; }

  void set_leaf_value(Id id, Tensor<S> value) {
    Node& n = node(id);
    if (n.op != Op::leaf)
      throw TapeError("set_leaf_value: node " + std::to_string(id) +
                      " is not a leaf");
    if (value.shape() != n.value.shape())
      throw TapeError("set_leaf_value: shape " + value.shape().str() +
                      " != recorded " + n.value.shape().str());
    n.value = std::move(value);
  }

  // Recompute every non-leaf value in recorded order.
  void replay() {
    for (Node& n : nodes_)
      if (n.op != Op::leaf && n.op != Op::constant) exec(n);
  }

  std::vector<Id> leaves() const {
    std::vector<Id> ids;
    for (Id i = 0; i < static_cast<Id>(nodes_.size()); ++i)
      if (nodes_[static_cast<std::size_t>(i)].op == Op::leaf) ids.push_back(i);
    return ids;
  }

  // Reverse pass from a scalar loss; returns the adjoint of every node
  // (empty tensors where no gradient flows or none is required).
  std::vector<Tensor<S>> backward(Id loss) const {
    const Node& ln = node(loss);
    if (ln.value.numel() != 1)
      throw TapeError("backward: loss must be scalar, got shape " +
                      ln.value.shape().str());
    std::vector<Tensor<S>> adj(nodes_.size());
    adj[static_cast<std::size_t>(loss)] =
        Tensor<S>::full(ln.value.shape(), S(1));
    for (Id i = loss; i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      Tensor<S>& dy = adj[static_cast<std::size_t>(i)];
      if (dy.empty() || !n.requires_grad) continue;
      accumulate_inputs(n, dy, adj);
    }
    return adj;
  }

  // Gradient of the loss with respect to one leaf (zeros if unreached).
  Tensor<S> gradient(const std::vector<Tensor<S>>& adjoints, Id leaf_id) const {
    const Node& n = node(leaf_id);
    if (n.op != Op::leaf)
      throw TapeError("gradient: node " + std::to_string(leaf_id) +
                      " is not a leaf");
    const Tensor<S>& a = adjoints[static_cast<std::size_t>(leaf_id)];
    if (a.empty()) return Tensor<S>::zeros(n.value.shape());
    return a;
  }

 private:
  static constexpr Id kNone = -1;

  struct Node {
    Op op;
    std::array<Id, 3> in{kNone, kNone, kNone};
    int stride = 1, padding = 0, groups = 1;
    Index shift = 0;
    Axis axis = Axis::height;
    Tensor<S> aux_a, aux_b;  // batch_norm running mean / var
    S eps{};
    Tensor<S> value;
    std::string name;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;

  Node& node(Id id) {
    if (id < 0 || id >= static_cast<Id>(nodes_.size()))
      throw TapeError("untaped value referenced: id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(Id id) const {
    return const_cast<Tape*>(this)->node(id);
  }

  Node make(Op op, Id a, Id b = kNone, Id c = kNone) {
    node(a);  // validate
    if (b != kNone) node(b);
    if (c != kNone) node(c);
    Node n;
    n.op = op;
    n.in = {a, b, c};
    return n;
  }

  Id push(Node node) {
    if (node.op != Op::leaf && node.op != Op::constant) {
      node.requires_grad = false;
      for (Id in : node.in)
        if (in != kNone && nodes_[static_cast<std::size_t>(in)].requires_grad)
          node.requires_grad = true;
      exec(node);
    }
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
  }

  const Tensor<S>& in_val(const Node& n, int i) const {
    return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(i)])]
        .value;
  }

  void exec(Node& n) {
    switch (n.op) {
      case Op::conv2d: {
        const Tensor<S>* bias =
            n.in[2] == kNone ? nullptr : &in_val(n, 2);
        n.value = ops::conv2d(in_val(n, 0), in_val(n, 1), bias, n.stride,
                              n.padding, n.groups);
        break;
      }
      case Op::batch_norm:
        n.value = ops::batch_norm(in_val(n, 0), in_val(n, 1), in_val(n, 2),
                                  n.aux_a, n.aux_b, n.eps);
        break;
      case Op::gelu:
        n.value = ops::gelu(in_val(n, 0));
        break;
      case Op::roll:
        n.value = ops::roll(in_val(n, 0), n.shift, n.axis);
        break;
      case Op::add:
        n.value = ops::elementwise(ops::EwOp::add, in_val(n, 0), in_val(n, 1));
        break;
      case Op::sub:
        n.value = ops::elementwise(ops::EwOp::sub, in_val(n, 0), in_val(n, 1));
        break;
      case Op::mul:
        n.value = ops::elementwise(ops::EwOp::mul, in_val(n, 0), in_val(n, 1));
        break;
      case Op::max:
        n.value = ops::elementwise(ops::EwOp::max, in_val(n, 0), in_val(n, 1));
        break;
      case Op::concat_channels:
        n.value = ops::concat_channels(in_val(n, 0), in_val(n, 1));
        break;
      case Op::global_avg_pool:
        n.value = ops::global_avg_pool(in_val(n, 0));
        break;
      case Op::sum_all:
        n.value = Tensor<S>::full(Shape{1},
                                  static_cast<S>(ops::sum_all(in_val(n, 0))));
        break;
      case Op::mean_all:
        n.value = Tensor<S>::full(Shape{1},
                                  static_cast<S>(ops::mean_all(in_val(n, 0))));
        break;
      case Op::leaf:
      case Op::constant:
        break;
    }
  }

  static void accum(std::vector<Tensor<S>>& adj, Id id, const Node& target,
                    Tensor<S> grad) {
    if (!target.requires_grad) return;
    Tensor<S>& slot = adj[static_cast<std::size_t>(id)];
    if (slot.empty()) {
      slot = std::move(grad);
    } else {
      for (Index i = 0; i < slot.numel(); ++i) slot[i] += grad[i];
    }
  }

  void accumulate_inputs(const Node& n, const Tensor<S>& dy,
                         std::vector<Tensor<S>>& adj) const {
    switch (n.op) {
      case Op::leaf:
      case Op::constant:
        return;
      case Op::conv2d:
        conv2d_backward(n, dy, adj);
        return;
      case Op::batch_norm:
        batch_norm_backward(n, dy, adj);
        return;
      case Op::gelu: {
        const Tensor<S>& x = in_val(n, 0);
        Tensor<S> dx(x.shape());
        for (Index i = 0; i < x.numel(); ++i)
          dx[i] = dy[i] * static_cast<S>(ops::gelu_grad_scalar(
                              static_cast<double>(x[i])));
        accum(adj, n.in[0], node(n.in[0]), std::move(dx));
        return;
      }
      case Op::roll:
        accum(adj, n.in[0], node(n.in[0]), ops::roll(dy, -n.shift, n.axis));
        return;
      case Op::add:
        accum(adj, n.in[0], node(n.in[0]), dy);
        accum(adj, n.in[1], node(n.in[1]), dy);
        return;
      case Op::sub: {
        accum(adj, n.in[0], node(n.in[0]), dy);
        Tensor<S> neg(dy.shape());
        for (Index i = 0; i < dy.numel(); ++i) neg[i] = -dy[i];
        accum(adj, n.in[1], node(n.in[1]), std::move(neg));
        return;
      }
      case Op::mul: {
        const Tensor<S>& a = in_val(n, 0);
        const Tensor<S>& b = in_val(n, 1);
        if (node(n.in[0]).requires_grad)
          accum(adj, n.in[0], node(n.in[0]),
                ops::elementwise(ops::EwOp::mul, dy, b));
        if (node(n.in[1]).requires_grad) {
          if (a.shape() == b.shape()) {
            accum(adj, n.in[1], node(n.in[1]),
                  ops::elementwise(ops::EwOp::mul, dy, a));
          } else {
            // b is channel-broadcast: reduce the adjoint over channels.
            Tensor<S> db = Tensor<S>::zeros(b.shape());
            const Index plane = a.h() * a.w();
            for (Index bn = 0; bn < a.n(); ++bn)
              for (Index c = 0; c < a.c(); ++c)
                for (Index p = 0; p < plane; ++p)
                  db[bn * plane + p] += dy[(bn * a.c() + c) * plane + p] *
                                        a[(bn * a.c() + c) * plane + p];
            accum(adj, n.in[1], node(n.in[1]), std::move(db));
          }
        }
        return;
      }
      case Op::max: {
        const Tensor<S>& a = in_val(n, 0);
        const Tensor<S>& b = in_val(n, 1);
        Tensor<S> da(a.shape()), db(b.shape());
        for (Index i = 0; i < a.numel(); ++i) {
          const bool first = a[i] >= b[i];
          da[i] = first ? dy[i] : S(0);
          db[i] = first ? S(0) : dy[i];
        }
        accum(adj, n.in[0], node(n.in[0]), std::move(da));
        accum(adj, n.in[1], node(n.in[1]), std::move(db));
        return;
      }
      case Op::concat_channels: {
        const Tensor<S>& a = in_val(n, 0);
        const Tensor<S>& b = in_val(n, 1);
        accum(adj, n.in[0], node(n.in[0]),
              ops::slice_channels(dy, 0, a.c()));
        accum(adj, n.in[1], node(n.in[1]),
              ops::slice_channels(dy, a.c(), a.c() + b.c()));
        return;
      }
      case Op::global_avg_pool: {
        const Tensor<S>& x = in_val(n, 0);
        const Index plane = x.h() * x.w();
        Tensor<S> dx(x.shape());
        for (Index bn = 0; bn < x.n(); ++bn)
          for (Index c = 0; c < x.c(); ++c) {
            const S g = dy.at(bn, c, 0, 0) / static_cast<S>(plane);
            S* dp = dx.data() + dx.offset(bn, c, 0, 0);
            for (Index i = 0; i < plane; ++i) dp[i] = g;
          }
        accum(adj, n.in[0], node(n.in[0]), std::move(dx));
        return;
      }
      case Op::sum_all:
        accum(adj, n.in[0], node(n.in[0]),
              Tensor<S>::full(in_val(n, 0).shape(), dy[0]));
        return;
      case Op::mean_all:
        accum(adj, n.in[0], node(n.in[0]),
              Tensor<S>::full(in_val(n, 0).shape(),
                              dy[0] / static_cast<S>(in_val(n, 0).numel())));
        return;
    }
  }

  void conv2d_backward(const Node& n, const Tensor<S>& dy,
                       std::vector<Tensor<S>>& adj) const {
    const Tensor<S>& x = in_val(n, 0);
    const Tensor<S>& w = in_val(n, 1);
    const bool wants_dx = node(n.in[0]).requires_grad;
    const bool wants_dw = node(n.in[1]).requires_grad;
    const bool wants_db = n.in[2] != kNone && node(n.in[2]).requires_grad;
    Tensor<S> dx = wants_dx ? Tensor<S>::zeros(x.shape()) : Tensor<S>();
    Tensor<S> dw = wants_dw ? Tensor<S>::zeros(w.shape()) : Tensor<S>();
    Tensor<S> db = wants_db ? Tensor<S>::zeros(in_val(n, 2).shape()) : Tensor<S>();

    const Index N = x.n(), H = x.h(), W = x.w();
    const Index OC = w.dim(0), CG = w.dim(1), KH = w.dim(2), KW = w.dim(3);
    const Index OH = dy.h(), OW = dy.w();
    const Index G = n.groups, OG = OC / G;
    for (Index bn = 0; bn < N; ++bn)
      for (Index oc = 0; oc < OC; ++oc) {
        const Index g = oc / OG;
        for (Index oh = 0; oh < OH; ++oh)
          for (Index ow = 0; ow < OW; ++ow) {
            const S gy = dy.at(bn, oc, oh, ow);
            if (wants_db) db[oc] += gy;
            for (Index icl = 0; icl < CG; ++icl) {
              const Index ic = g * CG + icl;
              for (Index kh = 0; kh < KH; ++kh) {
                const Index ih = oh * n.stride - n.padding + kh;
                if (ih < 0 || ih >= H) continue;
                for (Index kw = 0; kw < KW; ++kw) {
                  const Index iw = ow * n.stride - n.padding + kw;
                  if (iw < 0 || iw >= W) continue;
                  if (wants_dx)
                    dx.at(bn, ic, ih, iw) += w.at(oc, icl, kh, kw) * gy;
                  if (wants_dw)
                    dw.at(oc, icl, kh, kw) += x.at(bn, ic, ih, iw) * gy;
                }
              }
            }
          }
      }
    if (wants_dx) accum(adj, n.in[0], node(n.in[0]), std::move(dx));
    if (wants_dw) accum(adj, n.in[1], node(n.in[1]), std::move(dw));
    if (wants_db) accum(adj, n.in[2], node(n.in[2]), std::move(db));
  }

  void batch_norm_backward(const Node& n, const Tensor<S>& dy,
                           std::vector<Tensor<S>>& adj) const {
    const Tensor<S>& x = in_val(n, 0);
    const Tensor<S>& gamma = in_val(n, 1);
    const Index C = x.c(), plane = x.h() * x.w();
    const bool wants_dx = node(n.in[0]).requires_grad;
    const bool wants_dg = node(n.in[1]).requires_grad;
    const bool wants_db = node(n.in[2]).requires_grad;
    Tensor<S> dx = wants_dx ? Tensor<S>(x.shape()) : Tensor<S>();
    Tensor<S> dg = wants_dg ? Tensor<S>::zeros(gamma.shape()) : Tensor<S>();
    Tensor<S> db = wants_db ? Tensor<S>::zeros(gamma.shape()) : Tensor<S>();
    for (Index c = 0; c < C; ++c) {
      const S inv_std = S(1) / std::sqrt(n.aux_b[c] + n.eps);
      const S mean = n.aux_a[c];
      for (Index bn = 0; bn < x.n(); ++bn) {
        const Index base = (bn * C + c) * plane;
        for (Index p = 0; p < plane; ++p) {
          const S gy = dy[base + p];
          if (wants_dx) dx[base + p] = gy * gamma[c] * inv_std;
          if (wants_dg) dg[c] += gy * (x[base + p] - mean) * inv_std;
          if (wants_db) db[c] += gy;
        }
      }
    }
    if (wants_dx) accum(adj, n.in[0], node(n.in[0]), std::move(dx));
    if (wants_dg) accum(adj, n.in[1], node(n.in[1]), std::move(dg));
    if (wants_db) accum(adj, n.in[2], node(n.in[2]), std::move(db));
  }
};

// Central finite differences of a scalar-loss tape with respect to one leaf,
// evaluated by replaying the tape with perturbed leaf values. Masks and other
// recorded constants stay frozen across evaluations.
template <typename S>
Tensor<S> finite_difference(Tape<S>& tape, typename Tape<S>::Id loss,
                            typename Tape<S>::Id leaf, double step) {
  const Tensor<S> base = tape.value(leaf);
  Tensor<S> grad(base.shape());
  Tensor<S> probe = base;
  for (Index i = 0; i < base.numel(); ++i) {
    probe[i] = base[i] + static_cast<S>(step);
    tape.set_leaf_value(leaf, probe);
    tape.replay();
    const double up = static_cast<double>(tape.value(loss)[0]);
    probe[i] = base[i] - static_cast<S>(step);
    tape.set_leaf_value(leaf, probe);
    tape.replay();
    const double down = static_cast<double>(tape.value(loss)[0]);
    probe[i] = base[i];
    grad[i] = static_cast<S>((up - down) / (2.0 * step));
  }
  tape.set_leaf_value(leaf, base);
  tape.replay();
  return grad;
}

// max |analytic - fd| / max(floor, |analytic|, |fd|)
template <typename S>
double max_relative_error(const Tensor<S>& analytic, const Tensor<S>& fd,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.numel(); ++i) {
    const double a = static_cast<double>(analytic[i]);
    const double f = static_cast<double>(fd[i]);
    const double denom = std::max({floor, std::abs(a), std::abs(f)});
    worst = std::max(worst, std::abs(a - f) / denom);
  }
  return worst;
}

}  // namespace axialvig

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "axialvig/autodiff.hpp"
#include "axialvig/gvt.hpp"
#include "axialvig/ops.hpp"
#include "axialvig/rng.hpp"
#include "axialvig/tensor.hpp"
#include "axialvig/verify.hpp"

using namespace axialvig;

namespace {

Tensor<double> rand_t(Shape shape, std::uint64_t seed, double lo = -1.0,
                      double hi = 1.0) {
  SplitMix64 rng(seed);
  return Tensor<double>::uniform(shape, rng, lo, hi);
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (Index i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("shape: invariants") {
  const Shape s{2, 3, 4, 5};
  CHECK(s.rank() == 4);
  CHECK(s.numel() == 120);
  CHECK(s.str() == "(2,3,4,5)");
  CHECK_THROWS_AS(Shape{0}, ShapeError);
  CHECK_THROWS_AS((Shape{1, 0, 4, 4}), ShapeError);  // channel extent >= 1
  CHECK_THROWS_AS((Shape{1, 2, 3, 4, 5}), ShapeError);
}

TEST_CASE("tensor: layout and construction") {
  Tensor<double> t(Shape::nchw(2, 3, 4, 5));
  CHECK(t.numel() == 120);
  // element (n,c,h,w) at ((n*C + c)*H + h)*W + w
  CHECK(t.offset(1, 2, 3, 4) == ((1 * 3 + 2) * 4 + 3) * 5 + 4);
  t.at(1, 2, 3, 4) = 7.5;
  CHECK(t[t.offset(1, 2, 3, 4)] == 7.5);
  CHECK_THROWS_AS(Tensor<double>::from(Shape{3}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(t.reshaped(Shape{7}), ShapeError);
  CHECK(t.reshaped(Shape{120}).numel() == 120);
}

TEST_CASE("rng: splitmix64 reference stream") {
  SplitMix64 a(0);
  CHECK(a.next_u64() == 0xE220A8397B1DCDAFull);
  CHECK(a.next_u64() == 0x6E789E6AA1B965F4ull);
  CHECK(a.next_u64() == 0x06C45D188009454Full);
  SplitMix64 b(42), c(42);
  for (int i = 0; i < 100; ++i) CHECK(b.next_u64() == c.next_u64());
  SplitMix64 d(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("gvt: round trip is bit-exact for both dtypes") {
  const auto t64 = rand_t(Shape::nchw(2, 3, 4, 5), 11);
  std::stringstream buf64;
  gvt::write(buf64, t64);
  CHECK(gvt::read<double>(buf64).same_bits(t64));

  SplitMix64 rng(12);
  const auto t32 = Tensor<float>::uniform(Shape{7}, rng, -2.f, 2.f);
  std::stringstream buf32;
  gvt::write(buf32, t32);
  CHECK(gvt::read<float>(buf32).same_bits(t32));
}

TEST_CASE("gvt: malformed inputs") {
  const auto t = rand_t(Shape{4}, 3);
  std::stringstream buf;
  gvt::write(buf, t);
  const std::string bytes = buf.str();

  // truncation anywhere in the record
  for (std::size_t cut : {std::size_t(2), std::size_t(9), bytes.size() - 3}) {
    std::stringstream part(bytes.substr(0, cut));
    CHECK_THROWS_AS(gvt::read<double>(part), FormatError);
  }
  // bad magic
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  std::stringstream bad(corrupt);
  CHECK_THROWS_AS(gvt::read<double>(bad), FormatError);
  // dtype mismatch
  std::stringstream again(bytes);
  CHECK_THROWS_AS(gvt::read<float>(again), FormatError);
  // read_any dispatches on the stored dtype
  std::stringstream once_more(bytes);
  const auto any = gvt::read_any(once_more);
  CHECK(std::holds_alternative<Tensor<double>>(any));
}

TEST_CASE("conv2d: identity 1x1 kernel over channels") {
  const auto x = rand_t(Shape::nchw(1, 3, 4, 4), 21);
  ops::ConvParams<double> p;
  p.weight = Tensor<double>::zeros(Shape{3, 3, 1, 1});
  for (Index c = 0; c < 3; ++c) p.weight.at(c, c, 0, 0) = 1.0;
  p.bias = Tensor<double>::zeros(Shape{3});
  CHECK(max_abs_diff(ops::conv2d(x, p), x) == 0.0);
}

TEST_CASE("conv2d: bias passthrough on zero input") {
  const auto x = Tensor<double>::zeros(Shape::nchw(2, 2, 3, 3));
  ops::ConvParams<double> p;
  p.weight = rand_t(Shape{4, 2, 3, 3}, 5);
  p.bias = Tensor<double>::from(Shape{4}, {0.5, -1.0, 2.0, 0.0});
  p.padding = 1;
  const auto y = ops::conv2d(x, p);
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 4; ++c)
      for (Index h = 0; h < 3; ++h)
        for (Index w = 0; w < 3; ++w)
          CHECK(y.at(n, c, h, w) == (*p.bias)[c]);
}

TEST_CASE("conv2d: overlap counts with all-ones kernel") {
  const auto x = Tensor<double>::full(Shape::nchw(1, 1, 4, 4), 1.0);
  ops::ConvParams<double> p;
  p.weight = Tensor<double>::full(Shape{1, 1, 3, 3}, 1.0);
  p.padding = 1;
  const auto y = ops::conv2d(x, p);
  CHECK(y.at(0, 0, 1, 1) == 9.0);  // interior
  CHECK(y.at(0, 0, 0, 0) == 4.0);  // corner
  CHECK(y.at(0, 0, 0, 1) == 6.0);  // edge
}

TEST_CASE("conv2d: matches the six-loop oracle across geometries") {
  int cases = 0;
  for (Index n : {1, 2})
    for (Index cin : {1, 2, 4})
      for (Index cout : {1, 3})
        for (Index k : {1, 3})
          for (int stride : {1, 2})
            for (int pad : {0, 1}) {
              const auto x =
                  rand_t(Shape::nchw(n, cin, 8, 7), 1000 + cases);
              ops::ConvParams<double> p;
              SplitMix64 rng(2000 + cases);
              p.weight =
                  Tensor<double>::uniform(Shape{cout, cin, k, k}, rng, -1, 1);
              p.bias = Tensor<double>::uniform(Shape{cout}, rng, -1, 1);
              p.stride = stride;
              p.padding = pad;
              CHECK(max_abs_diff(ops::conv2d(x, p),
                                 verify::naive_conv2d(x, p)) <= 1e-12);
              ++cases;
            }
  CHECK(cases == 48);
}

TEST_CASE("conv2d: grouped matches the oracle") {
  const auto x = rand_t(Shape::nchw(2, 4, 6, 6), 31);
  ops::ConvParams<double> p;
  SplitMix64 rng(32);
  p.weight = Tensor<double>::uniform(Shape{6, 2, 3, 3}, rng, -1, 1);
  p.bias = Tensor<double>::uniform(Shape{6}, rng, -1, 1);
  p.groups = 2;
  p.padding = 1;
  CHECK(max_abs_diff(ops::conv2d(x, p), verify::naive_conv2d(x, p)) <= 1e-12);
}

TEST_CASE("conv2d: shape errors name the offending axis") {
  const auto x = rand_t(Shape::nchw(1, 3, 4, 4), 41);
  ops::ConvParams<double> p;
  p.weight = rand_t(Shape{2, 4, 1, 1}, 42);
  CHECK_THROWS_WITH_AS(ops::conv2d(x, p),
                       doctest::Contains("channel axis"), ShapeError);
  p.weight = rand_t(Shape{2, 3, 7, 7}, 43);
  CHECK_THROWS_WITH_AS(ops::conv2d(x, p),
                       doctest::Contains("height axis"), ShapeError);
}

TEST_CASE("depthwise: center-one kernel is the identity") {
  const auto x = rand_t(Shape::nchw(1, 3, 5, 5), 51);
  ops::ConvParams<double> p;
  p.weight = Tensor<double>::zeros(Shape{3, 1, 3, 3});
  for (Index c = 0; c < 3; ++c) p.weight.at(c, 0, 1, 1) = 1.0;
  p.groups = 3;
  p.padding = 1;
  CHECK(max_abs_diff(ops::depthwise_conv2d(x, p), x) == 0.0);
}

TEST_CASE("depthwise: equals grouped conv and the per-channel oracle") {
  const auto x = rand_t(Shape::nchw(1, 2, 4, 4), 61);
  ops::ConvParams<double> p;
  SplitMix64 rng(62);
  p.weight = Tensor<double>::uniform(Shape{2, 1, 3, 3}, rng, -1, 1);
  p.bias = Tensor<double>::uniform(Shape{2}, rng, -1, 1);
  p.groups = 2;
  p.padding = 1;
  const auto y = ops::depthwise_conv2d(x, p);
  CHECK(max_abs_diff(y, ops::conv2d(x, p)) == 0.0);
  CHECK(max_abs_diff(y, verify::naive_depthwise_conv2d(x, p)) <= 1e-12);

  ops::ConvParams<double> wrong = p;
  wrong.groups = 1;
  CHECK_THROWS_AS(ops::depthwise_conv2d(x, wrong), ConfigError);
}

TEST_CASE("batch_norm: identity, constant, and scalar example") {
  const auto x = rand_t(Shape::nchw(1, 2, 3, 3), 71);
  ops::BatchNormParams<double> p;
  p.gamma = Tensor<double>::full(Shape{2}, 1.0);
  p.beta = Tensor<double>::zeros(Shape{2});
  p.running_mean = Tensor<double>::zeros(Shape{2});
  p.running_var = Tensor<double>::full(Shape{2}, 1.0);
  p.epsilon = 0.0;
  CHECK(max_abs_diff(ops::batch_norm(x, p), x) <= 1e-15);

  p.gamma = Tensor<double>::zeros(Shape{2});
  p.beta = Tensor<double>::from(Shape{2}, {0.25, -3.0});
  const auto y = ops::batch_norm(x, p);
  for (Index c = 0; c < 2; ++c)
    for (Index i = 0; i < 9; ++i)
      CHECK(y[c * 9 + i] == p.beta[c]);

  // 3*(2-1)/1 - 1 = 2
  const auto x2 = Tensor<double>::full(Shape::nchw(1, 1, 1, 1), 2.0);
  ops::BatchNormParams<double> q;
  q.gamma = Tensor<double>::full(Shape{1}, 3.0);
  q.beta = Tensor<double>::full(Shape{1}, -1.0);
  q.running_mean = Tensor<double>::full(Shape{1}, 1.0);
  q.running_var = Tensor<double>::full(Shape{1}, 1.0);
  q.epsilon = 0.0;
  CHECK(ops::batch_norm(x2, q)[0] == doctest::Approx(2.0).epsilon(1e-14));

  ops::BatchNormParams<double> bad = q;
  bad.gamma = Tensor<double>::zeros(Shape{2});
  CHECK_THROWS_AS(ops::batch_norm(x2, bad), ShapeError);
}

TEST_CASE("gelu: exact erf values") {
  CHECK(ops::gelu_scalar(0.0) == 0.0);
  CHECK(std::abs(ops::gelu_scalar(10.0) - 10.0) <= 1e-9);
  CHECK(std::abs(ops::gelu_scalar(1.0) - 0.8413447461) <= 1e-9);
  const auto x = Tensor<double>::from(Shape{3}, {0.0, 1.0, -2.0});
  const auto y = ops::gelu(x);
  CHECK(y[0] == 0.0);
  CHECK(std::abs(y[1] - 0.8413447461) <= 1e-9);
}

TEST_CASE("roll: wraparound semantics") {
  const auto x = rand_t(Shape::nchw(2, 2, 4, 3), 81);
  CHECK(ops::roll(x, 0, Axis::height).same_bits(x));
  CHECK(ops::roll(x, 4, Axis::height).same_bits(x));
  CHECK(ops::roll(x, 3, Axis::width).same_bits(x));

  // column [a,b,c,d] rolled down 1 -> [d,a,b,c]
  const auto col = Tensor<double>::from(Shape::nchw(1, 1, 4, 1),
                                        {1.0, 2.0, 3.0, 4.0});
  const auto rolled = ops::roll(col, 1, Axis::height);
  CHECK(rolled.at(0, 0, 0, 0) == 4.0);
  CHECK(rolled.at(0, 0, 1, 0) == 1.0);
  CHECK(rolled.at(0, 0, 2, 0) == 2.0);
  CHECK(rolled.at(0, 0, 3, 0) == 3.0);
  CHECK(ops::roll(ops::roll(x, 5, Axis::width), -5, Axis::width).same_bits(x));
}

TEST_CASE("elementwise: ops and channel broadcast") {
  const auto x = rand_t(Shape::nchw(1, 3, 2, 2), 91);
  CHECK(ops::elementwise(ops::EwOp::max, x, x).same_bits(x));
  const auto zero_mask = Tensor<double>::zeros(Shape::nchw(1, 1, 2, 2));
  const auto masked = ops::elementwise(ops::EwOp::mul, x, zero_mask);
  for (Index i = 0; i < masked.numel(); ++i) CHECK(masked[i] == 0.0);

  const auto a = Tensor<double>::from(Shape{2}, {1.0, -2.0});
  const auto z = Tensor<double>::zeros(Shape{2});
  const auto m = ops::elementwise(ops::EwOp::max, a, z);
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 0.0);

  const auto bad = rand_t(Shape::nchw(1, 3, 3, 2), 92);
  CHECK_THROWS_AS(ops::elementwise(ops::EwOp::add, x, bad), ShapeError);
}

TEST_CASE("concat_channels: layout and errors") {
  const auto a = rand_t(Shape::nchw(1, 2, 4, 4), 101);
  const auto b = rand_t(Shape::nchw(1, 3, 4, 4), 102);
  const auto cat = ops::concat_channels(a, b);
  CHECK(cat.shape() == Shape::nchw(1, 5, 4, 4));
  CHECK(ops::slice_channels(cat, 0, 1).same_bits(ops::slice_channels(a, 0, 1)));
  CHECK(ops::slice_channels(cat, 0, 2).same_bits(a));
  CHECK(ops::slice_channels(cat, 2, 5).same_bits(b));
  const auto c = rand_t(Shape::nchw(1, 2, 5, 4), 103);
  CHECK_THROWS_AS(ops::concat_channels(a, c), ShapeError);
}

TEST_CASE("global_avg_pool: mean, idempotence") {
  const auto c = Tensor<double>::full(Shape::nchw(2, 3, 4, 4), -0.75);
  const auto pooled = ops::global_avg_pool(c);
  CHECK(pooled.shape() == Shape::nchw(2, 3, 1, 1));
  for (Index i = 0; i < pooled.numel(); ++i) CHECK(pooled[i] == -0.75);
  CHECK(ops::global_avg_pool(pooled).same_bits(pooled));

  const auto m = Tensor<double>::from(Shape::nchw(1, 1, 2, 2),
                                      {1.0, 2.0, 3.0, 4.0});
  CHECK(ops::global_avg_pool(m)[0] == 2.5);
}

// ---------------------------------------------------------------------------
// Reverse-mode gradients.

TEST_CASE("tape: sum loss gives all-ones gradient") {
  Tape<double> tape;
  const auto x = tape.leaf(rand_t(Shape::nchw(1, 2, 3, 3), 111), "x");
  const auto loss = tape.sum_all(x);
  const auto adj = tape.backward(loss);
  const auto g = tape.gradient(adj, x);
  for (Index i = 0; i < g.numel(); ++i) CHECK(g[i] == 1.0);
}

TEST_CASE("tape: gelu gradient at zero is one half") {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor<double>::zeros(Shape::nchw(1, 1, 2, 2)), "x");
  const auto loss = tape.sum_all(tape.gelu(x));
  const auto g = tape.gradient(tape.backward(loss), x);
  for (Index i = 0; i < g.numel(); ++i)
    CHECK(g[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tape: misuse errors") {
  Tape<double> tape;
  const auto x = tape.leaf(rand_t(Shape{4}, 1), "x");
  CHECK_THROWS_AS(tape.value(99), TapeError);
  CHECK_THROWS_AS(tape.backward(x), TapeError);  // non-scalar loss
  CHECK_THROWS_AS(tape.set_leaf_value(1, Tensor<double>::zeros(Shape{4})),
                  TapeError);
}

namespace {

// Builds a tape around one primitive and checks every leaf against central
// finite differences.
template <typename BuildFn>
void primitive_fd_case(const std::string& what, BuildFn build) {
  Tape<double> tape;
  typename Tape<double>::Id loss = build(tape);
  const auto adj = tape.backward(loss);
  for (const auto leaf : tape.leaves()) {
    const auto an = tape.gradient(adj, leaf);
    const auto fd = finite_difference(tape, loss, leaf, 1e-5);
    const double err = max_relative_error(an, fd);
    INFO(what, " leaf ", tape.name(leaf));
    CHECK(err < 1e-4);
  }
}

}  // namespace

TEST_CASE("tape: every primitive matches finite differences") {
  primitive_fd_case("conv2d stride2 pad1 groups2", [](Tape<double>& t) {
    const auto x = t.leaf(rand_t(Shape::nchw(2, 4, 5, 6), 201), "x");
    const auto w = t.leaf(rand_t(Shape{6, 2, 3, 3}, 202), "w");
    const auto b = t.leaf(rand_t(Shape{6}, 203), "b");
    return t.mean_all(t.conv2d(x, w, b, 2, 1, 2));
  });
  primitive_fd_case("batch_norm", [](Tape<double>& t) {
    const auto x = t.leaf(rand_t(Shape::nchw(1, 3, 4, 4), 211), "x");
    const auto g = t.leaf(rand_t(Shape{3}, 212, 0.5, 1.5), "gamma");
    const auto b = t.leaf(rand_t(Shape{3}, 213), "beta");
    return t.mean_all(t.batch_norm(x, g, b, rand_t(Shape{3}, 214),
                                   rand_t(Shape{3}, 215, 0.5, 2.0), 1e-5));
  });
  primitive_fd_case("gelu", [](Tape<double>& t) {
    const auto x = t.leaf(rand_t(Shape::nchw(1, 2, 4, 4), 221), "x");
    return t.mean_all(t.gelu(x));
  });
  primitive_fd_case("roll", [](Tape<double>& t) {
    const auto x = t.leaf(rand_t(Shape::nchw(1, 2, 4, 5), 231), "x");
    return t.mean_all(t.roll(x, 3, Axis::width));
  });
  primitive_fd_case("add/sub/mul chain", [](Tape<double>& t) {
    const auto a = t.leaf(rand_t(Shape::nchw(1, 2, 3, 3), 241), "a");
    const auto b = t.leaf(rand_t(Shape::nchw(1, 2, 3, 3), 242), "b");
    return t.mean_all(t.mul(t.add(a, b), t.sub(a, b)));
  });
  primitive_fd_case("mul with channel-broadcast mask", [](Tape<double>& t) {
    const auto a = t.leaf(rand_t(Shape::nchw(1, 3, 3, 3), 251), "a");
    const auto m = t.leaf(rand_t(Shape::nchw(1, 1, 3, 3), 252), "mask");
    return t.mean_all(t.mul(a, m));
  });
  primitive_fd_case("max", [](Tape<double>& t) {
    const auto a = t.leaf(rand_t(Shape::nchw(1, 2, 4, 4), 261), "a");
    const auto b = t.leaf(rand_t(Shape::nchw(1, 2, 4, 4), 262), "b");
    return t.mean_all(t.max(a, b));
  });
  primitive_fd_case("concat + pool", [](Tape<double>& t) {
    const auto a = t.leaf(rand_t(Shape::nchw(1, 2, 4, 4), 271), "a");
    const auto b = t.leaf(rand_t(Shape::nchw(1, 3, 4, 4), 272), "b");
    return t.mean_all(t.global_avg_pool(t.concat_channels(a, b)));
  });
}

TEST_CASE("tape: replay reproduces recorded values bit-exactly") {
  Tape<double> tape;
  const auto x = tape.leaf(rand_t(Shape::nchw(1, 2, 4, 4), 281), "x");
  const auto w = tape.leaf(rand_t(Shape{2, 2, 3, 3}, 282), "w");
  const auto y = tape.gelu(tape.conv2d(x, w, std::nullopt, 1, 1, 1));
  const auto loss = tape.mean_all(y);
  const auto y_rec = tape.value(y);
  const auto l_rec = tape.value(loss);
  tape.replay();
  CHECK(tape.value(y).same_bits(y_rec));
  CHECK(tape.value(loss).same_bits(l_rec));
}

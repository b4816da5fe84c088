// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run via ctest (target "acceptance") or directly.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "axialvig/bench.hpp"
#include "axialvig/cost.hpp"
#include "axialvig/gvt.hpp"
#include "axialvig/model.hpp"
#include "axialvig/verify.hpp"

using namespace axialvig;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(int number, const std::string& name, bool pass,
               const std::string& detail) {
  std::printf("[%s] criterion %2d: %s — %s\n", pass ? "PASS" : "FAIL", number,
              name.c_str(), detail.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor<double> rand_t(Shape shape, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return Tensor<double>::uniform(shape, rng, -1.0, 1.0);
}

// 1. DAGC/SVGA/KNN match brute-force per-node oracles to 1e-12 over the
//    full H,W x C x K grid, five seeds each.
void criterion_1() {
  const auto start = Clock::now();
  const auto suite = verify::run_oracle_suite();
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << suite.cases.size() << " cases, " << suite.failures()
         << " failures, " << elapsed << " s";
  bool pass = suite.pass() && elapsed < 120.0;
  if (!pass)
    for (const auto& c : suite.cases)
      if (!c.pass) {
        detail << "; first failure " << c.id << " (" << c.detail << ")";
        break;
      }
  criterion(1, "oracle equivalence (grid, 5 seeds, <2 min)", pass,
            detail.str());
}

// 2. Constant images: mu = sigma = 0, zero connections, zero X_final;
//    mask-forced-true DAGC bit-equals SVGA.
void criterion_2() {
  const auto c = Tensor<double>::full(Shape::nchw(2, 4, 8, 8), 0.25);
  const auto stats = graph::estimate_stats(c);
  bool pass = true;
  for (const auto& s : stats.per_image)
    pass = pass && s.mu == 0.0 && s.sigma == 0.0;
  const auto agg = graph::dagc_aggregate(c, 2, stats.per_image);
  pass = pass && agg.trace.connection_count == 0;
  for (Index i = 0; i < agg.x_final.numel(); ++i)
    pass = pass && agg.x_final[i] == 0.0;

  const auto x = rand_t(Shape::nchw(2, 3, 8, 6), 2024);
  const auto xs = graph::estimate_stats(x);
  const auto forced = graph::dagc_aggregate(
      x, 2, xs.per_image, std::numeric_limits<double>::infinity());
  const bool bit_equal = forced.x_final.same_bits(graph::svga_aggregate(x, 2));
  pass = pass && bit_equal;
  criterion(2, "Algorithm-1 edge semantics", pass,
            bit_equal ? "constant image degenerate, forced mask == svga"
                      : "forced-mask DAGC != SVGA");
}

// 3. Gradient checks for the DAGC block, Dynamic Grapher, FFN and MBConv on
//    1x8x8x8 f64 inputs: max relative error < 1e-4, mask constant.
void criterion_3() {
  const auto start = Clock::now();
  bool pass = true;
  std::ostringstream detail;
  for (auto kind : {verify::BlockKind::dagc, verify::BlockKind::grapher,
                    verify::BlockKind::ffn, verify::BlockKind::mbconv,
                    verify::BlockKind::pair}) {
    const auto rep = verify::gradcheck_block(kind, 7);
    pass = pass && rep.pass;
    detail << rep.block << "=" << rep.max_rel_err << " ";
  }
  const double elapsed = seconds_since(start);
  detail << "(" << elapsed << " s)";
  criterion(3, "gradient checks vs central differences", pass && elapsed < 60,
            detail.str());
}

// 4. Instrumented comparison counters equal the closed forms; at 56x56, K=8
//    the DAGC/KNN per-node ratio is 14/3136.
void criterion_4() {
  bool pass = true;
  std::ostringstream detail;
  for (Index h : {4, 6, 8, 16})
    for (Index w : {4, 6, 8})
      for (int k : {1, 2, 4}) {
        const auto x = rand_t(Shape::nchw(1, 2, h, w), 40 + h + w + k);
        const auto stats = graph::estimate_stats(x);
        const auto agg = graph::dagc_aggregate(x, k, stats.per_image);
        const auto closed = graph::count_comparisons(graph::Method::dagc, h, w, k);
        if (agg.trace.distance_evals != closed.total ||
            stats.comparisons_per_image != closed.stats_pass)
          pass = false;
        const int kk = 2;
        const auto nb = graph::knn_neighbors(x, kk);
        if (nb.distance_evals !=
            graph::count_comparisons(graph::Method::knn, h, w, kk).total)
          pass = false;
      }
  const auto dagc56 = graph::count_comparisons(graph::Method::dagc, 56, 56, 8);
  const auto knn56 = graph::count_comparisons(graph::Method::knn, 56, 56, 8);
  pass = pass && dagc56.per_node == 14 && knn56.per_node == 3136;
  const double ratio = static_cast<double>(dagc56.per_node) /
                       static_cast<double>(knn56.per_node);
  detail << "56x56 K=8: dagc 14 vs knn 3136 per node (ratio "
         << ratio * 100.0 << "%)";
  pass = pass && std::abs(ratio - 14.0 / 3136.0) == 0.0;
  criterion(4, "complexity counters equal closed forms", pass, detail.str());
}

// 5. Latency ordering at 56x56, C=48, K=8: median(SVGA) < median(DAGC) <
//    median(KNN), single-threaded, 30 repeats. Absolute times are not
//    compared against the paper's GPU numbers.
void criterion_5() {
  const auto start = Clock::now();
  bench::RunSpec spec;
  spec.h = 56;
  spec.w = 56;
  spec.c = 48;
  spec.k = 8;
  spec.repeats = 30;
  spec.warmup = 5;
  spec.seed = 11;
  spec.method = graph::Method::svga;
  const auto svga = bench::run_graph_bench(spec);
  spec.method = graph::Method::dagc;
  const auto dagc = bench::run_graph_bench(spec);
  spec.method = graph::Method::knn;
  const auto knn = bench::run_graph_bench(spec);
  const double elapsed = seconds_since(start);
  const bool ordered =
      svga.median_ms < dagc.median_ms && dagc.median_ms < knn.median_ms;
  std::ostringstream detail;
  detail << "medians ms: svga=" << svga.median_ms << " dagc=" << dagc.median_ms
         << " knn=" << knn.median_ms << " (" << elapsed << " s)";
  criterion(5, "latency ordering svga < dagc < knn", ordered && elapsed < 60,
            detail.str());
}

// 6. Analytic parameter counts within +-10% of 12.0M / 21.9M / 30.9M, equal
//    to the instantiated models exactly, strictly increasing S < M < B.
void criterion_6() {
  struct Row {
    const char* name;
    double target_m;
  };
  bool pass = true;
  std::ostringstream detail;
  std::int64_t prev = 0;
  for (const Row& row : {Row{"S", 12.0}, Row{"M", 21.9}, Row{"B", 30.9}}) {
    const auto cfg = model::predefined(row.name);
    const auto analytic = cost::count_params(cfg).total_params;
    const auto m = model::build<float>(cfg, 0);
    const auto instantiated = model::instantiated_param_count(m);
    const double millions = static_cast<double>(analytic) / 1e6;
    const bool in_window = millions > row.target_m * 0.9 &&
                           millions < row.target_m * 1.1;
    pass = pass && in_window && analytic == instantiated && analytic > prev;
    prev = analytic;
    detail << row.name << "=" << millions << "M ";
  }
  detail << "(targets 12.0/21.9/30.9 +-10%, analytic == instantiated)";
  criterion(6, "parameter counts", pass, detail.str());
}

// 7. MAC counts at 224 within +-20% of 1.6G / 3.2G / 5.2G.
void criterion_7() {
  struct Row {
    const char* name;
    double target_g;
  };
  bool pass = true;
  std::ostringstream detail;
  for (const Row& row : {Row{"S", 1.6}, Row{"M", 3.2}, Row{"B", 5.2}}) {
    const auto gmacs =
        static_cast<double>(cost::count(model::predefined(row.name), 224)
                                .total_macs) / 1e9;
    pass = pass && gmacs > row.target_g * 0.8 && gmacs < row.target_g * 1.2;
    detail << row.name << "=" << gmacs << "G ";
  }
  detail << "(targets 1.6/3.2/5.2 +-20%)";
  criterion(7, "MAC counts at 224", pass, detail.str());
}

// 8. GreedyViG-S forward on 224 input: stage extents [56, 28, 14, 7] and
//    logits (N, 1000); the toy model runs end-to-end in under a second.
void criterion_8() {
  const auto s = model::build<float>(model::predefined("S"), 1);
  SplitMix64 rng(2);
  const auto img =
      Tensor<float>::uniform(Shape::nchw(1, 3, 224, 224), rng, -1.f, 1.f);
  const auto big_start = Clock::now();
  const auto res = model::forward_traced(s, img);
  const double big_elapsed = seconds_since(big_start);
  bool pass = res.stage_extents == std::array<Index, 4>{56, 28, 14, 7} &&
              res.logits.shape() == Shape{1, 1000};

  const auto toy = model::build<float>(model::predefined("toy"), 1);
  const auto toy_img =
      Tensor<float>::uniform(Shape::nchw(1, 3, 32, 32), rng, -1.f, 1.f);
  const auto toy_start = Clock::now();
  const auto toy_res = model::forward_traced(toy, toy_img);
  const double toy_elapsed = seconds_since(toy_start);
  pass = pass && toy_res.logits.shape() == Shape{1, 10} && toy_elapsed < 1.0;

  std::ostringstream detail;
  detail << "S extents [" << res.stage_extents[0] << "," << res.stage_extents[1]
         << "," << res.stage_extents[2] << "," << res.stage_extents[3]
         << "], S forward " << big_elapsed << " s, toy forward " << toy_elapsed
         << " s";
  criterion(8, "architecture fidelity at 224 and toy scale", pass,
            detail.str());
}

// 9. Variable connectivity: at least two distinct DAGC connection totals over
//    twenty random inputs at a fixed shape.
void criterion_9() {
  std::set<std::int64_t> totals;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = rand_t(Shape::nchw(1, 4, 8, 8), 7000 + seed);
    const auto stats = graph::estimate_stats(x);
    totals.insert(
        graph::dagc_aggregate(x, 2, stats.per_image).trace.connection_count);
  }
  criterion(9, "variable connectivity across inputs", totals.size() >= 2,
            std::to_string(totals.size()) + " distinct totals over 20 inputs");
}

// 10. Determinism and serialization: fixed seed gives bit-identical weights,
//     forwards, and GVT round trips.
void criterion_10() {
  bool pass = true;
  const auto cfg = model::predefined("toy");
  auto m1 = model::build<float>(cfg, 77);
  auto m2 = model::build<float>(cfg, 77);
  std::vector<const Tensor<float>*> t1, t2;
  model::for_each_tensor(m1, [&](const std::string&, const Tensor<float>& t,
                                 model::TensorKind) { t1.push_back(&t); });
  model::for_each_tensor(m2, [&](const std::string&, const Tensor<float>& t,
                                 model::TensorKind) { t2.push_back(&t); });
  for (std::size_t i = 0; i < t1.size(); ++i)
    pass = pass && t1[i]->same_bits(*t2[i]);

  SplitMix64 rng(78);
  const auto img =
      Tensor<float>::uniform(Shape::nchw(2, 3, 32, 32), rng, -1.f, 1.f);
  pass = pass && model::forward(m1, img).same_bits(model::forward(m1, img));

  const std::string path = "/tmp/axialvig_acceptance_weights.gvtc";
  model::save_weights(m1, path);
  const auto loaded = model::load_weights<float>(cfg, path);
  pass = pass && model::forward(loaded, img).same_bits(model::forward(m1, img));
  std::remove(path.c_str());

  const auto t64 = rand_t(Shape::nchw(1, 2, 3, 5), 79);
  std::stringstream buf;
  gvt::write(buf, t64);
  pass = pass && gvt::read<double>(buf).same_bits(t64);
  SplitMix64 r32(80);
  const auto t32 = Tensor<float>::uniform(Shape{9}, r32, -1.f, 1.f);
  std::stringstream buf32;
  gvt::write(buf32, t32);
  pass = pass && gvt::read<float>(buf32).same_bits(t32);

  criterion(10, "determinism and serialization", pass,
            "weights/forward/GVT round trips bit-identical");
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::printf("RESULT: %d/10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}

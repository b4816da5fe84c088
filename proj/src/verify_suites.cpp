#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "axialvig/blocks.hpp"
#include "axialvig/model.hpp"
#include "axialvig/verify.hpp"

namespace axialvig::verify {

namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Tensor<double> random_input(Index n, Index c, Index h, Index w,
                            std::uint64_t seed) {
  SplitMix64 rng(seed);
  return Tensor<double>::uniform(Shape::nchw(n, c, h, w), rng, -1.0, 1.0);
}

void add_case(SuiteReport& report, const std::string& id, bool pass,
              const std::string& detail = {}) {
  report.cases.push_back({id, pass, pass ? std::string() : detail});
}

}  // namespace

SuiteReport run_oracle_suite(double threshold_bias) {
  SuiteReport report;
  report.suite = "oracle";
  const Index shapes[] = {4, 6, 8};
  const Index channels[] = {1, 2, 4};
  const int hops[] = {1, 2, 4};
  constexpr double tol = 1e-12;

  for (Index h : shapes)
    for (Index w : shapes)
      for (Index c : channels)
        for (int k : hops)
          for (std::uint64_t seed = 0; seed < 5; ++seed) {
            std::ostringstream tag;
            tag << "h" << h << "w" << w << "c" << c << "k" << k << "s" << seed;
            const Tensor<double> x = random_input(2, c, h, w, seed * 7919 + h * 131 + w * 17 + c * 3 + static_cast<std::uint64_t>(k));

            // DAGC vs per-node enumeration.
            const auto stats = graph::estimate_stats(x);
            const auto impl = graph::dagc_aggregate(x, k, stats.per_image,
                                                    threshold_bias);
            const auto want = oracle_dagc(x, k, stats.per_image);
            {
              const double err = max_abs_diff(impl.x_final, want.x_final);
              const bool counts_ok =
                  impl.trace.connection_count == want.connections;
              bool nonneg = true;
              for (Index i = 0; i < impl.x_final.numel(); ++i)
                if (impl.x_final[i] < 0.0) nonneg = false;
              const auto closed =
                  graph::count_comparisons(graph::Method::dagc, h, w, k);
              const bool comp_ok =
                  impl.trace.distance_evals == 2 * closed.total &&
                  impl.trace.comparison_count == 2 * closed.total &&
                  stats.comparisons_per_image == closed.stats_pass;
              std::ostringstream detail;
              detail << "max|impl-oracle|=" << err
                     << " conn impl=" << impl.trace.connection_count
                     << " oracle=" << want.connections
                     << " dist_evals=" << impl.trace.distance_evals;
              add_case(report, "dagc/" + tag.str(),
                       err <= tol && counts_ok && nonneg && comp_ok,
                       detail.str());
            }

            // SVGA vs all-connected enumeration.
            {
              const auto svga = graph::svga_aggregate_traced(x, k);
              const double err =
                  max_abs_diff(svga.x_final, oracle_svga(x, k));
              const bool no_dist = svga.trace.distance_evals == 0;
              add_case(report, "svga/" + tag.str(), err <= tol && no_dist,
                       "max|impl-oracle|=" + std::to_string(err));
            }

            // KNN neighbor selection and aggregation.
            {
              const int kk = std::min<int>(k, static_cast<int>(h * w - 1));
              const auto impl_nb = graph::knn_neighbors(x, kk);
              const auto want_nb = oracle_knn_neighbors(x, kk);
              const bool exact = impl_nb.indices == want_nb.indices;
              const double err = max_abs_diff(
                  graph::knn_aggregate(x, impl_nb),
                  oracle_knn_aggregate(x, want_nb));
              const bool scans_ok =
                  impl_nb.distance_evals == 2 * (h * w) * (h * w);
              add_case(report, "knn/" + tag.str(),
                       exact && err <= tol && scans_ok,
                       exact ? "aggregate mismatch" : "neighbor mismatch");
            }
          }
  return report;
}

namespace {

void invariant_graph_cases(SuiteReport& report) {
  using graph::Method;

  // Quadrant flip involution and the 2x2 block swap.
  {
    const Tensor<double> x = random_input(2, 3, 5, 6, 11);
    add_case(report, "flip/involution",
             graph::quadrant_flip(graph::quadrant_flip(x)).same_bits(x));
    const Tensor<double> c = Tensor<double>::full(Shape::nchw(1, 2, 4, 4), 0.7);
    add_case(report, "flip/constant",
             graph::quadrant_flip(c).same_bits(c));
    const Tensor<double> q =
        Tensor<double>::from(Shape::nchw(1, 1, 2, 2), {1, 2, 3, 4});
    const Tensor<double> want =
        Tensor<double>::from(Shape::nchw(1, 1, 2, 2), {4, 3, 2, 1});
    add_case(report, "flip/2x2", graph::quadrant_flip(q).same_bits(want));
  }

  // Stats symmetry under the flip, including odd extents.
  for (auto [h, w] : {std::pair<Index, Index>{4, 4}, {5, 7}, {8, 6}}) {
    const Tensor<double> x = random_input(2, 3, h, w, 100 + h * 10 + w);
    const auto a = graph::estimate_stats(x);
    const auto b = graph::estimate_stats(graph::quadrant_flip(x));
    bool same = true;
    for (std::size_t i = 0; i < a.per_image.size(); ++i)
      same = same && a.per_image[i].mu == b.per_image[i].mu &&
             a.per_image[i].sigma == b.per_image[i].sigma;
    add_case(report,
             "stats/symmetry-h" + std::to_string(h) + "w" + std::to_string(w),
             same);
  }

  // Constant image: mu = sigma = 0, no connections, zero output.
  {
    const Tensor<double> c = Tensor<double>::full(Shape::nchw(2, 4, 6, 6), 1.5);
    const auto stats = graph::estimate_stats(c);
    bool zero_stats = true;
    for (const auto& s : stats.per_image)
      zero_stats = zero_stats && s.mu == 0.0 && s.sigma == 0.0;
    const auto agg = graph::dagc_aggregate(c, 2, stats.per_image);
    bool zero_out = true;
    for (Index i = 0; i < agg.x_final.numel(); ++i)
      zero_out = zero_out && agg.x_final[i] == 0.0;
    add_case(report, "stats/constant-image",
             zero_stats && zero_out && agg.trace.connection_count == 0);
  }

  // Degenerate 1x1 map: self-only aggregation returns zeros.
  {
    const Tensor<double> x = random_input(1, 4, 1, 1, 5);
    const auto stats = graph::estimate_stats(x);
    const auto agg = graph::dagc_aggregate(x, 1, stats.per_image);
    bool ok = stats.per_image[0].mu == 0.0 && stats.per_image[0].sigma == 0.0;
    for (Index i = 0; i < agg.x_final.numel(); ++i)
      ok = ok && agg.x_final[i] == 0.0;
    add_case(report, "stats/degenerate-1x1", ok);
  }

  // Forcing the mask all-true reproduces SVGA bit-exactly.
  {
    const Tensor<double> x = random_input(2, 3, 8, 6, 21);
    const auto stats = graph::estimate_stats(x);
    const auto forced = graph::dagc_aggregate(
        x, 2, stats.per_image, std::numeric_limits<double>::infinity());
    add_case(report, "dagc/mask-forced-equals-svga",
             forced.x_final.same_bits(graph::svga_aggregate(x, 2)));
  }

  // Channel permutation equivariance.
  {
    const Tensor<double> x = random_input(1, 4, 6, 6, 31);
    Tensor<double> perm(x.shape());
    const Index C = x.c(), plane = x.h() * x.w();
    for (Index c = 0; c < C; ++c)
      for (Index p = 0; p < plane; ++p)
        perm[(C - 1 - c) * plane + p] = x[c * plane + p];
    const auto sa = graph::estimate_stats(x);
    const auto sb = graph::estimate_stats(perm);
    const auto ya = graph::dagc_aggregate(x, 2, sa.per_image).x_final;
    const auto yb = graph::dagc_aggregate(perm, 2, sb.per_image).x_final;
    bool same = true;
    for (Index c = 0; c < C && same; ++c)
      for (Index p = 0; p < plane; ++p)
        if (yb[(C - 1 - c) * plane + p] != ya[c * plane + p]) {
          same = false;
          break;
        }
    add_case(report, "dagc/channel-permutation", same);
  }

  // Variable connectivity across random inputs at a fixed shape.
  {
    std::set<std::int64_t> totals;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Tensor<double> x = random_input(1, 4, 8, 8, 1000 + seed);
      const auto stats = graph::estimate_stats(x);
      totals.insert(
          graph::dagc_aggregate(x, 2, stats.per_image).trace.connection_count);
    }
    add_case(report, "dagc/variable-connectivity", totals.size() >= 2,
             "distinct totals: " + std::to_string(totals.size()));
  }

  // Instrumented counters equal the closed forms, including the 56x56 stage.
  {
    bool ok = true;
    std::ostringstream detail;
    for (auto [h, w, k] : {std::tuple<Index, Index, int>{4, 6, 1},
                           {6, 6, 2},
                           {8, 4, 4},
                           {56, 56, 8}}) {
      const Tensor<double> x = random_input(1, 2, h, w, 77);
      const auto stats = graph::estimate_stats(x);
      const auto agg = graph::dagc_aggregate(x, k, stats.per_image);
      const auto closed = graph::count_comparisons(Method::dagc, h, w, k);
      if (agg.trace.distance_evals != closed.total ||
          stats.comparisons_per_image != closed.stats_pass) {
        ok = false;
        detail << "h" << h << "w" << w << "k" << k << " got "
               << agg.trace.distance_evals << " want " << closed.total << "; ";
      }
      const auto knn_closed = graph::count_comparisons(Method::knn, h, w, 2);
      if (h * w <= 64) {
        const auto nb = graph::knn_neighbors(x, 2);
        if (nb.distance_evals != knn_closed.total) {
          ok = false;
          detail << "knn h" << h << "w" << w << "; ";
        }
      }
      if (graph::count_comparisons(Method::svga, h, w, k).per_node != 0)
        ok = false;
    }
    add_case(report, "counters/closed-forms", ok, detail.str());
    const auto c56 = graph::count_comparisons(Method::dagc, 56, 56, 8);
    add_case(report, "counters/56x56-k8",
             c56.per_node == 14 && c56.total == 3136 * 14 &&
                 c56.stats_pass == 784);
  }

  // Roll round trips.
  {
    const Tensor<double> x = random_input(1, 2, 5, 7, 41);
    bool ok = true;
    for (Index s : {Index(1), Index(3), Index(-2)}) {
      ok = ok && ops::roll(ops::roll(x, s, Axis::height), -s, Axis::height)
                     .same_bits(x);
      ok = ok &&
           ops::roll(ops::roll(x, s, Axis::width), -s, Axis::width).same_bits(x);
    }
    ok = ok && ops::roll(x, x.h(), Axis::height).same_bits(x);
    ok = ok && ops::roll(x, x.w(), Axis::width).same_bits(x);
    add_case(report, "roll/round-trip", ok);
  }

  // Concat then slice recovers both operands bit-exactly.
  {
    const Tensor<double> a = random_input(2, 3, 4, 5, 51);
    const Tensor<double> b = random_input(2, 2, 4, 5, 52);
    const auto cat = ops::concat_channels(a, b);
    add_case(report, "concat/slice-recovery",
             ops::slice_channels(cat, 0, 3).same_bits(a) &&
                 ops::slice_channels(cat, 3, 5).same_bits(b));
  }

  // Offset ladders.
  {
    const bool ok = graph::axial_offsets(8, 2) == std::vector<Index>{0, 2, 4, 6} &&
                    graph::axial_offsets(7, 1) ==
                        std::vector<Index>{0, 1, 2, 3, 4, 5, 6} &&
                    graph::axial_offsets(5, 8) == std::vector<Index>{0};
    add_case(report, "offsets/ladder", ok);
  }
}

void invariant_block_cases(SuiteReport& report) {
  using namespace blocks;
  SplitMix64 rng(9);
  EagerEngine<double> e;
  const Tensor<double> x =
      Tensor<double>::uniform(Shape::nchw(1, 8, 8, 8), rng, -1.0, 1.0);

  // Residual identity: zeroing the non-residual branch passes x through.
  {
    auto gp = make_grapher<double>(rng, 8, 2);
    gp.w_out.conv.weight = Tensor<double>::zeros(gp.w_out.conv.weight.shape());
    gp.w_out.conv.bias = Tensor<double>::zeros(Shape{8});
    add_case(report, "blocks/grapher-residual-identity",
             dynamic_grapher(e, x, gp).same_bits(x));

    auto fp = make_ffn<double>(rng, 8);
    fp.w2.conv.weight = Tensor<double>::zeros(fp.w2.conv.weight.shape());
    fp.w2.conv.bias = Tensor<double>::zeros(Shape{8});
    add_case(report, "blocks/ffn-residual-identity",
             ffn(e, x, fp).same_bits(x));

    auto mp = make_mbconv<double>(rng, 8);
    mp.project.conv.weight =
        Tensor<double>::zeros(mp.project.conv.weight.shape());
    mp.project.conv.bias = Tensor<double>::zeros(Shape{8});
    add_case(report, "blocks/mbconv-residual-identity",
             mbconv(e, x, mp).same_bits(x));
  }

  // Shape preservation at every predefined stage width (small spatial map).
  {
    bool ok = true;
    for (const char* name : {"S", "M", "B", "toy"}) {
      const auto cfg = model::predefined(name);
      for (const auto& sc : cfg.stages) {
        SplitMix64 r2(3);
        const Tensor<double> t = Tensor<double>::uniform(
            Shape::nchw(1, sc.channels, 8, 8), r2, -1.0, 1.0);
        const auto gp = make_grapher<double>(r2, sc.channels, 2);
        const auto fp = make_ffn<double>(r2, sc.channels);
        const auto mp = make_mbconv<double>(r2, sc.channels);
        ok = ok && dagc_block(e, t, gp, fp).shape() == t.shape() &&
             mbconv(e, t, mp).shape() == t.shape();
      }
    }
    add_case(report, "blocks/shape-preservation", ok);
  }

  // Stem / downsample resolution arithmetic.
  {
    SplitMix64 r2(5);
    const auto sp = make_stem<double>(r2, 48);
    const Tensor<double> img =
        Tensor<double>::uniform(Shape::nchw(1, 3, 32, 32), r2, -1.0, 1.0);
    const auto y = stem(img, sp);
    const auto dp = make_downsample<double>(r2, 48, 96);
    const auto z = downsample(y, dp);
    add_case(report, "blocks/stem-downsample-shapes",
             y.shape() == Shape::nchw(1, 48, 8, 8) &&
                 z.shape() == Shape::nchw(1, 96, 4, 4));
  }

  // Determinism: one seed, two evaluations and two builds, bit-identical.
  {
    SplitMix64 r2(13);
    const auto gp = make_grapher<double>(r2, 8, 2);
    const auto fp = make_ffn<double>(r2, 8);
    const auto once = dagc_block(e, x, gp, fp);
    const auto twice = dagc_block(e, x, gp, fp);
    add_case(report, "blocks/deterministic-eval", once.same_bits(twice));

    const auto cfg = model::predefined("toy");
    auto m1 = model::build<float>(cfg, 123);
    auto m2 = model::build<float>(cfg, 123);
    bool same = true;
    std::vector<const Tensor<float>*> t1, t2;
    model::for_each_tensor(m1, [&](const std::string&, const Tensor<float>& t,
                                   model::TensorKind) { t1.push_back(&t); });
    model::for_each_tensor(m2, [&](const std::string&, const Tensor<float>& t,
                                   model::TensorKind) { t2.push_back(&t); });
    for (std::size_t i = 0; i < t1.size(); ++i)
      same = same && t1[i]->same_bits(*t2[i]);
    add_case(report, "blocks/deterministic-build", same && !t1.empty());
  }

  // Tape replay reproduces the recorded forward bit-exactly.
  {
    SplitMix64 r2(17);
    const Tensor<double> in =
        Tensor<double>::uniform(Shape::nchw(1, 4, 6, 6), r2, -1.0, 1.0);
    const auto gp = make_grapher<double>(r2, 4, 2);
    Tape<double> tape;
    TapeEngine<double> eng(tape);
    const auto y = dynamic_grapher(eng, eng.input(in, "x"), gp);
    const Tensor<double> recorded = tape.value(y);
    tape.replay();
    add_case(report, "tape/replay-bit-exact", tape.value(y).same_bits(recorded));
  }
}

}  // namespace

SuiteReport run_invariant_suite() {
  SuiteReport report;
  report.suite = "invariants";
  invariant_graph_cases(report);
  invariant_block_cases(report);
  return report;
}

}  // namespace axialvig::verify

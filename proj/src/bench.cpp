#include "axialvig/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <vector>

namespace axialvig::bench {

int thread_cap() {
  const char* env = std::getenv("AXIALVIG_THREADS");
  if (!env) return 1;
  const int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

struct Quartiles {
  double median, iqr, min, max;
};

Quartiles summarize(std::vector<double> times) {
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  const double median = n % 2 == 1
                            ? times[n / 2]
                            : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  const double q1 = times[n / 4];
  const double q3 = times[std::min(n - 1, (3 * n) / 4)];
  return {median, q3 - q1, times.front(), times.back()};
}

template <typename S>
BenchResult run_typed(const RunSpec& spec) {
  SplitMix64 rng(spec.seed);
  const Tensor<S> x = Tensor<S>::uniform(
      Shape::nchw(1, spec.c, spec.h, spec.w), rng, S(-1), S(1));

  BenchResult result;
  result.method = graph::method_name(spec.method);
  result.nodes = spec.h * spec.w;
  const auto closed =
      graph::count_comparisons(spec.method, spec.h, spec.w, spec.k);
  result.per_node_closed = closed.per_node;
  result.total_closed = closed.total;
  result.stats_pass_closed = closed.stats_pass;

  // The checksum keeps the optimizer from dropping the timed work.
  volatile double sink = 0.0;
  auto run_once = [&]() {
    switch (spec.method) {
      case graph::Method::dagc: {
        const auto stats = graph::estimate_stats(x);
        const auto agg = graph::dagc_aggregate(x, spec.k, stats.per_image);
        sink = sink + static_cast<double>(agg.x_final[0]);
        result.distance_evals = agg.trace.distance_evals;
        result.connections = agg.trace.connection_count;
        break;
      }
      case graph::Method::svga: {
        const auto agg = graph::svga_aggregate_traced(x, spec.k);
        sink = sink + static_cast<double>(agg.x_final[0]);
        result.distance_evals = agg.trace.distance_evals;
        result.connections = agg.trace.connection_count;
        break;
      }
      case graph::Method::knn: {
        const auto table = graph::knn_neighbors(x, spec.k);
        const auto out = graph::knn_aggregate(x, table);
        sink = sink + static_cast<double>(out[0]);
        result.distance_evals = table.distance_evals;
        result.connections =
            static_cast<std::int64_t>(table.n) * table.nodes * table.k;
        break;
      }
    }
  };

  for (int i = 0; i < spec.warmup; ++i) run_once();
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(spec.repeats));
  for (int i = 0; i < spec.repeats; ++i) {
    const auto start = Clock::now();
    run_once();
    times.push_back(ms_since(start));
  }
  const Quartiles q = summarize(std::move(times));
  result.median_ms = q.median;
  result.iqr_ms = q.iqr;
  result.min_ms = q.min;
  result.max_ms = q.max;
  return result;
}

}  // namespace

BenchResult run_graph_bench(const RunSpec& spec) {
  if (spec.repeats < 1) throw ConfigError("bench: repeats must be >= 1");
  if (spec.warmup < 0) throw ConfigError("bench: warmup must be >= 0");
  if (spec.method == graph::Method::knn && spec.k >= spec.h * spec.w)
    throw ConfigError("bench: knn needs k below the node count");
  return spec.dtype == Dtype::f64 ? run_typed<double>(spec)
                                  : run_typed<float>(spec);
}

}  // namespace axialvig::bench

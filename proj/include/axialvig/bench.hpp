#pragma once

#include <cstdint>
#include <string>

#include "axialvig/graph.hpp"

namespace axialvig::bench {

enum class Dtype { f32, f64 };

struct RunSpec {
  graph::Method method = graph::Method::dagc;
  Index h = 56, w = 56, c = 48;
  int k = 8;
  int repeats = 30;
  int warmup = 5;
  std::uint64_t seed = 0;
  Dtype dtype = Dtype::f32;
};

// One benchmarked graph construction. The count fields are deterministic for
// a given spec; only the wall times vary between runs. The timed region is
// single-threaded by contract.
struct BenchResult {
  std::string method;
  Index nodes = 0;
  std::int64_t per_node_closed = 0;       // distance evals per node
  std::int64_t total_closed = 0;          // per image
  std::int64_t stats_pass_closed = 0;     // per image, DAGC only
  std::int64_t distance_evals = 0;        // instrumented
  std::int64_t connections = 0;           // instrumented
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

// AXIALVIG_THREADS, default 1. Recorded in reports; the timing region itself
// never spawns workers.
int thread_cap();

BenchResult run_graph_bench(const RunSpec& spec);

}  // namespace axialvig::bench

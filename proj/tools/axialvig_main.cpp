// axialvig: command-line harness for axial graph construction, verification
// suites, gradient checks, model cost accounting, and forward passes.
//
// Exit codes: 0 success, 1 verification failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "axialvig/bench.hpp"
#include "axialvig/cost.hpp"
#include "axialvig/gvt.hpp"
#include "axialvig/model.hpp"
#include "axialvig/report.hpp"
#include "axialvig/verify.hpp"

namespace {

using axialvig::Index;
using axialvig::report::Report;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

void emit(const std::vector<Report>& reports, const std::string& output) {
  for (const auto& r : reports) std::cout << r.text() << "\n";
  if (output.empty()) return;
  if (reports.size() == 1) {
    reports[0].write_json_file(output);
    return;
  }
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(r.json());
  std::ofstream os(output);
  if (!os) throw axialvig::FormatError("report: cannot open " + output);
  os << arr.dump(2) << "\n";
}

axialvig::graph::Method parse_method(const std::string& name) {
  if (name == "dagc") return axialvig::graph::Method::dagc;
  if (name == "svga") return axialvig::graph::Method::svga;
  if (name == "knn") return axialvig::graph::Method::knn;
  throw axialvig::ConfigError("unknown method '" + name + "'");
}

Report bench_report(const axialvig::bench::RunSpec& spec,
                    const axialvig::bench::BenchResult& res) {
  Report r("axialvig/bench-graph/1");
  r.det("method", res.method);
  r.det("dtype", spec.dtype == axialvig::bench::Dtype::f64 ? "f64" : "f32");
  r.det("h", spec.h);
  r.det("w", spec.w);
  r.det("c", spec.c);
  r.det("k", spec.k);
  r.det("seed", static_cast<std::int64_t>(spec.seed));
  r.det("repeats", spec.repeats);
  r.det("warmup", spec.warmup);
  r.det("threads", axialvig::bench::thread_cap());
  r.det("nodes", res.nodes);
  r.det("comparisons_per_node", res.per_node_closed);
  r.det("comparisons_total", res.total_closed);
  r.det("stats_comparisons", res.stats_pass_closed);
  r.det("distance_evals", res.distance_evals);
  r.det("connections", res.connections);
  r.timing("median_ms", res.median_ms);
  r.timing("iqr_ms", res.iqr_ms);
  r.timing("min_ms", res.min_ms);
  r.timing("max_ms", res.max_ms);
  return r;
}

int cmd_bench_graph(const std::string& method, axialvig::bench::RunSpec spec,
                    const std::string& dtype, const std::string& output,
                    const std::string& export_trace,
                    const std::string& export_neighbors) {
  spec.dtype = dtype == "f64" ? axialvig::bench::Dtype::f64
                              : axialvig::bench::Dtype::f32;
  std::vector<std::string> methods;
  if (method == "all")
    methods = {"svga", "dagc", "knn"};
  else
    methods = {method};

  std::vector<Report> reports;
  for (const auto& m : methods) {
    spec.method = parse_method(m);
    reports.push_back(bench_report(spec, axialvig::bench::run_graph_bench(spec)));
  }

  if (!export_trace.empty()) {
    axialvig::SplitMix64 rng(spec.seed);
    const auto x = axialvig::Tensor<float>::uniform(
        axialvig::Shape::nchw(1, spec.c, spec.h, spec.w), rng, -1.f, 1.f);
    const auto stats = axialvig::graph::estimate_stats(x);
    const auto agg = axialvig::graph::dagc_aggregate(x, spec.k, stats.per_image);
    axialvig::gvt::write_file(export_trace,
                              axialvig::graph::trace_to_tensor(agg.trace));
  }
  if (!export_neighbors.empty()) {
    axialvig::SplitMix64 rng(spec.seed);
    const auto x = axialvig::Tensor<float>::uniform(
        axialvig::Shape::nchw(1, spec.c, spec.h, spec.w), rng, -1.f, 1.f);
    const auto table = axialvig::graph::knn_neighbors(x, spec.k);
    axialvig::gvt::write_file(export_neighbors,
                              axialvig::graph::neighbors_to_tensor(table));
  }

  emit(reports, output);
  return 0;
}

int cmd_check(const std::string& suite, double threshold_bias,
              const std::string& output) {
  const auto start = Clock::now();
  std::vector<axialvig::verify::SuiteReport> suites;
  if (suite == "oracle" || suite == "all")
    suites.push_back(axialvig::verify::run_oracle_suite(threshold_bias));
  if (suite == "invariants" || suite == "all")
    suites.push_back(axialvig::verify::run_invariant_suite());
  if (suites.empty())
    throw axialvig::ConfigError("check: unknown suite '" + suite +
                                "' (expected oracle, invariants, or all)");

  int total = 0, failed = 0;
  Report r("axialvig/check/1");
  r.det("suite", suite);
  r.det("threshold_bias", threshold_bias);
  for (const auto& s : suites) {
    total += static_cast<int>(s.cases.size());
    failed += s.failures();
  }
  r.det("cases_total", total);
  r.det("cases_failed", failed);
  r.det("status", failed == 0 ? "pass" : "fail");
  for (const auto& s : suites)
    for (const auto& c : s.cases)
      if (!c.pass) r.det("fail." + s.suite + "/" + c.id,
                         c.detail.empty() ? "failed" : c.detail);
  r.timing("elapsed_ms", ms_since(start));
  emit({r}, output);
  return failed == 0 ? 0 : 1;
}

int cmd_gradcheck(const std::string& block, std::uint64_t seed,
                  bool constant_input, const std::string& output) {
  const auto start = Clock::now();
  const auto kind = axialvig::verify::block_kind_from_name(block);
  const auto res = axialvig::verify::gradcheck_block(kind, seed, constant_input);

  Report r("axialvig/gradcheck/1");
  r.det("block", res.block);
  r.det("seed", static_cast<std::int64_t>(res.requested_seed));
  r.det("effective_seed", static_cast<std::int64_t>(res.effective_seed));
  r.det("tie_resampled", res.tie_resampled);
  r.det("threshold", res.threshold);
  for (const auto& t : res.tensors)
    r.det("tensor." + t.name, t.max_rel_err);
  r.det("max_rel_err", res.max_rel_err);
  r.det("failure", res.failure);
  r.det("status", res.pass ? "pass" : "fail");
  r.timing("elapsed_ms", ms_since(start));
  emit({r}, output);
  return res.pass ? 0 : 1;
}

axialvig::model::ModelConfig resolve_config(const std::string& model,
                                            const std::string& config_path) {
  if (!model.empty() && !config_path.empty())
    throw axialvig::ConfigError("give either --model or --config, not both");
  if (!model.empty()) return axialvig::model::predefined(model);
  if (!config_path.empty())
    return axialvig::model::parse_config_file(config_path);
  throw axialvig::ConfigError("one of --model or --config is required");
}

int cmd_count(const std::string& model, const std::string& config_path,
              Index resolution, const std::string& output) {
  const auto start = Clock::now();
  const auto config = resolve_config(model, config_path);
  const Index res = resolution > 0 ? resolution : config.resolution;
  const auto cost = axialvig::cost::count(config, res);

  Report r("axialvig/count/1");
  r.det("model", cost.model);
  r.det("resolution", cost.resolution);
  r.det("params.stem", cost.stem.params);
  r.det("macs.stem", cost.stem.macs);
  for (int i = 0; i < 4; ++i) {
    const auto& s = cost.stages[static_cast<std::size_t>(i)];
    r.det("params.stage" + std::to_string(i + 1), s.params);
    r.det("macs.stage" + std::to_string(i + 1), s.macs);
  }
  r.det("params.head", cost.head.params);
  r.det("macs.head", cost.head.macs);
  r.det("params.total", cost.total_params);
  r.det("macs.total", cost.total_macs);
  r.det("params_millions", static_cast<double>(cost.total_params) / 1e6);
  r.det("gmacs", static_cast<double>(cost.total_macs) / 1e9);
  r.timing("elapsed_ms", ms_since(start));
  emit({r}, output);
  return 0;
}

int cmd_forward(const std::string& model, const std::string& config_path,
                const std::string& input_path, std::int64_t random_seed,
                bool have_random, const std::string& weights_path,
                std::uint64_t init_seed, const std::string& save_weights_path,
                const std::string& out_logits, int topk,
                const std::string& output) {
  const auto start = Clock::now();
  const auto config = resolve_config(model, config_path);
  if (!input_path.empty() && have_random)
    throw axialvig::ConfigError("give either --input or --random, not both");
  if (input_path.empty() && !have_random)
    throw axialvig::ConfigError("one of --input or --random is required");

  axialvig::model::Model<float> net =
      weights_path.empty()
          ? axialvig::model::build<float>(config, init_seed)
          : axialvig::model::load_weights<float>(config, weights_path);
  if (!save_weights_path.empty())
    axialvig::model::save_weights(net, save_weights_path);

  axialvig::Tensor<float> images;
  std::string input_desc;
  if (!input_path.empty()) {
    images = axialvig::gvt::read_as_file<float>(input_path);
    input_desc = input_path;
  } else {
    axialvig::SplitMix64 rng(static_cast<std::uint64_t>(random_seed));
    images = axialvig::Tensor<float>::uniform(
        axialvig::Shape::nchw(1, 3, config.resolution, config.resolution), rng,
        -1.f, 1.f);
    input_desc = "random:" + std::to_string(random_seed);
  }

  const auto result = axialvig::model::forward_traced(net, images);
  if (!out_logits.empty())
    axialvig::gvt::write_file(out_logits, result.logits);

  const Index classes = result.logits.dim(1);
  const int k = std::min<Index>(topk, classes);
  // Ranked indices of the first batch row; full logits go to --out-logits.
  std::vector<Index> order(static_cast<std::size_t>(classes));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return result.logits[a] > result.logits[b];
  });

  Report r("axialvig/forward/1");
  r.det("model", config.name);
  r.det("input", input_desc);
  r.det("weights", weights_path.empty()
                       ? "init:" + std::to_string(init_seed)
                       : weights_path);
  r.det("batch", result.logits.dim(0));
  r.det("classes", classes);
  {
    std::string extents;
    for (std::size_t i = 0; i < 4; ++i)
      extents += (i ? "," : "") +
                 std::to_string(result.stage_extents[i]);
    r.det("stage_extents", extents);
  }
  for (int i = 0; i < k; ++i) {
    r.det("topk.index." + std::to_string(i),
          static_cast<std::int64_t>(order[static_cast<std::size_t>(i)]));
    r.det("topk.value." + std::to_string(i),
          static_cast<double>(result.logits[order[static_cast<std::size_t>(i)]]));
  }
  double checksum = 0.0;
  for (Index i = 0; i < result.logits.numel(); ++i)
    checksum += static_cast<double>(result.logits[i]);
  r.det("logits_sum", checksum);
  r.timing("elapsed_ms", ms_since(start));
  emit({r}, output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"axial vision-graph construction and GreedyViG toolkit"};
  app.require_subcommand(1);

  std::function<int()> action;

  // bench-graph
  {
    auto* cmd = app.add_subcommand(
        "bench-graph", "time one graph construction method (or all three)");
    auto method = std::make_shared<std::string>("all");
    auto spec = std::make_shared<axialvig::bench::RunSpec>();
    auto dtype = std::make_shared<std::string>("f32");
    auto output = std::make_shared<std::string>();
    auto export_trace = std::make_shared<std::string>();
    auto export_neighbors = std::make_shared<std::string>();
    cmd->add_option("--method", *method, "dagc, svga, knn, or all")
        ->check(CLI::IsMember({"dagc", "svga", "knn", "all"}));
    cmd->add_option("--h", spec->h, "feature map height")->check(CLI::PositiveNumber);
    cmd->add_option("--w", spec->w, "feature map width")->check(CLI::PositiveNumber);
    cmd->add_option("--c", spec->c, "channels")->check(CLI::PositiveNumber);
    cmd->add_option("--k", spec->k, "hop distance / neighbor count")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--repeats", spec->repeats, "timed repeats (>= 1)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--warmup", spec->warmup, "warmup runs")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", spec->seed, "input seed");
    cmd->add_option("--dtype", *dtype, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--output", *output, "write the report as JSON");
    cmd->add_option("--export-trace", *export_trace,
                    "write the DAGC connection masks as a GVT tensor");
    cmd->add_option("--export-neighbors", *export_neighbors,
                    "write the KNN neighbor table as a GVT tensor");
    cmd->callback([=]() {
      action = [=]() {
        return cmd_bench_graph(*method, *spec, *dtype, *output, *export_trace,
                               *export_neighbors);
      };
    });
  }

  // check
  {
    auto* cmd = app.add_subcommand(
        "check", "run the oracle-equivalence and invariant suites");
    auto suite = std::make_shared<std::string>("all");
    auto bias = std::make_shared<double>(0.0);
    auto output = std::make_shared<std::string>();
    cmd->add_option("--suite", *suite, "oracle, invariants, or all")
        ->check(CLI::IsMember({"oracle", "invariants", "all"}));
    cmd->add_option("--threshold-bias", *bias,
                    "test hook: shift the DAGC threshold (corrupts the "
                    "implementation, not the oracle)");
    cmd->add_option("--output", *output, "write the report as JSON");
    cmd->callback([=]() {
      action = [=]() { return cmd_check(*suite, *bias, *output); };
    });
  }

  // gradcheck
  {
    auto* cmd = app.add_subcommand(
        "gradcheck", "finite-difference gradient check of one block (f64)");
    auto block = std::make_shared<std::string>();
    auto seed = std::make_shared<std::uint64_t>(0);
    auto constant = std::make_shared<bool>(false);
    auto output = std::make_shared<std::string>();
    cmd->add_option("--block", *block, "dagc, grapher, ffn, mbconv, or pair")
        ->required()
        ->check(CLI::IsMember({"dagc", "grapher", "ffn", "mbconv", "pair"}));
    cmd->add_option("--seed", *seed, "parameter/input seed");
    cmd->add_flag("--constant-input", *constant,
                  "test hook: constant image, forcing a mask tie");
    cmd->add_option("--output", *output, "write the report as JSON");
    cmd->callback([=]() {
      action = [=]() { return cmd_gradcheck(*block, *seed, *constant, *output); };
    });
  }

  // count
  {
    auto* cmd = app.add_subcommand(
        "count", "analytic parameter and MAC counts per stage");
    auto model = std::make_shared<std::string>();
    auto config = std::make_shared<std::string>();
    auto resolution = std::make_shared<Index>(0);
    auto output = std::make_shared<std::string>();
    cmd->add_option("--model", *model, "S, M, B, or toy");
    cmd->add_option("--config", *config, "model config file");
    cmd->add_option("--resolution", *resolution,
                    "input resolution (default: the config's)");
    cmd->add_option("--output", *output, "write the report as JSON");
    cmd->callback([=]() {
      action = [=]() { return cmd_count(*model, *config, *resolution, *output); };
    });
  }

  // forward
  {
    auto* cmd = app.add_subcommand(
        "forward", "run a forward pass and report top-k logits");
    auto model = std::make_shared<std::string>();
    auto config = std::make_shared<std::string>();
    auto input = std::make_shared<std::string>();
    auto random_seed = std::make_shared<std::int64_t>(0);
    auto weights = std::make_shared<std::string>();
    auto init_seed = std::make_shared<std::uint64_t>(0);
    auto save_weights = std::make_shared<std::string>();
    auto out_logits = std::make_shared<std::string>();
    auto topk = std::make_shared<int>(5);
    auto output = std::make_shared<std::string>();
    cmd->add_option("--model", *model, "S, M, B, or toy");
    cmd->add_option("--config", *config, "model config file");
    cmd->add_option("--input", *input, "input image tensor (.gvt)");
    auto* rnd = cmd->add_option("--random", *random_seed,
                                "generate a seeded random input instead");
    cmd->add_option("--weights", *weights, "weight container (.gvtc)");
    cmd->add_option("--init-seed", *init_seed,
                    "weight init seed when no --weights is given");
    cmd->add_option("--save-weights", *save_weights,
                    "write the model's weights to this container");
    cmd->add_option("--out-logits", *out_logits, "write logits as GVT");
    cmd->add_option("--topk", *topk, "ranked logits to print")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--output", *output, "write the report as JSON");
    cmd->callback([=, &app]() {
      const bool have_random =
          app.get_subcommand("forward")->count("--random") > 0;
      (void)rnd;
      action = [=]() {
        return cmd_forward(*model, *config, *input, *random_seed, have_random,
                           *weights, *init_seed, *save_weights, *out_logits,
                           *topk, *output);
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    return action();
  } catch (const axialvig::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}

// End-to-end checks of the axialvig binary: exit codes, report schemas, and
// byte-identical deterministic payloads.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "axialvig/gvt.hpp"
#include "axialvig/report.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(AXIALVIG_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult res;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), pipe))
    res.out.append(buf, n);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("axialvig_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

nlohmann::ordered_json load_json(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  return nlohmann::ordered_json::parse(is);
}

nlohmann::ordered_json load_schema(const std::string& name) {
  return load_json(std::string(AXIALVIG_SOURCE_DIR) + "/schemas/" + name);
}

// Deterministic payload: every line except the timing section.
std::string deterministic_lines(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("timing.", 0) != 0) out += line + "\n";
  return out;
}

}  // namespace

TEST_CASE("cli: usage errors exit with code 2") {
  CHECK(run("").exit_code == 2);
  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("bench-graph --method sideways").exit_code == 2);
  CHECK(run("gradcheck").exit_code == 2);  // --block is required
  CHECK(run("count").exit_code == 2);      // --model or --config
  CHECK(run("count --model S --config x.cfg").exit_code == 2);
  CHECK(run("forward --model toy").exit_code == 2);  // input source required
  CHECK(run("forward --model toy --random 1 --input x.gvt").exit_code == 2);
}

TEST_CASE("cli: check invariants suite passes") {
  const auto res = run("check --suite invariants");
  CHECK(res.exit_code == 0);
  CHECK(res.out.find("status = pass") != std::string::npos);
  CHECK(res.out.find("cases_failed = 0") != std::string::npos);
}

TEST_CASE("cli: corrupted threshold makes the oracle suite fail") {
  const auto res = run("check --suite oracle --threshold-bias 1e9");
  CHECK(res.exit_code == 1);
  CHECK(res.out.find("status = fail") != std::string::npos);
}

TEST_CASE("cli: gradcheck report is deterministic and schema-valid") {
  TempDir dir;
  const std::string json_path = dir.file("grad.json");
  const auto a = run("gradcheck --block ffn --seed 9 --output " + json_path);
  CHECK(a.exit_code == 0);
  const auto b = run("gradcheck --block ffn --seed 9");
  CHECK(deterministic_lines(a.out) == deterministic_lines(b.out));
  axialvig::report::validate_against_schema(load_json(json_path),
                                            load_schema("gradcheck.schema.json"));
}

TEST_CASE("cli: bench-graph single method, repeats=1 stays well-formed") {
  TempDir dir;
  const std::string json_path = dir.file("bench.json");
  const auto res = run(
      "bench-graph --method svga --h 8 --w 8 --c 4 --k 2 --repeats 1 "
      "--warmup 0 --seed 3 --output " + json_path);
  CHECK(res.exit_code == 0);
  const auto j = load_json(json_path);
  axialvig::report::validate_against_schema(
      j, load_schema("bench_graph.schema.json"));
  CHECK(j["deterministic"]["method"] == "svga");
  const double median = j["timing"]["median_ms"].get<double>();
  CHECK(median >= j["timing"]["min_ms"].get<double>());
  CHECK(median <= j["timing"]["max_ms"].get<double>());
}

TEST_CASE("cli: bench-graph all methods emits three valid reports") {
  TempDir dir;
  const std::string json_path = dir.file("bench_all.json");
  const auto res = run(
      "bench-graph --method all --h 8 --w 8 --c 4 --k 2 --repeats 2 "
      "--warmup 1 --output " + json_path);
  CHECK(res.exit_code == 0);
  const auto arr = load_json(json_path);
  REQUIRE(arr.is_array());
  REQUIRE(arr.size() == 3);
  const auto schema = load_schema("bench_graph.schema.json");
  for (const auto& j : arr)
    axialvig::report::validate_against_schema(j, schema);

  const auto again = run(
      "bench-graph --method all --h 8 --w 8 --c 4 --k 2 --repeats 2 "
      "--warmup 1");
  CHECK(deterministic_lines(res.out) == deterministic_lines(again.out));
}

TEST_CASE("cli: count reports per-stage sums and scaling") {
  TempDir dir;
  const std::string json_path = dir.file("count.json");
  const auto res = run("count --model S --output " + json_path);
  CHECK(res.exit_code == 0);
  const auto j = load_json(json_path);
  axialvig::report::validate_against_schema(j, load_schema("count.schema.json"));
  const auto& det = j["deterministic"];
  std::int64_t sum = det["params.stem"].get<std::int64_t>() +
                     det["params.head"].get<std::int64_t>();
  for (int i = 1; i <= 4; ++i)
    sum += det["params.stage" + std::to_string(i)].get<std::int64_t>();
  CHECK(sum == det["params.total"].get<std::int64_t>());

  const auto r224 = run("count --model S --resolution 224 --output " +
                        dir.file("c224.json"));
  const auto r448 = run("count --model S --resolution 448 --output " +
                        dir.file("c448.json"));
  CHECK(r224.exit_code == 0);
  CHECK(r448.exit_code == 0);
  const auto j224 = load_json(dir.file("c224.json"));
  const auto j448 = load_json(dir.file("c448.json"));
  CHECK(j448["deterministic"]["macs.stem"].get<std::int64_t>() ==
        4 * j224["deterministic"]["macs.stem"].get<std::int64_t>());

  CHECK(run("count --model XXL").exit_code == 2);
}

TEST_CASE("cli: count accepts a config file") {
  TempDir dir;
  const std::string cfg_path = dir.file("toy.cfg");
  {
    const auto res = run("count --model toy --output " + dir.file("a.json"));
    CHECK(res.exit_code == 0);
  }
  {
    std::ofstream cfg(cfg_path);
    cfg << "name = toy\nclasses = 10\nresolution = 32\n";
    for (int i = 1; i <= 4; ++i) {
      const int ch[] = {8, 16, 32, 64};
      const int k[] = {2, 2, 1, 1};
      cfg << "stage" << i << ".channels = " << ch[i - 1] << "\n"
          << "stage" << i << ".mbconv_repeats = 1\n"
          << "stage" << i << ".dagc_repeats = 1\n"
          << "stage" << i << ".k = " << k[i - 1] << "\n";
    }
  }
  const auto res = run("count --config " + cfg_path + " --output " +
                       dir.file("b.json"));
  CHECK(res.exit_code == 0);
  CHECK(load_json(dir.file("a.json"))["deterministic"]["params.total"] ==
        load_json(dir.file("b.json"))["deterministic"]["params.total"]);
}

TEST_CASE("cli: forward round trip through saved weights") {
  TempDir dir;
  const std::string w = dir.file("toy.gvtc");
  const std::string l1 = dir.file("a.gvt");
  const std::string l2 = dir.file("b.gvt");
  const std::string json_path = dir.file("fwd.json");

  const auto first = run("forward --model toy --random 42 --save-weights " + w +
                         " --out-logits " + l1 + " --output " + json_path);
  CHECK(first.exit_code == 0);
  CHECK(first.out.find("stage_extents = 8,4,2,1") != std::string::npos);
  axialvig::report::validate_against_schema(load_json(json_path),
                                            load_schema("forward.schema.json"));

  const auto second = run("forward --model toy --random 42 --weights " + w +
                          " --out-logits " + l2);
  CHECK(second.exit_code == 0);
  CHECK(deterministic_lines(first.out) == deterministic_lines(second.out));

  const auto a = axialvig::gvt::read_file<float>(l1);
  const auto b = axialvig::gvt::read_file<float>(l2);
  CHECK(a.same_bits(b));
  CHECK(a.shape() == axialvig::Shape{1, 10});

  // missing weights file -> clean usage error
  const auto missing =
      run("forward --model toy --random 1 --weights " + dir.file("none.gvtc"));
  CHECK(missing.exit_code == 2);
  CHECK(missing.out.find("error:") != std::string::npos);
}

TEST_CASE("cli: forward consumes GVT input files") {
  TempDir dir;
  const std::string img_path = dir.file("img.gvt");
  axialvig::SplitMix64 rng(5);
  const auto img = axialvig::Tensor<float>::uniform(
      axialvig::Shape::nchw(1, 3, 32, 32), rng, -1.f, 1.f);
  axialvig::gvt::write_file(img_path, img);

  const auto res = run("forward --model toy --input " + img_path);
  CHECK(res.exit_code == 0);

  // shape mismatch names the expected shape
  const std::string bad_path = dir.file("bad.gvt");
  axialvig::gvt::write_file(
      bad_path, axialvig::Tensor<float>::zeros(axialvig::Shape::nchw(1, 3, 64, 64)));
  const auto bad = run("forward --model toy --input " + bad_path);
  CHECK(bad.exit_code == 2);
  CHECK(bad.out.find("(N,3,32,32)") != std::string::npos);
}

TEST_CASE("cli: bench-graph exports trace and neighbor tensors") {
  TempDir dir;
  const std::string trace = dir.file("trace.gvt");
  const std::string nb = dir.file("nb.gvt");
  const auto res = run(
      "bench-graph --method all --h 6 --w 6 --c 3 --k 2 --repeats 1 "
      "--warmup 0 --export-trace " + trace + " --export-neighbors " + nb);
  CHECK(res.exit_code == 0);
  const auto t = axialvig::gvt::read_file<float>(trace);
  CHECK(t.shape() == axialvig::Shape::nchw(1, 6, 6, 6));  // 3+3 offsets
  const auto n = axialvig::gvt::read_file<float>(nb);
  CHECK(n.shape() == axialvig::Shape::nchw(1, 1, 36, 2));
}

TEST_CASE("cli: check JSON validates against the committed schema") {
  TempDir dir;
  const std::string json_path = dir.file("check.json");
  const auto res = run("check --suite invariants --output " + json_path);
  CHECK(res.exit_code == 0);
  axialvig::report::validate_against_schema(load_json(json_path),
                                            load_schema("check.schema.json"));
}

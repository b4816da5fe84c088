#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "axialvig/graph.hpp"
#include "axialvig/ops.hpp"
#include "axialvig/tensor.hpp"

namespace axialvig::verify {

// ---------------------------------------------------------------------------
// Independent oracles. These re-derive results by direct per-node enumeration
// and never share the roll/mask/GEMM code paths they are used to check.

// Six-loop direct convolution.
Tensor<double> naive_conv2d(const Tensor<double>& x,
                            const ops::ConvParams<double>& p);

// Independent per-channel 2-D correlation (depthwise case).
Tensor<double> naive_depthwise_conv2d(const Tensor<double>& x,
                                      const ops::ConvParams<double>& p);

struct OracleAggregate {
  Tensor<double> x_final;
  std::int64_t connections = 0;
};

// Per-node enumeration of all axial wraparound neighbors at multiples of k,
// thresholded at mu - sigma, per-channel max of the connected differences
// over a zero floor.
OracleAggregate oracle_dagc(const Tensor<double>& x, int k,
                            const std::vector<graph::StatPair>& stats);

// Same enumeration with every neighbor connected.
Tensor<double> oracle_svga(const Tensor<double>& x, int k);

// Full pairwise distance matrix with a stable (distance, index) sort.
graph::NeighborTable oracle_knn_neighbors(const Tensor<double>& x, int k);

// Direct per-node neighbor loop.
Tensor<double> oracle_knn_aggregate(const Tensor<double>& x,
                                    const graph::NeighborTable& table);

// ---------------------------------------------------------------------------
// Verification suites (shared by the CLI `check` command and the tests).

struct CaseResult {
  std::string id;
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CaseResult> cases;

  int failures() const {
    int n = 0;
    for (const auto& c : cases) n += c.pass ? 0 : 1;
    return n;
  }
  bool pass() const { return failures() == 0; }
};

// Brute-force oracle equivalence over H,W in {4,6,8}, C in {1,2,4},
// K in {1,2,4}, five seeds each. threshold_bias is a corruption hook used by
// negative-control tests: it shifts the implementation's DAGC threshold while
// the oracle keeps the true one.
SuiteReport run_oracle_suite(double threshold_bias = 0.0);

// Structural invariants of graph construction and the ViG blocks.
SuiteReport run_invariant_suite();

// ---------------------------------------------------------------------------
// Gradient checks against central finite differences (f64, step 1e-5), with
// the DAGC mask held constant.

enum class BlockKind { dagc, grapher, ffn, mbconv, pair };

const char* block_kind_name(BlockKind kind);
BlockKind block_kind_from_name(const std::string& name);

struct TensorGrad {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  std::string block;
  std::uint64_t requested_seed = 0;
  std::uint64_t effective_seed = 0;
  bool tie_resampled = false;
  double threshold = 1e-4;
  double max_rel_err = 0.0;
  std::vector<TensorGrad> tensors;
  bool pass = false;
  std::string failure;  // e.g. non-finite gradient, with the tensor named
};

// Runs the block on a 1x8x8x8 f64 input. constant_input forces a constant
// image, which puts every distance exactly on the mu - sigma threshold; the
// input is then resampled and the report notes it.
GradcheckReport gradcheck_block(BlockKind kind, std::uint64_t seed,
                                bool constant_input = false);

}  // namespace axialvig::verify

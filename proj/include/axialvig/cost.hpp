#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "axialvig/model.hpp"

namespace axialvig::cost {

struct SectionCost {
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

// Analytic closed-form accounting. Parameters cover conv weights/biases and
// BN gamma/beta (running statistics are buffers). MACs cover convolutions
// (out_elements * in_ch/groups * kh * kw) plus the DAGC distance work at C
// multiplies per compared node pair, the stats pass included; BN,
// activations, rolls and maxima are excluded. A downsample is attributed to
// the stage it feeds.
struct CostReport {
  std::string model;
  Index resolution = 0;
  SectionCost stem;
  std::array<SectionCost, 4> stages;
  SectionCost head;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
};

CostReport count(const model::ModelConfig& config, Index resolution);

inline CostReport count_params(const model::ModelConfig& config) {
  return count(config, config.resolution);
}

inline CostReport count_macs(const model::ModelConfig& config,
                             Index resolution) {
  return count(config, resolution);
}

}  // namespace axialvig::cost

#include "axialvig/cost.hpp"

namespace axialvig::cost {

namespace {

std::int64_t conv_params(Index out_ch, Index in_ch, Index k, Index groups = 1,
                         bool bias = true) {
  return out_ch * (in_ch / groups) * k * k + (bias ? out_ch : 0);
}

std::int64_t bn_params(Index c) { return 2 * c; }

std::int64_t conv_macs(Index out_ch, Index in_ch, Index k, Index out_extent,
                       Index groups = 1) {
  return out_ch * out_extent * out_extent * (in_ch / groups) * k * k;
}

// One DAGC aggregate: C multiplies per compared node pair, the axial passes
// plus the quadrant stats pass.
std::int64_t dagc_macs(Index c, Index extent, int k) {
  const Index per_node = (extent + k - 1) / k + (extent + k - 1) / k;
  const Index stats = (extent / 2) * (extent / 2);
  return (extent * extent * per_node + stats) * c;
}

}  // namespace

CostReport count(const model::ModelConfig& config, Index resolution) {
  if (resolution < 32 || resolution % 32 != 0)
    throw ConfigError("count: resolution must be a positive multiple of 32, got " +
                      std::to_string(resolution));
  CostReport report;
  report.model = config.name;
  report.resolution = resolution;

  const Index c1 = config.stages[0].channels;
  report.stem.params = conv_params(c1 / 2, 3, 3) + bn_params(c1 / 2) +
                       conv_params(c1, c1 / 2, 3) + bn_params(c1);
  report.stem.macs = conv_macs(c1 / 2, 3, 3, resolution / 2) +
                     conv_macs(c1, c1 / 2, 3, resolution / 4);

  Index extent = resolution / 4;
  for (int i = 0; i < 4; ++i) {
    const model::StageConfig& sc = config.stages[static_cast<std::size_t>(i)];
    SectionCost& sec = report.stages[static_cast<std::size_t>(i)];
    const Index c = sc.channels;

    if (i > 0) {
      const Index prev = config.stages[static_cast<std::size_t>(i - 1)].channels;
      extent /= 2;
      sec.params += conv_params(c, prev, 3) + bn_params(c);
      sec.macs += conv_macs(c, prev, 3, extent);
    }

    // MBConv: expand 1x1 -> dw 3x3 -> project 1x1, BN after each conv.
    const Index ec = 4 * c;
    const std::int64_t mb_params =
        conv_params(ec, c, 1) + bn_params(ec) +
        conv_params(ec, ec, 3, ec) + bn_params(ec) +
        conv_params(c, ec, 1) + bn_params(c);
    const std::int64_t mb_macs = conv_macs(ec, c, 1, extent) +
                                 conv_macs(ec, ec, 3, extent, ec) +
                                 conv_macs(c, ec, 1, extent);
    sec.params += sc.mbconv_repeats * mb_params;
    sec.macs += sc.mbconv_repeats * mb_macs;

    // DAGC block: grapher (cpe, w_in, dyn_out, w_out) + FFN (w1, w2).
    const std::int64_t grapher_params =
        conv_params(c, c, 3, c) +                       // cpe, no BN
        conv_params(c, c, 1) + bn_params(c) +           // w_in
        conv_params(c, 2 * c, 1) + bn_params(c) +       // dyn_out
        conv_params(c, c, 1) + bn_params(c);            // w_out
    const std::int64_t ffn_params =
        conv_params(4 * c, c, 1) + bn_params(4 * c) +
        conv_params(c, 4 * c, 1) + bn_params(c);
    const std::int64_t grapher_macs = conv_macs(c, c, 3, extent, c) +
                                      conv_macs(c, c, 1, extent) +
                                      dagc_macs(c, extent, sc.k) +
                                      conv_macs(c, 2 * c, 1, extent) +
                                      conv_macs(c, c, 1, extent);
    const std::int64_t ffn_macs = conv_macs(4 * c, c, 1, extent) +
                                  conv_macs(c, 4 * c, 1, extent);
    sec.params += sc.dagc_repeats * (grapher_params + ffn_params);
    sec.macs += sc.dagc_repeats * (grapher_macs + ffn_macs);
  }

  const Index c4 = config.stages[3].channels;
  report.head.params = conv_params(4 * c4, c4, 1) +
                       conv_params(config.classes, 4 * c4, 1);
  report.head.macs =
      conv_macs(4 * c4, c4, 1, 1) + conv_macs(config.classes, 4 * c4, 1, 1);

  report.total_params = report.stem.params + report.head.params;
  report.total_macs = report.stem.macs + report.head.macs;
  for (const SectionCost& s : report.stages) {
    report.total_params += s.params;
    report.total_macs += s.macs;
  }
  return report;
}

}  // namespace axialvig::cost

#include <cmath>
#include <limits>
#include <memory>

#include "axialvig/autodiff.hpp"
#include "axialvig/blocks.hpp"
#include "axialvig/verify.hpp"

namespace axialvig::verify {

const char* block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::dagc: return "dagc";
    case BlockKind::grapher: return "grapher";
    case BlockKind::ffn: return "ffn";
    case BlockKind::mbconv: return "mbconv";
    default: return "pair";
  }
}

BlockKind block_kind_from_name(const std::string& name) {
  if (name == "dagc") return BlockKind::dagc;
  if (name == "grapher") return BlockKind::grapher;
  if (name == "ffn") return BlockKind::ffn;
  if (name == "mbconv") return BlockKind::mbconv;
  if (name == "pair") return BlockKind::pair;
  throw ConfigError("gradcheck: unknown block '" + name +
                    "' (expected dagc, grapher, ffn, mbconv, or pair)");
}

namespace {

constexpr Index kChannels = 8;
constexpr Index kExtent = 8;
constexpr int kHops = 2;
constexpr double kStep = 1e-5;

struct Recorded {
  Tape<double> tape;
  typename Tape<double>::Id loss = -1;
  bool tie_seen = false;
};

void record(Recorded& rec, BlockKind kind, const Tensor<double>& input,
            std::uint64_t param_seed) {
  SplitMix64 rng(param_seed);
  blocks::TapeEngine<double> eng(rec.tape);
  const auto x = eng.input(input, "input");
  typename Tape<double>::Id out = x;
  switch (kind) {
    case BlockKind::grapher: {
      const auto gp = blocks::make_grapher<double>(rng, kChannels, kHops);
      out = blocks::dynamic_grapher(eng, x, gp);
      break;
    }
    case BlockKind::ffn: {
      const auto fp = blocks::make_ffn<double>(rng, kChannels);
      out = blocks::ffn(eng, x, fp);
      break;
    }
    case BlockKind::mbconv: {
      const auto mp = blocks::make_mbconv<double>(rng, kChannels);
      out = blocks::mbconv(eng, x, mp);
      break;
    }
    case BlockKind::dagc: {
      const auto gp = blocks::make_grapher<double>(rng, kChannels, kHops);
      const auto fp = blocks::make_ffn<double>(rng, kChannels);
      out = blocks::dagc_block(eng, x, gp, fp);
      break;
    }
    case BlockKind::pair: {
      const auto gp = blocks::make_grapher<double>(rng, kChannels, kHops);
      const auto fp = blocks::make_ffn<double>(rng, kChannels);
      const auto mp = blocks::make_mbconv<double>(rng, kChannels);
      out = blocks::mbconv(eng, blocks::dagc_block(eng, x, gp, fp), mp,
                           "mbconv");
      break;
    }
  }
  rec.loss = rec.tape.mean_all(out);
  rec.tie_seen = eng.tie_seen();
}

}  // namespace

GradcheckReport gradcheck_block(BlockKind kind, std::uint64_t seed,
                                bool constant_input) {
  GradcheckReport report;
  report.block = block_kind_name(kind);
  report.requested_seed = seed;
  report.effective_seed = seed;

  // The mask threshold is mu - sigma; a constant image puts every distance
  // exactly on it. Resample the input until recording sees no tie.
  Tensor<double> input;
  if (constant_input) {
    input = Tensor<double>::full(Shape::nchw(1, kChannels, kExtent, kExtent),
                                 0.5);
  } else {
    SplitMix64 rng(seed ^ 0xA5A5A5A5A5A5A5A5ull);
    input = Tensor<double>::uniform(
        Shape::nchw(1, kChannels, kExtent, kExtent), rng, -1.0, 1.0);
  }

  std::unique_ptr<Recorded> rec;
  for (int attempt = 0; attempt < 8; ++attempt) {
    rec = std::make_unique<Recorded>();
    record(*rec, kind, input, seed);
    if (!rec->tie_seen) break;
    report.tie_resampled = true;
    ++report.effective_seed;
    SplitMix64 rng(report.effective_seed ^ 0xA5A5A5A5A5A5A5A5ull);
    input = Tensor<double>::uniform(
        Shape::nchw(1, kChannels, kExtent, kExtent), rng, -1.0, 1.0);
  }
  if (rec->tie_seen) {
    report.pass = false;
    report.failure = "mask tie persisted after resampling";
    return report;
  }

  const auto adjoints = rec->tape.backward(rec->loss);
  for (const auto leaf : rec->tape.leaves()) {
    const Tensor<double> analytic = rec->tape.gradient(adjoints, leaf);
    const Tensor<double> fd =
        finite_difference(rec->tape, rec->loss, leaf, kStep);
    TensorGrad tg;
    tg.name = rec->tape.name(leaf);
    tg.max_rel_err = max_relative_error(analytic, fd);
    for (Index i = 0; i < analytic.numel(); ++i)
      if (!std::isfinite(static_cast<double>(analytic[i])) ||
          !std::isfinite(static_cast<double>(fd[i]))) {
        report.failure = "non-finite gradient in tensor " + tg.name;
        tg.max_rel_err = std::numeric_limits<double>::infinity();
      }
    report.max_rel_err = std::max(report.max_rel_err, tg.max_rel_err);
    report.tensors.push_back(std::move(tg));
  }
  report.pass = report.failure.empty() && report.max_rel_err < report.threshold;
  return report;
}

}  // namespace axialvig::verify

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "etclab/rng.hpp"
#include "etclab/tokenizer.hpp"

namespace etclab {

// Binary gap selector over the n+1 insertion points of an n-token query:
// index 0 is before the first token, index n after the last.
struct GapMask {
  std::vector<std::uint8_t> m;
  int sum() const {
    int s = 0;
    for (const auto b : m) s += b;
    return s;
  }
};

struct EtcExample {
  TokenSequence x_extend;              // template after generator fill, length n'
  std::vector<std::uint8_t> y;         // 1 exactly at inserted positions
  GapMask m;
  std::vector<int> masked_positions;   // template indices that held the mask token
};

struct MlmExample {
  TokenSequence x_mask;
  std::vector<std::int32_t> targets;        // original ids; read where mask_positions=1
  std::vector<std::uint8_t> mask_positions;
};

struct ElectraExample {
  TokenSequence x_replace;      // same length as the input
  std::vector<std::uint8_t> y;  // 1 iff the token now differs from the original
};

// Fills the given mask-token positions of a corrupted sequence, returning one
// id per position. Implementations must not return pad/cls/mask ids.
using FillFn = std::function<std::vector<std::int32_t>(
    const TokenSequence& corrupted, const std::vector<int>& positions, Rng& rng)>;

// n+1 independent Bernoulli(p) draws, one per gap.
GapMask sample_gap_positions(int n, double p, Rng& rng);

// Inserts the mask token at every selected gap. Labels derive from the
// template, so they are fixed before any generator runs.
TokenSequence build_etc_template(const TokenSequence& x, const GapMask& m);
std::vector<std::uint8_t> build_etc_labels(const TokenSequence& x_temp);

// Full ETC pipeline for one query: sample gaps, build the template and
// labels, then let `fill` replace the masks. If the extended length would
// exceed max_len the mask is resampled once; if it still does not fit,
// selected gaps are dropped from the right. Labels are position-based: a
// fill that happens to reproduce a neighboring token keeps y=1.
EtcExample build_etc_example(const TokenSequence& x, double p, int max_len, const FillFn& fill,
                             Rng& rng);

// Plain REPLACE-with-mask corruption. Queries where no position is drawn
// come through unchanged and simply carry no loss positions.
MlmExample build_mlm_example(const TokenSequence& x, double rate, Rng& rng);

// Mask-then-fill in place; y compares content against the original, so
// generator reproductions are labeled 0.
ElectraExample build_electra_example(const TokenSequence& x, double rate, const FillFn& fill,
                                     Rng& rng);

// One human-readable record for the corruption dump: original, template,
// extended query, and the label string, tab-separated.
std::string format_corrupt_record(const TokenSequence& x, const EtcExample& ex,
                                  const Vocabulary& v);

}  // namespace etclab

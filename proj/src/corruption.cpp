#include "etclab/corruption.hpp"

#include <algorithm>
#include <stdexcept>

#include "etclab/errors.hpp"

namespace etclab {
namespace {

void check_rate(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DataError("sampling ratio must be in [0,1], got " + std::to_string(p));
}

}  // namespace

GapMask sample_gap_positions(int n, double p, Rng& rng) {
  check_rate(p);
  if (n < 1) throw DataError("gap sampling needs at least one token");
  GapMask g;
  g.m.resize(static_cast<std::size_t>(n) + 1);
  for (auto& b : g.m) b = rng.bernoulli(p) ? 1 : 0;
  return g;
}

TokenSequence build_etc_template(const TokenSequence& x, const GapMask& m) {
  if (m.m.size() != static_cast<std::size_t>(x.n()) + 1)
    throw DataError("gap mask length " + std::to_string(m.m.size()) +
                    " does not match token count " + std::to_string(x.n()));
  TokenSequence t;
  t.ids.reserve(x.ids.size() + static_cast<std::size_t>(m.sum()));
  for (std::size_t i = 0; i <= x.ids.size(); ++i) {
    if (m.m[i]) t.ids.push_back(Vocabulary::kMaskId);
    if (i < x.ids.size()) t.ids.push_back(x.ids[i]);
  }
  return t;
}

std::vector<std::uint8_t> build_etc_labels(const TokenSequence& x_temp) {
  std::vector<std::uint8_t> y(x_temp.ids.size());
  for (std::size_t t = 0; t < x_temp.ids.size(); ++t)
    y[t] = x_temp.ids[t] == Vocabulary::kMaskId ? 1 : 0;
  return y;
}

EtcExample build_etc_example(const TokenSequence& x, double p, int max_len, const FillFn& fill,
                             Rng& rng) {
  check_rate(p);
  const int n = x.n();
  GapMask m = sample_gap_positions(n, p, rng);
  if (n + m.sum() > max_len) {
    m = sample_gap_positions(n, p, rng);  // one retry with the same ratio
    for (std::size_t i = m.m.size(); i-- > 0 && n + m.sum() > max_len;) m.m[i] = 0;
  }

  EtcExample ex;
  ex.m = m;
  TokenSequence x_temp = build_etc_template(x, m);
  ex.y = build_etc_labels(x_temp);
  for (std::size_t t = 0; t < x_temp.ids.size(); ++t)
    if (ex.y[t]) ex.masked_positions.push_back(static_cast<int>(t));

  ex.x_extend = x_temp;
  if (!ex.masked_positions.empty()) {
    const std::vector<std::int32_t> filled = fill(x_temp, ex.masked_positions, rng);
    if (filled.size() != ex.masked_positions.size())
      throw std::logic_error("fill returned wrong count");
    for (std::size_t k = 0; k < filled.size(); ++k)
      ex.x_extend.ids[static_cast<std::size_t>(ex.masked_positions[k])] = filled[k];
  }
  return ex;
}

MlmExample build_mlm_example(const TokenSequence& x, double rate, Rng& rng) {
  check_rate(rate);
  MlmExample ex;
  ex.x_mask = x;
  ex.targets = x.ids;
  ex.mask_positions.resize(x.ids.size());
  for (std::size_t t = 0; t < x.ids.size(); ++t) {
    if (rng.bernoulli(rate)) {
      ex.x_mask.ids[t] = Vocabulary::kMaskId;
      ex.mask_positions[t] = 1;
    }
  }
  return ex;
}

ElectraExample build_electra_example(const TokenSequence& x, double rate, const FillFn& fill,
                                     Rng& rng) {
  check_rate(rate);
  ElectraExample ex;
  ex.x_replace = x;
  ex.y.assign(x.ids.size(), 0);
  std::vector<int> positions;
  for (std::size_t t = 0; t < x.ids.size(); ++t)
    if (rng.bernoulli(rate)) positions.push_back(static_cast<int>(t));
  if (positions.empty()) return ex;

  TokenSequence x_mask = x;
  for (const int t : positions) x_mask.ids[static_cast<std::size_t>(t)] = Vocabulary::kMaskId;
  const std::vector<std::int32_t> filled = fill(x_mask, positions, rng);
  if (filled.size() != positions.size()) throw std::logic_error("fill returned wrong count");
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const auto t = static_cast<std::size_t>(positions[k]);
    ex.x_replace.ids[t] = filled[k];
    ex.y[t] = filled[k] != x.ids[t] ? 1 : 0;
  }
  return ex;
}

std::string format_corrupt_record(const TokenSequence& x, const EtcExample& ex,
                                  const Vocabulary& v) {
  TokenSequence x_temp = ex.x_extend;
  for (const int t : ex.masked_positions)
    x_temp.ids[static_cast<std::size_t>(t)] = Vocabulary::kMaskId;
  std::string labels;
  for (const auto b : ex.y) labels.push_back(b ? '1' : '0');
  return decode(x, v) + "\t" + decode(x_temp, v) + "\t" + decode(ex.x_extend, v) + "\t" + labels;
}

}  // namespace etclab

#include "etclab/metrics.hpp"

#include <algorithm>
#include <map>

namespace etclab {

TagScheme TagScheme::from_names(const std::vector<std::string>& names) {
  TagScheme s;
  s.names = names;
  std::map<std::string, int> types;
  for (const std::string& name : names) {
    if (name == "O") {
      s.kind.push_back(kOutside);
      s.type.push_back(-1);
      continue;
    }
    if (name.size() < 3 || (name[0] != 'B' && name[0] != 'I') || name[1] != '-')
      throw DataError("malformed tag name: " + name);
    const std::string entity = name.substr(2);
    const auto [it, inserted] = types.emplace(entity, static_cast<int>(types.size()));
    s.kind.push_back(name[0] == 'B' ? kBegin : kInside);
    s.type.push_back(it->second);
  }
  return s;
}

std::vector<Span> extract_spans(const std::vector<int>& tags, const TagScheme& scheme,
                                long long* repaired) {
  std::vector<Span> spans;
  int open_type = -1;
  int open_start = 0;
  const auto close = [&](int end) {
    if (open_type >= 0) spans.push_back({open_start, end, open_type});
    open_type = -1;
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const int tag = tags[i];
    if (tag < 0 || tag >= scheme.size())
      throw DataError("tag id " + std::to_string(tag) + " outside scheme");
    switch (scheme.kind[static_cast<std::size_t>(tag)]) {
      case TagScheme::kOutside:
        close(i);
        break;
      case TagScheme::kBegin:
        close(i);
        open_type = scheme.type[static_cast<std::size_t>(tag)];
        open_start = i;
        break;
      case TagScheme::kInside: {
        const int t = scheme.type[static_cast<std::size_t>(tag)];
        if (open_type == t) break;  // span continues
        if (repaired) ++*repaired;
        close(i);
        open_type = t;
        open_start = i;
        break;
      }
    }
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

F1Result span_f1(const std::vector<std::vector<int>>& pred,
                 const std::vector<std::vector<int>>& gold, const TagScheme& scheme) {
  if (pred.size() != gold.size()) throw DataError("span_f1: sentence counts differ");
  F1Result r;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != gold[s].size())
      throw DataError("span_f1: tag lengths differ in sentence " + std::to_string(s));
    const auto ps = extract_spans(pred[s], scheme, &r.repaired);
    const auto gs = extract_spans(gold[s], scheme, &r.repaired);
    r.pred_spans += static_cast<long long>(ps.size());
    r.gold_spans += static_cast<long long>(gs.size());
    for (const Span& a : ps)
      if (std::find(gs.begin(), gs.end(), a) != gs.end()) ++r.matched;
  }
  if (r.pred_spans == 0 && r.gold_spans == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    return r;
  }
  r.precision = r.pred_spans ? static_cast<double>(r.matched) / r.pred_spans : 0.0;
  r.recall = r.gold_spans ? static_cast<double>(r.matched) / r.gold_spans : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

double binary_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.size() != gold.size()) throw DataError("binary_f1: label counts differ");
  long long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && gold[i] == 1) ++tp;
    if (pred[i] == 1 && gold[i] != 1) ++fp;
    if (pred[i] != 1 && gold[i] == 1) ++fn;
  }
  const long long denom = 2 * tp + fp + fn;
  return denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
}

double exact_match_accuracy(const std::vector<std::vector<std::int32_t>>& pred,
                            const std::vector<std::vector<std::int32_t>>& gold) {
  if (pred.size() != gold.size()) throw DataError("exact match: sequence counts differ");
  if (pred.empty()) throw DataError("empty split");
  long long hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace etclab

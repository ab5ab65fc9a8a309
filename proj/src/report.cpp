#include "etclab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "etclab/errors.hpp"
#include "json.hpp"

namespace etclab {

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", r * 100.0);
  return buf;
}

// Aligned plain-text grid. The first column is left-aligned; value columns
// are right-aligned under their headers.
std::string render_grid(const std::string& corner, const std::vector<std::string>& cols,
                        const std::vector<std::string>& rows,
                        const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width(cols.size() + 1);
  width[0] = corner.size();
  for (const std::string& r : rows) width[0] = std::max(width[0], r.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    width[c + 1] = cols[c].size();
    for (const auto& row : cells) width[c + 1] = std::max(width[c + 1], row[c].size());
  }

  std::string out;
  auto emit = [&](const std::string& head, const std::vector<std::string>* row) {
    out += head;
    out.append(width[0] - head.size(), ' ');
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string& cell = row ? (*row)[c] : cols[c];
      out += "  ";
      out.append(width[c + 1] - cell.size(), ' ');
      out += cell;
    }
    out += '\n';
  };
  emit(corner, nullptr);
  for (std::size_t r = 0; r < rows.size(); ++r) emit(rows[r], &cells[r]);
  return out;
}

void push_unique(std::vector<std::string>& order, const std::string& v) {
  if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
}

}  // namespace

ReportEntry make_entry(const std::string& method, double ratio,
                       const std::vector<EvalReport>& seeds) {
  if (seeds.empty()) throw DataError("no seed reports to aggregate");
  ReportEntry e;
  e.method = method;
  e.ratio = ratio;
  e.task = seeds.front().task;
  e.metric = seeds.front().metric;
  e.support = seeds.front().support;
  for (const EvalReport& r : seeds) {
    if (r.task != e.task || r.metric != e.metric)
      throw DataError("seed reports disagree on task or metric");
    if (r.support != e.support) throw DataError("seed reports disagree on support");
    for (const double v : r.per_seed) e.per_seed.push_back(v);
  }
  for (const double v : e.per_seed) e.value += v;
  e.value /= static_cast<double>(e.per_seed.size());
  return e;
}

void save_report(const std::string& path, const ReportEntry& entry) {
  nlohmann::json j;
  j["method"] = entry.method;
  j["task"] = entry.task;
  j["metric"] = entry.metric;
  j["ratio"] = entry.ratio;
  j["value"] = entry.value;
  j["per_seed"] = entry.per_seed;
  j["support"] = entry.support;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path);
  out << j.dump(2) << '\n';
}

ReportEntry load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read report: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report " + path + ": " + e.what());
  }
  ReportEntry entry;
  try {
    entry.method = j.at("method").get<std::string>();
    entry.task = j.at("task").get<std::string>();
    entry.metric = j.at("metric").get<std::string>();
    entry.ratio = j.at("ratio").get<double>();
    entry.value = j.at("value").get<double>();
    entry.per_seed = j.at("per_seed").get<std::vector<double>>();
    entry.support = j.at("support").get<long long>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report " + path + ": " + e.what());
  }
  if (entry.per_seed.empty()) throw DataError("malformed report " + path + ": no per-seed values");
  if (!(entry.value >= 0.0 && entry.value <= 1.0))
    throw DataError("malformed report " + path + ": value outside [0,1]");
  return entry;
}

std::string method_table(const std::vector<ReportEntry>& entries) {
  std::vector<std::string> methods, tasks;
  std::set<std::pair<std::string, std::string>> seen;
  for (const ReportEntry& e : entries) {
    if (e.ratio != 1.0) continue;
    if (!seen.insert({e.method, e.task}).second)
      throw DataError("duplicate report for method " + e.method + " task " + e.task);
    push_unique(methods, e.method);
    push_unique(tasks, e.task);
  }
  if (methods.empty()) throw DataError("no full-data reports to tabulate");

  std::vector<std::vector<std::string>> cells(methods.size(),
                                              std::vector<std::string>(tasks.size(), "-"));
  for (const ReportEntry& e : entries) {
    if (e.ratio != 1.0) continue;
    const auto r = std::find(methods.begin(), methods.end(), e.method) - methods.begin();
    const auto c = std::find(tasks.begin(), tasks.end(), e.task) - tasks.begin();
    cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = format_value(e.value);
  }
  return render_grid("method", tasks, methods, cells);
}

std::string fewshot_table(const std::vector<ReportEntry>& entries) {
  std::vector<std::string> tasks;
  for (const ReportEntry& e : entries) push_unique(tasks, e.task);
  if (tasks.empty()) throw DataError("no reports to tabulate");

  std::string out;
  for (const std::string& task : tasks) {
    std::vector<std::string> methods;
    std::vector<double> ratios;
    std::set<std::pair<std::string, double>> seen;
    for (const ReportEntry& e : entries) {
      if (e.task != task) continue;
      if (!seen.insert({e.method, e.ratio}).second)
        throw DataError("duplicate report for method " + e.method + " task " + e.task +
                        " ratio " + format_ratio(e.ratio));
      push_unique(methods, e.method);
      if (std::find(ratios.begin(), ratios.end(), e.ratio) == ratios.end())
        ratios.push_back(e.ratio);
    }
    std::sort(ratios.begin(), ratios.end());

    std::vector<std::string> cols;
    for (const double r : ratios) cols.push_back(format_ratio(r));
    std::vector<std::vector<std::string>> cells(methods.size(),
                                                std::vector<std::string>(ratios.size(), "-"));
    for (const ReportEntry& e : entries) {
      if (e.task != task) continue;
      const auto r = std::find(methods.begin(), methods.end(), e.method) - methods.begin();
      const auto c = std::find(ratios.begin(), ratios.end(), e.ratio) - ratios.begin();
      cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = format_value(e.value);
    }
    if (!out.empty()) out += '\n';
    out += "task: " + task + '\n';
    out += render_grid("method", cols, methods, cells);
  }
  return out;
}

}  // namespace etclab

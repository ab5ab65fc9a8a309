#pragma once

#include <string>
#include <vector>

#include "etclab/downstream.hpp"

namespace etclab {

// One stored evaluation result: a pre-training method crossed with a task at
// a labeled-data ratio, aggregated over fine-tuning seeds.
struct ReportEntry {
  std::string method;
  std::string task;
  std::string metric;
  double ratio = 1.0;
  double value = 0;  // mean of per_seed
  std::vector<double> per_seed;
  long long support = 0;
};

// Folds per-seed EvalReports into one entry. The reports must agree on task,
// metric, and support; value becomes the mean over seeds.
ReportEntry make_entry(const std::string& method, double ratio,
                       const std::vector<EvalReport>& seeds);

void save_report(const std::string& path, const ReportEntry& entry);
ReportEntry load_report(const std::string& path);

// Full-data comparison: rows are methods, columns are tasks, cells are mean
// metric values from ratio-1 entries.
std::string method_table(const std::vector<ReportEntry>& entries);

// Few-shot grid, one block per task: rows are methods, columns are ratios in
// ascending order.
std::string fewshot_table(const std::vector<ReportEntry>& entries);

}  // namespace etclab

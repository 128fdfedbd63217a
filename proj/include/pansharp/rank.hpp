#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pansharp/metrics.hpp"

namespace pansharp {

struct MethodRank {
  std::string name;
  double val_psnr = 0, test_psnr = 0;
  int val_rank = 0, test_rank = 0;
};

// Mean PSNR per method from eval CSVs; every method must cover the same
// sample set.
inline std::map<std::string, double> mean_psnr_by_method(
    const std::vector<std::pair<std::string, std::filesystem::path>>& method_csvs) {
  std::map<std::string, double> out;
  std::optional<std::set<std::string>> ids;
  for (const auto& [name, path] : method_csvs) {
    MetricReport rep = MetricReport::read_csv(path);
    if (rep.rows.empty()) throw ContractViolation("rank-report: empty CSV for " + name);
    std::set<std::string> here;
    double acc = 0;
    for (const auto& r : rep.rows) {
      here.insert(r.sample_id);
      acc += r.psnr;
    }
    if (ids && *ids != here)
      throw ContractViolation("rank-report: sample sets differ between methods (" + name + ")");
    if (!ids) ids = here;
    out[name] = acc / static_cast<double>(rep.rows.size());
  }
  return out;
}

// Rank 1 is the highest PSNR; ties break lexicographically by method name.
inline void assign_ranks(std::vector<MethodRank>& methods, bool val_split) {
  std::vector<MethodRank*> order;
  for (auto& m : methods) order.push_back(&m);
  std::sort(order.begin(), order.end(), [val_split](const MethodRank* a, const MethodRank* b) {
    double pa = val_split ? a->val_psnr : a->test_psnr;
    double pb = val_split ? b->val_psnr : b->test_psnr;
    if (pa != pb) return pa > pb;
    return a->name < b->name;
  });
  for (std::size_t i = 0; i < order.size(); ++i)
    (val_split ? order[i]->val_rank : order[i]->test_rank) = static_cast<int>(i) + 1;
}

inline std::vector<MethodRank> rank_methods(
    const std::vector<std::pair<std::string, std::filesystem::path>>& val_csvs,
    const std::vector<std::pair<std::string, std::filesystem::path>>& test_csvs) {
  if (val_csvs.size() < 2 || test_csvs.size() != val_csvs.size())
    throw ContractViolation("rank-report: need >= 2 methods with one CSV per split each");
  auto val = mean_psnr_by_method(val_csvs);
  auto test = mean_psnr_by_method(test_csvs);
  std::vector<MethodRank> methods;
  for (const auto& [name, p] : val) {
    auto it = test.find(name);
    if (it == test.end())
      throw ContractViolation("rank-report: method '" + name + "' missing a test CSV");
    methods.push_back(MethodRank{name, p, it->second, 0, 0});
  }
  assign_ranks(methods, true);
  assign_ranks(methods, false);
  return methods;
}

inline void write_rank_csv(const std::vector<MethodRank>& methods,
                           const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write rank report: " + path.string());
  f << "method,val_psnr,val_rank,test_psnr,test_rank\n";
  for (const auto& m : methods)
    f << m.name << ',' << std::setprecision(17) << m.val_psnr << ',' << m.val_rank << ','
      << m.test_psnr << ',' << m.test_rank << "\n";
}

}  // namespace pansharp

#pragma once

// Exhaustive reference computations for tests. Deliberately written without
// any of the library's search or counting machinery.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct Point {
  std::string id;
  int label;
  std::vector<double> x;
};

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  return std::min(2.0, std::max(0.0, 1.0 - dot));
}

// Full distance table to every admitted training point, sorted by
// (distance, id), then averaged over the first k.
inline double avg_knn(const std::vector<Point>& train, const std::vector<double>& u, const std::string& self_id,
                      int y, bool same, std::size_t k) {
  std::vector<std::pair<double, std::string>> table;
  for (const auto& p : train) {
    if (p.id == self_id) continue;
    if ((p.label == y) != same) continue;
    table.emplace_back(distance(u, p.x), p.id);
  }
  if (table.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(table.begin(), table.end());
  const std::size_t m = std::min(k, table.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += table[i].first;
  return sum / static_cast<double>(m);
}

inline double score(const std::vector<Point>& train, const std::vector<double>& u, const std::string& self_id,
                    int y, std::size_t k) {
  const double num = avg_knn(train, u, self_id, y, true, k);
  const double den = avg_knn(train, u, self_id, y, false, k);
  if (den == 0.0) return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

inline double p_value(const std::vector<double>& cal_scores, double alpha) {
  std::size_t count = 0;
  for (double s : cal_scores) count += s >= alpha ? 1 : 0;
  return static_cast<double>(count + 1) / static_cast<double>(cal_scores.size() + 1);
}

struct Tally {
  std::size_t covered = 0, set_size = 0, correct_singletons = 0, top1_correct = 0;
};

// Hand tally of the four metrics from raw rows.
inline Tally tally(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& alpha,
                   const std::vector<int>& truth, double eps) {
  Tally t;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::size_t size = 0;
    bool has_truth = false;
    for (std::size_t c = 0; c < p[i].size(); ++c) {
      if (p[i][c] > eps) {
        ++size;
        if (static_cast<int>(c) == truth[i]) has_truth = true;
      }
    }
    t.covered += has_truth;
    t.set_size += size;
    t.correct_singletons += (has_truth && size == 1);
    // argmax p, then min alpha, then min index
    std::size_t best = 0;
    for (std::size_t c = 0; c < p[i].size(); ++c) {
      const bool better = p[i][c] > p[i][best] || (p[i][c] == p[i][best] && alpha[i][c] < alpha[i][best]);
      if (better) best = c;
    }
    t.top1_correct += static_cast<int>(best) == truth[i];
  }
  return t;
}

}  // namespace oracle

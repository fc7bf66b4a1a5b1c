#pragma once

// Shared oracles for tests: adjusted Rand index, lattice-connectivity check.
// These stay independent of the library's clustering path.

#include <map>
#include <queue>
#include <utility>
#include <vector>

#include "dropcluster/lattice.hpp"

namespace testutil {

// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  std::map<std::pair<int, int>, long long> contingency;
  std::map<int, long long> row_sum, col_sum;
  for (std::size_t i = 0; i < n; ++i) {
    ++contingency[{a[i], b[i]}];
    ++row_sum[a[i]];
    ++col_sum[b[i]];
  }
  auto choose2 = [](long long x) { return x * (x - 1) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, count] : contingency) sum_ij += choose2(count);
  for (const auto& [key, count] : row_sum) sum_a += choose2(count);
  for (const auto& [key, count] : col_sum) sum_b += choose2(count);
  const double total = choose2(static_cast<long long>(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (sum_ij - expected) / (max_index - expected);
}

// True when every label class forms a connected subgraph of the lattice.
inline bool clusters_connected(const std::vector<int>& labels,
                               const dropcluster::LatticeGraph& graph) {
  const int m = graph.node_count();
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  std::vector<int> first(k, -1), size(k, 0);
  for (int i = 0; i < m; ++i) {
    ++size[labels[i]];
    if (first[labels[i]] < 0) first[labels[i]] = i;
  }
  for (int c = 0; c < k; ++c) {
    if (size[c] == 0) return false;
    std::vector<char> seen(m, 0);
    std::queue<int> q;
    q.push(first[c]);
    seen[first[c]] = 1;
    int reached = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      ++reached;
      for (const int* nb = graph.neighbors_begin(u); nb != graph.neighbors_end(u); ++nb)
        if (!seen[*nb] && labels[*nb] == c) {
          seen[*nb] = 1;
          q.push(*nb);
        }
    }
    if (reached != size[c]) return false;
  }
  return true;
}

}  // namespace testutil

#include "dropcluster/lattice.hpp"

#include <algorithm>
#include <stdexcept>

namespace dropcluster {

LatticeGraph::LatticeGraph(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("LatticeGraph: dimensions must be >= 1");

  edges_.reserve(static_cast<std::size_t>(2 * width * height - width - height));
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) {
      const int node = node_of(x, y);
      if (y + 1 < height) edges_.emplace_back(node, node_of(x, y + 1));
      if (x + 1 < width) edges_.emplace_back(node, node_of(x + 1, y));
    }
  }
  std::sort(edges_.begin(), edges_.end());

  const int n = node_count();
  std::vector<int> deg(n, 0);
  for (const auto& [u, v] : edges_) {
    ++deg[u];
    ++deg[v];
  }
  offsets_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
  adjacency_.resize(offsets_[n]);
  std::vector<int> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [u, v] : edges_) {
    adjacency_[cursor[u]++] = v;
    adjacency_[cursor[v]++] = u;
  }
  for (int i = 0; i < n; ++i)
    std::sort(adjacency_.begin() + offsets_[i], adjacency_.begin() + offsets_[i + 1]);
}

LatticeGraph build_lattice_graph(int width, int height) { return LatticeGraph(width, height); }

}  // namespace dropcluster

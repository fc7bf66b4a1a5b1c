#pragma once

#include <utility>
#include <vector>

namespace dropcluster {

// 4-connectivity pixel lattice over a width x height feature map. Node ids
// follow the row-major pixel order used everywhere: node = x * height + y.
// Stored as an edge list plus a CSR neighbor index for O(1) neighbor
// iteration.
class LatticeGraph {
 public:
  LatticeGraph(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  int node_count() const { return width_ * height_; }
  int node_of(int x, int y) const { return x * height_ + y; }

  // Undirected edges, each stored once with first < second.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  // Neighbors of a node, ascending.
  const int* neighbors_begin(int node) const { return adjacency_.data() + offsets_[node]; }
  const int* neighbors_end(int node) const { return adjacency_.data() + offsets_[node + 1]; }
  int degree(int node) const { return offsets_[node + 1] - offsets_[node]; }

 private:
  int width_;
  int height_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> offsets_;
  std::vector<int> adjacency_;
};

LatticeGraph build_lattice_graph(int width, int height);

}  // namespace dropcluster

#pragma once

#include <utility>
#include <vector>

#include "dropcluster/lattice.hpp"
#include "dropcluster/tensor.hpp"

namespace dropcluster {

// Partition of the m lattice pixels into k clusters. Labels are dense ids in
// [0, k), assigned by first occurrence in pixel order, and every cluster is a
// connected subgraph of the lattice it was fitted on.
struct ClusterAssignment {
  std::vector<int> labels;
  int k = 0;
  int m = 0;

  static ClusterAssignment from_labels(std::vector<int> raw_labels);
  std::vector<int> cluster_sizes() const;
};

// Sparse view of the k x m grouping matrix: one nonzero per column, the
// nonzero of column j sits at row labels[j] with value 1/sqrt(|cluster|),
// which makes the rows orthonormal.
struct GroupingMatrix {
  int k = 0;
  int m = 0;
  std::vector<int> labels;
  std::vector<double> alphas;  // per cluster

  // reduced = Phi * x (length k)
  std::vector<double> reduce(const std::vector<double>& x) const;
  // reconstructed = Phi^T * Phi * x (length m)
  std::vector<double> reconstruct(const std::vector<double>& x) const;
  Matrix to_dense() const;
};

struct RenaOutcome {
  bool converged = false;
  ClusterAssignment assignment;  // valid only when converged
  int clusters_remaining = 0;
  int rounds = 0;
};

struct MergeRoundResult {
  std::vector<int> labels;  // dense ids, same convention as ClusterAssignment
  int cluster_count = 0;
  int merges = 0;
  bool stalled = false;  // no inter-cluster edge was available
};

// Squared Euclidean distance across the n samples between the two pixel
// columns of every lattice edge, in graph.edges() order. Lower means the two
// pixels behave more alike over the mini-batch.
std::vector<double> edge_similarity(const Matrix& data, const LatticeGraph& graph);

// One agglomeration round over the current partition: merges every adjacent
// cluster pair whose distance (squared Euclidean between per-sample cluster
// means) equals the round's minimum. Such pairs are mutual nearest
// neighbors, ties all merge together, and a settled region is never pulled
// across a strictly worse edge while cheaper merges remain elsewhere. When
// max_merges >= 0 at most that many merges are applied, in cluster-id order.
MergeRoundResult one_nn_merge_round(const Matrix& data, const std::vector<int>& labels,
                                    const LatticeGraph& graph, int max_merges = -1);

// Recursive nearest agglomeration: from singletons, repeat merge rounds until
// exactly k_target clusters remain. A round that would overshoot merges only
// the cheapest pairs needed to land on k_target. NotConverged is reported
// when max_iter rounds elapse, or the graph runs out of inter-cluster edges,
// while the count is still above k_target.
RenaOutcome rena_fit(const Matrix& data, const LatticeGraph& graph, int k_target, int max_iter);

GroupingMatrix grouping_matrix(const ClusterAssignment& assignment);

// (Phi * x, Phi^T * Phi * x): the cluster-space reduction of x and its
// per-cluster-mean reconstruction.
std::pair<std::vector<double>, std::vector<double>> reduce_and_reconstruct(
    const std::vector<double>& x, const GroupingMatrix& phi);

}  // namespace dropcluster

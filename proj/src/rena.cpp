#include "dropcluster/rena.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dropcluster {

namespace {

// Relabel arbitrary cluster ids to dense ids by first occurrence in pixel
// order, so equal partitions always serialize identically.
std::vector<int> densify(const std::vector<int>& raw, int* k_out) {
  std::vector<int> remap(raw.size(), -1);
  std::vector<int> labels(raw.size());
  int next = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (remap[raw[i]] < 0) remap[raw[i]] = next++;
    labels[i] = remap[raw[i]];
  }
  if (k_out) *k_out = next;
  return labels;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);  // keep the lower id as root
    parent[b] = a;
    return true;
  }
};

// Per-cluster sum of member pixel values for each sample; the representative
// value is sum/size.
struct ClusterStats {
  int n_samples;
  std::vector<double> sums;  // [cluster * n_samples + sample]
  std::vector<int> sizes;

  ClusterStats(const Matrix& data, const std::vector<int>& labels, int k) : n_samples(data.rows) {
    sums.assign(static_cast<std::size_t>(k) * n_samples, 0.0);
    sizes.assign(k, 0);
    for (int j = 0; j < data.cols; ++j) {
      const int c = labels[j];
      ++sizes[c];
      for (int s = 0; s < n_samples; ++s)
        sums[static_cast<std::size_t>(c) * n_samples + s] += data.at(s, j);
    }
  }

  double distance(int a, int b) const {
    const double* sa = sums.data() + static_cast<std::size_t>(a) * n_samples;
    const double* sb = sums.data() + static_cast<std::size_t>(b) * n_samples;
    const double inv_a = 1.0 / sizes[a];
    const double inv_b = 1.0 / sizes[b];
    double d = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      const double diff = sa[s] * inv_a - sb[s] * inv_b;
      d += diff * diff;
    }
    return d;
  }
};

struct RoundOutcome {
  int merges = 0;
  bool stalled = false;
};

// One merge round over the dense-labelled partition. The round merges the
// cluster pairs whose representative distance equals the round's minimum;
// those edges are mutual nearest neighbors, so a settled region is never
// pulled across a strictly worse boundary while cheaper merges remain
// elsewhere (with identical-valued blocks this is what makes planted
// partitions recoverable exactly). Ties all merge in the same round, which
// collapses constant regions in few rounds. Mutates labels in place (they
// stay dense); max_merges < 0 means unlimited.
RoundOutcome merge_round(const Matrix& data, std::vector<int>& labels, int k,
                         const LatticeGraph& graph, int max_merges) {
  const ClusterStats stats(data, labels, k);

  // unique inter-cluster edges, (low id, high id)
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(graph.edges().size());
  for (const auto& [u, v] : graph.edges()) {
    int a = labels[u], b = labels[v];
    if (a == b) continue;
    if (b < a) std::swap(a, b);
    pairs.emplace_back(a, b);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  if (pairs.empty()) return {0, true};

  std::vector<double> pair_dist(pairs.size());
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    pair_dist[e] = stats.distance(pairs[e].first, pairs[e].second);
    min_dist = std::min(min_dist, pair_dist[e]);
  }

  // pairs at the round minimum, in id order for determinism
  UnionFind uf(k);
  int merges = 0;
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    if (pair_dist[e] != min_dist) continue;
    if (max_merges >= 0 && merges >= max_merges) break;
    if (uf.unite(pairs[e].first, pairs[e].second)) ++merges;
  }
  if (merges == 0) return {0, false};

  for (auto& l : labels) l = uf.find(l);
  int unused = 0;
  labels = densify(labels, &unused);
  return {merges, false};
}

}  // namespace

ClusterAssignment ClusterAssignment::from_labels(std::vector<int> raw_labels) {
  ClusterAssignment a;
  a.m = static_cast<int>(raw_labels.size());
  a.labels = densify(raw_labels, &a.k);
  return a;
}

std::vector<int> ClusterAssignment::cluster_sizes() const {
  std::vector<int> sizes(k, 0);
  for (int l : labels) ++sizes[l];
  return sizes;
}

std::vector<double> edge_similarity(const Matrix& data, const LatticeGraph& graph) {
  if (data.cols != graph.node_count())
    throw std::invalid_argument("edge_similarity: data columns must equal graph nodes");
  if (data.rows < 1) throw std::invalid_argument("edge_similarity: need at least one sample");
  std::vector<double> out;
  out.reserve(graph.edges().size());
  for (const auto& [u, v] : graph.edges()) {
    double d = 0.0;
    for (int s = 0; s < data.rows; ++s) {
      const double diff = data.at(s, u) - data.at(s, v);
      d += diff * diff;
    }
    out.push_back(d);
  }
  return out;
}

MergeRoundResult one_nn_merge_round(const Matrix& data, const std::vector<int>& labels,
                                    const LatticeGraph& graph, int max_merges) {
  if (static_cast<int>(labels.size()) != graph.node_count() || data.cols != graph.node_count())
    throw std::invalid_argument("one_nn_merge_round: label/graph/data size mismatch");
  MergeRoundResult res;
  int k = 0;
  res.labels = densify(labels, &k);
  const RoundOutcome out = merge_round(data, res.labels, k, graph, max_merges);
  res.merges = out.merges;
  res.stalled = out.stalled;
  res.cluster_count = k - out.merges;
  return res;
}

RenaOutcome rena_fit(const Matrix& data, const LatticeGraph& graph, int k_target, int max_iter) {
  const int m = graph.node_count();
  if (data.cols != m) throw std::invalid_argument("rena_fit: data columns must equal graph nodes");
  if (k_target < 1 || k_target > m)
    throw std::invalid_argument("rena_fit: k_target must be in [1, m]");
  if (max_iter < 1) throw std::invalid_argument("rena_fit: max_iter must be >= 1");

  std::vector<int> labels(m);
  std::iota(labels.begin(), labels.end(), 0);
  int count = m;

  RenaOutcome outcome;
  while (count > k_target && outcome.rounds < max_iter) {
    const int needed = count - k_target;
    const RoundOutcome round = merge_round(data, labels, count, graph, needed);
    ++outcome.rounds;
    if (round.stalled) break;
    count -= round.merges;
  }

  outcome.clusters_remaining = count;
  if (count == k_target) {
    outcome.converged = true;
    outcome.assignment = ClusterAssignment::from_labels(labels);
  }
  return outcome;
}

GroupingMatrix grouping_matrix(const ClusterAssignment& assignment) {
  GroupingMatrix phi;
  phi.k = assignment.k;
  phi.m = assignment.m;
  phi.labels = assignment.labels;
  phi.alphas.resize(assignment.k);
  const std::vector<int> sizes = assignment.cluster_sizes();
  for (int c = 0; c < assignment.k; ++c) phi.alphas[c] = 1.0 / std::sqrt(double(sizes[c]));
  return phi;
}

std::vector<double> GroupingMatrix::reduce(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != m)
    throw std::invalid_argument("GroupingMatrix::reduce: length mismatch");
  std::vector<double> out(k, 0.0);
  for (int j = 0; j < m; ++j) out[labels[j]] += alphas[labels[j]] * x[j];
  return out;
}

std::vector<double> GroupingMatrix::reconstruct(const std::vector<double>& x) const {
  const std::vector<double> reduced = reduce(x);
  std::vector<double> out(m);
  for (int j = 0; j < m; ++j) out[j] = alphas[labels[j]] * reduced[labels[j]];
  return out;
}

Matrix GroupingMatrix::to_dense() const {
  Matrix out(k, m);
  for (int j = 0; j < m; ++j) out.at(labels[j], j) = alphas[labels[j]];
  return out;
}

std::pair<std::vector<double>, std::vector<double>> reduce_and_reconstruct(
    const std::vector<double>& x, const GroupingMatrix& phi) {
  return {phi.reduce(x), phi.reconstruct(x)};
}

}  // namespace dropcluster

#pragma once

// Complete-linkage agglomeration of the PB vectors of one concept and the
// selection of clusters worth replacing by their medoid.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "errors.hpp"
#include "memory.hpp"

namespace iloci {

struct ClusterParams {
  double k_cutoff = 0.5;    // D_cutoff = mean - k * std of pairwise distances
  int num_threshold = 3;    // a cluster must hold strictly more samples than this
};

struct ClusterItem {
  PBVector pb;
  int num_samples = 1;
  EntryKind kind = EntryKind::exemplar;
};

/// Internal node `n + i` of the tree joins `left` and `right` (node ids; leaves are 0..n-1).
struct Merge {
  int left = 0;
  int right = 0;
  double height = 0.0;
  friend bool operator==(const Merge&, const Merge&) = default;
};

using DistanceMatrix = Eigen::MatrixXd;

inline DistanceMatrix pairwise_distances(std::span<const PBVector> pts) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  DistanceMatrix d = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (pts[i] - pts[j]).norm();
  return d;
}

struct DistanceStats {
  double mean = 0.0;
  double stddev = 0.0;  // population form
  bool all_zero = true;
};

inline DistanceStats distance_stats(const DistanceMatrix& d) {
  DistanceStats s;
  const Eigen::Index n = d.rows();
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sum += d(i, j), sq += d(i, j) * d(i, j), ++count;
      if (d(i, j) != 0.0) s.all_zero = false;
    }
  if (count == 0) return s;
  s.mean = sum / static_cast<double>(count);
  s.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(count) - s.mean * s.mean));
  return s;
}

inline double distance_cutoff(double mean, double stddev, double k) { return mean - k * stddev; }

/// Lance-Williams complete linkage on a live distance matrix. The closest
/// pair of active clusters merges first; ties go to the lexicographically
/// smallest (left, right) node-id pair.
inline std::vector<Merge> complete_linkage(const DistanceMatrix& d) {
  const int n = static_cast<int>(d.rows());
  std::vector<Merge> tree;
  if (n < 2) return tree;
  DistanceMatrix live = d;
  std::vector<int> node(n);  // matrix slot -> current node id
  std::iota(node.begin(), node.end(), 0);
  std::vector<bool> active(n, true);
  for (int step = 0; step < n - 1; ++step) {
    int bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> best_ids{n * 2, n * 2};
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const std::pair<int, int> ids = std::minmax(node[i], node[j]);
        if (live(i, j) < best || (live(i, j) == best && ids < best_ids)) {
          best = live(i, j), bi = i, bj = j, best_ids = ids;
        }
      }
    }
    tree.push_back({best_ids.first, best_ids.second, best});
    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      live(bi, k) = live(k, bi) = std::max(live(bi, k), live(bj, k));
    }
    active[bj] = false;
    node[bi] = n + step;
  }
  return tree;
}

/// Leaves below every node, leaves first, then internal nodes in merge order.
inline std::vector<std::vector<std::size_t>> node_members(std::size_t n, std::span<const Merge> tree) {
  std::vector<std::vector<std::size_t>> members(n + tree.size());
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  for (std::size_t k = 0; k < tree.size(); ++k) {
    auto& m = members[n + k];
    m = members[static_cast<std::size_t>(tree[k].left)];
    const auto& r = members[static_cast<std::size_t>(tree[k].right)];
    m.insert(m.end(), r.begin(), r.end());
    std::sort(m.begin(), m.end());
  }
  return members;
}

inline double mean_pairwise(const DistanceMatrix& d, std::span<const std::size_t> members) {
  if (members.size() < 2) return 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < members.size(); ++a)
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      sum += d(static_cast<Eigen::Index>(members[a]), static_cast<Eigen::Index>(members[b]));
      ++count;
    }
  return sum / static_cast<double>(count);
}

struct ValidCluster {
  std::vector<std::size_t> members;  // positions in the item list, ascending
  std::size_t medoid = 0;
  friend bool operator==(const ValidCluster&, const ValidCluster&) = default;
};

/// Member with the smallest summed distance to the others; lowest position on ties.
inline std::size_t medoid_of(const DistanceMatrix& d, std::span<const std::size_t> members) {
  std::size_t best = members.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t a : members) {
    double s = 0.0;
    for (std::size_t b : members) s += d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    if (s < best_sum) best_sum = s, best = a;
  }
  return best;
}

inline bool cluster_is_valid(std::span<const ClusterItem> items, const DistanceMatrix& d,
                             std::span<const std::size_t> members, double cutoff, const ClusterParams& p) {
  int samples = 0;
  bool has_exemplar = false;
  for (std::size_t i : members) {
    samples += items[i].num_samples;
    has_exemplar = has_exemplar || items[i].kind == EntryKind::exemplar;
  }
  return samples > p.num_threshold && has_exemplar && mean_pairwise(d, members) < cutoff;
}

/// Maximal valid subtrees of the merge tree, ordered by their smallest member.
inline std::vector<ValidCluster> select_valid_clusters(std::span<const ClusterItem> items, const DistanceMatrix& d,
                                                       std::span<const Merge> tree, const ClusterParams& p) {
  const std::size_t n = items.size();
  std::vector<ValidCluster> out;
  if (n == 0) return out;
  const DistanceStats stats = distance_stats(d);
  const auto members = node_members(n, tree);

  if (stats.all_zero && n >= 2) {
    // No spread to judge by: every member is interchangeable.
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    out.push_back({all, all.front()});
    return out;
  }

  const double cutoff = distance_cutoff(stats.mean, stats.stddev, p.k_cutoff);
  std::vector<bool> valid(members.size());
  for (std::size_t v = 0; v < members.size(); ++v) valid[v] = cluster_is_valid(items, d, members[v], cutoff, p);

  std::vector<int> parent(members.size(), -1);
  for (std::size_t k = 0; k < tree.size(); ++k)
    parent[static_cast<std::size_t>(tree[k].left)] = parent[static_cast<std::size_t>(tree[k].right)] =
        static_cast<int>(n + k);

  for (std::size_t v = 0; v < members.size(); ++v) {
    if (!valid[v]) continue;
    bool maximal = true;
    for (int a = parent[v]; a >= 0; a = parent[static_cast<std::size_t>(a)])
      if (valid[static_cast<std::size_t>(a)]) maximal = false;
    if (maximal) out.push_back({members[v], medoid_of(d, members[v])});
  }
  std::sort(out.begin(), out.end(),
            [](const ValidCluster& a, const ValidCluster& b) { return a.members.front() < b.members.front(); });
  return out;
}

inline std::vector<ValidCluster> find_valid_clusters(std::span<const ClusterItem> items, const ClusterParams& p) {
  std::vector<PBVector> pts;
  for (const auto& it : items) pts.push_back(it.pb);
  const DistanceMatrix d = pairwise_distances(pts);
  const auto tree = complete_linkage(d);
  return select_valid_clusters(items, d, tree, p);
}

}  // namespace iloci

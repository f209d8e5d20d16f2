#pragma once

// Brute-force reference for complete linkage and valid-cluster selection:
// every linkage distance is recomputed from the raw points, nothing is cached.

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "iloci/iloci.hpp"

namespace iloci::testing {

struct OracleResult {
  std::vector<Merge> tree;
  std::vector<std::pair<std::vector<std::size_t>, std::size_t>> clusters;
};

inline double oracle_dist(const PBVector& a, const PBVector& b) { return (a - b).norm(); }

inline OracleResult cluster_oracle(const std::vector<ClusterItem>& items, const ClusterParams& p) {
  const std::size_t n = items.size();
  OracleResult r;
  struct Node {
    int id;
    std::vector<std::size_t> members;
  };
  std::vector<Node> live;
  std::vector<std::vector<std::size_t>> all_nodes;
  for (std::size_t i = 0; i < n; ++i) live.push_back({static_cast<int>(i), {i}}), all_nodes.push_back({i});
  while (live.size() > 1) {
    double best = 1e300;
    std::pair<int, int> ids{1 << 30, 1 << 30};
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < live.size(); ++a)
      for (std::size_t b = a + 1; b < live.size(); ++b) {
        double link = 0;
        for (auto i : live[a].members)
          for (auto j : live[b].members) link = std::max(link, oracle_dist(items[i].pb, items[j].pb));
        std::pair<int, int> cand{std::min(live[a].id, live[b].id), std::max(live[a].id, live[b].id)};
        if (link < best || (link == best && cand < ids)) best = link, ids = cand, ba = a, bb = b;
      }
    Node merged{static_cast<int>(n + r.tree.size()), live[ba].members};
    merged.members.insert(merged.members.end(), live[bb].members.begin(), live[bb].members.end());
    std::sort(merged.members.begin(), merged.members.end());
    r.tree.push_back({ids.first, ids.second, best});
    all_nodes.push_back(merged.members);
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(bb));
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(ba));
    live.push_back(merged);
  }

  // Two-pass mean and standard deviation over all pairs.
  std::vector<double> ds;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) ds.push_back(oracle_dist(items[i].pb, items[j].pb));
  double mu = 0;
  for (double d : ds) mu += d;
  mu /= static_cast<double>(ds.size());
  double var = 0;
  for (double d : ds) var += (d - mu) * (d - mu);
  const double cutoff = mu - p.k_cutoff * std::sqrt(var / static_cast<double>(ds.size()));

  auto valid = [&](const std::vector<std::size_t>& m) {
    int samples = 0;
    bool ex = false;
    double sum = 0;
    int cnt = 0;
    for (auto i : m) samples += items[i].num_samples, ex = ex || items[i].kind == EntryKind::exemplar;
    for (std::size_t a = 0; a < m.size(); ++a)
      for (std::size_t b = a + 1; b < m.size(); ++b) sum += oracle_dist(items[m[a]].pb, items[m[b]].pb), ++cnt;
    return samples > p.num_threshold && ex && (cnt ? sum / cnt : 0.0) < cutoff;
  };
  std::vector<std::vector<std::size_t>> good;
  for (const auto& m : all_nodes)
    if (valid(m)) good.push_back(m);
  for (const auto& m : good) {
    bool inside_bigger = false;
    for (const auto& o : good)
      if (o.size() > m.size() && std::includes(o.begin(), o.end(), m.begin(), m.end())) inside_bigger = true;
    if (inside_bigger) continue;
    std::size_t med = m.front();
    double best = 1e300;
    for (auto a : m) {
      double s = 0;
      for (auto b : m) s += oracle_dist(items[a].pb, items[b].pb);
      if (s < best) best = s, med = a;
    }
    r.clusters.emplace_back(m, med);
  }
  std::sort(r.clusters.begin(), r.clusters.end());
  return r;
}

inline std::vector<ClusterItem> random_cluster_items(std::mt19937_64& rng, std::size_t n) {
  std::vector<ClusterItem> items(n);
  for (auto& it : items) {
    it.pb = PBVector(4);
    for (int k = 0; k < 4; ++k) it.pb(k) = unit_uniform(rng);
    it.num_samples = 1 + static_cast<int>(rng() % 3);
    it.kind = (rng() % 4 == 0) ? EntryKind::prototype : EntryKind::exemplar;
  }
  return items;
}


}  // namespace iloci::testing

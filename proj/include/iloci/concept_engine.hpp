#pragma once

// Incremental concept learning: guess by PB similarity, act, take the teacher's
// verdict and consolidate; plus feedback-free inference.

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "clustering.hpp"
#include "memory.hpp"
#include "teacher.hpp"

namespace iloci {

struct EngineParams {
  double k_cutoff = 0.5;
  int num_threshold = 3;
  double similarity_threshold = 0.1;

  void validate() const {
    if (!(k_cutoff > 0.0) || num_threshold <= 0 || !(similarity_threshold > 0.0))
      throw ConfigError("engine parameters must be positive");
  }
  ClusterParams cluster() const { return {k_cutoff, num_threshold}; }
};

struct Guess {
  ConceptId concept_id = 0;
  std::size_t matched_entry = 0;  // nearest pb_rec among untried concepts
  double distance = 0.0;
  std::size_t action_entry = 0;   // lowest generation error within the concept
};

inline std::optional<Guess> guess_concept(const Mem& mem, const PBVector& pb_obs, const std::vector<ConceptId>& tried) {
  std::optional<Guess> g;
  for (std::size_t i = 0; i < mem.entries.size(); ++i) {
    const auto& e = mem.entries[i];
    if (std::find(tried.begin(), tried.end(), e.concept_label) != tried.end()) continue;
    const double d = (pb_obs - e.pb_rec).norm();
    if (!g || d < g->distance) g = Guess{e.concept_label, i, d, i};
  }
  if (!g) return g;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mem.entries.size(); ++i) {
    const auto& e = mem.entries[i];
    if (e.concept_label == g->concept_id && e.generation_error < best) best = e.generation_error, g->action_entry = i;
  }
  return g;
}

enum class Outcome { strengthened, new_prototype, new_concept, failed };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::strengthened: return "strengthened";
    case Outcome::new_prototype: return "new_prototype";
    case Outcome::new_concept: return "new_concept";
    case Outcome::failed: return "failed";
  }
  return "?";
}

struct Attempt {
  ConceptId concept_id = 0;
  std::size_t entry = 0;       // entry whose trajectory was executed
  double distance = 0.0;       // to the nearest entry of the guessed concept
  double action_length = 0.0;  // path length of the executed trajectory, normalized units
  int reward = 0;
};

struct EpisodeLog {
  std::string demo_id;
  std::string true_concept;
  std::vector<Attempt> attempts;
  Outcome outcome = Outcome::failed;
  ConceptId final_concept = -1;
  bool clustering_triggered = false;
  int clusters_merged = 0;
  int rehearsal_epochs = 0;  // training effort spent in this episode (deterministic stand-in for timing)
  std::string error;

  std::vector<int> rewards() const {
    std::vector<int> r;
    for (const auto& a : attempts) r.push_back(a.reward);
    return r;
  }
};

struct ClusterOutcome {
  Mem mem;
  bool triggered = false;
  int clusters = 0;
  int epochs = 0;
};

/// Clusters the entries of one concept once its sample total exceeds the threshold
/// and replaces every valid cluster by its medoid, followed by one rehearsal.
inline ClusterOutcome maybe_cluster(const Mem& mem, ConceptId concept_id, const EngineParams& params) {
  ClusterOutcome out{mem};
  std::vector<std::size_t> idx;
  int total = 0;
  for (std::size_t i = 0; i < mem.entries.size(); ++i)
    if (mem.entries[i].concept_label == concept_id) idx.push_back(i), total += mem.entries[i].num_samples;
  if (total <= params.num_threshold || idx.size() < 2) return out;
  out.triggered = true;

  std::vector<ClusterItem> items;
  for (std::size_t i : idx) items.push_back({mem.entries[i].pb_rec, mem.entries[i].num_samples, mem.entries[i].kind});
  const auto clusters = find_valid_clusters(items, params.cluster());
  if (clusters.empty()) return out;

  // Clusters can interleave in index space, so every merge translates the
  // original indices past the entries dropped so far.
  std::vector<std::size_t> dropped;
  auto now = [&](std::size_t i) {
    return i - static_cast<std::size_t>(std::count_if(dropped.begin(), dropped.end(), [&](std::size_t d) { return d < i; }));
  };
  Mem merged = mem;
  bool shrunk = false;
  for (const auto& c : clusters) {
    std::vector<std::size_t> members;
    for (std::size_t m : c.members) members.push_back(now(idx[m]));
    merged = merge_cluster(merged, members, now(idx[c.medoid]));
    for (std::size_t m : c.members)
      if (m != c.medoid) dropped.push_back(idx[m]);
    shrunk = shrunk || c.members.size() > 1;
  }
  out.clusters = static_cast<int>(clusters.size());
  if (shrunk) {
    RehearsalStats st;
    merged = rehearse(merged, {}, &st);
    out.epochs = st.epochs;
  }
  out.mem = std::move(merged);
  return out;
}

namespace detail {
inline double path_length(const Sequence& s) {
  double len = 0.0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) len += s.row(r).head<2>().norm();
  return len;
}
}  // namespace detail

struct EpisodeResult {
  Mem mem;
  EpisodeLog log;
};

/// One teaching interaction. A failed rehearsal leaves the memory untouched and
/// marks the episode failed instead of throwing.
inline EpisodeResult process_episode(const Mem& mem, const ProcessedDemo& demo, TeacherOracle& teacher,
                                     const EngineParams& params) {
  EpisodeResult res{mem, {}};
  EpisodeLog& log = res.log;
  log.demo_id = demo.id();
  log.true_concept = teacher.true_concept(log.demo_id);
  try {
    const Sequence seq = mem.normalization.encode(demo);
    std::vector<ConceptId> tried;
    if (mem.weights) {
      const PBVector pb_obs = recognize(*mem.weights, seq, mem.config).pb;
      while (auto g = guess_concept(mem, pb_obs, tried)) {
        const auto& act = mem.entries[g->action_entry];
        const Sequence executed = regenerate(*mem.weights, act.pb, act.initial_input, act.num_steps);
        const int reward = teacher.feedback(log.demo_id, g->concept_id);
        log.attempts.push_back({g->concept_id, g->action_entry, g->distance, detail::path_length(executed), reward});
        if (reward < 0) {
          tried.push_back(g->concept_id);
          continue;
        }
        log.final_concept = g->concept_id;
        if (g->distance <= params.similarity_threshold) {
          res.mem = strengthen(mem, g->matched_entry);
          log.outcome = Outcome::strengthened;
        } else {
          const NewDemo nd{&demo, g->concept_id, EntryKind::exemplar};
          RehearsalStats st;
          Mem learned = rehearse(mem, {&nd, 1}, &st);
          log.rehearsal_epochs += st.epochs;
          auto cl = maybe_cluster(learned, g->concept_id, params);
          log.clustering_triggered = cl.triggered;
          log.clusters_merged = cl.clusters;
          log.rehearsal_epochs += cl.epochs;
          res.mem = std::move(cl.mem);
          log.outcome = Outcome::new_prototype;
        }
        return res;
      }
    }
    Mem grown = mem;
    const ConceptId id = grown.next_concept_id++;
    teacher.ground(id, log.demo_id);
    grown.concept_names[id] = teacher.name_of(id);
    const NewDemo nd{&demo, id, EntryKind::exemplar};
    RehearsalStats st;
    res.mem = rehearse(grown, {&nd, 1}, &st);
    log.rehearsal_epochs += st.epochs;
    log.final_concept = id;
    log.outcome = Outcome::new_concept;
  } catch (const RehearsalFailed& e) {
    res.mem = mem;
    log.outcome = Outcome::failed;
    log.error = e.what();
  }
  return res;
}

inline constexpr double kConfidenceCap = 1e6;

struct Inference {
  ConceptId concept_id = 0;
  double confidence = 0.0;
  PBVector pb_obs;
  std::size_t nearest_entry = 0;
};

/// Confidence = d2/d1 - 1 (d1: nearest entry, d2: nearest entry of another concept), capped.
inline Inference infer(const Mem& mem, const Sequence& seq) {
  if (mem.empty() || !mem.weights) throw ContractError("infer: memory is empty");
  Inference r;
  r.pb_obs = recognize(*mem.weights, seq, mem.config).pb;
  double d1 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mem.entries.size(); ++i) {
    const double d = (r.pb_obs - mem.entries[i].pb_rec).norm();
    if (d < d1) d1 = d, r.nearest_entry = i;
  }
  r.concept_id = mem.entries[r.nearest_entry].concept_label;
  double d2 = std::numeric_limits<double>::infinity();
  for (const auto& e : mem.entries)
    if (e.concept_label != r.concept_id) d2 = std::min(d2, (r.pb_obs - e.pb_rec).norm());
  if (!std::isfinite(d2) || d1 <= 0.0)
    r.confidence = kConfidenceCap;
  else
    r.confidence = std::min(kConfidenceCap, d2 / d1 - 1.0);
  return r;
}

inline Inference infer(const Mem& mem, const ProcessedDemo& demo) { return infer(mem, mem.normalization.encode(demo)); }

}  // namespace iloci

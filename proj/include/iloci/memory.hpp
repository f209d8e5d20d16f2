#pragma once

// Long-term memory: the shared network plus every consolidated exemplar and
// prototype, and the rehearsal procedure that keeps them all learned.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "rnnpb.hpp"

namespace iloci {

using ConceptId = int;

enum class EntryKind : std::uint8_t { exemplar = 0, prototype = 1 };

inline const char* to_string(EntryKind k) { return k == EntryKind::exemplar ? "exemplar" : "prototype"; }

struct MemEntry {
  PBVector pb;      // PB assigned by training
  PBVector pb_rec;  // PB found when recognizing the learned pattern
  int num_samples = 1;
  int num_steps = 0;
  InitialInfo initial_info;  // absolute start configuration (denormalized)
  Vector initial_input;      // first network input row, seeds regeneration
  ConceptId concept_label = 0;
  double generation_error = 0.0;
  EntryKind kind = EntryKind::exemplar;

  friend bool operator==(const MemEntry& a, const MemEntry& b) {
    return a.pb == b.pb && a.pb_rec == b.pb_rec && a.num_samples == b.num_samples && a.num_steps == b.num_steps &&
           a.initial_info.position == b.initial_info.position && a.initial_info.joints == b.initial_info.joints &&
           a.initial_input == b.initial_input && a.concept_label == b.concept_label &&
           a.generation_error == b.generation_error && a.kind == b.kind;
  }
};

struct Mem {
  NetConfig config;
  std::optional<NetWeights> weights;  // empty until the first rehearsal
  std::vector<MemEntry> entries;
  Normalization normalization;
  std::size_t n_prototypes = 0;
  ConceptId next_concept_id = 0;
  // Display names the teacher attached to concepts; never read by the learner.
  std::map<ConceptId, std::string> concept_names;

  bool empty() const { return entries.empty(); }

  std::vector<ConceptId> concepts() const {
    std::vector<ConceptId> out;
    for (const auto& e : entries)
      if (std::find(out.begin(), out.end(), e.concept_label) == out.end()) out.push_back(e.concept_label);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::string concept_name(ConceptId c) const {
    auto it = concept_names.find(c);
    return it != concept_names.end() ? it->second : "concept_" + std::to_string(c);
  }

  void check_invariants() const {
    if (n_prototypes != entries.size()) throw ContractError("n_prototypes != number of entries");
    for (const auto& e : entries) {
      if (e.num_samples < 1) throw ContractError("entry with num_samples < 1");
      if (!std::isfinite(e.generation_error)) throw ContractError("non-finite generation error");
      if (e.concept_label >= next_concept_id) throw ContractError("entry references an unallocated concept");
    }
  }

  friend bool operator==(const Mem&, const Mem&) = default;
};

inline Mem make_memory(const NetConfig& cfg, const Normalization& norm) {
  cfg.validate();
  Mem m;
  m.config = cfg;
  m.normalization = norm;
  return m;
}

/// One pattern queued for rehearsal training.
struct TemporalPattern {
  Sequence channels;
  Vector warm_potential;  // PB potential to start training from
  int num_samples = 1;
  InitialInfo initial_info;
  ConceptId concept_label = 0;
  EntryKind kind = EntryKind::exemplar;
};

/// Short-lived store of regenerated and new patterns; emptied after every rehearsal.
class TemporalMemory {
 public:
  void add(TemporalPattern p) { patterns_.push_back(std::move(p)); }
  const std::vector<TemporalPattern>& patterns() const { return patterns_; }
  std::size_t size() const { return patterns_.size(); }
  void release() { patterns_.clear(), patterns_.shrink_to_fit(); }

 private:
  std::vector<TemporalPattern> patterns_;
};

struct NewDemo {
  const ProcessedDemo* demo;
  ConceptId concept_label;
  EntryKind kind = EntryKind::exemplar;
};

struct RehearsalStats {
  int epochs = 0;
  double final_mse = 0.0;
};

struct RehearsalFailed : Error {
  explicit RehearsalFailed(const std::string& what) : Error(ErrorKind::numerical, "rehearsal failed: " + what) {}
};

/// Regenerates every entry, adds the new demonstrations, retrains the network
/// on all of them (warm start from the current weights) and rebuilds the entries.
/// The input memory is never modified; on failure RehearsalFailed is thrown.
inline Mem rehearse(const Mem& mem, std::span<const NewDemo> new_demos, RehearsalStats* stats = nullptr) {
  const NetConfig& cfg = mem.config;
  const int pbd = cfg.pb_dim;
  TemporalMemory temporal;
  for (const auto& e : mem.entries) {
    temporal.add({regenerate(*mem.weights, e.pb, e.initial_input, e.num_steps), logit(e.pb), e.num_samples,
                  e.initial_info, e.concept_label, e.kind});
  }
  for (const auto& nd : new_demos) {
    if (nd.demo->num_steps() < 1) throw ContractError("rehearse: demonstration without steps");
    temporal.add({mem.normalization.encode(*nd.demo), Vector::Zero(pbd), 1, nd.demo->initial_info, nd.concept_label,
                  nd.kind});
  }
  if (temporal.size() == 0) throw ContractError("rehearse: nothing to learn");

  std::vector<Sequence> batch;
  std::vector<Vector> potentials;
  for (const auto& p : temporal.patterns()) {
    batch.push_back(p.channels);
    potentials.push_back(p.warm_potential);
  }

  TrainResult trained;
  try {
    trained = train(mem.weights ? *mem.weights : init_weights(cfg), batch, std::move(potentials), cfg);
  } catch (const DivergenceError& e) {
    throw RehearsalFailed(e.what());
  }

  Mem out = mem;
  out.weights = trained.weights;
  out.entries.clear();
  for (std::size_t i = 0; i < temporal.size(); ++i) {
    const auto& p = temporal.patterns()[i];
    MemEntry e;
    e.pb = trained.pbs[i];
    try {
      e.pb_rec = recognize(trained.weights, p.channels, cfg).pb;
    } catch (const DivergenceError& err) {
      throw RehearsalFailed(err.what());
    }
    e.num_samples = p.num_samples;
    e.num_steps = static_cast<int>(p.channels.rows());
    e.initial_info = p.initial_info;
    e.initial_input = p.channels.row(0).transpose();
    e.concept_label = p.concept_label;
    e.generation_error = generation_error(trained.weights, e.pb, p.channels);
    e.kind = p.kind;
    if (!std::isfinite(e.generation_error)) throw RehearsalFailed("non-finite generation error");
    out.entries.push_back(std::move(e));
  }
  out.n_prototypes = out.entries.size();
  temporal.release();
  if (stats) *stats = {trained.epochs, trained.final_mse};
  return out;
}

inline Mem strengthen(const Mem& mem, std::size_t entry_index) {
  if (entry_index >= mem.entries.size()) throw ContractError("strengthen: entry index out of range");
  Mem out = mem;
  ++out.entries[entry_index].num_samples;
  return out;
}

/// Bookkeeping half of medoid substitution: drops the non-medoid members,
/// promotes the medoid to a prototype and hands it their sample counts.
inline Mem merge_cluster(const Mem& mem, std::span<const std::size_t> members, std::size_t medoid) {
  if (std::find(members.begin(), members.end(), medoid) == members.end())
    throw ContractError("medoid is not a cluster member");
  for (std::size_t i : members) {
    if (i >= mem.entries.size()) throw ContractError("cluster member index out of range");
    if (mem.entries[i].concept_label != mem.entries[medoid].concept_label)
      throw ContractError("cluster mixes concept labels");
  }
  Mem out = mem;
  int total = 0;
  for (std::size_t i : members) total += mem.entries[i].num_samples;
  out.entries[medoid].num_samples = total;
  out.entries[medoid].kind = EntryKind::prototype;
  std::vector<MemEntry> kept;
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    const bool drop = i != medoid && std::find(members.begin(), members.end(), i) != members.end();
    if (!drop) kept.push_back(std::move(out.entries[i]));
  }
  out.entries = std::move(kept);
  out.n_prototypes = out.entries.size();
  return out;
}

/// Medoid substitution followed by rehearsal of the surviving entries.
/// A singleton cluster only promotes its member.
inline Mem substitute_medoid(const Mem& mem, std::span<const std::size_t> members, std::size_t medoid,
                             RehearsalStats* stats = nullptr) {
  Mem merged = merge_cluster(mem, members, medoid);
  if (members.size() <= 1) return merged;
  return rehearse(merged, {}, stats);
}

// ---------------------------------------------------------------------------
// Snapshots

inline constexpr std::string_view kMemMagic = "ILOCIMEM";
inline constexpr std::uint32_t kMemVersion = 2;

namespace detail {
inline void put_vector(io::Writer& w, const Vector& v) { w.put_doubles(v.data(), static_cast<std::size_t>(v.size())); }
inline Vector get_vector(io::Reader& r) {
  auto d = r.get_doubles();
  return Eigen::Map<Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
}
}  // namespace detail

inline std::string serialize(const Mem& m) {
  io::Writer w;
  put_config(w, m.config);
  w.put<std::uint8_t>(m.weights ? 1 : 0);
  if (m.weights) put_weights(w, *m.weights);
  for (std::size_t c = 0; c < kChannels; ++c) w.put<double>(m.normalization.lo[c]), w.put<double>(m.normalization.hi[c]);
  w.put<std::uint64_t>(m.n_prototypes);
  w.put<std::int32_t>(m.next_concept_id);
  w.put<std::uint64_t>(m.concept_names.size());
  for (const auto& [id, name] : m.concept_names) w.put<std::int32_t>(id), w.put_string(name);
  w.put<std::uint64_t>(m.entries.size());
  for (const auto& e : m.entries) {
    detail::put_vector(w, e.pb);
    detail::put_vector(w, e.pb_rec);
    w.put<std::int32_t>(e.num_samples);
    w.put<std::int32_t>(e.num_steps);
    w.put<double>(e.initial_info.position.y), w.put<double>(e.initial_info.position.z);
    for (double q : e.initial_info.joints) w.put<double>(q);
    detail::put_vector(w, e.initial_input);
    w.put<std::int32_t>(e.concept_label);
    w.put<double>(e.generation_error);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.kind));
  }
  return io::frame(kMemMagic, kMemVersion, w.bytes());
}

inline Mem deserialize_memory(const std::string& bytes) {
  io::Reader r(io::unframe(kMemMagic, kMemVersion, bytes));
  Mem m;
  m.config = get_config(r);
  if (r.get<std::uint8_t>() != 0) m.weights = get_weights(r, m.config);
  for (std::size_t c = 0; c < kChannels; ++c) m.normalization.lo[c] = r.get<double>(), m.normalization.hi[c] = r.get<double>();
  m.n_prototypes = r.get<std::uint64_t>();
  m.next_concept_id = r.get<std::int32_t>();
  const auto names = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < names; ++i) {
    const auto id = r.get<std::int32_t>();
    m.concept_names[id] = r.get_string();
  }
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    MemEntry e;
    e.pb = detail::get_vector(r);
    e.pb_rec = detail::get_vector(r);
    e.num_samples = r.get<std::int32_t>();
    e.num_steps = r.get<std::int32_t>();
    e.initial_info.position.y = r.get<double>();
    e.initial_info.position.z = r.get<double>();
    for (double& q : e.initial_info.joints) q = r.get<double>();
    e.initial_input = detail::get_vector(r);
    e.concept_label = r.get<std::int32_t>();
    e.generation_error = r.get<double>();
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw CorruptFileError("bad entry kind");
    e.kind = static_cast<EntryKind>(kind);
    m.entries.push_back(std::move(e));
  }
  if (!r.at_end()) throw CorruptFileError("trailing bytes in memory snapshot");
  m.check_invariants();
  return m;
}

inline void snapshot(const Mem& m, const std::string& path) { io::write_file(path, serialize(m)); }
inline Mem restore(const std::string& path) { return deserialize_memory(io::read_file(path)); }

inline std::uint64_t memory_hash(const Mem& m) { return io::fnv1a(serialize(m)); }

/// Entry table for inspection.
inline void write_entries_csv(const Mem& m, std::ostream& out) {
  out << "index";
  for (int k = 0; k < m.config.pb_dim; ++k) out << ",pb_" << k;
  for (int k = 0; k < m.config.pb_dim; ++k) out << ",pb_rec_" << k;
  out << ",num_samples,concept,kind,generation_error\n";
  out.precision(17);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    out << i;
    for (Eigen::Index k = 0; k < e.pb.size(); ++k) out << ',' << e.pb(k);
    for (Eigen::Index k = 0; k < e.pb_rec.size(); ++k) out << ',' << e.pb_rec(k);
    out << ',' << e.num_samples << ',' << m.concept_name(e.concept_label) << ',' << to_string(e.kind) << ','
        << e.generation_error << '\n';
  }
}

}  // namespace iloci

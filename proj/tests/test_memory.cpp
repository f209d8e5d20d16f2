#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace iloci;
using namespace iloci::testing;

namespace {

struct Fixture {
  NetConfig cfg = small_config();
  std::vector<ProcessedDemo> demos;
  Mem mem;

  explicit Fixture(int n) {
    cfg.closed_loop_ratio = 1.0;
    cfg.grad_clip = 1.0;
    cfg.stop_rule = StopRule::max;
    for (int k = 0; k < n; ++k) demos.push_back(demo_from_sequence(toy_sequence(k, 12), "S" + std::to_string(k), 0, "C"));
    mem = make_memory(cfg, identity_normalization());
  }

  // Learns demo k as a fresh concept.
  void learn(int k) {
    mem.concept_names[mem.next_concept_id] = "C" + std::to_string(k);
    const NewDemo nd{&demos[k], mem.next_concept_id++, EntryKind::exemplar};
    mem = rehearse(mem, {&nd, 1});
  }
};

}  // namespace

TEST(Memory, EmptyMemoryIsConsistent) {
  Fixture f(0);
  EXPECT_TRUE(f.mem.empty());
  EXPECT_NO_THROW(f.mem.check_invariants());
  EXPECT_FALSE(f.mem.weights.has_value());
}

TEST(Memory, RehearsalAddsEntriesAndKeepsInvariants) {
  Fixture f(3);
  for (int k = 0; k < 3; ++k) {
    f.learn(k);
    ASSERT_EQ(f.mem.entries.size(), static_cast<std::size_t>(k + 1));
    EXPECT_NO_THROW(f.mem.check_invariants());
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& e = f.mem.entries[i];
    EXPECT_EQ(e.concept_label, static_cast<ConceptId>(i));
    EXPECT_EQ(e.num_steps, 12);
    EXPECT_EQ(e.kind, EntryKind::exemplar);
    EXPECT_EQ(e.pb.size(), f.cfg.pb_dim);
    EXPECT_TRUE((e.pb.array() > 0.0).all() && (e.pb.array() < 1.0).all());
    EXPECT_TRUE(std::isfinite(e.generation_error));
  }
  // The newest entry seeds regeneration from the demo's first encoded row.
  EXPECT_TRUE(f.mem.entries[2].initial_input.isApprox(toy_sequence(2, 12).row(0).transpose()));
}

TEST(Memory, GenerationErrorMatchesRegeneratedPattern) {
  Fixture f(2);
  f.learn(0);
  f.learn(1);
  const auto& e = f.mem.entries[1];
  const Sequence target = toy_sequence(1, 12);
  EXPECT_NEAR(e.generation_error, generation_error(*f.mem.weights, e.pb, target), 1e-12);
  // Entry 0 was relearned from its own regeneration, not from the original data.
  const auto& old = f.mem.entries[0];
  const Sequence regen = regenerate(*f.mem.weights, old.pb, old.initial_input, old.num_steps);
  EXPECT_EQ(regen.rows(), 12);
  EXPECT_LT(generation_error(*f.mem.weights, old.pb, regen), 1e-20);
}

TEST(Memory, PbRecIsRecognitionOfTheRehearsedPattern) {
  Fixture f(1);
  f.learn(0);
  const auto& e = f.mem.entries[0];
  const auto rec = recognize(*f.mem.weights, toy_sequence(0, 12), f.cfg);
  EXPECT_LT((rec.pb - e.pb_rec).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Memory, RehearseDoesNotTouchItsInput) {
  Fixture f(2);
  f.learn(0);
  const Mem before = f.mem;
  const std::uint64_t h = memory_hash(before);
  const NewDemo nd{&f.demos[1], 0, EntryKind::exemplar};
  (void)rehearse(f.mem, {&nd, 1});
  EXPECT_EQ(memory_hash(f.mem), h);
  EXPECT_TRUE(f.mem == before);
}

TEST(Memory, DivergenceIsReportedAsRehearsalFailure) {
  Fixture f(1);
  // Sigmoid outputs keep the loss bounded; only non-finite weights break it.
  f.mem.config.learn_rate_w = std::numeric_limits<double>::infinity();
  f.mem.config.grad_clip = 0.0;
  f.mem.config.target_mse = 1e-12;
  const NewDemo nd{&f.demos[0], 0, EntryKind::exemplar};
  f.mem.next_concept_id = 1;
  EXPECT_THROW((void)rehearse(f.mem, {&nd, 1}), RehearsalFailed);
}

TEST(Memory, RehearsalIsDeterministic) {
  Fixture a(2), b(2);
  a.learn(0), a.learn(1);
  b.learn(0), b.learn(1);
  EXPECT_EQ(serialize(a.mem), serialize(b.mem));
}

TEST(Memory, StrengthenOnlyBumpsTheCount) {
  Fixture f(1);
  f.learn(0);
  const Mem s = strengthen(f.mem, 0);
  EXPECT_EQ(s.entries[0].num_samples, 2);
  Mem back = s;
  back.entries[0].num_samples = 1;
  EXPECT_TRUE(back == f.mem);
  EXPECT_THROW(strengthen(f.mem, 3), ContractError);
}

TEST(Memory, MergeClusterConservesSamples) {
  Fixture f(0);
  f.mem.next_concept_id = 2;
  for (int i = 0; i < 5; ++i) {
    MemEntry e;
    e.pb = PBVector::Constant(2, 0.1 * i + 0.1);
    e.pb_rec = e.pb;
    e.num_samples = i + 1;
    e.concept_label = i < 4 ? 0 : 1;
    f.mem.entries.push_back(e);
  }
  f.mem.n_prototypes = 5;
  const std::vector<std::size_t> members{0, 2, 3};
  const Mem m = merge_cluster(f.mem, members, 2);
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.n_prototypes, 3u);
  EXPECT_EQ(m.entries[1].num_samples, 1 + 3 + 4);
  EXPECT_EQ(m.entries[1].kind, EntryKind::prototype);
  EXPECT_EQ(m.entries[0].num_samples, 2);  // untouched member of the same concept
  int before = 0, after = 0;
  for (auto& e : f.mem.entries) before += e.num_samples;
  for (auto& e : m.entries) after += e.num_samples;
  EXPECT_EQ(before, after);
  EXPECT_NO_THROW(m.check_invariants());

  const std::vector<std::size_t> mixed{3, 4};
  EXPECT_THROW(merge_cluster(f.mem, mixed, 3), ContractError);
  EXPECT_THROW(merge_cluster(f.mem, members, 1), ContractError);
}

TEST(Memory, SubstituteMedoidRelearnsSurvivors) {
  Fixture f(3);
  f.learn(0);
  // Two more samples of concept 0.
  for (int k : {1, 2}) {
    const NewDemo nd{&f.demos[k], 0, EntryKind::exemplar};
    f.mem = rehearse(f.mem, {&nd, 1});
  }
  ASSERT_EQ(f.mem.entries.size(), 3u);
  const std::vector<std::size_t> members{0, 1, 2};
  RehearsalStats st;
  const Mem m = substitute_medoid(f.mem, members, 1, &st);
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_EQ(m.entries[0].num_samples, 3);
  EXPECT_EQ(m.entries[0].kind, EntryKind::prototype);
  // Survivor patterns are the network's own rollouts, so little retraining is needed.
  EXPECT_LT(m.entries[0].generation_error, f.cfg.target_mse);
  EXPECT_NO_THROW(m.check_invariants());
}

TEST(Memory, SnapshotRoundTripIsExact) {
  Fixture f(2);
  f.learn(0);
  f.learn(1);
  const auto dir = temp_dir("memory_snapshot");
  const auto path = (dir / "mem.bin").string();
  snapshot(f.mem, path);
  const Mem back = restore(path);
  EXPECT_TRUE(back == f.mem);
  EXPECT_EQ(serialize(back), serialize(f.mem));
  EXPECT_EQ(memory_hash(back), memory_hash(f.mem));
}

TEST(Memory, SnapshotCorruptionIsDetected) {
  Fixture f(1);
  f.learn(0);
  std::string bytes = serialize(f.mem);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  EXPECT_THROW(deserialize_memory(flipped), CorruptFileError);
  EXPECT_THROW(deserialize_memory(bytes.substr(0, bytes.size() - 3)), CorruptFileError);
  std::string other = bytes;
  other[8] = 99;  // version field
  EXPECT_THROW(deserialize_memory(other), VersionMismatchError);
  EXPECT_THROW(restore("/nonexistent/mem.bin"), DataError);
}

TEST(Memory, EntriesCsvHasOneRowPerEntry) {
  Fixture f(2);
  f.learn(0);
  f.learn(1);
  std::ostringstream os;
  write_entries_csv(f.mem, os);
  const std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}

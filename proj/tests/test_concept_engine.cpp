#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace iloci;
using namespace iloci::testing;

namespace {

NetConfig engine_config() {
  NetConfig c = small_config();
  c.closed_loop_ratio = 1.0;
  c.grad_clip = 1.0;
  c.stop_rule = StopRule::max;
  return c;
}

MemEntry entry(ConceptId c, std::vector<double> pb_rec, double gen_err, int samples = 1) {
  MemEntry e;
  e.pb = Eigen::Map<const Vector>(pb_rec.data(), static_cast<Eigen::Index>(pb_rec.size()));
  e.pb_rec = e.pb;
  e.concept_label = c;
  e.generation_error = gen_err;
  e.num_samples = samples;
  return e;
}

struct World {
  NetConfig cfg = engine_config();
  std::vector<ProcessedDemo> demos;
  TeacherOracle teacher;
  Mem mem;
  EngineParams params;

  World() {
    // Two concepts; "A" has two differently shaped demonstrations.
    const std::pair<int, std::string> spec[] = {{0, "A"}, {1, "B"}, {2, "A"}};
    for (int i = 0; i < 3; ++i) {
      demos.push_back(demo_from_sequence(toy_sequence(spec[i].first, 12), "s" + std::to_string(i), 0, spec[i].second));
      teacher.add_demo(demos.back().id(), spec[i].second);
    }
    mem = make_memory(cfg, identity_normalization());
  }

  EpisodeLog step(int i) {
    auto r = process_episode(mem, demos[i], teacher, params);
    mem = std::move(r.mem);
    return r.log;
  }
};

}  // namespace

TEST(Guess, NearestUntriedConceptAndBestAction) {
  Mem m;
  m.next_concept_id = 3;
  m.entries = {entry(0, {0.1, 0.1}, 0.5), entry(1, {0.5, 0.5}, 0.2), entry(0, {0.2, 0.2}, 0.01),
               entry(2, {0.9, 0.9}, 0.3), entry(1, {0.45, 0.5}, 0.05)};
  m.n_prototypes = 5;
  PBVector obs(2);
  obs << 0.12, 0.1;

  auto g = guess_concept(m, obs, {});
  ASSERT_TRUE(g);
  EXPECT_EQ(g->concept_id, 0);
  EXPECT_EQ(g->matched_entry, 0u);
  EXPECT_EQ(g->action_entry, 2u);  // lowest generation error within concept 0
  EXPECT_NEAR(g->distance, 0.02, 1e-12);

  g = guess_concept(m, obs, {0});
  ASSERT_TRUE(g);
  EXPECT_EQ(g->concept_id, 1);
  EXPECT_EQ(g->matched_entry, 4u);
  EXPECT_EQ(g->action_entry, 4u);

  EXPECT_FALSE(guess_concept(m, obs, {0, 1, 2}));
  EXPECT_FALSE(guess_concept(Mem{}, obs, {}));
}

TEST(Episode, FirstDemoFoundsAGroundedConcept) {
  World w;
  const auto log = w.step(0);
  EXPECT_EQ(log.outcome, Outcome::new_concept);
  EXPECT_TRUE(log.attempts.empty());
  EXPECT_EQ(log.final_concept, 0);
  EXPECT_EQ(w.mem.next_concept_id, 1);
  EXPECT_EQ(w.mem.concept_name(0), "A");
  EXPECT_EQ(w.teacher.grounding().at(0), "A");
  EXPECT_TRUE(w.teacher.signal_log().empty());
  EXPECT_NO_THROW(w.mem.check_invariants());
}

TEST(Episode, RepeatedDemoIsStrengthened) {
  World w;
  w.step(0);
  const Mem before = w.mem;
  const auto log = w.step(0);
  ASSERT_EQ(log.attempts.size(), 1u);
  // Recognizing the same sequence with the same weights lands exactly on pb_rec.
  EXPECT_DOUBLE_EQ(log.attempts[0].distance, 0.0);
  EXPECT_EQ(log.outcome, Outcome::strengthened);
  EXPECT_EQ(w.mem.entries[0].num_samples, 2);
  EXPECT_EQ(w.mem.weights, before.weights);
  EXPECT_EQ(w.teacher.signal_log(), std::vector<int>{+1});
}

TEST(Episode, PunishmentLeadsToANewConcept) {
  World w;
  w.step(0);
  const auto log = w.step(1);
  ASSERT_EQ(log.attempts.size(), 1u);
  EXPECT_EQ(log.attempts[0].reward, -1);
  EXPECT_GT(log.attempts[0].action_length, 0.0);
  EXPECT_EQ(log.outcome, Outcome::new_concept);
  EXPECT_EQ(log.final_concept, 1);
  EXPECT_EQ(w.mem.concept_name(1), "B");
  EXPECT_EQ(w.mem.entries.size(), 2u);
  EXPECT_EQ(w.teacher.signal_log(), std::vector<int>{-1});
}

TEST(Episode, RewardedGuessFollowsTheSimilarityThreshold) {
  World w;
  w.step(0);
  w.step(1);
  const auto n_before = w.mem.entries.size();
  const auto log = w.step(2);
  ASSERT_FALSE(log.attempts.empty());
  EXPECT_EQ(log.attempts.back().reward, +1);
  EXPECT_EQ(log.final_concept, 0);
  for (std::size_t k = 0; k + 1 < log.attempts.size(); ++k) EXPECT_EQ(log.attempts[k].reward, -1);
  if (log.attempts.back().distance <= w.params.similarity_threshold) {
    EXPECT_EQ(log.outcome, Outcome::strengthened);
    EXPECT_EQ(w.mem.entries.size(), n_before);
  } else {
    EXPECT_EQ(log.outcome, Outcome::new_prototype);
    EXPECT_EQ(w.mem.entries.size(), n_before + 1);
  }
  // Each executed action produced exactly one signal.
  EXPECT_EQ(w.teacher.signal_log().size(), 1 + log.attempts.size());
}

TEST(Episode, FailedRehearsalLeavesMemoryUntouched) {
  World w;
  w.step(0);
  const Mem before = w.mem;
  w.mem.config.learn_rate_w = std::numeric_limits<double>::infinity();
  w.mem.config.grad_clip = 0.0;
  const Mem broken = w.mem;
  auto r = process_episode(broken, w.demos[1], w.teacher, w.params);
  EXPECT_EQ(r.log.outcome, Outcome::failed);
  EXPECT_FALSE(r.log.error.empty());
  EXPECT_TRUE(r.mem == broken);
  EXPECT_EQ(r.mem.entries, before.entries);
}

TEST(Cluster, InterleavedClustersMergeTheRightEntries) {
  NetConfig cfg = engine_config();
  Mem m = make_memory(cfg, identity_normalization());
  std::vector<ProcessedDemo> demos;
  for (int k = 0; k < 6; ++k) demos.push_back(demo_from_sequence(toy_sequence(k, 10), "x" + std::to_string(k), 0, "X"));
  m.next_concept_id = 1;
  for (const auto& d : demos) {
    const NewDemo nd{&d, 0, EntryKind::exemplar};
    m = rehearse(m, {&nd, 1});
  }
  // Two tight groups, {0, 3} and {1, 4, 5}, with entry 2 off on its own.
  const double pts[6][2] = {{0.1, 0.1}, {0.9, 0.86}, {0.1, 0.9}, {0.12, 0.1}, {0.9, 0.94}, {0.9, 0.9}};
  const int samples[6] = {2, 2, 1, 2, 2, 2};
  for (int i = 0; i < 6; ++i) {
    m.entries[i].pb_rec = PBVector(2);
    m.entries[i].pb_rec << pts[i][0], pts[i][1];
    m.entries[i].num_samples = samples[i];
  }
  std::vector<ClusterItem> items;
  for (const auto& e : m.entries) items.push_back({e.pb_rec, e.num_samples, e.kind});
  const auto expect = find_valid_clusters(items, EngineParams{}.cluster());
  ASSERT_EQ(expect.size(), 2u);
  EXPECT_EQ(expect[0].members, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(expect[1].members, (std::vector<std::size_t>{1, 4, 5}));
  EXPECT_EQ(expect[1].medoid, 5u);

  const auto out = maybe_cluster(m, 0, EngineParams{});
  EXPECT_TRUE(out.triggered);
  EXPECT_EQ(out.clusters, 2);
  ASSERT_EQ(out.mem.entries.size(), 3u);
  EXPECT_EQ(out.mem.entries[0].num_samples, 4);
  EXPECT_EQ(out.mem.entries[1].num_samples, 1);
  EXPECT_EQ(out.mem.entries[2].num_samples, 6);
  EXPECT_EQ(out.mem.entries[0].kind, EntryKind::prototype);
  EXPECT_EQ(out.mem.entries[1].kind, EntryKind::exemplar);
  EXPECT_EQ(out.mem.entries[2].kind, EntryKind::prototype);
  // Survivors keep their trained PB as the rehearsal warm start.
  EXPECT_EQ(out.mem.entries[2].initial_input, m.entries[5].initial_input);
  EXPECT_NO_THROW(out.mem.check_invariants());
}

TEST(Cluster, BelowThresholdDoesNothing) {
  Mem m;
  m.next_concept_id = 1;
  m.entries = {entry(0, {0.1, 0.1}, 0.1), entry(0, {0.11, 0.1}, 0.1), entry(0, {0.9, 0.9}, 0.1)};
  m.n_prototypes = 3;
  const auto out = maybe_cluster(m, 0, EngineParams{});
  EXPECT_FALSE(out.triggered);
  EXPECT_TRUE(out.mem == m);
}

TEST(Infer, ConfidenceIsDistanceRatio) {
  World w;
  w.step(0);
  w.step(1);
  for (int i = 0; i < 3; ++i) {
    const auto inf = infer(w.mem, w.demos[i]);
    double d1 = 1e300, d2 = 1e300;
    ConceptId best = -1;
    for (const auto& e : w.mem.entries) {
      const double d = (inf.pb_obs - e.pb_rec).norm();
      if (d < d1) d1 = d, best = e.concept_label;
    }
    for (const auto& e : w.mem.entries)
      if (e.concept_label != best) d2 = std::min(d2, (inf.pb_obs - e.pb_rec).norm());
    EXPECT_EQ(inf.concept_id, best);
    const double expect = d1 > 0 ? std::min(kConfidenceCap, d2 / d1 - 1.0) : kConfidenceCap;
    EXPECT_NEAR(inf.confidence, expect, 1e-9 * std::max(1.0, expect));
    EXPECT_GE(inf.confidence, 0.0);
  }
}

TEST(Infer, SingleConceptIsCappedAndEmptyIsAnError) {
  World w;
  EXPECT_THROW(infer(w.mem, w.demos[0]), ContractError);
  w.step(0);
  EXPECT_DOUBLE_EQ(infer(w.mem, w.demos[1]).confidence, kConfidenceCap);
}

TEST(Params, Validation) {
  EngineParams p;
  EXPECT_NO_THROW(p.validate());
  p.similarity_threshold = -1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.num_threshold = -1;
  EXPECT_THROW(p.validate(), ConfigError);
}

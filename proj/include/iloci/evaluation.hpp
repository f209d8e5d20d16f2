#pragma once

// Five-fold experiment harness: learning phase with the oracle teacher,
// feedback-free inference, and the aggregate report.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "concept_engine.hpp"
#include "dataset.hpp"
#include "teacher.hpp"

namespace iloci {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of fold k: independent of how many folds run or in which order.
inline std::uint64_t fold_seed(std::uint64_t master, int fold) {
  return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(fold) + 1));
}

struct TestRecord {
  int fold = 0;
  std::string demo_id;
  std::string true_concept;
  std::string predicted;
  double confidence = 0.0;
};

struct FoldResult {
  int fold_index = 0;
  Mem mem;
  std::vector<EpisodeLog> episodes;
  std::vector<int> signals;
  std::vector<TestRecord> records;
  double ccr = 0.0;
  bool partial = false;
  std::string error;
  std::size_t n_train = 0;
};

inline double ccr_of(const std::vector<TestRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& r : records) ok += r.predicted == r.true_concept;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(records.size());
}

/// Called after every learning episode; may run on worker threads.
using ProgressFn = std::function<void(int fold, std::size_t done, std::size_t total, const EpisodeLog&)>;

/// Learning phase over the training split in a seeded random order, then inference on the test split.
inline FoldResult run_fold(const ProcessedCorpus& corpus, const FoldSplit& split, const EngineParams& params,
                           NetConfig cfg, std::uint64_t seed, const ProgressFn& progress = {}) {
  params.validate();
  FoldResult res;
  res.fold_index = split.fold_index;
  const std::uint64_t s = fold_seed(seed, split.fold_index);
  cfg.rng_seed = s;
  res.mem = make_memory(cfg, corpus.normalization);

  TeacherOracle teacher;
  for (const auto& id : split.train) teacher.add_demo(id, corpus.find(id).concept_label);
  std::vector<std::string> order = split.train;
  std::mt19937_64 rng(splitmix64(s));
  shuffle(order, rng);
  res.n_train = order.size();

  for (const auto& id : order) {
    auto step = process_episode(res.mem, corpus.find(id), teacher, params);
    res.episodes.push_back(step.log);
    if (progress) progress(split.fold_index, res.episodes.size(), order.size(), step.log);
    if (step.log.outcome == Outcome::failed) {
      res.partial = true;
      res.error = step.log.demo_id + ": " + step.log.error;
      break;
    }
    res.mem = std::move(step.mem);
  }
  res.signals = teacher.signal_log();

  if (!res.mem.empty()) {
    for (const auto& id : split.test) {
      const auto& demo = corpus.find(id);
      const auto inf = infer(res.mem, demo);
      res.records.push_back({split.fold_index, id, demo.concept_label, res.mem.concept_name(inf.concept_id),
                             inf.confidence});
    }
  }
  res.ccr = ccr_of(res.records);
  return res;
}

struct FoldMatrices {
  Eigen::MatrixXd counts;      // true x predicted
  Eigen::MatrixXd confidence;  // mean confidence per cell, NaN where empty
  Eigen::MatrixXd percent;     // row-normalized, NaN rows where no test demo exists
  std::vector<bool> row_present;
};

inline FoldMatrices fold_matrices(const std::vector<TestRecord>& records, const std::vector<std::string>& concepts) {
  const auto n = static_cast<Eigen::Index>(concepts.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto index = [&](const std::string& c) {
    auto it = std::lower_bound(concepts.begin(), concepts.end(), c);
    if (it == concepts.end() || *it != c) throw ContractError("record names unknown concept " + c);
    return static_cast<Eigen::Index>(it - concepts.begin());
  };
  FoldMatrices m{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Constant(n, n, nan),
                 std::vector<bool>(concepts.size(), false)};
  for (const auto& r : records) {
    const auto i = index(r.true_concept), j = index(r.predicted);
    m.counts(i, j) += 1.0;
    m.confidence(i, j) += r.confidence;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double total = m.counts.row(i).sum();
    for (Eigen::Index j = 0; j < n; ++j)
      m.confidence(i, j) = m.counts(i, j) > 0 ? m.confidence(i, j) / m.counts(i, j) : nan;
    if (total > 0) {
      m.row_present[static_cast<std::size_t>(i)] = true;
      m.percent.row(i) = 100.0 * m.counts.row(i) / total;
    }
  }
  return m;
}

/// CCR as the count-weighted diagonal of the row-normalized matrix.
inline double ccr_from_matrix(const FoldMatrices& m) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < m.counts.rows(); ++i) {
    if (!m.row_present[static_cast<std::size_t>(i)]) continue;
    const double total = m.counts.row(i).sum();
    num += m.percent(i, i) * total;
    den += total;
  }
  return den > 0 ? num / den : 0.0;
}

/// Classical scaling of a Euclidean distance matrix to two dimensions.
/// Missing dimensions (rank < 2) come out as zeros.
inline Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& d, int dims = 2) {
  const Eigen::Index n = d.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, dims);
  if (n == 0) return out;
  const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd b = -0.5 * j * d.cwiseProduct(d) * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  for (int k = 0; k < dims && k < n; ++k) {
    const Eigen::Index col = n - 1 - k;  // eigenvalues ascend
    const double lambda = eig.eigenvalues()(col);
    if (lambda <= 0.0) continue;
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.col(k) = v * std::sqrt(lambda);
  }
  return out;
}

struct EmbeddedEntry {
  std::string concept_name;
  EntryKind kind;
  double x = 0.0, y = 0.0;
};

/// Two-dimensional view of the training PB vectors of every entry.
inline std::vector<EmbeddedEntry> embed_pbs(const Mem& mem) {
  std::vector<PBVector> pts;
  for (const auto& e : mem.entries) pts.push_back(e.pb);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j)
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (pts[i] - pts[j]).norm();
  const Eigen::MatrixXd xy = classical_mds(d);
  std::vector<EmbeddedEntry> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    out.push_back({mem.concept_name(mem.entries[i].concept_label), mem.entries[i].kind,
                   xy(static_cast<Eigen::Index>(i), 0), xy(static_cast<Eigen::Index>(i), 1)});
  return out;
}

struct RegeneratedSample {
  std::string concept_name;
  std::size_t entry = 0;
  std::vector<Point2> path;  // path[0] is the start point; one further point per step
};

/// Per concept, the closed-loop rollout of its best-generated entry, denormalized into workspace coordinates.
inline std::vector<RegeneratedSample> regenerate_samples(const Mem& mem) {
  std::vector<RegeneratedSample> out;
  if (!mem.weights) return out;
  for (ConceptId c : mem.concepts()) {
    std::size_t best = 0;
    double err = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mem.entries.size(); ++i)
      if (mem.entries[i].concept_label == c && mem.entries[i].generation_error < err)
        err = mem.entries[i].generation_error, best = i;
    const auto& e = mem.entries[best];
    const Sequence s = regenerate(*mem.weights, e.pb, e.initial_input, e.num_steps);
    const auto deltas = mem.normalization.decode_sensory(s);
    out.push_back({mem.concept_name(c), best, reconstruct_path(e.initial_info, deltas)});
  }
  return out;
}

/// Reward of the first attempt of every episode that made one, in learning order.
inline std::vector<int> first_attempt_rewards(const std::vector<EpisodeLog>& episodes) {
  std::vector<int> out;
  for (const auto& e : episodes)
    if (!e.attempts.empty()) out.push_back(e.attempts.front().reward);
  return out;
}

/// Index-wise mean over folds of the smoothed curves (each index averages the folds that reach it).
inline std::vector<double> average_curves(const std::vector<std::vector<double>>& curves) {
  std::size_t len = 0;
  for (const auto& c : curves) len = std::max(len, c.size());
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    int n = 0;
    for (const auto& c : curves)
      if (i < c.size()) out[i] += c[i], ++n;
    out[i] /= n;
  }
  return out;
}

struct EvalReport {
  std::vector<std::string> concepts;
  std::vector<FoldResult> folds;
  double mean_ccr = 0.0;
  double std_ccr = 0.0;  // sample standard deviation over completed folds
  int completed_folds = 0;
  Eigen::MatrixXd confusion;   // averaged row-normalized percents
  Eigen::MatrixXd confidence;  // averaged mean confidence per cell
  std::vector<bool> row_present;
  std::vector<double> reward_curve;         // smoothed, every executed action
  std::vector<double> first_attempt_curve;  // smoothed, first attempt per episode
  double reward_gain = 0.0;
  double first_attempt_gain = 0.0;
  std::vector<EmbeddedEntry> embedding;
  std::vector<RegeneratedSample> samples;

  std::vector<TestRecord> records() const {
    std::vector<TestRecord> out;
    for (const auto& f : folds) out.insert(out.end(), f.records.begin(), f.records.end());
    return out;
  }
  double recall(std::size_t concept_index) const {
    const auto i = static_cast<Eigen::Index>(concept_index);
    return confusion(i, i);
  }
};

inline std::vector<std::string> corpus_concepts(const ProcessedCorpus& corpus) {
  std::vector<std::string> out;
  for (const auto& d : corpus.demos) out.push_back(d.concept_label);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline EvalReport aggregate(std::vector<FoldResult> folds, std::vector<std::string> concepts, int window = 7) {
  EvalReport rep;
  rep.concepts = std::move(concepts);
  const auto n = static_cast<Eigen::Index>(rep.concepts.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.confusion = Eigen::MatrixXd::Constant(n, n, nan);
  rep.confidence = Eigen::MatrixXd::Constant(n, n, nan);
  rep.row_present.assign(rep.concepts.size(), false);

  Eigen::MatrixXd conf_sum = Eigen::MatrixXd::Zero(n, n), conf_cnt = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd pct_sum = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd pct_cnt = Eigen::VectorXd::Zero(n);
  std::vector<double> ccrs;
  std::vector<std::vector<double>> curves, firsts;
  for (const auto& f : folds) {
    if (f.partial) continue;
    ccrs.push_back(f.ccr);
    curves.push_back(smoothed_signal(f.signals, window));
    firsts.push_back(smoothed_signal(first_attempt_rewards(f.episodes), window));
    const auto m = fold_matrices(f.records, rep.concepts);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (m.row_present[static_cast<std::size_t>(i)]) pct_sum.row(i) += m.percent.row(i), pct_cnt(i) += 1;
      for (Eigen::Index j = 0; j < n; ++j)
        if (m.counts(i, j) > 0) conf_sum(i, j) += m.confidence(i, j), conf_cnt(i, j) += 1;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pct_cnt(i) > 0) {
      rep.row_present[static_cast<std::size_t>(i)] = true;
      rep.confusion.row(i) = pct_sum.row(i) / pct_cnt(i);
    }
    for (Eigen::Index j = 0; j < n; ++j)
      if (conf_cnt(i, j) > 0) rep.confidence(i, j) = conf_sum(i, j) / conf_cnt(i, j);
  }
  rep.completed_folds = static_cast<int>(ccrs.size());
  if (!ccrs.empty()) {
    for (double c : ccrs) rep.mean_ccr += c;
    rep.mean_ccr /= static_cast<double>(ccrs.size());
    if (ccrs.size() > 1) {
      double sq = 0.0;
      for (double c : ccrs) sq += (c - rep.mean_ccr) * (c - rep.mean_ccr);
      rep.std_ccr = std::sqrt(sq / static_cast<double>(ccrs.size() - 1));
    }
  }
  rep.reward_curve = average_curves(curves);
  rep.first_attempt_curve = average_curves(firsts);
  rep.reward_gain = quartile_gain(rep.reward_curve);
  rep.first_attempt_gain = quartile_gain(rep.first_attempt_curve);
  for (const auto& f : folds) {
    if (f.partial || f.mem.empty()) continue;
    rep.embedding = embed_pbs(f.mem);
    rep.samples = regenerate_samples(f.mem);
    break;
  }
  rep.folds = std::move(folds);
  return rep;
}

/// Runs the selected folds (all when `only` is empty), up to `jobs` at a time.
inline EvalReport run_cv(const ProcessedCorpus& corpus, const EngineParams& params, const NetConfig& cfg,
                         std::uint64_t seed, int jobs = 1, std::vector<int> only = {},
                         const ProgressFn& progress = {}) {
  const auto splits = make_folds(std::span<const ProcessedDemo>(corpus.demos), seed);
  if (only.empty())
    for (const auto& s : splits) only.push_back(s.fold_index);
  std::vector<FoldResult> results;
  jobs = std::max(1, jobs);
  for (std::size_t start = 0; start < only.size(); start += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<FoldResult>> batch;
    for (std::size_t k = start; k < std::min(only.size(), start + static_cast<std::size_t>(jobs)); ++k) {
      const int f = only[k];
      if (f < 0 || f >= kNumFolds) throw ConfigError("fold index out of range: " + std::to_string(f));
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                 [&, f] { return run_fold(corpus, splits[static_cast<std::size_t>(f)], params, cfg, seed, progress); }));
    }
    for (auto& fut : batch) results.push_back(fut.get());
  }
  return aggregate(std::move(results), corpus_concepts(corpus));
}

}  // namespace iloci

// Command-line front end: preprocess, learn, infer, eval, report.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "iloci/iloci.hpp"

namespace fs = std::filesystem;
using namespace iloci;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumerical = 4, kPartial = 5 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return kConfig;
    case ErrorKind::data: return kData;
    case ErrorKind::numerical: return kNumerical;
    case ErrorKind::contract: return kOther;
  }
  return kOther;
}

void setup_logging() {
  auto log = spdlog::stderr_color_mt("iloci");
  spdlog::set_default_logger(log);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  const char* env = std::getenv("ILOCI_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string cache;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

/// Every run directory gets the configuration it ran with.
fs::path prepare_output(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  save_config(cfg, dir / "config.ini");
  return dir;
}

ProcessedCorpus build_corpus(const RunConfig& cfg) {
  const auto labels = load_label_map(cfg.label_map);
  spdlog::info("loading corpus from {}", cfg.corpus_dir);
  const auto trajectories = load_corpus(cfg.corpus_dir, labels);
  auto corpus = preprocess_corpus(trajectories, labels, cfg.preprocess);
  spdlog::info("preprocessed {} demonstrations", corpus.demos.size());
  return corpus;
}

ProcessedCorpus obtain_corpus(const RunConfig& cfg, const std::string& cache) {
  if (cache.empty()) return build_corpus(cfg);
  if (!fs::exists(cache)) throw DataError("processed-corpus cache not found: " + cache);
  return deserialize_corpus(io::read_file(cache));
}

ProgressFn progress_logger() {
  return [](int fold, std::size_t done, std::size_t total, const EpisodeLog& log) {
    spdlog::debug("fold {} episode {}/{} {} -> {} ({} attempts)", fold, done, total, log.demo_id, to_string(log.outcome),
                  log.attempts.size());
    if (done == total) spdlog::info("fold {} learning phase done", fold);
  };
}

int cmd_preprocess(const Common& c) {
  const RunConfig cfg = resolve(c);
  const auto dir = prepare_output(cfg);
  const auto corpus = build_corpus(cfg);
  const auto bytes = serialize(corpus);
  const fs::path target = c.cache.empty() ? dir / "corpus.bin" : fs::path(c.cache);
  io::write_file(target.string(), bytes);
  std::cout << target.string() << " demos=" << corpus.demos.size() << " fnv1a=" << std::hex << io::fnv1a(bytes)
            << std::dec << '\n';
  return kOk;
}

int parse_fold(const std::string& fold) {
  int k = -1;
  try {
    std::size_t used = 0;
    k = std::stoi(fold, &used);
    if (used != fold.size()) k = -1;
  } catch (const std::exception&) {
  }
  if (k < 0 || k >= kNumFolds) throw ConfigError("--fold expects 0-4 or 'all', got " + fold);
  return k;
}

int cmd_learn(const Common& c, const std::string& fold) {
  const RunConfig cfg = resolve(c);
  const auto dir = prepare_output(cfg);
  const auto corpus = obtain_corpus(cfg, c.cache);
  FoldSplit split;
  if (fold == "all") {
    split.fold_index = 0;
    for (const auto& d : corpus.demos) split.train.push_back(d.id());
  } else {
    const int k = parse_fold(fold);
    split = make_folds(std::span<const ProcessedDemo>(corpus.demos), cfg.seed)[static_cast<std::size_t>(k)];
  }
  const auto res = run_fold(corpus, split, cfg.engine, cfg.net, cfg.seed, progress_logger());
  snapshot(res.mem, (dir / "memory.bin").string());
  write_episode_log(res.episodes, dir / "episodes.jsonl");
  write_signals(res.signals, cfg.reward_window, dir / "signals.csv");
  {
    std::ofstream out(dir / "entries.csv", std::ios::binary);
    write_entries_csv(res.mem, out);
  }
  if (!res.records.empty()) write_records(res.records, dir / "records.csv");
  std::cout << "entries=" << res.mem.entries.size() << " concepts=" << res.mem.concepts().size();
  if (!res.records.empty()) std::cout << " ccr=" << res.ccr;
  std::cout << '\n';
  if (res.partial) {
    spdlog::error("learning stopped early: {}", res.error);
    return kNumerical;
  }
  return kOk;
}

int cmd_infer(const Common& c, const std::string& snapshot_path, const std::vector<std::string>& demos) {
  if (!fs::exists(snapshot_path)) throw DataError("snapshot not found: " + snapshot_path);
  const Mem mem = restore(snapshot_path);
  const RunConfig cfg = resolve(c);
  const auto corpus = obtain_corpus(cfg, c.cache);
  std::vector<std::string> ids = demos;
  if (ids.empty())
    for (const auto& d : corpus.demos) ids.push_back(d.id());
  std::cout << "demo,true_concept,predicted,confidence\n";
  std::cout.precision(17);
  for (const auto& id : ids) {
    const auto& d = corpus.find(id);
    const auto r = infer(mem, d);
    std::cout << id << ',' << d.concept_label << ',' << mem.concept_name(r.concept_id) << ',' << r.confidence << '\n';
  }
  return kOk;
}

int cmd_eval(const Common& c, const std::string& fold) {
  const RunConfig cfg = resolve(c);
  const auto dir = prepare_output(cfg);
  const auto corpus = obtain_corpus(cfg, c.cache);
  std::vector<int> only;
  if (fold != "all") only.push_back(parse_fold(fold));
  spdlog::info("five-fold evaluation, {} concepts, jobs={}", corpus_concepts(corpus).size(), cfg.jobs);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = run_cv(corpus, cfg.engine, cfg.net, cfg.seed, cfg.jobs, only, progress_logger());
  write_report(rep, dir, cfg.reward_window, cfg.preprocess.workspace);
  write_runtime(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), dir);
  std::cout << "mean_ccr=" << rep.mean_ccr << " std_ccr=" << rep.std_ccr << " completed_folds=" << rep.completed_folds
            << " reward_gain=" << rep.reward_gain << '\n';
  for (const auto& f : rep.folds)
    if (f.partial) {
      spdlog::error("fold {} incomplete: {}", f.fold_index, f.error);
      return kPartial;
    }
  return kOk;
}

int cmd_report(const Common& c, const std::string& snapshot_path) {
  if (!fs::exists(snapshot_path)) throw DataError("snapshot not found: " + snapshot_path);
  const Mem mem = restore(snapshot_path);
  const RunConfig cfg = resolve(c);
  const auto dir = prepare_output(cfg);
  const auto emb = embed_pbs(mem);
  const auto samples = regenerate_samples(mem);
  std::vector<std::string> names;
  for (ConceptId id : mem.concepts()) names.push_back(mem.concept_name(id));
  {
    std::ofstream out(dir / "entries.csv", std::ios::binary);
    write_entries_csv(mem, out);
  }
  {
    std::ofstream out(dir / "pb_embedding.csv", std::ios::binary);
    out << "concept,kind,x,y\n";
    out.precision(17);
    for (const auto& p : emb) out << p.concept_name << ',' << to_string(p.kind) << ',' << p.x << ',' << p.y << '\n';
  }
  write_embedding_svg(emb, names, dir / "pb_embedding.svg");
  write_samples_svg(samples, cfg.preprocess.workspace, dir / "regenerated.svg");
  for (const auto& s : samples) {
    std::ofstream out(dir / ("regenerated_" + detail::slug(s.concept_name) + ".csv"), std::ios::binary);
    out << "step,y,z\n";
    out.precision(17);
    for (std::size_t i = 0; i < s.path.size(); ++i) out << i << ',' << s.path[i].y << ',' << s.path[i].z << '\n';
  }
  std::cout << dir.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Incremental learning of concepts by imitation"};
  app.require_subcommand(1);
  Common common;
  std::string fold = "all", snapshot_path;
  std::vector<std::string> demos;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI configuration file");
    sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    sub->add_option("--out", common.out, "output directory (overrides the config)");
    sub->add_option("--cache", common.cache, "processed-corpus cache");
  };
  auto* pre = app.add_subcommand("preprocess", "preprocess the corpus and write the cache");
  add_common(pre);
  auto* learn = app.add_subcommand("learn", "run the learning phase on one fold or the whole corpus");
  add_common(learn);
  learn->add_option("--fold", fold, "fold index 0-4, or 'all'");
  auto* inf = app.add_subcommand("infer", "classify demonstrations against a memory snapshot");
  add_common(inf);
  inf->add_option("--snapshot", snapshot_path, "memory snapshot")->required();
  inf->add_option("--demo", demos, "demo ids such as Sine:3 (default: all)");
  auto* ev = app.add_subcommand("eval", "five-fold cross-validation and report bundle");
  add_common(ev);
  ev->add_option("--fold", fold, "run a single fold");
  auto* rep = app.add_subcommand("report", "plots and tables for a memory snapshot");
  add_common(rep);
  rep->add_option("--snapshot", snapshot_path, "memory snapshot")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*pre) return cmd_preprocess(common);
    if (*learn) return cmd_learn(common, fold);
    if (*inf) return cmd_infer(common, snapshot_path, demos);
    if (*ev) return cmd_eval(common, fold);
    if (*rep) return cmd_report(common, snapshot_path);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
  return kOther;
}

#pragma once

// Writes the evaluation bundle: CSV tables, per-fold logs and snapshots, and
// a few dependency-free SVG plots.

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evaluation.hpp"

namespace iloci {

namespace fs = std::filesystem;

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + p.string());
  return out;
}

/// File-system safe form of a concept name.
inline std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
  return out.empty() ? "_" : out;
}

}  // namespace detail

inline nlohmann::json to_json(const EpisodeLog& log) {
  nlohmann::json attempts = nlohmann::json::array();
  for (const auto& a : log.attempts)
    attempts.push_back({{"concept", a.concept_id},
                        {"entry", a.entry},
                        {"distance", a.distance},
                        {"action_length", a.action_length},
                        {"reward", a.reward}});
  nlohmann::json j{{"demo", log.demo_id},
                   {"true_concept", log.true_concept},
                   {"attempts", attempts},
                   {"rewards", log.rewards()},
                   {"outcome", to_string(log.outcome)},
                   {"concept", log.final_concept},
                   {"clustering_triggered", log.clustering_triggered},
                   {"clusters_merged", log.clusters_merged},
                   {"rehearsal_epochs", log.rehearsal_epochs}};
  if (!log.error.empty()) j["error"] = log.error;
  return j;
}

inline void write_episode_log(const std::vector<EpisodeLog>& episodes, const fs::path& path) {
  auto out = detail::open_out(path);
  for (const auto& e : episodes) out << to_json(e).dump() << '\n';
}

inline void write_signals(const std::vector<int>& signals, int window, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "interaction,raw,smoothed\n";
  const auto sm = smoothed_signal(signals, window);
  for (std::size_t i = 0; i < signals.size(); ++i) out << i + 1 << ',' << signals[i] << ',' << detail::num(sm[i]) << '\n';
}

inline void write_matrix(const Eigen::MatrixXd& m, const std::vector<std::string>& concepts, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "true\\predicted";
  for (const auto& c : concepts) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << concepts[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << detail::num(m(i, j));
    out << '\n';
  }
}

inline void write_records(const std::vector<TestRecord>& records, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "fold,demo,true_concept,predicted,confidence\n";
  for (const auto& r : records)
    out << r.fold << ',' << r.demo_id << ',' << r.true_concept << ',' << r.predicted << ',' << detail::num(r.confidence)
        << '\n';
}

// ---------------------------------------------------------------------------
// SVG

namespace svg {

struct Frame {
  double x0, x1, y0, y1;  // data bounds
  double w = 640, h = 420, pad = 48;
  double px(double x) const { return pad + (x - x0) / (x1 - x0 > 0 ? x1 - x0 : 1) * (w - 2 * pad); }
  double py(double y) const { return h - pad - (y - y0) / (y1 - y0 > 0 ? y1 - y0 : 1) * (h - 2 * pad); }
};

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
  return palette[i % std::size(palette)];
}

inline std::string open(const Frame& f, const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << f.w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
     << "<rect x=\"" << f.pad << "\" y=\"" << f.pad << "\" width=\"" << f.w - 2 * f.pad << "\" height=\"" << f.h - 2 * f.pad
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  return os.str();
}

inline std::string polyline(const Frame& f, const std::vector<std::pair<double, double>>& pts, const char* stroke) {
  std::ostringstream os;
  os.precision(6);
  os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
  for (const auto& [x, y] : pts) os << f.px(x) << ',' << f.py(y) << ' ';
  os << "\"/>\n";
  return os.str();
}

}  // namespace svg

inline void write_reward_svg(const std::vector<double>& curve, const fs::path& path) {
  svg::Frame f{1, static_cast<double>(std::max<std::size_t>(curve.size(), 2)), -1, 1};
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < curve.size(); ++i) pts.emplace_back(static_cast<double>(i + 1), curve[i]);
  auto out = detail::open_out(path);
  out << svg::open(f, "Smoothed reinforcement signal (mean over folds)");
  out << svg::polyline(f, {{f.x0, 0.0}, {f.x1, 0.0}}, "#bbb") << svg::polyline(f, pts, "#1f77b4");
  out << "<text x=\"" << f.w / 2 << "\" y=\"" << f.h - 12 << "\" text-anchor=\"middle\">interaction</text>\n";
  out << "<text x=\"12\" y=\"" << f.py(1) << "\">+1</text><text x=\"12\" y=\"" << f.py(-1) << "\">-1</text>\n</svg>\n";
}

inline void write_embedding_svg(const std::vector<EmbeddedEntry>& pts, const std::vector<std::string>& concepts,
                                const fs::path& path) {
  svg::Frame f{0, 1, 0, 1};
  if (!pts.empty()) {
    f.x0 = f.x1 = pts[0].x, f.y0 = f.y1 = pts[0].y;
    for (const auto& p : pts) f.x0 = std::min(f.x0, p.x), f.x1 = std::max(f.x1, p.x), f.y0 = std::min(f.y0, p.y), f.y1 = std::max(f.y1, p.y);
  }
  auto out = detail::open_out(path);
  out << svg::open(f, "PB vectors, classical MDS");
  for (const auto& p : pts) {
    const auto ci = static_cast<std::size_t>(std::find(concepts.begin(), concepts.end(), p.concept_name) - concepts.begin());
    const double r = p.kind == EntryKind::prototype ? 6 : 4;
    out << "<circle cx=\"" << f.px(p.x) << "\" cy=\"" << f.py(p.y) << "\" r=\"" << r << "\" fill=\"" << svg::color(ci)
        << "\"><title>" << p.concept_name << " (" << to_string(p.kind) << ")</title></circle>\n";
    out << "<text x=\"" << f.px(p.x) + 6 << "\" y=\"" << f.py(p.y) - 4 << "\" font-size=\"9\">" << p.concept_name << "</text>\n";
  }
  out << "</svg>\n";
}

inline void write_samples_svg(const std::vector<RegeneratedSample>& samples, const WorkspaceRect& ws, const fs::path& path) {
  const std::size_t cols = 6;
  const double cell = 130;
  const std::size_t rows = (samples.size() + cols - 1) / cols;
  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell << "\" height=\"" << std::max<std::size_t>(rows, 1) * cell
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double ox = static_cast<double>(k % cols) * cell, oy = static_cast<double>(k / cols) * cell;
    svg::Frame f{ws.y_range.first, ws.y_range.second, ws.z_range.first, ws.z_range.second, cell - 10, cell - 10, 12};
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : samples[k].path) pts.emplace_back(p.y, p.z);
    out << "<g transform=\"translate(" << ox + 5 << ',' << oy + 5 << ")\">\n"
        << "<rect width=\"" << f.w << "\" height=\"" << f.h << "\" fill=\"none\" stroke=\"#ccc\"/>\n"
        << "<text x=\"4\" y=\"10\">" << samples[k].concept_name << "</text>\n"
        << svg::polyline(f, pts, "#d62728");
    if (!pts.empty())
      out << "<circle cx=\"" << f.px(pts[0].first) << "\" cy=\"" << f.py(pts[0].second) << "\" r=\"3\" fill=\"black\"/>\n";
    out << "</g>\n";
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------

/// Everything a five-fold run produces, under `dir`.
/// Wall-clock time of a run. Kept apart from the CSVs, which must be reproducible.
inline void write_runtime(double seconds, const fs::path& dir) {
  fs::create_directories(dir);
  detail::open_out(dir / "runtime.txt") << "elapsed_seconds=" << detail::num(seconds) << '\n';
}

inline std::optional<double> read_runtime(const fs::path& dir) {
  std::ifstream in(dir / "runtime.txt");
  std::string line;
  if (!std::getline(in, line) || line.rfind("elapsed_seconds=", 0) != 0) return std::nullopt;
  return std::stod(line.substr(16));
}

inline void write_report(const EvalReport& rep, const fs::path& dir, int window, const WorkspaceRect& ws) {
  fs::create_directories(dir);
  {
    auto out = detail::open_out(dir / "ccr.csv");
    out << "fold,ccr,n_train,n_test,entries,status\n";
    for (const auto& f : rep.folds)
      out << f.fold_index << ',' << detail::num(f.ccr) << ',' << f.n_train << ',' << f.records.size() << ','
          << f.mem.entries.size() << ',' << (f.partial ? "partial" : "complete") << '\n';
    out << "mean," << detail::num(rep.mean_ccr) << ",,,,\n";
    out << "std," << detail::num(rep.std_ccr) << ",,,,\n";
  }
  {
    auto out = detail::open_out(dir / "summary.csv");
    out << "metric,value\n"
        << "mean_ccr," << detail::num(rep.mean_ccr) << '\n'
        << "std_ccr," << detail::num(rep.std_ccr) << '\n'
        << "completed_folds," << rep.completed_folds << '\n'
        << "reward_quartile_gain," << detail::num(rep.reward_gain) << '\n'
        << "first_attempt_quartile_gain," << detail::num(rep.first_attempt_gain) << '\n';
  }
  write_matrix(rep.confusion, rep.concepts, dir / "confusion.csv");
  write_matrix(rep.confidence, rep.concepts, dir / "confidence.csv");
  write_records(rep.records(), dir / "records.csv");
  {
    auto out = detail::open_out(dir / "recall.csv");
    out << "concept,recall\n";
    for (std::size_t i = 0; i < rep.concepts.size(); ++i)
      out << rep.concepts[i] << ',' << detail::num(rep.row_present[i] ? rep.recall(i) : std::nan("")) << '\n';
  }
  {
    auto out = detail::open_out(dir / "reward.csv");
    out << "interaction,smoothed,first_attempt_smoothed\n";
    const std::size_t n = std::max(rep.reward_curve.size(), rep.first_attempt_curve.size());
    for (std::size_t i = 0; i < n; ++i)
      out << i + 1 << ',' << (i < rep.reward_curve.size() ? detail::num(rep.reward_curve[i]) : "") << ','
          << (i < rep.first_attempt_curve.size() ? detail::num(rep.first_attempt_curve[i]) : "") << '\n';
  }
  {
    auto out = detail::open_out(dir / "pb_embedding.csv");
    out << "concept,kind,x,y\n";
    for (const auto& p : rep.embedding)
      out << p.concept_name << ',' << to_string(p.kind) << ',' << detail::num(p.x) << ',' << detail::num(p.y) << '\n';
  }
  for (const auto& s : rep.samples) {
    auto out = detail::open_out(dir / "regenerated" / (detail::slug(s.concept_name) + ".csv"));
    out << "step,y,z,start\n";
    for (std::size_t i = 0; i < s.path.size(); ++i)
      out << i << ',' << detail::num(s.path[i].y) << ',' << detail::num(s.path[i].z) << ',' << (i == 0 ? 1 : 0) << '\n';
  }
  for (const auto& f : rep.folds) {
    const fs::path fd = dir / ("fold_" + std::to_string(f.fold_index));
    write_episode_log(f.episodes, fd / "episodes.jsonl");
    write_signals(f.signals, window, fd / "signals.csv");
    snapshot(f.mem, (fd / "memory.bin").string());
    auto out = detail::open_out(fd / "entries.csv");
    write_entries_csv(f.mem, out);
    if (f.partial) detail::open_out(fd / "PARTIAL") << f.error << '\n';
  }
  write_reward_svg(rep.reward_curve, dir / "reward.svg");
  write_embedding_svg(rep.embedding, rep.concepts, dir / "pb_embedding.svg");
  write_samples_svg(rep.samples, ws, dir / "regenerated.svg");
}

}  // namespace iloci

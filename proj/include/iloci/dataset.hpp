#pragma once

// LASA-format corpus ingestion and the demonstration preprocessing pipeline:
// smooth -> arc-length resample -> fit into the workspace -> IK -> first
// differences -> per-channel normalization into the network range.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "errors.hpp"
#include "kinematics.hpp"

namespace iloci {

inline constexpr std::size_t kSensoryDim = 2;
inline constexpr std::size_t kChannels = kSensoryDim + kNumJoints;

/// Row-major so one time step is one contiguous row.
using Sequence = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Trajectory {
  std::string shape_name;
  int demo_index = 0;
  std::vector<Point2> points;
};

inline std::string demo_id(std::string_view shape, int index) { return std::string(shape) + ":" + std::to_string(index); }
inline std::string demo_id(const Trajectory& t) { return demo_id(t.shape_name, t.demo_index); }

class ConceptLabelMap {
 public:
  void add(std::string shape, std::string concept_name) {
    if (index_.contains(shape)) throw ConfigError("label map lists shape twice: " + shape);
    index_[shape] = entries_.size();
    entries_.emplace_back(std::move(shape), std::move(concept_name));
  }

  const std::string& concept_of(const std::string& shape) const {
    auto it = index_.find(shape);
    if (it == index_.end()) throw ConfigError("shape missing from label map: " + shape);
    return entries_[it->second].second;
  }

  bool contains(const std::string& shape) const { return index_.contains(shape); }

  /// (shape, concept) pairs in file order.
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// Distinct concept names, sorted.
  std::vector<std::string> concepts() const {
    std::set<std::string> s;
    for (const auto& e : entries_) s.insert(e.second);
    return {s.begin(), s.end()};
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.remove_suffix(1);
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

inline ConceptLabelMap load_label_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open label map " + path.string());
  ConceptLabelMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = detail::split_csv(line);
    if (lineno == 1) {
      if (f.size() != 2 || f[0] != "shape" || f[1] != "concept")
        throw ParseError(path.string(), lineno, "expected header shape,concept");
      continue;
    }
    if (line.empty()) continue;
    if (f.size() != 2 || f[0].empty() || f[1].empty()) throw ParseError(path.string(), lineno, "expected shape,concept");
    map.add(std::string(f[0]), std::string(f[1]));
  }
  if (map.entries().empty()) throw ConfigError("label map is empty: " + path.string());
  return map;
}

inline std::vector<Trajectory> load_shape_file(const std::filesystem::path& path, const std::string& shape) {
  std::ifstream in(path);
  if (!in) throw CorpusIncompleteError("missing shape file " + path.string());
  const std::string file = path.string();
  std::vector<Trajectory> demos;
  std::string line;
  std::size_t lineno = 0;
  double last_t = 0.0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = detail::split_csv(line);
    if (lineno == 1) {
      if (f.size() != 4 || f[0] != "demo" || f[1] != "t" || f[2] != "y" || f[3] != "z")
        throw ParseError(file, lineno, "expected header demo,t,y,z");
      continue;
    }
    if (line.empty()) continue;
    if (f.size() != 4) throw ParseError(file, lineno, "expected 4 fields");
    int demo = 0;
    double t = 0, y = 0, z = 0;
    if (!detail::parse_number(f[0], demo) || demo < 0) throw ParseError(file, lineno, "bad demo index");
    if (!detail::parse_number(f[1], t) || !detail::parse_number(f[2], y) || !detail::parse_number(f[3], z))
      throw ParseError(file, lineno, "bad number");
    if (!std::isfinite(t) || !std::isfinite(y) || !std::isfinite(z)) throw ParseError(file, lineno, "non-finite value");
    if (demos.empty() || demos.back().demo_index != demo) {
      if (!demos.empty() && demo < demos.back().demo_index) throw ParseError(file, lineno, "rows not sorted by demo");
      demos.push_back({shape, demo, {}});
    } else if (t < last_t) {
      throw ParseError(file, lineno, "rows not sorted by t");
    }
    last_t = t;
    demos.back().points.push_back({y, z});
  }
  if (demos.empty()) throw CorpusIncompleteError("shape file has no rows: " + file);
  for (const auto& d : demos)
    if (d.points.size() < 2) throw DataError(file + ": demo " + std::to_string(d.demo_index) + " has < 2 points");
  return demos;
}

/// Reads <dir>/<shape>.csv for every shape of the label map, in map order.
inline std::vector<Trajectory> load_corpus(const std::filesystem::path& dir, const ConceptLabelMap& labels) {
  if (!std::filesystem::is_directory(dir)) throw CorpusIncompleteError("corpus directory not found: " + dir.string());
  std::vector<Trajectory> corpus;
  for (const auto& [shape, concept_name] : labels.entries()) {
    auto demos = load_shape_file(dir / (shape + ".csv"), shape);
    corpus.insert(corpus.end(), std::make_move_iterator(demos.begin()), std::make_move_iterator(demos.end()));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessConfig {
  int smooth_window = 5;
  int resample_len = 50;
  ArmModel arm;
  WorkspaceRect workspace;
};

struct InitialInfo {
  Point2 position;
  JointAngles joints{};
};

struct ProcessedDemo {
  std::string shape_name;
  int demo_index = 0;
  std::string concept_label;  // for the oracle teacher only
  std::vector<Point2> sensory_deltas;
  std::vector<JointAngles> motor_deltas;
  InitialInfo initial_info;

  std::size_t num_steps() const { return sensory_deltas.size(); }
  std::string id() const { return demo_id(shape_name, demo_index); }
};

/// Centered moving average; the window is truncated at both ends.
inline std::vector<Point2> smooth(std::span<const Point2> pts, int window) {
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(pts.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<Point2> out(pts.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - half);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    double sy = 0, sz = 0;
    for (auto k = lo; k <= hi; ++k) {
      sy += pts[k].y;
      sz += pts[k].z;
    }
    const auto cnt = static_cast<double>(hi - lo + 1);
    out[i] = {sy / cnt, sz / cnt};
  }
  return out;
}

/// Uniform arc-length resampling to `count` points. Zero-length segments are dropped first.
inline std::vector<Point2> resample(std::span<const Point2> pts, int count) {
  if (count < 2) throw ConfigError("resample length must be >= 2");
  std::vector<Point2> path;
  for (const auto& p : pts)
    if (path.empty() || !(p == path.back())) path.push_back(p);
  if (path.size() < 2) throw DegenerateInputError("trajectory has no extent (all points identical)");
  std::vector<double> s(path.size(), 0.0);
  for (std::size_t i = 1; i < path.size(); ++i) s[i] = s[i - 1] + distance(path[i - 1], path[i]);
  const double total = s.back();
  std::vector<Point2> out;
  out.reserve(count);
  std::size_t seg = 1;
  for (int k = 0; k < count; ++k) {
    const double target = total * k / (count - 1);
    while (seg + 1 < path.size() && s[seg] < target) ++seg;
    const double len = s[seg] - s[seg - 1];
    const double a = std::clamp((target - s[seg - 1]) / len, 0.0, 1.0);
    out.push_back({path[seg - 1].y + a * (path[seg].y - path[seg - 1].y),
                   path[seg - 1].z + a * (path[seg].z - path[seg - 1].z)});
  }
  out.back() = path.back();
  return out;
}

/// Isotropic scale + translate so the bounding box sits centered in the workspace.
inline std::vector<Point2> fit_to_workspace(std::span<const Point2> pts, const WorkspaceRect& ws) {
  double ymin = pts[0].y, ymax = pts[0].y, zmin = pts[0].z, zmax = pts[0].z;
  for (const auto& p : pts) {
    ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
    zmin = std::min(zmin, p.z), zmax = std::max(zmax, p.z);
  }
  const double w = ymax - ymin, h = zmax - zmin;
  if (w <= 0.0 && h <= 0.0) throw DegenerateInputError("trajectory has no extent (all points identical)");
  double scale = std::numeric_limits<double>::infinity();
  if (w > 0.0) scale = ws.width() / w;
  if (h > 0.0) scale = std::min(scale, ws.height() / h);
  const Point2 c = ws.center();
  const double cy = 0.5 * (ymin + ymax), cz = 0.5 * (zmin + zmax);
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back({c.y + scale * (p.y - cy), c.z + scale * (p.z - cz)});
  return out;
}

/// Absolute fitted path before differencing; exposed for tests and plotting.
inline std::vector<Point2> fitted_path(const Trajectory& t, const PreprocessConfig& cfg) {
  auto smoothed = smooth(t.points, cfg.smooth_window);
  auto resampled = resample(smoothed, cfg.resample_len);
  return fit_to_workspace(resampled, cfg.workspace);
}

/// Steps (1)-(5); channel normalization is applied by Normalization::encode.
inline ProcessedDemo preprocess(const Trajectory& t, const PreprocessConfig& cfg, const std::string& concept_label = {}) {
  const auto path = fitted_path(t, cfg);
  const auto joints = solve_path(cfg.arm, path);
  ProcessedDemo d;
  d.shape_name = t.shape_name;
  d.demo_index = t.demo_index;
  d.concept_label = concept_label;
  d.initial_info = {path.front(), joints.front()};
  for (std::size_t i = 1; i < path.size(); ++i) {
    d.sensory_deltas.push_back({path[i].y - path[i - 1].y, path[i].z - path[i - 1].z});
    JointAngles dq{};
    for (std::size_t j = 0; j < kNumJoints; ++j) dq[j] = joints[i][j] - joints[i - 1][j];
    d.motor_deltas.push_back(dq);
  }
  return d;
}

/// Cumulative sum of the sensory deltas from the initial position.
inline std::vector<Point2> reconstruct_path(const InitialInfo& init, std::span<const Point2> deltas) {
  std::vector<Point2> out{init.position};
  for (const auto& d : deltas) out.push_back({out.back().y + d.y, out.back().z + d.z});
  return out;
}

/// Per-channel affine map from [lo, hi] onto [out_lo, out_hi].
struct Normalization {
  static constexpr double out_lo = 0.1;
  static constexpr double out_hi = 0.9;
  std::array<double, kChannels> lo{};
  std::array<double, kChannels> hi{};

  double scale(std::size_t c) const {
    const double span = hi[c] - lo[c];
    return span > 0.0 ? (out_hi - out_lo) / span : 1.0;
  }
  double encode(std::size_t c, double v) const { return out_lo + (v - lo[c]) * scale(c); }
  double decode(std::size_t c, double v) const { return lo[c] + (v - out_lo) / scale(c); }

  Sequence encode(const ProcessedDemo& d) const {
    Sequence s(static_cast<Eigen::Index>(d.num_steps()), static_cast<Eigen::Index>(kChannels));
    for (std::size_t t = 0; t < d.num_steps(); ++t) {
      const auto r = static_cast<Eigen::Index>(t);
      s(r, 0) = encode(0, d.sensory_deltas[t].y);
      s(r, 1) = encode(1, d.sensory_deltas[t].z);
      for (std::size_t j = 0; j < kNumJoints; ++j) s(r, 2 + j) = encode(2 + j, d.motor_deltas[t][j]);
    }
    return s;
  }

  std::vector<Point2> decode_sensory(const Sequence& s) const {
    std::vector<Point2> out;
    for (Eigen::Index r = 0; r < s.rows(); ++r) out.push_back({decode(0, s(r, 0)), decode(1, s(r, 1))});
    return out;
  }

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

inline Normalization fit_normalization(std::span<const ProcessedDemo> demos) {
  Normalization n;
  n.lo.fill(std::numeric_limits<double>::infinity());
  n.hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& d : demos) {
    for (std::size_t t = 0; t < d.num_steps(); ++t) {
      std::array<double, kChannels> v{d.sensory_deltas[t].y, d.sensory_deltas[t].z};
      for (std::size_t j = 0; j < kNumJoints; ++j) v[2 + j] = d.motor_deltas[t][j];
      for (std::size_t c = 0; c < kChannels; ++c) {
        n.lo[c] = std::min(n.lo[c], v[c]);
        n.hi[c] = std::max(n.hi[c], v[c]);
      }
    }
  }
  if (demos.empty()) {
    n.lo.fill(-1.0);
    n.hi.fill(1.0);
  }
  return n;
}

struct ProcessedCorpus {
  std::vector<ProcessedDemo> demos;
  Normalization normalization;

  const ProcessedDemo& find(const std::string& id) const {
    for (const auto& d : demos)
      if (d.id() == id) return d;
    throw DataError("unknown demo id " + id);
  }
};

inline ProcessedCorpus preprocess_corpus(std::span<const Trajectory> corpus, const ConceptLabelMap& labels,
                                         const PreprocessConfig& cfg) {
  validate(cfg.arm, cfg.workspace);
  ProcessedCorpus out;
  for (const auto& t : corpus) out.demos.push_back(preprocess(t, cfg, labels.concept_of(t.shape_name)));
  out.normalization = fit_normalization(out.demos);
  return out;
}

// ---------------------------------------------------------------------------
// Five-fold splits

struct FoldSplit {
  int fold_index = 0;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline constexpr int kNumFolds = 5;

/// Unbiased index in [0, n) from the raw engine output; portable unlike std::uniform_int_distribution.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do r = rng();
  while (r >= limit);
  return r % n;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

/// Per shape: seeded shuffle, then split into five near-equal partitions (larger ones first).
/// Fold k trains on partition k of every shape and tests on the rest.
template <typename Demo>
std::vector<FoldSplit> make_folds(std::span<const Demo> corpus, std::uint64_t seed) {
  std::vector<std::string> shapes;
  std::map<std::string, std::vector<std::string>> by_shape;
  for (const auto& d : corpus) {
    if (!by_shape.contains(d.shape_name)) shapes.push_back(d.shape_name);
    by_shape[d.shape_name].push_back(demo_id(d.shape_name, d.demo_index));
  }
  std::mt19937_64 rng(seed);
  std::vector<FoldSplit> folds(kNumFolds);
  for (int k = 0; k < kNumFolds; ++k) folds[k].fold_index = k;
  for (const auto& shape : shapes) {
    auto ids = by_shape[shape];
    if (ids.size() < kNumFolds)
      throw ConfigError("shape " + shape + " has " + std::to_string(ids.size()) + " demos; five-fold CV needs >= 5");
    shuffle(ids, rng);
    const std::size_t base = ids.size() / kNumFolds, extra = ids.size() % kNumFolds;
    std::size_t pos = 0;
    for (int k = 0; k < kNumFolds; ++k) {
      const std::size_t len = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& dst = (i >= pos && i < pos + len) ? folds[k].train : folds[k].test;
        dst.push_back(ids[i]);
      }
      pos += len;
    }
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Processed-corpus cache

inline constexpr std::string_view kCacheMagic = "ILOCIPRC";
inline constexpr std::uint32_t kCacheVersion = 1;

inline std::string serialize(const ProcessedCorpus& c) {
  io::Writer w;
  w.put<std::uint64_t>(c.demos.size());
  for (const auto& d : c.demos) {
    w.put_string(d.shape_name);
    w.put<std::int32_t>(d.demo_index);
    w.put_string(d.concept_label);
    w.put<double>(d.initial_info.position.y);
    w.put<double>(d.initial_info.position.z);
    for (double q : d.initial_info.joints) w.put<double>(q);
    w.put<std::uint64_t>(d.num_steps());
    for (std::size_t t = 0; t < d.num_steps(); ++t) {
      w.put<double>(d.sensory_deltas[t].y);
      w.put<double>(d.sensory_deltas[t].z);
      for (double q : d.motor_deltas[t]) w.put<double>(q);
    }
  }
  for (std::size_t c2 = 0; c2 < kChannels; ++c2) {
    w.put<double>(c.normalization.lo[c2]);
    w.put<double>(c.normalization.hi[c2]);
  }
  return io::frame(kCacheMagic, kCacheVersion, w.bytes());
}

inline ProcessedCorpus deserialize_corpus(const std::string& bytes) {
  io::Reader r(io::unframe(kCacheMagic, kCacheVersion, bytes));
  ProcessedCorpus c;
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    ProcessedDemo d;
    d.shape_name = r.get_string();
    d.demo_index = r.get<std::int32_t>();
    d.concept_label = r.get_string();
    d.initial_info.position.y = r.get<double>();
    d.initial_info.position.z = r.get<double>();
    for (double& q : d.initial_info.joints) q = r.get<double>();
    const auto steps = r.get<std::uint64_t>();
    for (std::uint64_t t = 0; t < steps; ++t) {
      Point2 p{r.get<double>(), 0.0};
      p.z = r.get<double>();
      d.sensory_deltas.push_back(p);
      JointAngles dq{};
      for (double& q : dq) q = r.get<double>();
      d.motor_deltas.push_back(dq);
    }
    c.demos.push_back(std::move(d));
  }
  for (std::size_t c2 = 0; c2 < kChannels; ++c2) {
    c.normalization.lo[c2] = r.get<double>();
    c.normalization.hi[c2] = r.get<double>();
  }
  if (!r.at_end()) throw CorruptFileError("trailing bytes in corpus cache");
  return c;
}

}  // namespace iloci

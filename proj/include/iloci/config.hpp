#pragma once

// Run configuration: one INI file with a section per component.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "concept_engine.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "rnnpb.hpp"

namespace iloci {

struct RunConfig {
  std::string corpus_dir = "data/lasa";
  std::string label_map = "data/lasa/concepts.csv";
  std::string output_dir = "runs/default";
  std::uint64_t seed = 1;
  int jobs = 1;
  int reward_window = 7;
  NetConfig net;
  EngineParams engine;
  PreprocessConfig preprocess;

  void validate() const {
    net.validate();
    engine.validate();
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (reward_window < 1) throw ConfigError("reward_window must be >= 1");
    if (preprocess.smooth_window < 1) throw ConfigError("smooth_window must be >= 1");
    if (preprocess.resample_len < 2) throw ConfigError("resample_len must be >= 2");
    validate_arm(preprocess.arm, preprocess.workspace);
  }

 private:
  static void validate_arm(const ArmModel& arm, const WorkspaceRect& ws) {
    try {
      iloci::validate(arm, ws);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

template <std::size_t N>
std::string join(const std::array<double, N>& a) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < N; ++i) os << (i ? " " : "") << a[i];
  return os.str();
}

template <std::size_t N>
std::array<double, N> split_numbers(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  std::array<double, N> out{};
  for (auto& v : out)
    if (!(is >> v)) throw ConfigError(key + ": expected " + std::to_string(N) + " numbers");
  std::string rest;
  if (is >> rest) throw ConfigError(key + ": expected " + std::to_string(N) + " numbers");
  return out;
}

template <typename T>
void read(const boost::property_tree::ptree& pt, const std::string& key, T& field) {
  auto node = pt.get_optional<std::string>(key);
  if (!node) return;
  std::istringstream is(*node);
  T v{};
  if (!(is >> v)) throw ConfigError("bad value for " + key + ": '" + *node + "'");
  std::string rest;
  if (is >> rest) throw ConfigError("bad value for " + key + ": '" + *node + "'");
  field = v;
}

inline void read(const boost::property_tree::ptree& pt, const std::string& key, std::string& field) {
  if (auto node = pt.get_optional<std::string>(key)) field = *node;
}

inline const char* kKnownKeys[] = {
    "paths.corpus_dir", "paths.label_map", "paths.output_dir", "run.seed", "run.jobs", "run.reward_window",
    "network.io_dim", "network.pb_dim", "network.context_dim", "network.hidden_dim", "network.learn_rate_w",
    "network.learn_rate_pb", "network.max_epochs", "network.target_mse", "network.recog_iters",
    "network.closed_loop_ratio", "network.recog_closed_loop_ratio", "network.grad_clip", "network.stop_rule", "engine.k_cutoff",
    "engine.num_threshold", "engine.similarity_threshold", "preprocess.smooth_window", "preprocess.resample_len",
    "arm.link_lengths", "arm.base", "arm.joint_min", "arm.joint_max", "arm.home", "workspace.y_range",
    "workspace.z_range"};

}  // namespace detail

inline boost::property_tree::ptree to_ptree(const RunConfig& c) {
  boost::property_tree::ptree pt;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  pt.put("paths.corpus_dir", c.corpus_dir);
  pt.put("paths.label_map", c.label_map);
  pt.put("paths.output_dir", c.output_dir);
  pt.put("run.seed", c.seed);
  pt.put("run.jobs", c.jobs);
  pt.put("run.reward_window", c.reward_window);
  pt.put("network.io_dim", c.net.io_dim);
  pt.put("network.pb_dim", c.net.pb_dim);
  pt.put("network.context_dim", c.net.context_dim);
  pt.put("network.hidden_dim", c.net.hidden_dim);
  pt.put("network.learn_rate_w", num(c.net.learn_rate_w));
  pt.put("network.learn_rate_pb", num(c.net.learn_rate_pb));
  pt.put("network.max_epochs", c.net.max_epochs);
  pt.put("network.target_mse", num(c.net.target_mse));
  pt.put("network.recog_iters", c.net.recog_iters);
  pt.put("network.closed_loop_ratio", num(c.net.closed_loop_ratio));
  pt.put("network.recog_closed_loop_ratio", num(c.net.recog_closed_loop_ratio));
  pt.put("network.grad_clip", num(c.net.grad_clip));
  pt.put("network.stop_rule", std::string(to_string(c.net.stop_rule)));
  pt.put("engine.k_cutoff", num(c.engine.k_cutoff));
  pt.put("engine.num_threshold", c.engine.num_threshold);
  pt.put("engine.similarity_threshold", num(c.engine.similarity_threshold));
  pt.put("preprocess.smooth_window", c.preprocess.smooth_window);
  pt.put("preprocess.resample_len", c.preprocess.resample_len);
  const auto& arm = c.preprocess.arm;
  std::array<double, kNumJoints> lo{}, hi{};
  for (std::size_t j = 0; j < kNumJoints; ++j) lo[j] = arm.joint_limits[j].first, hi[j] = arm.joint_limits[j].second;
  pt.put("arm.link_lengths", detail::join(arm.link_lengths));
  pt.put("arm.base", detail::join(std::array<double, 2>{arm.base.y, arm.base.z}));
  pt.put("arm.joint_min", detail::join(lo));
  pt.put("arm.joint_max", detail::join(hi));
  pt.put("arm.home", detail::join(arm.home));
  const auto& ws = c.preprocess.workspace;
  pt.put("workspace.y_range", detail::join(std::array<double, 2>{ws.y_range.first, ws.y_range.second}));
  pt.put("workspace.z_range", detail::join(std::array<double, 2>{ws.z_range.first, ws.z_range.second}));
  return pt;
}

/// Missing keys keep their defaults; unknown keys are rejected so typos do not pass silently.
inline RunConfig from_ptree(const boost::property_tree::ptree& pt) {
  for (const auto& [section, body] : pt) {
    for (const auto& [key, _] : body) {
      const std::string full = section + "." + key;
      if (std::find(std::begin(detail::kKnownKeys), std::end(detail::kKnownKeys), full) == std::end(detail::kKnownKeys))
        throw ConfigError("unknown configuration key " + full);
    }
  }
  RunConfig c;
  using detail::read;
  read(pt, "paths.corpus_dir", c.corpus_dir);
  read(pt, "paths.label_map", c.label_map);
  read(pt, "paths.output_dir", c.output_dir);
  read(pt, "run.seed", c.seed);
  read(pt, "run.jobs", c.jobs);
  read(pt, "run.reward_window", c.reward_window);
  read(pt, "network.io_dim", c.net.io_dim);
  read(pt, "network.pb_dim", c.net.pb_dim);
  read(pt, "network.context_dim", c.net.context_dim);
  read(pt, "network.hidden_dim", c.net.hidden_dim);
  read(pt, "network.learn_rate_w", c.net.learn_rate_w);
  read(pt, "network.learn_rate_pb", c.net.learn_rate_pb);
  read(pt, "network.max_epochs", c.net.max_epochs);
  read(pt, "network.target_mse", c.net.target_mse);
  read(pt, "network.recog_iters", c.net.recog_iters);
  read(pt, "network.closed_loop_ratio", c.net.closed_loop_ratio);
  read(pt, "network.recog_closed_loop_ratio", c.net.recog_closed_loop_ratio);
  read(pt, "network.grad_clip", c.net.grad_clip);
  if (auto v = pt.get_optional<std::string>("network.stop_rule")) c.net.stop_rule = parse_stop_rule(*v);
  read(pt, "engine.k_cutoff", c.engine.k_cutoff);
  read(pt, "engine.num_threshold", c.engine.num_threshold);
  read(pt, "engine.similarity_threshold", c.engine.similarity_threshold);
  read(pt, "preprocess.smooth_window", c.preprocess.smooth_window);
  read(pt, "preprocess.resample_len", c.preprocess.resample_len);
  auto& arm = c.preprocess.arm;
  if (auto v = pt.get_optional<std::string>("arm.link_lengths")) arm.link_lengths = detail::split_numbers<kNumJoints>("arm.link_lengths", *v);
  if (auto v = pt.get_optional<std::string>("arm.base")) {
    const auto b = detail::split_numbers<2>("arm.base", *v);
    arm.base = {b[0], b[1]};
  }
  if (auto v = pt.get_optional<std::string>("arm.joint_min")) {
    const auto lo = detail::split_numbers<kNumJoints>("arm.joint_min", *v);
    for (std::size_t j = 0; j < kNumJoints; ++j) arm.joint_limits[j].first = lo[j];
  }
  if (auto v = pt.get_optional<std::string>("arm.joint_max")) {
    const auto hi = detail::split_numbers<kNumJoints>("arm.joint_max", *v);
    for (std::size_t j = 0; j < kNumJoints; ++j) arm.joint_limits[j].second = hi[j];
  }
  if (auto v = pt.get_optional<std::string>("arm.home")) arm.home = detail::split_numbers<kNumJoints>("arm.home", *v);
  auto& ws = c.preprocess.workspace;
  if (auto v = pt.get_optional<std::string>("workspace.y_range")) {
    const auto r = detail::split_numbers<2>("workspace.y_range", *v);
    ws.y_range = {r[0], r[1]};
  }
  if (auto v = pt.get_optional<std::string>("workspace.z_range")) {
    const auto r = detail::split_numbers<2>("workspace.z_range", *v);
    ws.z_range = {r[0], r[1]};
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("configuration file not found: " + path.string());
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path.string(), pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  RunConfig c = from_ptree(pt);
  // Relative paths are taken relative to the file that names them.
  const auto base = std::filesystem::absolute(path).parent_path();
  for (std::string* p : {&c.corpus_dir, &c.label_map, &c.output_dir})
    if (std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  return c;
}

inline std::string config_text(const RunConfig& c) {
  std::ostringstream os;
  boost::property_tree::write_ini(os, to_ptree(c));
  return os.str();
}

inline void save_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << config_text(c);
}

}  // namespace iloci

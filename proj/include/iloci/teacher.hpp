#pragma once

// Simulated teacher: knows the true concept of every demonstration and answers
// each guess with +1 or -1.

#include <map>
#include <string>
#include <vector>

#include "errors.hpp"
#include "memory.hpp"

namespace iloci {

class TeacherOracle {
 public:
  void add_demo(const std::string& demo_id, const std::string& true_concept) { truth_[demo_id] = true_concept; }

  const std::string& true_concept(const std::string& demo_id) const {
    auto it = truth_.find(demo_id);
    if (it == truth_.end()) throw ContractError("teacher has no label for demonstration " + demo_id);
    return it->second;
  }

  /// Names a freshly created learner concept after the demonstration that caused it.
  void ground(ConceptId concept_id, const std::string& demo_id) { binding_[concept_id] = true_concept(demo_id); }

  std::string name_of(ConceptId concept_id) const {
    auto it = binding_.find(concept_id);
    return it != binding_.end() ? it->second : std::string{};
  }

  const std::map<ConceptId, std::string>& grounding() const { return binding_; }

  int feedback(const std::string& demo_id, ConceptId guessed) {
    const std::string& truth = true_concept(demo_id);
    auto it = binding_.find(guessed);
    const int r = it != binding_.end() && it->second == truth ? +1 : -1;
    signals_.push_back(r);
    return r;
  }

  const std::vector<int>& signal_log() const { return signals_; }

 private:
  std::map<std::string, std::string> truth_;
  std::map<ConceptId, std::string> binding_;
  std::vector<int> signals_;
};

/// Trailing moving average; the first window-1 values average what is available.
inline std::vector<double> smoothed_signal(const std::vector<int>& log, int window = 7) {
  if (window < 1) throw ConfigError("smoothing window must be positive");
  std::vector<double> out;
  out.reserve(log.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    sum += log[i];
    if (i >= static_cast<std::size_t>(window)) sum -= log[i - static_cast<std::size_t>(window)];
    out.push_back(sum / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window))));
  }
  return out;
}

/// Final-quartile mean minus first-quartile mean of a curve.
inline double quartile_gain(const std::vector<double>& curve) {
  const std::size_t q = curve.size() / 4;
  if (q == 0) return 0.0;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < q; ++i) first += curve[i], last += curve[curve.size() - q + i];
  return (last - first) / static_cast<double>(q);
}

}  // namespace iloci

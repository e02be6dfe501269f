// Shared test fixtures: hand-constructed instance sets with known
// statistics, and brute-force oracles kept independent of the library's
// induction path.

#ifndef WRAPUP_TESTS_FIXTURES_HPP
#define WRAPUP_TESTS_FIXTURES_HPP

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "wrapup/features.hpp"

namespace testfix {

using wrapup::DecisionCategory;
using wrapup::Instance;
using wrapup::Stage;

inline DecisionCategory binary_category() { return {Stage::Links, "", "", "test"}; }
inline DecisionCategory multiclass_category() { return {Stage::Orphans, "test", "", ""}; }

inline Instance make_instance(const std::string& label,
                              std::vector<std::pair<std::string, std::string>> features) {
  Instance inst;
  inst.category = binary_category().key();
  inst.label = label;
  for (auto& [k, v] : features) inst.features[k] = v;
  return inst;
}

/// An instance set realizing the reference tree statistics: 282 positive /
/// 539 negative overall, a stepper branch of 202/174, a uv sub-branch of
/// 27/14 whose distance=-1 leaf is purely positive.
inline std::vector<Instance> lithography_equipment_reference_instances() {
  std::vector<Instance> out;
  auto add = [&](int count, const std::string& label,
                 std::vector<std::pair<std::string, std::string>> features) {
    for (int i = 0; i < count; ++i) out.push_back(make_instance(label, features));
  };
  // stepper / uv: 27 positive (4 of them at distance -1), 14 negative
  add(4, "positive",
      {{"equipment-type", "stepper"}, {"lithography-type", "uv"}, {"distance", "-1"}});
  add(23, "positive", {{"equipment-type", "stepper"}, {"lithography-type", "uv"}});
  add(14, "negative", {{"equipment-type", "stepper"}, {"lithography-type", "uv"}});
  // stepper / e-beam: 9 positive, 141 negative (94% negative)
  add(9, "positive", {{"equipment-type", "stepper"}, {"lithography-type", "e-beam"}});
  add(141, "negative", {{"equipment-type", "stepper"}, {"lithography-type", "e-beam"}});
  // stepper / i-line: the rest of the 202/174 stepper branch
  add(166, "positive", {{"equipment-type", "stepper"}, {"lithography-type", "i-line"}});
  add(19, "negative", {{"equipment-type", "stepper"}, {"lithography-type", "i-line"}});
  // equipment types that never link
  add(200, "negative", {{"equipment-type", "etching-system"}});
  add(100, "negative", {{"equipment-type", "modular-equipment"}});
  add(65, "negative", {{"equipment-type", "radiation-source"}});
  // and one that always does, filling the remaining positives
  add(80, "positive", {{"equipment-type", "track-system"}});
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracles (no shared code with the library's induction).

inline double oracle_entropy(const std::vector<int>& counts) {
  int total = 0;
  for (int c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (int c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

inline std::string oracle_value(const Instance& inst, const std::string& feature) {
  auto it = inst.features.find(feature);
  if (it != inst.features.end()) return it->second;
  return wrapup::default_feature_value(feature);
}

inline double oracle_gain(const std::vector<Instance>& instances, const std::string& feature) {
  std::map<std::string, int> parent;
  std::map<std::string, std::map<std::string, int>> parts;
  for (const auto& inst : instances) {
    parent[inst.label] += 1;
    parts[oracle_value(inst, feature)][inst.label] += 1;
  }
  auto ent = [](const std::map<std::string, int>& counts) {
    std::vector<int> v;
    for (const auto& [k, c] : counts) v.push_back(c);
    return oracle_entropy(v);
  };
  double weighted = 0.0;
  for (const auto& [value, counts] : parts) {
    int n = 0;
    for (const auto& [k, c] : counts) n += c;
    weighted += static_cast<double>(n) / instances.size() * ent(counts);
  }
  return ent(parent) - weighted;
}

/// Replicates the documented choice rule: the maximum-gain feature with
/// name-ascending ties; if nothing gains, the first feature (by name) that
/// still takes two values; empty if the node cannot be split.
inline std::string oracle_best_feature(const std::vector<Instance>& instances) {
  std::set<std::string> candidates;
  for (const auto& inst : instances)
    for (const auto& [k, v] : inst.features) candidates.insert(k);
  std::string best;
  double best_gain = 0.0;
  for (const auto& f : candidates) {
    double g = oracle_gain(instances, f);
    if (g > best_gain) {
      best = f;
      best_gain = g;
    }
  }
  if (!best.empty()) return best;
  std::set<std::string> labels;
  for (const auto& inst : instances) labels.insert(inst.label);
  if (labels.size() < 2) return "";
  for (const auto& f : candidates) {
    std::set<std::string> values;
    for (const auto& inst : instances) values.insert(oracle_value(inst, f));
    if (values.size() >= 2) return f;
  }
  return "";
}

// ---------------------------------------------------------------------------
// Random instance sets

struct RandomSetOptions {
  int max_instances = 12;
  int max_features = 4;
  int max_values = 3;
  bool conflict_free = false;
};

inline std::vector<Instance> random_instance_set(std::mt19937_64& rng,
                                                 const RandomSetOptions& opt) {
  int n = 1 + static_cast<int>(rng() % static_cast<size_t>(opt.max_instances));
  int f = 1 + static_cast<int>(rng() % static_cast<size_t>(opt.max_features));
  std::vector<Instance> out;
  std::map<std::string, std::string> seen;  // feature signature -> label
  for (int i = 0; i < n; ++i) {
    Instance inst;
    inst.category = binary_category().key();
    std::string signature;
    for (int j = 0; j < f; ++j) {
      std::string name = "f" + std::to_string(j);
      int v = static_cast<int>(rng() % static_cast<size_t>(opt.max_values));
      if (v == 0) {
        signature += "|";
        continue;  // value 0 plays the default: omitted from the sparse map
      }
      inst.features[name] = "v" + std::to_string(v);
      signature += "|v" + std::to_string(v);
    }
    inst.label = (rng() % 2 == 0) ? "positive" : "negative";
    if (opt.conflict_free) {
      auto it = seen.find(signature);
      if (it != seen.end())
        inst.label = it->second;
      else
        seen[signature] = inst.label;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

/// Materialize defaults explicitly: the sparse/dense equivalence checks
/// build trees from both forms.
inline std::vector<Instance> densified(const std::vector<Instance>& instances) {
  std::set<std::string> names;
  for (const auto& inst : instances)
    for (const auto& [k, v] : inst.features) names.insert(k);
  std::vector<Instance> out = instances;
  for (auto& inst : out)
    for (const auto& name : names)
      if (!inst.features.count(name))
        inst.features[name] = wrapup::default_feature_value(name);
  return out;
}

}  // namespace testfix

#endif  // WRAPUP_TESTS_FIXTURES_HPP

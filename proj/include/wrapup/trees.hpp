#ifndef WRAPUP_TREES_HPP
#define WRAPUP_TREES_HPP

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrapup/features.hpp"

namespace wrapup {

using ClassCounts = std::map<std::string, int>;

inline int total_count(const ClassCounts& counts) {
  int n = 0;
  for (const auto& [cls, c] : counts) n += c;
  return n;
}

/// Shannon entropy in bits over class proportions; empty counts give 0.
inline double entropy(const ClassCounts& counts) {
  int total = total_count(counts);
  if (total == 0) return 0.0;
  double h = 0.0;
  for (const auto& [cls, c] : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

namespace detail {

inline ClassCounts count_labels(const std::vector<const Instance*>& instances) {
  ClassCounts counts;
  for (const Instance* inst : instances) counts[inst->label] += 1;
  return counts;
}

}  // namespace detail

/// Entropy of the parent minus the size-weighted entropy of the partitions
/// induced by the feature (absent key reads as the feature's default).
inline double information_gain(const std::vector<const Instance*>& instances,
                               const std::string& feature) {
  if (instances.empty()) return 0.0;
  ClassCounts parent = detail::count_labels(instances);
  std::map<std::string, ClassCounts> parts;
  for (const Instance* inst : instances) parts[inst->value_of(feature)][inst->label] += 1;
  double weighted = 0.0;
  for (const auto& [value, counts] : parts)
    weighted += static_cast<double>(total_count(counts)) / instances.size() * entropy(counts);
  return entropy(parent) - weighted;
}

inline double information_gain(const std::vector<Instance>& instances,
                               const std::string& feature) {
  std::vector<const Instance*> ptrs;
  ptrs.reserve(instances.size());
  for (const auto& i : instances) ptrs.push_back(&i);
  return information_gain(ptrs, feature);
}

// ---------------------------------------------------------------------------
// Tree structure

struct TreeNode {
  ClassCounts counts;
  std::string split_feature;  // empty at leaves
  std::map<std::string, TreeNode> branches;
  std::string default_branch;  // branch value with the largest subtree

  bool leaf() const { return split_feature.empty(); }
};

struct DecisionTree {
  DecisionCategory category;
  TreeNode root;
  double threshold = 0.5;  // binary categories only
  int min_partition = 2;
  std::vector<std::string> classes;  // sorted
};

namespace detail {

inline TreeNode build_node(const std::vector<const Instance*>& instances, int min_partition) {
  TreeNode node;
  node.counts = count_labels(instances);
  int total = total_count(node.counts);

  bool pure = false;
  for (const auto& [cls, c] : node.counts)
    if (c == total) pure = true;
  if (pure || total < min_partition) return node;

  // Sparse induction: only features that actually occur at this node are
  // candidates.
  std::set<std::string> candidates;
  for (const Instance* inst : instances)
    for (const auto& [k, v] : inst->features) candidates.insert(k);

  std::string best_feature;
  double best_gain = 0.0;
  for (const auto& f : candidates) {
    double g = information_gain(instances, f);
    if (g > best_gain) {
      best_gain = g;
      best_feature = f;
    }
    // equal gain keeps the earlier (name-ascending) feature
  }

  if (best_feature.empty()) {
    // No positive gain but the node is impure. Split on the first feature
    // that still distinguishes instances; stopping here would leave
    // training instances with identical paths but different labels
    // unrecoverable (XOR-shaped data).
    for (const auto& f : candidates) {
      std::set<std::string> values;
      for (const Instance* inst : instances) values.insert(inst->value_of(f));
      if (values.size() >= 2) {
        best_feature = f;
        break;
      }
    }
    if (best_feature.empty()) return node;  // truly indistinguishable
  }

  std::map<std::string, std::vector<const Instance*>> parts;
  for (const Instance* inst : instances) parts[inst->value_of(best_feature)].push_back(inst);
  if (parts.size() < 2) return node;

  node.split_feature = best_feature;
  int best_total = -1;
  for (const auto& [value, part] : parts) {
    node.branches.emplace(value, build_node(part, min_partition));
    int part_total = static_cast<int>(part.size());
    if (part_total > best_total) {
      best_total = part_total;
      node.default_branch = value;
    }
  }
  return node;
}

}  // namespace detail

/// Recursive ID3 with pre-pruning: stop on purity, on partitions smaller
/// than min_partition, or when nothing distinguishes the instances.
inline TreeNode build_tree(const std::vector<const Instance*>& instances, int min_partition) {
  if (instances.empty()) throw ValidationError("build_tree: empty instance list");
  return detail::build_node(instances, min_partition);
}

inline TreeNode build_tree(const std::vector<Instance>& instances, int min_partition) {
  std::vector<const Instance*> ptrs;
  ptrs.reserve(instances.size());
  for (const auto& i : instances) ptrs.push_back(&i);
  return build_tree(ptrs, min_partition);
}

struct Classification {
  std::string label;
  double confidence = 0.0;
};

/// Probe the tree with the instance's feature values. Unseen values follow
/// the most-populated branch. Binary trees apply the probe threshold to the
/// positive fraction of the halting node; multi-class trees take the
/// majority class.
inline Classification classify(const DecisionTree& tree, const Instance& inst) {
  if (!inst.category.empty() && inst.category != tree.category.key())
    throw ValidationError("classify: instance category " + inst.category +
                          " does not match tree " + tree.category.key());
  const TreeNode* node = &tree.root;
  while (!node->leaf()) {
    std::string value = inst.value_of(node->split_feature);
    auto it = node->branches.find(value);
    if (it == node->branches.end()) it = node->branches.find(node->default_branch);
    if (it == node->branches.end()) break;
    node = &it->second;
  }
  int total = total_count(node->counts);
  if (tree.category.binary()) {
    auto pos_it = node->counts.find("positive");
    int pos = pos_it == node->counts.end() ? 0 : pos_it->second;
    double frac = total == 0 ? 0.0 : static_cast<double>(pos) / total;
    return {frac >= tree.threshold ? "positive" : "negative", frac};
  }
  std::string best;
  int best_count = -1;
  for (const auto& [cls, c] : node->counts) {
    if (c > best_count) {
      best = cls;
      best_count = c;
    }
  }
  double frac = total == 0 ? 0.0 : static_cast<double>(best_count) / total;
  return {best, frac};
}

// ---------------------------------------------------------------------------
// Cross-validated parameter selection

inline const std::vector<int>& pruning_grid() {
  static const std::vector<int> grid = {1, 2, 5, 10, 20};
  return grid;
}

inline const std::vector<double>& threshold_grid() {
  static const std::vector<double> grid = {0.3, 0.4, 0.5, 0.6, 0.7};
  return grid;
}

struct ParamChoice {
  int min_partition = 2;
  double threshold = 0.5;
};

struct GridCell {
  int min_partition;
  double threshold;
  double mean_score;
};

/// Ten-fold cross-validation over the pruning/threshold grid. The fold
/// metric is F1 of the positive class for binary categories and accuracy
/// otherwise. Ties prefer heavier pruning, then the lower threshold.
inline ParamChoice select_params(const std::vector<Instance>& instances,
                                 const DecisionCategory& category, std::uint64_t seed,
                                 std::vector<GridCell>* grid_out = nullptr) {
  if (instances.size() < 10) return {2, 0.5};

  std::vector<size_t> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  util::deterministic_shuffle(order, rng);

  const int kFolds = 10;
  std::vector<double> thresholds =
      category.binary() ? threshold_grid() : std::vector<double>{0.5};

  std::map<std::pair<int, double>, double> score_sum;
  for (int mp : pruning_grid()) {
    for (int fold = 0; fold < kFolds; ++fold) {
      std::vector<const Instance*> train;
      std::vector<const Instance*> test;
      for (size_t pos = 0; pos < order.size(); ++pos) {
        if (static_cast<int>(pos % kFolds) == fold)
          test.push_back(&instances[order[pos]]);
        else
          train.push_back(&instances[order[pos]]);
      }
      if (train.empty() || test.empty()) continue;
      DecisionTree tree;
      tree.category = category;
      tree.min_partition = mp;
      tree.root = build_tree(train, mp);
      for (double th : thresholds) {
        tree.threshold = th;
        double metric = 0.0;
        if (category.binary()) {
          int tp = 0, fp = 0, fn = 0;
          for (const Instance* inst : test) {
            bool predicted = classify(tree, *inst).label == "positive";
            bool actual = inst->label == "positive";
            if (predicted && actual) ++tp;
            if (predicted && !actual) ++fp;
            if (!predicted && actual) ++fn;
          }
          metric = (2 * tp + fp + fn) == 0 ? 0.0
                                           : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        } else {
          int correct = 0;
          for (const Instance* inst : test)
            if (classify(tree, *inst).label == inst->label) ++correct;
          metric = static_cast<double>(correct) / test.size();
        }
        score_sum[{mp, th}] += metric;
      }
    }
  }

  ParamChoice best{pruning_grid().front(), thresholds.front()};
  double best_score = -1.0;
  for (int mp : pruning_grid()) {
    for (double th : thresholds) {
      double mean = score_sum[{mp, th}] / kFolds;
      if (grid_out != nullptr) grid_out->push_back({mp, th, mean});
      bool better = mean > best_score;
      bool tie = mean == best_score;
      if (better || (tie && mp > best.min_partition) ||
          (tie && mp == best.min_partition && th < best.threshold)) {
        best = {mp, th};
        best_score = mean;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Tree and model serialization

namespace detail {

inline std::string escape_class(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == ',' || c == '=' || c == '%' || c == '\n') {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "%%%02X", static_cast<unsigned char>(c));
      out += buf;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_class(const std::string& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out.push_back(static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

inline std::string render_counts(const ClassCounts& counts, bool binary) {
  if (binary) {
    auto get = [&](const char* k) {
      auto it = counts.find(k);
      return it == counts.end() ? 0 : it->second;
    };
    return std::to_string(get("positive")) + "/" + std::to_string(get("negative"));
  }
  std::string out;
  for (const auto& [cls, c] : counts) {
    if (!out.empty()) out += ",";
    out += escape_class(cls) + "=" + std::to_string(c);
  }
  return out;
}

inline ClassCounts parse_counts(const std::string& text) {
  ClassCounts counts;
  bool binary = true;
  for (char c : text)
    if (!std::isdigit(static_cast<unsigned char>(c)) && c != '/') binary = false;
  if (binary && text.find('/') != std::string::npos) {
    auto parts = util::split(text, '/');
    if (parts.size() != 2) throw ValidationError("bad counts: " + text);
    int pos = std::stoi(parts[0]);
    int neg = std::stoi(parts[1]);
    if (pos > 0) counts["positive"] = pos;
    if (neg > 0) counts["negative"] = neg;
    if (pos == 0 && neg == 0) counts["negative"] = 0;
    return counts;
  }
  for (const auto& chunk : util::split(text, ',')) {
    auto eq = chunk.rfind('=');
    if (eq == std::string::npos) throw ValidationError("bad counts: " + text);
    counts[unescape_class(chunk.substr(0, eq))] = std::stoi(chunk.substr(eq + 1));
  }
  return counts;
}

inline void dump_node(const TreeNode& node, bool binary, int depth, const std::string& head,
                      std::string& out) {
  out.append(static_cast<size_t>(depth) * 2, ' ');
  out += head + " [" + render_counts(node.counts, binary) + "]";
  if (!node.leaf()) out += " (feature=" + node.split_feature + ")";
  out += "\n";
  for (const auto& [value, child] : node.branches)
    dump_node(child, binary, depth + 1, "value=" + value, out);
}

inline int subtree_total(const TreeNode& node) { return total_count(node.counts); }

inline void fix_default_branches(TreeNode& node) {
  if (node.leaf()) return;
  int best = -1;
  for (auto& [value, child] : node.branches) {
    fix_default_branches(child);
    int t = subtree_total(child);
    if (t > best) {
      best = t;
      node.default_branch = value;
    }
  }
}

}  // namespace detail

/// Human-readable indented dump, one node per line. Round-trips through
/// parse_tree; the default branch is recomputed on parse (largest subtree,
/// smallest value on ties), so it needs no marker.
inline std::string serialize_tree(const DecisionTree& tree) {
  std::string out;
  detail::dump_node(tree.root, tree.category.binary(), 0, "root", out);
  return out;
}

inline TreeNode parse_tree_text(const std::string& text) {
  struct Line {
    int depth;
    bool is_root;
    std::string value;
    ClassCounts counts;
    std::string feature;
  };
  std::vector<Line> lines;
  for (const auto& raw : util::split(text, '\n')) {
    if (util::trim(raw).empty()) continue;
    size_t indent = 0;
    while (indent < raw.size() && raw[indent] == ' ') ++indent;
    if (indent % 2 != 0) throw ValidationError("tree dump: odd indentation");
    std::string body = raw.substr(indent);
    Line line;
    line.depth = static_cast<int>(indent / 2);
    if (body.size() > 1 && body.back() == ')') {
      auto fpos = body.rfind(" (feature=");
      if (fpos == std::string::npos) throw ValidationError("tree dump: bad line: " + body);
      line.feature = body.substr(fpos + 10, body.size() - fpos - 11);
      body = body.substr(0, fpos);
    }
    if (body.empty() || body.back() != ']') throw ValidationError("tree dump: bad line: " + body);
    auto bpos = body.rfind(" [");
    if (bpos == std::string::npos) throw ValidationError("tree dump: bad line: " + body);
    line.counts = detail::parse_counts(body.substr(bpos + 2, body.size() - bpos - 3));
    std::string head = body.substr(0, bpos);
    if (head == "root") {
      line.is_root = true;
    } else if (head.rfind("value=", 0) == 0) {
      line.is_root = false;
      line.value = head.substr(6);
    } else {
      throw ValidationError("tree dump: bad node head: " + head);
    }
    lines.push_back(std::move(line));
  }
  if (lines.empty() || lines[0].depth != 0 || !lines[0].is_root)
    throw ValidationError("tree dump: missing root");
  for (size_t i = 1; i < lines.size(); ++i)
    if (lines[i].is_root) throw ValidationError("tree dump: multiple roots");

  TreeNode root;
  std::vector<TreeNode*> stack{&root};
  root.counts = lines[0].counts;
  root.split_feature = lines[0].feature;
  for (size_t i = 1; i < lines.size(); ++i) {
    const Line& line = lines[i];
    if (line.depth < 1 || line.depth > static_cast<int>(stack.size()))
      throw ValidationError("tree dump: bad nesting");
    stack.resize(static_cast<size_t>(line.depth));
    TreeNode* parent = stack.back();
    TreeNode child;
    child.counts = line.counts;
    child.split_feature = line.feature;
    auto [it, inserted] = parent->branches.emplace(line.value, std::move(child));
    if (!inserted) throw ValidationError("tree dump: duplicate branch value " + line.value);
    stack.push_back(&it->second);
  }
  detail::fix_default_branches(root);
  return root;
}

// ---------------------------------------------------------------------------
// Trained model

inline DecisionCategory parse_category_key(const std::string& key) {
  auto parts = util::split(key, ':');
  if (parts.empty()) throw ValidationError("empty category key");
  auto stage = stage_from_name(parts[0]);
  if (!stage) throw ValidationError("unknown stage in category key " + key);
  DecisionCategory c;
  c.stage = *stage;
  switch (*stage) {
    case Stage::SlotFilter:
    case Stage::SlotDefaults:
      if (parts.size() != 3) throw ValidationError("bad category key " + key);
      c.type_name = parts[1];
      c.slot_name = parts[2];
      break;
    case Stage::SlotMerge:
    case Stage::Orphans:
      if (parts.size() != 2) throw ValidationError("bad category key " + key);
      c.type_name = parts[1];
      break;
    case Stage::Links:
    case Stage::LinksMerge:
      if (parts.size() != 2) throw ValidationError("bad category key " + key);
      c.link_name = parts[1];
      break;
  }
  return c;
}

/// One tree per category that saw at least one training instance. Immutable
/// once built; categories with no tree classify as negative / none.
struct TrainedModel {
  std::string schema_fingerprint;
  int corpus_size = 0;
  std::uint64_t seed = 0;
  std::map<std::string, DecisionTree> trees;

  const DecisionTree* tree_for(const std::string& category_key) const {
    auto it = trees.find(category_key);
    return it == trees.end() ? nullptr : &it->second;
  }
};

inline std::string save_model(const TrainedModel& model) {
  nlohmann::json j;
  j["format"] = "wrapup-model-v1";
  j["schema_fingerprint"] = model.schema_fingerprint;
  j["metadata"] = {{"corpus_size", model.corpus_size}, {"seed", model.seed}};
  j["trees"] = nlohmann::json::object();
  for (const auto& [key, tree] : model.trees) {
    nlohmann::json tj;
    tj["min_partition"] = tree.min_partition;
    tj["threshold"] = tree.threshold;
    tj["classes"] = tree.classes;
    tj["tree"] = serialize_tree(tree);
    j["trees"][key] = tj;
  }
  return j.dump(2) + "\n";
}

inline TrainedModel load_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
  if (!j.contains("format") || j["format"] != "wrapup-model-v1")
    throw ValidationError("not a wrapup model file");
  TrainedModel model;
  model.schema_fingerprint = j["schema_fingerprint"].get<std::string>();
  model.corpus_size = j["metadata"]["corpus_size"].get<int>();
  model.seed = j["metadata"]["seed"].get<std::uint64_t>();
  for (const auto& [key, tj] : j["trees"].items()) {
    DecisionTree tree;
    tree.category = parse_category_key(key);
    tree.min_partition = tj["min_partition"].get<int>();
    tree.threshold = tj["threshold"].get<double>();
    for (const auto& c : tj["classes"]) tree.classes.push_back(c.get<std::string>());
    tree.root = parse_tree_text(tj["tree"].get<std::string>());
    model.trees.emplace(key, std::move(tree));
  }
  return model;
}

}  // namespace wrapup

#endif  // WRAPUP_TREES_HPP

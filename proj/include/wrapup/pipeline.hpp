#ifndef WRAPUP_PIPELINE_HPP
#define WRAPUP_PIPELINE_HPP

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "wrapup/corpus.hpp"
#include "wrapup/features.hpp"
#include "wrapup/trees.hpp"

namespace wrapup {

struct ProvenanceEntry {
  std::string stage;
  std::string category;
  std::string inputs;   // comma-joined token ids
  std::string verdict;  // classification label or applied action
  double confidence = 0.0;
};

inline std::string render_provenance(const std::vector<ProvenanceEntry>& log) {
  std::string out;
  for (const auto& e : log)
    out += e.stage + "\t" + e.category + "\t" + e.inputs + "\t" + e.verdict + "\t" +
           util::format_fraction(e.confidence, 4) + "\n";
  return out;
}

/// Working state threaded through the six stages.
struct PipelineState {
  std::string doc_id;
  std::vector<Token> tokens;
  std::vector<ProvenanceEntry> log;
  int next_relation = 1;
  int next_inferred = 1;
  // (from id, to id, relation type) -> relation token id, so several role
  // decisions on one pair share a relation object.
  std::map<std::tuple<std::string, std::string, std::string>, std::string> relation_index;

  Token* find(const std::string& id) {
    for (auto& t : tokens)
      if (t.id == id) return &t;
    return nullptr;
  }

  bool id_taken(const std::string& id) const {
    for (const auto& t : tokens)
      if (t.id == id) return true;
    return false;
  }

  std::string fresh_id(const std::string& prefix, int& counter) {
    for (;;) {
      std::string id = prefix + std::to_string(counter++);
      if (!id_taken(id)) return id;
    }
  }
};

/// How stage machinery reaches the decision trees. Inference classifies
/// against a TrainedModel; training substitutes key-derived labels here so
/// the exact same stage code produces teacher-forced states.
struct PipelineHooks {
  std::function<bool(const DecisionCategory&)> has_tree;
  std::function<Classification(const DecisionCategory&, const Instance&)> decide;
  // Used for the restricted links/links-merge pass of the orphans stage;
  // defaults to `decide` when unset.
  std::function<Classification(const DecisionCategory&, const Instance&)> decide_rerun;
};

inline PipelineHooks model_hooks(const TrainedModel& model) {
  PipelineHooks hooks;
  hooks.has_tree = [&model](const DecisionCategory& c) { return model.tree_for(c.key()) != nullptr; };
  hooks.decide = [&model](const DecisionCategory& c, const Instance& inst) {
    return classify(*model.tree_for(c.key()), inst);
  };
  return hooks;
}

namespace detail {

struct UnionFind {
  std::map<std::string, std::string> parent;

  const std::string& find(const std::string& x) {
    auto it = parent.find(x);
    if (it == parent.end()) {
      parent[x] = x;
      return parent.find(x)->second;
    }
    if (it->second == x) return it->second;
    std::string root = find(it->second);
    parent[x] = root;
    return parent.find(x)->second;
  }

  void unite(const std::string& a, const std::string& b) {
    std::string ra = find(a), rb = find(b);
    if (ra == rb) return;
    // smaller id becomes the root, keeping merges id-canonical
    if (rb < ra) std::swap(ra, rb);
    parent[rb] = ra;
  }
};

inline std::vector<std::string> sorted_ids(const std::vector<Token>& tokens) {
  std::vector<std::string> ids;
  for (const auto& t : tokens) ids.push_back(t.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline void log_decision(PipelineState& state, Stage stage, const DecisionCategory& category,
                         const std::vector<std::string>& inputs, const Classification& c) {
  state.log.push_back({stage_name(stage), category.key(),
                       util::join(inputs.begin(), inputs.end(), ","), c.label, c.confidence});
}

inline void log_action(PipelineState& state, Stage stage, const std::string& category,
                       const std::string& inputs, const std::string& action) {
  state.log.push_back({stage_name(stage), category, inputs, action, 1.0});
}

/// Drop tokens by id and strip links that pointed at them.
inline void remove_tokens(PipelineState& state, const std::set<std::string>& ids) {
  if (ids.empty()) return;
  std::vector<Token> kept;
  for (auto& t : state.tokens)
    if (!ids.count(t.id)) kept.push_back(std::move(t));
  for (auto& t : kept) {
    std::vector<Link> links;
    for (const auto& l : t.links)
      if (!ids.count(l.target)) links.push_back(l);
    t.links = std::move(links);
  }
  state.tokens = std::move(kept);
}

inline void sort_dedup_links(Token& t) {
  std::sort(t.links.begin(), t.links.end());
  t.links.erase(std::unique(t.links.begin(), t.links.end()), t.links.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1: slot filter

inline void stage_slot_filter(PipelineState& state, const PipelineHooks& hooks,
                              const DomainSchema& schema) {
  std::set<std::string> to_drop;
  for (const auto& id : detail::sorted_ids(state.tokens)) {
    Token* token = state.find(id);
    std::vector<std::string> slot_names;
    for (const auto& [slot, value] : token->slots) slot_names.push_back(slot);
    bool removed_any = false;
    for (const auto& slot : slot_names) {
      DecisionCategory cat{Stage::SlotFilter, token->type, slot, ""};
      if (!hooks.has_tree(cat)) continue;
      Instance inst{cat.key(), {token->id}, encode_single(*token, schema), ""};
      Classification c = hooks.decide(cat, inst);
      detail::log_decision(state, Stage::SlotFilter, cat, inst.token_ids, c);
      if (c.label == "negative") {
        token->slots.erase(slot);
        removed_any = true;
        detail::log_action(state, Stage::SlotFilter, cat.key(), token->id + "," + slot,
                           "discard-slot");
      }
    }
    if (removed_any && token->slots.empty()) {
      to_drop.insert(token->id);
      detail::log_action(state, Stage::SlotFilter, "slot-filter:" + token->type, token->id,
                         "discard-token");
    }
  }
  detail::remove_tokens(state, to_drop);
}

// ---------------------------------------------------------------------------
// Stage 2: slot merge

namespace detail {

/// Canonically merge each union-find component: the smallest id survives;
/// slot conflicts resolve to the smallest-id member holding a value, so the
/// outcome is independent of pair enumeration order.
inline void apply_merges(PipelineState& state, UnionFind& uf, Stage stage) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& t : state.tokens) groups[uf.find(t.id)].push_back(t.id);

  std::set<std::string> to_remove;
  std::map<std::string, std::string> replacement;
  for (auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end());
    Token merged = *state.find(members[0]);
    for (size_t i = 1; i < members.size(); ++i) {
      const Token& other = *state.find(members[i]);
      for (const auto& [slot, value] : other.slots) {
        auto existing = merged.slots.find(slot);
        if (existing == merged.slots.end()) {
          merged.slots[slot] = value;
        } else if (util::normalize_value(existing->second) != util::normalize_value(value)) {
          log_action(state, stage, std::string(stage_name(stage)) + ":" + merged.type,
                     merged.id + "," + slot, "slot-conflict");
        }
      }
      merged.references.insert(merged.references.end(), other.references.begin(),
                               other.references.end());
      merged.links.insert(merged.links.end(), other.links.begin(), other.links.end());
      merged.inherited_patterns.insert(merged.inherited_patterns.end(),
                                       other.inherited_patterns.begin(),
                                       other.inherited_patterns.end());
      to_remove.insert(members[i]);
      replacement[members[i]] = members[0];
      log_action(state, stage, std::string(stage_name(stage)) + ":" + merged.type,
                 members[0] + "," + members[i], "merge");
    }
    std::sort(merged.references.begin(), merged.references.end());
    merged.references.erase(std::unique(merged.references.begin(), merged.references.end()),
                            merged.references.end());
    sort_dedup_links(merged);
    std::sort(merged.inherited_patterns.begin(), merged.inherited_patterns.end());
    merged.inherited_patterns.erase(
        std::unique(merged.inherited_patterns.begin(), merged.inherited_patterns.end()),
        merged.inherited_patterns.end());
    *state.find(members[0]) = std::move(merged);
  }

  std::vector<Token> kept;
  for (auto& t : state.tokens)
    if (!to_remove.count(t.id)) kept.push_back(std::move(t));
  state.tokens = std::move(kept);
  for (auto& t : state.tokens) {
    bool changed = false;
    for (auto& l : t.links) {
      auto it = replacement.find(l.target);
      if (it != replacement.end()) {
        l.target = it->second;
        changed = true;
      }
    }
    if (changed) sort_dedup_links(t);
  }
}

}  // namespace detail

inline void stage_slot_merge(PipelineState& state, const PipelineHooks& hooks,
                             const DomainSchema& schema) {
  detail::UnionFind uf;
  std::set<std::string> types;
  for (const auto& t : state.tokens) types.insert(t.type);
  for (const auto& type : types) {
    DecisionCategory cat{Stage::SlotMerge, type, "", ""};
    if (!hooks.has_tree(cat)) continue;
    for (auto& inst : enumerate_instances(state.tokens, cat, schema)) {
      Classification c = hooks.decide(cat, inst);
      detail::log_decision(state, Stage::SlotMerge, cat, inst.token_ids, c);
      if (c.label == "positive") uf.unite(inst.token_ids[0], inst.token_ids[1]);
    }
  }
  detail::apply_merges(state, uf, Stage::SlotMerge);
}

// ---------------------------------------------------------------------------
// Stage 3: links

namespace detail {

/// Apply one positive link decision. Direct links land on the from-token.
/// Relation-forming links materialize (or reuse) a relation token that
/// carries the role link and, when the schema declares one, a subject link
/// back to the from-token.
inline void apply_link_decision(PipelineState& state, const DomainSchema& schema,
                                const LinkTypeDef& link, const std::string& from_id,
                                const std::string& to_id, Stage stage,
                                std::set<std::string>* touched) {
  if (link.creates_relation.empty()) {
    Token* from = state.find(from_id);
    from->add_link(link.name, to_id);
    if (touched != nullptr) touched->insert(from_id);
    log_action(state, stage, "links:" + link.name, from_id + "," + to_id, "link");
    return;
  }
  auto key = std::make_tuple(from_id, to_id, link.creates_relation);
  auto it = state.relation_index.find(key);
  Token* relation = nullptr;
  if (it != state.relation_index.end()) relation = state.find(it->second);
  if (relation == nullptr) {
    Token fresh;
    fresh.id = state.fresh_id("relation-", state.next_relation);
    fresh.type = link.creates_relation;
    state.tokens.push_back(std::move(fresh));
    relation = &state.tokens.back();
    state.relation_index[key] = relation->id;
    log_action(state, stage, "links:" + link.name, from_id + "," + to_id + "," + relation->id,
               "relate");
  }
  relation->add_link(link.name, to_id);
  const LinkTypeDef* subject = schema.subject_link(link);
  if (subject != nullptr) relation->add_link(subject->name, from_id);
  if (touched != nullptr) touched->insert(relation->id);
  log_action(state, stage, "links:" + link.name, from_id + "," + to_id, "link");
}

/// One inheritance hop: every token gains the (pattern, sentence) pairs of
/// the tokens it points to, computed from a snapshot so the update is
/// simultaneous. Pairs the token already owns are not duplicated.
inline void inheritance_hop(PipelineState& state, const std::set<std::string>* restrict_to) {
  std::map<std::string, std::vector<InheritedPattern>> gains;
  std::map<std::string, const Token*> by_id;
  for (const auto& t : state.tokens) by_id[t.id] = &t;
  for (const auto& t : state.tokens) {
    if (restrict_to != nullptr && !restrict_to->count(t.id)) continue;
    for (const auto& l : t.links) {
      auto it = by_id.find(l.target);
      if (it == by_id.end()) continue;
      const Token* target = it->second;
      for (const auto& pair : target->own_pattern_pairs()) gains[t.id].push_back(pair);
      for (const auto& pair : target->inherited_patterns) gains[t.id].push_back(pair);
    }
  }
  for (auto& t : state.tokens) {
    auto it = gains.find(t.id);
    if (it == gains.end()) continue;
    std::set<InheritedPattern> merged(t.inherited_patterns.begin(), t.inherited_patterns.end());
    std::set<InheritedPattern> own;
    for (const auto& pair : t.own_pattern_pairs()) own.insert(pair);
    for (const auto& pair : it->second)
      if (!own.count(pair)) merged.insert(pair);
    t.inherited_patterns.assign(merged.begin(), merged.end());
  }
}

inline std::vector<std::vector<LinkTypeDef>> link_level_groups(const DomainSchema& schema) {
  std::map<std::string, int> memo;
  std::vector<std::vector<LinkTypeDef>> groups;
  int last_depth = -1;
  for (const auto& link : link_levels(schema)) {
    int depth = type_depth(schema, link.to_type, memo);
    if (depth != last_depth) {
      groups.emplace_back();
      last_depth = depth;
    }
    groups.back().push_back(link);
  }
  return groups;
}

}  // namespace detail

/// Bottom-up link decisions. After each level completes, linked tokens
/// inherit their targets' patterns so higher-level decisions see the
/// accumulated evidence. When restrict_to is given (orphan stage re-run),
/// only pairs involving those tokens are considered.
inline void stage_links(PipelineState& state, const PipelineHooks& hooks,
                        const DomainSchema& schema,
                        const std::set<std::string>* restrict_to = nullptr) {
  bool rerun = restrict_to != nullptr;
  auto decide = rerun && hooks.decide_rerun ? hooks.decide_rerun : hooks.decide;
  for (const auto& group : detail::link_level_groups(schema)) {
    std::set<std::string> touched;
    for (const auto& link : group) {
      DecisionCategory cat{Stage::Links, "", "", link.name};
      if (!hooks.has_tree(cat)) continue;
      for (auto& inst : enumerate_instances(state.tokens, cat, schema)) {
        if (rerun && !restrict_to->count(inst.token_ids[0]) &&
            !restrict_to->count(inst.token_ids[1]))
          continue;
        Classification c = decide(cat, inst);
        detail::log_decision(state, Stage::Links, cat, inst.token_ids, c);
        if (c.label == "positive")
          detail::apply_link_decision(state, schema, link, inst.token_ids[0], inst.token_ids[1],
                                      Stage::Links, rerun ? &touched : nullptr);
      }
    }
    if (rerun) {
      touched.insert(restrict_to->begin(), restrict_to->end());
      detail::inheritance_hop(state, &touched);
    } else {
      detail::inheritance_hop(state, nullptr);
    }
  }
}

// ---------------------------------------------------------------------------
// Stage 4: links merge

namespace detail {

struct SplitPlan {
  std::string link_name;
  std::vector<std::vector<std::string>> components;  // child ids, each sorted
};

/// Split a parent into one copy per combination of link components. Links of
/// split roles are divided by component; everything else is carried by every
/// copy. Inbound links are retargeted to all copies. Components name
/// stage-input child ids; resolved_copies maps children that were split
/// earlier in the stage onto their copies.
inline void apply_split(PipelineState& state, const std::string& parent_id,
                        const std::vector<SplitPlan>& plans, Stage stage,
                        const std::map<std::string, std::vector<std::string>>& resolved_copies) {
  Token parent = *state.find(parent_id);
  auto in_component = [&](const std::vector<std::string>& component,
                          const std::string& target) {
    if (std::find(component.begin(), component.end(), target) != component.end()) return true;
    for (const auto& member : component) {
      auto it = resolved_copies.find(member);
      if (it != resolved_copies.end() &&
          std::find(it->second.begin(), it->second.end(), target) != it->second.end())
        return true;
    }
    return false;
  };

  std::vector<std::map<std::string, std::vector<std::string>>> combos{{}};
  for (const auto& plan : plans) {
    std::vector<std::map<std::string, std::vector<std::string>>> next;
    for (const auto& combo : combos) {
      for (const auto& component : plan.components) {
        auto extended = combo;
        extended[plan.link_name] = component;
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }

  std::set<std::string> split_roles;
  for (const auto& plan : plans) split_roles.insert(plan.link_name);

  std::vector<std::string> copy_ids;
  int suffix = 1;
  for (const auto& combo : combos) {
    Token copy = parent;
    std::string id;
    do {
      id = parent.id + "-" + std::to_string(suffix++);
    } while (state.id_taken(id));
    copy.id = id;
    copy.links.clear();
    for (const auto& l : parent.links) {
      if (!split_roles.count(l.role)) {
        copy.links.push_back(l);
        continue;
      }
      if (in_component(combo.at(l.role), l.target)) copy.links.push_back(l);
    }
    sort_dedup_links(copy);
    copy_ids.push_back(copy.id);
    state.tokens.push_back(std::move(copy));
  }

  for (auto& t : state.tokens) {
    std::vector<Link> extra;
    bool changed = false;
    for (auto& l : t.links) {
      if (l.target != parent_id) continue;
      changed = true;
      l.target = copy_ids[0];
      for (size_t i = 1; i < copy_ids.size(); ++i) extra.push_back({l.role, copy_ids[i]});
    }
    if (changed) {
      t.links.insert(t.links.end(), extra.begin(), extra.end());
      sort_dedup_links(t);
    }
  }

  std::set<std::string> removal{parent_id};
  std::vector<Token> kept;
  for (auto& t : state.tokens)
    if (!removal.count(t.id)) kept.push_back(std::move(t));
  state.tokens = std::move(kept);

  log_action(state, stage, "links-merge", parent_id + "->" +
             util::join(copy_ids.begin(), copy_ids.end(), ","), "split");
}

}  // namespace detail

/// For each parent with several same-role children, pairwise merge/split
/// verdicts define connected components of children; more than one component
/// splits the parent into per-component copies. A missing tree keeps the
/// parent whole.
inline void stage_links_merge(PipelineState& state, const PipelineHooks& hooks,
                              const DomainSchema& schema,
                              const std::set<std::string>* restrict_to = nullptr) {
  bool rerun = restrict_to != nullptr;
  auto decide = rerun && hooks.decide_rerun ? hooks.decide_rerun : hooks.decide;

  // All verdicts are computed against the stage-input state before any
  // split mutates it.
  std::map<std::string, std::vector<detail::SplitPlan>> plans;  // parent id -> plans
  for (const auto& link : link_levels(schema)) {
    DecisionCategory cat{Stage::LinksMerge, "", "", link.name};
    if (!hooks.has_tree(cat)) continue;
    auto instances = enumerate_instances(state.tokens, cat, schema);
    std::map<std::string, detail::UnionFind> per_parent;
    std::map<std::string, std::set<std::string>> children_of;
    for (auto& inst : instances) {
      if (rerun && !restrict_to->count(inst.token_ids[0]) &&
          !restrict_to->count(inst.token_ids[1]) && !restrict_to->count(inst.token_ids[2]))
        continue;
      Classification c = decide(cat, inst);
      detail::log_decision(state, Stage::LinksMerge, cat, inst.token_ids, c);
      auto& uf = per_parent[inst.token_ids[0]];
      children_of[inst.token_ids[0]].insert(inst.token_ids[1]);
      children_of[inst.token_ids[0]].insert(inst.token_ids[2]);
      if (c.label == "positive") uf.unite(inst.token_ids[1], inst.token_ids[2]);
    }
    for (auto& [parent_id, uf] : per_parent) {
      std::map<std::string, std::vector<std::string>> components;
      for (const auto& child : children_of[parent_id]) components[uf.find(child)].push_back(child);
      if (components.size() < 2) continue;
      detail::SplitPlan plan;
      plan.link_name = link.name;
      for (auto& [root, members] : components) {
        std::sort(members.begin(), members.end());
        plan.components.push_back(members);
      }
      // components ordered by smallest child id
      std::sort(plan.components.begin(), plan.components.end());
      plans[parent_id].push_back(std::move(plan));
    }
  }

  std::map<std::string, std::vector<std::string>> resolved_copies;
  for (const auto& parent_id : detail::sorted_ids(state.tokens)) {
    auto it = plans.find(parent_id);
    if (it == plans.end()) continue;
    size_t before = state.log.size();
    detail::apply_split(state, parent_id, it->second, Stage::LinksMerge, resolved_copies);
    for (size_t i = before; i < state.log.size(); ++i) {
      if (state.log[i].verdict != "split") continue;
      auto arrow = state.log[i].inputs.find("->");
      resolved_copies[state.log[i].inputs.substr(0, arrow)] =
          util::split(state.log[i].inputs.substr(arrow + 2), ',');
    }
  }
}

// ---------------------------------------------------------------------------
// Stage 5: orphans

/// Tokens of linkable types that nothing points to may gain an inferred
/// parent of the type the orphans tree names. The new parent is then tied
/// into the structure by re-running links and links-merge decisions
/// restricted to it.
inline void stage_orphans(PipelineState& state, const PipelineHooks& hooks,
                          const DomainSchema& schema) {
  auto inbound = detail::inbound_link_counts(state.tokens);
  std::vector<std::pair<std::string, std::string>> orphans;  // (type, id)
  for (const auto& child_type : schema.linkable_child_types())
    for (const Token* t : detail::tokens_of_type_sorted(state.tokens, child_type))
      if (inbound[t->id] == 0) orphans.push_back({child_type, t->id});

  for (const auto& [type, orphan_id] : orphans) {
    DecisionCategory cat{Stage::Orphans, type, "", ""};
    if (!hooks.has_tree(cat)) continue;
    Token* orphan = state.find(orphan_id);
    if (orphan == nullptr) continue;
    // an earlier orphan's re-run may have linked this one already
    bool still_orphan = true;
    for (const auto& t : state.tokens)
      for (const auto& l : t.links)
        if (l.target == orphan_id) still_orphan = false;
    if (!still_orphan) continue;

    Instance inst{cat.key(), {orphan_id}, encode_single(*orphan, schema), ""};
    Classification c = hooks.decide(cat, inst);
    detail::log_decision(state, Stage::Orphans, cat, inst.token_ids, c);
    if (c.label == "none") continue;
    auto connecting = schema.connecting_links(c.label, type);
    if (connecting.empty()) continue;
    const LinkTypeDef* link = connecting.front();
    for (const auto* l : connecting)
      if (l->name < link->name) link = l;
    if (connecting.size() > 1)
      detail::log_action(state, Stage::Orphans, cat.key(), orphan_id,
                         "ambiguous-link:" + link->name);

    Token parent;
    parent.id = state.fresh_id("inferred-", state.next_inferred);
    parent.type = c.label;
    parent.links.push_back({link->name, orphan_id});
    std::string parent_id = parent.id;
    state.tokens.push_back(std::move(parent));
    detail::log_action(state, Stage::Orphans, cat.key(), orphan_id + "," + parent_id,
                       "infer-parent");

    std::set<std::string> restrict{parent_id};
    detail::inheritance_hop(state, &restrict);
    stage_links(state, hooks, schema, &restrict);
    stage_links_merge(state, hooks, schema, &restrict);
  }
}

// ---------------------------------------------------------------------------
// Stage 6: slot defaults

/// Fill empty closed-class slots with the value the defaults tree returns,
/// unless "none". Iterates to a fixpoint so a second invocation is a no-op.
inline void stage_slot_defaults(PipelineState& state, const PipelineHooks& hooks,
                                const DomainSchema& schema) {
  for (;;) {
    std::vector<std::tuple<std::string, std::string, std::string>> fills;
    for (const auto& id : detail::sorted_ids(state.tokens)) {
      Token* token = state.find(id);
      const ObjectTypeDef* type = schema.object_type(token->type);
      if (type == nullptr) continue;
      for (const auto& slot : type->slots) {
        if (slot.kind != SlotKind::Closed) continue;
        if (token->slots.count(slot.name)) continue;
        DecisionCategory cat{Stage::SlotDefaults, token->type, slot.name, ""};
        if (!hooks.has_tree(cat)) continue;
        Instance inst{cat.key(), {id}, encode_single(*token, schema), ""};
        Classification c = hooks.decide(cat, inst);
        detail::log_decision(state, Stage::SlotDefaults, cat, inst.token_ids, c);
        if (c.label == "none") continue;
        std::string canonical;
        for (const auto& v : slot.allowed_values)
          if (util::normalize_value(v) == c.label) canonical = v;
        if (canonical.empty()) continue;
        fills.emplace_back(id, slot.name, canonical);
      }
    }
    if (fills.empty()) break;
    for (const auto& [id, slot, value] : fills) {
      state.find(id)->slots[slot] = value;
      detail::log_action(state, Stage::SlotDefaults, "slot-defaults", id + "," + slot + "," + value,
                         "fill");
    }
  }
}

// ---------------------------------------------------------------------------
// Full run

inline OutputStructure finalize_state(PipelineState& state) {
  OutputStructure out;
  out.doc_id = state.doc_id;
  out.tokens = state.tokens;
  for (auto& t : out.tokens) t.inherited_patterns.clear();
  std::sort(out.tokens.begin(), out.tokens.end(),
            [](const Token& a, const Token& b) { return a.id < b.id; });
  for (auto& t : out.tokens) detail::sort_dedup_links(t);
  return out;
}

inline OutputStructure run_pipeline_with_hooks(const Document& doc, const PipelineHooks& hooks,
                                               const DomainSchema& schema,
                                               std::vector<ProvenanceEntry>* log_out = nullptr) {
  PipelineState state;
  state.doc_id = doc.doc_id;
  state.tokens = doc.tokens;
  stage_slot_filter(state, hooks, schema);
  stage_slot_merge(state, hooks, schema);
  stage_links(state, hooks, schema);
  stage_links_merge(state, hooks, schema);
  stage_orphans(state, hooks, schema);
  stage_slot_defaults(state, hooks, schema);
  if (log_out != nullptr) *log_out = state.log;
  return finalize_state(state);
}

inline OutputStructure run_pipeline(const Document& doc, const TrainedModel& model,
                                    const DomainSchema& schema,
                                    std::vector<ProvenanceEntry>* log_out = nullptr) {
  if (model.schema_fingerprint != schema.fingerprint())
    throw ValidationError("model was trained against a different schema (fingerprint mismatch)");
  return run_pipeline_with_hooks(doc, model_hooks(model), schema, log_out);
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

/// Re-runs the link-overlap alignment passes to pick up tokens the pipeline
/// created (relations, split copies, inferred parents), which have no slots
/// in common with anything until their links identify them.
inline void extend_alignment(const std::vector<Token>& tokens, const AnswerKey& key,
                             TrainingAlignment& alignment) {
  for (;;) {
    bool changed = false;
    for (const auto& t : tokens) {
      if (alignment.count(t.id) || t.links.empty()) continue;
      const Token* best = nullptr;
      int best_score = 0;
      for (const auto& k : key.objects) {
        if (k.type != t.type) continue;
        int score = shared_link_matches(t, k, alignment);
        if (score > best_score || (score == best_score && score > 0 && best && k.id < best->id)) {
          best = &k;
          best_score = score;
        }
      }
      if (best != nullptr && best_score > 0) {
        alignment[t.id] = best->id;
        changed = true;
      }
    }
    if (!changed) break;
  }
}

}  // namespace detail

/// Labeled instances for one document, produced by teacher forcing: each
/// stage runs with verdicts read off the answer key, so every later stage
/// sees the state the key implies.
inline std::map<std::string, std::vector<Instance>> teacher_forced_instances(
    const Document& doc, const AnswerKey& key, const DomainSchema& schema) {
  if (doc.doc_id != key.doc_id)
    throw ValidationError("document/key doc_id mismatch: " + doc.doc_id + " vs " + key.doc_id);

  std::map<std::string, std::vector<Instance>> pool;
  PipelineState state;
  state.doc_id = doc.doc_id;
  state.tokens = doc.tokens;
  TrainingAlignment alignment = training_alignment(doc.tokens, key);

  PipelineHooks hooks;
  hooks.has_tree = [](const DecisionCategory&) { return true; };
  // The slot-defaults fixpoint loop may re-decide a (token, slot) pair;
  // only its first decision belongs in the training pool.
  std::set<std::string> collected;
  hooks.decide = [&, collected = std::move(collected)](const DecisionCategory& cat,
                                                       const Instance& inst) mutable {
    Instance labeled = inst;
    label_instance(labeled, cat, state.tokens, key, alignment, schema);
    std::string seen_key =
        cat.key() + "|" + util::join(inst.token_ids.begin(), inst.token_ids.end(), ",");
    if (collected.insert(seen_key).second) pool[cat.key()].push_back(labeled);
    return Classification{labeled.label, 1.0};
  };
  hooks.decide_rerun = [&](const DecisionCategory& cat, const Instance& inst) {
    Instance labeled = inst;
    label_instance(labeled, cat, state.tokens, key, alignment, schema);
    return Classification{labeled.label, 1.0};
  };

  stage_slot_filter(state, hooks, schema);
  stage_slot_merge(state, hooks, schema);
  stage_links(state, hooks, schema);
  detail::extend_alignment(state.tokens, key, alignment);
  stage_links_merge(state, hooks, schema);
  detail::extend_alignment(state.tokens, key, alignment);
  stage_orphans(state, hooks, schema);
  detail::extend_alignment(state.tokens, key, alignment);
  stage_slot_defaults(state, hooks, schema);
  return pool;
}

/// Builds one tree per category that produced instances: ten-fold CV picks
/// pruning level and threshold, then the tree is grown on everything.
inline TrainedModel train(const std::vector<std::pair<Document, AnswerKey>>& corpus,
                          const DomainSchema& schema, std::uint64_t seed,
                          std::map<std::string, std::pair<int, ParamChoice>>* summary = nullptr) {
  if (corpus.empty()) throw ValidationError("train: empty corpus");

  std::vector<std::map<std::string, std::vector<Instance>>> per_doc(corpus.size());
  util::parallel_for(corpus.size(), [&](size_t i) {
    per_doc[i] = teacher_forced_instances(corpus[i].first, corpus[i].second, schema);
  });

  std::map<std::string, std::vector<Instance>> pool;
  for (auto& doc_pool : per_doc)
    for (auto& [cat, instances] : doc_pool) {
      auto& dest = pool[cat];
      dest.insert(dest.end(), std::make_move_iterator(instances.begin()),
                  std::make_move_iterator(instances.end()));
    }

  TrainedModel model;
  model.schema_fingerprint = schema.fingerprint();
  model.corpus_size = static_cast<int>(corpus.size());
  model.seed = seed;

  std::vector<std::string> category_keys;
  for (const auto& [cat, instances] : pool) category_keys.push_back(cat);
  std::vector<std::pair<std::string, DecisionTree>> built(category_keys.size());
  util::parallel_for(category_keys.size(), [&](size_t i) {
    const std::string& cat_key = category_keys[i];
    const auto& instances = pool.at(cat_key);
    DecisionCategory category = parse_category_key(cat_key);
    ParamChoice params = select_params(instances, category, seed);
    DecisionTree tree;
    tree.category = category;
    tree.min_partition = params.min_partition;
    tree.threshold = params.threshold;
    tree.root = build_tree(instances, params.min_partition);
    std::set<std::string> classes;
    for (const auto& inst : instances) classes.insert(inst.label);
    tree.classes.assign(classes.begin(), classes.end());
    built[i] = {cat_key, std::move(tree)};
  });
  for (auto& [cat_key, tree] : built) {
    if (summary != nullptr)
      (*summary)[cat_key] = {static_cast<int>(pool.at(cat_key).size()),
                             {tree.min_partition, tree.threshold}};
    model.trees.emplace(cat_key, std::move(tree));
  }
  return model;
}

}  // namespace wrapup

#endif  // WRAPUP_PIPELINE_HPP

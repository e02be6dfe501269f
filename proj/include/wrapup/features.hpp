#ifndef WRAPUP_FEATURES_HPP
#define WRAPUP_FEATURES_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wrapup/corpus.hpp"
#include "wrapup/schema.hpp"

namespace wrapup {

/// Sparse feature map. Values are canonical strings: "t" for booleans,
/// decimal digits for counts, the category text otherwise. Default-valued
/// entries ("f", "0", empty) are never stored.
using FeatureMap = std::map<std::string, std::string>;

inline constexpr int kCountClamp = 10;
inline constexpr int kDistanceClamp = 5;

inline bool is_scalar_feature(const std::string& name) {
  return name == "trigger-count" || name == "trigger-count-1" || name == "trigger-count-2" ||
         name == "parent-trigger-count" || name == "common-triggers" ||
         name == "common-phrases" || name == "distance";
}

inline bool is_pattern_feature(const std::string& name) {
  std::string base = name;
  if (base.rfind("parent-", 0) == 0) base = base.substr(7);
  for (const char* prefix : {"subj-passive-", "dir-obj-", "subj-", "pp-", "keyword-"})
    if (base.rfind(prefix, 0) == 0) return true;
  return false;
}

/// The value an instance is taken to have when a feature key is absent.
inline std::string default_feature_value(const std::string& name) {
  if (is_scalar_feature(name)) return "0";
  if (is_pattern_feature(name)) return "f";
  return "";  // categorical slot feature: absent
}

inline std::string feature_value_or_default(const FeatureMap& features, const std::string& name) {
  auto it = features.find(name);
  return it == features.end() ? default_feature_value(name) : it->second;
}

// ---------------------------------------------------------------------------
// Decision categories

enum class Stage { SlotFilter, SlotMerge, Links, LinksMerge, Orphans, SlotDefaults };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::SlotFilter: return "slot-filter";
    case Stage::SlotMerge: return "slot-merge";
    case Stage::Links: return "links";
    case Stage::LinksMerge: return "links-merge";
    case Stage::Orphans: return "orphans";
    case Stage::SlotDefaults: return "slot-defaults";
  }
  return "?";
}

inline std::optional<Stage> stage_from_name(const std::string& s) {
  if (s == "slot-filter") return Stage::SlotFilter;
  if (s == "slot-merge") return Stage::SlotMerge;
  if (s == "links") return Stage::Links;
  if (s == "links-merge") return Stage::LinksMerge;
  if (s == "orphans") return Stage::Orphans;
  if (s == "slot-defaults") return Stage::SlotDefaults;
  return std::nullopt;
}

/// Names one decision tree: a stage plus what it decides about (an object
/// type and slot, an object type, or a link type).
struct DecisionCategory {
  Stage stage = Stage::SlotFilter;
  std::string type_name;  // object type (filter/merge/orphans/defaults)
  std::string slot_name;  // filter/defaults only
  std::string link_name;  // links/links-merge only

  std::string key() const {
    std::string k = stage_name(stage);
    if (!type_name.empty()) k += ":" + type_name;
    if (!slot_name.empty()) k += ":" + slot_name;
    if (!link_name.empty()) k += ":" + link_name;
    return k;
  }

  bool binary() const {
    return stage == Stage::SlotFilter || stage == Stage::SlotMerge || stage == Stage::Links ||
           stage == Stage::LinksMerge;
  }

  auto operator<=>(const DecisionCategory&) const = default;
};

/// Every tree the schema can give rise to, in a fixed deterministic order.
inline std::vector<DecisionCategory> categories_from_schema(const DomainSchema& schema) {
  std::vector<DecisionCategory> out;
  std::vector<const ObjectTypeDef*> types;
  for (const auto& t : schema.object_types) types.push_back(&t);
  std::sort(types.begin(), types.end(),
            [](const ObjectTypeDef* a, const ObjectTypeDef* b) { return a->name < b->name; });
  std::vector<std::string> links;
  for (const auto& l : schema.link_types) links.push_back(l.name);
  std::sort(links.begin(), links.end());

  for (const auto* t : types)
    for (const auto& s : t->slots)
      out.push_back({Stage::SlotFilter, t->name, s.name, ""});
  for (const auto* t : types) out.push_back({Stage::SlotMerge, t->name, "", ""});
  for (const auto& l : links) out.push_back({Stage::Links, "", "", l});
  for (const auto& l : links) out.push_back({Stage::LinksMerge, "", "", l});
  for (const auto& t : schema.linkable_child_types())
    out.push_back({Stage::Orphans, t, "", ""});
  for (const auto* t : types)
    for (const auto& s : t->slots)
      if (s.kind == SlotKind::Closed)
        out.push_back({Stage::SlotDefaults, t->name, s.name, ""});
  return out;
}

// ---------------------------------------------------------------------------
// Encoding

namespace detail {

/// pos 0: bare names. pos 1/2: pair encoding. pos 3: parent context.
inline void encode_token_into(const Token& token, const DomainSchema& schema, int pos,
                              FeatureMap& out) {
  const ObjectTypeDef* type = schema.object_type(token.type);
  for (const auto& [slot_name, value] : token.slots) {
    const SlotDef* slot = type == nullptr ? nullptr : type->slot(slot_name);
    bool open = slot != nullptr && slot->kind == SlotKind::Open;
    std::string v = open ? "t" : util::normalize_value(value);
    out.emplace(slot_name, v);  // slot features are never pos-qualified
  }
  for (const auto& p : token.pattern_set()) {
    std::string name = pattern_kind_feature_name(p.kind);
    if (pos == 1 || pos == 2) name += "-" + std::to_string(pos);
    if (pos == 3) name = "parent-" + name;
    name += "-" + p.anchor;
    out.emplace(name, "t");
  }
  int count = trigger_count(token) + static_cast<int>(token.inherited_patterns.size());
  count = std::min(count, kCountClamp);
  if (count > 0) {
    std::string name = "trigger-count";
    if (pos == 1 || pos == 2) name += "-" + std::to_string(pos);
    if (pos == 3) name = "parent-trigger-count";
    out.emplace(name, std::to_string(count));
  }
}

}  // namespace detail

/// Features of one token: categorical closed slots, presence booleans for
/// open slots, one boolean per distinct pattern (own plus inherited), and
/// the clamped trigger count.
inline FeatureMap encode_single(const Token& token, const DomainSchema& schema) {
  FeatureMap out;
  detail::encode_token_into(token, schema, 0, out);
  return out;
}

/// Features of an ordered pair: both tokens' features with pattern and
/// trigger-count names qualified by position, plus the relative-position
/// features common-triggers, common-phrases and distance.
inline FeatureMap encode_pair(const Token& a, const Token& b, const DomainSchema& schema) {
  FeatureMap out;
  detail::encode_token_into(a, schema, 1, out);
  detail::encode_token_into(b, schema, 2, out);

  const auto pa = a.pattern_set();
  const auto pb = b.pattern_set();
  int common_triggers = 0;
  for (const auto& p : pa)
    if (pb.count(p)) ++common_triggers;
  common_triggers = std::min(common_triggers, kCountClamp);
  if (common_triggers > 0) out.emplace("common-triggers", std::to_string(common_triggers));

  const auto sa = a.mention_sentences();
  const auto sb = b.mention_sentences();
  int common_phrases = 0;
  for (int s : sa)
    if (sb.count(s)) ++common_phrases;
  common_phrases = std::min(common_phrases, kCountClamp);
  if (common_phrases > 0) out.emplace("common-phrases", std::to_string(common_phrases));

  auto ea = a.earliest_sentence();
  auto eb = b.earliest_sentence();
  if (ea && eb) {
    int d = *eb - *ea;
    if (d < -kDistanceClamp) {
      out.emplace("distance", "far-neg");
    } else if (d > kDistanceClamp) {
      out.emplace("distance", "far-pos");
    } else if (d != 0) {
      out.emplace("distance", std::to_string(d));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Instances

/// One decision to make: the feature map plus which tokens it is about.
/// token_ids is stage-dependent: the token; the pair; parent+child pair;
/// the orphan.
struct Instance {
  std::string category;
  std::vector<std::string> token_ids;
  FeatureMap features;
  std::string label;  // empty until labeled

  std::string value_of(const std::string& feature) const {
    return feature_value_or_default(features, feature);
  }
};

namespace detail {

inline std::vector<const Token*> tokens_of_type_sorted(const std::vector<Token>& tokens,
                                                       const std::string& type) {
  std::vector<const Token*> out;
  for (const auto& t : tokens)
    if (t.type == type) out.push_back(&t);
  std::sort(out.begin(), out.end(), [](const Token* a, const Token* b) { return a->id < b->id; });
  return out;
}

inline std::map<std::string, int> inbound_link_counts(const std::vector<Token>& tokens) {
  std::map<std::string, int> counts;
  for (const auto& t : tokens)
    for (const auto& l : t.links) counts[l.target] += 1;
  return counts;
}

}  // namespace detail

/// Deterministic instance enumeration for one category on the current token
/// set. Ordering is by token id (and pair ids), so equal states always give
/// identical lists.
inline std::vector<Instance> enumerate_instances(const std::vector<Token>& tokens,
                                                 const DecisionCategory& category,
                                                 const DomainSchema& schema) {
  std::vector<Instance> out;
  const std::string key = category.key();
  switch (category.stage) {
    case Stage::SlotFilter: {
      for (const Token* t : detail::tokens_of_type_sorted(tokens, category.type_name)) {
        if (t->slots.count(category.slot_name) == 0) continue;
        out.push_back({key, {t->id}, encode_single(*t, schema), ""});
      }
      break;
    }
    case Stage::SlotMerge: {
      auto same = detail::tokens_of_type_sorted(tokens, category.type_name);
      for (size_t i = 0; i < same.size(); ++i)
        for (size_t j = i + 1; j < same.size(); ++j)
          out.push_back({key,
                         {same[i]->id, same[j]->id},
                         encode_pair(*same[i], *same[j], schema),
                         ""});
      break;
    }
    case Stage::Links: {
      const LinkTypeDef* link = schema.link_type(category.link_name);
      if (link == nullptr) throw ValidationError("unknown link category " + category.link_name);
      auto froms = detail::tokens_of_type_sorted(tokens, link->from_type);
      auto tos = detail::tokens_of_type_sorted(tokens, link->to_type);
      for (const Token* a : froms)
        for (const Token* b : tos)
          out.push_back({key, {a->id, b->id}, encode_pair(*a, *b, schema), ""});
      break;
    }
    case Stage::LinksMerge: {
      const LinkTypeDef* link = schema.link_type(category.link_name);
      if (link == nullptr) throw ValidationError("unknown link category " + category.link_name);
      auto parents = detail::tokens_of_type_sorted(tokens, link->carrier_type());
      for (const Token* parent : parents) {
        std::vector<const Token*> children;
        for (const auto& l : parent->links) {
          if (l.role != link->name) continue;
          for (const auto& t : tokens)
            if (t.id == l.target) children.push_back(&t);
        }
        std::sort(children.begin(), children.end(),
                  [](const Token* a, const Token* b) { return a->id < b->id; });
        for (size_t i = 0; i < children.size(); ++i) {
          for (size_t j = i + 1; j < children.size(); ++j) {
            FeatureMap features = encode_pair(*children[i], *children[j], schema);
            detail::encode_token_into(*parent, schema, 3, features);
            out.push_back({key, {parent->id, children[i]->id, children[j]->id},
                           std::move(features), ""});
          }
        }
      }
      break;
    }
    case Stage::Orphans: {
      auto inbound = detail::inbound_link_counts(tokens);
      for (const Token* t : detail::tokens_of_type_sorted(tokens, category.type_name)) {
        if (inbound[t->id] > 0) continue;
        out.push_back({key, {t->id}, encode_single(*t, schema), ""});
      }
      break;
    }
    case Stage::SlotDefaults: {
      for (const Token* t : detail::tokens_of_type_sorted(tokens, category.type_name)) {
        if (t->slots.count(category.slot_name) != 0) continue;
        out.push_back({key, {t->id}, encode_single(*t, schema), ""});
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labeling

/// Token id -> key object id, many-to-one. Distinct mentions of one real
/// object all map to the same key object, which is what merge labels need.
using TrainingAlignment = std::map<std::string, std::string>;

namespace detail {

inline int shared_slot_values(const Token& t, const Token& k) {
  int n = 0;
  for (const auto& [name, value] : t.slots) {
    auto it = k.slots.find(name);
    if (it != k.slots.end() && util::normalize_value(it->second) == util::normalize_value(value))
      ++n;
  }
  return n;
}

inline int shared_link_matches(const Token& t, const Token& k, const TrainingAlignment& alignment) {
  int n = 0;
  for (const auto& l : t.links) {
    auto it = alignment.find(l.target);
    if (it != alignment.end() && k.has_link(l.role, it->second)) ++n;
  }
  return n;
}

}  // namespace detail

/// Best same-type key object per token, slot overlap first, then link
/// overlap for tokens (relation or inferred) that have no slots in common
/// with anything. Iterated so that link matches can build on each other.
inline TrainingAlignment training_alignment(const std::vector<Token>& tokens,
                                            const AnswerKey& key) {
  TrainingAlignment alignment;
  for (const auto& t : tokens) {
    const Token* best = nullptr;
    int best_score = 0;
    for (const auto& k : key.objects) {
      if (k.type != t.type) continue;
      int score = detail::shared_slot_values(t, k);
      if (score > best_score || (score == best_score && score > 0 && best && k.id < best->id)) {
        best = &k;
        best_score = score;
      }
    }
    if (best != nullptr && best_score > 0) alignment[t.id] = best->id;
  }
  for (;;) {
    bool changed = false;
    for (const auto& t : tokens) {
      if (alignment.count(t.id) || t.links.empty()) continue;
      const Token* best = nullptr;
      int best_score = 0;
      for (const auto& k : key.objects) {
        if (k.type != t.type) continue;
        int score = detail::shared_link_matches(t, k, alignment);
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
  return alignment;
}

namespace detail {

/// Does the key contain the decision link (a, b) for this link type? For
/// relation-forming links the key carries the role on a relation object,
/// together with the subject link back to a when the schema declares one.
inline bool key_links_pair(const DomainSchema& schema, const LinkTypeDef& link,
                           const AnswerKey& key, const std::string& ka, const std::string& kb) {
  if (link.creates_relation.empty()) {
    const Token* from = key.find(ka);
    return from != nullptr && from->has_link(link.name, kb);
  }
  const LinkTypeDef* subject = schema.subject_link(link);
  for (const auto& obj : key.objects) {
    if (obj.type != link.creates_relation) continue;
    if (!obj.has_link(link.name, kb)) continue;
    if (subject != nullptr && !obj.has_link(subject->name, ka)) continue;
    return true;
  }
  return false;
}

/// Key objects that carry (role -> target), regardless of relation form.
inline std::vector<const Token*> key_parents_via(const AnswerKey& key, const std::string& role,
                                                 const std::string& target) {
  std::vector<const Token*> out;
  for (const auto& obj : key.objects)
    if (obj.has_link(role, target)) out.push_back(&obj);
  return out;
}

inline bool same_normalized_slots(const Token& a, const Token& b) {
  if (a.slots.size() != b.slots.size()) return false;
  for (const auto& [name, value] : a.slots) {
    auto it = b.slots.find(name);
    if (it == b.slots.end() || util::normalize_value(it->second) != util::normalize_value(value))
      return false;
  }
  return true;
}

/// The id stem in front of a split-copy suffix ("lith-2" -> "lith"), or the
/// id itself when there is no -<digits> suffix.
inline std::string split_stem(const std::string& id) {
  auto dash = id.rfind('-');
  if (dash == std::string::npos || dash + 1 >= id.size()) return id;
  for (size_t i = dash + 1; i < id.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(id[i]))) return id;
  return id.substr(0, dash);
}

/// The aligned key object plus its split siblings for one link role. A key
/// that splits an object into per-child copies leaves several key objects
/// standing for the same pre-split referent: one id stem with -<n> suffixes,
/// same type, identical slots, identical links apart from the split role,
/// each carrying that role. A token aligned to one copy counts as standing
/// for all of them. Distinct referents that merely share slot values (an
/// inferred parent next to a real object, say) never qualify.
inline std::vector<const Token*> split_siblings(const Token& assigned, const AnswerKey& key,
                                                const std::string& role) {
  std::vector<const Token*> out{&assigned};
  std::string stem = split_stem(assigned.id);
  if (stem == assigned.id) return out;  // not a split copy
  bool carries_role = false;
  for (const auto& l : assigned.links)
    if (l.role == role) carries_role = true;
  if (!carries_role) return out;
  auto other_links = [&](const Token& t) {
    std::vector<Link> links;
    for (const auto& l : t.links)
      if (l.role != role) links.push_back(l);
    std::sort(links.begin(), links.end());
    return links;
  };
  std::vector<Link> assigned_others = other_links(assigned);
  for (const auto& k : key.objects) {
    if (k.id == assigned.id || k.type != assigned.type) continue;
    if (split_stem(k.id) != stem || split_stem(k.id) == k.id) continue;
    bool k_carries = false;
    for (const auto& l : k.links)
      if (l.role == role) k_carries = true;
    if (!k_carries) continue;
    if (!same_normalized_slots(k, assigned)) continue;
    if (other_links(k) != assigned_others) continue;
    out.push_back(&k);
  }
  return out;
}

}  // namespace detail

/// Assigns the training label for an enumerated instance by consulting the
/// answer key through the alignment. Unalignable participants mean the
/// extraction was spurious: the label defaults to negative / none.
inline void label_instance(Instance& inst, const DecisionCategory& category,
                           const std::vector<Token>& tokens, const AnswerKey& key,
                           const TrainingAlignment& alignment, const DomainSchema& schema) {
  auto aligned = [&](const std::string& token_id) -> const Token* {
    auto it = alignment.find(token_id);
    return it == alignment.end() ? nullptr : key.find(it->second);
  };
  auto token = [&](const std::string& token_id) -> const Token* {
    for (const auto& t : tokens)
      if (t.id == token_id) return &t;
    return nullptr;
  };

  switch (category.stage) {
    case Stage::SlotFilter: {
      const Token* t = token(inst.token_ids[0]);
      const Token* k = aligned(inst.token_ids[0]);
      inst.label = "negative";
      if (t != nullptr && k != nullptr) {
        auto tv = t->slots.find(category.slot_name);
        auto kv = k->slots.find(category.slot_name);
        if (tv != t->slots.end() && kv != k->slots.end() &&
            util::normalize_value(tv->second) == util::normalize_value(kv->second))
          inst.label = "positive";
      }
      break;
    }
    case Stage::SlotMerge: {
      const Token* ka = aligned(inst.token_ids[0]);
      const Token* kb = aligned(inst.token_ids[1]);
      inst.label = (ka != nullptr && ka == kb) ? "positive" : "negative";
      break;
    }
    case Stage::Links: {
      const LinkTypeDef* link = schema.link_type(category.link_name);
      const Token* ka = aligned(inst.token_ids[0]);
      const Token* kb = aligned(inst.token_ids[1]);
      inst.label = "negative";
      if (link != nullptr && ka != nullptr && kb != nullptr) {
        // a direct link may live on any split copy the from-token stands for
        std::vector<const Token*> froms =
            link->creates_relation.empty() ? detail::split_siblings(*ka, key, link->name)
                                           : std::vector<const Token*>{ka};
        for (const Token* kf : froms)
          if (detail::key_links_pair(schema, *link, key, kf->id, kb->id)) inst.label = "positive";
      }
      break;
    }
    case Stage::LinksMerge: {
      const LinkTypeDef* link = schema.link_type(category.link_name);
      const Token* kb = aligned(inst.token_ids[1]);
      const Token* kc = aligned(inst.token_ids[2]);
      inst.label = "negative";
      if (link != nullptr && kb != nullptr && kc != nullptr) {
        for (const Token* p : detail::key_parents_via(key, link->name, kb->id))
          if (p->has_link(link->name, kc->id)) inst.label = "positive";
      }
      break;
    }
    case Stage::Orphans: {
      const Token* k = aligned(inst.token_ids[0]);
      inst.label = "none";
      if (k != nullptr) {
        const Token* best = nullptr;
        for (const auto& obj : key.objects) {
          for (const auto& l : obj.links) {
            if (l.target != k->id) continue;
            if (best == nullptr || std::tie(obj.type, obj.id) < std::tie(best->type, best->id))
              best = &obj;
          }
        }
        if (best != nullptr) inst.label = best->type;
      }
      break;
    }
    case Stage::SlotDefaults: {
      const Token* k = aligned(inst.token_ids[0]);
      inst.label = "none";
      if (k != nullptr) {
        auto kv = k->slots.find(category.slot_name);
        if (kv != k->slots.end()) inst.label = util::normalize_value(kv->second);
      }
      break;
    }
  }
}

/// One text record per instance: category, label, then sorted key=value.
inline std::string instance_record(const Instance& inst) {
  std::string line = inst.category + "\t" + inst.label + "\t";
  bool first = true;
  for (const auto& [k, v] : inst.features) {
    if (!first) line += ";";
    line += k + "=" + v;
    first = false;
  }
  return line;
}

}  // namespace wrapup

#endif  // WRAPUP_FEATURES_HPP

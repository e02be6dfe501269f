#ifndef WRAPUP_SYNTH_HPP
#define WRAPUP_SYNTH_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrapup/corpus.hpp"
#include "wrapup/schema.hpp"

namespace wrapup {

/// One conditional probability row of a link-if rule; empty fields match
/// anything, the first matching case wins.
struct LinkCase {
  std::string from_slot, from_value;
  std::string to_slot, to_value;
  double prob = 0.0;
};

struct PlantedRule {
  std::string kind;  // link-if | always-parent | spurious-slot | split-on-multi | default-cooccurrence

  // link-if
  std::string link;
  double prob = 0.0;
  std::vector<LinkCase> cases;
  std::string anchor;

  // always-parent
  std::string child_type, child_slot, child_value, parent_type;

  // default-cooccurrence (also uses child_* as the condition)
  std::string type_name, slot_name, value;

  // spurious-slot (uses type_name / slot_name)
  std::vector<std::string> values;
  std::vector<std::string> anchors;
};

struct SlotPool {
  std::string slot;
  std::vector<std::pair<std::string, double>> weighted_values;  // closed slots
  std::vector<std::string> open_values;                         // open slots
  double present_prob = 1.0;
  // draw without replacement per document, keeping same-type objects
  // distinguishable; repeated values need another distinct slot alongside
  bool distinct = true;
};

/// Population shape for one object type: how many per document, which slot
/// values they draw (without replacement, so same-type objects stay
/// distinguishable), their trigger patterns, and how often a mention is
/// split across two tokens.
struct InventoryEntry {
  std::string type;
  std::vector<double> count_weights;  // weight of generating 0,1,2,... objects
  std::vector<SlotPool> slots;
  std::vector<Pattern> pattern_pool;
  int min_patterns = 1;
  int max_patterns = 2;
  double mention_split_prob = 0.0;
  std::vector<std::string> split_slots;
};

struct GeneratorSpec {
  std::uint64_t seed = 0;
  int n_docs = 0;
  double noise = 0.0;
  DomainSchema schema;
  std::vector<InventoryEntry> inventory;
  std::vector<PlantedRule> rules;

  void validate() const;
};

inline void GeneratorSpec::validate() const {
  schema.validate();
  if (n_docs < 0) throw ValidationError("generator: n_docs must be >= 0");
  if (noise < 0.0 || noise > 0.5) throw ValidationError("generator: noise must be in [0, 0.5]");
  auto check_slot = [&](const std::string& type, const std::string& slot,
                        const std::string& where) {
    const ObjectTypeDef* t = schema.object_type(type);
    if (t == nullptr) throw ValidationError("generator " + where + ": unknown type " + type);
    if (!slot.empty() && t->slot(slot) == nullptr)
      throw ValidationError("generator " + where + ": unknown slot " + type + "." + slot);
  };
  for (const auto& entry : inventory) check_slot(entry.type, "", "inventory");
  for (const auto& entry : inventory)
    for (const auto& pool : entry.slots) check_slot(entry.type, pool.slot, "inventory");
  for (const auto& rule : rules) {
    if (rule.kind == "link-if" || rule.kind == "split-on-multi") {
      if (schema.link_type(rule.link) == nullptr)
        throw ValidationError("generator rule: unknown link " + rule.link);
      if (rule.prob < 0 || rule.prob > 1)
        throw ValidationError("generator rule: probability out of range for " + rule.link);
      for (const auto& c : rule.cases)
        if (c.prob < 0 || c.prob > 1)
          throw ValidationError("generator rule: case probability out of range for " + rule.link);
    } else if (rule.kind == "always-parent") {
      check_slot(rule.child_type, rule.child_slot, "always-parent");
      check_slot(rule.parent_type, "", "always-parent");
      if (schema.connecting_links(rule.parent_type, rule.child_type).empty())
        throw ValidationError("generator rule: no link connects " + rule.parent_type + " to " +
                              rule.child_type);
    } else if (rule.kind == "default-cooccurrence") {
      check_slot(rule.type_name, rule.slot_name, "default-cooccurrence");
      check_slot(rule.child_type, rule.child_slot, "default-cooccurrence");
    } else if (rule.kind == "spurious-slot") {
      check_slot(rule.type_name, rule.slot_name, "spurious-slot");
      if (rule.values.empty() || rule.anchors.empty())
        throw ValidationError("generator rule: spurious-slot needs values and anchors");
    } else {
      throw ValidationError("generator rule: unknown kind " + rule.kind);
    }
  }
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

struct GenObject {
  std::string key_id;
  std::string type;
  std::map<std::string, std::string> slots;
  int sentence = 0;
  size_t inventory_index = 0;
  std::vector<std::string> token_ids;  // primary first
};

inline std::string pad_number(int n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s = "0" + s;
  return s;
}

inline const LinkTypeDef* smallest_connecting_link(const DomainSchema& schema,
                                                   const std::string& parent_type,
                                                   const std::string& child_type) {
  auto connecting = schema.connecting_links(parent_type, child_type);
  if (connecting.empty()) return nullptr;
  const LinkTypeDef* best = connecting.front();
  for (const auto* l : connecting)
    if (l->name < best->name) best = l;
  return best;
}

}  // namespace detail

/// Generates one (document, key) pair. The key is derived exactly from the
/// planted rules; noise afterwards corrupts only the document side.
inline std::pair<Document, AnswerKey> generate_document(const GeneratorSpec& spec,
                                                        int doc_index) {
  std::mt19937_64 rng(util::derive_seed(spec.seed, static_cast<std::uint64_t>(doc_index)));
  std::mt19937_64 noise_rng(
      util::derive_seed(spec.seed ^ 0x9e0153c0ffeeull, static_cast<std::uint64_t>(doc_index)));

  const DomainSchema& schema = spec.schema;
  std::string doc_id = "doc-" + detail::pad_number(doc_index, 4);

  // 1. Draw objects.
  std::vector<detail::GenObject> objects;
  int key_counter = 1;
  for (size_t inv = 0; inv < spec.inventory.size(); ++inv) {
    const InventoryEntry& entry = spec.inventory[inv];
    size_t count = util::pick_weighted(rng, entry.count_weights);
    std::map<std::string, std::set<size_t>> used;  // slot -> used pool indices
    for (size_t i = 0; i < count; ++i) {
      detail::GenObject obj;
      obj.type = entry.type;
      obj.inventory_index = inv;
      obj.key_id = "k" + detail::pad_number(key_counter++, 3);
      for (const auto& pool : entry.slots) {
        if (!util::bernoulli(rng, pool.present_prob)) continue;
        if (!pool.weighted_values.empty()) {
          std::vector<double> weights;
          for (size_t v = 0; v < pool.weighted_values.size(); ++v)
            weights.push_back(pool.distinct && used[pool.slot].count(v)
                                  ? 0.0
                                  : pool.weighted_values[v].second);
          double total = 0;
          for (double w : weights) total += w;
          if (total <= 0) continue;  // pool exhausted, keep values distinct
          size_t v = util::pick_weighted(rng, weights);
          used[pool.slot].insert(v);
          obj.slots[pool.slot] = pool.weighted_values[v].first;
        } else if (!pool.open_values.empty()) {
          std::vector<double> weights(pool.open_values.size(), 1.0);
          if (pool.distinct)
            for (size_t v = 0; v < pool.open_values.size(); ++v)
              if (used[pool.slot].count(v)) weights[v] = 0.0;
          double total = 0;
          for (double w : weights) total += w;
          if (total <= 0) continue;
          size_t v = util::pick_weighted(rng, weights);
          used[pool.slot].insert(v);
          obj.slots[pool.slot] = pool.open_values[v];
        }
      }
      objects.push_back(std::move(obj));
    }
  }

  // 2. One sentence per object, children before parents so that link
  // evidence points backwards in the text.
  {
    std::map<std::string, int> memo;
    std::vector<size_t> order(objects.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return type_depth(schema, objects[a].type, memo) <
             type_depth(schema, objects[b].type, memo);
    });
    for (size_t pos = 0; pos < order.size(); ++pos) objects[order[pos]].sentence =
        static_cast<int>(pos);
  }

  // 3. Tokens: a primary mention, optionally a second mention carrying the
  // split-off slots (the coreference the slot-merge stage must re-join).
  Document doc;
  doc.doc_id = doc_id;
  int token_counter = 1;
  for (auto& obj : objects) {
    const InventoryEntry& entry = spec.inventory[obj.inventory_index];
    const ObjectTypeDef* type = schema.object_type(obj.type);

    std::set<std::string> split_off;
    if (entry.mention_split_prob > 0 && util::bernoulli(rng, entry.mention_split_prob)) {
      for (const auto& s : entry.split_slots)
        if (obj.slots.count(s)) split_off.insert(s);
      if (split_off.size() >= obj.slots.size()) split_off.clear();  // primary must keep something
    }

    auto draw_patterns = [&](const std::map<std::string, std::string>& slots) {
      std::vector<Pattern> patterns;
      for (const auto& [slot, value] : slots) {
        const SlotDef* def = type->slot(slot);
        if (def != nullptr && def->kind == SlotKind::Closed)
          patterns.push_back({PatternKind::Keyword, util::normalize_value(value)});
      }
      if (!entry.pattern_pool.empty()) {
        int span = entry.max_patterns - entry.min_patterns;
        int extra = entry.min_patterns + (span > 0 ? static_cast<int>(rng() % (span + 1)) : 0);
        std::vector<size_t> idx(entry.pattern_pool.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        util::deterministic_shuffle(idx, rng);
        for (int i = 0; i < extra && i < static_cast<int>(idx.size()); ++i)
          patterns.push_back(entry.pattern_pool[idx[static_cast<size_t>(i)]]);
      }
      return patterns;
    };

    Token primary;
    primary.id = "t" + detail::pad_number(token_counter++, 3);
    primary.type = obj.type;
    for (const auto& [slot, value] : obj.slots)
      if (!split_off.count(slot)) primary.slots[slot] = value;
    primary.references.push_back({obj.sentence, draw_patterns(primary.slots)});
    obj.token_ids.push_back(primary.id);
    doc.tokens.push_back(std::move(primary));

    if (!split_off.empty()) {
      Token twin;
      twin.id = "t" + detail::pad_number(token_counter++, 3);
      twin.type = obj.type;
      for (const auto& s : split_off) twin.slots[s] = obj.slots[s];
      twin.references.push_back({obj.sentence, draw_patterns(twin.slots)});
      obj.token_ids.push_back(twin.id);
      doc.tokens.push_back(std::move(twin));
    }
  }

  // 4. Link draws, bottom-up. A fired pair leaves the trace later stages
  // learn from: a shared trigger anchor and a reference to the child in the
  // parent's sentence.
  struct Fire {
    size_t from, to;
    const LinkTypeDef* link;
  };
  std::vector<Fire> fires;
  for (const auto& link : link_levels(schema)) {
    const PlantedRule* rule = nullptr;
    for (const auto& r : spec.rules)
      if (r.kind == "link-if" && r.link == link.name) rule = &r;
    if (rule == nullptr) continue;
    for (size_t a = 0; a < objects.size(); ++a) {
      if (objects[a].type != link.from_type) continue;
      for (size_t b = 0; b < objects.size(); ++b) {
        if (objects[b].type != link.to_type || a == b) continue;
        double p = rule->prob;
        for (const auto& c : rule->cases) {
          bool from_ok = c.from_slot.empty() ||
                         (objects[a].slots.count(c.from_slot) &&
                          objects[a].slots.at(c.from_slot) == c.from_value);
          bool to_ok = c.to_slot.empty() || (objects[b].slots.count(c.to_slot) &&
                                             objects[b].slots.at(c.to_slot) == c.to_value);
          if (from_ok && to_ok) {
            p = c.prob;
            break;
          }
        }
        if (!util::bernoulli(rng, p)) continue;
        fires.push_back({a, b, schema.link_type(link.name)});
        Pattern anchor{PatternKind::Pp, rule->anchor.empty() ? link.name : rule->anchor};
        Token* from_token = nullptr;
        Token* to_token = nullptr;
        for (auto& t : doc.tokens) {
          if (t.id == objects[a].token_ids.front()) from_token = &t;
          if (t.id == objects[b].token_ids.front()) to_token = &t;
        }
        auto& from_patterns = from_token->references.front().patterns;
        if (std::find(from_patterns.begin(), from_patterns.end(), anchor) == from_patterns.end())
          from_patterns.push_back(anchor);
        to_token->references.push_back({objects[a].sentence, {anchor}});
      }
    }
  }

  // 5. Key: objects plus the fired links; relation-forming links become
  // relation objects shared per (from, to) pair.
  AnswerKey key;
  key.doc_id = doc_id;
  std::vector<Token> key_objects;
  for (const auto& obj : objects) {
    Token k;
    k.id = obj.key_id;
    k.type = obj.type;
    k.slots = obj.slots;
    key_objects.push_back(std::move(k));
  }
  auto key_find = [&](const std::string& id) -> Token* {
    for (auto& k : key_objects)
      if (k.id == id) return &k;
    return nullptr;
  };
  std::map<std::pair<std::string, std::string>, std::string> relation_ids;
  for (const auto& fire : fires) {
    const std::string& ka = objects[fire.from].key_id;
    const std::string& kb = objects[fire.to].key_id;
    if (fire.link->creates_relation.empty()) {
      key_find(ka)->add_link(fire.link->name, kb);
      continue;
    }
    auto rel_key = std::make_pair(ka, kb);
    auto it = relation_ids.find(rel_key);
    if (it == relation_ids.end()) {
      Token rel;
      rel.id = ka + "+" + kb;
      rel.type = fire.link->creates_relation;
      key_objects.push_back(std::move(rel));
      it = relation_ids.emplace(rel_key, ka + "+" + kb).first;
    }
    Token* rel = key_find(it->second);
    rel->add_link(fire.link->name, kb);
    const LinkTypeDef* subject = schema.subject_link(*fire.link);
    if (subject != nullptr) rel->add_link(subject->name, ka);
  }

  // 6. split-on-multi: a key object with several children of the rule's
  // link becomes one copy per child, other links duplicated onto each copy.
  for (const auto& rule : spec.rules) {
    if (rule.kind != "split-on-multi") continue;
    const LinkTypeDef* link = schema.link_type(rule.link);
    std::vector<Token> next;
    std::map<std::string, std::vector<std::string>> copies_of;  // original -> copy ids
    for (auto& obj : key_objects) {
      std::vector<std::string> children;
      for (const auto& l : obj.links)
        if (l.role == link->name) children.push_back(l.target);
      std::sort(children.begin(), children.end());
      if (children.size() < 2) {
        next.push_back(std::move(obj));
        continue;
      }
      for (size_t i = 0; i < children.size(); ++i) {
        Token copy = obj;
        copy.id = obj.id + "-" + std::to_string(i + 1);
        copy.links.clear();
        for (const auto& l : obj.links)
          if (l.role != link->name) copy.links.push_back(l);
        copy.links.push_back({link->name, children[i]});
        std::sort(copy.links.begin(), copy.links.end());
        copies_of[obj.id].push_back(copy.id);
        next.push_back(std::move(copy));
      }
    }
    for (auto& other : next) {
      std::vector<Link> rewritten;
      bool changed = false;
      for (const auto& l : other.links) {
        auto it = copies_of.find(l.target);
        if (it == copies_of.end()) {
          rewritten.push_back(l);
        } else {
          for (const auto& copy_id : it->second) rewritten.push_back({l.role, copy_id});
          changed = true;
        }
      }
      if (changed) {
        std::sort(rewritten.begin(), rewritten.end());
        other.links = std::move(rewritten);
      }
    }
    key_objects = std::move(next);
  }

  // 7. always-parent: unpointed children of the rule's shape get an
  // inferred parent object in the key.
  for (const auto& rule : spec.rules) {
    if (rule.kind != "always-parent") continue;
    std::vector<Token> parents;
    for (const auto& obj : key_objects) {
      if (obj.type != rule.child_type) continue;
      if (!rule.child_slot.empty()) {
        auto it = obj.slots.find(rule.child_slot);
        if (it == obj.slots.end() || it->second != rule.child_value) continue;
      }
      bool pointed = false;
      for (const auto& other : key_objects)
        for (const auto& l : other.links)
          if (l.target == obj.id) pointed = true;
      for (const auto& p : parents)
        for (const auto& l : p.links)
          if (l.target == obj.id) pointed = true;
      if (pointed) continue;
      if (!util::bernoulli(rng, rule.prob)) continue;
      const LinkTypeDef* link =
          detail::smallest_connecting_link(schema, rule.parent_type, rule.child_type);
      Token parent;
      parent.id = obj.id + "-parent";
      parent.type = rule.parent_type;
      parent.links.push_back({link->name, obj.id});
      parents.push_back(std::move(parent));
    }
    for (auto& p : parents) key_objects.push_back(std::move(p));
  }

  // 8. default-cooccurrence: fill missing slots on key objects whose
  // children match the condition.
  for (const auto& rule : spec.rules) {
    if (rule.kind != "default-cooccurrence") continue;
    for (auto& obj : key_objects) {
      if (obj.type != rule.type_name || obj.slots.count(rule.slot_name)) continue;
      bool matches = false;
      for (const auto& l : obj.links) {
        const Token* child = nullptr;
        for (const auto& other : key_objects)
          if (other.id == l.target) child = &other;
        if (child == nullptr || child->type != rule.child_type) continue;
        if (rule.child_slot.empty()) {
          matches = true;
        } else {
          auto it = child->slots.find(rule.child_slot);
          if (it != child->slots.end() && it->second == rule.child_value) matches = true;
        }
      }
      if (matches) obj.slots[rule.slot_name] = rule.value;
    }
  }

  // 9. spurious-slot: document-only junk tokens with weak triggers.
  int spurious_sentence = static_cast<int>(objects.size());
  for (const auto& rule : spec.rules) {
    if (rule.kind != "spurious-slot") continue;
    if (!util::bernoulli(rng, rule.prob)) continue;
    Token junk;
    junk.id = "t" + detail::pad_number(token_counter++, 3);
    junk.type = rule.type_name;
    junk.slots[rule.slot_name] = rule.values[util::pick_index(rng, rule.values.size())];
    junk.references.push_back(
        {spurious_sentence++,
         {{PatternKind::Pp, rule.anchors[util::pick_index(rng, rule.anchors.size())]}}});
    doc.tokens.push_back(std::move(junk));
  }

  key.objects = std::move(key_objects);

  // 10. Noise corrupts the document side only; the key is already fixed.
  if (spec.noise > 0) {
    for (auto& t : doc.tokens) {
      if (!util::bernoulli(noise_rng, spec.noise)) continue;
      switch (util::pick_index(noise_rng, 4)) {
        case 0: {
          Reference& r = t.references[util::pick_index(noise_rng, t.references.size())];
          int delta = 1 + static_cast<int>(util::pick_index(noise_rng, 2));
          r.sentence = std::max(0, r.sentence + (util::bernoulli(noise_rng, 0.5) ? delta : -delta));
          break;
        }
        case 1: {
          Reference& r = t.references[util::pick_index(noise_rng, t.references.size())];
          if (!r.patterns.empty())
            r.patterns.erase(r.patterns.begin() +
                             static_cast<long>(util::pick_index(noise_rng, r.patterns.size())));
          break;
        }
        case 2: {
          Reference& r = t.references[util::pick_index(noise_rng, t.references.size())];
          r.patterns.push_back(
              {PatternKind::Pp, "noise-" + std::to_string(util::pick_index(noise_rng, 6))});
          break;
        }
        case 3: {
          const ObjectTypeDef* type = spec.schema.object_type(t.type);
          std::vector<std::string> closed;
          for (const auto& [slot, value] : t.slots) {
            const SlotDef* def = type->slot(slot);
            if (def != nullptr && def->kind == SlotKind::Closed) closed.push_back(slot);
          }
          if (!closed.empty()) {
            const std::string& slot = closed[util::pick_index(noise_rng, closed.size())];
            const SlotDef* def = type->slot(slot);
            t.slots[slot] =
                def->allowed_values[util::pick_index(noise_rng, def->allowed_values.size())];
          }
          break;
        }
      }
    }
  }

  validate_tokens(doc.tokens, schema, TokenOrigin::Analyzer, doc.doc_id);
  validate_tokens(key.objects, schema, TokenOrigin::Key, key.doc_id);
  return {std::move(doc), std::move(key)};
}

/// Deterministic in the seed; documents are independent after seed
/// splitting.
inline std::vector<std::pair<Document, AnswerKey>> generate(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<std::pair<Document, AnswerKey>> out(static_cast<size_t>(spec.n_docs));
  util::parallel_for(out.size(), [&](size_t i) {
    out[i] = generate_document(spec, static_cast<int>(i) + 1);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reference domain

/// The micro-electronics style schema the engine ships with: processes
/// point to equipment and devices, companies relate to packaging processes
/// through capability objects.
inline DomainSchema microelectronics_schema() {
  DomainSchema s;
  s.object_types = {
      {"entity", {{"entity-name", SlotKind::Open, {}}}},
      {"lithography",
       {{"lithography-type", SlotKind::Closed, {"uv", "e-beam", "i-line", "x-ray"}}}},
      {"packaging",
       {{"packaging-type", SlotKind::Closed, {"tsop", "soj", "dip", "qfp"}},
        {"packaging-material", SlotKind::Closed, {"plastic", "ceramic", "epoxy", "resin"}}}},
      {"equipment",
       {{"equipment-type", SlotKind::Closed,
         {"stepper", "etching-system", "modular-equipment", "radiation-source"}},
        {"equipment-name", SlotKind::Open, {}}}},
      {"device",
       {{"device-type", SlotKind::Closed, {"dram", "sram", "asic", "microprocessor"}},
        {"device-size", SlotKind::Open, {}}}},
      {"microelectronics-capability", {}},
  };
  s.link_types = {
      {"lithography-equipment", "lithography", "equipment", ""},
      {"lithography-device", "lithography", "device", ""},
      {"packaging-device", "packaging", "device", ""},
      {"developer", "entity", "packaging", "microelectronics-capability"},
      {"manufacturer", "entity", "packaging", "microelectronics-capability"},
      {"distributor", "entity", "packaging", "microelectronics-capability"},
      {"purchaser-user", "entity", "packaging", "microelectronics-capability"},
      {"company", "microelectronics-capability", "entity", ""},
  };
  s.validate();
  return s;
}

/// A checked-in generator configuration reproducing the reference domain's
/// regularities: steppers attract lithography links (e-beam repels them),
/// coreferent mentions sit in one sentence, multi-equipment processes split,
/// parentless steppers imply a lithography process defaulting to uv, and
/// two kinds of spurious extraction for the filter stage to discard.
inline GeneratorSpec reference_spec() {
  GeneratorSpec spec;
  spec.seed = 42;
  spec.n_docs = 100;
  spec.noise = 0.0;
  spec.schema = microelectronics_schema();

  spec.inventory = {
      {"entity",
       {0.25, 0.55, 0.2},
       {{"entity-name",
         {},
         {"mitsubishi", "gca", "sematech", "hitachi", "fujitsu", "toshiba", "nec", "ibm"},
         1.0}},
       {{PatternKind::Subj, "announced"},
        {PatternKind::Pp, "by"},
        {PatternKind::Dobj, "acquired"},
        {PatternKind::Subj, "said"}},
       2,
       3,
       0.0,
       {}},
      {"lithography",
       {0.3, 0.55, 0.15},
       {{"lithography-type",
         {{"uv", 0.5}, {"e-beam", 0.3}, {"i-line", 0.15}, {"x-ray", 0.05}},
         {},
         1.0}},
       {{PatternKind::Keyword, "lithography"}, {PatternKind::Pp, "in"}},
       1,
       2,
       0.0,
       {}},
      {"equipment",
       {0.2, 0.45, 0.28, 0.07},
       {{"equipment-type",
         {{"stepper", 0.63},
          {"etching-system", 0.15},
          {"modular-equipment", 0.13},
          {"radiation-source", 0.09}},
         {},
         1.0,
         false},  // several steppers may share a text; names tell them apart
        {"equipment-name", {}, {"xls", "mark-iv", "ultra-5", "gx-200", "qz-9", "vx-3"}, 1.0}},
       {{PatternKind::Dobj, "unveiled"},
        {PatternKind::SubjPassive, "developed"},
        {PatternKind::Pp, "with"}},
       1,
       2,
       0.0,
       {}},
      {"packaging",
       {0.35, 0.45, 0.2},
       {{"packaging-type", {{"tsop", 0.4}, {"soj", 0.3}, {"dip", 0.2}, {"qfp", 0.1}}, {}, 1.0},
        {"packaging-material", {{"plastic", 0.5}, {"ceramic", 0.3}, {"resin", 0.2}}, {}, 0.55}},
       {{PatternKind::Keyword, "package"}, {PatternKind::Pp, "in"}},
       1,
       2,
       0.5,
       {"packaging-material"}},
      {"device",
       {0.3, 0.5, 0.2},
       {{"device-type",
         {{"dram", 0.4}, {"sram", 0.25}, {"asic", 0.2}, {"microprocessor", 0.15}},
         {},
         1.0},
        {"device-size", {}, {"1m", "4m", "16m", "64m", "256k"}, 0.6}},
       {{PatternKind::Dobj, "produce"}, {PatternKind::Keyword, "chips"}},
       1,
       2,
       0.35,
       {"device-size"}},
  };

  auto link_rule = [](const std::string& link, double prob, const std::string& anchor,
                      std::vector<LinkCase> cases = {}) {
    PlantedRule r;
    r.kind = "link-if";
    r.link = link;
    r.prob = prob;
    r.anchor = anchor;
    r.cases = std::move(cases);
    return r;
  };

  spec.rules.push_back(link_rule(
      "lithography-equipment", 0.0, "using",
      {{"lithography-type", "uv", "equipment-type", "stepper", 0.88},
       {"lithography-type", "e-beam", "equipment-type", "stepper", 0.06},
       {"", "", "equipment-type", "stepper", 0.42}}));
  spec.rules.push_back(link_rule("lithography-device", 0.6, "produce"));
  spec.rules.push_back(link_rule("packaging-device", 0.6, "housed"));
  spec.rules.push_back(link_rule("developer", 0.30, "developed"));
  spec.rules.push_back(link_rule("manufacturer", 0.22, "manufactured"));
  spec.rules.push_back(link_rule("distributor", 0.18, "distributed"));
  spec.rules.push_back(link_rule("purchaser-user", 0.30, "purchased"));

  {
    PlantedRule split;
    split.kind = "split-on-multi";
    split.link = "lithography-equipment";
    spec.rules.push_back(split);
  }
  {
    PlantedRule orphan;
    orphan.kind = "always-parent";
    orphan.child_type = "equipment";
    orphan.child_slot = "equipment-type";
    orphan.child_value = "stepper";
    orphan.parent_type = "lithography";
    orphan.prob = 1.0;
    spec.rules.push_back(orphan);
  }
  {
    PlantedRule dflt;
    dflt.kind = "default-cooccurrence";
    dflt.type_name = "lithography";
    dflt.slot_name = "lithography-type";
    dflt.value = "uv";
    dflt.child_type = "equipment";
    dflt.child_slot = "equipment-type";
    dflt.child_value = "stepper";
    spec.rules.push_back(dflt);
  }
  {
    PlantedRule junk;
    junk.kind = "spurious-slot";
    junk.type_name = "entity";
    junk.slot_name = "entity-name";
    junk.values = {"semiconductor division", "advanced products group", "sales department",
                   "research division"};
    junk.anchors = {"of"};
    junk.prob = 0.5;
    spec.rules.push_back(junk);
  }
  {
    PlantedRule junk;
    junk.kind = "spurious-slot";
    junk.type_name = "packaging";
    junk.slot_name = "packaging-material";
    junk.values = {"epoxy"};
    junk.anchors = {"molded"};
    junk.prob = 0.35;
    spec.rules.push_back(junk);
  }

  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// GeneratorSpec file I/O: the schema document notation plus `inventory` and
// `rules` sections.

inline nlohmann::json generator_spec_to_json(const GeneratorSpec& spec) {
  nlohmann::json j = schema_to_json(spec.schema);
  j["seed"] = spec.seed;
  j["n_docs"] = spec.n_docs;
  j["noise"] = spec.noise;
  j["inventory"] = nlohmann::json::array();
  for (const auto& entry : spec.inventory) {
    nlohmann::json ej;
    ej["type"] = entry.type;
    ej["count_weights"] = entry.count_weights;
    ej["slots"] = nlohmann::json::array();
    for (const auto& pool : entry.slots) {
      nlohmann::json pj;
      pj["slot"] = pool.slot;
      if (!pool.weighted_values.empty()) {
        // array form: the draw order must survive the round trip
        pj["values"] = nlohmann::json::array();
        for (const auto& [v, w] : pool.weighted_values)
          pj["values"].push_back({{"value", v}, {"weight", w}});
      }
      if (!pool.open_values.empty()) pj["open_values"] = pool.open_values;
      pj["present_prob"] = pool.present_prob;
      if (!pool.distinct) pj["distinct"] = false;
      ej["slots"].push_back(pj);
    }
    ej["patterns"] = nlohmann::json::array();
    for (const auto& p : entry.pattern_pool)
      ej["patterns"].push_back({{"kind", pattern_kind_name(p.kind)}, {"anchor", p.anchor}});
    ej["min_patterns"] = entry.min_patterns;
    ej["max_patterns"] = entry.max_patterns;
    if (entry.mention_split_prob > 0) {
      ej["mention_split_prob"] = entry.mention_split_prob;
      ej["split_slots"] = entry.split_slots;
    }
    j["inventory"].push_back(ej);
  }
  j["rules"] = nlohmann::json::array();
  for (const auto& rule : spec.rules) {
    nlohmann::json rj;
    rj["kind"] = rule.kind;
    if (rule.kind == "link-if") {
      rj["link"] = rule.link;
      rj["prob"] = rule.prob;
      rj["anchor"] = rule.anchor;
      if (!rule.cases.empty()) {
        rj["cases"] = nlohmann::json::array();
        for (const auto& c : rule.cases) {
          nlohmann::json cj;
          if (!c.from_slot.empty()) {
            cj["from_slot"] = c.from_slot;
            cj["from_value"] = c.from_value;
          }
          if (!c.to_slot.empty()) {
            cj["to_slot"] = c.to_slot;
            cj["to_value"] = c.to_value;
          }
          cj["prob"] = c.prob;
          rj["cases"].push_back(cj);
        }
      }
    } else if (rule.kind == "split-on-multi") {
      rj["link"] = rule.link;
    } else if (rule.kind == "always-parent") {
      rj["child_type"] = rule.child_type;
      if (!rule.child_slot.empty()) {
        rj["child_slot"] = rule.child_slot;
        rj["child_value"] = rule.child_value;
      }
      rj["parent_type"] = rule.parent_type;
      rj["prob"] = rule.prob;
    } else if (rule.kind == "default-cooccurrence") {
      rj["type"] = rule.type_name;
      rj["slot"] = rule.slot_name;
      rj["value"] = rule.value;
      rj["child_type"] = rule.child_type;
      if (!rule.child_slot.empty()) {
        rj["child_slot"] = rule.child_slot;
        rj["child_value"] = rule.child_value;
      }
    } else if (rule.kind == "spurious-slot") {
      rj["type"] = rule.type_name;
      rj["slot"] = rule.slot_name;
      rj["values"] = rule.values;
      rj["anchors"] = rule.anchors;
      rj["prob"] = rule.prob;
    }
    j["rules"].push_back(rj);
  }
  return j;
}

inline GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec spec;
  spec.schema = schema_from_json(j);
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_docs")) spec.n_docs = j["n_docs"].get<int>();
  if (j.contains("noise")) spec.noise = j["noise"].get<double>();
  if (j.contains("inventory")) {
    for (const auto& ej : j["inventory"]) {
      InventoryEntry entry;
      entry.type = detail::require_string(ej, "type", "inventory entry");
      for (const auto& w : detail::require_key(ej, "count_weights", "inventory entry"))
        entry.count_weights.push_back(w.get<double>());
      if (ej.contains("slots")) {
        for (const auto& pj : ej["slots"]) {
          SlotPool pool;
          pool.slot = detail::require_string(pj, "slot", "inventory slot pool");
          if (pj.contains("values"))
            for (const auto& vj : pj["values"])
              pool.weighted_values.push_back(
                  {vj["value"].get<std::string>(), vj["weight"].get<double>()});
          if (pj.contains("open_values"))
            for (const auto& v : pj["open_values"]) pool.open_values.push_back(v.get<std::string>());
          if (pj.contains("present_prob")) pool.present_prob = pj["present_prob"].get<double>();
          if (pj.contains("distinct")) pool.distinct = pj["distinct"].get<bool>();
          entry.slots.push_back(std::move(pool));
        }
      }
      if (ej.contains("patterns")) {
        for (const auto& pj : ej["patterns"]) {
          auto kind = pattern_kind_from_name(pj["kind"].get<std::string>());
          if (!kind) throw ValidationError("generator inventory: unknown pattern kind");
          entry.pattern_pool.push_back({*kind, pj["anchor"].get<std::string>()});
        }
      }
      if (ej.contains("min_patterns")) entry.min_patterns = ej["min_patterns"].get<int>();
      if (ej.contains("max_patterns")) entry.max_patterns = ej["max_patterns"].get<int>();
      if (ej.contains("mention_split_prob"))
        entry.mention_split_prob = ej["mention_split_prob"].get<double>();
      if (ej.contains("split_slots"))
        for (const auto& s : ej["split_slots"]) entry.split_slots.push_back(s.get<std::string>());
      spec.inventory.push_back(std::move(entry));
    }
  }
  if (j.contains("rules")) {
    for (const auto& rj : j["rules"]) {
      PlantedRule rule;
      rule.kind = detail::require_string(rj, "kind", "generator rule");
      if (rule.kind == "link-if") {
        rule.link = detail::require_string(rj, "link", "link-if rule");
        if (rj.contains("prob")) rule.prob = rj["prob"].get<double>();
        if (rj.contains("anchor")) rule.anchor = rj["anchor"].get<std::string>();
        if (rj.contains("cases")) {
          for (const auto& cj : rj["cases"]) {
            LinkCase c;
            if (cj.contains("from_slot")) {
              c.from_slot = cj["from_slot"].get<std::string>();
              c.from_value = cj["from_value"].get<std::string>();
            }
            if (cj.contains("to_slot")) {
              c.to_slot = cj["to_slot"].get<std::string>();
              c.to_value = cj["to_value"].get<std::string>();
            }
            c.prob = cj["prob"].get<double>();
            rule.cases.push_back(std::move(c));
          }
        }
      } else if (rule.kind == "split-on-multi") {
        rule.link = detail::require_string(rj, "link", "split-on-multi rule");
      } else if (rule.kind == "always-parent") {
        rule.child_type = detail::require_string(rj, "child_type", "always-parent rule");
        if (rj.contains("child_slot")) {
          rule.child_slot = rj["child_slot"].get<std::string>();
          rule.child_value = rj["child_value"].get<std::string>();
        }
        rule.parent_type = detail::require_string(rj, "parent_type", "always-parent rule");
        rule.prob = rj.contains("prob") ? rj["prob"].get<double>() : 1.0;
      } else if (rule.kind == "default-cooccurrence") {
        rule.type_name = detail::require_string(rj, "type", "default-cooccurrence rule");
        rule.slot_name = detail::require_string(rj, "slot", "default-cooccurrence rule");
        rule.value = detail::require_string(rj, "value", "default-cooccurrence rule");
        rule.child_type = detail::require_string(rj, "child_type", "default-cooccurrence rule");
        if (rj.contains("child_slot")) {
          rule.child_slot = rj["child_slot"].get<std::string>();
          rule.child_value = rj["child_value"].get<std::string>();
        }
      } else if (rule.kind == "spurious-slot") {
        rule.type_name = detail::require_string(rj, "type", "spurious-slot rule");
        rule.slot_name = detail::require_string(rj, "slot", "spurious-slot rule");
        for (const auto& v : detail::require_key(rj, "values", "spurious-slot rule"))
          rule.values.push_back(v.get<std::string>());
        for (const auto& a : detail::require_key(rj, "anchors", "spurious-slot rule"))
          rule.anchors.push_back(a.get<std::string>());
        rule.prob = rj.contains("prob") ? rj["prob"].get<double>() : 1.0;
      }
      spec.rules.push_back(std::move(rule));
    }
  }
  spec.validate();
  return spec;
}

inline GeneratorSpec load_generator_spec(const std::string& text) {
  return generator_spec_from_json(detail::parse_json(text, "generator spec"));
}

}  // namespace wrapup

#endif  // WRAPUP_SYNTH_HPP

#ifndef WRAPUP_SCHEMA_HPP
#define WRAPUP_SCHEMA_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrapup/util.hpp"

namespace wrapup {

enum class SlotKind { Open, Closed };

struct SlotDef {
  std::string name;
  SlotKind kind = SlotKind::Open;
  std::vector<std::string> allowed_values;  // non-empty iff closed
};

struct ObjectTypeDef {
  std::string name;
  std::vector<SlotDef> slots;

  const SlotDef* slot(const std::string& slot_name) const {
    for (const auto& s : slots)
      if (s.name == slot_name) return &s;
    return nullptr;
  }
};

/// A typed, directed role between two object types. When creates_relation
/// is set, a positive decision does not add the link to the from-token;
/// instead a fresh token of the relation type is created to carry it.
struct LinkTypeDef {
  std::string name;
  std::string from_type;
  std::string to_type;
  std::string creates_relation;  // empty when the link is direct

  /// The object type that carries links of this role in final structures.
  const std::string& carrier_type() const {
    return creates_relation.empty() ? from_type : creates_relation;
  }
};

class DomainSchema {
 public:
  std::vector<ObjectTypeDef> object_types;
  std::vector<LinkTypeDef> link_types;

  const ObjectTypeDef* object_type(const std::string& name) const {
    for (const auto& t : object_types)
      if (t.name == name) return &t;
    return nullptr;
  }

  const LinkTypeDef* link_type(const std::string& name) const {
    for (const auto& l : link_types)
      if (l.name == name) return &l;
    return nullptr;
  }

  bool is_link_carrier(const std::string& token_type, const LinkTypeDef& link) const {
    return token_type == link.carrier_type();
  }

  /// Link types that may connect a parent token of `parent_type` to a child
  /// of `child_type`, i.e. carried by the parent and targeting the child.
  std::vector<const LinkTypeDef*> connecting_links(const std::string& parent_type,
                                                   const std::string& child_type) const {
    std::vector<const LinkTypeDef*> out;
    for (const auto& l : link_types)
      if (l.carrier_type() == parent_type && l.to_type == child_type) out.push_back(&l);
    return out;
  }

  /// Object types that can be pointed to by some link (orphan candidates).
  std::set<std::string> linkable_child_types() const {
    std::set<std::string> out;
    for (const auto& l : link_types) out.insert(l.to_type);
    return out;
  }

  /// The declared link from a relation type back to the from-side of the
  /// decision that materializes it (e.g. capability -> entity). Picked by
  /// name when several qualify.
  const LinkTypeDef* subject_link(const LinkTypeDef& relation_link) const {
    if (relation_link.creates_relation.empty()) return nullptr;
    const LinkTypeDef* best = nullptr;
    for (const auto& l : link_types) {
      if (l.from_type == relation_link.creates_relation && l.creates_relation.empty() &&
          l.to_type == relation_link.from_type) {
        if (best == nullptr || l.name < best->name) best = &l;
      }
    }
    return best;
  }

  std::string fingerprint() const;
  void validate() const;
};

namespace detail {

inline void check_unique(const std::vector<std::string>& names, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second)
      throw ValidationError("duplicate " + what + " name: " + n);
}

}  // namespace detail

inline void DomainSchema::validate() const {
  std::vector<std::string> type_names, link_names;
  for (const auto& t : object_types) type_names.push_back(t.name);
  for (const auto& l : link_types) link_names.push_back(l.name);
  detail::check_unique(type_names, "object-type");
  detail::check_unique(link_names, "link-type");

  for (const auto& t : object_types) {
    if (t.name.empty()) throw ValidationError("object type with empty name");
    std::vector<std::string> slot_names;
    for (const auto& s : t.slots) {
      slot_names.push_back(s.name);
      if (s.kind == SlotKind::Closed && s.allowed_values.size() < 2)
        throw ValidationError("closed slot with fewer than 2 values: " + t.name + "." + s.name);
      if (s.kind == SlotKind::Open && !s.allowed_values.empty())
        throw ValidationError("open slot with a value list: " + t.name + "." + s.name);
    }
    detail::check_unique(slot_names, "slot (" + t.name + ")");
  }

  for (const auto& l : link_types) {
    if (object_type(l.from_type) == nullptr)
      throw ValidationError("link type " + l.name + " names unknown from-type " + l.from_type);
    if (object_type(l.to_type) == nullptr)
      throw ValidationError("link type " + l.name + " names unknown to-type " + l.to_type);
    if (!l.creates_relation.empty() && object_type(l.creates_relation) == nullptr)
      throw ValidationError("link type " + l.name + " names unknown relation type " +
                            l.creates_relation);
  }

  // Cycle check on the from->to graph via iterative leaf stripping.
  std::map<std::string, std::set<std::string>> edges;
  for (const auto& l : link_types) edges[l.from_type].insert(l.to_type);
  std::map<std::string, int> out_degree;
  for (const auto& t : object_types) out_degree[t.name] = 0;
  for (const auto& [from, tos] : edges) out_degree[from] = static_cast<int>(tos.size());
  std::set<std::string> removed;
  bool progress = true;
  while (progress) {
    progress = false;
    for (const auto& t : object_types) {
      if (removed.count(t.name)) continue;
      bool all_removed = true;
      for (const auto& to : edges[t.name])
        if (!removed.count(to) && to != t.name) all_removed = false;
      if (edges[t.name].count(t.name))
        throw ValidationError("cyclic link graph at type " + t.name);
      if (all_removed) {
        removed.insert(t.name);
        progress = true;
      }
    }
  }
  if (removed.size() != object_types.size()) {
    for (const auto& t : object_types)
      if (!removed.count(t.name))
        throw ValidationError("cyclic link graph involving type " + t.name);
  }
}

/// Longest downward path from a type through link edges. Leaf types are 0.
inline int type_depth(const DomainSchema& schema, const std::string& type,
                      std::map<std::string, int>& memo) {
  auto it = memo.find(type);
  if (it != memo.end()) return it->second;
  int depth = 0;
  for (const auto& l : schema.link_types)
    if (l.from_type == type) depth = std::max(depth, 1 + type_depth(schema, l.to_type, memo));
  memo[type] = depth;
  return depth;
}

/// Link types ordered bottom-up: links into leaf-most types first, so that
/// low-level structure exists before higher-level decisions run. Ties are
/// broken by link-type name.
inline std::vector<LinkTypeDef> link_levels(const DomainSchema& schema) {
  std::map<std::string, int> memo;
  std::vector<LinkTypeDef> out = schema.link_types;
  std::stable_sort(out.begin(), out.end(), [&](const LinkTypeDef& a, const LinkTypeDef& b) {
    int da = type_depth(schema, a.to_type, memo);
    int db = type_depth(schema, b.to_type, memo);
    if (da != db) return da < db;
    return a.name < b.name;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Schema document I/O

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const std::string& key,
                                         const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError("missing key '" + key + "' in " + where);
  return *it;
}

inline std::string require_string(const nlohmann::json& j, const std::string& key,
                                  const std::string& where) {
  const auto& v = require_key(j, key, where);
  if (!v.is_string()) throw ValidationError("key '" + key + "' in " + where + " must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline DomainSchema schema_from_json(const nlohmann::json& j) {
  DomainSchema schema;
  const auto& types = detail::require_key(j, "object_types", "schema");
  for (const auto& tj : types) {
    ObjectTypeDef t;
    t.name = detail::require_string(tj, "name", "object type");
    if (tj.contains("slots")) {
      for (const auto& sj : tj["slots"]) {
        SlotDef s;
        s.name = detail::require_string(sj, "name", "slot of " + t.name);
        std::string kind = detail::require_string(sj, "kind", "slot " + s.name);
        if (kind == "open") {
          s.kind = SlotKind::Open;
        } else if (kind == "closed") {
          s.kind = SlotKind::Closed;
        } else {
          throw ValidationError("slot " + t.name + "." + s.name + " has unknown kind '" + kind +
                                "'");
        }
        if (sj.contains("values"))
          for (const auto& v : sj["values"]) s.allowed_values.push_back(v.get<std::string>());
        t.slots.push_back(std::move(s));
      }
    }
    schema.object_types.push_back(std::move(t));
  }
  const auto& links = detail::require_key(j, "link_types", "schema");
  for (const auto& lj : links) {
    LinkTypeDef l;
    l.name = detail::require_string(lj, "name", "link type");
    l.from_type = detail::require_string(lj, "from", "link type " + l.name);
    l.to_type = detail::require_string(lj, "to", "link type " + l.name);
    if (lj.contains("creates_relation")) l.creates_relation = lj["creates_relation"].get<std::string>();
    schema.link_types.push_back(std::move(l));
  }
  schema.validate();
  return schema;
}

inline DomainSchema load_schema(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed schema document: ") + e.what());
  }
  return schema_from_json(j);
}

inline nlohmann::json schema_to_json(const DomainSchema& schema) {
  nlohmann::json j;
  j["object_types"] = nlohmann::json::array();
  for (const auto& t : schema.object_types) {
    nlohmann::json tj;
    tj["name"] = t.name;
    tj["slots"] = nlohmann::json::array();
    for (const auto& s : t.slots) {
      nlohmann::json sj;
      sj["name"] = s.name;
      sj["kind"] = s.kind == SlotKind::Open ? "open" : "closed";
      if (!s.allowed_values.empty()) sj["values"] = s.allowed_values;
      tj["slots"].push_back(sj);
    }
    j["object_types"].push_back(tj);
  }
  j["link_types"] = nlohmann::json::array();
  for (const auto& l : schema.link_types) {
    nlohmann::json lj;
    lj["name"] = l.name;
    lj["from"] = l.from_type;
    lj["to"] = l.to_type;
    if (!l.creates_relation.empty()) lj["creates_relation"] = l.creates_relation;
    j["link_types"].push_back(lj);
  }
  return j;
}

inline std::string DomainSchema::fingerprint() const {
  return util::hex64(util::fnv1a(schema_to_json(*this).dump()));
}

}  // namespace wrapup

#endif  // WRAPUP_SCHEMA_HPP

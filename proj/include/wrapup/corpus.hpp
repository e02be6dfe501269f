#ifndef WRAPUP_CORPUS_HPP
#define WRAPUP_CORPUS_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "wrapup/schema.hpp"
#include "wrapup/util.hpp"

namespace wrapup {

enum class PatternKind { Subj, Dobj, SubjPassive, Pp, Keyword };

inline const char* pattern_kind_name(PatternKind k) {
  switch (k) {
    case PatternKind::Subj: return "subj";
    case PatternKind::Dobj: return "dobj";
    case PatternKind::SubjPassive: return "subj-passive";
    case PatternKind::Pp: return "pp";
    case PatternKind::Keyword: return "keyword";
  }
  return "?";
}

/// Name used when the kind appears inside a feature key. The direct-object
/// kind is spelled out there ("dir-obj-unveiled") while files use "dobj".
inline const char* pattern_kind_feature_name(PatternKind k) {
  return k == PatternKind::Dobj ? "dir-obj" : pattern_kind_name(k);
}

inline std::optional<PatternKind> pattern_kind_from_name(const std::string& s) {
  if (s == "subj") return PatternKind::Subj;
  if (s == "dobj") return PatternKind::Dobj;
  if (s == "subj-passive") return PatternKind::SubjPassive;
  if (s == "pp") return PatternKind::Pp;
  if (s == "keyword") return PatternKind::Keyword;
  return std::nullopt;
}

/// The syntactic context plus anchor word that triggered an extraction.
struct Pattern {
  PatternKind kind = PatternKind::Keyword;
  std::string anchor;  // lowercase, no whitespace

  auto operator<=>(const Pattern&) const = default;
};

/// One mention of a token in the text: where, and which patterns fired.
struct Reference {
  int sentence = 0;
  std::vector<Pattern> patterns;  // may be empty (anaphoric mention)

  auto operator<=>(const Reference&) const = default;
};

struct Link {
  std::string role;    // link-type name
  std::string target;  // token id

  auto operator<=>(const Link&) const = default;
};

/// A (pattern, sentence) pair acquired from a linked token rather than from
/// this token's own mentions.
struct InheritedPattern {
  Pattern pattern;
  int sentence = 0;

  auto operator<=>(const InheritedPattern&) const = default;
};

/// A case frame for one referent: typed slots, its mentions, and links to
/// other tokens. The same shape serves analyzer output, answer-key objects,
/// and final output structures.
struct Token {
  std::string id;
  std::string type;
  std::map<std::string, std::string> slots;  // only non-empty values stored
  std::vector<Reference> references;
  std::vector<Link> links;
  std::vector<InheritedPattern> inherited_patterns;  // filled by the pipeline

  bool operator==(const Token&) const = default;

  bool has_link(const std::string& role, const std::string& target) const {
    for (const auto& l : links)
      if (l.role == role && l.target == target) return true;
    return false;
  }

  void add_link(const std::string& role, const std::string& target) {
    if (!has_link(role, target)) links.push_back({role, target});
  }

  std::optional<int> earliest_sentence() const {
    std::optional<int> best;
    for (const auto& r : references)
      if (!best || r.sentence < *best) best = r.sentence;
    for (const auto& ip : inherited_patterns)
      if (!best || ip.sentence < *best) best = ip.sentence;
    return best;
  }

  /// Own (pattern, sentence) pairs, one per pattern occurrence.
  std::vector<InheritedPattern> own_pattern_pairs() const {
    std::vector<InheritedPattern> out;
    for (const auto& r : references)
      for (const auto& p : r.patterns) out.push_back({p, r.sentence});
    return out;
  }

  std::set<int> mention_sentences() const {
    std::set<int> out;
    for (const auto& r : references) out.insert(r.sentence);
    for (const auto& ip : inherited_patterns) out.insert(ip.sentence);
    return out;
  }

  /// Distinct (kind, anchor) pairs, own plus inherited.
  std::set<Pattern> pattern_set() const {
    std::set<Pattern> out;
    for (const auto& r : references)
      for (const auto& p : r.patterns) out.insert(p);
    for (const auto& ip : inherited_patterns) out.insert(ip.pattern);
    return out;
  }
};

/// Total number of own patterns across all references (inherited excluded).
inline int trigger_count(const Token& token) {
  int n = 0;
  for (const auto& r : token.references) n += static_cast<int>(r.patterns.size());
  return n;
}

struct Document {
  std::string doc_id;
  std::vector<Token> tokens;

  bool operator==(const Document&) const = default;

  const Token* find(const std::string& id) const {
    for (const auto& t : tokens)
      if (t.id == id) return &t;
    return nullptr;
  }
};

using OutputStructure = Document;

struct AnswerKey {
  std::string doc_id;
  std::vector<Token> objects;

  const Token* find(const std::string& id) const {
    for (const auto& t : objects)
      if (t.id == id) return &t;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Validation

/// How strict to be about mention references: analyzer output must carry at
/// least one per token, keys and pipeline outputs may omit them.
enum class TokenOrigin { Analyzer, Key, Output };

inline void validate_tokens(const std::vector<Token>& tokens, const DomainSchema& schema,
                            TokenOrigin origin, const std::string& doc_id) {
  std::set<std::string> ids;
  for (const auto& t : tokens) {
    if (t.id.empty()) throw ValidationError(doc_id + ": token with empty id");
    if (!ids.insert(t.id).second) throw ValidationError(doc_id + ": duplicate token id " + t.id);
  }
  for (const auto& t : tokens) {
    const ObjectTypeDef* type = schema.object_type(t.type);
    if (type == nullptr)
      throw ValidationError(doc_id + ": token " + t.id + " has unknown type " + t.type);
    for (const auto& [slot_name, value] : t.slots) {
      const SlotDef* slot = type->slot(slot_name);
      if (slot == nullptr)
        throw ValidationError(doc_id + ": token " + t.id + " has unknown slot " + slot_name);
      if (value.empty())
        throw ValidationError(doc_id + ": token " + t.id + " stores empty slot " + slot_name);
      if (slot->kind == SlotKind::Closed) {
        bool ok = false;
        for (const auto& v : slot->allowed_values)
          if (util::normalize_value(v) == util::normalize_value(value)) ok = true;
        if (!ok)
          throw ValidationError(doc_id + ": token " + t.id + " slot " + slot_name +
                                " has value '" + value + "' outside the closed class");
      }
    }
    if (origin == TokenOrigin::Analyzer && t.references.empty())
      throw ValidationError(doc_id + ": token " + t.id + " has no references");
    for (const auto& r : t.references) {
      if (r.sentence < 0)
        throw ValidationError(doc_id + ": token " + t.id + " has negative sentence index");
      for (const auto& p : r.patterns) {
        if (p.anchor.empty() || util::has_whitespace(p.anchor))
          throw ValidationError(doc_id + ": token " + t.id + " has invalid pattern anchor '" +
                                p.anchor + "'");
      }
    }
    for (const auto& l : t.links) {
      const LinkTypeDef* link = schema.link_type(l.role);
      if (link == nullptr)
        throw ValidationError(doc_id + ": token " + t.id + " uses unknown link role " + l.role);
      const Token* target = nullptr;
      for (const auto& u : tokens)
        if (u.id == l.target) target = &u;
      if (target == nullptr)
        throw ValidationError(doc_id + ": token " + t.id + " links to missing token " + l.target);
      if (!schema.is_link_carrier(t.type, *link))
        throw ValidationError(doc_id + ": token " + t.id + " of type " + t.type +
                              " cannot carry link role " + l.role);
      if (target->type != link->to_type)
        throw ValidationError(doc_id + ": link " + l.role + " from " + t.id +
                              " targets wrong type " + target->type);
    }
  }
}

// ---------------------------------------------------------------------------
// JSON I/O

namespace detail {

inline nlohmann::json token_to_json(const Token& t) {
  nlohmann::json j;
  j["id"] = t.id;
  j["type"] = t.type;
  j["slots"] = nlohmann::json::object();
  for (const auto& [k, v] : t.slots) j["slots"][k] = v;
  j["references"] = nlohmann::json::array();
  for (const auto& r : t.references) {
    nlohmann::json rj;
    rj["sentence"] = r.sentence;
    rj["patterns"] = nlohmann::json::array();
    for (const auto& p : r.patterns)
      rj["patterns"].push_back({{"kind", pattern_kind_name(p.kind)}, {"anchor", p.anchor}});
    j["references"].push_back(rj);
  }
  if (!t.links.empty()) {
    std::vector<Link> links = t.links;
    std::sort(links.begin(), links.end());
    j["links"] = nlohmann::json::array();
    for (const auto& l : links) j["links"].push_back({{"role", l.role}, {"target", l.target}});
  }
  return j;
}

inline Token token_from_json(const nlohmann::json& j) {
  Token t;
  t.id = require_string(j, "id", "token");
  t.type = require_string(j, "type", "token " + t.id);
  if (j.contains("slots")) {
    for (const auto& [k, v] : j["slots"].items()) {
      std::string value = v.get<std::string>();
      if (!util::trim(value).empty()) t.slots[k] = value;
    }
  }
  if (j.contains("references")) {
    for (const auto& rj : j["references"]) {
      Reference r;
      r.sentence = require_key(rj, "sentence", "reference of " + t.id).get<int>();
      if (rj.contains("patterns")) {
        for (const auto& pj : rj["patterns"]) {
          Pattern p;
          std::string kind = require_string(pj, "kind", "pattern of " + t.id);
          auto k = pattern_kind_from_name(kind);
          if (!k)
            throw ValidationError("token " + t.id + ": unknown pattern kind '" + kind + "'");
          p.kind = *k;
          p.anchor = util::lowercase(require_string(pj, "anchor", "pattern of " + t.id));
          r.patterns.push_back(std::move(p));
        }
      }
      t.references.push_back(std::move(r));
    }
  }
  if (j.contains("links")) {
    for (const auto& lj : j["links"]) {
      Link l;
      l.role = require_string(lj, "role", "link of " + t.id);
      l.target = require_string(lj, "target", "link of " + t.id);
      t.links.push_back(std::move(l));
    }
  }
  return t;
}

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed " + what + ": " + e.what());
  }
}

inline std::vector<Token> tokens_from_json(const nlohmann::json& arr) {
  std::vector<Token> tokens;
  for (const auto& tj : arr) tokens.push_back(token_from_json(tj));
  return tokens;
}

}  // namespace detail

inline Document parse_document(const std::string& text, const DomainSchema& schema) {
  nlohmann::json j = detail::parse_json(text, "document");
  Document doc;
  doc.doc_id = detail::require_string(j, "doc_id", "document");
  if (j.contains("tokens")) doc.tokens = detail::tokens_from_json(j["tokens"]);
  validate_tokens(doc.tokens, schema, TokenOrigin::Analyzer, doc.doc_id);
  return doc;
}

inline AnswerKey parse_answer_key(const std::string& text, const DomainSchema& schema) {
  nlohmann::json j = detail::parse_json(text, "answer key");
  AnswerKey key;
  key.doc_id = detail::require_string(j, "doc_id", "answer key");
  if (j.contains("objects")) key.objects = detail::tokens_from_json(j["objects"]);
  validate_tokens(key.objects, schema, TokenOrigin::Key, key.doc_id);
  return key;
}

inline OutputStructure parse_output(const std::string& text, const DomainSchema& schema) {
  nlohmann::json j = detail::parse_json(text, "output structure");
  OutputStructure out;
  out.doc_id = detail::require_string(j, "doc_id", "output structure");
  if (j.contains("tokens")) out.tokens = detail::tokens_from_json(j["tokens"]);
  validate_tokens(out.tokens, schema, TokenOrigin::Output, out.doc_id);
  return out;
}

/// Byte-stable serialization: tokens sorted by id, links by (role, target).
inline std::string serialize_output(const OutputStructure& out) {
  nlohmann::json j;
  j["doc_id"] = out.doc_id;
  std::vector<const Token*> ordered;
  for (const auto& t : out.tokens) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(),
            [](const Token* a, const Token* b) { return a->id < b->id; });
  j["tokens"] = nlohmann::json::array();
  for (const Token* t : ordered) j["tokens"].push_back(detail::token_to_json(*t));
  return j.dump(2) + "\n";
}

inline std::string serialize_document(const Document& doc) { return serialize_output(doc); }

inline std::string serialize_answer_key(const AnswerKey& key) {
  nlohmann::json j;
  j["doc_id"] = key.doc_id;
  std::vector<const Token*> ordered;
  for (const auto& t : key.objects) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(),
            [](const Token* a, const Token* b) { return a->id < b->id; });
  j["objects"] = nlohmann::json::array();
  for (const Token* t : ordered) j["objects"].push_back(detail::token_to_json(*t));
  return j.dump(2) + "\n";
}

}  // namespace wrapup

#endif  // WRAPUP_CORPUS_HPP

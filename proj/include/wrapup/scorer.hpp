#ifndef WRAPUP_SCORER_HPP
#define WRAPUP_SCORER_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "wrapup/corpus.hpp"
#include "wrapup/features.hpp"

namespace wrapup {

/// Injective map output-token-id -> key-object-id over same-type pairs.
using Alignment = std::map<std::string, std::string>;

/// Greedy maximum-similarity matching. A pair's score counts equal slot
/// values plus links that agree under the previous round's alignment; the
/// link term is what disambiguates objects whose slots are identical (split
/// copies, relation objects, inferred parents next to a real twin). The
/// greedy pass is repeated so link agreement can revise early slot-tie
/// commitments; a fixed round cap keeps it deterministic.
inline Alignment align(const OutputStructure& out, const AnswerKey& key) {
  if (out.doc_id != key.doc_id)
    throw ValidationError("align: doc_id mismatch: " + out.doc_id + " vs " + key.doc_id);

  Alignment previous;
  for (int round = 0; round < 4; ++round) {
    Alignment alignment;
    std::set<std::string> used_tokens, used_keys;

    auto pair_score = [&](const Token& t, const Token& k) {
      int score = detail::shared_slot_values(t, k);
      for (const auto& l : t.links) {
        auto it = alignment.find(l.target);
        if (it != alignment.end()) {
          if (k.has_link(l.role, it->second)) ++score;
          continue;
        }
        auto prev = previous.find(l.target);
        if (prev != previous.end() && k.has_link(l.role, prev->second)) ++score;
      }
      return score;
    };

    for (;;) {
      const Token* best_t = nullptr;
      const Token* best_k = nullptr;
      int best_score = 0;
      for (const auto& t : out.tokens) {
        if (used_tokens.count(t.id)) continue;
        for (const auto& k : key.objects) {
          if (used_keys.count(k.id) || k.type != t.type) continue;
          int score = pair_score(t, k);
          if (score > best_score ||
              (score == best_score && score > 0 && best_t != nullptr &&
               std::tie(t.id, k.id) < std::tie(best_t->id, best_k->id))) {
            best_t = &t;
            best_k = &k;
            best_score = score;
          }
        }
      }
      if (best_t == nullptr || best_score < 1) break;
      alignment[best_t->id] = best_k->id;
      used_tokens.insert(best_t->id);
      used_keys.insert(best_k->id);
    }

    if (alignment == previous) return alignment;
    previous = std::move(alignment);
  }
  return previous;
}

struct Tally {
  int possible = 0;
  int actual = 0;
  int correct = 0;
};

/// Recall, precision and F-measure with per-slot and per-link tallies.
/// Fractions are in [0,1]; the CLI renders percentages.
struct ScoreReport {
  int possible = 0;
  int actual = 0;
  int correct = 0;
  double recall = 0.0;
  double precision = 0.0;
  double f_measure = 0.0;
  double beta = 1.0;
  std::map<std::string, Tally> per_slot;
  std::map<std::string, Tally> per_link;
};

/// F = ((b^2+1)PR) / (b^2 P + R), and 0 when both P and R are 0.
inline double f_measure(double precision, double recall, double beta = 1.0) {
  if (beta <= 0) throw ValidationError("f_measure: beta must be positive");
  double b2 = beta * beta;
  double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (b2 + 1.0) * precision * recall / denom;
}

namespace detail {

inline void finish_report(ScoreReport& report) {
  for (const auto& [name, t] : report.per_slot) {
    report.possible += t.possible;
    report.actual += t.actual;
    report.correct += t.correct;
  }
  for (const auto& [name, t] : report.per_link) {
    report.possible += t.possible;
    report.actual += t.actual;
    report.correct += t.correct;
  }
  report.recall = report.possible == 0 ? 0.0
                                       : static_cast<double>(report.correct) / report.possible;
  report.precision = report.actual == 0 ? 0.0
                                        : static_cast<double>(report.correct) / report.actual;
  report.f_measure = f_measure(report.precision, report.recall, report.beta);
}

inline void tally_pair(const OutputStructure& out, const AnswerKey& key,
                       const Alignment& alignment, ScoreReport& report) {
  for (const auto& k : key.objects) {
    for (const auto& [slot, value] : k.slots) report.per_slot[slot].possible += 1;
    for (const auto& l : k.links) report.per_link[l.role].possible += 1;
  }
  std::map<std::string, const Token*> key_by_id;
  for (const auto& k : key.objects) key_by_id[k.id] = &k;

  for (const auto& t : out.tokens) {
    auto it = alignment.find(t.id);
    const Token* k = it == alignment.end() ? nullptr : key_by_id[it->second];
    for (const auto& [slot, value] : t.slots) {
      auto& tally = report.per_slot[slot];
      tally.actual += 1;
      if (k != nullptr) {
        auto kv = k->slots.find(slot);
        if (kv != k->slots.end() &&
            util::normalize_value(kv->second) == util::normalize_value(value))
          tally.correct += 1;
      }
    }
    for (const auto& l : t.links) {
      auto& tally = report.per_link[l.role];
      tally.actual += 1;
      auto target_it = alignment.find(l.target);
      if (k != nullptr && target_it != alignment.end() && k->has_link(l.role, target_it->second))
        tally.correct += 1;
    }
  }
}

}  // namespace detail

/// possible = key fills + key links; actual = reported fills + links;
/// correct = aligned agreements. No partial credit.
inline ScoreReport score(const OutputStructure& out, const AnswerKey& key, double beta = 1.0) {
  if (beta <= 0) throw ValidationError("score: beta must be positive");
  ScoreReport report;
  report.beta = beta;
  Alignment alignment = align(out, key);
  detail::tally_pair(out, key, alignment, report);
  detail::finish_report(report);
  return report;
}

/// Micro-average: counts are summed across documents before computing the
/// fractions.
inline ScoreReport score_corpus(const std::vector<std::pair<const OutputStructure*, const AnswerKey*>>& pairs,
                                double beta = 1.0) {
  if (beta <= 0) throw ValidationError("score_corpus: beta must be positive");
  ScoreReport report;
  report.beta = beta;
  for (const auto& [out, key] : pairs) {
    Alignment alignment = align(*out, *key);
    detail::tally_pair(*out, *key, alignment, report);
  }
  detail::finish_report(report);
  return report;
}

/// Arithmetic mean of per-part recall/precision (and of F), the way summary
/// rows average independently scored test parts.
struct MacroAverage {
  double recall = 0.0;
  double precision = 0.0;
  double f_measure = 0.0;
};

inline MacroAverage macro_average(const std::vector<ScoreReport>& reports) {
  MacroAverage avg;
  if (reports.empty()) return avg;
  for (const auto& r : reports) {
    avg.recall += r.recall;
    avg.precision += r.precision;
    avg.f_measure += r.f_measure;
  }
  avg.recall /= static_cast<double>(reports.size());
  avg.precision /= static_cast<double>(reports.size());
  avg.f_measure /= static_cast<double>(reports.size());
  return avg;
}

// ---------------------------------------------------------------------------
// Report rendering

inline std::string render_report(const ScoreReport& report, bool tsv) {
  auto pct = [](double v) { return util::format_fraction(v * 100.0, 1); };
  std::string out;
  auto row = [&](const std::string& name, const Tally& t) {
    double r = t.possible == 0 ? 0.0 : static_cast<double>(t.correct) / t.possible;
    double p = t.actual == 0 ? 0.0 : static_cast<double>(t.correct) / t.actual;
    double f = f_measure(p, r, report.beta);
    if (tsv) {
      out += name + "\t" + std::to_string(t.possible) + "\t" + std::to_string(t.actual) + "\t" +
             std::to_string(t.correct) + "\t" + pct(r) + "\t" + pct(p) + "\t" + pct(f) + "\n";
    } else {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-28s %8d %8d %8d %7s %7s %7s\n", name.c_str(), t.possible,
                    t.actual, t.correct, pct(r).c_str(), pct(p).c_str(), pct(f).c_str());
      out += buf;
    }
  };
  if (tsv) {
    out += "name\tpossible\tactual\tcorrect\trecall\tprecision\tf\n";
  } else {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %8s %7s %7s %7s\n", "slot/link", "possible",
                  "actual", "correct", "R", "P", "F");
    out += buf;
  }
  for (const auto& [name, t] : report.per_slot) row("slot " + name, t);
  for (const auto& [name, t] : report.per_link) row("link " + name, t);
  row("TOTAL", {report.possible, report.actual, report.correct});
  return out;
}

}  // namespace wrapup

#endif  // WRAPUP_SCORER_HPP

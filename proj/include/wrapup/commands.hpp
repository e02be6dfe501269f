#ifndef WRAPUP_COMMANDS_HPP
#define WRAPUP_COMMANDS_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wrapup/pipeline.hpp"
#include "wrapup/scorer.hpp"
#include "wrapup/synth.hpp"

namespace wrapup::cli {

namespace fs = std::filesystem;

struct Options {
  std::string schema_path;
  std::string corpus_dir;
  std::string model_path;
  std::string out_dir;
  std::string spec_path;   // synth
  std::string category;    // show-tree
  std::uint64_t seed = 42;
  bool seed_given = false;
  int n_docs = 0;  // synth override
  double beta = 1.0;
  std::string emit = "table";
  bool trace = false;
  bool macro = false;
  bool reference = false;  // synth: use the built-in reference spec
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write-then-rename so concurrent readers never see a torn file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

inline DomainSchema load_schema_file(const std::string& path) {
  return load_schema(read_file(path));
}

/// Paired <doc_id>.tokens / <doc_id>.key files in a corpus directory.
inline std::vector<std::pair<std::string, std::string>> list_corpus_pairs(
    const std::string& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("corpus directory not found: " + dir);
  std::map<std::string, int> stems;  // 1 = tokens, 2 = key, 3 = both
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    fs::path p = entry.path();
    if (p.extension() == ".tokens") stems[p.stem().string()] |= 1;
    if (p.extension() == ".key") stems[p.stem().string()] |= 2;
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [stem, mask] : stems) {
    if (mask != 3)
      throw ValidationError("unpaired corpus file for doc id '" + stem + "' (need both " + stem +
                            ".tokens and " + stem + ".key)");
    pairs.push_back({(fs::path(dir) / (stem + ".tokens")).string(),
                     (fs::path(dir) / (stem + ".key")).string()});
  }
  if (pairs.empty()) throw ValidationError("no .tokens/.key pairs in " + dir);
  return pairs;
}

inline std::vector<std::pair<Document, AnswerKey>> load_corpus(const std::string& dir,
                                                               const DomainSchema& schema) {
  auto files = list_corpus_pairs(dir);
  std::vector<std::pair<Document, AnswerKey>> corpus(files.size());
  util::parallel_for(files.size(), [&](size_t i) {
    Document doc = parse_document(read_file(files[i].first), schema);
    AnswerKey key = parse_answer_key(read_file(files[i].second), schema);
    if (doc.doc_id != key.doc_id)
      throw ValidationError("doc_id mismatch between " + files[i].first + " and " +
                            files[i].second);
    corpus[i] = {std::move(doc), std::move(key)};
  });
  return corpus;
}

// ---------------------------------------------------------------------------

inline int cmd_train(const Options& opt, std::ostream& out, std::ostream& err) {
  try {
    DomainSchema schema = load_schema_file(opt.schema_path);
    auto corpus = load_corpus(opt.corpus_dir, schema);
    std::map<std::string, std::pair<int, ParamChoice>> summary;
    TrainedModel model = train(corpus, schema, opt.seed, &summary);
    write_file_atomic(opt.model_path, save_model(model));
    out << "trained " << model.trees.size() << " trees from " << corpus.size() << " documents\n";
    for (const auto& [cat, info] : summary)
      out << cat << "  instances=" << info.first << "  min_partition=" << info.second.min_partition
          << "  threshold=" << util::format_fraction(info.second.threshold, 1) << "\n";
    out << "model written to " << opt.model_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_run(const Options& opt, std::ostream& out, std::ostream& err) {
  try {
    DomainSchema schema = load_schema_file(opt.schema_path);
    TrainedModel model = load_model(read_file(opt.model_path));
    if (model.schema_fingerprint != schema.fingerprint())
      throw ValidationError("model/schema fingerprint mismatch");
    if (!fs::is_directory(opt.corpus_dir))
      throw ValidationError("corpus directory not found: " + opt.corpus_dir);
    std::vector<std::string> inputs;
    for (const auto& entry : fs::directory_iterator(opt.corpus_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".tokens")
        inputs.push_back(entry.path().string());
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw ValidationError("no .tokens files in " + opt.corpus_dir);

    std::vector<std::string> errors(inputs.size());
    util::parallel_for(inputs.size(), [&](size_t i) {
      try {
        Document doc = parse_document(read_file(inputs[i]), schema);
        std::vector<ProvenanceEntry> log;
        OutputStructure result = run_pipeline(doc, model, schema, &log);
        fs::path out_path = fs::path(opt.out_dir) / (doc.doc_id + ".out");
        write_file_atomic(out_path.string(), serialize_output(result));
        if (opt.trace) {
          fs::path trace_path = fs::path(opt.out_dir) / (doc.doc_id + ".trace");
          write_file_atomic(trace_path.string(), render_provenance(log));
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    for (const auto& msg : errors)
      if (!msg.empty()) throw ValidationError(msg);
    out << "wrote " << inputs.size() << " outputs to " << opt.out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_score(const Options& opt, std::ostream& out, std::ostream& err) {
  try {
    DomainSchema schema = load_schema_file(opt.schema_path);
    if (!fs::is_directory(opt.out_dir))
      throw ValidationError("output directory not found: " + opt.out_dir);
    std::vector<std::pair<OutputStructure, AnswerKey>> pairs;
    std::vector<std::string> out_files;
    for (const auto& entry : fs::directory_iterator(opt.out_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".out")
        out_files.push_back(entry.path().string());
    std::sort(out_files.begin(), out_files.end());
    for (const auto& out_file : out_files) {
      fs::path key_path = fs::path(opt.corpus_dir) / (fs::path(out_file).stem().string() + ".key");
      if (!fs::exists(key_path)) continue;
      pairs.push_back({parse_output(read_file(out_file), schema),
                       parse_answer_key(read_file(key_path.string()), schema)});
    }
    if (pairs.empty()) throw ValidationError("no paired .out/.key files to score");

    bool tsv = opt.emit == "tsv";
    if (opt.macro) {
      std::vector<ScoreReport> reports;
      for (const auto& [o, k] : pairs) reports.push_back(score(o, k, opt.beta));
      MacroAverage avg = macro_average(reports);
      auto pct = [](double v) { return util::format_fraction(v * 100.0, 1); };
      if (tsv) {
        out << "documents\trecall\tprecision\tf\n";
        out << reports.size() << "\t" << pct(avg.recall) << "\t" << pct(avg.precision) << "\t"
            << pct(avg.f_measure) << "\n";
      } else {
        out << "macro average over " << reports.size() << " documents\n";
        out << "Avg.  R=" << pct(avg.recall) << "  P=" << pct(avg.precision)
            << "  F=" << pct(avg.f_measure) << "\n";
      }
      return 0;
    }
    std::vector<std::pair<const OutputStructure*, const AnswerKey*>> refs;
    for (const auto& [o, k] : pairs) refs.push_back({&o, &k});
    ScoreReport report = score_corpus(refs, opt.beta);
    out << render_report(report, tsv);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_cv(const Options& opt, std::ostream& out, std::ostream& err) {
  try {
    DomainSchema schema = load_schema_file(opt.schema_path);
    auto corpus = load_corpus(opt.corpus_dir, schema);
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
    out << "category\tmin_partition\tthreshold\tmean_f\n";
    for (const auto& [cat_key, instances] : pool) {
      std::vector<GridCell> grid;
      ParamChoice choice = select_params(instances, parse_category_key(cat_key), opt.seed, &grid);
      for (const auto& cell : grid)
        out << cat_key << "\t" << cell.min_partition << "\t"
            << util::format_fraction(cell.threshold, 1) << "\t"
            << util::format_fraction(cell.mean_score, 4) << "\n";
      out << cat_key << "\tselected\t" << choice.min_partition << "\t"
          << util::format_fraction(choice.threshold, 1) << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_synth(const Options& opt, std::ostream& out, std::ostream& err) {
  try {
    GeneratorSpec spec;
    if (opt.reference) {
      spec = reference_spec();
    } else if (!opt.spec_path.empty()) {
      spec = load_generator_spec(read_file(opt.spec_path));
    } else {
      throw ValidationError("synth needs --spec <file> or --reference");
    }
    if (opt.seed_given) spec.seed = opt.seed;
    if (opt.n_docs > 0) spec.n_docs = opt.n_docs;
    auto corpus = generate(spec);
    for (const auto& [doc, key] : corpus) {
      write_file_atomic((fs::path(opt.out_dir) / (doc.doc_id + ".tokens")).string(),
                        serialize_document(doc));
      write_file_atomic((fs::path(opt.out_dir) / (key.doc_id + ".key")).string(),
                        serialize_answer_key(key));
    }
    write_file_atomic((fs::path(opt.out_dir) / "schema.json").string(),
                      schema_to_json(spec.schema).dump(2) + "\n");
    write_file_atomic((fs::path(opt.out_dir) / "generator.json").string(),
                      generator_spec_to_json(spec).dump(2) + "\n");
    out << "wrote " << corpus.size() << " document/key pairs to " << opt.out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

namespace detail {

inline void show_node(const TreeNode& node, bool binary, int depth, const std::string& head,
                      std::ostream& out) {
  out << std::string(static_cast<size_t>(depth) * 2, ' ') << head << " ["
      << wrapup::detail::render_counts(node.counts, binary) << "]";
  int total = total_count(node.counts);
  if (total > 0) {
    double frac;
    if (binary) {
      auto it = node.counts.find("positive");
      frac = it == node.counts.end() ? 0.0 : static_cast<double>(it->second) / total;
    } else {
      int best = 0;
      for (const auto& [cls, c] : node.counts) best = std::max(best, c);
      frac = static_cast<double>(best) / total;
    }
    out << " " << util::format_fraction(frac * 100.0, 1) << "%";
  }
  if (!node.leaf()) out << " (feature=" << node.split_feature << ")";
  out << "\n";
  for (const auto& [value, child] : node.branches)
    show_node(child, binary, depth + 1, "value=" + value, out);
}

}  // namespace detail

inline int cmd_show_tree(const Options& opt, std::ostream& out, std::ostream& err) {
  try {
    TrainedModel model = load_model(read_file(opt.model_path));
    bool found = false;
    for (const auto& [cat, tree] : model.trees) {
      if (!opt.category.empty() && cat != opt.category) continue;
      found = true;
      out << cat << "  (min_partition=" << tree.min_partition
          << ", threshold=" << util::format_fraction(tree.threshold, 1) << ")\n";
      detail::show_node(tree.root, tree.category.binary(), 0, "root", out);
      out << "\n";
    }
    if (!found) throw ValidationError("no such category in model: " + opt.category);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int cmd_dump_instances(const Options& opt, std::ostream& out, std::ostream& err) {
  try {
    DomainSchema schema = load_schema_file(opt.schema_path);
    auto corpus = load_corpus(opt.corpus_dir, schema);
    std::vector<std::map<std::string, std::vector<Instance>>> per_doc(corpus.size());
    util::parallel_for(corpus.size(), [&](size_t i) {
      per_doc[i] = teacher_forced_instances(corpus[i].first, corpus[i].second, schema);
    });
    std::map<std::string, std::vector<Instance>> pool;
    for (auto& doc_pool : per_doc)
      for (auto& [cat, instances] : doc_pool)
        for (auto& inst : instances) pool[cat].push_back(std::move(inst));
    for (const auto& [cat, instances] : pool)
      for (const auto& inst : instances) out << instance_record(inst) << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace wrapup::cli

#endif  // WRAPUP_COMMANDS_HPP

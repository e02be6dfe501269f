// Command-line front end: train / run / score / cv / synth / show-tree /
// dump-instances. Exit codes: 0 success, 1 assertion failure, 2 usage or
// input error.

#include <iostream>

#include <CLI11.hpp>

#include "wrapup/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"wrapup - trainable discourse analysis for information extraction"};
  app.require_subcommand(1);

  wrapup::cli::Options opt;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", opt.seed, "random seed")->each([&](const std::string&) {
      opt.seed_given = true;
    });
    cmd->add_option("--beta", opt.beta, "F-measure beta");
    cmd->add_option("--emit", opt.emit, "output format: table or tsv")
        ->check(CLI::IsMember({"table", "tsv"}));
  };

  CLI::App* train = app.add_subcommand("train", "build decision trees from a training corpus");
  train->add_option("--schema", opt.schema_path, "schema document")->required();
  train->add_option("--corpus", opt.corpus_dir, "directory of .tokens/.key pairs")->required();
  train->add_option("--model", opt.model_path, "model file to write")->required();
  add_common(train);

  CLI::App* run = app.add_subcommand("run", "apply a trained model to documents");
  run->add_option("--schema", opt.schema_path, "schema document")->required();
  run->add_option("--corpus", opt.corpus_dir, "directory of .tokens files")->required();
  run->add_option("--model", opt.model_path, "trained model file")->required();
  run->add_option("--out-dir", opt.out_dir, "directory for .out files")->required();
  run->add_flag("--trace", opt.trace, "also write .trace provenance logs");
  add_common(run);

  CLI::App* score = app.add_subcommand("score", "score outputs against answer keys");
  score->add_option("--schema", opt.schema_path, "schema document")->required();
  score->add_option("--corpus", opt.corpus_dir, "directory holding the .key files")->required();
  score->add_option("--out-dir", opt.out_dir, "directory holding the .out files")->required();
  score->add_flag("--macro", opt.macro, "arithmetic mean of per-document reports");
  add_common(score);

  CLI::App* cv = app.add_subcommand("cv", "print the cross-validation grid per category");
  cv->add_option("--schema", opt.schema_path, "schema document")->required();
  cv->add_option("--corpus", opt.corpus_dir, "directory of .tokens/.key pairs")->required();
  add_common(cv);

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--spec", opt.spec_path, "generator spec file");
  synth->add_flag("--reference", opt.reference, "use the built-in reference spec");
  synth->add_option("--out-dir", opt.out_dir, "directory for the corpus")->required();
  synth->add_option("--n-docs", opt.n_docs, "override the spec's document count");
  add_common(synth);

  CLI::App* show = app.add_subcommand("show-tree", "print trees with per-node statistics");
  show->add_option("--model", opt.model_path, "trained model file")->required();
  show->add_option("--category", opt.category, "category key (default: all)");
  add_common(show);

  CLI::App* dump = app.add_subcommand("dump-instances", "emit labeled training instances");
  dump->add_option("--schema", opt.schema_path, "schema document")->required();
  dump->add_option("--corpus", opt.corpus_dir, "directory of .tokens/.key pairs")->required();
  add_common(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (train->parsed()) return wrapup::cli::cmd_train(opt, std::cout, std::cerr);
  if (run->parsed()) return wrapup::cli::cmd_run(opt, std::cout, std::cerr);
  if (score->parsed()) return wrapup::cli::cmd_score(opt, std::cout, std::cerr);
  if (cv->parsed()) return wrapup::cli::cmd_cv(opt, std::cout, std::cerr);
  if (synth->parsed()) return wrapup::cli::cmd_synth(opt, std::cout, std::cerr);
  if (show->parsed()) return wrapup::cli::cmd_show_tree(opt, std::cout, std::cerr);
  if (dump->parsed()) return wrapup::cli::cmd_dump_instances(opt, std::cout, std::cerr);
  return 2;
}

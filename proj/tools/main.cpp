// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: corpus generation, pretraining, single training
// runs, evaluation, the full benchmark suites, report rendering, and
// provenance verification. All artifacts are written under --out.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "xluda/bench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xluda;

namespace {

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open " + path);
  json j;
  f >> j;
  return j;
}

void dump_json(const json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

// Shared flag set: --config carries a full ExperimentSpec document; --spec,
// --seed and --jobs override individual fields from it.
struct CommonArgs {
  std::string spec_file;
  std::string config_file;
  std::string out_dir = "out";
  std::int64_t seed = -1;
  int jobs = 0;
};

ExperimentSpec resolve_spec(const CommonArgs& a, bool single_seed) {
  ExperimentSpec spec;
  if (!a.config_file.empty()) spec = experimentspec_from_json(load_json(a.config_file));
  if (!a.spec_file.empty()) spec.gen_spec = genspec_from_json(load_json(a.spec_file));
  if (a.seed >= 0) {
    spec.seeds = {static_cast<std::uint64_t>(a.seed)};
    spec.base_config.seed = static_cast<std::uint64_t>(a.seed);
  }
  if (single_seed && spec.seeds.size() > 1) spec.seeds.resize(1);
  if (a.jobs > 0) spec.jobs = a.jobs;
  spec.out_dir = a.out_dir;
  spec.validate();
  return spec;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--spec", a.spec_file, "corpus generation spec (JSON)");
  cmd->add_option("--config", a.config_file, "experiment config (JSON); flags override its fields");
  cmd->add_option("--out", a.out_dir, "artifact output directory");
  cmd->add_option("--seed", a.seed, "seed override");
  cmd->add_option("--jobs", a.jobs, "worker threads for benchmark cells");
}

int cmd_gen(const CommonArgs& a) {
  ExperimentSpec spec = resolve_spec(a, true);
  std::uint64_t seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : spec.corpus_seed;
  CorpusBundle b = generate_corpus(spec.gen_spec, seed);
  fs::path dir = fs::path(a.out_dir) / "datasets";
  fs::create_directories(dir);
  write_jsonl(b.labeled_src, (dir / "labeled_src.jsonl").string());
  write_jsonl(b.unlabeled_tgt, (dir / "unlabeled_tgt.jsonl").string());
  write_jsonl(b.unlabeled_src, (dir / "unlabeled_src.jsonl").string());
  write_jsonl(b.test_tgt, (dir / "test_tgt.jsonl").string());
  write_jsonl(b.test_src, (dir / "test_src.jsonl").string());
  write_jsonl(b.general_pretrain, (dir / "general.jsonl").string());
  json manifest;
  manifest["gen_spec"] = genspec_to_json(spec.gen_spec);
  manifest["seed"] = seed;
  manifest["splits"] = {{"labeled_src", b.labeled_src.size()},   {"unlabeled_tgt", b.unlabeled_tgt.size()},
                        {"unlabeled_src", b.unlabeled_src.size()}, {"test_tgt", b.test_tgt.size()},
                        {"test_src", b.test_src.size()},         {"general", b.general_pretrain.size()}};
  dump_json(manifest, dir / "manifest.json");
  std::cout << "wrote 6 splits + manifest to " << dir.string() << "\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& a, const std::string& stage) {
  ExperimentSpec spec = resolve_spec(a, true);
  BenchContext ctx(spec);
  TrainConfig cfg = spec.base_config;
  Checkpoint ckpt;
  if (stage == "generic") {
    ckpt = ctx.generic_checkpoint(cfg);
  } else {
    ckpt = ctx.domain_checkpoint(cfg, spec.domain_mode);
  }
  fs::path dir = fs::path(a.out_dir) / "checkpoints";
  fs::create_directories(dir);
  std::string name = stage + "-s" + std::to_string(cfg.seed) + ".json";
  save_checkpoint(ckpt, (dir / name).string());
  std::cout << "wrote " << (dir / name).string() << " (step " << ckpt.step << ", hash " << checkpoint_hash(ckpt)
            << ")\n";
  return 0;
}

int cmd_train(const CommonArgs& a) {
  ExperimentSpec spec = resolve_spec(a, true);
  BenchContext ctx(spec);
  RunSpec run = base_run(ctx, spec.base_config.method, spec.base_config.base_mode, spec.base_config.seed);
  run.config = spec.base_config;  // honor every configured field, not just method/base
  RunOutcome o = run_with_sweep(ctx, run);
  std::string id = to_string(run.config.method) + "-" + to_string(run.config.base_mode) + "-s" +
                   std::to_string(run.config.seed);
  dump_json(o.provenance, fs::path(a.out_dir) / "runs" / id / "provenance.json");
  std::cout << "run " << id << ": target_error=" << o.target_error << " source_error=" << o.source_error
            << " dev_error=" << o.dev_err << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint_path) {
  ExperimentSpec spec = resolve_spec(a, true);
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  CorpusBundle b = generate_corpus(spec.gen_spec, spec.corpus_seed);
  Vocab vocab = build_vocab(b);
  if (ckpt.vocab_hash != 0 && ckpt.vocab_hash != vocab_hash(vocab))
    throw std::invalid_argument("checkpoint vocabulary does not match this corpus spec");
  CipherChannel channel = CipherChannel::make(spec.gen_spec, spec.channel_eps, spec.channel_m, spec.channel_seed);
  double tgt = evaluate(ckpt.params, b.test_tgt, spec.base_config.eval_input, channel, vocab, spec.base_config.max_len);
  double src = evaluate(ckpt.params, b.test_src, EvalInput::original, channel, vocab, spec.base_config.max_len);
  std::cout << "target_error=" << tgt << " source_error=" << src << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& a, const std::string& ablation) {
  ExperimentSpec spec = resolve_spec(a, false);
  std::vector<ResultsTable> tables;
  auto run_one = [&](const std::string& name) {
    if (name == "monolingual_domain") {
      ExperimentSpec mono = spec;
      mono.gen_spec.shared_surface = true;
      BenchContext mono_ctx(mono);
      tables.push_back(run_monolingual_domain(mono_ctx));
      return;
    }
    BenchContext ctx(spec);
    if (name == "main")
      tables.push_back(run_main_matrix(ctx));
    else if (name == "aug")
      tables.push_back(run_aug_ablation(ctx));
    else if (name == "translate")
      tables.push_back(run_translate_ablation(ctx));
    else if (name == "temperature")
      tables.push_back(run_temperature_sweep(ctx));
    else if (name == "curve")
      tables.push_back(run_learning_curve(ctx));
    else if (name == "source_unlabeled")
      tables.push_back(run_source_unlabeled_baseline(ctx));
    else
      throw std::invalid_argument("unknown ablation: " + name);
  };
  if (ablation == "all") {
    for (const char* n : {"main", "aug", "translate", "temperature", "curve", "source_unlabeled",
                          "monolingual_domain"})
      run_one(n);
  } else {
    run_one(ablation);
  }
  std::string reports = a.out_dir + "/reports";
  report(tables, "csv", reports);
  report(tables, "markdown", reports);
  for (const auto& t : tables) write_provenance(t, a.out_dir);
  std::cout << "wrote " << tables.size() << " table(s) to " << reports << "\n";
  for (const auto& t : tables) std::cout << table_to_markdown(t) << "\n";
  return 0;
}

int cmd_report(const CommonArgs& a, const std::string& format) {
  fs::path reports = fs::path(a.out_dir) / "reports";
  if (!fs::exists(reports)) throw std::invalid_argument("no reports directory under " + a.out_dir);
  std::ostringstream combined;
  int n = 0;
  for (const auto& e : fs::directory_iterator(reports)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream f(e.path());
    std::stringstream buf;
    buf << f.rdbuf();
    CsvTable t = parse_csv(buf.str());
    combined << "## " << e.path().stem().string() << "\n\n|";
    for (const auto& h : t.header) combined << " " << h << " |";
    combined << "\n|";
    for (std::size_t i = 0; i < t.header.size(); ++i) combined << "---|";
    combined << "\n";
    for (const auto& row : t.rows) {
      combined << "|";
      for (const auto& cell : row) combined << " " << cell << " |";
      combined << "\n";
    }
    combined << "\n";
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no CSV tables found under " + reports.string());
  if (format == "markdown") {
    std::ofstream out(reports / "report.md");
    out << combined.str();
    std::cout << "wrote " << (reports / "report.md").string() << " from " << n << " table(s)\n";
  } else {
    std::cout << combined.str();
  }
  return 0;
}

int cmd_verify(const CommonArgs& a) {
  fs::path runs = fs::path(a.out_dir) / "runs";
  if (!fs::exists(runs)) throw std::invalid_argument("no runs directory under " + a.out_dir);
  std::vector<fs::path> provs;
  for (const auto& e : fs::recursive_directory_iterator(runs))
    if (e.path().filename() == "provenance.json") provs.push_back(e.path());
  if (provs.empty()) throw std::invalid_argument("no provenance records under " + runs.string());
  std::sort(provs.begin(), provs.end());
  std::uint64_t pick_seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : 0;
  Rng rng = Rng::derive(pick_seed, "verify");
  const fs::path& chosen = provs[rng.next_below(provs.size())];
  json prov = load_json(chosen.string());
  RunSpec run = runspec_from_json(prov.at("run"));
  double stored = prov.at("metrics").at("target_error");

  ExperimentSpec spec;
  spec.gen_spec = run.gen_spec;
  spec.corpus_seed = run.corpus_seed;
  spec.channel_eps = run.channel_eps;
  spec.channel_m = run.channel_m;
  spec.channel_seed = run.channel_seed;
  spec.domain_mode = run.domain_mode;
  spec.base_config = run.config;
  spec.seeds = {run.config.seed};
  BenchContext ctx(spec);
  long guard_before = target_label_reads().load();
  RunOutcome redo = run_with_sweep(ctx, run);
  long guard_reads = target_label_reads().load() - guard_before;
  if (run.monolingual) guard_reads = 0;  // monolingual baselines read target labels by design
  std::cout << "verify " << chosen.parent_path().filename().string() << ": stored=" << stored
            << " reproduced=" << redo.target_error << " target_label_reads=" << guard_reads << "\n";
  if (redo.target_error != stored) throw std::runtime_error("verify: reproduced error does not match stored value");
  if (guard_reads != 0) throw std::runtime_error("verify: training read target labels");
  std::cout << "verify OK\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised cross-lingual document classification benchmark"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string stage = "generic", ablation = "main", checkpoint_path, format = "markdown";

  CLI::App* gen = app.add_subcommand("gen", "generate a corpus from a spec file");
  add_common(gen, args);

  CLI::App* pretrain = app.add_subcommand("pretrain", "MLM pre-training (generic or domain)");
  pretrain->add_option("stage", stage, "generic|domain")->check(CLI::IsMember({"generic", "domain"}));
  add_common(pretrain, args);

  CLI::App* train = app.add_subcommand("train", "run one training cell");
  add_common(train, args);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test splits");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  add_common(eval_cmd, args);

  CLI::App* bench = app.add_subcommand("bench", "run a benchmark suite");
  bench
      ->add_option("ablation", ablation,
                   "main|aug|translate|temperature|curve|source_unlabeled|monolingual_domain|all")
      ->check(CLI::IsMember(
          {"main", "aug", "translate", "temperature", "curve", "source_unlabeled", "monolingual_domain", "all"}));
  add_common(bench, args);

  CLI::App* rep = app.add_subcommand("report", "render stored CSV tables");
  rep->add_option("--format", format, "markdown|csv")->check(CLI::IsMember({"markdown", "csv"}));
  add_common(rep, args);

  CLI::App* verify = app.add_subcommand("verify", "re-run a stored cell and compare exactly");
  add_common(verify, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(args);
    if (pretrain->parsed()) return cmd_pretrain(args, stage);
    if (train->parsed()) return cmd_train(args);
    if (eval_cmd->parsed()) return cmd_eval(args, checkpoint_path);
    if (bench->parsed()) return cmd_bench(args, ablation);
    if (rep->parsed()) return cmd_report(args, format);
    if (verify->parsed()) return cmd_verify(args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

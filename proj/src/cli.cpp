#include "jobvec/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "jobvec/checkpoint.hpp"
#include "jobvec/corpus.hpp"
#include "jobvec/eval.hpp"
#include "jobvec/synthetic.hpp"
#include "jobvec/tokenizer.hpp"
#include "jobvec/training.hpp"

namespace jobvec {

namespace {

// JSON config files: top-level keys are options of the root app, nested
// objects are subcommand sections. Command-line flags take precedence.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j = nlohmann::json::parse(input, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw CLI::ConfigError("config file is not a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten({}, j, items);
    return items;
  }

 private:
  static void flatten(const std::vector<std::string>& parents, const nlohmann::json& obj,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it.value().is_object()) {
        auto nested = parents;
        nested.push_back(it.key());
        flatten(nested, it.value(), items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it.value().is_array()) {
        for (const auto& v : it.value())
          item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      } else if (it.value().is_string()) {
        item.inputs.push_back(it.value().get<std::string>());
      } else {
        item.inputs.push_back(it.value().dump());
      }
      items.push_back(std::move(item));
    }
  }
};

void log_resolved_config(const std::string& subcommand, const nlohmann::ordered_json& values) {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["options"] = values;
  std::cerr << "resolved-config: " << j.dump() << "\n";
}

std::string format4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void copy_file_bytes(const std::string& from, const std::string& to) {
  std::ifstream in(from, std::ios::binary);
  if (!in) throw Error("cannot open file: " + from);
  std::ofstream out(to, std::ios::binary);
  if (!out) throw Error("cannot write file: " + to);
  out << in.rdbuf();
  if (!out) throw Error("failed writing file: " + to);
}

struct BuildVocabArgs {
  std::vector<std::string> vacancies;
  std::vector<std::string> titles;
  std::string taxonomy;
  size_t target_size = 1000;
  std::string out;
};

int cmd_build_vocab(const BuildVocabArgs& a, uint64_t seed) {
  if (a.vacancies.empty() && a.titles.empty())
    throw UsageError("build-vocab: provide at least one --vacancies or --titles input");

  std::vector<std::string> titles;
  for (const auto& path : a.vacancies) {
    auto loaded = load_vacancies(path);
    for (auto& v : loaded.vacancies) titles.push_back(std::move(v.title));
  }
  for (const auto& path : a.titles) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open titles file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!trim(line).empty()) titles.push_back(line);
    }
  }
  if (!a.taxonomy.empty()) {
    Taxonomy t = load_taxonomy(a.taxonomy);
    for (size_t i = 0; i < t.leaf_count(); ++i) titles.push_back(t.leaf(i).name);
  }
  if (titles.empty()) throw Error("build-vocab: no titles found in the inputs");

  SubwordVocabulary vocab = build_subword_vocab(titles, a.target_size, seed);
  save_subword_vocab(vocab, a.out);
  std::cout << "tokens: " << vocab.size() << "\n";
  return 0;
}

struct TagArgs {
  std::string vacancies;
  std::string skills;
  std::string out;
  double max_malformed = 0.10;
};

int cmd_tag(const TagArgs& a) {
  SkillVocabulary vocab = load_skill_vocabulary(a.skills);
  if (vocab.size() == 0) throw Error("tag: skill vocabulary is empty: " + a.skills);

  auto loaded = load_vacancies(a.vacancies, a.max_malformed);
  for (const auto& err : loaded.line_errors) std::cerr << "warning: " << a.vacancies << " " << err << "\n";

  std::vector<TaggedVacancy> tagged;
  tagged.reserve(loaded.vacancies.size());
  int64_t pair_count = 0;
  for (const auto& v : loaded.vacancies) {
    tagged.push_back(tag_skills(v, vocab));
    pair_count += static_cast<int64_t>(tagged.back().skills.size());
  }

  save_tagged_corpus(tagged, a.out);
  copy_file_bytes(a.skills, a.out + ".skills.txt");
  SkillFrequencyTable freq = skill_frequencies(tagged, vocab.size());
  {
    nlohmann::ordered_json j;
    j["counts"] = freq.counts;
    j["total"] = freq.total;
    std::ofstream out(a.out + ".freq.json", std::ios::binary);
    if (!out) throw Error("cannot write frequency sidecar");
    out << j.dump(2) << '\n';
  }

  const double mean = tagged.empty() ? 0.0 : static_cast<double>(pair_count) / tagged.size();
  std::cout << "vacancies: " << tagged.size() << "\n";
  std::cout << "pairs: " << pair_count << "\n";
  std::cout << "mean skills per vacancy: " << format4(mean) << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus;
  std::string skills;
  std::string tokenizer_vocab;
  std::string taxonomy;
  std::string validation;
  std::string stage = "frozen";
  std::string init;
  std::string out;
  std::string log;
  std::string backbone = "table";
  std::string backbone_file;
  TrainingConfig cfg;
};

int cmd_train(const TrainArgs& a, const std::set<std::string>& explicit_shape_flags) {
  const Stage stage = a.stage == "finetune" ? Stage::Finetuned : Stage::Frozen;
  if (stage == Stage::Finetuned && a.init.empty())
    throw UsageError("train: --stage finetune requires --init");

  SkillVocabulary skills = load_skill_vocabulary(a.skills);
  auto corpus = load_tagged_corpus(a.corpus, skills.size());
  Taxonomy taxonomy = load_taxonomy(a.taxonomy);
  auto validation = load_benchmark(a.validation);

  std::optional<Model> init;
  TrainingConfig cfg = a.cfg;
  if (!a.init.empty()) {
    init = load_checkpoint(a.init);
    if (init->skill_count() != skills.size())
      throw Error("train: init checkpoint was built for " + std::to_string(init->skill_count()) +
                  " skills, corpus has " + std::to_string(skills.size()));
    // Architecture is pinned by the checkpoint tensors.
    for (const char* f : {"dim", "hidden", "d-out", "max-title-tokens"}) {
      if (explicit_shape_flags.count(f))
        throw UsageError(std::string("train: --") + f + " cannot change when resuming from --init");
    }
    cfg.dim = init->config.dim;
    cfg.hidden = init->config.hidden;
    cfg.d_out = init->config.d_out;
    cfg.max_title_tokens = init->config.max_title_tokens;
  }

  TrainResult result;
  if (init) {
    result = train(corpus, validation, taxonomy, cfg, stage, std::move(init));
  } else {
    SubwordVocabulary subwords = load_subword_vocab(a.tokenizer_vocab);
    if (a.backbone == "precomputed") {
      if (a.backbone_file.empty())
        throw UsageError("train: --backbone precomputed requires --backbone-file");
      Model fresh = init_model_precomputed(subwords, skills.size(), cfg, a.backbone_file);
      result = train(corpus, validation, taxonomy, cfg, stage, std::move(fresh));
    } else {
      result = train(corpus, validation, taxonomy, cfg, stage, std::nullopt, &subwords,
                     skills.size());
    }
  }

  save_checkpoint(result.model, a.out);
  const std::string log_path = a.log.empty() ? a.out + ".log.jsonl" : a.log;
  save_training_log(result.log, log_path);

  const auto& last = result.log.back();
  double best = -1.0;
  for (const auto& e : result.log) best = std::max(best, e.val_mrr_micro);
  std::cout << "batches: " << last.batches_seen << "\n";
  std::cout << "evaluations: " << result.log.size() << "\n";
  std::cout << "best val mrr (micro): " << format4(best) << "\n";
  std::cout << "checkpoint: " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string taxonomy;
  std::string benchmark;
  std::string out;
  std::string ranks_out;
};

int cmd_eval(const EvalArgs& a) {
  Model model = load_checkpoint(a.checkpoint);
  Taxonomy taxonomy = load_taxonomy(a.taxonomy);
  auto instances = load_benchmark(a.benchmark);
  if (instances.empty()) throw Error("eval: benchmark has no instances");

  EvalOutcome outcome = evaluate(model.enc, taxonomy, instances);

  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw Error("cannot write metrics file: " + a.out);
  out << metrics_to_json(outcome.report) << '\n';
  if (!out) throw Error("failed writing metrics file: " + a.out);

  if (!a.ranks_out.empty()) {
    std::ofstream ranks(a.ranks_out, std::ios::binary);
    if (!ranks) throw Error("cannot write ranks file: " + a.ranks_out);
    for (const auto& r : outcome.ranks) {
      nlohmann::ordered_json j;
      j["title"] = r.title;
      j["gold"] = r.gold;
      j["rank"] = r.rank;
      ranks << j.dump() << '\n';
    }
  }

  const auto& rep = outcome.report;
  std::printf("%-8s%10s%10s%10s%10s\n", "", "MRR", "R@1", "R@5", "R@10");
  std::printf("%-8s%10.4f%10.4f%10.4f%10.4f\n", "macro", rep.mrr_macro, rep.recall1_macro,
              rep.recall5_macro, rep.recall10_macro);
  std::printf("%-8s%10.4f%10.4f%10.4f%10.4f\n", "micro", rep.mrr_micro, rep.recall1_micro,
              rep.recall5_micro, rep.recall10_micro);
  return 0;
}

struct NormalizeArgs {
  std::string checkpoint;
  std::string taxonomy;
  std::string title;
  int top_k = 5;
};

int cmd_normalize(const NormalizeArgs& a) {
  if (a.top_k < 1) throw UsageError("normalize: --top-k must be at least 1");
  Model model = load_checkpoint(a.checkpoint);
  Taxonomy taxonomy = load_taxonomy(a.taxonomy);
  for (const auto& r : normalize(a.title, taxonomy, model.enc, a.top_k))
    std::cout << r.label_id << '\t' << r.name << '\t' << format4(r.score) << "\n";
  return 0;
}

struct InspectArgs {
  std::string checkpoint;
  std::string title;
};

int cmd_inspect_gates(const InspectArgs& a) {
  Model model = load_checkpoint(a.checkpoint);
  TokenSequence seq = tokenize(a.title, model.enc.vocab, model.enc.max_title_tokens);
  EncodeTrace trace = encode_trace(seq, a.title, model.enc);

  double sum = 0.0;
  for (size_t i = 0; i < seq.size(); ++i) {
    const double c = trace.coeffs[i];
    sum += c;
    const int bar = std::max(1, static_cast<int>(std::lround(c * 40)));
    std::printf("%-16s %.2f %s\n", seq.surfaces[i].c_str(), c, std::string(bar, '#').c_str());
  }
  std::printf("%-16s %.2f\n", "(sum)", sum);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"jobvec: job-title embeddings from skill co-occurrence, and "
               "taxonomy normalization by cosine ranking"};
  app.require_subcommand(1);
  app.set_config("--config", "", "JSON config file (flags take precedence)");
  app.config_formatter(std::make_shared<JsonConfig>());

  uint64_t seed = 42;
  bool verbose = false;
  app.add_option("--seed", seed, "root random seed");
  app.add_flag("--verbose", verbose, "extra progress output on stderr");

  BuildVocabArgs bv;
  auto* sub_bv = app.add_subcommand("build-vocab", "build a subword vocabulary from titles");
  sub_bv->add_option("--vacancies", bv.vacancies, "vacancies JSON-lines file (repeatable)");
  sub_bv->add_option("--titles", bv.titles, "plain-text titles file, one per line (repeatable)");
  sub_bv->add_option("--taxonomy", bv.taxonomy, "taxonomy file whose leaf names are included");
  sub_bv->add_option("--target-size", bv.target_size, "vocabulary size to merge up to");
  sub_bv->add_option("--out", bv.out, "output vocabulary file")->required();

  TagArgs tag;
  auto* sub_tag = app.add_subcommand("tag", "distant-supervision skill tagging of vacancies");
  sub_tag->add_option("--vacancies", tag.vacancies, "vacancies JSON-lines file")->required();
  sub_tag->add_option("--skills", tag.skills, "skill list, one surface per line")->required();
  sub_tag->add_option("--out", tag.out, "output tagged-corpus JSON-lines file")->required();
  sub_tag->add_option("--max-malformed", tag.max_malformed,
                      "abort when the malformed-line fraction exceeds this");

  TrainArgs tr;
  auto* sub_tr = app.add_subcommand("train", "optimize the encoder on a tagged corpus");
  sub_tr->add_option("--corpus", tr.corpus, "tagged corpus JSON-lines file")->required();
  sub_tr->add_option("--skills", tr.skills, "skill list used for tagging")->required();
  sub_tr->add_option("--tokenizer-vocab", tr.tokenizer_vocab, "subword vocabulary file");
  sub_tr->add_option("--taxonomy", tr.taxonomy, "taxonomy file for validation ranking")->required();
  sub_tr->add_option("--validation", tr.validation, "validation benchmark CSV")->required();
  sub_tr->add_option("--stage", tr.stage, "frozen|finetune")
      ->check(CLI::IsMember({"frozen", "finetune"}));
  sub_tr->add_option("--init", tr.init, "checkpoint to start from");
  sub_tr->add_option("--out", tr.out, "output checkpoint path")->required();
  sub_tr->add_option("--log", tr.log, "training log path (default: <out>.log.jsonl)");
  sub_tr->add_option("--backbone", tr.backbone, "table|precomputed")
      ->check(CLI::IsMember({"table", "precomputed"}));
  sub_tr->add_option("--backbone-file", tr.backbone_file, "precomputed backbone JSON-lines file");
  auto* opt_dim = sub_tr->add_option("--dim", tr.cfg.dim, "backbone width d");
  auto* opt_hidden = sub_tr->add_option("--hidden", tr.cfg.hidden, "projection hidden width");
  auto* opt_dout = sub_tr->add_option("--d-out", tr.cfg.d_out, "output embedding width");
  auto* opt_mtt = sub_tr->add_option("--max-title-tokens", tr.cfg.max_title_tokens,
                                     "token truncation length");
  sub_tr->add_option("--negatives", tr.cfg.k_negatives, "negative samples per positive");
  sub_tr->add_option("--batch-pairs", tr.cfg.batch_pairs, "pairs per batch");
  sub_tr->add_option("--lr-sgd", tr.cfg.lr_sgd, "SGD learning rate (frozen stage)");
  sub_tr->add_option("--lr-adagrad", tr.cfg.lr_adagrad, "Adagrad learning rate (context matrix)");
  sub_tr->add_option("--lr-finetune", tr.cfg.lr_finetune, "SGD learning rate (finetune stage)");
  sub_tr->add_option("--eval-every", tr.cfg.eval_every_batches, "batches between validation runs");
  sub_tr->add_option("--patience", tr.cfg.patience, "validation runs without improvement before stop");
  sub_tr->add_option("--epochs", tr.cfg.epochs, "epoch budget");

  EvalArgs ev;
  auto* sub_ev = app.add_subcommand("eval", "rank a benchmark and report MRR / Recall@k");
  sub_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  sub_ev->add_option("--taxonomy", ev.taxonomy, "taxonomy file")->required();
  sub_ev->add_option("--benchmark", ev.benchmark, "benchmark CSV")->required();
  sub_ev->add_option("--out", ev.out, "metrics JSON output path")->required();
  sub_ev->add_option("--ranks-out", ev.ranks_out, "per-instance rank dump (JSON-lines)");

  NormalizeArgs nm;
  auto* sub_nm = app.add_subcommand("normalize", "top-k taxonomy labels for a free-form title");
  sub_nm->add_option("--checkpoint", nm.checkpoint, "model checkpoint")->required();
  sub_nm->add_option("--taxonomy", nm.taxonomy, "taxonomy file")->required();
  sub_nm->add_option("--title", nm.title, "job title to normalize")->required();
  sub_nm->add_option("--top-k", nm.top_k, "number of labels to print");

  InspectArgs insp;
  auto* sub_insp = app.add_subcommand("inspect-gates", "per-token gating coefficients for a title");
  sub_insp->add_option("--checkpoint", insp.checkpoint, "model checkpoint")->required();
  sub_insp->add_option("--title", insp.title, "job title to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 2;
  }

  try {
    if (app.got_subcommand(sub_bv)) {
      log_resolved_config("build-vocab", {{"vacancies", bv.vacancies},
                                          {"titles", bv.titles},
                                          {"taxonomy", bv.taxonomy},
                                          {"target_size", bv.target_size},
                                          {"out", bv.out},
                                          {"seed", seed}});
      return cmd_build_vocab(bv, seed);
    }
    if (app.got_subcommand(sub_tag)) {
      log_resolved_config("tag", {{"vacancies", tag.vacancies},
                                  {"skills", tag.skills},
                                  {"out", tag.out},
                                  {"max_malformed", tag.max_malformed}});
      return cmd_tag(tag);
    }
    if (app.got_subcommand(sub_tr)) {
      tr.cfg.seed = seed;
      std::set<std::string> shape_flags;
      if (opt_dim->count() > 0) shape_flags.insert("dim");
      if (opt_hidden->count() > 0) shape_flags.insert("hidden");
      if (opt_dout->count() > 0) shape_flags.insert("d-out");
      if (opt_mtt->count() > 0) shape_flags.insert("max-title-tokens");
      if (opt_dim->count() > 0 && opt_hidden->count() == 0) tr.cfg.hidden = tr.cfg.dim;
      log_resolved_config(
          "train",
          {{"corpus", tr.corpus},           {"skills", tr.skills},
           {"tokenizer_vocab", tr.tokenizer_vocab}, {"taxonomy", tr.taxonomy},
           {"validation", tr.validation},   {"stage", tr.stage},
           {"init", tr.init},               {"out", tr.out},
           {"backbone", tr.backbone},       {"backbone_file", tr.backbone_file},
           {"dim", tr.cfg.dim},             {"hidden", tr.cfg.hidden},
           {"d_out", tr.cfg.d_out},         {"negatives", tr.cfg.k_negatives},
           {"batch_pairs", tr.cfg.batch_pairs}, {"lr_sgd", tr.cfg.lr_sgd},
           {"lr_adagrad", tr.cfg.lr_adagrad},   {"lr_finetune", tr.cfg.lr_finetune},
           {"eval_every", tr.cfg.eval_every_batches}, {"patience", tr.cfg.patience},
           {"epochs", tr.cfg.epochs},       {"max_title_tokens", tr.cfg.max_title_tokens},
           {"seed", seed}});
      if (tr.init.empty() && tr.tokenizer_vocab.empty())
        throw UsageError("train: --tokenizer-vocab is required unless --init is given");
      return cmd_train(tr, shape_flags);
    }
    if (app.got_subcommand(sub_ev)) {
      log_resolved_config("eval", {{"checkpoint", ev.checkpoint},
                                   {"taxonomy", ev.taxonomy},
                                   {"benchmark", ev.benchmark},
                                   {"out", ev.out},
                                   {"ranks_out", ev.ranks_out}});
      return cmd_eval(ev);
    }
    if (app.got_subcommand(sub_nm)) {
      log_resolved_config("normalize", {{"checkpoint", nm.checkpoint},
                                        {"taxonomy", nm.taxonomy},
                                        {"title", nm.title},
                                        {"top_k", nm.top_k}});
      return cmd_normalize(nm);
    }
    if (app.got_subcommand(sub_insp)) {
      log_resolved_config("inspect-gates", {{"checkpoint", insp.checkpoint}, {"title", insp.title}});
      return cmd_inspect_gates(insp);
    }
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace jobvec

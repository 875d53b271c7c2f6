#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "bagvae/config.hpp"
#include "bagvae/eval.hpp"
#include "bagvae/kb.hpp"
#include "bagvae/model.hpp"
#include "bagvae/synth.hpp"
#include "bagvae/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bagvae;

namespace {

struct Cli {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  std::string train_path, val_path, test_path;
  std::string triples_path, eval_pairs_path;
  std::string checkpoint, input_path;
  std::string split = "train";
  std::size_t per_bag = 1;
  std::size_t max_steps = 0;
  bool sample = false;
};

std::uint64_t parse_env_seed(const char* text) {
  std::uint64_t v = 0;
  const char* end = text + std::string_view(text).size();
  auto [p, ec] = std::from_chars(text, end, v);
  if (ec != std::errc() || p != end)
    throw std::invalid_argument(
        "BVAE_SEED must be a non-negative integer, got \"" +
        std::string(text) + "\"");
  return v;
}

std::size_t given(const CLI::App* sub, const std::string& name) {
  const CLI::Option* o = sub->get_option_no_throw(name);
  return o ? o->count() : 0;
}

RunConfig resolve_config(const Cli& cli, const CLI::App* sub) {
  RunConfig cfg;
  if (!cli.config_path.empty()) cfg = load_run_config(cli.config_path);
  if (given(sub, "--out")) cfg.paths.out = cli.out;
  if (given(sub, "--train")) cfg.paths.train_corpus = cli.train_path;
  if (given(sub, "--val")) cfg.paths.val_corpus = cli.val_path;
  if (given(sub, "--test")) cfg.paths.test_corpus = cli.test_path;
  if (given(sub, "--triples")) cfg.paths.triples = cli.triples_path;
  if (given(sub, "--eval-pairs")) cfg.paths.eval_pairs = cli.eval_pairs_path;
  if (given(sub, "--seed")) cfg.seed = cli.seed;
  if (const char* env = std::getenv("BVAE_SEED")) cfg.seed = parse_env_seed(env);
  return cfg;
}

fs::path out_dir(const RunConfig& cfg) { return fs::path(cfg.paths.out); }
fs::path cache_dir(const RunConfig& cfg) { return out_dir(cfg) / "cache"; }
fs::path kb_dir(const RunConfig& cfg) { return out_dir(cfg) / "kb"; }
fs::path train_dir(const RunConfig& cfg) { return out_dir(cfg) / "train"; }

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw std::runtime_error(what + ": " + p.string());
}

Vocabulary load_cached_vocab(const RunConfig& cfg) {
  fs::path dir = cache_dir(cfg);
  require_file(dir / "vocab.tsv", "encoded corpus missing; run preprocess first");
  return Vocabulary::load((dir / "vocab.tsv").string(),
                          (dir / "relations.tsv").string());
}

std::vector<EncodedBag> load_cached_bags(const RunConfig& cfg,
                                         const std::string& split,
                                         const Vocabulary& vocab) {
  fs::path p = cache_dir(cfg) / (split + ".bags");
  require_file(p, "encoded corpus missing; run preprocess first");
  LoadedBags lb = load_encoded_bags(p.string());
  if (lb.num_relations != vocab.num_relations() ||
      lb.max_len != cfg.model.max_len)
    throw std::runtime_error("encoded cache disagrees with vocabulary/config: " +
                             p.string());
  return std::move(lb.bags);
}

ModelDims dims_from(const RunConfig& cfg, const Vocabulary& vocab) {
  ModelDims d;
  d.vocab = vocab.size();
  d.relations = vocab.num_relations();
  d.max_len = cfg.model.max_len;
  d.d_w = cfg.model.d_w;
  d.d_p = cfg.model.d_p;
  d.d_z = cfg.model.d_z;
  d.hidden = cfg.model.hidden;
  d.d_s = cfg.model.d_s;
  d.softmax_mode = softmax_mode_from_string(cfg.model.softmax);
  return d;
}

Model build_model(const RunConfig& cfg, const Vocabulary& vocab, Rng& rng) {
  Model model(dims_from(cfg, vocab), prior_mode_from_string(cfg.prior), rng);
  if (!cfg.paths.pretrained_vectors.empty()) {
    require_file(cfg.paths.pretrained_vectors, "pretrained vectors missing");
    Tensor w = load_pretrained_vectors(cfg.paths.pretrained_vectors, vocab,
                                       cfg.model.d_w, rng);
    model.set_word_embeddings(w);
  }
  return model;
}

fs::path resolve_checkpoint(const RunConfig& cfg, const Cli& cli) {
  fs::path p = cli.checkpoint.empty()
                   ? train_dir(cfg) / "checkpoint_best.bvae"
                   : fs::path(cli.checkpoint);
  if (!fs::exists(p)) throw std::runtime_error("checkpoint required");
  return p;
}

json run_synth(const RunConfig& cfg) {
  SynthSpec spec = cfg.synth;
  spec.seed = cfg.seed;
  SynthOutput out = synth_generate(spec);
  synth_validate(out, spec);
  fs::path dir = out_dir(cfg) / "synth";
  synth_write(out, dir.string());
  return {{"out", dir.string()},
          {"relations", out.relation_names.size()},
          {"fact_pairs", out.facts.size()},
          {"triples", out.triples.triples.size()},
          {"train_sentences", out.train.size()},
          {"val_sentences", out.val.size()},
          {"test_sentences", out.test.size()}};
}

json run_preprocess(const RunConfig& cfg) {
  if (cfg.paths.train_corpus.empty() || cfg.paths.test_corpus.empty())
    throw std::runtime_error(
        "preprocess: train and test corpus paths required");
  require_file(cfg.paths.train_corpus, "corpus missing");
  require_file(cfg.paths.test_corpus, "corpus missing");
  auto train_raw = read_corpus_jsonl(cfg.paths.train_corpus);
  auto test_raw = read_corpus_jsonl(cfg.paths.test_corpus);
  PreprocessConfig pc;
  pc.max_len = cfg.model.max_len;
  pc.top_k = cfg.model.top_k;
  pc.val_fraction = cfg.val_fraction;
  pc.seed = cfg.seed;
  PreprocessOutput out;
  if (cfg.paths.val_corpus.empty()) {
    out = preprocess(std::move(train_raw), std::move(test_raw), pc);
  } else {
    require_file(cfg.paths.val_corpus, "corpus missing");
    auto val_raw = read_corpus_jsonl(cfg.paths.val_corpus);
    out = preprocess(std::move(train_raw), std::move(test_raw),
                     std::move(val_raw), pc);
  }

  fs::path dir = cache_dir(cfg);
  fs::create_directories(dir);
  out.vocab.save((dir / "vocab.tsv").string(),
                 (dir / "relations.tsv").string());
  save_encoded_bags((dir / "train.bags").string(), out.train,
                    out.vocab.num_relations(), cfg.model.max_len);
  save_encoded_bags((dir / "val.bags").string(), out.val,
                    out.vocab.num_relations(), cfg.model.max_len);
  save_encoded_bags((dir / "test.bags").string(), out.test,
                    out.vocab.num_relations(), cfg.model.max_len);
  auto eval_pairs = collect_pairs(out.val);
  for (const auto& p : collect_pairs(out.test)) eval_pairs.insert(p);
  write_pairs_tsv((dir / "eval_pairs.tsv").string(), eval_pairs);

  json report = {{"train_read", out.report.train_read},
                 {"test_read", out.report.test_read},
                 {"duplicates_removed", out.report.duplicates_removed},
                 {"outliers_dropped", out.report.outliers_dropped},
                 {"vocab_words", out.report.vocab_words},
                 {"num_relations", out.report.num_relations},
                 {"train_bags", out.report.train_bags},
                 {"val_bags", out.report.val_bags},
                 {"test_bags", out.report.test_bags},
                 {"eval_pairs", eval_pairs.size()},
                 {"cache", dir.string()}};
  std::ofstream rf(dir / "preprocess_report.json");
  rf << report.dump(2) << "\n";
  return report;
}

json run_kb_train(const RunConfig& cfg) {
  if (cfg.paths.triples.empty())
    throw std::runtime_error("kb-train: triples path required");
  require_file(cfg.paths.triples, "triples missing");
  fs::path pairs_path = cfg.paths.eval_pairs.empty()
                            ? cache_dir(cfg) / "eval_pairs.tsv"
                            : fs::path(cfg.paths.eval_pairs);
  require_file(pairs_path, "eval pairs missing; run preprocess first");

  TripleSet ts = TripleSet::load(cfg.paths.triples);
  std::size_t before = ts.triples.size();
  std::size_t pruned = prune_eval_links(ts, read_pairs_tsv(pairs_path.string()));
  TransEConfig tc = cfg.transe;
  tc.seed = cfg.seed;
  KbEmbeddings emb = transe_train(ts, tc);

  Vocabulary vocab = load_cached_vocab(cfg);
  auto train_bags = load_cached_bags(cfg, "train", vocab);
  auto train_pairs = collect_pairs(train_bags);
  PriorTable table = build_prior_table(emb, train_pairs);

  fs::path dir = kb_dir(cfg);
  fs::create_directories(dir);
  emb.save((dir / "kb.bvae").string());
  table.save((dir / "priors.bvae").string());

  json report = {{"triples_read", before},
                 {"triples_pruned", pruned},
                 {"triples_kept", ts.triples.size()},
                 {"entities", emb.entities.size()},
                 {"kb_relations", emb.relations.size()},
                 {"train_pairs", train_pairs.size()},
                 {"covered_pairs", table.means.size()},
                 {"coverage", table.coverage},
                 {"out", dir.string()}};
  std::ofstream rf(dir / "kb_report.json");
  rf << report.dump(2) << "\n";
  return report;
}

json run_train(const RunConfig& cfg) {
  Vocabulary vocab = load_cached_vocab(cfg);
  auto train_bags = load_cached_bags(cfg, "train", vocab);
  auto val_bags = load_cached_bags(cfg, "val", vocab);

  Rng rng(cfg.seed);
  Model model = build_model(cfg, vocab, rng);

  PriorTable table;
  const PriorTable* priors = nullptr;
  if (model.mode() == PriorMode::kb) {
    fs::path p = kb_dir(cfg) / "priors.bvae";
    require_file(p, "prior table missing; run kb-train first");
    table = PriorTable::load(p.string());
    priors = &table;
  }

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainResult res =
      train_model(model, train_bags, val_bags, priors, tc, train_dir(cfg).string());
  return {{"best_epoch", res.best_epoch},
          {"best_val_auc", res.best_auc},
          {"epochs_run", res.epochs_run},
          {"checkpoint", res.best_checkpoint},
          {"metrics", res.metrics_path}};
}

json run_eval(const RunConfig& cfg, const Cli& cli) {
  fs::path ckpt = resolve_checkpoint(cfg, cli);
  Vocabulary vocab = load_cached_vocab(cfg);
  auto test_bags = load_cached_bags(cfg, "test", vocab);

  Rng rng(cfg.seed);
  Model model = build_model(cfg, vocab, rng);
  model.load_checkpoint(ckpt.string(), nullptr);

  auto records = collect_predictions(model, test_bags);
  PRCurve curve = pr_curve(records);
  double area = auc(curve);

  fs::path dir = out_dir(cfg) / "eval";
  fs::create_directories(dir);
  write_pr_csv((dir / "pr_curve.csv").string(), records);
  write_pr_svg((dir / "pr_curve.svg").string(), curve);
  write_predictions_jsonl((dir / "predictions.jsonl").string(), records);

  json report = {{"checkpoint", ckpt.string()},
                 {"records", records.size()},
                 {"facts", curve.total_facts},
                 {"auc", area},
                 {"out", dir.string()}};
  for (std::size_t n : {std::size_t(100), std::size_t(200), std::size_t(300)}) {
    std::string key = "p_at_" + std::to_string(n);
    if (n <= records.size())
      report[key] = precision_at_n(records, n);
    else
      report[key] = nullptr;
  }
  std::ofstream rf(dir / "eval_report.json");
  rf << report.dump(2) << "\n";
  return report;
}

json run_reconstruct(const RunConfig& cfg, const Cli& cli) {
  fs::path ckpt = resolve_checkpoint(cfg, cli);
  if (cli.input_path.empty())
    throw std::runtime_error("reconstruct: --input corpus required");
  require_file(cli.input_path, "corpus missing");

  Vocabulary vocab = load_cached_vocab(cfg);
  Rng rng(cfg.seed);
  Model model = build_model(cfg, vocab, rng);
  model.load_checkpoint(ckpt.string(), nullptr);

  auto raw = read_corpus_jsonl(cli.input_path);
  normalize_examples(raw);
  fs::path path = out_dir(cfg) / "reconstructions.txt";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  for (const auto& ex : raw) {
    EncodedSentence enc = encode_sentence(ex, vocab, cfg.model.max_len);
    std::vector<int> ids =
        reconstruct_sentence(model, enc, cli.sample, cli.max_steps, &rng);
    std::string in_text, out_text;
    for (std::size_t i = 0; i < ex.tokens.size(); ++i)
      in_text += (i ? " " : "") + ex.tokens[i];
    for (std::size_t i = 0; i < ids.size(); ++i)
      out_text += (i ? " " : "") + vocab.id_to_word.at(ids[i]);
    f << in_text << " ||| " << out_text << "\n";
    std::cout << in_text << " ||| " << out_text << "\n";
  }
  return {{"sentences", raw.size()}, {"out", path.string()}};
}

json run_dump_latents(const RunConfig& cfg, const Cli& cli) {
  fs::path ckpt = resolve_checkpoint(cfg, cli);
  if (cli.split != "train" && cli.split != "val" && cli.split != "test")
    throw std::runtime_error("dump-latents: --split must be train, val or test");
  Vocabulary vocab = load_cached_vocab(cfg);
  auto bags = load_cached_bags(cfg, cli.split, vocab);

  Rng rng(cfg.seed);
  Model model = build_model(cfg, vocab, rng);
  model.load_checkpoint(ckpt.string(), nullptr);

  auto recs = dump_latents(model, bags, vocab, cli.per_bag, rng);
  fs::path path = out_dir(cfg) / ("latents_" + cli.split + ".csv");
  write_latents_csv(path.string(), recs);
  return {{"rows", recs.size()}, {"out", path.string()}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bag-level relation extraction with latent sentence codes"};
  app.require_subcommand(1);
  Cli cli;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", cli.config_path, "JSON run configuration");
    sub->add_option("--seed", cli.seed, "Seed override (beats the config)");
    sub->add_option("--out", cli.out, "Output directory override");
    return sub;
  };

  CLI::App* sp = add_common(app.add_subcommand(
      "preprocess", "Normalize, dedup, encode and bag a corpus"));
  sp->add_option("--train", cli.train_path, "Training corpus JSONL");
  sp->add_option("--val", cli.val_path,
                 "Validation corpus JSONL (default: carved off train)");
  sp->add_option("--test", cli.test_path, "Test corpus JSONL");

  CLI::App* sk = add_common(app.add_subcommand(
      "kb-train", "Prune eval links, embed the KB, build the prior table"));
  sk->add_option("--triples", cli.triples_path, "KB triples TSV");
  sk->add_option("--eval-pairs", cli.eval_pairs_path,
                 "Pairs to prune (default: the preprocess cache)");

  add_common(app.add_subcommand("train", "Train a model on the encoded corpus"));

  CLI::App* se = add_common(
      app.add_subcommand("eval", "Score the test split with a checkpoint"));
  se->add_option("--checkpoint", cli.checkpoint, "Model checkpoint");

  CLI::App* sr = add_common(app.add_subcommand(
      "reconstruct", "Decode sentences back from their latent codes"));
  sr->add_option("--checkpoint", cli.checkpoint, "Model checkpoint");
  sr->add_option("--input", cli.input_path, "Sentences to reconstruct (JSONL)");
  sr->add_flag("--sample", cli.sample, "Sample z instead of using the mean");
  sr->add_option("--max-steps", cli.max_steps,
                 "Decode step cap (default: input length + 2)");

  CLI::App* sl = add_common(app.add_subcommand(
      "dump-latents", "Write posterior means for labeled bags to CSV"));
  sl->add_option("--checkpoint", cli.checkpoint, "Model checkpoint");
  sl->add_option("--split", cli.split, "train, val or test");
  sl->add_option("--per-bag", cli.per_bag, "Sentences sampled per bag");

  add_common(app.add_subcommand("synth",
                                "Generate the synthetic benchmark corpus"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    json err = {{"error", std::string(e.what())}, {"command", "cli"}};
    std::cerr << err.dump() << "\n";
    return e.get_exit_code();
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    RunConfig cfg = resolve_config(cli, sub);
    fs::create_directories(out_dir(cfg));
    {
      std::ofstream rc(out_dir(cfg) / "resolved_config.json");
      if (!rc)
        throw std::runtime_error("cannot write resolved_config.json under " +
                                 cfg.paths.out);
      rc << dump_run_config(cfg);
    }
    json report;
    if (name == "preprocess")
      report = run_preprocess(cfg);
    else if (name == "kb-train")
      report = run_kb_train(cfg);
    else if (name == "train")
      report = run_train(cfg);
    else if (name == "eval")
      report = run_eval(cfg, cli);
    else if (name == "reconstruct")
      report = run_reconstruct(cfg, cli);
    else if (name == "dump-latents")
      report = run_dump_latents(cfg, cli);
    else
      report = run_synth(cfg);
    std::cout << report.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    json err = {{"error", std::string(e.what())}, {"command", name}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}

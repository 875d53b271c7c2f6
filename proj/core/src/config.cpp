#include "bagvae/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bagvae {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& what) {
  throw std::invalid_argument("config: " + what);
}

json take(json& obj, const char* key) {
  auto it = obj.find(key);
  json v = *it;
  obj.erase(it);
  return v;
}

bool has(const json& obj, const char* key) { return obj.contains(key); }

void reject_leftovers(const json& obj, const std::string& where) {
  if (obj.empty()) return;
  bad("unknown key \"" + where + obj.begin().key() + "\"");
}

void take_string(json& o, const char* k, std::string& out,
                 const std::string& where) {
  if (!has(o, k)) return;
  json v = take(o, k);
  if (!v.is_string()) bad("\"" + where + k + "\" must be a string");
  out = v.get<std::string>();
}

void take_size(json& o, const char* k, std::size_t& out,
               const std::string& where) {
  if (!has(o, k)) return;
  json v = take(o, k);
  if (!v.is_number_unsigned())
    bad("\"" + where + k + "\" must be a non-negative integer");
  out = v.get<std::size_t>();
}

void take_u64(json& o, const char* k, std::uint64_t& out,
              const std::string& where) {
  if (!has(o, k)) return;
  json v = take(o, k);
  if (!v.is_number_unsigned())
    bad("\"" + where + k + "\" must be a non-negative integer");
  out = v.get<std::uint64_t>();
}

void take_double(json& o, const char* k, double& out,
                 const std::string& where) {
  if (!has(o, k)) return;
  json v = take(o, k);
  if (!v.is_number()) bad("\"" + where + k + "\" must be a number");
  out = v.get<double>();
}

json take_object(json& o, const char* k, const std::string& where) {
  if (!has(o, k)) return json::object();
  json v = take(o, k);
  if (!v.is_object()) bad("\"" + where + k + "\" must be an object");
  return v;
}

void parse_paths(json o, PathsConfig& p) {
  take_string(o, "train_corpus", p.train_corpus, "paths.");
  take_string(o, "val_corpus", p.val_corpus, "paths.");
  take_string(o, "test_corpus", p.test_corpus, "paths.");
  take_string(o, "triples", p.triples, "paths.");
  take_string(o, "eval_pairs", p.eval_pairs, "paths.");
  take_string(o, "pretrained_vectors", p.pretrained_vectors, "paths.");
  take_string(o, "out", p.out, "paths.");
  reject_leftovers(o, "paths.");
}

void parse_model(json o, ModelConfig& m) {
  take_size(o, "d_w", m.d_w, "model.");
  take_size(o, "d_p", m.d_p, "model.");
  take_size(o, "d_z", m.d_z, "model.");
  take_size(o, "hidden", m.hidden, "model.");
  take_size(o, "d_s", m.d_s, "model.");
  take_size(o, "max_len", m.max_len, "model.");
  take_size(o, "top_k", m.top_k, "model.");
  take_string(o, "softmax", m.softmax, "model.");
  reject_leftovers(o, "model.");
  softmax_mode_from_string(m.softmax);
}

void parse_train(json o, TrainConfig& t) {
  take_size(o, "epochs", t.epochs, "train.");
  take_size(o, "patience", t.patience, "train.");
  take_size(o, "batch_size", t.batch_size, "train.");
  take_size(o, "bag_cap", t.bag_cap, "train.");
  take_double(o, "lr", t.lr, "train.");
  take_double(o, "weight_decay", t.weight_decay, "train.");
  take_double(o, "clip_norm", t.clip_norm, "train.");
  take_double(o, "lambda", t.lambda, "train.");
  take_double(o, "beta_k", t.beta_k, "train.");
  take_double(o, "beta_x0", t.beta_x0, "train.");
  take_double(o, "input_dropout", t.input_dropout, "train.");
  take_double(o, "word_dropout", t.word_dropout, "train.");
  take_double(o, "teacher_force", t.teacher_force, "train.");
  reject_leftovers(o, "train.");
}

void parse_transe(json o, TransEConfig& t) {
  take_size(o, "dim", t.dim, "transe.");
  take_size(o, "steps", t.steps, "transe.");
  take_size(o, "batch", t.batch, "transe.");
  take_size(o, "negatives", t.negatives, "transe.");
  take_double(o, "lr", t.lr, "transe.");
  take_double(o, "gamma", t.gamma, "transe.");
  take_double(o, "adv_temperature", t.adv_temperature, "transe.");
  take_double(o, "reg_lambda", t.reg_lambda, "transe.");
  reject_leftovers(o, "transe.");
}

void parse_synth(json o, SynthSpec& s) {
  take_size(o, "num_relations", s.num_relations, "synth.");
  take_size(o, "entities_per_relation", s.entities_per_relation, "synth.");
  take_size(o, "templates_per_relation", s.templates_per_relation, "synth.");
  take_size(o, "min_bag_sentences", s.min_bag_sentences, "synth.");
  take_size(o, "max_bag_sentences", s.max_bag_sentences, "synth.");
  take_size(o, "filler_vocab", s.filler_vocab, "synth.");
  take_size(o, "kg_extra_per_relation", s.kg_extra_per_relation, "synth.");
  take_size(o, "latent_dim", s.latent_dim, "synth.");
  take_double(o, "noise_rate", s.noise_rate, "synth.");
  take_double(o, "negative_fraction", s.negative_fraction, "synth.");
  take_double(o, "val_fraction", s.val_fraction, "synth.");
  take_double(o, "test_fraction", s.test_fraction, "synth.");
  reject_leftovers(o, "synth.");
}

}  // namespace

OutputSoftmax::Mode softmax_mode_from_string(const std::string& s) {
  if (s == "auto") return OutputSoftmax::Mode::Auto;
  if (s == "full") return OutputSoftmax::Mode::Full;
  if (s == "adaptive") return OutputSoftmax::Mode::Adaptive;
  bad("\"model.softmax\" must be auto, full or adaptive, got \"" + s + "\"");
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    bad(e.what());
  }
  if (!root.is_object()) bad("top level must be an object");

  RunConfig cfg;
  take_u64(root, "seed", cfg.seed, "");
  take_string(root, "prior", cfg.prior, "");
  take_double(root, "val_fraction", cfg.val_fraction, "");
  parse_paths(take_object(root, "paths", ""), cfg.paths);
  parse_model(take_object(root, "model", ""), cfg.model);
  parse_train(take_object(root, "train", ""), cfg.train);
  parse_transe(take_object(root, "transe", ""), cfg.transe);
  parse_synth(take_object(root, "synth", ""), cfg.synth);
  reject_leftovers(root, "");

  prior_mode_from_string(cfg.prior);
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0))
    bad("\"val_fraction\" must lie in [0, 1)");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  bool blank = std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
  if (blank) return RunConfig{};
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& cfg) {
  json root;
  root["seed"] = cfg.seed;
  root["prior"] = cfg.prior;
  root["val_fraction"] = cfg.val_fraction;
  root["paths"] = {{"train_corpus", cfg.paths.train_corpus},
                   {"val_corpus", cfg.paths.val_corpus},
                   {"test_corpus", cfg.paths.test_corpus},
                   {"triples", cfg.paths.triples},
                   {"eval_pairs", cfg.paths.eval_pairs},
                   {"pretrained_vectors", cfg.paths.pretrained_vectors},
                   {"out", cfg.paths.out}};
  root["model"] = {{"d_w", cfg.model.d_w},       {"d_p", cfg.model.d_p},
                   {"d_z", cfg.model.d_z},       {"hidden", cfg.model.hidden},
                   {"d_s", cfg.model.d_s},       {"max_len", cfg.model.max_len},
                   {"top_k", cfg.model.top_k},   {"softmax", cfg.model.softmax}};
  root["train"] = {{"epochs", cfg.train.epochs},
                   {"patience", cfg.train.patience},
                   {"batch_size", cfg.train.batch_size},
                   {"bag_cap", cfg.train.bag_cap},
                   {"lr", cfg.train.lr},
                   {"weight_decay", cfg.train.weight_decay},
                   {"clip_norm", cfg.train.clip_norm},
                   {"lambda", cfg.train.lambda},
                   {"beta_k", cfg.train.beta_k},
                   {"beta_x0", cfg.train.beta_x0},
                   {"input_dropout", cfg.train.input_dropout},
                   {"word_dropout", cfg.train.word_dropout},
                   {"teacher_force", cfg.train.teacher_force}};
  root["transe"] = {{"dim", cfg.transe.dim},
                    {"steps", cfg.transe.steps},
                    {"batch", cfg.transe.batch},
                    {"negatives", cfg.transe.negatives},
                    {"lr", cfg.transe.lr},
                    {"gamma", cfg.transe.gamma},
                    {"adv_temperature", cfg.transe.adv_temperature},
                    {"reg_lambda", cfg.transe.reg_lambda}};
  root["synth"] = {{"num_relations", cfg.synth.num_relations},
                   {"entities_per_relation", cfg.synth.entities_per_relation},
                   {"templates_per_relation", cfg.synth.templates_per_relation},
                   {"min_bag_sentences", cfg.synth.min_bag_sentences},
                   {"max_bag_sentences", cfg.synth.max_bag_sentences},
                   {"filler_vocab", cfg.synth.filler_vocab},
                   {"kg_extra_per_relation", cfg.synth.kg_extra_per_relation},
                   {"latent_dim", cfg.synth.latent_dim},
                   {"noise_rate", cfg.synth.noise_rate},
                   {"negative_fraction", cfg.synth.negative_fraction},
                   {"val_fraction", cfg.synth.val_fraction},
                   {"test_fraction", cfg.synth.test_fraction}};
  return root.dump(2) + "\n";
}

}  // namespace bagvae

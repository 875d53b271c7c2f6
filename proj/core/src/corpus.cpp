#include "bagvae/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "bagvae/serialize.hpp"

namespace bagvae {

using nlohmann::json;

namespace {

std::vector<std::string> split_ws(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const std::vector<std::string>& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) out.push_back(' ');
    out += ts[i];
  }
  return out;
}

Span parse_span(const json& j, const char* field, std::size_t ntok,
                std::size_t lineno) {
  if (!j.contains("pos") || !j["pos"].is_array() || j["pos"].size() != 2)
    throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " +
                             field + ".pos must be [start, end)");
  Span s;
  s.begin = j["pos"][0].get<std::size_t>();
  s.end = j["pos"][1].get<std::size_t>();
  if (s.begin >= s.end || s.end > ntok)
    throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " +
                             field + " span out of range");
  return s;
}

}  // namespace

std::vector<SentenceExample> read_corpus_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open corpus file " + path);
  std::vector<SentenceExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    for (const char* field : {"text", "h", "t", "relation"})
      if (!j.contains(field))
        throw std::runtime_error("corpus line " + std::to_string(lineno) +
                                 ": missing field " + field);
    SentenceExample ex;
    ex.tokens = split_ws(j["text"].get<std::string>());
    if (ex.tokens.empty())
      throw std::runtime_error("corpus line " + std::to_string(lineno) +
                               ": empty text");
    ex.head = parse_span(j["h"], "h", ex.tokens.size(), lineno);
    ex.tail = parse_span(j["t"], "t", ex.tokens.size(), lineno);
    ex.head_id = j["h"]["id"].get<std::string>();
    ex.tail_id = j["t"]["id"].get<std::string>();
    ex.relation = j["relation"].get<std::string>();
    out.push_back(std::move(ex));
  }
  return out;
}

void write_corpus_jsonl(const std::string& path,
                        const std::vector<SentenceExample>& examples) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& ex : examples) {
    json j;
    j["text"] = join_tokens(ex.tokens);
    j["h"] = {{"id", ex.head_id}, {"pos", {ex.head.begin, ex.head.end}}};
    j["t"] = {{"id", ex.tail_id}, {"pos", {ex.tail.begin, ex.tail.end}}};
    j["relation"] = ex.relation;
    os << j.dump() << "\n";
  }
}

std::vector<std::string> normalize_tokens(const std::vector<std::string>& ts) {
  std::vector<std::string> out;
  out.reserve(ts.size());
  for (const auto& t : ts) {
    std::string w;
    w.reserve(t.size());
    for (unsigned char c : t) {
      if (std::isdigit(c))
        w.push_back('#');
      else
        w.push_back(static_cast<char>(std::tolower(c)));
    }
    out.push_back(std::move(w));
  }
  return out;
}

void normalize_examples(std::vector<SentenceExample>& ex) {
  for (auto& e : ex) e.tokens = normalize_tokens(e.tokens);
}

std::size_t dedup_train(std::vector<SentenceExample>& ex) {
  std::unordered_set<std::string> seen;
  std::vector<SentenceExample> kept;
  kept.reserve(ex.size());
  for (auto& e : ex) {
    std::string key = join_tokens(e.tokens) + "\x01" + e.head_id + "\x01" +
                      e.tail_id + "\x01" + e.relation;
    if (seen.insert(std::move(key)).second) kept.push_back(std::move(e));
  }
  std::size_t removed = ex.size() - kept.size();
  ex = std::move(kept);
  return removed;
}

std::optional<SentenceExample> resize_or_drop(const SentenceExample& ex,
                                              std::size_t max_len) {
  if (ex.head.end > ex.tokens.size() || ex.tail.end > ex.tokens.size() ||
      ex.head.begin >= ex.head.end || ex.tail.begin >= ex.tail.end)
    throw std::invalid_argument("resize_or_drop: invalid spans");
  SentenceExample out = ex;
  if (ex.head.end <= max_len && ex.tail.end <= max_len) {
    if (out.tokens.size() > max_len) out.tokens.resize(max_len);
    return out;
  }
  std::size_t lo = std::min(ex.head.begin, ex.tail.begin);
  std::size_t hi = std::max(ex.head.end, ex.tail.end);
  if (hi - lo > max_len) return std::nullopt;
  std::size_t width = hi - lo;
  std::size_t left = std::min({std::size_t(5), lo, max_len - width});
  std::size_t right =
      std::min({std::size_t(5), ex.tokens.size() - hi, max_len - width - left});
  std::size_t begin = lo - left;
  std::size_t end = hi + right;
  out.tokens.assign(ex.tokens.begin() + begin, ex.tokens.begin() + end);
  out.head.begin = ex.head.begin - begin;
  out.head.end = ex.head.end - begin;
  out.tail.begin = ex.tail.begin - begin;
  out.tail.end = ex.tail.end - begin;
  return out;
}

int Vocabulary::word_id(const std::string& w) const {
  auto it = word_to_id.find(w);
  return it == word_to_id.end() ? kUnk : it->second;
}

int Vocabulary::relation_id(const std::string& r) const {
  auto it = relation_to_id.find(r);
  if (it == relation_to_id.end())
    throw std::invalid_argument("unknown relation " + r);
  return it->second;
}

void Vocabulary::save(const std::string& vocab_path,
                      const std::string& relations_path) const {
  std::ofstream vs(vocab_path);
  if (!vs) throw std::runtime_error("cannot open " + vocab_path);
  for (std::size_t i = 0; i < id_to_word.size(); ++i)
    vs << id_to_word[i] << "\t" << frequency[i] << "\n";
  std::ofstream rs(relations_path);
  if (!rs) throw std::runtime_error("cannot open " + relations_path);
  for (const auto& r : relations) rs << r << "\n";
}

Vocabulary Vocabulary::load(const std::string& vocab_path,
                            const std::string& relations_path) {
  Vocabulary v;
  std::ifstream vs(vocab_path);
  if (!vs) throw std::runtime_error("cannot open " + vocab_path);
  std::string line;
  while (std::getline(vs, line)) {
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("bad vocabulary line: " + line);
    std::string word = line.substr(0, tab);
    std::size_t freq = std::stoull(line.substr(tab + 1));
    v.word_to_id[word] = static_cast<int>(v.id_to_word.size());
    v.id_to_word.push_back(word);
    v.frequency.push_back(freq);
  }
  if (v.id_to_word.size() < 4 || v.id_to_word[0] != "<pad>" ||
      v.id_to_word[1] != "<unk>" || v.id_to_word[2] != "<bos>" ||
      v.id_to_word[3] != "<eos>")
    throw std::runtime_error("vocabulary file lacks reserved tokens: " +
                             vocab_path);
  std::ifstream rs(relations_path);
  if (!rs) throw std::runtime_error("cannot open " + relations_path);
  while (std::getline(rs, line)) {
    if (line.empty()) continue;
    v.relation_to_id[line] = static_cast<int>(v.relations.size());
    v.relations.push_back(line);
  }
  if (v.relations.empty() || v.relations[0] != "NA")
    throw std::runtime_error("relations file must start with NA: " +
                             relations_path);
  return v;
}

Vocabulary build_vocab(const std::vector<SentenceExample>& train,
                       const std::vector<std::string>& all_relations,
                       std::size_t top_k) {
  if (top_k < 1) throw std::invalid_argument("build_vocab: top_k < 1");
  std::unordered_set<std::string> unique_sentences;
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : train) {
    std::string key = join_tokens(ex.tokens);
    if (!unique_sentences.insert(key).second) continue;
    for (const auto& t : ex.tokens) counts[t] += 1;
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);

  Vocabulary v;
  v.id_to_word = {"<pad>", "<unk>", "<bos>", "<eos>"};
  v.frequency = {0, 0, 0, 0};
  for (const auto& [word, freq] : ranked) {
    v.word_to_id[word] = static_cast<int>(v.id_to_word.size());
    v.id_to_word.push_back(word);
    v.frequency.push_back(freq);
  }
  std::set<std::string> rels(all_relations.begin(), all_relations.end());
  rels.erase("NA");
  v.relations.push_back("NA");
  for (const auto& r : rels) v.relations.push_back(r);
  for (std::size_t i = 0; i < v.relations.size(); ++i)
    v.relation_to_id[v.relations[i]] = static_cast<int>(i);
  return v;
}

EncodedSentence encode_sentence(const SentenceExample& ex,
                                const Vocabulary& vocab, std::size_t max_len) {
  if (ex.tokens.empty())
    throw std::invalid_argument("encode_sentence: empty sentence");
  EncodedSentence out;
  out.head = ex.head;
  out.tail = ex.tail;
  const int m = static_cast<int>(max_len);
  out.token_ids.reserve(ex.tokens.size());
  out.pos_head.reserve(ex.tokens.size());
  out.pos_tail.reserve(ex.tokens.size());
  for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
    out.token_ids.push_back(vocab.word_id(ex.tokens[t]));
    int dh = static_cast<int>(t) - static_cast<int>(ex.head.begin);
    int dt = static_cast<int>(t) - static_cast<int>(ex.tail.begin);
    out.pos_head.push_back(std::clamp(dh, -m, m) + m);
    out.pos_tail.push_back(std::clamp(dt, -m, m) + m);
  }
  return out;
}

std::vector<EncodedBag> build_bags(const std::vector<SentenceExample>& ex,
                                   const Vocabulary& vocab,
                                   std::size_t max_len) {
  std::vector<EncodedBag> bags;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& e : ex) {
    auto key = std::make_pair(e.head_id, e.tail_id);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, bags.size()).first;
      EncodedBag b;
      b.head_id = e.head_id;
      b.tail_id = e.tail_id;
      b.labels.assign(vocab.num_relations(), 0);
      bags.push_back(std::move(b));
    }
    EncodedBag& b = bags[it->second];
    b.sentences.push_back(encode_sentence(e, vocab, max_len));
    b.labels[static_cast<std::size_t>(vocab.relation_id(e.relation))] = 1;
  }
  return bags;
}

std::pair<std::vector<EncodedBag>, std::vector<EncodedBag>> split_validation(
    const std::vector<EncodedBag>& bags, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_validation: fraction outside (0,1)");
  std::size_t n = bags.size();
  std::size_t k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> chosen = rng.sample_without_replacement(n, k);
  std::vector<char> is_val(n, 0);
  for (std::size_t i : chosen) is_val[i] = 1;
  std::vector<EncodedBag> train, val;
  for (std::size_t i = 0; i < n; ++i)
    (is_val[i] ? val : train).push_back(bags[i]);
  return {std::move(train), std::move(val)};
}

Tensor load_pretrained_vectors(const std::string& path,
                               const Vocabulary& vocab, std::size_t dim,
                               Rng& rng) {
  Tensor emb({vocab.size(), dim});
  for (double& v : emb.data) v = rng.normal(0.0, 0.1);
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open vectors file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> vals;
    double x;
    while (ls >> x) vals.push_back(x);
    if (vals.size() != dim)
      throw std::runtime_error("vectors line " + std::to_string(lineno) +
                               ": got " + std::to_string(vals.size()) +
                               " dims, config says " + std::to_string(dim));
    auto it = vocab.word_to_id.find(word);
    if (it == vocab.word_to_id.end()) continue;
    std::copy(vals.begin(), vals.end(),
              emb.data.begin() + static_cast<std::size_t>(it->second) * dim);
  }
  return emb;
}

static PreprocessOutput preprocess_impl(std::vector<SentenceExample> train_raw,
                                        std::vector<SentenceExample> test_raw,
                                        std::vector<SentenceExample>* val_raw,
                                        const PreprocessConfig& cfg) {
  PreprocessOutput out;
  out.report.train_read = train_raw.size();
  out.report.test_read = test_raw.size();
  normalize_examples(train_raw);
  normalize_examples(test_raw);
  if (val_raw) normalize_examples(*val_raw);
  out.report.duplicates_removed = dedup_train(train_raw);
  std::vector<SentenceExample> train;
  train.reserve(train_raw.size());
  for (const auto& e : train_raw) {
    auto r = resize_or_drop(e, cfg.max_len);
    if (r)
      train.push_back(std::move(*r));
    else
      ++out.report.outliers_dropped;
  }
  std::vector<std::string> rel_names;
  for (const auto& e : train) rel_names.push_back(e.relation);
  for (const auto& e : test_raw) rel_names.push_back(e.relation);
  if (val_raw)
    for (const auto& e : *val_raw) rel_names.push_back(e.relation);
  out.vocab = build_vocab(train, rel_names, cfg.top_k);
  out.report.vocab_words = out.vocab.size() - 4;
  out.report.num_relations = out.vocab.num_relations();

  std::vector<EncodedBag> train_bags = build_bags(train, out.vocab, cfg.max_len);
  out.test = build_bags(test_raw, out.vocab, cfg.max_len);
  if (val_raw) {
    out.train = std::move(train_bags);
    out.val = build_bags(*val_raw, out.vocab, cfg.max_len);
  } else {
    Rng rng(cfg.seed);
    auto [tr, va] = split_validation(train_bags, cfg.val_fraction, rng);
    out.train = std::move(tr);
    out.val = std::move(va);
  }
  out.report.train_bags = out.train.size();
  out.report.val_bags = out.val.size();
  out.report.test_bags = out.test.size();
  return out;
}

PreprocessOutput preprocess(std::vector<SentenceExample> train_raw,
                            std::vector<SentenceExample> test_raw,
                            const PreprocessConfig& cfg) {
  return preprocess_impl(std::move(train_raw), std::move(test_raw), nullptr, cfg);
}

PreprocessOutput preprocess(std::vector<SentenceExample> train_raw,
                            std::vector<SentenceExample> test_raw,
                            std::vector<SentenceExample> val_raw,
                            const PreprocessConfig& cfg) {
  return preprocess_impl(std::move(train_raw), std::move(test_raw), &val_raw, cfg);
}

void save_encoded_bags(const std::string& path,
                       const std::vector<EncodedBag>& bags,
                       std::size_t num_relations, std::size_t max_len) {
  Container c;
  c.put_meta("kind", "encoded_bags");
  c.put_meta("num_bags", std::to_string(bags.size()));
  c.put_meta("num_relations", std::to_string(num_relations));
  c.put_meta("max_len", std::to_string(max_len));
  std::string heads, tails;
  std::vector<double> nsent, labels, slen, toks, ph, pt, spans;
  for (const auto& b : bags) {
    heads += b.head_id;
    heads.push_back('\n');
    tails += b.tail_id;
    tails.push_back('\n');
    nsent.push_back(static_cast<double>(b.sentences.size()));
    for (char l : b.labels) labels.push_back(l ? 1.0 : 0.0);
    for (const auto& s : b.sentences) {
      slen.push_back(static_cast<double>(s.token_ids.size()));
      for (int id : s.token_ids) toks.push_back(id);
      for (int p : s.pos_head) ph.push_back(p);
      for (int p : s.pos_tail) pt.push_back(p);
      spans.push_back(static_cast<double>(s.head.begin));
      spans.push_back(static_cast<double>(s.head.end));
      spans.push_back(static_cast<double>(s.tail.begin));
      spans.push_back(static_cast<double>(s.tail.end));
    }
  }
  c.put_bytes("heads", std::vector<std::uint8_t>(heads.begin(), heads.end()));
  c.put_bytes("tails", std::vector<std::uint8_t>(tails.begin(), tails.end()));
  auto put_vec = [&](const char* name, std::vector<double>& v) {
    std::size_t n = v.size();
    c.put_tensor(name, Tensor({std::max<std::size_t>(n, 1)},
                              n ? std::move(v)
                                : std::vector<double>{0.0}));
  };
  put_vec("bag_num_sentences", nsent);
  put_vec("bag_labels", labels);
  put_vec("sent_lengths", slen);
  put_vec("tokens", toks);
  put_vec("pos_head", ph);
  put_vec("pos_tail", pt);
  put_vec("spans", spans);
  c.save(path);
}

namespace {

std::vector<std::string> split_lines(const std::vector<std::uint8_t>& b) {
  std::vector<std::string> out;
  std::string cur;
  for (std::uint8_t c : b) {
    if (c == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  return out;
}

}  // namespace

LoadedBags load_encoded_bags(const std::string& path) {
  Container c = Container::load(path);
  if (!c.has_meta("kind") || c.meta_value("kind") != "encoded_bags")
    throw std::runtime_error(path + " is not an encoded-bag cache");
  LoadedBags out;
  std::size_t num_bags = std::stoull(c.meta_value("num_bags"));
  out.num_relations = std::stoull(c.meta_value("num_relations"));
  out.max_len = std::stoull(c.meta_value("max_len"));
  std::vector<std::string> heads = split_lines(c.bytes("heads"));
  std::vector<std::string> tails = split_lines(c.bytes("tails"));
  Tensor nsent = c.tensor("bag_num_sentences");
  Tensor labels = c.tensor("bag_labels");
  Tensor slen = c.tensor("sent_lengths");
  Tensor toks = c.tensor("tokens");
  Tensor ph = c.tensor("pos_head");
  Tensor pt = c.tensor("pos_tail");
  Tensor spans = c.tensor("spans");
  if (heads.size() != num_bags || tails.size() != num_bags)
    throw std::runtime_error("encoded-bag cache is corrupt: " + path);
  std::size_t si = 0, ti = 0;
  out.bags.resize(num_bags);
  for (std::size_t b = 0; b < num_bags; ++b) {
    EncodedBag& bag = out.bags[b];
    bag.head_id = heads[b];
    bag.tail_id = tails[b];
    bag.labels.resize(out.num_relations);
    for (std::size_t r = 0; r < out.num_relations; ++r)
      bag.labels[r] = labels.data[b * out.num_relations + r] != 0.0 ? 1 : 0;
    std::size_t ns = static_cast<std::size_t>(nsent.data[b]);
    bag.sentences.resize(ns);
    for (std::size_t s = 0; s < ns; ++s, ++si) {
      EncodedSentence& sent = bag.sentences[s];
      std::size_t L = static_cast<std::size_t>(slen.data[si]);
      sent.token_ids.resize(L);
      sent.pos_head.resize(L);
      sent.pos_tail.resize(L);
      for (std::size_t k = 0; k < L; ++k, ++ti) {
        sent.token_ids[k] = static_cast<int>(toks.data[ti]);
        sent.pos_head[k] = static_cast<int>(ph.data[ti]);
        sent.pos_tail[k] = static_cast<int>(pt.data[ti]);
      }
      sent.head.begin = static_cast<std::size_t>(spans.data[4 * si]);
      sent.head.end = static_cast<std::size_t>(spans.data[4 * si + 1]);
      sent.tail.begin = static_cast<std::size_t>(spans.data[4 * si + 2]);
      sent.tail.end = static_cast<std::size_t>(spans.data[4 * si + 3]);
    }
  }
  return out;
}

std::set<std::pair<std::string, std::string>> collect_pairs(
    const std::vector<EncodedBag>& bags) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& b : bags) out.emplace(b.head_id, b.tail_id);
  return out;
}

void write_pairs_tsv(const std::string& path,
                     const std::set<std::pair<std::string, std::string>>& ps) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const auto& [h, t] : ps) os << h << "\t" << t << "\n";
}

std::set<std::pair<std::string, std::string>> read_pairs_tsv(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open pairs file " + path);
  std::set<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("bad pair line: " + line);
    out.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

}  // namespace bagvae

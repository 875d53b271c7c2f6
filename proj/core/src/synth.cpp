#include "bagvae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bagvae {

namespace {

using Pair = std::pair<std::string, std::string>;

std::string letters(std::size_t i) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  return s;
}

std::string position_name(const std::vector<int>& pos) {
  std::string s = "e";
  for (int c : pos) {
    if (c < 0 || c >= 26)
      throw std::logic_error("synth: lattice coordinate out of range");
    s.push_back(static_cast<char>('a' + c));
  }
  return s;
}

struct Gen {
  const SynthSpec& spec;
  Rng rng;
  SynthOutput out;
  std::vector<std::vector<int>> ioffsets;
  std::vector<std::string> fillers;
  std::set<Pair> used_pairs;
  std::vector<std::pair<Pair, int>> fact_pairs;  // pair, relation index
  std::vector<Pair> na_pairs;
  std::vector<std::string> entity_pool;  // corpus entities, first-seen order

  explicit Gen(const SynthSpec& s) : spec(s), rng(s.seed) {}

  std::string intern(const std::vector<int>& pos) {
    std::string name = position_name(pos);
    auto [it, fresh] = out.latent.try_emplace(name);
    if (fresh) it->second.assign(pos.begin(), pos.end());
    return name;
  }

  std::vector<int> draw_position() {
    std::vector<int> p(spec.latent_dim);
    for (auto& c : p) c = 2 + static_cast<int>(rng.uniform_int(11));
    return p;
  }

  void draw_offsets() {
    for (std::size_t r = 0; r < spec.num_relations; ++r) {
      std::vector<int> off(spec.latent_dim);
      for (int tries = 0;; ++tries) {
        if (tries > 1000)
          throw std::invalid_argument(
              "synth: cannot draw distinct relation offsets; raise latent_dim");
        for (auto& c : off) c = static_cast<int>(rng.uniform_int(5)) - 2;
        bool zero = std::all_of(off.begin(), off.end(),
                                [](int c) { return c == 0; });
        if (zero || std::find(ioffsets.begin(), ioffsets.end(), off) !=
                        ioffsets.end())
          continue;
        break;
      }
      ioffsets.push_back(off);
      out.offsets.emplace_back(off.begin(), off.end());
      out.relation_names.push_back("rel" + letters(r));
      out.keywords.push_back("kw" + letters(r));
    }
  }

  bool is_offset(const std::vector<double>& a,
                 const std::vector<double>& b) const {
    for (const auto& off : ioffsets) {
      bool match = true;
      for (std::size_t i = 0; i < off.size(); ++i)
        if (b[i] - a[i] != off[i]) {
          match = false;
          break;
        }
      if (match) return true;
    }
    return false;
  }

  void make_fact_pairs() {
    for (std::size_t r = 0; r < spec.num_relations; ++r) {
      for (std::size_t i = 0; i < spec.entities_per_relation; ++i) {
        for (int tries = 0; tries < 100; ++tries) {
          auto hp = draw_position();
          auto tp = hp;
          for (std::size_t d = 0; d < spec.latent_dim; ++d)
            tp[d] += ioffsets[r][d];
          std::string h = intern(hp), t = intern(tp);
          if (!used_pairs.insert({h, t}).second) continue;
          fact_pairs.push_back({{h, t}, static_cast<int>(r)});
          out.facts[{h, t}].insert(out.relation_names[r]);
          out.triples.add(h, out.relation_names[r], t);
          entity_pool.push_back(h);
          entity_pool.push_back(t);
          break;
        }
      }
    }
    std::sort(entity_pool.begin(), entity_pool.end());
    entity_pool.erase(std::unique(entity_pool.begin(), entity_pool.end()),
                      entity_pool.end());
  }

  void make_extra_triples() {
    std::set<std::string> seen;
    for (const auto& tr : out.triples.triples)
      seen.insert(out.triples.entities[tr.h] + "|" +
                  out.triples.relations[tr.r] + "|" +
                  out.triples.entities[tr.t]);
    for (std::size_t r = 0; r < spec.num_relations; ++r) {
      for (std::size_t i = 0; i < spec.kg_extra_per_relation; ++i) {
        for (int tries = 0; tries < 100; ++tries) {
          auto hp = draw_position();
          auto tp = hp;
          for (std::size_t d = 0; d < spec.latent_dim; ++d)
            tp[d] += ioffsets[r][d];
          std::string h = intern(hp), t = intern(tp);
          if (!seen.insert(h + "|" + out.relation_names[r] + "|" + t).second)
            continue;
          out.triples.add(h, out.relation_names[r], t);
          break;
        }
      }
    }
  }

  void make_na_pairs() {
    std::size_t want = static_cast<std::size_t>(
        std::llround(spec.negative_fraction *
                     static_cast<double>(fact_pairs.size())));
    std::size_t tries = 0, cap = 1000 * (want + 1);
    while (na_pairs.size() < want) {
      if (++tries > cap)
        throw std::invalid_argument(
            "synth: cannot place negative pairs; lattice too dense");
      const auto& a = entity_pool[rng.uniform_int(entity_pool.size())];
      const auto& b = entity_pool[rng.uniform_int(entity_pool.size())];
      if (a == b) continue;
      if (is_offset(out.latent[a], out.latent[b])) continue;
      if (!used_pairs.insert({a, b}).second) continue;
      na_pairs.push_back({a, b});
    }
  }

  std::string filler() { return fillers[rng.uniform_int(fillers.size())]; }

  SentenceExample template_sentence(const Pair& p, int r) {
    std::size_t j = rng.uniform_int(spec.templates_per_relation);
    std::size_t pre = 1 + (j & 1), post = 1 + ((j >> 1) & 1);
    SentenceExample ex;
    ex.tokens.push_back(p.first);
    for (std::size_t i = 0; i < pre; ++i) ex.tokens.push_back(filler());
    ex.tokens.push_back(out.keywords[r]);
    for (std::size_t i = 0; i < post; ++i) ex.tokens.push_back(filler());
    ex.tokens.push_back(p.second);
    finish(ex, p, out.relation_names[r]);
    return ex;
  }

  SentenceExample neutral_sentence(const Pair& p, const std::string& rel) {
    std::size_t gap = 2 + rng.uniform_int(3);
    SentenceExample ex;
    ex.tokens.push_back(p.first);
    for (std::size_t i = 0; i < gap; ++i) ex.tokens.push_back(filler());
    ex.tokens.push_back(p.second);
    finish(ex, p, rel);
    return ex;
  }

  void finish(SentenceExample& ex, const Pair& p, const std::string& rel) {
    ex.head = {0, 1};
    ex.tail = {ex.tokens.size() - 1, ex.tokens.size()};
    ex.head_id = p.first;
    ex.tail_id = p.second;
    ex.relation = rel;
  }

  // Draw order per bag: size, then per sentence a noise coin (positive bags
  // only; always consumed), then the template index or gap width, then the
  // fillers. A bag whose every coin came up noisy gets sentence 0 rewritten
  // on-template so the at-least-one guarantee is structural.
  void emit_bag(const Pair& p, int r, std::vector<SentenceExample>& dst) {
    std::size_t size =
        spec.min_bag_sentences +
        rng.uniform_int(spec.max_bag_sentences - spec.min_bag_sentences + 1);
    if (r < 0) {
      for (std::size_t s = 0; s < size; ++s)
        dst.push_back(neutral_sentence(p, "NA"));
      return;
    }
    std::vector<char> noisy(size);
    bool any_clean = false;
    for (std::size_t s = 0; s < size; ++s) {
      noisy[s] = rng.bernoulli(spec.noise_rate) ? 1 : 0;
      if (!noisy[s]) any_clean = true;
    }
    if (!any_clean) noisy[0] = 0;
    for (std::size_t s = 0; s < size; ++s)
      dst.push_back(noisy[s] ? neutral_sentence(p, out.relation_names[r])
                             : template_sentence(p, r));
  }

  void run() {
    draw_offsets();
    for (std::size_t i = 0; i < spec.filler_vocab; ++i)
      fillers.push_back("w" + letters(i));
    make_fact_pairs();
    make_extra_triples();
    make_na_pairs();

    std::vector<std::pair<Pair, int>> all = fact_pairs;
    for (const auto& p : na_pairs) all.push_back({p, -1});
    rng.shuffle(all);

    std::size_t n = all.size();
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(spec.test_fraction * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(spec.val_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_val == 0 || n_test + n_val >= n)
      throw std::invalid_argument(
          "synth: split fractions leave an empty split");

    std::vector<std::vector<std::pair<Pair, int>>> splits(3);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t s = i < n_test ? 2 : (i < n_test + n_val ? 1 : 0);
      splits[s].push_back(all[i]);
    }
    // every split needs a fact pair for its PR curve; repair by swapping
    // with the split holding the most facts
    auto fact_count = [](const std::vector<std::pair<Pair, int>>& v) {
      std::size_t c = 0;
      for (const auto& e : v) c += e.second >= 0 ? 1 : 0;
      return c;
    };
    for (std::size_t s = 0; s < 3; ++s) {
      if (fact_count(splits[s]) > 0) continue;
      std::size_t donor = 3;
      for (std::size_t d = 0; d < 3; ++d)
        if (fact_count(splits[d]) >= 2 &&
            (donor == 3 || fact_count(splits[d]) > fact_count(splits[donor])))
          donor = d;
      if (donor == 3)
        throw std::invalid_argument("synth: too few fact pairs to split");
      auto it = std::find_if(splits[donor].begin(), splits[donor].end(),
                             [](const auto& e) { return e.second >= 0; });
      std::swap(*it, splits[s].front());
    }

    std::vector<SentenceExample>* dests[3] = {&out.train, &out.val, &out.test};
    for (std::size_t s = 0; s < 3; ++s)
      for (const auto& [pair, r] : splits[s]) emit_bag(pair, r, *dests[s]);

    for (const auto& e : out.val) out.eval_pairs.insert({e.head_id, e.tail_id});
    for (const auto& e : out.test)
      out.eval_pairs.insert({e.head_id, e.tail_id});
  }
};

void check_spec(const SynthSpec& s) {
  if (s.num_relations == 0)
    throw std::invalid_argument("synth: num_relations must be positive");
  if (s.entities_per_relation == 0)
    throw std::invalid_argument("synth: entities_per_relation must be positive");
  if (s.templates_per_relation == 0)
    throw std::invalid_argument("synth: templates_per_relation must be positive");
  if (s.min_bag_sentences == 0 || s.min_bag_sentences > s.max_bag_sentences)
    throw std::invalid_argument("synth: bad bag size range");
  if (s.filler_vocab < 4)
    throw std::invalid_argument("synth: filler_vocab too small");
  if (s.latent_dim == 0)
    throw std::invalid_argument("synth: latent_dim must be positive");
  if (!(s.noise_rate >= 0.0 && s.noise_rate < 1.0))
    throw std::invalid_argument("synth: noise_rate must lie in [0, 1)");
  if (s.negative_fraction < 0.0)
    throw std::invalid_argument("synth: negative_fraction must be >= 0");
  if (!(s.val_fraction > 0.0 && s.test_fraction > 0.0 &&
        s.val_fraction + s.test_fraction < 1.0))
    throw std::invalid_argument("synth: bad split fractions");
}

}  // namespace

SynthOutput synth_generate(const SynthSpec& spec) {
  check_spec(spec);
  Gen g(spec);
  g.run();
  return std::move(g.out);
}

namespace {

std::set<Pair> pair_set(const std::vector<SentenceExample>& ex) {
  std::set<Pair> s;
  for (const auto& e : ex) s.insert({e.head_id, e.tail_id});
  return s;
}

void fail(const std::string& what) {
  throw std::runtime_error("synth_validate: " + what);
}

}  // namespace

void synth_validate(const SynthOutput& out, const SynthSpec& spec) {
  if (out.relation_names.size() != spec.num_relations ||
      out.keywords.size() != spec.num_relations ||
      out.offsets.size() != spec.num_relations)
    fail("relation table sizes disagree with the spec");
  for (std::size_t i = 0; i < out.offsets.size(); ++i) {
    if (out.offsets[i].size() != spec.latent_dim) fail("offset dim mismatch");
    if (std::all_of(out.offsets[i].begin(), out.offsets[i].end(),
                    [](double c) { return c == 0.0; }))
      fail("zero relation offset");
    for (std::size_t j = i + 1; j < out.offsets.size(); ++j)
      if (out.offsets[i] == out.offsets[j]) fail("duplicate relation offsets");
  }

  auto tr = pair_set(out.train), va = pair_set(out.val), te = pair_set(out.test);
  if (tr.empty() || va.empty() || te.empty()) fail("empty split");
  for (const auto& p : va)
    if (tr.count(p)) fail("train/val pair overlap");
  for (const auto& p : te)
    if (tr.count(p) || va.count(p)) fail("test pair overlap");

  std::set<Pair> evp;
  for (const auto& p : va) evp.insert(p);
  for (const auto& p : te) evp.insert(p);
  if (evp != out.eval_pairs) fail("eval_pairs is not val+test");

  std::map<std::string, std::size_t> kw_rel;
  for (std::size_t r = 0; r < out.keywords.size(); ++r)
    kw_rel[out.keywords[r]] = r;

  std::map<Pair, std::set<std::string>> observed;
  const std::vector<SentenceExample>* splits[3] = {&out.train, &out.val,
                                                   &out.test};
  bool fact_in_split[3] = {false, false, false};
  for (std::size_t s = 0; s < 3; ++s) {
    std::map<Pair, std::vector<const SentenceExample*>> bags;
    for (const auto& e : *splits[s]) bags[{e.head_id, e.tail_id}].push_back(&e);
    for (const auto& [pair, sents] : bags) {
      const std::string& rel = sents.front()->relation;
      for (const auto* e : sents) {
        if (e->relation != rel) fail("mixed relation annotations in a bag");
        if (e->tokens.empty() || e->tokens.front() != pair.first ||
            e->tokens.back() != pair.second)
          fail("entity mentions out of place");
        if (e->head.begin != 0 || e->head.end != 1 ||
            e->tail.end != e->tokens.size() ||
            e->tail.begin + 1 != e->tail.end)
          fail("bad argument spans");
      }
      if (rel == "NA") {
        if (out.facts.count(pair)) fail("NA bag for a known fact pair");
        for (const auto* e : sents)
          for (const auto& t : e->tokens)
            if (kw_rel.count(t)) fail("relation keyword in an NA bag");
        continue;
      }
      fact_in_split[s] = true;
      observed[pair].insert(rel);
      auto it = out.facts.find(pair);
      if (it == out.facts.end() || !it->second.count(rel))
        fail("bag annotation missing from the answer key");
      std::size_t r = std::find(out.relation_names.begin(),
                                out.relation_names.end(), rel) -
                      out.relation_names.begin();
      if (r >= out.relation_names.size()) fail("unknown relation name");
      std::size_t on_template = 0;
      for (const auto* e : sents) {
        bool has_kw = false;
        for (const auto& t : e->tokens) {
          auto k = kw_rel.find(t);
          if (k == kw_rel.end()) continue;
          if (k->second != r) fail("foreign keyword in a positive bag");
          has_kw = true;
        }
        on_template += has_kw ? 1 : 0;
      }
      if (on_template == 0) fail("positive bag with no on-template sentence");
      if (spec.noise_rate == 0.0 && on_template != sents.size())
        fail("off-template sentence despite noise_rate 0");
    }
  }
  for (std::size_t s = 0; s < 3; ++s)
    if (!fact_in_split[s]) fail("split without a fact pair");

  for (const auto& [pair, rels] : out.facts) {
    auto hit = out.latent.find(pair.first);
    auto tit = out.latent.find(pair.second);
    if (hit == out.latent.end() || tit == out.latent.end())
      fail("fact entity without a latent position");
    const std::vector<double>* hp = &hit->second;
    const std::vector<double>* tp = &tit->second;
    for (const auto& rel : rels) {
      std::size_t r = std::find(out.relation_names.begin(),
                                out.relation_names.end(), rel) -
                      out.relation_names.begin();
      if (r >= out.relation_names.size()) fail("unknown relation in key");
      for (std::size_t d = 0; d < spec.latent_dim; ++d)
        if ((*tp)[d] - (*hp)[d] != out.offsets[r][d])
          fail("fact pair breaks its relation offset");
    }
  }
  // observed annotations must cover the key restricted to corpus pairs
  for (const auto& [pair, rels] : observed)
    if (out.facts.at(pair) != rels) fail("answer key disagrees with corpus");

  for (const auto& t : out.triples.triples) {
    const auto& h = out.triples.entities[t.h];
    const auto& tl = out.triples.entities[t.t];
    const auto& rel = out.triples.relations[t.r];
    std::size_t r = std::find(out.relation_names.begin(),
                              out.relation_names.end(), rel) -
                    out.relation_names.begin();
    if (r >= out.relation_names.size()) fail("unknown triple relation");
    auto hit = out.latent.find(h);
    auto tit = out.latent.find(tl);
    if (hit == out.latent.end() || tit == out.latent.end())
      fail("triple entity without a latent position");
    for (std::size_t d = 0; d < spec.latent_dim; ++d)
      if (tit->second[d] - hit->second[d] != out.offsets[r][d])
        fail("triple breaks its relation offset");
  }
}

void synth_write(const SynthOutput& out, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto p = [&](const char* name) { return dir + "/" + name; };
  write_corpus_jsonl(p("train.jsonl"), out.train);
  write_corpus_jsonl(p("val.jsonl"), out.val);
  write_corpus_jsonl(p("test.jsonl"), out.test);
  out.triples.save(p("triples.tsv"));
  write_pairs_tsv(p("eval_pairs.tsv"), out.eval_pairs);
  std::ofstream a(p("answers.tsv"));
  if (!a) throw std::runtime_error("cannot open " + p("answers.tsv"));
  for (const auto& [pair, rels] : out.facts)
    for (const auto& r : rels)
      a << pair.first << "\t" << pair.second << "\t" << r << "\n";
}

std::map<std::pair<std::string, std::string>, std::set<std::string>>
read_answers_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::map<Pair, std::set<std::string>> facts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string h, t, r;
    if (!std::getline(ss, h, '\t') || !std::getline(ss, t, '\t') ||
        !std::getline(ss, r))
      throw std::runtime_error("bad answers line: " + line);
    facts[{h, t}].insert(r);
  }
  return facts;
}

namespace {

bool beats(const PredictionRecord& a, const PredictionRecord& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.pair_key != b.pair_key) return a.pair_key < b.pair_key;
  return a.relation < b.relation;
}

}  // namespace

double naive_auc(const std::vector<PredictionRecord>& records) {
  const std::size_t n = records.size();
  if (n == 0) throw std::invalid_argument("naive_auc: no records");
  std::size_t facts = 0;
  for (const auto& r : records) facts += r.is_fact ? 1 : 0;
  if (facts == 0) throw std::invalid_argument("naive_auc: no facts");
  std::vector<const PredictionRecord*> ordered(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      // input-order tiebreak keeps the placement a permutation even on
      // byte-identical records, which one prediction per (pair, relation)
      // never produces
      if (beats(records[j], records[i]) ||
          (j < i && !beats(records[i], records[j]) &&
           !beats(records[j], records[i])))
        ++rank;
    }
    ordered[rank] = &records[i];
  }
  std::size_t tp = 0;
  double area = 0.0, pr = 0.0, pp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ordered[i]->is_fact ? 1 : 0;
    double recall = static_cast<double>(tp) / static_cast<double>(facts);
    double prec = static_cast<double>(tp) / static_cast<double>(i + 1);
    if (i == 0) pp = prec;
    area += (recall - pr) * 0.5 * (prec + pp);
    pr = recall;
    pp = prec;
  }
  return area;
}

double naive_precision_at_n(const std::vector<PredictionRecord>& records,
                            std::size_t n) {
  if (n == 0) throw std::invalid_argument("naive_precision_at_n: n is zero");
  if (n > records.size())
    throw std::invalid_argument("naive_precision_at_n: n exceeds records");
  std::size_t tp = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < records.size(); ++j)
      if (j != i && beats(records[j], records[i])) ++rank;
    if (rank < n && records[i].is_fact) ++tp;
  }
  return static_cast<double>(tp) / static_cast<double>(n);
}

}  // namespace bagvae

#include "bagvae/kb.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "bagvae/serialize.hpp"
#include "bagvae/tape.hpp"

namespace bagvae {

int TripleSet::intern_entity(const std::string& name) {
  auto it = entity_id.find(name);
  if (it != entity_id.end()) return it->second;
  int id = static_cast<int>(entities.size());
  entity_id[name] = id;
  entities.push_back(name);
  return id;
}

int TripleSet::intern_relation(const std::string& name) {
  auto it = relation_id.find(name);
  if (it != relation_id.end()) return it->second;
  int id = static_cast<int>(relations.size());
  relation_id[name] = id;
  relations.push_back(name);
  return id;
}

void TripleSet::add(const std::string& h, const std::string& r,
                    const std::string& t) {
  if (h.empty() || r.empty() || t.empty())
    throw std::invalid_argument("TripleSet: empty id");
  triples.push_back({intern_entity(h), intern_relation(r), intern_entity(t)});
}

TripleSet TripleSet::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open triples file " + path);
  TripleSet ts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error("triples line " + std::to_string(lineno) +
                               ": need three tab-separated fields");
    ts.add(line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
           line.substr(t2 + 1));
  }
  return ts;
}

void TripleSet::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const auto& tr : triples)
    os << entities[tr.h] << "\t" << relations[tr.r] << "\t" << entities[tr.t]
       << "\n";
}

std::size_t prune_eval_links(
    TripleSet& ts, const std::set<std::pair<std::string, std::string>>& pairs) {
  std::vector<Triple> kept;
  kept.reserve(ts.triples.size());
  std::size_t removed = 0;
  for (const auto& tr : ts.triples) {
    const std::string& h = ts.entities[tr.h];
    const std::string& t = ts.entities[tr.t];
    if (pairs.count({h, t}) || pairs.count({t, h})) {
      ++removed;
      continue;
    }
    kept.push_back(tr);
  }
  ts.triples = std::move(kept);
  return removed;
}

void KbEmbeddings::save(const std::string& path) const {
  Container c;
  c.put_meta("kind", "kb_embeddings");
  c.put_meta("dim", std::to_string(dim));
  std::string en, rn;
  for (const auto& e : entities) {
    en += e;
    en.push_back('\n');
  }
  for (const auto& r : relations) {
    rn += r;
    rn.push_back('\n');
  }
  c.put_bytes("entity_names", std::vector<std::uint8_t>(en.begin(), en.end()));
  c.put_bytes("relation_names",
              std::vector<std::uint8_t>(rn.begin(), rn.end()));
  c.put_tensor("ent", Tensor({std::max<std::size_t>(entities.size(), 1), dim},
                             entities.empty() ? std::vector<double>(dim, 0.0)
                                              : ent));
  c.put_tensor("rel", Tensor({std::max<std::size_t>(relations.size(), 1), dim},
                             relations.empty() ? std::vector<double>(dim, 0.0)
                                               : rel));
  c.save(path);
}

KbEmbeddings KbEmbeddings::load(const std::string& path) {
  Container c = Container::load(path);
  if (!c.has_meta("kind") || c.meta_value("kind") != "kb_embeddings")
    throw std::runtime_error(path + " is not a KB embedding file");
  KbEmbeddings emb;
  emb.dim = std::stoull(c.meta_value("dim"));
  auto names = [&](const char* key) {
    std::vector<std::string> out;
    std::string cur;
    for (std::uint8_t b : c.bytes(key)) {
      if (b == '\n') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(static_cast<char>(b));
      }
    }
    return out;
  };
  emb.entities = names("entity_names");
  emb.relations = names("relation_names");
  for (std::size_t i = 0; i < emb.entities.size(); ++i)
    emb.entity_id[emb.entities[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < emb.relations.size(); ++i)
    emb.relation_id[emb.relations[i]] = static_cast<int>(i);
  Tensor ent = c.tensor("ent");
  Tensor rel = c.tensor("rel");
  emb.ent.assign(ent.data.begin(),
                 ent.data.begin() + emb.entities.size() * emb.dim);
  emb.rel.assign(rel.data.begin(),
                 rel.data.begin() + emb.relations.size() * emb.dim);
  return emb;
}

double transe_distance(const KbEmbeddings& emb, int h, int r, int t) {
  double sq = 0.0;
  const double* eh = emb.entity(h);
  const double* er = emb.relation(r);
  const double* et = emb.entity(t);
  for (std::size_t k = 0; k < emb.dim; ++k) {
    double u = eh[k] + er[k] - et[k];
    sq += u * u;
  }
  return std::sqrt(sq);
}

double transe_score(const KbEmbeddings& emb, const std::string& h,
                    const std::string& r, const std::string& t, double gamma) {
  auto hi = emb.entity_id.find(h);
  auto ri = emb.relation_id.find(r);
  auto ti = emb.entity_id.find(t);
  if (hi == emb.entity_id.end() || ri == emb.relation_id.end() ||
      ti == emb.entity_id.end())
    throw std::invalid_argument("transe_score: unknown id");
  return gamma - transe_distance(emb, hi->second, ri->second, ti->second);
}

std::vector<double> adversarial_weights(const std::vector<double>& distances,
                                        double gamma, double alpha) {
  std::vector<double> logits(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i)
    logits[i] = alpha * (gamma - distances[i]);
  return softmax_vec(logits);
}

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

KbEmbeddings transe_train(const TripleSet& ts, const TransEConfig& cfg) {
  if (ts.triples.empty())
    throw std::invalid_argument("transe_train: empty triple set");
  if (cfg.dim == 0) throw std::invalid_argument("transe_train: dim == 0");
  std::size_t ne = ts.entities.size();
  std::size_t nr = ts.relations.size();
  std::size_t d = cfg.dim;

  KbEmbeddings emb;
  emb.dim = d;
  emb.entities = ts.entities;
  emb.relations = ts.relations;
  emb.entity_id = ts.entity_id;
  emb.relation_id = ts.relation_id;
  emb.ent.resize(ne * d);
  emb.rel.resize(nr * d);
  Rng rng(cfg.seed);
  double lim = 6.0 / std::sqrt(static_cast<double>(d));
  for (double& v : emb.ent) v = rng.uniform(-lim, lim);
  for (double& v : emb.rel) v = rng.uniform(-lim, lim);

  std::unordered_set<std::uint64_t> exists;
  exists.reserve(ts.triples.size() * 2);
  auto key = [&](int h, int r, int t) {
    return (static_cast<std::uint64_t>(h) * nr + static_cast<std::uint64_t>(r)) *
               ne +
           static_cast<std::uint64_t>(t);
  };
  for (const auto& tr : ts.triples) exists.insert(key(tr.h, tr.r, tr.t));

  std::vector<double> u(d);
  struct Neg {
    int ent;
    bool head_side;
    double dist;
    std::vector<double> u;
  };
  std::vector<Neg> negs(cfg.negatives);
  std::unordered_map<int, std::vector<double>> gent, grel;
  auto acc = [&](std::unordered_map<int, std::vector<double>>& m, int id,
                 const std::vector<double>& vec, double coeff) {
    auto& g = m[id];
    if (g.empty()) g.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) g[k] += coeff * vec[k];
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    gent.clear();
    grel.clear();
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const Triple& tr =
          ts.triples[static_cast<std::size_t>(rng.uniform_int(ts.triples.size()))];
      const double* eh = emb.entity(tr.h);
      const double* er = emb.relation(tr.r);
      const double* et = emb.entity(tr.t);
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        u[k] = eh[k] + er[k] - et[k];
        sq += u[k] * u[k];
      }
      double dist = std::sqrt(std::max(sq, 1e-24));
      double cpos = sigmoid(dist - cfg.gamma);
      for (std::size_t k = 0; k < d; ++k) u[k] /= dist;
      acc(gent, tr.h, u, cpos);
      acc(grel, tr.r, u, cpos);
      acc(gent, tr.t, u, -cpos);

      std::vector<double> dists(cfg.negatives);
      for (std::size_t n = 0; n < cfg.negatives; ++n) {
        Neg& ng = negs[n];
        ng.head_side = rng.bernoulli(0.5);
        int cand = 0;
        for (int attempt = 0; attempt < 100; ++attempt) {
          cand = static_cast<int>(rng.uniform_int(ne));
          std::uint64_t k2 = ng.head_side ? key(cand, tr.r, tr.t)
                                          : key(tr.h, tr.r, cand);
          if (!exists.count(k2)) break;
        }
        ng.ent = cand;
        const double* ch = ng.head_side ? emb.entity(cand) : eh;
        const double* ct = ng.head_side ? et : emb.entity(cand);
        ng.u.resize(d);
        double nsq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          ng.u[k] = ch[k] + er[k] - ct[k];
          nsq += ng.u[k] * ng.u[k];
        }
        ng.dist = std::sqrt(std::max(nsq, 1e-24));
        dists[n] = ng.dist;
        for (std::size_t k = 0; k < d; ++k) ng.u[k] /= ng.dist;
      }
      std::vector<double> w =
          adversarial_weights(dists, cfg.gamma, cfg.adv_temperature);
      for (std::size_t n = 0; n < cfg.negatives; ++n) {
        const Neg& ng = negs[n];
        double coeff = -w[n] * sigmoid(cfg.gamma - ng.dist);
        int hid = ng.head_side ? ng.ent : tr.h;
        int tid = ng.head_side ? tr.t : ng.ent;
        acc(gent, hid, ng.u, coeff);
        acc(grel, tr.r, ng.u, coeff);
        acc(gent, tid, ng.u, -coeff);
      }
    }
    double inv_b = 1.0 / static_cast<double>(cfg.batch);
    for (auto& [id, g] : gent) {
      double* e = emb.ent.data() + static_cast<std::size_t>(id) * d;
      for (std::size_t k = 0; k < d; ++k) {
        double reg = 3.0 * cfg.reg_lambda * e[k] * e[k] *
                     (e[k] >= 0.0 ? 1.0 : -1.0);
        e[k] -= cfg.lr * (g[k] * inv_b + reg);
      }
    }
    for (auto& [id, g] : grel) {
      double* e = emb.rel.data() + static_cast<std::size_t>(id) * d;
      for (std::size_t k = 0; k < d; ++k) e[k] -= cfg.lr * g[k] * inv_b;
    }
  }
  return emb;
}

const std::vector<double>* PriorTable::lookup(const std::string& h,
                                              const std::string& t) const {
  auto it = means.find({h, t});
  return it == means.end() ? nullptr : &it->second;
}

void PriorTable::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "priors " << dim << " " << means.size() << " coverage ";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", coverage);
  os << buf << "\n";
  for (const auto& [pair, mu] : means) {
    os << pair.first << "\t" << pair.second << "\t";
    for (double v : mu) {
      float f = static_cast<float>(v);
      std::uint32_t w;
      std::memcpy(&w, &f, 4);
      char bytes[4] = {static_cast<char>(w & 0xff),
                       static_cast<char>((w >> 8) & 0xff),
                       static_cast<char>((w >> 16) & 0xff),
                       static_cast<char>((w >> 24) & 0xff)};
      os.write(bytes, 4);
    }
    os << "\n";
  }
}

PriorTable PriorTable::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open priors file " + path);
  std::string all((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  std::size_t nl = all.find('\n');
  if (nl == std::string::npos)
    throw std::runtime_error("priors file truncated: " + path);
  std::istringstream head(all.substr(0, nl));
  std::string magic, covword;
  PriorTable pt;
  std::size_t count = 0;
  head >> magic >> pt.dim >> count >> covword >> pt.coverage;
  if (magic != "priors" || covword != "coverage")
    throw std::runtime_error("bad priors header in " + path);
  std::size_t pos = nl + 1;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t tab1 = all.find('\t', pos);
    std::size_t tab2 = tab1 == std::string::npos ? tab1 : all.find('\t', tab1 + 1);
    if (tab2 == std::string::npos)
      throw std::runtime_error("priors record truncated in " + path);
    std::string h = all.substr(pos, tab1 - pos);
    std::string t = all.substr(tab1 + 1, tab2 - tab1 - 1);
    pos = tab2 + 1;
    if (pos + 4 * pt.dim + 1 > all.size())
      throw std::runtime_error("priors payload truncated in " + path);
    std::vector<double> mu(pt.dim);
    for (std::size_t k = 0; k < pt.dim; ++k) {
      std::uint32_t w = 0;
      for (int bshift = 0; bshift < 4; ++bshift)
        w |= static_cast<std::uint32_t>(
                 static_cast<unsigned char>(all[pos + 4 * k + bshift]))
             << (8 * bshift);
      float f;
      std::memcpy(&f, &w, 4);
      mu[k] = static_cast<double>(f);
    }
    pos += 4 * pt.dim;
    if (all[pos] != '\n')
      throw std::runtime_error("priors record framing broken in " + path);
    ++pos;
    pt.means[{h, t}] = std::move(mu);
  }
  return pt;
}

PriorTable build_prior_table(
    const KbEmbeddings& emb,
    const std::set<std::pair<std::string, std::string>>& corpus_pairs) {
  PriorTable pt;
  pt.dim = emb.dim;
  std::size_t covered = 0;
  for (const auto& [h, t] : corpus_pairs) {
    auto hi = emb.entity_id.find(h);
    auto ti = emb.entity_id.find(t);
    if (hi == emb.entity_id.end() || ti == emb.entity_id.end()) continue;
    std::vector<double> mu(emb.dim);
    const double* eh = emb.entity(hi->second);
    const double* et = emb.entity(ti->second);
    for (std::size_t k = 0; k < emb.dim; ++k) mu[k] = eh[k] - et[k];
    pt.means[{h, t}] = std::move(mu);
    ++covered;
  }
  pt.coverage = corpus_pairs.empty()
                    ? 0.0
                    : static_cast<double>(covered) /
                          static_cast<double>(corpus_pairs.size());
  return pt;
}

std::vector<EncodedBag> filter_prior_only(const std::vector<EncodedBag>& bags,
                                          const PriorTable& table) {
  std::vector<EncodedBag> out;
  out.reserve(bags.size());
  for (const auto& b : bags)
    if (table.lookup(b.head_id, b.tail_id)) out.push_back(b);
  return out;
}

}  // namespace bagvae

// Acceptance gate: nine scaled-down end-to-end checks, one verdict line
// each. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "bagvae/corpus.hpp"
#include "bagvae/eval.hpp"
#include "bagvae/kb.hpp"
#include "bagvae/model.hpp"
#include "bagvae/rng.hpp"
#include "bagvae/synth.hpp"
#include "bagvae/tape.hpp"
#include "bagvae/train.hpp"

using namespace bagvae;
namespace fs = std::filesystem;

namespace {

// pinned tolerances
constexpr double kGradTol = 1e-4;
constexpr double kKlTol = 1e-2;
constexpr double kMetricTol = 1e-12;
constexpr double kKbAucMin = 0.90;
constexpr double kBaselineAucMin = 0.85;
constexpr double kCosineMin = 0.9;
constexpr double kDistanceMargin = 1.0;
constexpr double kPermutationTol = 1e-9;
constexpr std::size_t kKlCases = 20;
constexpr std::size_t kKlSamples = 1000000;
constexpr std::size_t kMetricSets = 1000;
constexpr std::uint64_t kSeed = 5;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw Failure(msg);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

int g_failed = 0;

void run_criterion(int id, const char* label,
                   const std::function<std::string()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  try {
    std::string detail = body();
    std::printf("criterion %d: PASS  %s; %s [%.1fs]\n", id, label,
                detail.c_str(), seconds_since(t0));
  } catch (const std::exception& e) {
    ++g_failed;
    std::printf("criterion %d: FAIL  %s; %s [%.1fs]\n", id, label, e.what(),
                seconds_since(t0));
  }
  std::fflush(stdout);
}

// ---------------------------------------------------------------- recipe

// One fixed scaled-down recipe drives criteria 4, 5, 8 and 9. The numbers
// mirror the tuned CLI config: default synthetic corpus, 16-dim latents
// matching the TransE dimension, 30 epochs of Adam at 3e-3.
TrainConfig run_train_config() {
  TrainConfig tc;
  tc.epochs = 30;
  tc.patience = 30;
  tc.batch_size = 8;
  tc.lr = 0.003;
  tc.clip_norm = 5.0;
  tc.lambda = 0.9;
  tc.seed = kSeed;
  return tc;
}

TransEConfig run_transe_config() {
  TransEConfig kc;
  kc.dim = 16;
  kc.steps = 3000;
  kc.batch = 64;
  kc.negatives = 16;
  kc.lr = 1.0;
  kc.gamma = 4.0;
  kc.seed = kSeed;
  return kc;
}

ModelDims run_dims(const Vocabulary& vocab) {
  ModelDims d;
  d.vocab = vocab.size();
  d.relations = vocab.num_relations();
  d.max_len = 12;
  d.d_w = 24;
  d.d_p = 4;
  d.d_z = 16;
  d.hidden = 48;
  d.d_s = 24;
  return d;
}

struct Pipeline {
  SynthOutput synth;
  PreprocessOutput pre;
  TripleSet pruned;
  std::size_t links_pruned = 0;
  KbEmbeddings kb;
  PriorTable priors;
  std::unique_ptr<Model> model;  // kb mode, best epoch loaded
  std::vector<LatentRecord> init_latents, best_latents;
  fs::path dir;
  double kb_auc = 0.0, baseline_auc = 0.0, normal_auc = 0.0;
};

std::optional<Pipeline> g_pipe;

Pipeline& pipeline() {
  require(g_pipe.has_value(), "criterion 4 pipeline unavailable");
  return *g_pipe;
}

// ------------------------------------------------------- fd scaffolding

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-12, std::abs(a), std::abs(b)});
}

struct FdResult {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Central differences over every parameter scalar against one backward
// pass. Entries where both sides vanish carry no information and entries
// below the roundoff floor of (f(x+h)-f(x-h))/2h are skipped.
FdResult fd_all_params(ParamStore& ps, const std::function<Var(Tape&)>& build,
                       double h = 1e-5) {
  Tape t(&ps);
  Var loss = build(t);
  require(t.val(loss).numel() == 1, "fd: loss is not scalar");
  ps.zero_grad();
  t.backward(loss);
  std::vector<Tensor> saved;
  for (std::size_t i = 0; i < ps.size(); ++i) saved.push_back(ps.at(i).grad);

  FdResult res;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Parameter& p = ps.at(i);
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const double orig = p.value.data[k];
      p.value.data[k] = orig + h;
      Tape tp(&ps);
      double fp = tp.val(build(tp)).data[0];
      p.value.data[k] = orig - h;
      Tape tm(&ps);
      double fm = tm.val(build(tm)).data[0];
      p.value.data[k] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double g = saved[i].data[k];
      if (std::abs(g) < 1e-8 && std::abs(fd) < 1e-8) continue;
      ++res.checked;
      // below ~1e-10 the central difference is pure roundoff
      if (std::abs(g - fd) < 1e-10) continue;
      double e = rel_err(g, fd);
      if (e > res.max_rel) res.max_rel = e;
      require(e < kGradTol, "param " + p.name + "[" + std::to_string(k) +
                                "] analytic " + fmt(g) + " fd " + fmt(fd) +
                                " rel err " + fmt(e));
    }
  }
  return res;
}

ModelDims tiny_dims() {
  ModelDims d;
  d.vocab = 20;
  d.relations = 3;
  d.max_len = 6;
  d.d_w = 4;
  d.d_p = 2;
  d.d_z = 3;
  d.hidden = 5;
  d.d_s = 4;
  return d;
}

EncodedSentence random_sentence(const ModelDims& d, std::size_t len,
                                Rng& rng) {
  EncodedSentence s;
  s.token_ids.resize(len);
  s.pos_head.resize(len);
  s.pos_tail.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    s.token_ids[i] = 4 + static_cast<int>(rng.uniform_int(d.vocab - 4));
    s.pos_head[i] = static_cast<int>(rng.uniform_int(2 * d.max_len + 1));
    s.pos_tail[i] = static_cast<int>(rng.uniform_int(2 * d.max_len + 1));
  }
  std::size_t a = rng.uniform_int(len);
  s.head = {a, a + 1};
  std::size_t b = rng.uniform_int(len);
  s.tail = {b, b + 1};
  return s;
}

EncodedBag random_bag(const ModelDims& d, std::vector<std::size_t> lens,
                      Rng& rng) {
  EncodedBag b;
  b.head_id = "H";
  b.tail_id = "T";
  for (std::size_t l : lens) b.sentences.push_back(random_sentence(d, l, rng));
  b.labels.assign(d.relations, 0);
  b.labels[1] = 1;
  return b;
}

std::vector<SentenceNoise> frozen_noise(const Model& m, const EncodedBag& bag,
                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SentenceNoise> ns;
  for (const auto& s : bag.sentences) {
    SentenceNoise n = draw_sentence_noise(s, m.dims(), 0.3, 0.3, 0.3, rng);
    n.teacher_forced = 1.0;  // argmax self-feed is not differentiable
    ns.push_back(n);
  }
  return ns;
}

// -------------------------------------------------------------- criteria

std::string crit_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  ModelDims d = tiny_dims();

  Rng rng(47);
  Model m(d, PriorMode::kb, rng);
  EncodedBag bag = random_bag(d, {3, 4}, rng);
  auto noise = frozen_noise(m, bag, 61);
  KbEmbeddings emb;
  emb.dim = d.d_z;
  emb.entities = {"H", "T"};
  emb.entity_id = {{"H", 0}, {"T", 1}};
  emb.ent = {0.5, -0.25, 1.0, 0.0, 0.5, 0.5};
  std::set<std::pair<std::string, std::string>> pairs{{"H", "T"}};
  PriorTable pt = build_prior_table(emb, pairs);
  FdResult kb = fd_all_params(m.params(), [&](Tape& t) {
    return m.joint_loss(t, bag, noise, &pt, 0.8, 0.9, nullptr);
  });
  require(kb.checked > 0, "kb fd checked nothing");

  Rng rng2(53);
  Model base(d, PriorMode::baseline, rng2);
  EncodedBag bbag = random_bag(d, {3, 2}, rng2);
  auto bnoise = frozen_noise(base, bbag, 67);
  FdResult bl = fd_all_params(base.params(), [&](Tape& t) {
    return base.joint_loss(t, bbag, bnoise, nullptr, 0.0, 1.0, nullptr);
  });
  require(bl.checked > 0, "baseline fd checked nothing");

  double secs = seconds_since(t0);
  require(secs < 60.0, "took " + fmt(secs) + "s, bound 60s");
  return "kb " + std::to_string(kb.checked) + " params max rel " +
         fmt(kb.max_rel) + ", baseline " + std::to_string(bl.checked) +
         " params max rel " + fmt(bl.max_rel) + ", tol " + fmt(kGradTol);
}

std::string crit_kl_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  const std::size_t dim = 4;
  ParamStore ps;
  double max_gap = 0.0;
  for (std::size_t c = 0; c < kKlCases; ++c) {
    Rng rng(100 + c);
    std::vector<double> mu(dim), lv(dim), pm(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      mu[i] = rng.uniform(-1.5, 1.5);
      lv[i] = rng.uniform(-1.2, 1.2);
      pm[i] = c % 2 == 0 ? rng.uniform(-1.5, 1.5) : 0.0;
    }
    Tensor tmu = Tensor::zeros({dim}), tlv = Tensor::zeros({dim}),
           tpm = Tensor::zeros({dim});
    tmu.data = mu;
    tlv.data = lv;
    tpm.data = pm;
    Tape t(&ps);
    double closed = t.val(t.kl_diag_gauss(t.input(tmu), t.input(tlv), tpm))
                        .data[0];

    double acc = 0.0;
    for (std::size_t s = 0; s < kKlSamples; ++s) {
      double term = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        double eps = rng.normal();
        double x = mu[i] + std::exp(0.5 * lv[i]) * eps;
        term +=
            -0.5 * lv[i] - 0.5 * eps * eps + 0.5 * (x - pm[i]) * (x - pm[i]);
      }
      acc += term;
    }
    double mc = acc / static_cast<double>(kKlSamples);
    double gap = std::abs(closed - mc);
    max_gap = std::max(max_gap, gap);
    require(gap < kKlTol, "case " + std::to_string(c) + ": closed " +
                              fmt(closed) + " mc " + fmt(mc) + " gap " +
                              fmt(gap));
  }

  Tensor eq = Tensor::zeros({dim});
  eq.data = {0.7, -1.3, 0.0, 2.5};
  Tape t(&ps);
  double zero =
      t.val(t.kl_diag_gauss(t.input(eq), t.input(Tensor::zeros({dim})), eq))
          .data[0];
  require(zero == 0.0, "mu = prior, log_var = 0 gave " + fmt(zero));

  double secs = seconds_since(t0);
  require(secs < 60.0, "took " + fmt(secs) + "s, bound 60s");
  return std::to_string(kKlCases) + " cases x 1e6 samples, max gap " +
         fmt(max_gap) + " < " + fmt(kKlTol) + ", exact zero at the prior";
}

std::string crit_metric_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  double max_gap = 0.0;
  std::size_t tied_sets = 0;
  for (std::size_t set = 0; set < kMetricSets; ++set) {
    Rng rng(2000 + set);
    std::size_t n = 5 + rng.uniform_int(116);
    bool all_tied = set % 10 == 0;
    if (all_tied) ++tied_sets;
    std::vector<PredictionRecord> recs;
    bool any_fact = false;
    for (std::size_t i = 0; i < n; ++i) {
      PredictionRecord r;
      r.pair_key = "p" + std::to_string(i / 3) + "|q";
      r.relation = 1 + static_cast<int>(i % 3);
      r.score = all_tied ? 0.5
                         : static_cast<double>(rng.uniform_int(9)) / 8.0;
      r.is_fact = rng.bernoulli(0.35);
      any_fact = any_fact || r.is_fact;
      recs.push_back(std::move(r));
    }
    if (!any_fact) recs[0].is_fact = true;
    rng.shuffle(recs);

    double fast = auc(pr_curve(recs));
    double slow = naive_auc(recs);
    max_gap = std::max(max_gap, std::abs(fast - slow));
    for (std::size_t k : {std::size_t(1), n / 2, n}) {
      double pf = precision_at_n(recs, k);
      double ps = naive_precision_at_n(recs, k);
      max_gap = std::max(max_gap, std::abs(pf - ps));
    }
    require(max_gap < kMetricTol,
            "set " + std::to_string(set) + " diverged by " + fmt(max_gap));
  }

  double secs = seconds_since(t0);
  require(secs < 60.0, "took " + fmt(secs) + "s, bound 60s");
  return std::to_string(kMetricSets) + " sets (" + std::to_string(tied_sets) +
         " all-tied), auc and p@{1,n/2,n} max gap " + fmt(max_gap) + " < " +
         fmt(kMetricTol);
}

double train_leg(const Pipeline& p, PriorMode mode, const PriorTable* priors,
                 const std::string& sub) {
  Rng rng(kSeed);
  Model m(run_dims(p.pre.vocab), mode, rng);
  train_model(m, p.pre.train, p.pre.val, priors, run_train_config(),
              (p.dir / sub).string());
  return auc(pr_curve(collect_predictions(m, p.pre.test)));
}

std::string crit_end_to_end() {
  auto t0 = std::chrono::steady_clock::now();
  Pipeline p;
  p.dir = fs::temp_directory_path() / "bagvae_acceptance";
  fs::remove_all(p.dir);
  fs::create_directories(p.dir);

  SynthSpec spec;
  spec.seed = kSeed;
  p.synth = synth_generate(spec);
  synth_validate(p.synth, spec);

  PreprocessConfig pc;
  pc.max_len = 12;
  pc.top_k = 10000;
  pc.seed = kSeed;
  p.pre = preprocess(p.synth.train, p.synth.test, p.synth.val, pc);

  p.pruned = p.synth.triples;
  p.links_pruned = prune_eval_links(p.pruned, p.synth.eval_pairs);
  p.kb = transe_train(p.pruned, run_transe_config());
  p.priors = build_prior_table(p.kb, collect_pairs(p.pre.train));

  ModelDims d = run_dims(p.pre.vocab);
  require(d.d_z == run_transe_config().dim, "latent and kb dims differ");

  {
    Rng rng(kSeed);
    p.model = std::make_unique<Model>(d, PriorMode::kb, rng);
    Rng lr(977);
    p.init_latents = dump_latents(*p.model, p.pre.train, p.pre.vocab, 1, lr);
    train_model(*p.model, p.pre.train, p.pre.val, &p.priors,
                run_train_config(), (p.dir / "kb").string());
    Rng lr2(977);
    p.best_latents = dump_latents(*p.model, p.pre.train, p.pre.vocab, 1, lr2);
    p.kb_auc = auc(pr_curve(collect_predictions(*p.model, p.pre.test)));
  }
  p.baseline_auc = train_leg(p, PriorMode::baseline, nullptr, "baseline");
  p.normal_auc = train_leg(p, PriorMode::normal, nullptr, "normal");

  double kb_auc = p.kb_auc, base_auc = p.baseline_auc, norm_auc = p.normal_auc;
  g_pipe = std::move(p);

  // the baseline < normal < kb ordering is logged, not asserted: one seed
  // cannot guarantee it
  std::printf(
      "  note: test pr-auc baseline %.5f, normal prior %.5f, kb prior %.5f "
      "(ordering %s)\n",
      base_auc, norm_auc, kb_auc,
      base_auc < norm_auc && norm_auc < kb_auc ? "matches" : "differs");

  require(kb_auc >= kKbAucMin,
          "kb prior test auc " + fmt(kb_auc) + " < " + fmt(kKbAucMin));
  require(base_auc >= kBaselineAucMin,
          "baseline test auc " + fmt(base_auc) + " < " + fmt(kBaselineAucMin));
  double secs = seconds_since(t0);
  require(secs < 900.0, "took " + fmt(secs) + "s, bound 900s");
  return "kb auc " + fmt(kb_auc) + " >= " + fmt(kKbAucMin) + ", baseline " +
         fmt(base_auc) + " >= " + fmt(kBaselineAucMin) + ", 30 epochs each";
}

std::string crit_latent_geometry() {
  Pipeline& p = pipeline();
  const auto& best = p.best_latents;
  require(best.size() > 1, "too few latent records");

  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < best.size(); ++i)
    for (std::size_t j = i + 1; j < best.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < best[i].mu.size(); ++k) {
        double t = best[i].mu[k] - best[j].mu[k];
        d2 += t * t;
      }
      double dist = std::sqrt(d2);
      if (best[i].relations == best[j].relations) {
        intra += dist;
        ++n_intra;
      } else {
        inter += dist;
        ++n_inter;
      }
    }
  require(n_intra > 0 && n_inter > 0, "latent dump lacks label variety");
  intra /= static_cast<double>(n_intra);
  inter /= static_cast<double>(n_inter);
  require(intra < inter, "intra " + fmt(intra) + " not below inter " +
                             fmt(inter));

  auto prior_gap = [&](const std::vector<LatentRecord>& recs) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : recs) {
      auto bar = r.pair_key.find('|');
      const std::vector<double>* mean = p.priors.lookup(
          r.pair_key.substr(0, bar), r.pair_key.substr(bar + 1));
      if (!mean) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < r.mu.size(); ++k) {
        double t = r.mu[k] - (*mean)[k];
        d2 += t * t;
      }
      sum += std::sqrt(d2);
      ++n;
    }
    require(n > 0, "no covered pairs in latent dump");
    return sum / static_cast<double>(n);
  };
  double at_init = prior_gap(p.init_latents);
  double at_best = prior_gap(p.best_latents);
  require(at_best < at_init, "distance to kb mean grew: init " + fmt(at_init) +
                                 " best " + fmt(at_best));
  return "intra " + fmt(intra) + " < inter " + fmt(inter) +
         "; mean ||mu - mu_kb|| " + fmt(at_init) + " -> " + fmt(at_best);
}

std::string crit_transe() {
  auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;
  spec.seed = kSeed;
  SynthOutput synth = synth_generate(spec);
  const TripleSet& ts = synth.triples;
  KbEmbeddings emb = transe_train(ts, run_transe_config());

  double pos = 0.0;
  for (const auto& tr : ts.triples)
    pos += transe_distance(emb, tr.h, tr.r, tr.t);
  pos /= static_cast<double>(ts.triples.size());

  Rng rng(kSeed + 1);
  double neg = 0.0;
  std::size_t neg_n = 0;
  for (const auto& tr : ts.triples)
    for (int k = 0; k < 4; ++k) {
      int cand = static_cast<int>(rng.uniform_int(ts.entities.size()));
      if (rng.bernoulli(0.5))
        neg += transe_distance(emb, cand, tr.r, tr.t);
      else
        neg += transe_distance(emb, tr.h, tr.r, cand);
      ++neg_n;
    }
  neg /= static_cast<double>(neg_n);
  require(pos + kDistanceMargin <= neg, "positive mean " + fmt(pos) + " + " +
                                            fmt(kDistanceMargin) +
                                            " above corrupted mean " +
                                            fmt(neg));

  double min_cos = 1.0;
  for (std::size_t r = 0; r < ts.relations.size(); ++r) {
    std::vector<double> diff(emb.dim, 0.0);
    std::size_t n = 0;
    for (const auto& tr : ts.triples) {
      if (static_cast<std::size_t>(tr.r) != r) continue;
      for (std::size_t k = 0; k < emb.dim; ++k)
        diff[k] += emb.entity(tr.t)[k] - emb.entity(tr.h)[k];
      ++n;
    }
    require(n > 0, "relation with no triples");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < emb.dim; ++k) {
      diff[k] /= static_cast<double>(n);
      dot += diff[k] * emb.relation(static_cast<int>(r))[k];
      na += diff[k] * diff[k];
      nb += emb.relation(static_cast<int>(r))[k] *
            emb.relation(static_cast<int>(r))[k];
    }
    double cosine = dot / std::sqrt(na * nb);
    min_cos = std::min(min_cos, cosine);
    require(cosine > kCosineMin, ts.relations[r] + " cosine " + fmt(cosine) +
                                     " <= " + fmt(kCosineMin));
  }

  double secs = seconds_since(t0);
  require(secs < 120.0, "took " + fmt(secs) + "s, bound 120s");
  return std::to_string(ts.triples.size()) + " triples, min cosine " +
         fmt(min_cos) + " > " + fmt(kCosineMin) + ", distance gap " +
         fmt(neg - pos) + " >= " + fmt(kDistanceMargin);
}

std::string crit_fixtures() {
  auto t0 = std::chrono::steady_clock::now();
  const std::string dir = BAGVAE_FIXTURES;

  auto dedup = read_corpus_jsonl(dir + "/dedup10.jsonl");
  require(dedup.size() == 10, "dedup fixture read " +
                                  std::to_string(dedup.size()) + " of 10");
  normalize_examples(dedup);
  std::size_t removed = dedup_train(dedup);
  require(removed == 3,
          "dedup removed " + std::to_string(removed) + ", hand count 3");

  auto resize = read_corpus_jsonl(dir + "/resize6.jsonl");
  require(resize.size() == 6, "resize fixture size");
  normalize_examples(resize);
  std::size_t dropped = 0;
  std::vector<std::optional<SentenceExample>> kept;
  for (const auto& ex : resize) {
    kept.push_back(resize_or_drop(ex, 10));
    if (!kept.back()) ++dropped;
  }
  require(dropped == 2,
          "outliers dropped " + std::to_string(dropped) + ", hand count 2");
  require(!kept[3] && !kept[4], "wrong sentences dropped");
  require(kept[0] && kept[0]->tokens == resize[0].tokens,
          "short sentence altered");
  require(kept[1] && kept[1]->tokens.size() == 10 &&
              kept[1]->tokens.back() == "wj" && kept[1]->head.begin == 0 &&
              kept[1]->tail.end == 3,
          "tail truncation remap wrong");
  std::vector<std::string> window{"delta", "echo",   "foxtrot", "golf",
                                  "hotel", "india",  "juliet",  "kilo",
                                  "lima",  "mike"};
  require(kept[2] && kept[2]->tokens == window, "window extraction wrong");
  require(kept[2]->head.begin == 5 && kept[2]->head.end == 6 &&
              kept[2]->tail.begin == 9 && kept[2]->tail.end == 10,
          "span remap wrong");

  auto ties = read_corpus_jsonl(dir + "/vocabties4.jsonl");
  normalize_examples(ties);
  std::vector<std::string> rels;
  for (const auto& ex : ties) rels.push_back(ex.relation);
  Vocabulary v = build_vocab(ties, rels, 4);
  std::vector<std::string> want{"<pad>", "<unk>",   "<bos>", "<eos>",
                                "delta", "alpha",   "charlie", "bravo"};
  require(v.id_to_word == want, "tie-break order wrong");
  require(v.frequency == std::vector<std::size_t>({0, 0, 0, 0, 3, 2, 2, 1}),
          "frequencies wrong (repeated sentence must count once)");
  require(v.word_id("echo") == Vocabulary::kUnk, "cut word not unk");

  double secs = seconds_since(t0);
  require(secs < 10.0, "took " + fmt(secs) + "s, bound 10s");
  return "dedup 3 of 10, outliers 2 of 6, exact span remaps, "
         "tie-broken vocab of 4";
}

std::string crit_protocol() {
  auto t0 = std::chrono::steady_clock::now();
  Pipeline& p = pipeline();

  require(p.links_pruned > 0, "pruning removed nothing");
  for (const auto& tr : p.pruned.triples) {
    const std::string& h = p.pruned.entities[tr.h];
    const std::string& t = p.pruned.entities[tr.t];
    require(!p.synth.eval_pairs.count({h, t}) &&
                !p.synth.eval_pairs.count({t, h}),
            "surviving triple links eval pair " + h + " " + t);
  }

  static_assert(std::is_invocable_r_v<std::vector<PredictionRecord>,
                                      decltype(collect_predictions),
                                      const Model&,
                                      const std::vector<EncodedBag>&>);
  static_assert(!std::is_invocable_v<decltype(collect_predictions),
                                     const Model&,
                                     const std::vector<EncodedBag>&,
                                     const PriorTable*>);
  static_assert(!std::is_invocable_v<decltype(&Model::predict), const Model&,
                                     const EncodedBag&, const PriorTable*>);

  const EncodedBag* big = nullptr;
  for (const auto& b : p.pre.test)
    if (!big || b.sentences.size() > big->sentences.size()) big = &b;
  require(big && big->sentences.size() >= 2, "no multi-sentence test bag");

  EncodedBag perm = *big;
  std::reverse(perm.sentences.begin(), perm.sentences.end());
  BagPrediction before = p.model->predict(*big);
  BagPrediction after = p.model->predict(perm);
  double max_prob_gap = 0.0;
  for (std::size_t r = 0; r < before.probs.size(); ++r)
    max_prob_gap =
        std::max(max_prob_gap, std::abs(before.probs[r] - after.probs[r]));
  require(max_prob_gap <= kPermutationTol,
          "probabilities moved by " + fmt(max_prob_gap));

  auto noise = frozen_noise(*p.model, *big, 303);
  auto pnoise = noise;
  std::reverse(pnoise.begin(), pnoise.end());
  Tape t1(&p.model->params());
  BagLosses a;
  p.model->joint_loss(t1, *big, noise, &p.priors, 1.0, 0.9, &a);
  Tape t2(&p.model->params());
  BagLosses b;
  p.model->joint_loss(t2, perm, pnoise, &p.priors, 1.0, 0.9, &b);
  double max_loss_gap =
      std::max({std::abs(a.total - b.total), std::abs(a.bce - b.bce),
                std::abs(a.reconstruction - b.reconstruction),
                std::abs(a.kl - b.kl)});
  require(max_loss_gap <= kPermutationTol,
          "loss components moved by " + fmt(max_loss_gap));

  double secs = seconds_since(t0);
  require(secs < 60.0, "took " + fmt(secs) + "s, bound 60s");
  return std::to_string(p.links_pruned) +
         " eval links pruned, none survive either way; prediction "
         "interface admits no prior table (compile-time); permutation "
         "moved losses by " +
         fmt(max_loss_gap) + " and probs by " + fmt(max_prob_gap);
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string crit_determinism() {
  Pipeline& p = pipeline();
  ModelDims d = run_dims(p.pre.vocab);
  Rng rng(kSeed);
  Model rerun(d, PriorMode::kb, rng);
  train_model(rerun, p.pre.train, p.pre.val, &p.priors, run_train_config(),
              (p.dir / "kb_rerun").string());

  std::string m1 = read_bytes(p.dir / "kb" / "metrics.jsonl");
  std::string m2 = read_bytes(p.dir / "kb_rerun" / "metrics.jsonl");
  require(!m1.empty(), "empty metrics log");
  require(m1 == m2, "metrics logs differ between identical runs");
  std::string c1 = read_bytes(p.dir / "kb" / "checkpoint_best.bvae");
  std::string c2 = read_bytes(p.dir / "kb_rerun" / "checkpoint_best.bvae");
  require(c1 == c2, "best checkpoints differ between identical runs");
  return "metrics logs byte-identical (" + std::to_string(m1.size()) +
         " bytes), best checkpoints too (" + std::to_string(c1.size()) +
         " bytes)";
}

}  // namespace

int main() {
  std::printf("acceptance: seed %llu\n",
              static_cast<unsigned long long>(kSeed));
  run_criterion(1, "joint-loss gradients match central differences",
                crit_gradients);
  run_criterion(2, "closed-form kl matches monte carlo", crit_kl_oracle);
  run_criterion(3, "ranking metrics match the brute-force oracle",
                crit_metric_oracle);
  run_criterion(4, "synthetic end-to-end reaches pinned pr-auc",
                crit_end_to_end);
  run_criterion(5, "latent space clusters by relation and tracks kb means",
                crit_latent_geometry);
  run_criterion(6, "transe recovers the offset geometry", crit_transe);
  run_criterion(7, "preprocessing fixtures reproduce hand counts",
                crit_fixtures);
  run_criterion(8, "protocol invariants hold", crit_protocol);
  run_criterion(9, "training is byte-deterministic", crit_determinism);

  if (g_failed == 0)
    std::printf("acceptance: all 9 criteria passed\n");
  else
    std::printf("acceptance: %d criteria FAILED\n", g_failed);
  return g_failed;
}

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "bagvae/eval.hpp"
#include "bagvae/kb.hpp"
#include "bagvae/model.hpp"
#include "bagvae/rng.hpp"
#include "bagvae/tape.hpp"

using namespace bagvae;

namespace {

ModelDims bench_dims(std::size_t vocab) {
  ModelDims d;
  d.vocab = vocab;
  d.relations = 16;
  d.max_len = 30;
  d.d_w = 32;
  d.d_p = 4;
  d.d_z = 16;
  d.hidden = 64;
  d.d_s = 32;
  return d;
}

EncodedSentence bench_sentence(const ModelDims& d, std::size_t len, Rng& rng) {
  EncodedSentence s;
  s.token_ids.resize(len);
  s.pos_head.resize(len);
  s.pos_tail.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    s.token_ids[i] = 4 + static_cast<int>(rng.uniform_int(d.vocab - 4));
    s.pos_head[i] = static_cast<int>(rng.uniform_int(2 * d.max_len + 1));
    s.pos_tail[i] = static_cast<int>(rng.uniform_int(2 * d.max_len + 1));
  }
  s.head = {0, 1};
  s.tail = {len - 1, len};
  return s;
}

EncodedBag bench_bag(const ModelDims& d, std::size_t sentences,
                     std::size_t len, Rng& rng) {
  EncodedBag b;
  b.head_id = "h";
  b.tail_id = "t";
  for (std::size_t i = 0; i < sentences; ++i)
    b.sentences.push_back(bench_sentence(d, len, rng));
  b.labels.assign(d.relations, 0);
  b.labels[1] = 1;
  return b;
}

std::vector<SentenceNoise> bench_noise(const Model& m, const EncodedBag& bag,
                                       Rng& rng) {
  std::vector<SentenceNoise> ns;
  for (const auto& s : bag.sentences)
    ns.push_back(draw_sentence_noise(s, m.dims(), 0.3, 0.3, 1.0, rng));
  return ns;
}

void BM_EncodeSentence(benchmark::State& state) {
  ModelDims d = bench_dims(2000);
  Rng rng(1);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s =
      bench_sentence(d, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) {
    Tape t(&m.params());
    auto enc = m.encode(t, s, nullptr);
    benchmark::DoNotOptimize(t.val(enc.h).data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeSentence)->Arg(8)->Arg(16)->Arg(30);

void BM_JointLossBackward(benchmark::State& state) {
  ModelDims d = bench_dims(2000);
  Rng rng(2);
  Model m(d, PriorMode::normal, rng);
  EncodedBag bag =
      bench_bag(d, static_cast<std::size_t>(state.range(0)), 16, rng);
  auto noise = bench_noise(m, bag, rng);
  for (auto _ : state) {
    Tape t(&m.params());
    Var loss = m.joint_loss(t, bag, noise, nullptr, 1.0, 0.9, nullptr);
    m.params().zero_grad();
    t.backward(loss);
    benchmark::DoNotOptimize(m.params().at(0).grad.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_JointLossBackward)->Arg(1)->Arg(4)->Arg(16);

// the adaptive output layer only has to win at realistic vocab sizes
void BM_DecodeLossSoftmax(benchmark::State& state) {
  ModelDims d = bench_dims(static_cast<std::size_t>(state.range(0)));
  d.softmax_mode = state.range(1) ? OutputSoftmax::Mode::Adaptive
                                  : OutputSoftmax::Mode::Full;
  Rng rng(3);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s = bench_sentence(d, 16, rng);
  SentenceNoise n = draw_sentence_noise(s, d, 0.0, 0.0, 1.0, rng);
  for (auto _ : state) {
    Tape t(&m.params());
    auto enc = m.encode(t, s, nullptr);
    auto [mu, lv] = m.posterior_heads(t, enc);
    Var z = m.reparameterize(t, mu, lv, n.eps);
    Var loss = m.decode_loss(t, s, z, n);
    m.params().zero_grad();
    t.backward(loss);
    benchmark::DoNotOptimize(t.val(loss).data.data());
  }
}
BENCHMARK(BM_DecodeLossSoftmax)
    ->ArgsProduct({{2000, 20000, 50000}, {0, 1}})
    ->ArgNames({"vocab", "adaptive"});

void BM_PredictBag(benchmark::State& state) {
  ModelDims d = bench_dims(2000);
  Rng rng(4);
  Model m(d, PriorMode::kb, rng);
  EncodedBag bag = bench_bag(d, 4, 16, rng);
  for (auto _ : state) {
    BagPrediction p = m.predict(bag);
    benchmark::DoNotOptimize(p.probs.data());
  }
}
BENCHMARK(BM_PredictBag);

void BM_TransETrain(benchmark::State& state) {
  TripleSet ts;
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    int h = static_cast<int>(rng.uniform_int(500));
    int r = static_cast<int>(rng.uniform_int(12));
    int t = static_cast<int>(rng.uniform_int(500));
    ts.add("e" + std::to_string(h), "r" + std::to_string(r),
           "e" + std::to_string(t));
  }
  TransEConfig cfg;
  cfg.dim = 32;
  cfg.steps = 256;
  cfg.batch = 64;
  cfg.negatives = 16;
  for (auto _ : state) {
    KbEmbeddings emb = transe_train(ts, cfg);
    benchmark::DoNotOptimize(emb.ent.data());
  }
  state.SetItemsProcessed(state.iterations() * cfg.steps);
}
BENCHMARK(BM_TransETrain)->Unit(benchmark::kMillisecond);

void BM_PrCurveAuc(benchmark::State& state) {
  Rng rng(6);
  std::vector<PredictionRecord> recs;
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  for (std::size_t i = 0; i < n; ++i) {
    PredictionRecord r;
    r.pair_key = "p" + std::to_string(i / 4) + "|q";
    r.relation = static_cast<int>(1 + i % 4);
    r.score = rng.uniform();
    r.is_fact = rng.bernoulli(0.1);
    recs.push_back(std::move(r));
  }
  recs.front().is_fact = true;
  for (auto _ : state) {
    double a = auc(pr_curve(recs));
    benchmark::DoNotOptimize(a);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_PrCurveAuc)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();

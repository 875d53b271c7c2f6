#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <functional>

#include "bagvae/model.hpp"

using namespace bagvae;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-12, std::abs(a), std::abs(b)});
}

// Central differences over every parameter scalar against one backward pass.
void check_param_grads(ParamStore& ps,
                       const std::function<Var(Tape&)>& build,
                       double tol = 1e-4, double h = 1e-5) {
  Tape t(&ps);
  Var loss = build(t);
  REQUIRE(t.val(loss).numel() == 1);
  ps.zero_grad();
  t.backward(loss);
  std::vector<Tensor> saved;
  for (std::size_t i = 0; i < ps.size(); ++i) saved.push_back(ps.at(i).grad);

  std::size_t checked = 0;
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
      ++checked;
      // below ~1e-10 the central difference is pure roundoff
      if (std::abs(g - fd) < 1e-10) continue;
      INFO("param ", p.name, " [", k, "] analytic ", g, " fd ", fd);
      REQUIRE(rel_err(g, fd) < tol);
    }
  }
  CHECK(checked > 0);
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

EncodedSentence make_sentence(const ModelDims& d, std::size_t len, Rng& rng) {
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

EncodedBag make_bag(const ModelDims& d, std::vector<std::size_t> lens,
                    Rng& rng) {
  EncodedBag b;
  b.head_id = "H";
  b.tail_id = "T";
  for (std::size_t l : lens) b.sentences.push_back(make_sentence(d, l, rng));
  b.labels.assign(d.relations, 0);
  b.labels[1] = 1;
  return b;
}

std::vector<SentenceNoise> fixed_noise(const Model& m, const EncodedBag& bag,
                                       std::uint64_t seed,
                                       double input_dropout = 0.3,
                                       double word_dropout = 0.3) {
  Rng rng(seed);
  std::vector<SentenceNoise> ns;
  for (const auto& s : bag.sentences) {
    SentenceNoise n = draw_sentence_noise(s, m.dims(), input_dropout,
                                          word_dropout, 0.3, rng);
    n.teacher_forced = 1.0;  // argmax self-feed is not differentiable
    ns.push_back(n);
  }
  return ns;
}

void zero_param(Model& m, const std::string& name) {
  Tensor& t = m.params().at(m.params().index_of(name)).value;
  for (double& v : t.data) v = 0.0;
}

double kl_closed(const std::vector<double>& mu, const std::vector<double>& lv,
                 const std::vector<double>& pm) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    acc += std::exp(lv[i]) + (mu[i] - pm[i]) * (mu[i] - pm[i]) - 1.0 - lv[i];
  return 0.5 * acc;
}

double kl_monte_carlo(const std::vector<double>& mu,
                      const std::vector<double>& lv,
                      const std::vector<double>& pm, std::size_t samples,
                      Rng& rng) {
  double acc = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double term = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      double eps = rng.normal();
      double x = mu[i] + std::exp(0.5 * lv[i]) * eps;
      term += -0.5 * lv[i] - 0.5 * eps * eps + 0.5 * (x - pm[i]) * (x - pm[i]);
    }
    acc += term;
  }
  return acc / static_cast<double>(samples);
}

}  // namespace

TEST_CASE("ctor: same seed gives identical parameters, modes differ") {
  ModelDims d = tiny_dims();
  Rng r1(7), r2(7);
  Model a(d, PriorMode::kb, r1);
  Model b(d, PriorMode::kb, r2);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params().at(i).value.data == b.params().at(i).value.data);
  Rng r3(7);
  Model base(d, PriorMode::baseline, r3);
  CHECK(base.params().size() < a.params().size());
  CHECK_FALSE(base.params().has("post.w_mu"));
  CHECK_FALSE(base.params().has("dec.lstm.w_x"));
  CHECK_FALSE(base.params().has("out.w"));
  CHECK(base.fingerprint() != a.fingerprint());
}

TEST_CASE("ctor: pretrained embedding rows replace the random ones") {
  ModelDims d = tiny_dims();
  Rng rng(1);
  Model m(d, PriorMode::normal, rng);
  Tensor rows = Tensor::zeros({d.vocab, d.d_w});
  for (std::size_t i = 0; i < rows.numel(); ++i)
    rows.data[i] = 0.01 * static_cast<double>(i);
  m.set_word_embeddings(rows);
  CHECK(m.params().at(m.params().index_of("emb.word")).value.data ==
        rows.data);
  Tensor bad = Tensor::zeros({d.vocab, d.d_w + 1});
  CHECK_THROWS_AS(m.set_word_embeddings(bad), std::invalid_argument);
}

TEST_CASE("encode: single token sentence has h equal to its output") {
  ModelDims d = tiny_dims();
  Rng rng(3);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s = make_sentence(d, 1, rng);
  Tape t(&m.params());
  auto enc = m.encode(t, s, nullptr);
  REQUIRE(enc.outputs.size() == 1);
  CHECK(t.val(enc.outputs[0]).data == t.val(enc.h).data);
}

TEST_CASE("encode: zero encoder weights give zero final states") {
  ModelDims d = tiny_dims();
  Rng rng(3);
  Model m(d, PriorMode::normal, rng);
  for (const char* n : {"enc.fwd.w_x", "enc.fwd.w_h", "enc.fwd.b",
                        "enc.bwd.w_x", "enc.bwd.w_h", "enc.bwd.b"})
    zero_param(m, n);
  EncodedSentence s = make_sentence(d, 4, rng);
  Tape t(&m.params());
  auto enc = m.encode(t, s, nullptr);
  for (double v : t.val(enc.h).data) CHECK(v == 0.0);
  for (double v : t.val(enc.c).data) CHECK(v == 0.0);
}

TEST_CASE("encode: empty sentence rejected") {
  ModelDims d = tiny_dims();
  Rng rng(3);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s;
  Tape t(&m.params());
  CHECK_THROWS_AS(m.encode(t, s, nullptr), std::invalid_argument);
}

TEST_CASE("posterior: zero weights give mu 0 and unit sigma, bias passes") {
  ModelDims d = tiny_dims();
  Rng rng(5);
  Model m(d, PriorMode::normal, rng);
  zero_param(m, "post.w_mu");
  zero_param(m, "post.w_sigma");
  zero_param(m, "post.b_sigma");
  Tensor& bmu = m.params().at(m.params().index_of("post.b_mu")).value;
  bmu.data = {0.3, -0.2, 1.5};
  EncodedSentence s = make_sentence(d, 3, rng);
  Tape t(&m.params());
  auto enc = m.encode(t, s, nullptr);
  auto [mu, lv] = m.posterior_heads(t, enc);
  CHECK(t.val(mu).data == bmu.data);
  for (double v : t.val(lv).data) CHECK(v == 0.0);
}

TEST_CASE("reparameterize: eps zero gives mu, unit eps shifts by sigma") {
  ModelDims d = tiny_dims();
  Rng rng(5);
  Model m(d, PriorMode::normal, rng);
  Tape t(&m.params());
  Tensor mu = Tensor::zeros({3});
  mu.data = {1.0, -2.0, 0.5};
  Tensor lv = Tensor::zeros({3});
  Var vmu = t.input(mu), vlv = t.input(lv);
  Var z0 = m.reparameterize(t, vmu, vlv, {0.0, 0.0, 0.0});
  CHECK(t.val(z0).data == mu.data);
  Var z1 = m.reparameterize(t, vmu, vlv, {1.0, 1.0, 1.0});
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(t.val(z1).data[i] == doctest::Approx(mu.data[i] + 1.0));
}

TEST_CASE("reparameterize: sample moments match the posterior") {
  ModelDims d = tiny_dims();
  d.d_z = 1;
  Rng rng(11);
  Model m(d, PriorMode::normal, rng);
  Tape t(&m.params());
  Tensor mu = Tensor::vec({1.0});
  Tensor lv = Tensor::vec({0.0});
  Var vmu = t.input(mu), vlv = t.input(lv);
  double sum = 0.0, sq = 0.0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    double x = t.val(m.reparameterize(t, vmu, vlv, {rng.normal()})).data[0];
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean - 1.0) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("kl: closed form matches monte carlo on random cases") {
  Rng rng(17);
  for (int c = 0; c < 5; ++c) {
    std::vector<double> mu(3), lv(3), pm(3);
    for (int i = 0; i < 3; ++i) {
      mu[i] = 2.0 * rng.uniform() - 1.0;
      lv[i] = 1.5 * rng.uniform() - 0.75;
      pm[i] = 2.0 * rng.uniform() - 1.0;
    }
    double mc = kl_monte_carlo(mu, lv, pm, 200000, rng);
    double cf = kl_closed(mu, lv, pm);
    Tape t;
    Tensor tm = Tensor::zeros({3}), tl = Tensor::zeros({3}),
           tp = Tensor::zeros({3});
    tm.data = mu;
    tl.data = lv;
    tp.data = pm;
    double op = t.val(t.kl_diag_gauss(t.input(tm), t.input(tl), tp)).data[0];
    CHECK(op == doctest::Approx(cf).epsilon(1e-12));
    INFO("case ", c, " closed ", cf, " mc ", mc);
    CHECK(std::abs(op - mc) < 1e-2);
  }
}

TEST_CASE("kl: non-negative over random posteriors") {
  Rng rng(23);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> mu(4), lv(4), pm(4);
    for (int i = 0; i < 4; ++i) {
      mu[i] = 4.0 * rng.uniform() - 2.0;
      lv[i] = 4.0 * rng.uniform() - 2.0;
      pm[i] = 4.0 * rng.uniform() - 2.0;
    }
    CHECK(kl_closed(mu, lv, pm) >= -1e-12);
  }
  CHECK(kl_closed({0.5, 0.5}, {0.0, 0.0}, {0.5, 0.5}) == 0.0);
}

TEST_CASE("decode: with full dropout the inputs cannot leak the targets") {
  ModelDims d = tiny_dims();
  Rng rng(9);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s = make_sentence(d, 5, rng);
  SentenceNoise n = quiet_noise(s, d);
  n.unk_drop.assign(s.token_ids.size() + 1, 1.0);

  Tape t1(&m.params());
  Tensor zt = Tensor::zeros({d.d_z});
  zt.data = {0.4, -0.1, 0.9};
  double forced = t1.val(m.decode_loss(t1, s, t1.input(zt), n)).data[0];

  n.teacher_forced = 0.0;
  Tape t2(&m.params());
  double self_fed = t2.val(m.decode_loss(t2, s, t2.input(zt), n)).data[0];
  CHECK(forced == self_fed);
}

TEST_CASE("decode: zero output weights score log V per token") {
  ModelDims d = tiny_dims();
  d.softmax_mode = OutputSoftmax::Mode::Full;
  Rng rng(9);
  Model m(d, PriorMode::normal, rng);
  zero_param(m, "out.w");
  zero_param(m, "out.b");
  EncodedSentence s = make_sentence(d, 4, rng);
  SentenceNoise n = quiet_noise(s, d);
  Tape t(&m.params());
  Tensor zt = Tensor::zeros({d.d_z});
  double loss = t.val(m.decode_loss(t, s, t.input(zt), n)).data[0];
  CHECK(loss == doctest::Approx(std::log(20.0)).epsilon(1e-12));
}

TEST_CASE("decode: gradient w.r.t. z matches finite differences") {
  ModelDims d = tiny_dims();
  Rng rng(13);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s = make_sentence(d, 4, rng);
  Rng nrng(5);
  SentenceNoise n = draw_sentence_noise(s, d, 0.0, 0.3, 1.0, nrng);
  n.teacher_forced = 1.0;
  Tensor zt = Tensor::zeros({d.d_z});
  zt.data = {0.2, -0.5, 0.8};

  Tape t(&m.params());
  Var z = t.input(zt);
  Var loss = m.decode_loss(t, s, z, n);
  t.backward(loss);
  Tensor gz = t.grad_of(z);

  const double h = 1e-5;
  for (std::size_t k = 0; k < d.d_z; ++k) {
    Tensor zp = zt, zm = zt;
    zp.data[k] += h;
    zm.data[k] -= h;
    Tape tp(&m.params());
    double fp = tp.val(m.decode_loss(tp, s, tp.input(zp), n)).data[0];
    Tape tm(&m.params());
    double fm = tm.val(m.decode_loss(tm, s, tm.input(zm), n)).data[0];
    double fd = (fp - fm) / (2.0 * h);
    CHECK(rel_err(gz.data[k], fd) < 1e-4);
  }
}

TEST_CASE("sentence repr: span means and the affine map check out") {
  ModelDims d = tiny_dims();
  Rng rng(21);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s = make_sentence(d, 5, rng);
  s.head = {1, 2};
  s.tail = {2, 5};
  Tape t(&m.params());
  auto enc = m.encode(t, s, nullptr);
  Tensor zt = Tensor::zeros({d.d_z});
  zt.data = {0.3, 0.1, -0.7};
  Var z = t.input(zt);
  Var sr = m.sentence_repr(t, enc, z, s);

  // hand-computed: e1 = o_1, e2 = mean(o_2, o_3, o_4), s = W_v [z; e1; e2]
  std::vector<double> cat = zt.data;
  for (std::size_t k = 0; k < d.hidden; ++k)
    cat.push_back(t.val(enc.outputs[1]).data[k]);
  for (std::size_t k = 0; k < d.hidden; ++k)
    cat.push_back((t.val(enc.outputs[2]).data[k] +
                   t.val(enc.outputs[3]).data[k] +
                   t.val(enc.outputs[4]).data[k]) /
                  3.0);
  const Tensor& wv = m.params().at(m.params().index_of("repr.w_v")).value;
  for (std::size_t r = 0; r < d.d_s; ++r) {
    double want = 0.0;
    for (std::size_t c = 0; c < cat.size(); ++c)
      want += wv.at2(r, c) * cat[c];
    CHECK(t.val(sr).data[r] == doctest::Approx(want).epsilon(1e-9));
  }

  EncodedSentence bad = s;
  bad.head = {3, 3};
  Tape t2(&m.params());
  auto enc2 = m.encode(t2, bad, nullptr);
  CHECK_THROWS_AS(m.sentence_repr(t2, enc2, t2.input(zt), bad),
                  std::invalid_argument);
}

TEST_CASE("attention: one sentence bag copies its repr for every relation") {
  ModelDims d = tiny_dims();
  Rng rng(25);
  Model m(d, PriorMode::normal, rng);
  Tape t(&m.params());
  Tensor sv = Tensor::zeros({d.d_s});
  sv.data = {0.5, -1.0, 2.0, 0.25};
  auto bags = m.selective_attention(t, {t.input(sv)});
  REQUIRE(bags.size() == d.relations);
  for (auto b : bags)
    for (std::size_t k = 0; k < d.d_s; ++k)
      CHECK(t.val(b).data[k] == doctest::Approx(sv.data[k]).epsilon(1e-12));
}

TEST_CASE("attention: ln3 versus 0 logits weight 0.75 and 0.25") {
  ModelDims d = tiny_dims();
  d.relations = 1;
  d.d_s = 2;
  Rng rng(25);
  Model m(d, PriorMode::normal, rng);
  Tensor& q = m.params().at(m.params().index_of("emb.rel")).value;
  q.data = {1.0, 0.0};
  Tape t(&m.params());
  Tensor s1 = Tensor::vec({std::log(3.0), 4.0});
  Tensor s2 = Tensor::vec({0.0, -2.0});
  auto bags = m.selective_attention(t, {t.input(s1), t.input(s2)});
  for (std::size_t k = 0; k < 2; ++k)
    CHECK(t.val(bags[0]).data[k] ==
          doctest::Approx(0.75 * s1.data[k] + 0.25 * s2.data[k])
              .epsilon(1e-12));
}

TEST_CASE("attention: zero query weights the bag uniformly") {
  ModelDims d = tiny_dims();
  d.relations = 1;
  Rng rng(25);
  Model m(d, PriorMode::normal, rng);
  zero_param(m, "emb.rel");
  Tape t(&m.params());
  Tensor s1 = Tensor::vec({1.0, 0.0, 0.0, 0.0});
  Tensor s2 = Tensor::vec({0.0, 1.0, 0.0, 0.0});
  Tensor s3 = Tensor::vec({0.0, 0.0, 1.0, 0.0});
  auto bags =
      m.selective_attention(t, {t.input(s1), t.input(s2), t.input(s3)});
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(t.val(bags[0]).data[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("classify: zero weights predict one half everywhere") {
  ModelDims d = tiny_dims();
  Rng rng(29);
  Model m(d, PriorMode::normal, rng);
  zero_param(m, "cls.w_c");
  zero_param(m, "cls.b_c");
  Tape t(&m.params());
  std::vector<Var> reprs;
  Tensor sv = Tensor::vec({1.0, 2.0, 3.0, 4.0});
  auto bags = m.selective_attention(t, {t.input(sv)});
  Var logits = m.classification_logits(t, bags);
  for (double v : t.val(logits).data) CHECK(v == 0.0);
  Var bce = t.bce_sum(logits, {0.0, 1.0, 0.0});
  CHECK(t.val(bce).data[0] ==
        doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("joint loss: lambda 1 equals the classification term") {
  ModelDims d = tiny_dims();
  Rng rng(31);
  Model m(d, PriorMode::normal, rng);
  EncodedBag bag = make_bag(d, {3, 5}, rng);
  auto noise = fixed_noise(m, bag, 41);
  Tape t(&m.params());
  BagLosses parts;
  Var total = m.joint_loss(t, bag, noise, nullptr, 1.0, 1.0, &parts);
  CHECK(t.val(total).data[0] == parts.bce);
  CHECK(parts.total == parts.bce);
}

TEST_CASE("joint loss: lambda 0 beta 0 is the mean reconstruction loss") {
  ModelDims d = tiny_dims();
  Rng rng(31);
  Model m(d, PriorMode::normal, rng);
  EncodedBag bag = make_bag(d, {3, 5}, rng);
  auto noise = fixed_noise(m, bag, 43);
  Tape t(&m.params());
  BagLosses parts;
  Var total = m.joint_loss(t, bag, noise, nullptr, 0.0, 0.0, &parts);
  CHECK(t.val(total).data[0] ==
        doctest::Approx(parts.reconstruction).epsilon(1e-12));
  CHECK_THROWS_AS(m.joint_loss(t, bag, noise, nullptr, 1.0, 1.5, &parts),
                  std::invalid_argument);
}

TEST_CASE("joint loss: kl gradient scales linearly in beta") {
  ModelDims d = tiny_dims();
  Rng rng(37);
  Model m(d, PriorMode::normal, rng);
  EncodedBag bag = make_bag(d, {3, 4}, rng);
  auto noise = fixed_noise(m, bag, 47);
  auto grad_at = [&](double beta) {
    Tape t(&m.params());
    m.params().zero_grad();
    Var total = m.joint_loss(t, bag, noise, nullptr, beta, 0.5, nullptr);
    t.backward(total);
    return m.params().at(m.params().index_of("post.w_sigma")).grad.data;
  };
  auto g0 = grad_at(0.0), g1 = grad_at(1.0), g2 = grad_at(2.0);
  for (std::size_t k = 0; k < g0.size(); ++k)
    CHECK(std::abs((g2[k] - g1[k]) - (g1[k] - g0[k])) < 1e-9);
}

TEST_CASE("joint loss: kb prior pulls kl toward the table mean") {
  ModelDims d = tiny_dims();
  Rng rng(41);
  Model m(d, PriorMode::kb, rng);
  EncodedBag bag = make_bag(d, {3}, rng);
  auto noise = fixed_noise(m, bag, 53);

  KbEmbeddings emb;
  emb.dim = d.d_z;
  emb.entities = {"H", "T"};
  emb.entity_id = {{"H", 0}, {"T", 1}};
  emb.ent = {2.0, 0.0, 1.0, 0.0, 0.0, 0.0};
  std::set<std::pair<std::string, std::string>> pairs{{"H", "T"}};
  PriorTable pt = build_prior_table(emb, pairs);

  Tape t1(&m.params());
  BagLosses with_prior;
  m.joint_loss(t1, bag, noise, &pt, 1.0, 0.5, &with_prior);
  Tape t2(&m.params());
  BagLosses no_prior;
  m.joint_loss(t2, bag, noise, nullptr, 1.0, 0.5, &no_prior);

  // same posterior both times; KL differs only through the prior mean
  CHECK(with_prior.reconstruction == no_prior.reconstruction);
  CHECK(with_prior.bce == no_prior.bce);
  CHECK(with_prior.kl != no_prior.kl);

  // uncovered pair falls back to the zero mean
  EncodedBag other = bag;
  other.tail_id = "ELSEWHERE";
  Tape t3(&m.params());
  BagLosses fallback;
  m.joint_loss(t3, other, noise, &pt, 1.0, 0.5, &fallback);
  CHECK(fallback.kl == no_prior.kl);
}

TEST_CASE("joint loss: permuting the bag leaves every component fixed") {
  ModelDims d = tiny_dims();
  Rng rng(43);
  Model m(d, PriorMode::normal, rng);
  EncodedBag bag = make_bag(d, {2, 4, 3}, rng);
  auto noise = fixed_noise(m, bag, 59);

  Tape t1(&m.params());
  BagLosses a;
  m.joint_loss(t1, bag, noise, nullptr, 0.7, 0.9, &a);

  EncodedBag perm = bag;
  std::vector<std::size_t> order{2, 0, 1};
  perm.sentences.clear();
  std::vector<SentenceNoise> pnoise;
  for (std::size_t i : order) {
    perm.sentences.push_back(bag.sentences[i]);
    pnoise.push_back(noise[i]);
  }
  Tape t2(&m.params());
  BagLosses b;
  m.joint_loss(t2, perm, pnoise, nullptr, 0.7, 0.9, &b);

  CHECK(std::abs(a.total - b.total) < 1e-9);
  CHECK(std::abs(a.bce - b.bce) < 1e-9);
  CHECK(std::abs(a.reconstruction - b.reconstruction) < 1e-9);
  CHECK(std::abs(a.kl - b.kl) < 1e-9);

  CHECK(std::abs(m.predict(bag).probs[1] - m.predict(perm).probs[1]) < 1e-9);
}

TEST_CASE("gradcheck: full joint loss against finite differences") {
  ModelDims d = tiny_dims();
  Rng rng(47);
  Model m(d, PriorMode::kb, rng);
  EncodedBag bag = make_bag(d, {3, 4}, rng);
  auto noise = fixed_noise(m, bag, 61);

  KbEmbeddings emb;
  emb.dim = d.d_z;
  emb.entities = {"H", "T"};
  emb.entity_id = {{"H", 0}, {"T", 1}};
  emb.ent = {0.5, -0.25, 1.0, 0.0, 0.5, 0.5};
  std::set<std::pair<std::string, std::string>> pairs{{"H", "T"}};
  PriorTable pt = build_prior_table(emb, pairs);

  check_param_grads(m.params(), [&](Tape& t) {
    return m.joint_loss(t, bag, noise, &pt, 0.8, 0.9, nullptr);
  });
}

TEST_CASE("gradcheck: baseline mode") {
  ModelDims d = tiny_dims();
  Rng rng(53);
  Model m(d, PriorMode::baseline, rng);
  EncodedBag bag = make_bag(d, {3, 2}, rng);
  auto noise = fixed_noise(m, bag, 67);
  check_param_grads(m.params(), [&](Tape& t) {
    return m.joint_loss(t, bag, noise, nullptr, 0.0, 1.0, nullptr);
  });
}

TEST_CASE("gradcheck: adaptive softmax decoder path") {
  ModelDims d = tiny_dims();
  d.softmax_mode = OutputSoftmax::Mode::Adaptive;
  Rng rng(59);
  Model m(d, PriorMode::normal, rng);
  EncodedBag bag = make_bag(d, {3}, rng);
  auto noise = fixed_noise(m, bag, 71);
  check_param_grads(m.params(), [&](Tape& t) {
    return m.joint_loss(t, bag, noise, nullptr, 0.6, 0.7, nullptr);
  });
}

TEST_CASE("predict: probabilities agree with a quiet forward pass") {
  ModelDims d = tiny_dims();
  Rng rng(61);
  Model m(d, PriorMode::normal, rng);
  EncodedBag bag = make_bag(d, {3, 2}, rng);
  BagPrediction pred = m.predict(bag);
  REQUIRE(pred.probs.size() == d.relations);
  for (double p : pred.probs) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  REQUIRE(pred.mu.size() == bag.sentences.size());
  CHECK(pred.mu[0].size() == d.d_z);

  // same numbers as a joint pass with eps = 0 and no dropout
  std::vector<SentenceNoise> qn;
  for (const auto& s : bag.sentences) qn.push_back(quiet_noise(s, d));
  Tape t(&m.params());
  BagLosses parts;
  m.joint_loss(t, bag, qn, nullptr, 1.0, 1.0, &parts);
  double manual = 0.0;
  for (std::size_t r = 0; r < d.relations; ++r) {
    double y = bag.labels[r];
    manual += -(y * std::log(pred.probs[r]) +
                (1.0 - y) * std::log(1.0 - pred.probs[r]));
  }
  CHECK(manual == doctest::Approx(parts.bce).epsilon(1e-9));
}

TEST_CASE("predict: baseline mode reports no posterior means") {
  ModelDims d = tiny_dims();
  Rng rng(61);
  Model m(d, PriorMode::baseline, rng);
  EncodedBag bag = make_bag(d, {2}, rng);
  BagPrediction pred = m.predict(bag);
  CHECK(pred.mu.empty());
  CHECK(pred.probs.size() == d.relations);
}

TEST_CASE("reconstruct: emits token ids and stops at eos") {
  ModelDims d = tiny_dims();
  Rng rng(67);
  Model m(d, PriorMode::normal, rng);
  EncodedSentence s = make_sentence(d, 4, rng);
  std::vector<int> ids = m.reconstruct(s);
  CHECK(ids.size() <= 2 * d.max_len);
  for (int id : ids) {
    CHECK(id >= 0);
    CHECK(id < static_cast<int>(d.vocab));
    CHECK(id != Vocabulary::kEos);
  }
  CHECK(m.reconstruct(s) == ids);
}

TEST_CASE("checkpoint: round trip restores parameters and optimizer") {
  ModelDims d = tiny_dims();
  Rng rng(71);
  Model m(d, PriorMode::kb, rng);
  Adam opt(0.01, 1e-6, 10.0);
  EncodedBag bag = make_bag(d, {3, 2}, rng);
  auto noise = fixed_noise(m, bag, 73);
  for (int it = 0; it < 2; ++it) {
    Tape t(&m.params());
    m.params().zero_grad();
    t.backward(m.joint_loss(t, bag, noise, nullptr, 0.5, 0.9, nullptr));
    opt.step(m.params());
  }
  std::string path = "tmp_ckpt.bvae";
  m.save_checkpoint(path, &opt);

  Rng rng2(99);
  Model fresh(d, PriorMode::kb, rng2);
  Adam opt2(0.01, 1e-6, 10.0);
  fresh.load_checkpoint(path, &opt2);
  CHECK(opt2.t() == 2);
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const auto& a = m.params().at(i).value.data;
    const auto& b = fresh.params().at(i).value.data;
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k)
      CHECK(b[k] == doctest::Approx(a[k]).epsilon(1e-6));
  }
  REQUIRE(opt2.m().size() == opt.m().size());
  for (std::size_t i = 0; i < opt.m().size(); ++i)
    for (std::size_t k = 0; k < opt.m()[i].numel(); ++k)
      CHECK(opt2.m()[i].data[k] ==
            doctest::Approx(opt.m()[i].data[k]).epsilon(1e-6));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: fingerprint mismatch refused unless forced") {
  ModelDims d = tiny_dims();
  Rng rng(73);
  Model m(d, PriorMode::normal, rng);
  std::string path = "tmp_ckpt2.bvae";
  m.save_checkpoint(path, nullptr);

  ModelDims d2 = d;
  d2.softmax_mode = OutputSoftmax::Mode::Full;  // same shapes, new fingerprint
  Rng rng2(74);
  Model other(d2, PriorMode::normal, rng2);
  CHECK_THROWS_AS(other.load_checkpoint(path, nullptr), std::runtime_error);
  other.load_checkpoint(path, nullptr, true);
  CHECK(other.params().at(0).value.data[0] ==
        doctest::Approx(m.params().at(0).value.data[0]).epsilon(1e-6));
  std::remove(path.c_str());
}

TEST_CASE("noise: draw shapes and quiet defaults") {
  ModelDims d = tiny_dims();
  Rng rng(79);
  EncodedSentence s = make_sentence(d, 6, rng);
  SentenceNoise n = draw_sentence_noise(s, d, 0.3, 0.2, 0.3, rng);
  CHECK(n.eps.size() == d.d_z);
  CHECK(n.input_keep.size() == 6 * (d.d_w + 2 * d.d_p));
  CHECK(n.unk_drop.size() == 7);
  for (double v : n.input_keep)
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7)));
  SentenceNoise q = quiet_noise(s, d);
  for (double v : q.input_keep) CHECK(v == 1.0);
  for (double v : q.eps) CHECK(v == 0.0);
  CHECK(q.teacher_forced == 1.0);

  Rng r1(5), r2(5);
  SentenceNoise a = draw_sentence_noise(s, d, 0.3, 0.2, 0.3, r1);
  SentenceNoise b = draw_sentence_noise(s, d, 0.3, 0.2, 0.3, r2);
  CHECK(a.eps == b.eps);
  CHECK(a.input_keep == b.input_keep);
  CHECK(a.unk_drop == b.unk_drop);
  CHECK(a.teacher_forced == b.teacher_forced);
}

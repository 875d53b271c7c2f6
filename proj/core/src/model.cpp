#include "bagvae/model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "bagvae/serialize.hpp"

namespace bagvae {

PriorMode prior_mode_from_string(const std::string& s) {
  if (s == "baseline") return PriorMode::baseline;
  if (s == "normal") return PriorMode::normal;
  if (s == "kb") return PriorMode::kb;
  throw std::invalid_argument("unknown prior mode: " + s);
}

std::string to_string(PriorMode m) {
  switch (m) {
    case PriorMode::baseline: return "baseline";
    case PriorMode::normal: return "normal";
    case PriorMode::kb: return "kb";
  }
  throw std::logic_error("bad PriorMode");
}

SentenceNoise draw_sentence_noise(const EncodedSentence& sent,
                                  const ModelDims& dims, double input_dropout,
                                  double word_dropout, double teacher_force,
                                  Rng& rng) {
  const std::size_t L = sent.token_ids.size();
  const std::size_t D = dims.d_w + 2 * dims.d_p;
  SentenceNoise n;
  n.eps.resize(dims.d_z);
  for (std::size_t i = 0; i < dims.d_z; ++i) n.eps[i] = rng.normal();
  n.input_keep.resize(L * D);
  for (std::size_t i = 0; i < L * D; ++i)
    n.input_keep[i] =
        rng.bernoulli(input_dropout) ? 0.0 : 1.0 / (1.0 - input_dropout);
  n.teacher_forced = rng.bernoulli(teacher_force) ? 1.0 : 0.0;
  n.unk_drop.resize(L + 1);
  for (std::size_t i = 0; i <= L; ++i)
    n.unk_drop[i] = rng.bernoulli(word_dropout) ? 1.0 : 0.0;
  return n;
}

SentenceNoise quiet_noise(const EncodedSentence& sent, const ModelDims& dims) {
  const std::size_t L = sent.token_ids.size();
  SentenceNoise n;
  n.eps.assign(dims.d_z, 0.0);
  n.input_keep.assign(L * (dims.d_w + 2 * dims.d_p), 1.0);
  n.teacher_forced = 1.0;
  n.unk_drop.assign(L + 1, 0.0);
  return n;
}

Model::Model(const ModelDims& dims, PriorMode mode, Rng& rng)
    : dims_(dims), mode_(mode) {
  if (dims.vocab < 4 || dims.relations == 0 || dims.max_len == 0 ||
      dims.d_w == 0 || dims.d_p == 0 || dims.hidden == 0 || dims.d_s == 0)
    throw std::invalid_argument("model dims: zero or too-small field");
  const bool vae = mode != PriorMode::baseline;
  if (vae && dims.d_z == 0)
    throw std::invalid_argument("model dims: d_z required");

  const std::size_t P = 2 * dims.max_len + 1;
  const std::size_t D = dims.d_w + 2 * dims.d_p;
  auto emb = [&rng](std::size_t r, std::size_t c) {
    Tensor t = Tensor::zeros({r, c});
    init_normal(t, rng, 0.1);
    return t;
  };
  auto xav = [&rng](std::size_t r, std::size_t c) {
    Tensor t = Tensor::zeros({r, c});
    init_xavier(t, rng);
    return t;
  };

  emb_word_ = ps_.add("emb.word", emb(dims.vocab, dims.d_w));
  emb_pos_head_ = ps_.add("emb.pos_head", emb(P, dims.d_p));
  emb_pos_tail_ = ps_.add("emb.pos_tail", emb(P, dims.d_p));
  enc_fwd_ = make_lstm(ps_, "enc.fwd", D, dims.hidden, rng);
  enc_bwd_ = make_lstm(ps_, "enc.bwd", D, dims.hidden, rng);
  if (vae) {
    w_mu_ = ps_.add("post.w_mu", xav(dims.d_z, 2 * dims.hidden));
    b_mu_ = ps_.add("post.b_mu", Tensor::zeros({dims.d_z}));
    w_sigma_ = ps_.add("post.w_sigma", xav(dims.d_z, 2 * dims.hidden));
    b_sigma_ = ps_.add("post.b_sigma", Tensor::zeros({dims.d_z}));
    dec_init_w_ = ps_.add("dec.init.w", xav(dims.hidden, dims.d_z));
    dec_init_b_ = ps_.add("dec.init.b", Tensor::zeros({dims.hidden}));
    dec_ = make_lstm(ps_, "dec.lstm", dims.d_w + dims.d_z, dims.hidden, rng);
    out_ = std::make_unique<OutputSoftmax>(ps_, "out", dims.hidden, dims.vocab,
                                           rng, dims.softmax_mode);
  }
  const std::size_t code_dim = vae ? dims.d_z : dims.hidden;
  w_v_ = ps_.add("repr.w_v", xav(dims.d_s, code_dim + 2 * dims.hidden));
  emb_rel_ = ps_.add("emb.rel", emb(dims.relations, dims.d_s));
  w_c_ = ps_.add("cls.w_c", xav(dims.relations, dims.d_s));
  b_c_ = ps_.add("cls.b_c", Tensor::zeros({dims.relations}));
}

void Model::set_word_embeddings(const Tensor& rows) {
  Tensor& w = ps_.at(emb_word_).value;
  if (!w.same_shape(rows))
    throw std::invalid_argument("word embedding shape mismatch: expected " +
                                w.shape_str() + " got " + rows.shape_str());
  w = rows;
}

Var Model::token_input(Tape& t, const EncodedSentence& sent, std::size_t pos,
                       const SentenceNoise* noise) const {
  Var x = t.concat({t.prow(emb_word_, static_cast<std::size_t>(
                                          sent.token_ids[pos])),
                    t.prow(emb_pos_head_,
                           static_cast<std::size_t>(sent.pos_head[pos])),
                    t.prow(emb_pos_tail_,
                           static_cast<std::size_t>(sent.pos_tail[pos]))});
  if (noise != nullptr) {
    const std::size_t D = dims_.d_w + 2 * dims_.d_p;
    Tensor mask = Tensor::zeros({D});
    bool all_one = true;
    for (std::size_t k = 0; k < D; ++k) {
      mask.data[k] = noise->input_keep[pos * D + k];
      all_one = all_one && mask.data[k] == 1.0;
    }
    if (!all_one) x = t.mul(x, t.input(mask));
  }
  return x;
}

Model::Encoded Model::encode(Tape& t, const EncodedSentence& sent,
                             const SentenceNoise* noise) const {
  const std::size_t L = sent.token_ids.size();
  if (L == 0) throw std::invalid_argument("encode: empty sentence");
  if (sent.pos_head.size() != L || sent.pos_tail.size() != L)
    throw std::invalid_argument("encode: position lists out of step");

  std::vector<Var> xs;
  xs.reserve(L);
  for (std::size_t i = 0; i < L; ++i)
    xs.push_back(token_input(t, sent, i, noise));

  Var h_f = t.input(Tensor::zeros({dims_.hidden}));
  Var c_f = h_f;
  std::vector<Var> out_f(L);
  for (std::size_t i = 0; i < L; ++i) {
    auto hc = lstm_cell(t, enc_fwd_, xs[i], h_f, c_f);
    h_f = hc.first;
    c_f = hc.second;
    out_f[i] = h_f;
  }
  Var h_b = t.input(Tensor::zeros({dims_.hidden}));
  Var c_b = h_b;
  std::vector<Var> out_b(L);
  for (std::size_t i = L; i-- > 0;) {
    auto hc = lstm_cell(t, enc_bwd_, xs[i], h_b, c_b);
    h_b = hc.first;
    c_b = hc.second;
    out_b[i] = h_b;
  }

  Encoded e;
  e.outputs.resize(L);
  for (std::size_t i = 0; i < L; ++i) e.outputs[i] = t.add(out_f[i], out_b[i]);
  e.h = t.add(h_f, h_b);
  e.c = t.add(c_f, c_b);
  return e;
}

std::pair<Var, Var> Model::posterior_heads(Tape& t, const Encoded& enc) const {
  if (mode_ == PriorMode::baseline)
    throw std::logic_error("posterior heads absent in baseline mode");
  Var hc = t.concat({enc.h, enc.c});
  Var mu = t.affine_p(w_mu_, hc, b_mu_);
  Var lv = t.affine_p(w_sigma_, hc, b_sigma_);
  return {mu, lv};
}

Var Model::reparameterize(Tape& t, Var mu, Var logvar,
                          const std::vector<double>& eps) const {
  if (eps.size() != dims_.d_z)
    throw std::invalid_argument("reparameterize: eps size");
  Tensor e = Tensor::zeros({dims_.d_z});
  e.data = eps;
  return t.add(mu, t.mul(t.exp_(t.smul(logvar, 0.5)), t.input(e)));
}

Var Model::decode_loss(Tape& t, const EncodedSentence& sent, Var z,
                       const SentenceNoise& noise) const {
  if (mode_ == PriorMode::baseline)
    throw std::logic_error("decoder absent in baseline mode");
  const std::size_t L = sent.token_ids.size();
  if (L == 0) throw std::invalid_argument("decode: empty sentence");
  if (noise.unk_drop.size() != L + 1)
    throw std::invalid_argument("decode: unk mask size");

  Var h = t.affine_p(dec_init_w_, z, dec_init_b_);
  Var c = t.input(Tensor::zeros({dims_.hidden}));
  const bool forced = noise.teacher_forced != 0.0;

  Var total{};
  int prev_pred = Vocabulary::kBos;
  for (std::size_t s = 0; s <= L; ++s) {
    int in_id;
    if (s == 0)
      in_id = Vocabulary::kBos;
    else
      in_id = forced ? sent.token_ids[s - 1] : prev_pred;
    if (noise.unk_drop[s] != 0.0) in_id = Vocabulary::kUnk;

    Var x = t.concat({t.prow(emb_word_, static_cast<std::size_t>(in_id)), z});
    auto hc = lstm_cell(t, dec_, x, h, c);
    h = hc.first;
    c = hc.second;

    const std::size_t target = s < L ? static_cast<std::size_t>(
                                           sent.token_ids[s])
                                     : static_cast<std::size_t>(
                                           Vocabulary::kEos);
    Var step_loss = out_->loss(t, h, target);
    total = s == 0 ? step_loss : t.add(total, step_loss);

    if (!forced && s < L)
      prev_pred = static_cast<int>(
          argmax_vec(out_->log_probs(ps_, t.val(h).data)));
  }
  return t.smul(total, 1.0 / static_cast<double>(L + 1));
}

Var Model::span_mean(Tape& t, const std::vector<Var>& outputs,
                     const Span& span) const {
  if (span.begin >= span.end || span.end > outputs.size())
    throw std::invalid_argument("span mean: empty or out-of-range span");
  Var acc = outputs[span.begin];
  for (std::size_t k = span.begin + 1; k < span.end; ++k)
    acc = t.add(acc, outputs[k]);
  const std::size_t n = span.end - span.begin;
  return n == 1 ? acc : t.smul(acc, 1.0 / static_cast<double>(n));
}

Var Model::sentence_repr(Tape& t, const Encoded& enc, Var code,
                         const EncodedSentence& sent) const {
  Var e1 = span_mean(t, enc.outputs, sent.head);
  Var e2 = span_mean(t, enc.outputs, sent.tail);
  return t.matvec_p(w_v_, t.concat({code, e1, e2}));
}

std::vector<Var> Model::selective_attention(
    Tape& t, const std::vector<Var>& reprs) const {
  if (reprs.empty()) throw std::invalid_argument("attention: empty bag");
  std::vector<Var> bags(dims_.relations);
  for (std::size_t r = 0; r < dims_.relations; ++r) {
    Var q = t.prow(emb_rel_, r);
    std::vector<Var> logits(reprs.size());
    for (std::size_t i = 0; i < reprs.size(); ++i)
      logits[i] = t.dot(reprs[i], q);
    Var w = t.softmax(t.concat(logits));
    bags[r] = t.weighted_sum(reprs, w);
  }
  return bags;
}

Var Model::classification_logits(Tape& t,
                                 const std::vector<Var>& bag_reprs) const {
  if (bag_reprs.size() != dims_.relations)
    throw std::invalid_argument("classify: need one bag repr per relation");
  std::vector<Var> scores(dims_.relations);
  for (std::size_t r = 0; r < dims_.relations; ++r)
    scores[r] = t.add(t.dot(t.prow(w_c_, r), bag_reprs[r]), t.pelem(b_c_, r));
  return t.concat(scores);
}

Var Model::joint_loss(Tape& t, const EncodedBag& bag,
                      const std::vector<SentenceNoise>& noise,
                      const PriorTable* priors, double beta, double lambda,
                      BagLosses* components) const {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("joint loss: lambda outside [0,1]");
  if (bag.sentences.empty())
    throw std::invalid_argument("joint loss: empty bag");
  if (noise.size() != bag.sentences.size())
    throw std::invalid_argument("joint loss: one noise entry per sentence");
  if (bag.labels.size() != dims_.relations)
    throw std::invalid_argument("joint loss: label vector size");

  const bool vae = mode_ != PriorMode::baseline;
  Tensor prior_mean = Tensor::zeros({dims_.d_z});
  if (vae && mode_ == PriorMode::kb && priors != nullptr) {
    if (const std::vector<double>* m =
            priors->lookup(bag.head_id, bag.tail_id)) {
      if (priors->dim != dims_.d_z)
        throw std::invalid_argument("prior table dim != d_z");
      prior_mean.data = *m;
    }
  }

  const std::size_t n = bag.sentences.size();
  std::vector<Var> reprs;
  reprs.reserve(n);
  Var elbo{};
  double rec_sum = 0.0, kl_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const EncodedSentence& s = bag.sentences[i];
    Encoded enc = encode(t, s, &noise[i]);
    Var code;
    if (vae) {
      auto [mu, lv] = posterior_heads(t, enc);
      Var z = reparameterize(t, mu, lv, noise[i].eps);
      Var dec = decode_loss(t, s, z, noise[i]);
      Var kl = t.kl_diag_gauss(mu, lv, prior_mean);
      rec_sum += t.val(dec).data[0];
      kl_sum += t.val(kl).data[0];
      Var term = t.add(dec, t.smul(kl, beta));
      elbo = i == 0 ? term : t.add(elbo, term);
      code = z;
    } else {
      code = enc.h;
    }
    reprs.push_back(sentence_repr(t, enc, code, s));
  }

  std::vector<double> targets(bag.labels.begin(), bag.labels.end());
  Var bce = t.bce_sum(classification_logits(t, selective_attention(t, reprs)),
                      targets);

  Var total;
  if (vae) {
    Var elbo_mean = t.smul(elbo, 1.0 / static_cast<double>(n));
    total = t.add(t.smul(bce, lambda), t.smul(elbo_mean, 1.0 - lambda));
  } else {
    total = bce;
  }
  if (components != nullptr) {
    components->total = t.val(total).data[0];
    components->bce = t.val(bce).data[0];
    components->reconstruction = rec_sum / static_cast<double>(n);
    components->kl = kl_sum / static_cast<double>(n);
  }
  return total;
}

BagPrediction Model::predict(const EncodedBag& bag) const {
  if (bag.sentences.empty()) throw std::invalid_argument("predict: empty bag");
  const bool vae = mode_ != PriorMode::baseline;
  Tape t(const_cast<ParamStore*>(&ps_));
  std::vector<Var> reprs;
  BagPrediction out;
  for (const EncodedSentence& s : bag.sentences) {
    Encoded enc = encode(t, s, nullptr);
    Var code;
    if (vae) {
      auto [mu, lv] = posterior_heads(t, enc);
      (void)lv;
      code = mu;
      out.mu.push_back(t.val(mu).data);
    } else {
      code = enc.h;
    }
    reprs.push_back(sentence_repr(t, enc, code, s));
  }
  Var logits = classification_logits(t, selective_attention(t, reprs));
  const Tensor& lv = t.val(logits);
  out.probs.resize(lv.numel());
  for (std::size_t r = 0; r < lv.numel(); ++r) {
    double x = lv.data[r];
    out.probs[r] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
  }
  return out;
}

std::vector<int> Model::reconstruct(const EncodedSentence& sent,
                                    std::size_t max_steps) const {
  return reconstruct(sent, std::vector<double>(dims_.d_z, 0.0), max_steps);
}

std::vector<int> Model::reconstruct(const EncodedSentence& sent,
                                    const std::vector<double>& eps,
                                    std::size_t max_steps) const {
  if (mode_ == PriorMode::baseline)
    throw std::logic_error("decoder absent in baseline mode");
  if (max_steps == 0) max_steps = 2 * dims_.max_len;
  Tape t(const_cast<ParamStore*>(&ps_));
  Encoded enc = encode(t, sent, nullptr);
  auto [mu, lv] = posterior_heads(t, enc);
  Var z = reparameterize(t, mu, lv, eps);
  Var h = t.affine_p(dec_init_w_, z, dec_init_b_);
  Var c = t.input(Tensor::zeros({dims_.hidden}));
  std::vector<int> ids;
  int prev = Vocabulary::kBos;
  for (std::size_t s = 0; s < max_steps; ++s) {
    Var x =
        t.concat({t.prow(emb_word_, static_cast<std::size_t>(prev)), z});
    auto hc = lstm_cell(t, dec_, x, h, c);
    h = hc.first;
    c = hc.second;
    int id = static_cast<int>(argmax_vec(out_->log_probs(ps_, t.val(h).data)));
    if (id == Vocabulary::kEos) break;
    ids.push_back(id);
    prev = id;
  }
  return ids;
}

std::uint64_t Model::fingerprint() const {
  std::ostringstream os;
  os << "bagvae1|" << to_string(mode_) << '|' << dims_.vocab << '|'
     << dims_.relations << '|' << dims_.max_len << '|' << dims_.d_w << '|'
     << dims_.d_p << '|' << dims_.d_z << '|' << dims_.hidden << '|'
     << dims_.d_s << '|' << static_cast<int>(dims_.softmax_mode) << '|'
     << ps_.size() << '|' << ps_.total_numel();
  return fnv1a64(os.str());
}

void Model::save_checkpoint(const std::string& path, const Adam* opt) const {
  Container c;
  c.put_meta("kind", "checkpoint");
  c.put_meta("fingerprint", std::to_string(fingerprint()));
  c.put_meta("mode", to_string(mode_));
  c.put_meta("params", std::to_string(ps_.size()));
  for (std::size_t i = 0; i < ps_.size(); ++i)
    c.put_tensor(ps_.at(i).name, ps_.at(i).value);
  if (opt != nullptr && opt->t() > 0) {
    Adam& o = const_cast<Adam&>(*opt);
    c.put_meta("adam.t", std::to_string(opt->t()));
    for (std::size_t i = 0; i < ps_.size(); ++i) {
      c.put_tensor("adam.m." + ps_.at(i).name, o.m()[i]);
      c.put_tensor("adam.v." + ps_.at(i).name, o.v()[i]);
    }
  }
  c.save(path);
}

void Model::load_checkpoint(const std::string& path, Adam* opt, bool force) {
  Container c = Container::load(path);
  if (!c.has_meta("kind") || c.meta_value("kind") != "checkpoint")
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::string fp = c.meta_value("fingerprint");
  if (fp != std::to_string(fingerprint()) && !force)
    throw std::runtime_error(
        "checkpoint fingerprint mismatch (stored " + fp + ", model " +
        std::to_string(fingerprint()) + "); pass force to override");
  for (std::size_t i = 0; i < ps_.size(); ++i) {
    Tensor t = c.tensor(ps_.at(i).name);
    if (!t.same_shape(ps_.at(i).value))
      throw std::runtime_error("checkpoint tensor shape mismatch: " +
                               ps_.at(i).name);
    ps_.at(i).value = t;
  }
  if (opt != nullptr) {
    if (c.has_meta("adam.t")) {
      opt->set_t(static_cast<std::size_t>(
          std::stoull(c.meta_value("adam.t"))));
      opt->m().clear();
      opt->v().clear();
      for (std::size_t i = 0; i < ps_.size(); ++i) {
        opt->m().push_back(c.tensor("adam.m." + ps_.at(i).name));
        opt->v().push_back(c.tensor("adam.v." + ps_.at(i).name));
      }
    } else {
      opt->set_t(0);
      opt->m().clear();
      opt->v().clear();
    }
  }
}

}  // namespace bagvae

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "bagvae/corpus.hpp"
#include "bagvae/kb.hpp"
#include "bagvae/nn.hpp"
#include "bagvae/rng.hpp"
#include "bagvae/tape.hpp"
#include "bagvae/tensor.hpp"

namespace bagvae {

enum class PriorMode { baseline, normal, kb };

PriorMode prior_mode_from_string(const std::string& s);
std::string to_string(PriorMode m);

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t relations = 0;
  std::size_t max_len = 50;
  std::size_t d_w = 50;
  std::size_t d_p = 8;
  std::size_t d_z = 64;
  std::size_t hidden = 256;
  std::size_t d_s = 64;
  OutputSoftmax::Mode softmax_mode = OutputSoftmax::Mode::Auto;
};

/// All stochastic choices for one sentence's forward pass, drawn up front so
/// the pass itself is deterministic given (params, noise). Draw order:
/// eps, input_keep, teacher coin, unk flags.
struct SentenceNoise {
  std::vector<double> eps;         // d_z
  std::vector<double> input_keep;  // L*(d_w+2*d_p), 0 or 1/(1-p)
  double teacher_forced = 1.0;
  std::vector<double> unk_drop;    // L+1 decoder inputs, 1 = swap in UNK
};

SentenceNoise draw_sentence_noise(const EncodedSentence& sent,
                                  const ModelDims& dims, double input_dropout,
                                  double word_dropout, double teacher_force,
                                  Rng& rng);
/// Noise-free pass: eps = 0 (z = mu), keep everything, teacher-forced.
SentenceNoise quiet_noise(const EncodedSentence& sent, const ModelDims& dims);

struct BagLosses {
  double total = 0.0;
  double bce = 0.0;
  double reconstruction = 0.0;  // mean over sentences
  double kl = 0.0;              // mean over sentences, unweighted
};

struct BagPrediction {
  std::vector<double> probs;  // |R|, sigmoid scores
  std::vector<std::vector<double>> mu;  // per sentence, d_z
};

class Model {
 public:
  Model(const ModelDims& dims, PriorMode mode, Rng& rng);

  const ModelDims& dims() const { return dims_; }
  PriorMode mode() const { return mode_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }
  const OutputSoftmax* output_softmax() const { return out_.get(); }

  void set_word_embeddings(const Tensor& rows);

  struct Encoded {
    std::vector<Var> outputs;  // per token, hidden
    Var h, c;                  // summed final states
  };

  /// Bidirectional pass over [word; pos_head; pos_tail] inputs. A null noise
  /// pointer means no input dropout.
  Encoded encode(Tape& t, const EncodedSentence& sent,
                 const SentenceNoise* noise) const;
  std::pair<Var, Var> posterior_heads(Tape& t, const Encoded& enc) const;
  Var reparameterize(Tape& t, Var mu, Var logvar,
                     const std::vector<double>& eps) const;
  /// BOS + tokens feed the decoder; tokens + EOS are the targets. Inputs are
  /// ground-truth when noise.teacher_forced, else the model's own argmax
  /// predictions after the first step; either way UNK substitution applies.
  /// Returns the per-token mean of -log p.
  Var decode_loss(Tape& t, const EncodedSentence& sent, Var z,
                  const SentenceNoise& noise) const;
  /// Entity representations are span means over encoder outputs;
  /// s = W_v [code; e1; e2] where code is z (vae modes) or h (baseline).
  Var sentence_repr(Tape& t, const Encoded& enc, Var code,
                    const EncodedSentence& sent) const;
  /// One bag representation per relation id, NA included; weights are a
  /// softmax over dot(s_i, r_emb).
  std::vector<Var> selective_attention(Tape& t,
                                       const std::vector<Var>& reprs) const;
  /// Score for relation r reads coordinate r of W_c B_r + b_c.
  Var classification_logits(Tape& t, const std::vector<Var>& bag_reprs) const;

  /// Joint training loss on one bag. kb mode looks the pair up in priors
  /// (zero-mean fallback when absent or null); noise must hold one entry per
  /// sentence. Component values are filled from the built graph.
  Var joint_loss(Tape& t, const EncodedBag& bag,
                 const std::vector<SentenceNoise>& noise,
                 const PriorTable* priors, double beta, double lambda,
                 BagLosses* components) const;

  /// Evaluation path: mean-field (z = mu), no dropout, no decoder, and by
  /// construction no prior table. Returns per-relation probabilities and
  /// posterior means (empty mu list in baseline mode).
  BagPrediction predict(const EncodedBag& bag) const;

  /// Greedy argmax reconstruction of one sentence from z = mu, or from
  /// z = mu + sigma * eps when eps is given.
  std::vector<int> reconstruct(const EncodedSentence& sent,
                               std::size_t max_steps = 0) const;
  std::vector<int> reconstruct(const EncodedSentence& sent,
                               const std::vector<double>& eps,
                               std::size_t max_steps) const;

  void save_checkpoint(const std::string& path, const Adam* opt) const;
  /// Restores params (and optimizer state when opt is non-null). Refuses a
  /// checkpoint whose dims/mode fingerprint differs unless force.
  void load_checkpoint(const std::string& path, Adam* opt, bool force = false);
  std::uint64_t fingerprint() const;

 private:
  Var token_input(Tape& t, const EncodedSentence& sent, std::size_t pos,
                  const SentenceNoise* noise) const;
  Var span_mean(Tape& t, const std::vector<Var>& outputs,
                const Span& span) const;

  ModelDims dims_;
  PriorMode mode_;
  ParamStore ps_;

  std::size_t emb_word_ = 0, emb_pos_head_ = 0, emb_pos_tail_ = 0;
  LstmParamIdx enc_fwd_, enc_bwd_;
  std::size_t w_mu_ = 0, b_mu_ = 0, w_sigma_ = 0, b_sigma_ = 0;
  std::size_t dec_init_w_ = 0, dec_init_b_ = 0;
  LstmParamIdx dec_;
  std::unique_ptr<OutputSoftmax> out_;
  std::size_t w_v_ = 0;
  std::size_t emb_rel_ = 0;
  std::size_t w_c_ = 0, b_c_ = 0;
};

}  // namespace bagvae

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "bagvae/rng.hpp"
#include "bagvae/tape.hpp"
#include "bagvae/tensor.hpp"

namespace bagvae {

void init_uniform(Tensor& t, Rng& rng, double lo, double hi);
void init_normal(Tensor& t, Rng& rng, double stddev);
/// Xavier/Glorot uniform for a [fan_out x fan_in] matrix.
void init_xavier(Tensor& t, Rng& rng);

/// Parameter indices for one LSTM direction. Fused gate layout along the
/// first axis: [i; f; g; o], each of size hidden.
struct LstmParamIdx {
  std::size_t w_x = 0;
  std::size_t w_h = 0;
  std::size_t b = 0;
  std::size_t hidden = 0;
};

/// Registers w_x [4H x in], w_h [4H x H], b [4H]. Weights Xavier, bias zero
/// except the forget gate chunk which starts at 1.
LstmParamIdx make_lstm(ParamStore& ps, const std::string& prefix,
                       std::size_t in_dim, std::size_t hidden, Rng& rng);

/// One step: returns (h_next, c_next).
std::pair<Var, Var> lstm_cell(Tape& t, const LstmParamIdx& p, Var x, Var h,
                              Var c);

/// Vocabulary output layer. Full softmax when V <= 10000 (or forced), else a
/// three-cluster hierarchical softmax with cutoffs floor(V/15) and
/// floor(3V/15); ids must be sorted by descending training frequency. Tail
/// clusters use a low-rank projection (hidden/4 and hidden/16, min 1) and no
/// biases; the full path uses a bias.
class OutputSoftmax {
 public:
  enum class Mode { Auto, Full, Adaptive };

  OutputSoftmax(ParamStore& ps, const std::string& prefix, std::size_t hidden,
                std::size_t vocab, Rng& rng, Mode mode = Mode::Auto);

  /// -log p(target | hidden), differentiable.
  Var loss(Tape& t, Var hidden, std::size_t target) const;

  /// Full log-probability vector, no tape involvement (greedy decoding,
  /// distribution checks).
  std::vector<double> log_probs(const ParamStore& ps,
                                const std::vector<double>& hidden) const;

  bool adaptive() const { return adaptive_; }
  std::size_t vocab() const { return vocab_; }
  std::size_t cutoff1() const { return cutoff1_; }
  std::size_t cutoff2() const { return cutoff2_; }

 private:
  std::size_t hidden_;
  std::size_t vocab_;
  bool adaptive_;
  std::size_t cutoff1_ = 0;
  std::size_t cutoff2_ = 0;
  // full mode
  std::size_t w_full_ = 0, b_full_ = 0;
  // adaptive mode
  std::size_t w_head_ = 0;
  std::size_t proj1_ = 0, w_tail1_ = 0;
  std::size_t proj2_ = 0, w_tail2_ = 0;
};

/// Scales every grad in place by clip/norm when the global L2 norm exceeds
/// clip (clip <= 0 disables). Returns the pre-clip norm.
double clip_global_norm(ParamStore& ps, double clip);

/// Adam with decoupled weight decay. Clipping happens inside step() before
/// the moment updates so the stored moments see clipped gradients.
class Adam {
 public:
  Adam(double lr, double weight_decay, double clip_norm, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step(ParamStore& ps);

  std::size_t t() const { return t_; }
  void set_t(std::size_t t) { t_ = t; }
  std::vector<Tensor>& m() { return m_; }
  std::vector<Tensor>& v() { return v_; }

 private:
  double lr_, wd_, clip_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace bagvae

#include "bagvae/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bagvae {

void init_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (double& v : t.data) v = rng.uniform(lo, hi);
}

void init_normal(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.data) v = rng.normal(0.0, stddev);
}

void init_xavier(Tensor& t, Rng& rng) {
  if (t.rank() != 2) throw std::invalid_argument("init_xavier: need 2-D");
  double limit = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
  init_uniform(t, rng, -limit, limit);
}

LstmParamIdx make_lstm(ParamStore& ps, const std::string& prefix,
                       std::size_t in_dim, std::size_t hidden, Rng& rng) {
  LstmParamIdx p;
  p.hidden = hidden;
  Tensor wx({4 * hidden, in_dim});
  init_xavier(wx, rng);
  Tensor wh({4 * hidden, hidden});
  init_xavier(wh, rng);
  Tensor b({4 * hidden});
  for (std::size_t k = hidden; k < 2 * hidden; ++k) b.data[k] = 1.0;
  p.w_x = ps.add(prefix + ".w_x", std::move(wx));
  p.w_h = ps.add(prefix + ".w_h", std::move(wh));
  p.b = ps.add(prefix + ".b", std::move(b));
  return p;
}

std::pair<Var, Var> lstm_cell(Tape& t, const LstmParamIdx& p, Var x, Var h,
                              Var c) {
  std::size_t H = p.hidden;
  Var gates = t.add(t.affine_p(p.w_x, x, p.b), t.matvec_p(p.w_h, h));
  Var i = t.sigmoid(t.slice(gates, 0, H));
  Var f = t.sigmoid(t.slice(gates, H, H));
  Var g = t.tanh_(t.slice(gates, 2 * H, H));
  Var o = t.sigmoid(t.slice(gates, 3 * H, H));
  Var c_next = t.add(t.mul(f, c), t.mul(i, g));
  Var h_next = t.mul(o, t.tanh_(c_next));
  return {h_next, c_next};
}

OutputSoftmax::OutputSoftmax(ParamStore& ps, const std::string& prefix,
                             std::size_t hidden, std::size_t vocab, Rng& rng,
                             Mode mode)
    : hidden_(hidden), vocab_(vocab) {
  if (vocab < 2) throw std::invalid_argument("OutputSoftmax: vocab too small");
  adaptive_ = mode == Mode::Adaptive ||
              (mode == Mode::Auto && vocab > 10000);
  if (!adaptive_) {
    Tensor w({vocab, hidden});
    init_xavier(w, rng);
    w_full_ = ps.add(prefix + ".w", std::move(w));
    b_full_ = ps.add(prefix + ".b", Tensor({vocab}));
    return;
  }
  if (vocab < 15)
    throw std::invalid_argument("OutputSoftmax: adaptive needs V >= 15");
  cutoff1_ = vocab / 15;
  cutoff2_ = 3 * vocab / 15;
  std::size_t d1 = std::max<std::size_t>(1, hidden / 4);
  std::size_t d2 = std::max<std::size_t>(1, hidden / 16);
  Tensor wh({cutoff1_ + 2, hidden});
  init_xavier(wh, rng);
  w_head_ = ps.add(prefix + ".head", std::move(wh));
  Tensor p1({d1, hidden});
  init_xavier(p1, rng);
  proj1_ = ps.add(prefix + ".proj1", std::move(p1));
  Tensor t1({cutoff2_ - cutoff1_, d1});
  init_xavier(t1, rng);
  w_tail1_ = ps.add(prefix + ".tail1", std::move(t1));
  Tensor p2({d2, hidden});
  init_xavier(p2, rng);
  proj2_ = ps.add(prefix + ".proj2", std::move(p2));
  Tensor t2({vocab - cutoff2_, d2});
  init_xavier(t2, rng);
  w_tail2_ = ps.add(prefix + ".tail2", std::move(t2));
}

Var OutputSoftmax::loss(Tape& t, Var hidden, std::size_t target) const {
  if (target >= vocab_)
    throw std::out_of_range("OutputSoftmax: target >= vocab");
  if (!adaptive_) {
    Var logits = t.affine_p(w_full_, hidden, b_full_);
    return t.cross_entropy_logits(logits, target);
  }
  Var head = t.matvec_p(w_head_, hidden);
  if (target < cutoff1_) return t.cross_entropy_logits(head, target);
  if (target < cutoff2_) {
    Var tail = t.matvec_p(w_tail1_, t.matvec_p(proj1_, hidden));
    return t.add(t.cross_entropy_logits(head, cutoff1_),
                 t.cross_entropy_logits(tail, target - cutoff1_));
  }
  Var tail = t.matvec_p(w_tail2_, t.matvec_p(proj2_, hidden));
  return t.add(t.cross_entropy_logits(head, cutoff1_ + 1),
               t.cross_entropy_logits(tail, target - cutoff2_));
}

namespace {

std::vector<double> matvec_raw(const Tensor& w,
                               const std::vector<double>& x) {
  std::size_t m = w.shape[0], n = w.shape[1];
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = w.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> log_softmax_raw(const std::vector<double>& xs) {
  double lse = log_sum_exp(xs);
  std::vector<double> out(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) out[k] = xs[k] - lse;
  return out;
}

}  // namespace

std::vector<double> OutputSoftmax::log_probs(
    const ParamStore& ps, const std::vector<double>& hidden) const {
  if (hidden.size() != hidden_)
    throw std::invalid_argument("OutputSoftmax: hidden size mismatch");
  if (!adaptive_) {
    const Tensor& w = ps.at(w_full_).value;
    const Tensor& b = ps.at(b_full_).value;
    std::vector<double> logits = matvec_raw(w, hidden);
    for (std::size_t k = 0; k < vocab_; ++k) logits[k] += b.data[k];
    return log_softmax_raw(logits);
  }
  std::vector<double> head =
      log_softmax_raw(matvec_raw(ps.at(w_head_).value, hidden));
  std::vector<double> out(vocab_);
  for (std::size_t k = 0; k < cutoff1_; ++k) out[k] = head[k];
  std::vector<double> t1 = log_softmax_raw(matvec_raw(
      ps.at(w_tail1_).value, matvec_raw(ps.at(proj1_).value, hidden)));
  for (std::size_t k = 0; k < t1.size(); ++k)
    out[cutoff1_ + k] = head[cutoff1_] + t1[k];
  std::vector<double> t2 = log_softmax_raw(matvec_raw(
      ps.at(w_tail2_).value, matvec_raw(ps.at(proj2_).value, hidden)));
  for (std::size_t k = 0; k < t2.size(); ++k)
    out[cutoff2_ + k] = head[cutoff1_ + 1] + t2[k];
  return out;
}

double clip_global_norm(ParamStore& ps, double clip) {
  double sq = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (double g : ps.at(i).grad.data) sq += g * g;
  double norm = std::sqrt(sq);
  if (clip > 0.0 && norm > clip) {
    double s = clip / norm;
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (double& g : ps.at(i).grad.data) g *= s;
  }
  return norm;
}

Adam::Adam(double lr, double weight_decay, double clip_norm, double beta1,
           double beta2, double eps)
    : lr_(lr), wd_(weight_decay), clip_(clip_norm), beta1_(beta1),
      beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore& ps) {
  if (m_.empty()) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      m_.push_back(Tensor::zeros(ps.at(i).value.shape));
      v_.push_back(Tensor::zeros(ps.at(i).value.shape));
    }
  }
  if (m_.size() != ps.size())
    throw std::invalid_argument("Adam: parameter count changed");
  clip_global_norm(ps, clip_);
  t_ += 1;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Parameter& p = ps.at(i);
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      double g = p.grad.data[k];
      m.data[k] = beta1_ * m.data[k] + (1.0 - beta1_) * g;
      v.data[k] = beta2_ * v.data[k] + (1.0 - beta2_) * g * g;
      double mhat = m.data[k] / bc1;
      double vhat = v.data[k] / bc2;
      p.value.data[k] -=
          lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p.value.data[k]);
    }
  }
}

}  // namespace bagvae

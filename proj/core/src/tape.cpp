#include "bagvae/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bagvae {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name))
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  std::size_t idx = params_.size();
  index_[name] = idx;
  params_.emplace_back(std::move(name), std::move(value));
  return idx;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

std::size_t ParamStore::total_numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

Parameter& Tape::p(std::size_t pidx) {
  if (!store_) throw std::logic_error("Tape: no parameter store attached");
  return store_->at(pidx);
}

Var Tape::push(Tensor value, std::function<void()> back) {
  nodes_.push_back({std::move(value), std::move(back)});
  return Var{nodes_.size() - 1};
}

Tensor& Tape::g(std::size_t i) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  if (grads_[i].data.empty()) grads_[i] = Tensor::zeros(nodes_[i].value.shape);
  return grads_[i];
}

Tensor Tape::grad_of(Var v) const {
  if (has_grad(v.i)) return grads_[v.i];
  return Tensor::zeros(nodes_[v.i].value.shape);
}

Var Tape::input(Tensor t) { return push(std::move(t), nullptr); }

Var Tape::prow(std::size_t pidx, std::size_t row) {
  Parameter& par = p(pidx);
  if (par.value.rank() != 2)
    throw std::invalid_argument("prow: parameter " + par.name + " is not 2-D");
  std::size_t cols = par.value.shape[1];
  if (row >= par.value.shape[0])
    throw std::out_of_range("prow: row out of range in " + par.name);
  Tensor v({cols});
  std::copy_n(par.value.data.begin() + row * cols, cols, v.data.begin());
  std::size_t self = nodes_.size();
  return push(std::move(v), [this, pidx, row, cols, self]() {
    const Tensor& go = g(self);
    Parameter& par2 = p(pidx);
    for (std::size_t j = 0; j < cols; ++j)
      par2.grad.data[row * cols + j] += go.data[j];
  });
}

Var Tape::pelem(std::size_t pidx, std::size_t flat) {
  Parameter& par = p(pidx);
  if (flat >= par.value.numel())
    throw std::out_of_range("pelem: index out of range in " + par.name);
  std::size_t self = nodes_.size();
  return push(Tensor::scalar(par.value.data[flat]),
              [this, pidx, flat, self]() {
                p(pidx).grad.data[flat] += g(self).data[0];
              });
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].value;
  const Tensor& tb = nodes_[b.i].value;
  if (!ta.same_shape(tb))
    throw std::invalid_argument("add: shape mismatch " + ta.shape_str() + " vs " +
                                tb.shape_str());
  Tensor out(ta.shape);
  for (std::size_t k = 0; k < out.numel(); ++k)
    out.data[k] = ta.data[k] + tb.data[k];
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, b, self]() {
    const Tensor& go = g(self);
    Tensor& ga = g(a.i);
    Tensor& gb = g(b.i);
    for (std::size_t k = 0; k < go.numel(); ++k) {
      ga.data[k] += go.data[k];
      gb.data[k] += go.data[k];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].value;
  const Tensor& tb = nodes_[b.i].value;
  if (!ta.same_shape(tb))
    throw std::invalid_argument("sub: shape mismatch");
  Tensor out(ta.shape);
  for (std::size_t k = 0; k < out.numel(); ++k)
    out.data[k] = ta.data[k] - tb.data[k];
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, b, self]() {
    const Tensor& go = g(self);
    Tensor& ga = g(a.i);
    Tensor& gb = g(b.i);
    for (std::size_t k = 0; k < go.numel(); ++k) {
      ga.data[k] += go.data[k];
      gb.data[k] -= go.data[k];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].value;
  const Tensor& tb = nodes_[b.i].value;
  if (!ta.same_shape(tb))
    throw std::invalid_argument("mul: shape mismatch");
  Tensor out(ta.shape);
  for (std::size_t k = 0; k < out.numel(); ++k)
    out.data[k] = ta.data[k] * tb.data[k];
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, b, self]() {
    const Tensor& go = g(self);
    const Tensor& va = nodes_[a.i].value;
    const Tensor& vb = nodes_[b.i].value;
    Tensor& ga = g(a.i);
    Tensor& gb = g(b.i);
    for (std::size_t k = 0; k < go.numel(); ++k) {
      ga.data[k] += go.data[k] * vb.data[k];
      gb.data[k] += go.data[k] * va.data[k];
    }
  });
}

Var Tape::smul(Var a, double c) {
  const Tensor& ta = nodes_[a.i].value;
  Tensor out(ta.shape);
  for (std::size_t k = 0; k < out.numel(); ++k) out.data[k] = ta.data[k] * c;
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, c, self]() {
    const Tensor& go = g(self);
    Tensor& ga = g(a.i);
    for (std::size_t k = 0; k < go.numel(); ++k) ga.data[k] += go.data[k] * c;
  });
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  std::size_t total = 0;
  for (Var v : parts) {
    if (nodes_[v.i].value.rank() != 1)
      throw std::invalid_argument("concat: parts must be 1-D");
    total += nodes_[v.i].value.numel();
  }
  Tensor out({total});
  std::size_t off = 0;
  for (Var v : parts) {
    const Tensor& tv = nodes_[v.i].value;
    std::copy(tv.data.begin(), tv.data.end(), out.data.begin() + off);
    off += tv.numel();
  }
  std::size_t self = nodes_.size();
  std::vector<Var> ps = parts;
  return push(std::move(out), [this, ps, self]() {
    const Tensor& go = g(self);
    std::size_t o = 0;
    for (Var v : ps) {
      Tensor& gv = g(v.i);
      for (std::size_t k = 0; k < gv.numel(); ++k) gv.data[k] += go.data[o + k];
      o += gv.numel();
    }
  });
}

Var Tape::slice(Var a, std::size_t begin, std::size_t len) {
  const Tensor& ta = nodes_[a.i].value;
  if (ta.rank() != 1) throw std::invalid_argument("slice: input must be 1-D");
  if (begin + len > ta.numel()) throw std::out_of_range("slice: out of range");
  Tensor out({len});
  std::copy_n(ta.data.begin() + begin, len, out.data.begin());
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, begin, len, self]() {
    const Tensor& go = g(self);
    Tensor& ga = g(a.i);
    for (std::size_t k = 0; k < len; ++k) ga.data[begin + k] += go.data[k];
  });
}

Var Tape::matvec_p(std::size_t pidx, Var x) {
  Parameter& par = p(pidx);
  const Tensor& tx = nodes_[x.i].value;
  if (par.value.rank() != 2)
    throw std::invalid_argument("matvec_p: " + par.name + " is not 2-D");
  std::size_t m = par.value.shape[0], n = par.value.shape[1];
  if (tx.numel() != n)
    throw std::invalid_argument("matvec_p: size mismatch for " + par.name);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* wrow = par.value.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += wrow[j] * tx.data[j];
    out.data[i] = acc;
  }
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, pidx, x, m, n, self]() {
    const Tensor& go = g(self);
    Parameter& par2 = p(pidx);
    const Tensor& vx = nodes_[x.i].value;
    Tensor& gx = g(x.i);
    for (std::size_t i = 0; i < m; ++i) {
      double gi = go.data[i];
      if (gi == 0.0) continue;
      double* grow = par2.grad.data.data() + i * n;
      const double* wrow = par2.value.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        grow[j] += gi * vx.data[j];
        gx.data[j] += gi * wrow[j];
      }
    }
  });
}

Var Tape::affine_p(std::size_t w_idx, Var x, std::size_t b_idx) {
  Parameter& wpar = p(w_idx);
  Parameter& bpar = p(b_idx);
  const Tensor& tx = nodes_[x.i].value;
  if (wpar.value.rank() != 2 || bpar.value.rank() != 1)
    throw std::invalid_argument("affine_p: bad parameter ranks");
  std::size_t m = wpar.value.shape[0], n = wpar.value.shape[1];
  if (tx.numel() != n || bpar.value.numel() != m)
    throw std::invalid_argument("affine_p: size mismatch for " + wpar.name);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = bpar.value.data[i];
    const double* wrow = wpar.value.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += wrow[j] * tx.data[j];
    out.data[i] = acc;
  }
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, w_idx, b_idx, x, m, n, self]() {
    const Tensor& go = g(self);
    Parameter& wp = p(w_idx);
    Parameter& bp = p(b_idx);
    const Tensor& vx = nodes_[x.i].value;
    Tensor& gx = g(x.i);
    for (std::size_t i = 0; i < m; ++i) {
      double gi = go.data[i];
      if (gi == 0.0) continue;
      bp.grad.data[i] += gi;
      double* grow = wp.grad.data.data() + i * n;
      const double* wrow = wp.value.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        grow[j] += gi * vx.data[j];
        gx.data[j] += gi * wrow[j];
      }
    }
  });
}

Var Tape::dot(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].value;
  const Tensor& tb = nodes_[b.i].value;
  if (ta.numel() != tb.numel()) throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < ta.numel(); ++k) acc += ta.data[k] * tb.data[k];
  std::size_t self = nodes_.size();
  return push(Tensor::scalar(acc), [this, a, b, self]() {
    double go = g(self).data[0];
    const Tensor& va = nodes_[a.i].value;
    const Tensor& vb = nodes_[b.i].value;
    Tensor& ga = g(a.i);
    Tensor& gb = g(b.i);
    for (std::size_t k = 0; k < va.numel(); ++k) {
      ga.data[k] += go * vb.data[k];
      gb.data[k] += go * va.data[k];
    }
  });
}

Var Tape::weighted_sum(const std::vector<Var>& vecs, Var w) {
  if (vecs.empty()) throw std::invalid_argument("weighted_sum: no vectors");
  const Tensor& tw = nodes_[w.i].value;
  if (tw.numel() != vecs.size())
    throw std::invalid_argument("weighted_sum: weight count mismatch");
  std::size_t d = nodes_[vecs[0].i].value.numel();
  Tensor out({d});
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    const Tensor& tv = nodes_[vecs[i].i].value;
    if (tv.numel() != d)
      throw std::invalid_argument("weighted_sum: vector size mismatch");
    for (std::size_t k = 0; k < d; ++k) out.data[k] += tw.data[i] * tv.data[k];
  }
  std::size_t self = nodes_.size();
  std::vector<Var> vs = vecs;
  return push(std::move(out), [this, vs, w, d, self]() {
    const Tensor& go = g(self);
    const Tensor& vw = nodes_[w.i].value;
    Tensor& gw = g(w.i);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const Tensor& vv = nodes_[vs[i].i].value;
      Tensor& gv = g(vs[i].i);
      double dwi = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        gv.data[k] += vw.data[i] * go.data[k];
        dwi += vv.data[k] * go.data[k];
      }
      gw.data[i] += dwi;
    }
  });
}

Var Tape::sigmoid(Var a) {
  const Tensor& ta = nodes_[a.i].value;
  Tensor out(ta.shape);
  for (std::size_t k = 0; k < ta.numel(); ++k) {
    double x = ta.data[k];
    out.data[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                           : std::exp(x) / (1.0 + std::exp(x));
  }
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, self]() {
    const Tensor& go = g(self);
    const Tensor& vo = nodes_[self].value;
    Tensor& ga = g(a.i);
    for (std::size_t k = 0; k < go.numel(); ++k)
      ga.data[k] += go.data[k] * vo.data[k] * (1.0 - vo.data[k]);
  });
}

Var Tape::tanh_(Var a) {
  const Tensor& ta = nodes_[a.i].value;
  Tensor out(ta.shape);
  for (std::size_t k = 0; k < ta.numel(); ++k) out.data[k] = std::tanh(ta.data[k]);
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, self]() {
    const Tensor& go = g(self);
    const Tensor& vo = nodes_[self].value;
    Tensor& ga = g(a.i);
    for (std::size_t k = 0; k < go.numel(); ++k)
      ga.data[k] += go.data[k] * (1.0 - vo.data[k] * vo.data[k]);
  });
}

Var Tape::exp_(Var a) {
  const Tensor& ta = nodes_[a.i].value;
  Tensor out(ta.shape);
  for (std::size_t k = 0; k < ta.numel(); ++k) out.data[k] = std::exp(ta.data[k]);
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, self]() {
    const Tensor& go = g(self);
    const Tensor& vo = nodes_[self].value;
    Tensor& ga = g(a.i);
    for (std::size_t k = 0; k < go.numel(); ++k)
      ga.data[k] += go.data[k] * vo.data[k];
  });
}

Var Tape::sum(Var a) {
  const Tensor& ta = nodes_[a.i].value;
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  std::size_t self = nodes_.size();
  return push(Tensor::scalar(acc), [this, a, self]() {
    double go = g(self).data[0];
    Tensor& ga = g(a.i);
    for (std::size_t k = 0; k < ga.numel(); ++k) ga.data[k] += go;
  });
}

Var Tape::mean(Var a) {
  const Tensor& ta = nodes_[a.i].value;
  std::size_t n = ta.numel();
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  std::size_t self = nodes_.size();
  return push(Tensor::scalar(acc / static_cast<double>(n)), [this, a, n, self]() {
    double go = g(self).data[0] / static_cast<double>(n);
    Tensor& ga = g(a.i);
    for (std::size_t k = 0; k < ga.numel(); ++k) ga.data[k] += go;
  });
}

Var Tape::softmax(Var a) {
  const Tensor& ta = nodes_[a.i].value;
  Tensor out(ta.shape);
  double mx = *std::max_element(ta.data.begin(), ta.data.end());
  double z = 0.0;
  for (std::size_t k = 0; k < ta.numel(); ++k) {
    out.data[k] = std::exp(ta.data[k] - mx);
    z += out.data[k];
  }
  for (double& v : out.data) v /= z;
  std::size_t self = nodes_.size();
  return push(std::move(out), [this, a, self]() {
    const Tensor& go = g(self);
    const Tensor& vo = nodes_[self].value;
    Tensor& ga = g(a.i);
    double dotgy = 0.0;
    for (std::size_t k = 0; k < go.numel(); ++k) dotgy += go.data[k] * vo.data[k];
    for (std::size_t k = 0; k < go.numel(); ++k)
      ga.data[k] += vo.data[k] * (go.data[k] - dotgy);
  });
}

Var Tape::cross_entropy_logits(Var logits, std::size_t target) {
  const Tensor& tl = nodes_[logits.i].value;
  if (target >= tl.numel())
    throw std::out_of_range("cross_entropy_logits: target out of range");
  double lse = log_sum_exp(tl.data);
  std::size_t self = nodes_.size();
  return push(Tensor::scalar(lse - tl.data[target]),
              [this, logits, target, self]() {
                double go = g(self).data[0];
                const Tensor& vl = nodes_[logits.i].value;
                Tensor& gl = g(logits.i);
                std::vector<double> sm = softmax_vec(vl.data);
                for (std::size_t k = 0; k < sm.size(); ++k)
                  gl.data[k] += go * sm[k];
                gl.data[target] -= go;
              });
}

Var Tape::bce_sum(Var logits, const std::vector<double>& targets) {
  const Tensor& tl = nodes_[logits.i].value;
  if (tl.numel() != targets.size())
    throw std::invalid_argument("bce_sum: target count mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    double x = tl.data[k], y = targets[k];
    acc += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  std::size_t self = nodes_.size();
  std::vector<double> ys = targets;
  return push(Tensor::scalar(acc), [this, logits, ys, self]() {
    double go = g(self).data[0];
    const Tensor& vl = nodes_[logits.i].value;
    Tensor& gl = g(logits.i);
    for (std::size_t k = 0; k < ys.size(); ++k) {
      double x = vl.data[k];
      double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
      gl.data[k] += go * (s - ys[k]);
    }
  });
}

Var Tape::kl_diag_gauss(Var mu, Var logvar, const Tensor& prior_mean) {
  const Tensor& tm = nodes_[mu.i].value;
  const Tensor& tv = nodes_[logvar.i].value;
  if (tm.numel() != tv.numel() || tm.numel() != prior_mean.numel())
    throw std::invalid_argument("kl_diag_gauss: size mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < tm.numel(); ++k) {
    double d = tm.data[k] - prior_mean.data[k];
    acc += std::exp(tv.data[k]) + d * d - 1.0 - tv.data[k];
  }
  std::size_t self = nodes_.size();
  Tensor pm = prior_mean;
  return push(Tensor::scalar(0.5 * acc), [this, mu, logvar, pm, self]() {
    double go = g(self).data[0];
    const Tensor& vm = nodes_[mu.i].value;
    const Tensor& vv = nodes_[logvar.i].value;
    Tensor& gm = g(mu.i);
    Tensor& gv = g(logvar.i);
    for (std::size_t k = 0; k < vm.numel(); ++k) {
      gm.data[k] += go * (vm.data[k] - pm.data[k]);
      gv.data[k] += go * 0.5 * (std::exp(vv.data[k]) - 1.0);
    }
  });
}

void Tape::backward(Var loss) {
  if (nodes_[loss.i].value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  grads_.resize(nodes_.size());
  g(loss.i).data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back && has_grad(i)) nodes_[i].back();
  }
}

double log_sum_exp(const std::vector<double>& xs) {
  double mx = *std::max_element(xs.begin(), xs.end());
  double z = 0.0;
  for (double x : xs) z += std::exp(x - mx);
  return mx + std::log(z);
}

std::vector<double> softmax_vec(const std::vector<double>& xs) {
  double mx = *std::max_element(xs.begin(), xs.end());
  std::vector<double> out(xs.size());
  double z = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    out[k] = std::exp(xs[k] - mx);
    z += out[k];
  }
  for (double& v : out) v /= z;
  return out;
}

std::size_t argmax_vec(const std::vector<double>& xs) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < xs.size(); ++k)
    if (xs[k] > xs[best]) best = k;
  return best;
}

}  // namespace bagvae

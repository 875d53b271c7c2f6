#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bagvae/rng.hpp"
#include "bagvae/tensor.hpp"

namespace bagvae {

/// Named trainable tensor. Gradients accumulate across backward passes until
/// the optimizer clears them.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}
};

/// Ordered registry of parameters. Registration order is fixed per model so
/// that optimizer state and checkpoints line up by index.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return params_[i]; }
  const Parameter& at(std::size_t i) const { return params_[i]; }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  void zero_grad();
  std::size_t total_numel() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t i = 0;
};

/// Reverse-mode tape. Build a graph with the op methods, then call backward()
/// on a scalar node; parameter gradients land in the attached ParamStore.
///
/// Ops that touch parameters (prow, pelem, matvec_p, affine_p) read values
/// from and write grads to the store directly instead of copying the tensor
/// onto the tape, so repeated use of a weight matrix costs nothing extra.
class Tape {
 public:
  explicit Tape(ParamStore* store = nullptr) : store_(store) {}

  Var input(Tensor t);
  Var prow(std::size_t pidx, std::size_t row);
  Var pelem(std::size_t pidx, std::size_t flat);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var smul(Var a, double c);
  Var concat(const std::vector<Var>& parts);
  Var slice(Var a, std::size_t begin, std::size_t len);

  Var matvec_p(std::size_t pidx, Var x);
  Var affine_p(std::size_t w_idx, Var x, std::size_t b_idx);
  Var dot(Var a, Var b);
  Var weighted_sum(const std::vector<Var>& vecs, Var w);

  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var exp_(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var softmax(Var a);

  Var cross_entropy_logits(Var logits, std::size_t target);
  Var bce_sum(Var logits, const std::vector<double>& targets);
  Var kl_diag_gauss(Var mu, Var logvar, const Tensor& prior_mean);

  const Tensor& val(Var v) const { return nodes_[v.i].value; }
  /// Gradient of the last backward() target w.r.t. node v (zeros if unused).
  Tensor grad_of(Var v) const;

  void backward(Var loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::function<void()> back;
  };

  Var push(Tensor value, std::function<void()> back);
  Tensor& g(std::size_t i);
  bool has_grad(std::size_t i) const {
    return i < grads_.size() && !grads_[i].data.empty();
  }
  Parameter& p(std::size_t pidx);

  ParamStore* store_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

/// Numerically stable helpers shared by tape ops and no-grad eval paths.
double log_sum_exp(const std::vector<double>& xs);
std::vector<double> softmax_vec(const std::vector<double>& xs);
std::size_t argmax_vec(const std::vector<double>& xs);

}  // namespace bagvae

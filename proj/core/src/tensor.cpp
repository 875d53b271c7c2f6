#include "bagvae/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bagvae {

std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
  data.assign(shape_numel(shape), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
  if (data.size() != shape_numel(shape))
    throw std::invalid_argument("Tensor: data size does not match shape");
}

Tensor Tensor::zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> d) {
  std::size_t n = d.size();
  return Tensor({n}, std::move(d));
}

std::size_t Tensor::numel() const { return data.size(); }

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

}  // namespace bagvae

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bagvae {

/// Dense row-major tensor of doubles. Rank is the shape length; scalars are
/// rank-1 tensors of shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> d);

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at2(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& s);

}  // namespace bagvae

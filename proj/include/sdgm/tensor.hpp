#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace sdgm {

// Dense row-major tensor of doubles. Rank is whatever `shape` says; the
// accessors below cover the ranks used in this project (1 to 3).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                             std::multiplies<>()),
             fill) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape); }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool same_shape(const Tensor& o) const noexcept { return shape == o.shape; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  // Contiguous innermost vector at a leading index (rank 2) or index pair
  // (rank 3).
  std::span<double> vec(std::size_t i) {
    return {data.data() + i * shape.back(), shape.back()};
  }
  std::span<const double> vec(std::size_t i) const {
    return {data.data() + i * shape.back(), shape.back()};
  }
  std::span<double> vec(std::size_t i, std::size_t j) {
    return {data.data() + (i * shape[1] + j) * shape[2], shape[2]};
  }
  std::span<const double> vec(std::size_t i, std::size_t j) const {
    return {data.data() + (i * shape[1] + j) * shape[2], shape[2]};
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace sdgm

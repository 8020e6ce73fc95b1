#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace qfl::nd {

/// Dense FP32 tensor: flat row-major storage plus shape metadata.
struct DenseTensor {
  std::vector<float> data;
  std::vector<std::size_t> shape;

  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::size_t> shape_in, float fill = 0.0f);
  DenseTensor(std::vector<std::size_t> shape_in, std::vector<float> values);

  std::size_t size() const { return data.size(); }

  // 2-D accessors; throw when the tensor is not rank 2.
  std::size_t rows() const;
  std::size_t cols() const;
  float& at(std::size_t r, std::size_t c);
  float at(std::size_t r, std::size_t c) const;

  bool same_shape(const DenseTensor& other) const { return shape == other.shape; }
};

/// Standard matrix product [m,k] x [k,n] -> [m,n]. Summation runs over k in
/// ascending order for every output element, so results are reproducible.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);

/// a [m,k] x b[n,k]^T -> [m,n].
DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b);

/// a[k,m]^T x b[k,n] -> [m,n].
DenseTensor matmul_tn(const DenseTensor& a, const DenseTensor& b);

/// Throws std::domain_error when any value is NaN or infinite.
void check_finite(std::span<const float> values, const std::string& what);

}  // namespace qfl::nd

#include "qfl/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace qfl::nd {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> shape_in, float fill)
    : data(shape_product(shape_in), fill), shape(std::move(shape_in)) {}

DenseTensor::DenseTensor(std::vector<std::size_t> shape_in, std::vector<float> values)
    : data(std::move(values)), shape(std::move(shape_in)) {
  if (data.size() != shape_product(shape)) {
    throw std::invalid_argument("DenseTensor: value count does not match shape");
  }
}

std::size_t DenseTensor::rows() const {
  if (shape.size() != 2) throw std::invalid_argument("DenseTensor::rows: tensor is not rank 2");
  return shape[0];
}

std::size_t DenseTensor::cols() const {
  if (shape.size() != 2) throw std::invalid_argument("DenseTensor::cols: tensor is not rank 2");
  return shape[1];
}

float& DenseTensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

float DenseTensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw std::invalid_argument("matmul: inner dimensions do not match");
  DenseTensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    float* orow = &out.data[i * n];
    for (std::size_t kk = 0; kk < k; ++kk) {
      const float aik = a.data[i * k + kk];
      const float* brow = &b.data[kk * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) throw std::invalid_argument("matmul_nt: inner dimensions do not match");
  DenseTensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = &a.data[i * k];
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = &b.data[j * k];
      float acc = 0.0f;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      out.data[i * n + j] = acc;
    }
  }
  return out;
}

DenseTensor matmul_tn(const DenseTensor& a, const DenseTensor& b) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) throw std::invalid_argument("matmul_tn: inner dimensions do not match");
  DenseTensor out({m, n});
  for (std::size_t kk = 0; kk < k; ++kk) {
    const float* arow = &a.data[kk * m];
    const float* brow = &b.data[kk * n];
    for (std::size_t i = 0; i < m; ++i) {
      const float aki = arow[i];
      float* orow = &out.data[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

void check_finite(std::span<const float> values, const std::string& what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw std::domain_error(what + ": non-finite value");
  }
}

}  // namespace qfl::nd

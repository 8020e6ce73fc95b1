#pragma once

#include <string>
#include <vector>

#include "qfl/rng.hpp"
#include "qfl/tensor.hpp"

namespace qfl::data {

struct Dataset {
  nd::DenseTensor x;   // [n, features]
  std::vector<int> y;  // labels in [0, num_classes)
  int num_classes = 0;

  std::size_t size() const { return y.size(); }
  std::size_t features() const { return x.cols(); }
};

/// Gaussian blobs: class c sits at class_sep * u_c for fixed unit directions
/// u_c (drawn once from the stream), unit covariance, balanced labels
/// (sample i gets class i mod classes). classes >= 2, n >= classes.
Dataset generate_synthetic(nd::RngStream& rng, std::size_t n, std::size_t features,
                           int classes, float class_sep);

/// Text format: header line "n features classes", then one sample per line:
/// label followed by feature values, whitespace-delimited. The writer emits
/// shortest round-trip decimals, so save/load is bit-exact.
Dataset load_flat_file(const std::string& path);
void save_flat_file(const Dataset& ds, const std::string& path);

}  // namespace qfl::data

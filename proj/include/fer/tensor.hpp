#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fer/error.hpp"

namespace fer {

inline std::size_t shape_size(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(std::span<const std::size_t> dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

/// Dense row-major float tensor.
struct FeatureTensor {
  std::vector<std::size_t> dims;
  std::vector<float> data;

  FeatureTensor() = default;
  explicit FeatureTensor(std::vector<std::size_t> shape, float fill = 0.0f)
      : dims(std::move(shape)), data(shape_size(dims), fill) {}
  FeatureTensor(std::vector<std::size_t> shape, std::vector<float> values)
      : dims(std::move(shape)), data(std::move(values)) {
    if (data.size() != shape_size(dims)) {
      throw Error(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                                " does not match shape " + shape_string(dims));
    }
  }

  std::size_t size() const { return data.size(); }

  bool all_finite() const {
    for (float v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

}  // namespace fer

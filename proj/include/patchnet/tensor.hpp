#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"

namespace patchnet {

enum class Precision { F32, F64 };

inline std::string to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

// Dense row-major value array with an explicit shape. Gradients are carried
// as a second Tensor of identical shape rather than an attached field, which
// keeps parameter/gradient lists mechanically aligned.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp) : shape(std::move(shp)) {
    v.assign(element_count(shape), S(0));
  }

  static size_t element_count(const std::vector<int>& shp) {
    size_t n = 1;
    for (int d : shp) {
      require(d > 0, ErrorCode::InvariantViolation, "tensor dims must be positive");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t size() const { return v.size(); }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  S& operator[](size_t i) { return v[i]; }
  S operator[](size_t i) const { return v[i]; }

  void fill(S value) { std::fill(v.begin(), v.end(), value); }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "x" : "") + format_int(shape[i]);
    return s + "]";
  }
};

template <class S>
inline void check_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                             const std::string& what) {
  require(a.shape == b.shape, ErrorCode::InvariantViolation,
          what + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// Normalization guard below which an embedding is treated as collapsed.
template <class S>
constexpr S norm_epsilon() {
  if constexpr (sizeof(S) == 8)
    return S(1e-12);
  else
    return S(1e-7);
}

}  // namespace patchnet

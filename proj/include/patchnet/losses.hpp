#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/nn.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/taxonomy.hpp"
#include "patchnet/tensor.hpp"

namespace patchnet {

// Margin-based classification settings. A larger margin is imposed on live
// classes than on spoof classes, compacting live clusters while leaving the
// spoof side dispersed.
struct MarginConfig {
  double scale = 30.0;
  double margin_live = 0.4;
  double margin_spoof = 0.1;

  void validate() const {
    require(scale > 0, ErrorCode::InvariantViolation, "margin scale must be > 0");
    require(margin_spoof >= 0 && margin_spoof <= margin_live && margin_live < 1,
            ErrorCode::InvariantViolation,
            "margins must satisfy 0 <= spoof <= live < 1, got live=" +
                format_double(margin_live) + " spoof=" + format_double(margin_spoof));
  }
};

struct LossWeights {
  double recognition = 1.0;  // weight on the two-view recognition loss
  double similarity = 1.0;   // weight on the two-view similarity loss

  void validate() const {
    require(recognition >= 0 && similarity >= 0, ErrorCode::InvariantViolation,
            "loss weights must be non-negative");
  }
};

// Classification head: one prototype per class on the unit hypersphere.
// Rows of `weights` are raw parameters; the loss consumes row-normalized
// prototypes and gradients flow back through the normalization Jacobian.
// (In the usual matrix notation the prototypes are the columns of a d x N
// weight matrix; storage here is row-major N x d.)
template <class S>
struct ClassifierHead {
  Tensor<S> weights;  // [N x d]

  int classes() const { return weights.shape.at(0); }
  int dim() const { return weights.shape.at(1); }

  static ClassifierHead init(int classes, int dim, std::uint64_t seed) {
    require(classes >= 2 && dim >= 2, ErrorCode::InvariantViolation,
            "head needs >= 2 classes and dim >= 2");
    ClassifierHead head;
    head.weights = Tensor<S>({classes, dim});
    Rng rng(seed);
    for (int j = 0; j < classes; ++j) {
      S* row = head.weights.data() + static_cast<size_t>(j) * dim;
      for (int i = 0; i < dim; ++i) row[i] = static_cast<S>(rng.normal());
      S buf_norm = l2_normalize(row, static_cast<size_t>(dim), row);
      (void)buf_norm;
    }
    return head;
  }

  Tensor<S> normalized() const {
    Tensor<S> out = weights;
    const int d = dim();
    for (int j = 0; j < classes(); ++j) {
      S* row = out.data() + static_cast<size_t>(j) * d;
      l2_normalize(weights.data() + static_cast<size_t>(j) * d, static_cast<size_t>(d), row);
    }
    return out;
  }

  // grad_raw += J_normalize^T(grad_normalized), row by row.
  void backward_through_normalization(const Tensor<S>& grad_normalized,
                                      Tensor<S>& grad_raw) const {
    check_same_shape(grad_normalized, weights, "head normalization backward");
    check_same_shape(grad_raw, weights, "head normalization backward");
    const int d = dim();
    std::vector<S> unit(static_cast<size_t>(d));
    std::vector<S> dx(static_cast<size_t>(d));
    for (int j = 0; j < classes(); ++j) {
      const S* raw = weights.data() + static_cast<size_t>(j) * d;
      S norm = l2_normalize(raw, static_cast<size_t>(d), unit.data());
      l2_normalize_backward(unit.data(), norm,
                            grad_normalized.data() + static_cast<size_t>(j) * d,
                            static_cast<size_t>(d), dx.data());
      S* out = grad_raw.data() + static_cast<size_t>(j) * d;
      for (int i = 0; i < d; ++i) out[i] += dx[i];
    }
  }
};

namespace detail {

template <class S>
inline void check_unit_norm(const S* v, size_t n, const char* what, double tol = 1e-3) {
  double sq = 0;
  for (size_t i = 0; i < n; ++i) sq += static_cast<double>(v[i]) * static_cast<double>(v[i]);
  double norm = std::sqrt(sq);
  require(std::abs(norm - 1.0) <= tol, ErrorCode::InvariantViolation,
          std::string(what) + " must be unit-norm, got ||.|| = " + format_double(norm));
}

// Margin softmax on cosine logits for a single embedding. All gradient
// outputs accumulate (callers zero-initialize); `weight` scales the
// contribution so batch means need no second pass.
//
//   z_j = s * (p_j . f) - [j == y] * s * m,   loss = logsumexp(z) - z_y
template <class S>
inline double margin_softmax_term(std::span<const S> f, int target,
                                  const Tensor<S>& prototypes, double s, double m,
                                  double weight, S* grad_f, Tensor<S>* grad_prototypes) {
  const int n_classes = prototypes.shape.at(0);
  const int d = prototypes.shape.at(1);
  require(static_cast<int>(f.size()) == d, ErrorCode::InvariantViolation,
          "embedding dim " + format_int(static_cast<std::int64_t>(f.size())) +
              " does not match head dim " + format_int(d));
  require(target >= 0 && target < n_classes, ErrorCode::InvariantViolation,
          "class index " + format_int(target) + " outside [0, " + format_int(n_classes) + ")");
  require(m >= 0 && m < 1, ErrorCode::InvariantViolation, "margin must lie in [0, 1)");
  check_unit_norm(f.data(), f.size(), "embedding");

  std::vector<double> z(static_cast<size_t>(n_classes));
  for (int j = 0; j < n_classes; ++j) {
    const S* row = prototypes.data() + static_cast<size_t>(j) * d;
    check_unit_norm(row, static_cast<size_t>(d), "head prototype");
    double cos = 0;
    for (int i = 0; i < d; ++i) cos += static_cast<double>(row[i]) * static_cast<double>(f[i]);
    z[static_cast<size_t>(j)] = s * cos;
  }
  z[static_cast<size_t>(target)] -= s * m;

  const double lse = logsumexp(z.data(), z.size());
  const double loss = lse - z[static_cast<size_t>(target)];

  if (grad_f || grad_prototypes) {
    std::vector<double> p(static_cast<size_t>(n_classes));
    softmax(z.data(), z.size(), p.data());
    for (int j = 0; j < n_classes; ++j) {
      const double g = weight * s * (p[static_cast<size_t>(j)] - (j == target ? 1.0 : 0.0));
      const S* row = prototypes.data() + static_cast<size_t>(j) * d;
      if (grad_f)
        for (int i = 0; i < d; ++i) grad_f[i] += static_cast<S>(g * static_cast<double>(row[i]));
      if (grad_prototypes) {
        S* gr = grad_prototypes->data() + static_cast<size_t>(j) * d;
        for (int i = 0; i < d; ++i) gr[i] += static_cast<S>(g * static_cast<double>(f[i]));
      }
    }
  }
  return weight * loss;
}

}  // namespace detail

// Single-view additive-margin softmax loss on unit vectors.
template <class S>
inline double am_softmax_loss(std::span<const S> f, int target, const Tensor<S>& prototypes,
                              double s, double m, S* grad_f = nullptr,
                              Tensor<S>* grad_prototypes = nullptr) {
  require(s > 0, ErrorCode::InvariantViolation, "scale must be > 0");
  return detail::margin_softmax_term(f, target, prototypes, s, m, 1.0, grad_f,
                                     grad_prototypes);
}

// Margin dispatch on the live/spoof partition: live targets get the larger
// margin, spoof targets the smaller one.
template <class S>
inline double asym_am_softmax_loss(std::span<const S> f, int target,
                                   const Tensor<S>& prototypes, const MarginConfig& cfg,
                                   const ClassRegistry& registry, S* grad_f = nullptr,
                                   Tensor<S>* grad_prototypes = nullptr) {
  cfg.validate();
  require(registry.size() == prototypes.shape.at(0), ErrorCode::InvariantViolation,
          "registry size " + format_int(registry.size()) + " does not match head classes " +
              format_int(prototypes.shape.at(0)));
  const double m = registry.is_live(target) ? cfg.margin_live : cfg.margin_spoof;
  return detail::margin_softmax_term(f, target, prototypes, cfg.scale, m, 1.0, grad_f,
                                     grad_prototypes);
}

// Two-view batch: mean over pairs of the summed per-view margin losses.
// grad_view1/grad_view2 rows accumulate per pair; grad_prototypes accumulates
// across the whole batch.
template <class S>
inline double asym_recognition_loss(const std::vector<std::vector<S>>& view1,
                                    const std::vector<std::vector<S>>& view2,
                                    const std::vector<int>& targets,
                                    const Tensor<S>& prototypes, const MarginConfig& cfg,
                                    const ClassRegistry& registry,
                                    std::vector<std::vector<S>>* grad_view1 = nullptr,
                                    std::vector<std::vector<S>>* grad_view2 = nullptr,
                                    Tensor<S>* grad_prototypes = nullptr) {
  cfg.validate();
  const size_t n = targets.size();
  require(n > 0, ErrorCode::InvariantViolation, "recognition loss needs a non-empty batch");
  require(view1.size() == n && view2.size() == n, ErrorCode::InvariantViolation,
          "batch views must match target count");
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0;
  for (size_t i = 0; i < n; ++i) {
    const double m = registry.is_live(targets[i]) ? cfg.margin_live : cfg.margin_spoof;
    total += detail::margin_softmax_term(std::span<const S>(view1[i]), targets[i],
                                         prototypes, cfg.scale, m, inv_n,
                                         grad_view1 ? (*grad_view1)[i].data() : nullptr,
                                         grad_prototypes);
    total += detail::margin_softmax_term(std::span<const S>(view2[i]), targets[i],
                                         prototypes, cfg.scale, m, inv_n,
                                         grad_view2 ? (*grad_view2)[i].data() : nullptr,
                                         grad_prototypes);
  }
  return total;
}

// Mean L2 distance between the two views of each pair. For unit vectors this
// equals sqrt(2 - 2 cos(theta)) per pair, so it lives in [0, 2]. Both views
// receive gradient; the subgradient at view1 == view2 is zero.
template <class S>
inline double similarity_loss(const std::vector<std::vector<S>>& view1,
                              const std::vector<std::vector<S>>& view2,
                              std::vector<std::vector<S>>* grad_view1 = nullptr,
                              std::vector<std::vector<S>>* grad_view2 = nullptr) {
  const size_t n = view1.size();
  require(n > 0, ErrorCode::InvariantViolation, "similarity loss needs a non-empty batch");
  require(view2.size() == n, ErrorCode::InvariantViolation,
          "similarity loss: view counts differ");
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0;
  for (size_t i = 0; i < n; ++i) {
    require(view1[i].size() == view2[i].size(), ErrorCode::InvariantViolation,
            "similarity loss: embedding dims differ within pair " +
                format_int(static_cast<std::int64_t>(i)));
    double sq = 0;
    for (size_t j = 0; j < view1[i].size(); ++j) {
      const double diff = static_cast<double>(view1[i][j]) - static_cast<double>(view2[i][j]);
      sq += diff * diff;
    }
    const double dist = std::sqrt(sq);
    total += inv_n * dist;
    if (dist > 0 && (grad_view1 || grad_view2)) {
      const double g = inv_n / dist;
      for (size_t j = 0; j < view1[i].size(); ++j) {
        const double diff = static_cast<double>(view1[i][j]) - static_cast<double>(view2[i][j]);
        if (grad_view1) (*grad_view1)[i][j] += static_cast<S>(g * diff);
        if (grad_view2) (*grad_view2)[i][j] -= static_cast<S>(g * diff);
      }
    }
  }
  return total;
}

inline double total_loss(double recognition, double similarity, const LossWeights& w) {
  w.validate();
  require(std::isfinite(recognition) && std::isfinite(similarity),
          ErrorCode::InvariantViolation, "loss components must be finite");
  return w.recognition * recognition + w.similarity * similarity;
}

}  // namespace patchnet

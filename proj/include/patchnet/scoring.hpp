#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "patchnet/encoder.hpp"
#include "patchnet/error.hpp"
#include "patchnet/image.hpp"
#include "patchnet/patchgeom.hpp"

namespace patchnet {

// Test-time scoring. Logits are margin-free: z_j = s * (prototype_j . f).
// The live probability of a face is the mean over grid patches of the summed
// live-class softmax mass.

// Optional evaluation-time exclusion of classes; the softmax renormalizes
// over the surviving ones. Must leave at least one class on each side.
struct ClassMask {
  std::vector<int> excluded;

  std::vector<bool> keep_flags(const ClassRegistry& registry) const {
    std::vector<bool> keep(static_cast<size_t>(registry.size()), true);
    for (int idx : excluded) {
      require(idx >= 0 && idx < registry.size(), ErrorCode::InvariantViolation,
              "mask index " + format_int(idx) + " out of range");
      keep[static_cast<size_t>(idx)] = false;
    }
    int live = 0, spoof = 0;
    for (int i = 0; i < registry.size(); ++i)
      if (keep[static_cast<size_t>(i)]) (registry.is_live(i) ? live : spoof)++;
    require(live >= 1 && spoof >= 1, ErrorCode::InvariantViolation,
            "class mask must leave at least one live and one spoof class");
    return keep;
  }
};

// Caches the normalized prototypes and reuses forward buffers; one scorer
// per thread when scoring in parallel.
template <class S>
class Scorer {
 public:
  Scorer(const Model<S>& model, TestGrid grid, ClassMask mask = {})
      : model_(model), grid_(grid), protos_(model.head.normalized()),
        keep_(mask.keep_flags(model.registry)) {
    model.validate();
    grid_.validate();
    require(grid_.patch_size == model.encoder.spec.patch_size,
            ErrorCode::InvariantViolation,
            "grid patch size " + format_int(grid_.patch_size) +
                " does not match encoder input " +
                format_int(model.encoder.spec.patch_size));
  }

  const TestGrid& grid() const { return grid_; }

  // Summed live-class softmax mass for a single patch embedding.
  double patch_live_prob(const Tensor<S>& embedding) {
    const int n = model_.registry.size();
    const int d = model_.encoder.spec.embedding_dim;
    logits_.resize(static_cast<size_t>(n));
    size_t kept = 0;
    for (int j = 0; j < n; ++j) {
      if (!keep_[static_cast<size_t>(j)]) continue;
      const S* row = protos_.data() + static_cast<size_t>(j) * d;
      double cos = 0;
      for (int i = 0; i < d; ++i)
        cos += static_cast<double>(row[i]) * static_cast<double>(embedding[static_cast<size_t>(i)]);
      logits_[kept++] = model_.margins.scale * cos;
    }
    probs_.resize(kept);
    softmax(logits_.data(), kept, probs_.data());
    double live = 0;
    size_t slot = 0;
    for (int j = 0; j < n; ++j) {
      if (!keep_[static_cast<size_t>(j)]) continue;
      if (model_.registry.is_live(j)) live += probs_[slot];
      ++slot;
    }
    return live;
  }

  double patch_live_prob_at(const ImageBuffer& face, int cx, int cy) {
    const PatchView patch =
        crop_at_center(face, cx, cy, model_.encoder.spec.patch_size);
    input_ = model_.encoder.to_input(patch);
    const Tensor<S>& f = model_.encoder.forward(input_, tape_);
    return patch_live_prob(f);
  }

  // Mean live probability over the anchor grid.
  double live_prob(const ImageBuffer& face) {
    const auto centers = grid_.centers(face.width, face.height);
    double acc = 0;
    for (const auto& [cx, cy] : centers) acc += patch_live_prob_at(face, cx, cy);
    return acc / static_cast<double>(centers.size());
  }

  Tensor<S> embed(const ImageBuffer& face, int cx, int cy) {
    const PatchView patch =
        crop_at_center(face, cx, cy, model_.encoder.spec.patch_size);
    input_ = model_.encoder.to_input(patch);
    return model_.encoder.forward(input_, tape_);
  }

  // All grid-patch embeddings of a face, row-major grid order.
  std::vector<Tensor<S>> embed_grid(const ImageBuffer& face) {
    std::vector<Tensor<S>> out;
    for (const auto& [cx, cy] : grid_.centers(face.width, face.height))
      out.push_back(embed(face, cx, cy));
    return out;
  }

 private:
  const Model<S>& model_;
  TestGrid grid_;
  Tensor<S> protos_;
  std::vector<bool> keep_;
  std::vector<double> logits_;
  std::vector<double> probs_;
  Tensor<S> input_;
  EncoderTape<S> tape_;
};

template <class S>
inline double live_prob(const ImageBuffer& face, const Model<S>& model,
                        const TestGrid& grid, ClassMask mask = {}) {
  Scorer<S> scorer(model, grid, mask);
  return scorer.live_prob(face);
}

// Dense sliding-center map of per-patch live probabilities.
struct ScoreMap {
  std::vector<int> xs, ys;         // center coordinates per axis
  std::vector<double> values;      // row-major, ys.size() x xs.size()

  double at(size_t ix, size_t iy) const { return values[iy * xs.size() + ix]; }
};

template <class S>
inline ScoreMap patch_score_map(const ImageBuffer& face, const Model<S>& model,
                                int stride, ClassMask mask = {}) {
  require(stride > 0, ErrorCode::InvariantViolation, "stride must be > 0");
  const int size = model.encoder.spec.patch_size;
  require(face.width >= size && face.height >= size, ErrorCode::InvariantViolation,
          "face smaller than the patch size");
  TestGrid grid{1, size};
  Scorer<S> scorer(model, grid, mask);
  ScoreMap map;
  for (int x = size / 2; x <= face.width - size + size / 2; x += stride) map.xs.push_back(x);
  for (int y = size / 2; y <= face.height - size + size / 2; y += stride) map.ys.push_back(y);
  map.values.reserve(map.xs.size() * map.ys.size());
  for (int y : map.ys)
    for (int x : map.xs) map.values.push_back(scorer.patch_live_prob_at(face, x, y));
  return map;
}

// PGM rendering plus a text sidecar with the center coordinates and exact
// values (9 significant digits).
inline void save_score_map(const ScoreMap& map, const std::string& path) {
  ImageBuffer img(static_cast<int>(map.xs.size()), static_cast<int>(map.ys.size()), 1);
  for (size_t iy = 0; iy < map.ys.size(); ++iy)
    for (size_t ix = 0; ix < map.xs.size(); ++ix)
      img.at(static_cast<int>(ix), static_cast<int>(iy)) = map.at(ix, iy);
  write_pnm(img, path);
  std::ofstream side(path + ".centers", std::ios::binary);
  require(side.good(), ErrorCode::MissingFile, "cannot write " + path + ".centers");
  side << "# center_x,center_y,live_prob\n";
  for (size_t iy = 0; iy < map.ys.size(); ++iy)
    for (size_t ix = 0; ix < map.xs.size(); ++ix)
      side << map.xs[ix] << ',' << map.ys[iy] << ','
           << format_double(map.at(ix, iy), 9) << '\n';
}

}  // namespace patchnet

#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "patchnet/encoder.hpp"
#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"
#include "patchnet/scoring.hpp"
#include "patchnet/taxonomy.hpp"

namespace patchnet {

// Applications on the learned embedding space: scoring against a handful of
// known-live reference embeddings, and ranking class prototypes by cosine
// similarity to a query.

struct ReferenceSet {
  std::vector<std::vector<double>> embeddings;  // unit-norm rows

  size_t count() const { return embeddings.size(); }

  void validate() const {
    require(!embeddings.empty(), ErrorCode::InvariantViolation,
            "reference set must be non-empty");
    for (const auto& e : embeddings) {
      require(e.size() == embeddings.front().size(), ErrorCode::InvariantViolation,
              "reference embeddings must share one dimension");
      double sq = 0;
      for (double v : e) sq += v * v;
      require(std::abs(std::sqrt(sq) - 1.0) <= 1e-3, ErrorCode::InvariantViolation,
              "reference embeddings must be unit-norm");
    }
  }

  // Text format: "dim count" header line, then one embedding per line with
  // 9-significant-digit components.
  void save(const std::string& path) const {
    validate();
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::MissingFile, "cannot write " + path);
    out << embeddings.front().size() << ' ' << embeddings.size() << '\n';
    for (const auto& e : embeddings) {
      for (size_t i = 0; i < e.size(); ++i)
        out << (i ? " " : "") << format_double(e[i], 9);
      out << '\n';
    }
  }

  static ReferenceSet load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::MissingFile, "cannot open " + path);
    size_t dim = 0, count = 0;
    in >> dim >> count;
    require(in.good() && dim > 0 && count > 0, ErrorCode::BadInput,
            path + ": bad reference header");
    ReferenceSet refs;
    refs.embeddings.assign(count, std::vector<double>(dim, 0.0));
    for (size_t r = 0; r < count; ++r)
      for (size_t i = 0; i < dim; ++i) {
        in >> refs.embeddings[r][i];
        require(!in.fail(), ErrorCode::BadInput, path + ": truncated embedding rows");
      }
    refs.validate();
    return refs;
  }
};

// Mean over the face's patch embeddings of the mean cosine similarity to all
// references. Higher means more live; range [-1, 1].
inline double fewshot_score(const std::vector<std::vector<double>>& patch_embeddings,
                            const ReferenceSet& refs) {
  refs.validate();
  require(!patch_embeddings.empty(), ErrorCode::InvariantViolation,
          "fewshot_score needs at least one patch embedding");
  double acc = 0;
  for (const auto& f : patch_embeddings) {
    require(f.size() == refs.embeddings.front().size(), ErrorCode::InvariantViolation,
            "embedding dimension does not match the reference set");
    double per_patch = 0;
    for (const auto& r : refs.embeddings) {
      double cos = 0;
      for (size_t i = 0; i < f.size(); ++i) cos += f[i] * r[i];
      per_patch += cos;
    }
    acc += per_patch / static_cast<double>(refs.count());
  }
  return acc / static_cast<double>(patch_embeddings.size());
}

struct RetrievalResult {
  int class_index = 0;
  PatchTypeLabel label;
  double similarity = 0.0;
};

// Classes ranked by descending cosine similarity between the query and each
// normalized prototype; ties break toward the lower class index.
template <class S>
inline std::vector<RetrievalResult> retrieve_patch_types(std::span<const double> query,
                                                         const ClassifierHead<S>& head,
                                                         const ClassRegistry& registry,
                                                         int top_k) {
  require(registry.size() == head.classes(), ErrorCode::InvariantViolation,
          "registry does not match head");
  require(top_k >= 1 && top_k <= registry.size(), ErrorCode::InvariantViolation,
          "top_k must lie in [1, " + format_int(registry.size()) + "], got " +
              format_int(top_k));
  double sq = 0;
  for (double v : query) sq += v * v;
  require(std::abs(std::sqrt(sq) - 1.0) <= 1e-3, ErrorCode::InvariantViolation,
          "query embedding must be unit-norm");

  const Tensor<S> protos = head.normalized();
  const int d = head.dim();
  require(static_cast<int>(query.size()) == d, ErrorCode::InvariantViolation,
          "query dimension does not match head");
  std::vector<RetrievalResult> ranked;
  for (int j = 0; j < registry.size(); ++j) {
    const S* row = protos.data() + static_cast<size_t>(j) * d;
    double cos = 0;
    for (int i = 0; i < d; ++i) cos += static_cast<double>(row[i]) * query[static_cast<size_t>(i)];
    ranked.push_back({j, registry.label(j), cos});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.class_index < b.class_index;
  });
  ranked.resize(static_cast<size_t>(top_k));
  return ranked;
}

// Live probability with evaluation-time class masking (softmax restricted to
// the surviving classes). An empty mask reproduces the unmasked scores
// exactly.
template <class S>
inline double masked_live_prob(const ImageBuffer& face, const Model<S>& model,
                               const TestGrid& grid, const std::vector<int>& exclude) {
  return live_prob(face, model, grid, ClassMask{exclude});
}

}  // namespace patchnet

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "patchnet/checkpoint.hpp"
#include "patchnet/encoder.hpp"
#include "patchnet/error.hpp"
#include "patchnet/image.hpp"
#include "patchnet/losses.hpp"
#include "patchnet/manifest.hpp"
#include "patchnet/parallel.hpp"
#include "patchnet/patchgeom.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/sgd.hpp"
#include "patchnet/taxonomy.hpp"

namespace patchnet {

struct TrainConfig {
  int epochs = 30;
  int batch_pairs = 64;
  SgdState sgd{0.002, 12, 0.9};  // desk-scale halving; the paper-scale value is 90
  MarginConfig margins;
  LossWeights weights;
  EncoderSpec encoder;
  double flip_probability = 0.5;
  double rotation_range_deg = 10.0;
  Precision precision = Precision::F32;
  std::uint64_t seed = 0;
  int threads = 1;

  AugmentationConfig augmentation() const {
    return AugmentationConfig{encoder.patch_size, flip_probability, rotation_range_deg};
  }

  void validate() const {
    require(epochs >= 1, ErrorCode::InvariantViolation, "epochs must be >= 1");
    require(batch_pairs >= 1, ErrorCode::InvariantViolation, "batch size must be >= 1");
    sgd.validate();
    margins.validate();
    weights.validate();
    encoder.validate();
    augmentation().validate();
  }

  KvMap to_kv() const {
    KvMap kv;
    kv.set_int("train.epochs", epochs);
    kv.set_int("train.batch_pairs", batch_pairs);
    kv.set_double("sgd.learning_rate", sgd.learning_rate);
    kv.set_int("sgd.halve_every", sgd.halve_every);
    kv.set_double("sgd.momentum", sgd.momentum);
    kv.set_double("margin.scale", margins.scale);
    kv.set_double("margin.live", margins.margin_live);
    kv.set_double("margin.spoof", margins.margin_spoof);
    kv.set_double("loss.alpha_recognition", weights.recognition);
    kv.set_double("loss.alpha_similarity", weights.similarity);
    kv.set("encoder.stages", encoder.stages_csv());
    kv.set_int("encoder.embedding_dim", encoder.embedding_dim);
    kv.set_int("encoder.patch_size", encoder.patch_size);
    kv.set_int("encoder.in_channels", encoder.in_channels);
    kv.set_double("augment.flip_probability", flip_probability);
    kv.set_double("augment.rotation_range_deg", rotation_range_deg);
    kv.set("train.precision", to_string(precision));
    kv.set_int("train.seed", static_cast<std::int64_t>(seed));
    return kv;
  }
};

struct TrainingSample {
  ImageBuffer image;
  int class_index = 0;
  std::string id;
  std::string device_id;
};

struct TrainingSet {
  std::vector<TrainingSample> samples;
  ClassRegistry registry;
};

// Collapses the fine-grained taxonomy to one live and one spoof class.
inline ClassRegistry binary_registry(const std::string& dataset_id = "BIN") {
  ClassRegistry reg;
  reg.register_class({dataset_id, "any", Liveness::Live, ""});
  reg.register_class({dataset_id, "any", Liveness::Spoof, "any"});
  return reg;
}

struct DatasetFilter {
  std::vector<std::string> exclude_devices;
  bool binary_classes = false;

  bool excluded(const std::string& device) const {
    return std::find(exclude_devices.begin(), exclude_devices.end(), device) !=
           exclude_devices.end();
  }
};

// TRAIN-split samples as an in-memory set; the registry is built from the
// samples that survive the filter, so held-out devices contribute no classes.
inline TrainingSet build_training_set(
    const Manifest& manifest, const DatasetFilter& filter,
    const std::function<ImageBuffer(const ManifestEntry&)>& load_image) {
  Manifest kept;
  for (const auto& e : manifest.entries)
    if (e.split == Split::Train && !filter.excluded(e.device_id))
      kept.entries.push_back(e);
  require(!kept.entries.empty(), ErrorCode::InvariantViolation,
          "no TRAIN samples remain after filtering");

  TrainingSet set;
  set.registry = filter.binary_classes ? binary_registry()
                                       : ClassRegistry::from_manifest(kept);
  for (const auto& e : kept.entries) {
    TrainingSample s;
    s.image = load_image(e);
    s.id = e.path;
    s.device_id = e.device_id;
    if (filter.binary_classes) {
      s.class_index = e.liveness == Liveness::Live ? 0 : 1;
    } else {
      s.class_index = set.registry.find(label_of(e));
    }
    set.samples.push_back(std::move(s));
  }
  return set;
}

inline TrainingSet load_training_set(const Manifest& manifest, const std::string& root,
                                     const DatasetFilter& filter) {
  namespace fs = std::filesystem;
  return build_training_set(manifest, filter, [&](const ManifestEntry& e) {
    return read_pnm((fs::path(root) / e.path).string());
  });
}

struct EpochLog {
  double recognition = 0.0;
  double similarity = 0.0;
  double total = 0.0;
};

template <class S>
struct TrainResult {
  Model<S> model;
  std::vector<EpochLog> epochs;
};

namespace detail {

// Per-pair workspace: gradients land in indexed slots and are reduced in
// slot order, so the result is independent of worker scheduling.
template <class S>
struct PairSlot {
  EncoderTape<S> tape1, tape2;
  Tensor<S> input1, input2;
  Tensor<S> d_emb1, d_emb2;
  std::vector<Tensor<S>> encoder_grads;
  Tensor<S> proto_grads;
  double recognition = 0.0;
  double similarity = 0.0;
};

}  // namespace detail

// Two-view training: per step, every pair contributes the asymmetric-margin
// recognition term on both views plus the view-similarity term; SGD updates
// encoder and head together. Deterministic for a fixed (set, cfg).
template <class S>
inline TrainResult<S> train(const TrainingSet& set, const TrainConfig& cfg) {
  cfg.validate();
  const int n_classes = set.registry.size();
  const int n_live = set.registry.live_count();
  require(n_live >= 1 && n_live < n_classes, ErrorCode::InvariantViolation,
          "registry is degenerate: needs at least one live and one spoof class");
  require(!set.samples.empty(), ErrorCode::InvariantViolation, "training set is empty");
  for (const auto& s : set.samples)
    require(s.class_index >= 0 && s.class_index < n_classes,
            ErrorCode::InvariantViolation, "sample " + s.id + " has no class index");

  TrainResult<S> result;
  Model<S>& model = result.model;
  model.encoder = Encoder<S>::init(cfg.encoder, derive_seed(cfg.seed, {10}));
  model.head = ClassifierHead<S>::init(n_classes, cfg.encoder.embedding_dim,
                                       derive_seed(cfg.seed, {11}));
  model.registry = set.registry;
  model.margins = cfg.margins;
  model.train_snapshot = cfg.to_kv();

  std::vector<Tensor<S>> velocity = model.encoder.zero_grads();
  velocity.emplace_back(Tensor<S>(model.head.weights.shape));
  std::vector<Tensor<S>> step_grads = model.encoder.zero_grads();
  step_grads.emplace_back(Tensor<S>(model.head.weights.shape));

  const AugmentationConfig aug = cfg.augmentation();
  const size_t n_samples = set.samples.size();
  const int batch = cfg.batch_pairs;

  std::vector<detail::PairSlot<S>> slots(
      static_cast<size_t>(std::min<size_t>(static_cast<size_t>(batch), n_samples)));
  for (auto& slot : slots) {
    slot.encoder_grads = model.encoder.zero_grads();
    slot.proto_grads = Tensor<S>(model.head.weights.shape);
    slot.d_emb1 = Tensor<S>({cfg.encoder.embedding_dim});
    slot.d_emb2 = Tensor<S>({cfg.encoder.embedding_dim});
  }

  std::vector<size_t> order(n_samples);
  for (size_t i = 0; i < n_samples; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, {20, static_cast<std::uint64_t>(epoch)}));
    for (size_t i = n_samples; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

    EpochLog log;
    size_t steps = 0;
    for (size_t start = 0; start < n_samples; start += static_cast<size_t>(batch)) {
      const size_t n_pairs = std::min(static_cast<size_t>(batch), n_samples - start);
      const double inv_n = 1.0 / static_cast<double>(n_pairs);
      const Tensor<S> protos = model.head.normalized();

      parallel_for(n_pairs, cfg.threads, [&](size_t p) {
        detail::PairSlot<S>& slot = slots[p];
        const TrainingSample& sample = set.samples[order[start + p]];
        const std::uint64_t pair_seed =
            derive_seed(cfg.seed, {40, static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(start + p)});
        auto [v1, v2] = two_views(sample.image, aug, pair_seed, sample.id);
        slot.input1 = model.encoder.to_input(v1);
        slot.input2 = model.encoder.to_input(v2);
        const Tensor<S>& f1 = model.encoder.forward(slot.input1, slot.tape1);
        const Tensor<S>& f2 = model.encoder.forward(slot.input2, slot.tape2);

        for (auto& g : slot.encoder_grads) g.fill(S(0));
        slot.proto_grads.fill(S(0));
        slot.d_emb1.fill(S(0));
        slot.d_emb2.fill(S(0));

        const double m = set.registry.is_live(sample.class_index)
                             ? cfg.margins.margin_live
                             : cfg.margins.margin_spoof;
        const double w_rec = cfg.weights.recognition * inv_n;
        if (cfg.weights.recognition > 0) {
          const double l1 = detail::margin_softmax_term(
              std::span<const S>(f1.v), sample.class_index, protos, cfg.margins.scale,
              m, w_rec, slot.d_emb1.data(), &slot.proto_grads);
          const double l2 = detail::margin_softmax_term(
              std::span<const S>(f2.v), sample.class_index, protos, cfg.margins.scale,
              m, w_rec, slot.d_emb2.data(), &slot.proto_grads);
          slot.recognition = (l1 + l2) / w_rec;
        } else {
          slot.recognition =
              detail::margin_softmax_term(std::span<const S>(f1.v), sample.class_index,
                                          protos, cfg.margins.scale, m, 1.0,
                                          static_cast<S*>(nullptr),
                                          static_cast<Tensor<S>*>(nullptr)) +
              detail::margin_softmax_term(std::span<const S>(f2.v), sample.class_index,
                                          protos, cfg.margins.scale, m, 1.0,
                                          static_cast<S*>(nullptr),
                                          static_cast<Tensor<S>*>(nullptr));
        }

        double sq = 0;
        for (int i = 0; i < cfg.encoder.embedding_dim; ++i) {
          const double diff = static_cast<double>(f1[static_cast<size_t>(i)]) -
                              static_cast<double>(f2[static_cast<size_t>(i)]);
          sq += diff * diff;
        }
        const double dist = std::sqrt(sq);
        slot.similarity = dist;
        if (dist > 0 && cfg.weights.similarity > 0) {
          const double g = cfg.weights.similarity * inv_n / dist;
          for (int i = 0; i < cfg.encoder.embedding_dim; ++i) {
            const S diff = f1[static_cast<size_t>(i)] - f2[static_cast<size_t>(i)];
            slot.d_emb1[static_cast<size_t>(i)] += static_cast<S>(g) * diff;
            slot.d_emb2[static_cast<size_t>(i)] -= static_cast<S>(g) * diff;
          }
        }

        model.encoder.backward(slot.tape1, slot.d_emb1, slot.encoder_grads);
        model.encoder.backward(slot.tape2, slot.d_emb2, slot.encoder_grads);
      });

      for (auto& g : step_grads) g.fill(S(0));
      double batch_rec = 0, batch_sim = 0;
      for (size_t p = 0; p < n_pairs; ++p) {
        const detail::PairSlot<S>& slot = slots[p];
        for (size_t t = 0; t < slot.encoder_grads.size(); ++t)
          for (size_t i = 0; i < slot.encoder_grads[t].size(); ++i)
            step_grads[t].v[i] += slot.encoder_grads[t].v[i];
        batch_rec += slot.recognition * inv_n;
        batch_sim += slot.similarity * inv_n;
      }
      Tensor<S> proto_grad_sum(model.head.weights.shape);
      for (size_t p = 0; p < n_pairs; ++p)
        for (size_t i = 0; i < proto_grad_sum.size(); ++i)
          proto_grad_sum.v[i] += slots[p].proto_grads.v[i];
      model.head.backward_through_normalization(proto_grad_sum, step_grads.back());

      for (size_t t = 0; t < model.encoder.params.size(); ++t)
        sgd_step<S>(std::span<S>(model.encoder.params[t].v),
                    std::span<const S>(step_grads[t].v), std::span<S>(velocity[t].v),
                    cfg.sgd, epoch);
      sgd_step<S>(std::span<S>(model.head.weights.v),
                  std::span<const S>(step_grads.back().v),
                  std::span<S>(velocity.back().v), cfg.sgd, epoch);

      log.recognition += batch_rec;
      log.similarity += batch_sim;
      ++steps;
    }
    log.recognition /= static_cast<double>(steps);
    log.similarity /= static_cast<double>(steps);
    log.total = total_loss(log.recognition, log.similarity, cfg.weights);
    result.epochs.push_back(log);
  }

  // The stored f32 payload is the parameter record; align the in-memory
  // model with it so save -> load preserves outputs bit-exactly.
  quantize_to_storage(model);
  return result;
}

}  // namespace patchnet

#pragma once

#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/losses.hpp"
#include "patchnet/nn.hpp"
#include "patchnet/patchgeom.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/taxonomy.hpp"
#include "patchnet/tensor.hpp"

namespace patchnet {

// Small strided CNN: per stage a 3x3 stride-2 convolution + ReLU, then a
// global average pool, a dense projection and L2 normalization onto the
// unit hypersphere.
struct EncoderSpec {
  std::vector<int> stage_channels = {16, 32, 64, 128};
  int embedding_dim = 128;
  int patch_size = 160;
  int in_channels = 1;

  void validate() const {
    require(!stage_channels.empty(), ErrorCode::InvariantViolation,
            "encoder needs at least one stage");
    for (int c : stage_channels)
      require(c > 0, ErrorCode::InvariantViolation, "stage channels must be positive");
    require(embedding_dim >= 2, ErrorCode::InvariantViolation, "embedding_dim must be >= 2");
    require(patch_size > 0, ErrorCode::InvariantViolation, "patch_size must be > 0");
    require(in_channels == 1 || in_channels == 3, ErrorCode::InvariantViolation,
            "in_channels must be 1 or 3");
    int extent = patch_size;
    for (size_t i = 0; i < stage_channels.size(); ++i) extent = (extent - 1) / 2 + 1;
    require(extent >= 1, ErrorCode::InvariantViolation, "too many stages for patch size");
  }

  std::vector<Conv2dShape> conv_shapes() const {
    std::vector<Conv2dShape> shapes;
    int h = patch_size, w = patch_size, c = in_channels;
    for (int oc : stage_channels) {
      Conv2dShape sh;
      sh.in_c = c;
      sh.in_h = h;
      sh.in_w = w;
      sh.out_c = oc;
      shapes.push_back(sh);
      h = sh.out_h();
      w = sh.out_w();
      c = oc;
    }
    return shapes;
  }

  std::string stages_csv() const {
    std::string s;
    for (size_t i = 0; i < stage_channels.size(); ++i)
      s += (i ? "," : "") + format_int(stage_channels[i]);
    return s;
  }

  static std::vector<int> parse_stages_csv(const std::string& csv) {
    std::vector<int> stages;
    for (const std::string& tok : split(csv, ',')) {
      const std::string t(trim(tok));
      require(!t.empty(), ErrorCode::BadInput, "empty stage entry in '" + csv + "'");
      stages.push_back(static_cast<int>(KvMap::parse("v = " + t).get_int("v")));
    }
    return stages;
  }

  bool operator==(const EncoderSpec& o) const {
    return stage_channels == o.stage_channels && embedding_dim == o.embedding_dim &&
           patch_size == o.patch_size && in_channels == o.in_channels;
  }
};

// Per-forward activation storage, reused across calls by one worker.
template <class S>
struct EncoderTape {
  std::vector<Tensor<S>> inputs;    // input of each conv stage
  std::vector<std::vector<S>> cols; // im2col scratch per stage
  std::vector<Tensor<S>> pre;      // conv pre-activations
  std::vector<S> last_act;          // ReLU output feeding the pool
  Tensor<S> pooled;
  Tensor<S> feature;   // dense output, pre-normalization
  Tensor<S> embedding; // unit-norm
  S feature_norm = S(0);
};

template <class S>
class Encoder {
 public:
  EncoderSpec spec;
  // Tensor order: conv_w/conv_b per stage, then dense_w [d x C], dense_b [d].
  std::vector<Tensor<S>> params;

  static Encoder init(const EncoderSpec& spec, std::uint64_t seed) {
    spec.validate();
    Encoder enc;
    enc.spec = spec;
    const auto shapes = spec.conv_shapes();
    int tensor_index = 0;
    for (const auto& sh : shapes) {
      Tensor<S> w({sh.out_c, sh.in_c, sh.kernel, sh.kernel});
      const double bound = std::sqrt(6.0 / (sh.in_c * sh.kernel * sh.kernel));
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(tensor_index)}));
      for (auto& v : w.v) v = static_cast<S>(rng.uniform(-bound, bound));
      enc.params.push_back(std::move(w));
      enc.params.emplace_back(Tensor<S>({sh.out_c}));
      tensor_index += 2;
    }
    const int c_last = spec.stage_channels.back();
    Tensor<S> dw({spec.embedding_dim, c_last});
    const double bound = std::sqrt(6.0 / c_last);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(tensor_index)}));
    for (auto& v : dw.v) v = static_cast<S>(rng.uniform(-bound, bound));
    enc.params.push_back(std::move(dw));
    enc.params.emplace_back(Tensor<S>({spec.embedding_dim}));
    return enc;
  }

  std::vector<Tensor<S>> zero_grads() const {
    std::vector<Tensor<S>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(Tensor<S>(p.shape));
    return grads;
  }

  // Patch pixels (HWC in [0,1]) to the CHW input plane layout, standardized
  // to zero mean / unit variance per patch. Standardization decouples the
  // texture content from global brightness, which the capture chain (gamma,
  // exposure) owns.
  Tensor<S> to_input(const PatchView& patch) const {
    require(patch.size == spec.patch_size && patch.channels == spec.in_channels,
            ErrorCode::InvariantViolation,
            "patch " + format_int(patch.size) + "x" + format_int(patch.size) + "x" +
                format_int(patch.channels) + " does not match encoder input " +
                format_int(spec.patch_size) + "x" + format_int(spec.patch_size) + "x" +
                format_int(spec.in_channels));
    Tensor<S> x({spec.in_channels, spec.patch_size, spec.patch_size});
    const size_t plane = static_cast<size_t>(spec.patch_size) * spec.patch_size;
    double mean = 0;
    for (double v : patch.pixels) mean += v;
    mean /= static_cast<double>(patch.pixels.size());
    double var = 0;
    for (double v : patch.pixels) var += (v - mean) * (v - mean);
    var /= static_cast<double>(patch.pixels.size());
    const double inv_std = 1.0 / std::sqrt(var + 1e-8);
    for (int c = 0; c < spec.in_channels; ++c)
      for (size_t i = 0; i < plane; ++i)
        x.v[c * plane + i] =
            static_cast<S>((patch.pixels[i * spec.in_channels + c] - mean) * inv_std);
    return x;
  }

  // Unit-norm embedding; the tape keeps everything backward() needs.
  const Tensor<S>& forward(const Tensor<S>& input, EncoderTape<S>& tape) const {
    const auto shapes = spec.conv_shapes();
    require(input.size() == shapes.front().in_size(), ErrorCode::InvariantViolation,
            "encoder input size mismatch: got " + input.shape_str());
    tape.inputs.resize(shapes.size());
    tape.cols.resize(shapes.size());
    tape.pre.resize(shapes.size());

    tape.inputs[0] = input;
    for (size_t i = 0; i < shapes.size(); ++i) {
      const auto& sh = shapes[i];
      tape.cols[i].resize(static_cast<size_t>(sh.col_rows()) * sh.col_cols());
      Tensor<S>& pre = tape.pre[i];
      if (pre.shape != std::vector<int>{sh.out_c, sh.out_h(), sh.out_w()})
        pre = Tensor<S>({sh.out_c, sh.out_h(), sh.out_w()});
      conv2d_forward(tape.inputs[i].data(), params[2 * i].data(), params[2 * i + 1].data(),
                     sh, tape.cols[i].data(), pre.data());
      if (i + 1 < shapes.size()) {
        Tensor<S>& next = tape.inputs[i + 1];
        if (next.shape != pre.shape) next = Tensor<S>(pre.shape);
        relu_forward(pre.data(), pre.size(), next.data());
      }
    }

    const auto& last = shapes.back();
    if (tape.pooled.shape != std::vector<int>{last.out_c})
      tape.pooled = Tensor<S>({last.out_c});
    // ReLU on the last stage feeds the pool directly.
    tape.last_act.resize(tape.pre.back().size());
    relu_forward(tape.pre.back().data(), tape.pre.back().size(), tape.last_act.data());
    gap_forward(tape.last_act.data(), last.out_c, last.out_h(), last.out_w(),
                tape.pooled.data());

    if (tape.feature.shape != std::vector<int>{spec.embedding_dim})
      tape.feature = Tensor<S>({spec.embedding_dim});
    const auto& dw = params[params.size() - 2];
    const auto& db = params[params.size() - 1];
    dense_forward(dw.data(), db.data(), tape.pooled.data(), spec.embedding_dim,
                  last.out_c, tape.feature.data());

    if (tape.embedding.shape != std::vector<int>{spec.embedding_dim})
      tape.embedding = Tensor<S>({spec.embedding_dim});
    tape.feature_norm =
        l2_normalize(tape.feature.data(), tape.feature.size(), tape.embedding.data());
    return tape.embedding;
  }

  // Accumulates parameter gradients for d(loss)/d(embedding).
  void backward(const EncoderTape<S>& tape, const Tensor<S>& d_embedding,
                std::vector<Tensor<S>>& grads) const {
    const auto shapes = spec.conv_shapes();
    require(grads.size() == params.size(), ErrorCode::InvariantViolation,
            "gradient buffer count mismatch");

    Tensor<S> d_feature({spec.embedding_dim});
    l2_normalize_backward(tape.embedding.data(), tape.feature_norm, d_embedding.data(),
                          d_embedding.size(), d_feature.data());

    const auto& last = shapes.back();
    Tensor<S> d_pooled({last.out_c});
    const auto& dw = params[params.size() - 2];
    dense_backward(dw.data(), tape.pooled.data(), d_feature.data(), spec.embedding_dim,
                   last.out_c, d_pooled.data(), grads[params.size() - 2].data(),
                   grads[params.size() - 1].data());

    Tensor<S> d_act({last.out_c, last.out_h(), last.out_w()});
    gap_backward(d_pooled.data(), last.out_c, last.out_h(), last.out_w(), d_act.data());

    std::vector<S> dcols;
    Tensor<S> d_pre;
    for (size_t i = shapes.size(); i-- > 0;) {
      const auto& sh = shapes[i];
      if (d_pre.shape != tape.pre[i].shape) d_pre = Tensor<S>(tape.pre[i].shape);
      relu_backward(tape.pre[i].data(), d_act.data(), tape.pre[i].size(), d_pre.data());
      dcols.resize(static_cast<size_t>(sh.col_rows()) * sh.col_cols());
      if (i > 0) {
        if (d_act.shape != tape.inputs[i].shape) d_act = Tensor<S>(tape.inputs[i].shape);
        d_act.fill(S(0));
        conv2d_backward(params[2 * i].data(), d_pre.data(), tape.cols[i].data(), sh,
                        dcols.data(), d_act.data(), grads[2 * i].data(),
                        grads[2 * i + 1].data());
      } else {
        conv2d_backward(params[2 * i].data(), d_pre.data(), tape.cols[i].data(), sh,
                        dcols.data(), static_cast<S*>(nullptr), grads[2 * i].data(),
                        grads[2 * i + 1].data());
      }
    }
  }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> names;
    for (size_t i = 0; i < spec.stage_channels.size(); ++i) {
      names.push_back("conv" + format_int(static_cast<std::int64_t>(i)) + ".weight");
      names.push_back("conv" + format_int(static_cast<std::int64_t>(i)) + ".bias");
    }
    names.push_back("dense.weight");
    names.push_back("dense.bias");
    return names;
  }
};

// A trained artifact: encoder, classification head, the class registry it
// was trained against, and the margins used.
template <class S>
struct Model {
  Encoder<S> encoder;
  ClassifierHead<S> head;
  ClassRegistry registry;
  MarginConfig margins;
  KvMap train_snapshot;  // training configuration of record

  void validate() const {
    encoder.spec.validate();
    margins.validate();
    require(head.classes() == registry.size(), ErrorCode::InvariantViolation,
            "head classes " + format_int(head.classes()) + " vs registry " +
                format_int(registry.size()));
    require(head.dim() == encoder.spec.embedding_dim, ErrorCode::InvariantViolation,
            "head dim does not match encoder embedding dim");
  }
};

}  // namespace patchnet

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "patchnet/encoder.hpp"
#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"
#include "patchnet/losses.hpp"
#include "patchnet/taxonomy.hpp"

namespace patchnet {

// Checkpoint layout: "PATCHNET" magic, u32 format version, u64 header
// length, canonical key-value header text (encoder spec, margins, registry,
// tensor manifest, training snapshot), raw little-endian f32 tensor payloads
// in header order, and a trailing FNV-1a 64 checksum of everything prior.
// The f32 payload is the parameter precision of record: models are quantized
// through f32 when saved, so save -> load is an exact round trip.

namespace detail {

constexpr char kCheckpointMagic[8] = {'P', 'A', 'T', 'C', 'H', 'N', 'E', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a64(const char* data, size_t n,
                             std::uint64_t h = 14695981039346656037ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
inline void append_raw(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
inline T read_raw(const std::string& data, size_t* offset, const std::string& path) {
  require(*offset + sizeof(T) <= data.size(), ErrorCode::CorruptCheckpoint,
          path + ": truncated checkpoint");
  T value;
  std::memcpy(&value, data.data() + *offset, sizeof(T));
  *offset += sizeof(T);
  return value;
}

inline std::string shape_csv(const std::vector<int>& shape) {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + format_int(shape[i]);
  return s;
}

inline std::vector<int> parse_shape_csv(const std::string& csv, const std::string& ctx) {
  std::vector<int> shape;
  for (const std::string& tok : split(csv, 'x')) {
    const std::string t(trim(tok));
    require(!t.empty(), ErrorCode::BadInput, ctx + ": bad shape '" + csv + "'");
    int v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    require(res.ec == std::errc() && v > 0, ErrorCode::BadInput,
            ctx + ": bad shape '" + csv + "'");
    shape.push_back(v);
  }
  return shape;
}

}  // namespace detail

// Rounds every parameter through f32. Applied at the end of training so the
// in-memory model matches its checkpoint bit-for-bit.
template <class S>
inline void quantize_to_storage(Model<S>& model) {
  for (auto& t : model.encoder.params)
    for (auto& v : t.v) v = static_cast<S>(static_cast<float>(v));
  for (auto& v : model.head.weights.v) v = static_cast<S>(static_cast<float>(v));
}

template <class S>
inline void save_checkpoint(const Model<S>& model, const std::string& path) {
  model.validate();
  std::vector<const Tensor<S>*> tensors;
  std::vector<std::string> names = model.encoder.tensor_names();
  for (const auto& t : model.encoder.params) tensors.push_back(&t);
  tensors.push_back(&model.head.weights);
  names.push_back("head.weight");

  KvMap header;
  header.set("encoder.stages", model.encoder.spec.stages_csv());
  header.set_int("encoder.embedding_dim", model.encoder.spec.embedding_dim);
  header.set_int("encoder.patch_size", model.encoder.spec.patch_size);
  header.set_int("encoder.in_channels", model.encoder.spec.in_channels);
  header.set_double("margin.scale", model.margins.scale);
  header.set_double("margin.live", model.margins.margin_live);
  header.set_double("margin.spoof", model.margins.margin_spoof);
  header.set_int("registry.count", model.registry.size());
  for (int i = 0; i < model.registry.size(); ++i) {
    const auto& l = model.registry.label(i);
    header.set("registry.class." + format_int(i),
               l.dataset_id + "," + l.device_id + "," + to_string(l.liveness) + "," +
                   l.medium_id);
  }
  header.set_int("tensor.count", static_cast<std::int64_t>(tensors.size()));
  for (size_t i = 0; i < tensors.size(); ++i) {
    header.set("tensor." + format_int(static_cast<std::int64_t>(i)) + ".name", names[i]);
    header.set("tensor." + format_int(static_cast<std::int64_t>(i)) + ".shape",
               detail::shape_csv(tensors[i]->shape));
  }
  for (const auto& [k, v] : model.train_snapshot.entries()) header.set("train." + k, v);

  std::string blob;
  blob.append(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::append_raw(blob, detail::kCheckpointVersion);
  const std::string header_text = header.serialize();
  detail::append_raw(blob, static_cast<std::uint64_t>(header_text.size()));
  blob += header_text;
  for (const auto* t : tensors)
    for (const S v : t->v) detail::append_raw(blob, static_cast<float>(v));
  detail::append_raw(blob, detail::fnv1a64(blob.data(), blob.size()));

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::MissingFile, "cannot write " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  require(out.good(), ErrorCode::MissingFile, "short write to " + path);
}

// Loads a checkpoint; when `expected` is given the stored encoder spec must
// match it (the first differing tensor is named in the error).
template <class S>
inline Model<S> load_checkpoint(const std::string& path,
                                const EncoderSpec* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingFile, "cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  require(blob.size() >= sizeof(detail::kCheckpointMagic) + sizeof(std::uint32_t) +
                             2 * sizeof(std::uint64_t),
          ErrorCode::CorruptCheckpoint, path + ": truncated checkpoint");
  require(std::memcmp(blob.data(), detail::kCheckpointMagic,
                      sizeof(detail::kCheckpointMagic)) == 0,
          ErrorCode::BadInput, path + ": not a checkpoint file");

  std::uint64_t trailer;
  std::memcpy(&trailer, blob.data() + blob.size() - sizeof(std::uint64_t),
              sizeof(std::uint64_t));
  const std::uint64_t computed =
      detail::fnv1a64(blob.data(), blob.size() - sizeof(std::uint64_t));
  require(trailer == computed, ErrorCode::CorruptCheckpoint,
          path + ": checksum mismatch (corrupted checkpoint)");

  size_t offset = sizeof(detail::kCheckpointMagic);
  const auto version = detail::read_raw<std::uint32_t>(blob, &offset, path);
  require(version == detail::kCheckpointVersion, ErrorCode::VersionMismatch,
          path + ": unsupported checkpoint version " + format_int(version));
  const auto header_len = detail::read_raw<std::uint64_t>(blob, &offset, path);
  require(offset + header_len <= blob.size(), ErrorCode::CorruptCheckpoint,
          path + ": truncated header");
  const KvMap header = KvMap::parse(blob.substr(offset, header_len), path);
  offset += header_len;

  Model<S> model;
  model.encoder.spec.stage_channels =
      EncoderSpec::parse_stages_csv(header.get("encoder.stages"));
  model.encoder.spec.embedding_dim = static_cast<int>(header.get_int("encoder.embedding_dim"));
  model.encoder.spec.patch_size = static_cast<int>(header.get_int("encoder.patch_size"));
  model.encoder.spec.in_channels = static_cast<int>(header.get_int("encoder.in_channels"));
  model.encoder.spec.validate();
  if (expected)
    require(model.encoder.spec == *expected, ErrorCode::InvariantViolation,
            path + ": checkpoint encoder spec (stages " +
                model.encoder.spec.stages_csv() + ", dim " +
                format_int(model.encoder.spec.embedding_dim) +
                ") does not match the requested spec");

  model.margins.scale = header.get_double("margin.scale");
  model.margins.margin_live = header.get_double("margin.live");
  model.margins.margin_spoof = header.get_double("margin.spoof");

  const int n_classes = static_cast<int>(header.get_int("registry.count"));
  std::string registry_text;
  for (int i = 0; i < n_classes; ++i)
    registry_text += header.get("registry.class." + format_int(i)) + "\n";
  model.registry = ClassRegistry::parse(registry_text, path);

  for (const auto& [k, v] : header.entries())
    if (k.rfind("train.", 0) == 0) model.train_snapshot.set(k.substr(6), v);

  // Expected tensor shapes from the spec itself; header shapes must agree.
  Encoder<S> ref = Encoder<S>::init(model.encoder.spec, 0);
  std::vector<std::vector<int>> expected_shapes;
  for (const auto& t : ref.params) expected_shapes.push_back(t.shape);
  expected_shapes.push_back({n_classes, model.encoder.spec.embedding_dim});
  std::vector<std::string> expected_names = ref.tensor_names();
  expected_names.push_back("head.weight");

  const auto tensor_count = header.get_int("tensor.count");
  require(tensor_count == static_cast<std::int64_t>(expected_shapes.size()),
          ErrorCode::InvariantViolation,
          path + ": tensor count " + format_int(tensor_count) + " does not match spec");

  std::vector<Tensor<S>> loaded;
  for (size_t i = 0; i < expected_shapes.size(); ++i) {
    const std::string idx = format_int(static_cast<std::int64_t>(i));
    const std::string name = header.get("tensor." + idx + ".name");
    const auto shape = detail::parse_shape_csv(header.get("tensor." + idx + ".shape"), path);
    require(name == expected_names[i] && shape == expected_shapes[i],
            ErrorCode::InvariantViolation,
            path + ": tensor '" + name + "' has shape " + detail::shape_csv(shape) +
                ", expected '" + expected_names[i] + "' " +
                detail::shape_csv(expected_shapes[i]));
    Tensor<S> t(shape);
    for (auto& v : t.v)
      v = static_cast<S>(detail::read_raw<float>(blob, &offset, path));
    loaded.push_back(std::move(t));
  }
  require(offset + sizeof(std::uint64_t) == blob.size(), ErrorCode::CorruptCheckpoint,
          path + ": trailing bytes after payload");

  model.head.weights = std::move(loaded.back());
  loaded.pop_back();
  model.encoder.params = std::move(loaded);
  model.validate();
  return model;
}

}  // namespace patchnet

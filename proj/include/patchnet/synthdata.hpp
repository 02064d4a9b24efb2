#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/image.hpp"
#include "patchnet/kv.hpp"
#include "patchnet/manifest.hpp"
#include "patchnet/parallel.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/taxonomy.hpp"

namespace patchnet {

// Synthetic capture simulator. Stands in for licensed face datasets: each
// image is a smooth base texture, optionally carrying a presentation-medium
// artifact (halftone dots or a screen grid with moire), pushed through a
// per-device degradation chain (gamma, blur, sensor noise, blockiness).
// Live and spoof images of the same device share the identical device chain,
// so any learnable difference is material-induced.

struct DeviceProfile {
  std::string id;
  double blur_sigma = 0.0;      // pixels
  double noise_std = 0.0;       // intensity units in [0,1]
  double block_strength = 0.0;  // 0 = off, 1 = full 8x8 DC quantization
  double gamma = 1.0;

  void validate() const {
    require(!id.empty(), ErrorCode::InvariantViolation, "device id must be non-empty");
    require(blur_sigma >= 0 && noise_std >= 0 && block_strength >= 0 &&
                block_strength <= 1 && gamma > 0,
            ErrorCode::InvariantViolation, "device parameters out of range for " + id);
  }
};

enum class MaterialKind { LiveSkinLike, PrintHalftone, ScreenGrid };

inline std::string to_string(MaterialKind k) {
  switch (k) {
    case MaterialKind::LiveSkinLike: return "live";
    case MaterialKind::PrintHalftone: return "print_halftone";
    default: return "screen_grid";
  }
}

inline MaterialKind parse_material_kind(const std::string& s) {
  if (s == "live") return MaterialKind::LiveSkinLike;
  if (s == "print_halftone") return MaterialKind::PrintHalftone;
  if (s == "screen_grid") return MaterialKind::ScreenGrid;
  fail(ErrorCode::BadInput, "unknown material kind: " + s);
}

struct MaterialProfile {
  std::string id;
  MaterialKind kind = MaterialKind::LiveSkinLike;
  double pitch = 4.0;      // lattice / grating pitch in px (spoof kinds)
  double moire_deg = 5.0;  // angle between the two gratings (screen only)

  bool is_live() const { return kind == MaterialKind::LiveSkinLike; }

  void validate() const {
    require(!id.empty(), ErrorCode::InvariantViolation, "material id must be non-empty");
    if (!is_live())
      require(pitch > 0, ErrorCode::InvariantViolation,
              "material " + id + " needs pitch > 0");
  }
};

struct CorpusSpec {
  std::string dataset_id = "SYN";
  std::vector<DeviceProfile> devices;
  std::vector<MaterialProfile> materials;
  int images_per_class = 20;
  int image_size = 480;
  int channels = 1;
  double split_train = 0.6, split_dev = 0.2, split_test = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    require(!devices.empty(), ErrorCode::InvariantViolation, "corpus needs >= 1 device");
    int live = 0, spoof = 0;
    for (const auto& m : materials) {
      m.validate();
      (m.is_live() ? live : spoof)++;
    }
    for (const auto& d : devices) d.validate();
    require(live >= 1 && spoof >= 1, ErrorCode::InvariantViolation,
            "corpus materials must include a live kind and at least one spoof kind");
    require(images_per_class >= 1, ErrorCode::InvariantViolation,
            "images_per_class must be >= 1");
    require(image_size >= 64, ErrorCode::InvariantViolation, "image size must be >= 64");
    require(channels == 1 || channels == 3, ErrorCode::InvariantViolation,
            "channels must be 1 or 3");
    require(std::abs(split_train + split_dev + split_test - 1.0) < 1e-9,
            ErrorCode::InvariantViolation, "split fractions must sum to 1");
    require(split_train >= 0 && split_dev >= 0 && split_test >= 0,
            ErrorCode::InvariantViolation, "split fractions must be non-negative");
  }

  KvMap to_kv() const {
    KvMap kv;
    kv.set("corpus.dataset_id", dataset_id);
    kv.set_int("corpus.images_per_class", images_per_class);
    kv.set_int("corpus.image_size", image_size);
    kv.set_int("corpus.channels", channels);
    kv.set_double("corpus.split.train", split_train);
    kv.set_double("corpus.split.dev", split_dev);
    kv.set_double("corpus.split.test", split_test);
    kv.set_int("corpus.seed", static_cast<std::int64_t>(seed));
    std::string dev_list, mat_list;
    for (const auto& d : devices) {
      dev_list += (dev_list.empty() ? "" : ",") + d.id;
      kv.set_double("device." + d.id + ".blur_sigma", d.blur_sigma);
      kv.set_double("device." + d.id + ".noise_std", d.noise_std);
      kv.set_double("device." + d.id + ".block_strength", d.block_strength);
      kv.set_double("device." + d.id + ".gamma", d.gamma);
    }
    for (const auto& m : materials) {
      mat_list += (mat_list.empty() ? "" : ",") + m.id;
      kv.set("material." + m.id + ".kind", to_string(m.kind));
      if (!m.is_live()) {
        kv.set_double("material." + m.id + ".pitch", m.pitch);
        if (m.kind == MaterialKind::ScreenGrid)
          kv.set_double("material." + m.id + ".moire_deg", m.moire_deg);
      }
    }
    kv.set("corpus.devices", dev_list);
    kv.set("corpus.materials", mat_list);
    return kv;
  }

  static CorpusSpec from_kv(const KvMap& kv) {
    CorpusSpec spec;
    spec.dataset_id = kv.get_or("corpus.dataset_id", "SYN");
    spec.images_per_class = static_cast<int>(kv.get_int_or("corpus.images_per_class", 20));
    spec.image_size = static_cast<int>(kv.get_int_or("corpus.image_size", 480));
    spec.channels = static_cast<int>(kv.get_int_or("corpus.channels", 1));
    spec.split_train = kv.get_double_or("corpus.split.train", 0.6);
    spec.split_dev = kv.get_double_or("corpus.split.dev", 0.2);
    spec.split_test = kv.get_double_or("corpus.split.test", 0.2);
    spec.seed = static_cast<std::uint64_t>(kv.get_int_or("corpus.seed", 0));
    for (const std::string& id : split(kv.get("corpus.devices"), ',')) {
      DeviceProfile d;
      d.id = std::string(trim(id));
      d.blur_sigma = kv.get_double_or("device." + d.id + ".blur_sigma", 0.0);
      d.noise_std = kv.get_double_or("device." + d.id + ".noise_std", 0.0);
      d.block_strength = kv.get_double_or("device." + d.id + ".block_strength", 0.0);
      d.gamma = kv.get_double_or("device." + d.id + ".gamma", 1.0);
      spec.devices.push_back(std::move(d));
    }
    for (const std::string& id : split(kv.get("corpus.materials"), ',')) {
      MaterialProfile m;
      m.id = std::string(trim(id));
      m.kind = parse_material_kind(kv.get_or("material." + m.id + ".kind", "live"));
      m.pitch = kv.get_double_or("material." + m.id + ".pitch", 4.0);
      m.moire_deg = kv.get_double_or("material." + m.id + ".moire_deg", 5.0);
      spec.materials.push_back(std::move(m));
    }
    spec.validate();
    return spec;
  }
};

// Smooth band-limited random field: a handful of low-frequency sinusoids
// plus box-smoothed noise, min-max mapped into [0.1, 0.9].
inline ImageBuffer generate_base_texture(int size, std::uint64_t seed, int channels = 1) {
  require(size >= 64, ErrorCode::InvariantViolation,
          "base texture size must be >= 64, got " + format_int(size));
  Rng rng(seed);
  ImageBuffer img(size, size, channels);

  constexpr int kWaves = 5;
  double fx[kWaves], fy[kWaves], ph[kWaves], amp[kWaves];
  for (int k = 0; k < kWaves; ++k) {
    const double freq = rng.uniform(0.5, 4.0) / size;  // wavelengths size/4..2*size
    const double theta = rng.uniform(0.0, 6.283185307179586);
    fx[k] = freq * std::cos(theta);
    fy[k] = freq * std::sin(theta);
    ph[k] = rng.uniform(0.0, 6.283185307179586);
    amp[k] = rng.uniform(0.5, 1.0);
  }

  std::vector<double> field(static_cast<size_t>(size) * size, 0.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = 0;
      for (int k = 0; k < kWaves; ++k)
        v += amp[k] * std::sin(6.283185307179586 * (fx[k] * x + fy[k] * y) + ph[k]);
      field[static_cast<size_t>(y) * size + x] = v;
    }

  // Smoothed noise floor so textures are not pure tones.
  std::vector<double> noise(field.size());
  for (double& v : noise) v = rng.normal();
  std::vector<double> tmp(field.size(), 0.0);
  constexpr int kR = 2;  // 5x5 box
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc = 0;
      int cnt = 0;
      for (int dy = -kR; dy <= kR; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= size) continue;
        for (int dx = -kR; dx <= kR; ++dx) {
          int xx = x + dx;
          if (xx < 0 || xx >= size) continue;
          acc += noise[static_cast<size_t>(yy) * size + xx];
          ++cnt;
        }
      }
      tmp[static_cast<size_t>(y) * size + x] = acc / cnt;
    }
  for (size_t i = 0; i < field.size(); ++i) field[i] += 0.8 * tmp[i];

  const auto [mn_it, mx_it] = std::minmax_element(field.begin(), field.end());
  const double mn = *mn_it, mx = *mx_it;
  const double scale = (mx > mn) ? 0.8 / (mx - mn) : 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = 0.1 + (field[static_cast<size_t>(y) * size + x] - mn) * scale;
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = v;
    }
  return img;
}

namespace detail {
// Dot-lattice and grating amplitudes; fixed here (not exposed per-profile)
// and sized so a small encoder separates materials reliably but not
// trivially once device degradation is applied.
constexpr double kHalftoneAmplitude = 0.30;
constexpr double kScreenAmplitude = 0.24;
constexpr double kScreenPitchRatio = 1.07;  // second grating slightly off-pitch
}  // namespace detail

inline ImageBuffer apply_material(const ImageBuffer& image, const MaterialProfile& mat) {
  mat.validate();
  if (mat.is_live()) return image;
  ImageBuffer out = image;
  const double two_pi = 6.283185307179586;
  if (mat.kind == MaterialKind::PrintHalftone) {
    // Axis-aligned dot lattice, amplitude-modulated by local darkness:
    // energy concentrates at spatial frequency 1/pitch on both axes.
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const double lattice =
            0.5 * (std::cos(two_pi * x / mat.pitch) + std::cos(two_pi * y / mat.pitch));
        for (int c = 0; c < out.channels; ++c) {
          const double v = out.at(x, y, c);
          out.at(x, y, c) = v + detail::kHalftoneAmplitude * (1.0 - v) * lattice;
        }
      }
  } else {
    // Two near-pitch gratings separated by the moire angle; their sum beats
    // at the difference frequency.
    const double half = mat.moire_deg * (3.14159265358979323846 / 180.0) / 2.0;
    const double c1 = std::cos(half), s1 = std::sin(half);
    const double p2 = mat.pitch * detail::kScreenPitchRatio;
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const double u1 = c1 * x + s1 * y;
        const double u2 = c1 * x - s1 * y;
        const double grid =
            0.5 * (std::cos(two_pi * u1 / mat.pitch) + std::cos(two_pi * u2 / p2));
        for (int c = 0; c < out.channels; ++c) {
          const double v = out.at(x, y, c);
          out.at(x, y, c) = v + detail::kScreenAmplitude * (0.3 + 0.7 * v) * grid;
        }
      }
  }
  out.clamp01();
  return out;
}

namespace detail {
inline void gaussian_blur_inplace(ImageBuffer& img, double sigma) {
  if (sigma <= 0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  ImageBuffer tmp = img;
  // Horizontal pass (clamped borders), then vertical.
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, img.width - 1);
          acc += kernel[static_cast<size_t>(i + radius)] * img.at(xx, y, c);
        }
        tmp.at(x, y, c) = acc;
      }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, img.height - 1);
          acc += kernel[static_cast<size_t>(i + radius)] * tmp.at(x, yy, c);
        }
        img.at(x, y, c) = acc;
      }
}

inline void block_quantize_inplace(ImageBuffer& img, double strength) {
  if (strength <= 0) return;
  constexpr int kBlock = 8;
  for (int by = 0; by < img.height; by += kBlock)
    for (int bx = 0; bx < img.width; bx += kBlock) {
      const int ye = std::min(by + kBlock, img.height);
      const int xe = std::min(bx + kBlock, img.width);
      for (int c = 0; c < img.channels; ++c) {
        double mean = 0;
        int cnt = 0;
        for (int y = by; y < ye; ++y)
          for (int x = bx; x < xe; ++x) {
            mean += img.at(x, y, c);
            ++cnt;
          }
        mean /= cnt;
        for (int y = by; y < ye; ++y)
          for (int x = bx; x < xe; ++x)
            img.at(x, y, c) = (1.0 - strength) * img.at(x, y, c) + strength * mean;
      }
    }
}
}  // namespace detail

// Device chain, in order: gamma response, Gaussian blur, additive Gaussian
// noise (clamped to [0,1]), block quantization. All-default parameters give
// the exact identity.
inline ImageBuffer apply_device(const ImageBuffer& image, const DeviceProfile& dev,
                                std::uint64_t seed) {
  dev.validate();
  ImageBuffer out = image;
  if (dev.gamma != 1.0)
    for (double& v : out.pixels) v = std::pow(std::max(v, 0.0), dev.gamma);
  detail::gaussian_blur_inplace(out, dev.blur_sigma);
  if (dev.noise_std > 0) {
    Rng rng(seed);
    for (double& v : out.pixels) v = std::clamp(v + dev.noise_std * rng.normal(), 0.0, 1.0);
  }
  detail::block_quantize_inplace(out, dev.block_strength);
  out.clamp01();
  return out;
}

struct CorpusSample {
  ManifestEntry entry;
  std::uint64_t texture_seed = 0;
  std::uint64_t device_seed = 0;
  int device_index = 0;
  int material_index = 0;
};

// Deterministic sample plan: image identities, labels, splits and per-image
// seeds, all derived from the spec alone. Rendering consumes only the
// per-sample seeds, so serial and parallel generation agree byte-for-byte.
inline std::vector<CorpusSample> plan_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<CorpusSample> plan;
  const std::string ext = spec.channels == 1 ? ".pgm" : ".ppm";
  for (size_t di = 0; di < spec.devices.size(); ++di) {
    for (size_t mi = 0; mi < spec.materials.size(); ++mi) {
      const auto& dev = spec.devices[di];
      const auto& mat = spec.materials[mi];
      // Seeded per-cell shuffle decides the split assignment.
      const int n = spec.images_per_class;
      std::vector<int> order(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
      Rng shuffle_rng(derive_seed(spec.seed, {3, di, mi}));
      for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)],
                  order[shuffle_rng.uniform_index(static_cast<std::uint64_t>(i + 1))]);
      const int n_train = static_cast<int>(std::floor(spec.split_train * n));
      const int n_dev = static_cast<int>(std::floor(spec.split_dev * n));
      std::vector<Split> split_of(static_cast<size_t>(n), Split::Test);
      for (int r = 0; r < n; ++r) {
        if (r < n_train)
          split_of[static_cast<size_t>(order[static_cast<size_t>(r)])] = Split::Train;
        else if (r < n_train + n_dev)
          split_of[static_cast<size_t>(order[static_cast<size_t>(r)])] = Split::Dev;
      }
      for (int i = 0; i < n; ++i) {
        CorpusSample s;
        char idx[16];
        std::snprintf(idx, sizeof(idx), "%03d", i);
        s.entry.path = "images/" + spec.dataset_id + "_" + dev.id + "_" + mat.id + "_" +
                       idx + ext;
        s.entry.dataset_id = spec.dataset_id;
        s.entry.device_id = dev.id;
        s.entry.liveness = mat.is_live() ? Liveness::Live : Liveness::Spoof;
        s.entry.medium_id = mat.is_live() ? "" : mat.id;
        s.entry.split = split_of[static_cast<size_t>(i)];
        s.texture_seed = derive_seed(spec.seed, {1, di, mi, static_cast<std::uint64_t>(i)});
        s.device_seed = derive_seed(spec.seed, {2, di, mi, static_cast<std::uint64_t>(i)});
        s.device_index = static_cast<int>(di);
        s.material_index = static_cast<int>(mi);
        plan.push_back(std::move(s));
      }
    }
  }
  return plan;
}

inline ImageBuffer render_sample(const CorpusSpec& spec, const CorpusSample& sample) {
  ImageBuffer base =
      generate_base_texture(spec.image_size, sample.texture_seed, spec.channels);
  ImageBuffer with_material = apply_material(
      base, spec.materials[static_cast<size_t>(sample.material_index)]);
  return apply_device(with_material,
                      spec.devices[static_cast<size_t>(sample.device_index)],
                      sample.device_seed);
}

struct GeneratedCorpus {
  Manifest manifest;
  ClassRegistry registry;
};

// Writes images/, manifest.txt and a canonical copy of the spec under
// out_dir. Rendering parallelizes over images; outputs are identical to a
// serial run.
inline GeneratedCorpus generate_corpus(const CorpusSpec& spec, const std::string& out_dir,
                                       int threads = 1) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  require(!ec, ErrorCode::MissingFile, "cannot create output directory " + out_dir);

  const std::vector<CorpusSample> plan = plan_corpus(spec);
  parallel_for(plan.size(), threads, [&](size_t i) {
    const ImageBuffer img = render_sample(spec, plan[i]);
    write_pnm(img, (fs::path(out_dir) / plan[i].entry.path).string());
  });

  GeneratedCorpus out;
  for (const auto& s : plan) out.manifest.entries.push_back(s.entry);
  out.manifest.save((fs::path(out_dir) / "manifest.txt").string());
  spec.to_kv().save((fs::path(out_dir) / "corpus.cfg").string());
  out.registry = ClassRegistry::from_manifest(out.manifest);
  return out;
}

}  // namespace patchnet

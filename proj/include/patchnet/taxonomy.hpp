#pragma once

#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/manifest.hpp"

namespace patchnet {

// A fine-grained patch-type class: one (capture device, presenting material)
// combination. Live labels carry an empty medium_id.
struct PatchTypeLabel {
  std::string dataset_id;
  std::string device_id;
  Liveness liveness = Liveness::Live;
  std::string medium_id;

  bool is_live() const { return liveness == Liveness::Live; }

  std::string name() const {
    // (Dataset)(Device)_(L|S)(Medium), e.g. "SYNcam_hi_L" / "SYNcam_hi_Sprint".
    return dataset_id + device_id + "_" + (is_live() ? "L" : "S") + medium_id;
  }

  auto key() const { return std::tie(dataset_id, device_id, liveness, medium_id); }
  bool operator==(const PatchTypeLabel& o) const { return key() == o.key(); }

  void validate() const {
    require(liveness == Liveness::Spoof || medium_id.empty(),
            ErrorCode::InvariantViolation,
            "live label " + name() + " must have an empty medium_id");
    require(!dataset_id.empty() && !device_id.empty(), ErrorCode::InvariantViolation,
            "label needs non-empty dataset_id and device_id");
  }
};

inline PatchTypeLabel label_of(const ManifestEntry& e) {
  return PatchTypeLabel{e.dataset_id, e.device_id, e.liveness, e.medium_id};
}

// Ordered class list partitioned into live and spoof sets. Indices are stable
// for the lifetime of a trained head; the registry is immutable after
// construction (mutating operations return a new registry).
class ClassRegistry {
 public:
  ClassRegistry() = default;

  int register_class(const PatchTypeLabel& label) {
    label.validate();
    for (size_t i = 0; i < classes_.size(); ++i) {
      require(!(classes_[i] == label), ErrorCode::InvariantViolation,
              "duplicate class " + label.name() + " (already index " +
                  format_int(static_cast<std::int64_t>(i)) + ")");
    }
    classes_.push_back(label);
    return static_cast<int>(classes_.size()) - 1;
  }

  // Distinct labels from the manifest, live classes first, then spoof,
  // each group in first-appearance order.
  static ClassRegistry from_manifest(const Manifest& manifest) {
    std::vector<PatchTypeLabel> live, spoof;
    auto seen = [](const std::vector<PatchTypeLabel>& v, const PatchTypeLabel& l) {
      return std::find(v.begin(), v.end(), l) != v.end();
    };
    for (const auto& e : manifest.entries) {
      PatchTypeLabel l = label_of(e);
      auto& group = l.is_live() ? live : spoof;
      if (!seen(group, l)) group.push_back(l);
    }
    require(!live.empty(), ErrorCode::InvariantViolation,
            "manifest defines no live classes; need at least one of each side");
    require(!spoof.empty(), ErrorCode::InvariantViolation,
            "manifest defines no spoof classes; need at least one of each side");
    ClassRegistry reg;
    for (const auto& l : live) reg.register_class(l);
    for (const auto& l : spoof) reg.register_class(l);
    return reg;
  }

  int size() const { return static_cast<int>(classes_.size()); }

  int live_count() const {
    int k = 0;
    for (const auto& c : classes_) k += c.is_live() ? 1 : 0;
    return k;
  }

  bool is_live(int index) const { return label(index).is_live(); }

  const PatchTypeLabel& label(int index) const {
    require(index >= 0 && index < size(), ErrorCode::InvariantViolation,
            "class index " + format_int(index) + " out of range [0, " +
                format_int(size()) + ")");
    return classes_[static_cast<size_t>(index)];
  }

  // Index of a label, or -1 if absent.
  int find(const PatchTypeLabel& l) const {
    for (size_t i = 0; i < classes_.size(); ++i)
      if (classes_[i] == l) return static_cast<int>(i);
    return -1;
  }

  std::vector<int> live_indices() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (is_live(i)) out.push_back(i);
    return out;
  }

  std::vector<int> spoof_indices() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (!is_live(i)) out.push_back(i);
    return out;
  }

  // index -> 0 (live) / 1 (spoof).
  std::vector<int> coarse_binary_view() const {
    std::vector<int> out(static_cast<size_t>(size()));
    for (int i = 0; i < size(); ++i) out[static_cast<size_t>(i)] = is_live(i) ? 0 : 1;
    return out;
  }

  // Moves the named live classes to the spoof set without renumbering, so a
  // trained head stays index-compatible. At least one live class must remain.
  ClassRegistry relabel_as_spoof(const std::vector<int>& indices) const {
    ClassRegistry out = *this;
    std::set<int> moved;
    for (int idx : indices) {
      require(idx >= 0 && idx < size(), ErrorCode::InvariantViolation,
              "relabel index " + format_int(idx) + " out of range");
      require(is_live(idx), ErrorCode::InvariantViolation,
              "relabel target " + label(idx).name() + " is not a live class");
      moved.insert(idx);
    }
    require(live_count() - static_cast<int>(moved.size()) >= 1,
            ErrorCode::InvariantViolation,
            "relabeling would leave no live classes");
    for (int idx : moved)
      out.classes_[static_cast<size_t>(idx)].liveness = Liveness::Spoof;
    for (int i = 0; i < out.size(); ++i)
      for (int j = i + 1; j < out.size(); ++j)
        require(!(out.classes_[static_cast<size_t>(i)] == out.classes_[static_cast<size_t>(j)]),
                ErrorCode::InvariantViolation,
                "relabel collides with existing class " +
                    out.classes_[static_cast<size_t>(j)].name());
    return out;
  }

  // One class per line: dataset,device,LIVE|SPOOF,medium. Deterministic.
  std::string serialize() const {
    std::ostringstream os;
    for (const auto& c : classes_) {
      os << c.dataset_id << ',' << c.device_id << ',' << to_string(c.liveness)
         << ',' << c.medium_id << '\n';
    }
    return os.str();
  }

  static ClassRegistry parse(std::string_view text, const std::string& origin = "<registry>") {
    ClassRegistry reg;
    size_t lineno = 0;
    for (const std::string& raw : split(text, '\n')) {
      ++lineno;
      std::string_view line = trim(raw);
      if (line.empty()) continue;
      std::string ctx = origin + ":" + format_int(static_cast<std::int64_t>(lineno));
      auto f = split(line, ',');
      require(f.size() == 4, ErrorCode::BadInput, ctx + ": expected 4 fields");
      PatchTypeLabel l{std::string(trim(f[0])), std::string(trim(f[1])),
                       parse_liveness(trim(f[2]), ctx), std::string(trim(f[3]))};
      reg.register_class(l);
    }
    return reg;
  }

 private:
  std::vector<PatchTypeLabel> classes_;
};

}  // namespace patchnet

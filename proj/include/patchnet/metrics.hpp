#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"
#include "patchnet/manifest.hpp"

namespace patchnet {

// Threshold convention throughout: a sample is classified live when
// live_prob >= threshold (ties count as live).

struct ScoredSample {
  std::string id;
  std::string device_id;
  Liveness truth = Liveness::Live;
  double live_prob = 0.0;
};

struct ClassificationRates {
  double apcer = 0.0;  // % of spoof samples accepted as live
  double bpcer = 0.0;  // % of live samples rejected
  double acer = 0.0;   // (apcer + bpcer) / 2
};

namespace detail {
inline void check_two_classes(const std::vector<ScoredSample>& scores,
                              const char* what) {
  size_t live = 0, spoof = 0;
  for (const auto& s : scores) {
    require(s.live_prob >= 0.0 && s.live_prob <= 1.0, ErrorCode::InvariantViolation,
            std::string(what) + ": live_prob out of [0,1] for sample " + s.id);
    (s.truth == Liveness::Live ? live : spoof)++;
  }
  require(live > 0 && spoof > 0, ErrorCode::InvariantViolation,
          std::string(what) + ": need both live and spoof samples, got " +
              format_int(static_cast<std::int64_t>(live)) + " live / " +
              format_int(static_cast<std::int64_t>(spoof)) + " spoof");
}
}  // namespace detail

inline ClassificationRates classification_rates(const std::vector<ScoredSample>& scores,
                                                double threshold) {
  detail::check_two_classes(scores, "classification_rates");
  size_t live = 0, spoof = 0, spoof_accepted = 0, live_rejected = 0;
  for (const auto& s : scores) {
    if (s.truth == Liveness::Spoof) {
      ++spoof;
      if (s.live_prob >= threshold) ++spoof_accepted;
    } else {
      ++live;
      if (s.live_prob < threshold) ++live_rejected;
    }
  }
  ClassificationRates r;
  r.apcer = 100.0 * static_cast<double>(spoof_accepted) / static_cast<double>(spoof);
  r.bpcer = 100.0 * static_cast<double>(live_rejected) / static_cast<double>(live);
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

// Rank statistic (Mann-Whitney), ties counted one half.
inline double auc(const std::vector<ScoredSample>& scores) {
  detail::check_two_classes(scores, "auc");
  std::vector<std::pair<double, bool>> v;  // (score, is_live)
  v.reserve(scores.size());
  for (const auto& s : scores) v.emplace_back(s.live_prob, s.truth == Liveness::Live);
  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double live_rank_sum = 0;
  size_t live = 0, spoof = 0;
  size_t i = 0;
  while (i < v.size()) {
    size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t t = i; t < j; ++t) {
      if (v[t].second) {
        live_rank_sum += avg_rank;
        ++live;
      } else {
        ++spoof;
      }
    }
    i = j;
  }
  const double n_live = static_cast<double>(live), n_spoof = static_cast<double>(spoof);
  return (live_rank_sum - n_live * (n_live + 1) / 2.0) / (n_live * n_spoof);
}

// Threshold where APCER meets BPCER on a development set. Both rates are
// step functions of the threshold; the crossing is linearly interpolated
// between the adjacent candidate thresholds.
inline double eer_threshold(const std::vector<ScoredSample>& scores) {
  detail::check_two_classes(scores, "eer_threshold");
  std::vector<double> candidates;
  candidates.reserve(scores.size() + 2);
  for (const auto& s : scores) candidates.push_back(s.live_prob);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  // Above the top score APCER is 0 and BPCER is 100.
  candidates.push_back(std::nextafter(candidates.back(), 2.0));

  auto diff_at = [&](double t) {
    const ClassificationRates r = classification_rates(scores, t);
    return r.apcer - r.bpcer;
  };
  double prev_t = candidates.front();
  double prev_d = diff_at(prev_t);
  if (prev_d <= 0) return prev_t;
  for (size_t i = 1; i < candidates.size(); ++i) {
    const double t = candidates[i];
    const double d = diff_at(t);
    if (d <= 0) return prev_t + (t - prev_t) * (prev_d / (prev_d - d));
    prev_t = t;
    prev_d = d;
  }
  return prev_t;
}

// Half total error rate at a threshold fixed elsewhere (e.g. dev-set EER).
inline double hter(const std::vector<ScoredSample>& scores, double threshold) {
  return classification_rates(scores, threshold).acer;
}

struct EvalReport {
  double threshold = 0.5;
  double apcer = 0.0, bpcer = 0.0, acer = 0.0, hter = 0.0;  // percentages
  double auc = 0.0;
  std::int64_t live_count = 0, spoof_count = 0;

  KvMap to_kv() const {
    KvMap kv;
    kv.set_double("report.threshold", threshold);
    kv.set_double("report.apcer", apcer);
    kv.set_double("report.bpcer", bpcer);
    kv.set_double("report.acer", acer);
    kv.set_double("report.hter", hter);
    kv.set_double("report.auc", auc);
    kv.set_int("report.live_count", live_count);
    kv.set_int("report.spoof_count", spoof_count);
    return kv;
  }
};

inline EvalReport evaluate(const std::vector<ScoredSample>& scores, double threshold) {
  const ClassificationRates r = classification_rates(scores, threshold);
  EvalReport report;
  report.threshold = threshold;
  report.apcer = r.apcer;
  report.bpcer = r.bpcer;
  report.acer = r.acer;
  report.hter = r.acer;  // same quantity once the threshold is fixed
  report.auc = auc(scores);
  for (const auto& s : scores)
    (s.truth == Liveness::Live ? report.live_count : report.spoof_count)++;
  return report;
}

// Per-device partition. A device whose partition has a single class is
// reported as undefined; the remaining devices are unaffected.
struct DeviceEval {
  bool defined = false;
  EvalReport report;
};

inline std::map<std::string, DeviceEval> per_device_eval(
    const std::vector<ScoredSample>& scores, double threshold) {
  std::map<std::string, std::vector<ScoredSample>> groups;
  for (const auto& s : scores) groups[s.device_id].push_back(s);
  std::map<std::string, DeviceEval> out;
  for (const auto& [device, group] : groups) {
    DeviceEval de;
    size_t live = 0, spoof = 0;
    for (const auto& s : group) (s.truth == Liveness::Live ? live : spoof)++;
    if (live > 0 && spoof > 0) {
      de.defined = true;
      de.report = evaluate(group, threshold);
    }
    out[device] = de;
  }
  return out;
}

// Score file: one sample per line, "id,device_id,LIVE|SPOOF,live_prob" with
// 9 significant digits.
inline void write_scores(const std::vector<ScoredSample>& scores, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::MissingFile, "cannot write " + path);
  for (const auto& s : scores)
    out << s.id << ',' << s.device_id << ',' << to_string(s.truth) << ','
        << format_double(s.live_prob, 9) << '\n';
}

inline std::vector<ScoredSample> read_scores(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingFile, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::vector<ScoredSample> out;
  size_t lineno = 0;
  for (const std::string& raw : split(ss.str(), '\n')) {
    ++lineno;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string ctx = path + ":" + format_int(static_cast<std::int64_t>(lineno));
    auto f = split(line, ',');
    require(f.size() == 4, ErrorCode::BadInput, ctx + ": expected 4 fields");
    ScoredSample s;
    s.id = std::string(trim(f[0]));
    s.device_id = std::string(trim(f[1]));
    s.truth = parse_liveness(trim(f[2]), ctx);
    const std::string num(trim(f[3]));
    auto res = std::from_chars(num.data(), num.data() + num.size(), s.live_prob);
    require(res.ec == std::errc() && res.ptr == num.data() + num.size(),
            ErrorCode::BadInput, ctx + ": bad live_prob '" + num + "'");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace patchnet

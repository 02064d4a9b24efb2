#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"

namespace patchnet {

enum class Liveness { Live, Spoof };
enum class Split { Train, Dev, Test };

inline std::string to_string(Liveness l) { return l == Liveness::Live ? "LIVE" : "SPOOF"; }
inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "TRAIN";
    case Split::Dev: return "DEV";
    default: return "TEST";
  }
}

inline Liveness parse_liveness(std::string_view s, const std::string& ctx) {
  if (s == "LIVE") return Liveness::Live;
  if (s == "SPOOF") return Liveness::Spoof;
  fail(ErrorCode::BadInput, ctx + ": liveness must be LIVE or SPOOF, got '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s, const std::string& ctx) {
  if (s == "TRAIN") return Split::Train;
  if (s == "DEV") return Split::Dev;
  if (s == "TEST") return Split::Test;
  fail(ErrorCode::BadInput, ctx + ": split must be TRAIN, DEV or TEST, got '" + std::string(s) + "'");
}

// One sample of a dataset manifest. `path` doubles as the sample id.
struct ManifestEntry {
  std::string path;
  std::string dataset_id;
  std::string device_id;
  Liveness liveness = Liveness::Live;
  std::string medium_id;  // empty for live samples
  Split split = Split::Train;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& e : entries) {
      os << e.path << ',' << e.dataset_id << ',' << e.device_id << ','
         << to_string(e.liveness) << ',' << e.medium_id << ',' << to_string(e.split)
         << '\n';
    }
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::MissingFile, "cannot write " + path);
    out << serialize();
  }

  static Manifest parse(std::string_view text, const std::string& origin = "<text>") {
    Manifest m;
    size_t lineno = 0;
    for (const std::string& raw : split(text, '\n')) {
      ++lineno;
      std::string_view line = trim(raw);
      if (line.empty() || line.front() == '#') continue;
      std::string ctx = origin + ":" + format_int(static_cast<std::int64_t>(lineno));
      auto fields = split(line, ',');
      require(fields.size() == 6, ErrorCode::BadInput,
              ctx + ": expected 6 comma-separated fields, got " +
                  format_int(static_cast<std::int64_t>(fields.size())));
      ManifestEntry e;
      e.path = std::string(trim(fields[0]));
      e.dataset_id = std::string(trim(fields[1]));
      e.device_id = std::string(trim(fields[2]));
      e.liveness = parse_liveness(trim(fields[3]), ctx);
      e.medium_id = std::string(trim(fields[4]));
      e.split = parse_split(trim(fields[5]), ctx);
      require(!e.path.empty(), ErrorCode::BadInput, ctx + ": empty sample path");
      require(e.liveness == Liveness::Spoof || e.medium_id.empty(), ErrorCode::BadInput,
              ctx + ": live samples must have an empty medium_id");
      m.entries.push_back(std::move(e));
    }
    return m;
  }

  static Manifest load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::MissingFile, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }
};

}  // namespace patchnet

#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sphperf/model.hpp"
#include "sphperf/physics.hpp"

namespace sphperf {

enum class Symmetry : std::uint8_t { Off, On };
enum class Threading : std::uint8_t { Single, Asymmetric, Symmetric, Slices };
enum class GatherVariant : std::uint8_t { FastCellsHalf, SlowCellsHalf, SlowCellsH };

struct EngineConfig {
  EngineKind engine = EngineKind::CellPairs;
  Symmetry symmetry = Symmetry::On;
  int lane_batch = 1;
  Threading threading = Threading::Single;
  int thread_count = 1;
  GatherVariant gather_variant = GatherVariant::FastCellsHalf;
  int block_of_cells = 10;
  DerivedMode derived_mode = DerivedMode::Precomputed;
  /// Cell-pairs only: overrides SimParams::n_subdiv when > 0.
  int n_subdiv_override = 0;
  /// Testing aid: evaluate F-F pairs only (no F-B / B-F terms).
  bool fluid_fluid_only = false;

  /// Cell subdivision this engine runs on.
  int subdivision(int params_n_subdiv) const {
    if (engine == EngineKind::Gather) return gather_variant == GatherVariant::SlowCellsH ? 1 : 2;
    return n_subdiv_override > 0 ? n_subdiv_override : params_n_subdiv;
  }

  bool needs_ranges() const {
    return engine == EngineKind::Gather && gather_variant == GatherVariant::FastCellsHalf;
  }
};

/// Rejects contradictory combinations. Asymmetric threading implies
/// symmetry Off and is normalised to it.
inline EngineConfig validate(EngineConfig c) {
  if (c.thread_count < 1) throw ConfigError("thread_count", "thread_count must be >= 1");
  if (c.lane_batch != 1 && c.lane_batch != 4) throw ConfigError("lane_batch", "lane_batch must be 1 or 4");
  if (c.block_of_cells < 1) throw ConfigError("block_of_cells", "block_of_cells must be >= 1");
  if (c.n_subdiv_override < 0) throw ConfigError("n_subdiv", "n_subdiv override must be >= 0");
  if (c.engine == EngineKind::Gather) {
    if (c.symmetry == Symmetry::On) throw ConfigError("symmetry", "the gather engine cannot apply symmetry");
    return c;
  }
  if (c.threading == Threading::Asymmetric) c.symmetry = Symmetry::Off;
  if (c.threading == Threading::Symmetric && c.symmetry != Symmetry::On)
    throw ConfigError("symmetry", "symmetric threading requires symmetry on");
  return c;
}

inline std::string_view to_string(Threading t) {
  switch (t) {
    case Threading::Single: return "single";
    case Threading::Asymmetric: return "asymmetric";
    case Threading::Symmetric: return "symmetric";
    case Threading::Slices: return "slices";
  }
  return "?";
}

inline std::string_view to_string(GatherVariant v) {
  switch (v) {
    case GatherVariant::FastCellsHalf: return "fast-half";
    case GatherVariant::SlowCellsHalf: return "slow-half";
    case GatherVariant::SlowCellsH: return "slow-h";
  }
  return "?";
}

inline Threading parse_threading(std::string_view s) {
  if (s == "single") return Threading::Single;
  if (s == "asymmetric") return Threading::Asymmetric;
  if (s == "symmetric") return Threading::Symmetric;
  if (s == "slices") return Threading::Slices;
  throw ConfigError("threading", "unknown threading '" + std::string(s) + "'");
}

inline GatherVariant parse_gather_variant(std::string_view s) {
  if (s == "fast-half") return GatherVariant::FastCellsHalf;
  if (s == "slow-half") return GatherVariant::SlowCellsHalf;
  if (s == "slow-h") return GatherVariant::SlowCellsH;
  throw ConfigError("gather_variant", "unknown gather variant '" + std::string(s) + "'");
}

/// Short identifier used in reports and on the command line, e.g.
/// "cp-sym-l4-symmetric-t8", "cp-nosym-l1-single-t1-n1", "gather-fast-half-t4".
inline std::string to_tag(const EngineConfig& c) {
  std::ostringstream os;
  if (c.engine == EngineKind::Gather) {
    os << "gather-" << to_string(c.gather_variant) << "-t" << c.thread_count;
  } else {
    os << "cp-" << (c.symmetry == Symmetry::On ? "sym" : "nosym") << "-l" << c.lane_batch << '-'
       << to_string(c.threading) << "-t" << c.thread_count;
    if (c.n_subdiv_override > 0) os << "-n" << c.n_subdiv_override;
  }
  if (c.derived_mode == DerivedMode::Recomputed) os << "-rec";
  return os.str();
}

inline EngineConfig parse_tag(std::string_view tag) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : tag) {
    if (ch == '-') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  const auto bad = [&]() { return ConfigError("engine", "malformed engine tag '" + std::string(tag) + "'"); };
  const auto parse_int = [&](const std::string& s, char prefix) {
    if (s.size() < 2 || s[0] != prefix) throw bad();
    try {
      return std::stoi(s.substr(1));
    } catch (const std::exception&) {
      throw bad();
    }
  };

  EngineConfig c;
  std::size_t i = 0;
  if (parts.empty()) throw bad();
  if (parts[0] == "gather") {
    if (parts.size() < 4) throw bad();
    c.engine = EngineKind::Gather;
    c.symmetry = Symmetry::Off;
    c.gather_variant = parse_gather_variant(parts[1] + "-" + parts[2]);
    c.thread_count = parse_int(parts[3], 't');
    i = 4;
  } else if (parts[0] == "cp") {
    if (parts.size() < 5) throw bad();
    c.engine = EngineKind::CellPairs;
    if (parts[1] == "sym") {
      c.symmetry = Symmetry::On;
    } else if (parts[1] == "nosym") {
      c.symmetry = Symmetry::Off;
    } else {
      throw bad();
    }
    c.lane_batch = parse_int(parts[2], 'l');
    c.threading = parse_threading(parts[3]);
    c.thread_count = parse_int(parts[4], 't');
    i = 5;
  } else {
    throw bad();
  }
  for (; i < parts.size(); ++i) {
    if (parts[i] == "rec") {
      c.derived_mode = DerivedMode::Recomputed;
    } else if (c.engine == EngineKind::CellPairs && !parts[i].empty() && parts[i][0] == 'n') {
      c.n_subdiv_override = parse_int(parts[i], 'n');
    } else {
      throw bad();
    }
  }
  return validate(c);
}

}  // namespace sphperf

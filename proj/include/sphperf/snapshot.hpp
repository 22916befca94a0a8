#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sphperf/model.hpp"
#include "sphperf/physics.hpp"

namespace sphperf {

inline constexpr std::string_view kSnapshotHeader = "id,type,x,y,z,vx,vy,vz,rho,press";

/// One emitted frame, in whatever order the engine left the particles.
struct Snapshot {
  std::vector<std::uint32_t> id;
  std::vector<ParticleKind> kind;
  std::vector<Vec3f> pos;
  std::vector<Vec3f> vel;
  std::vector<float> rho;
  std::vector<float> press;

  std::size_t size() const { return id.size(); }
};

inline Snapshot make_snapshot(const ParticleSystem& sys, const DerivedQuantities& der) {
  if (der.size() != sys.size()) throw std::invalid_argument("make_snapshot: derived size mismatch");
  return {sys.id, sys.kind, sys.pos, sys.vel, sys.rho, der.press};
}

/// Inverse of make_snapshot for boundary-first snapshots; masses are not stored.
inline ParticleSystem to_particle_system(const Snapshot& s, float mass_fluid, float mass_boundary) {
  const auto nb = static_cast<std::size_t>(std::count(s.kind.begin(), s.kind.end(), ParticleKind::Boundary));
  ParticleSystem sys;
  sys.resize(nb, s.size() - nb);
  sys.pos = s.pos;
  sys.vel = s.vel;
  sys.rho = s.rho;
  sys.id = s.id;
  if (sys.kind != s.kind) throw ConfigError("layout", "snapshot is not boundary-first");
  sys.mass_fluid = mass_fluid;
  sys.mass_boundary = mass_boundary;
  sys.check();
  return sys;
}

namespace detail {

inline void put_float(std::ostream& os, float v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  os.write(buf.data(), r.ptr - buf.data());
}

template <typename T>
T parse_field(std::string_view s, std::size_t line) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::runtime_error("snapshot line " + std::to_string(line) + ": bad field '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

/// Shortest round-trip decimal text, so reading back gives the same floats.
inline void write_snapshot(std::ostream& os, const Snapshot& s) {
  os << kSnapshotHeader << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << s.id[i] << ',' << static_cast<int>(s.kind[i]);
    for (float v : {s.pos[i].x, s.pos[i].y, s.pos[i].z, s.vel[i].x, s.vel[i].y, s.vel[i].z, s.rho[i], s.press[i]}) {
      os << ',';
      detail::put_float(os, v);
    }
    os << '\n';
  }
}

inline Snapshot read_snapshot(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSnapshotHeader)
    throw std::runtime_error("snapshot: missing or unexpected header");
  Snapshot s;
  std::size_t lineno = 1;
  std::array<std::string_view, 10> f;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string_view rest = line;
    std::size_t nf = 0;
    for (; nf < f.size(); ++nf) {
      const auto comma = rest.find(',');
      f[nf] = rest.substr(0, comma);
      if (comma == std::string_view::npos) {
        rest = {};
        ++nf;
        break;
      }
      rest.remove_prefix(comma + 1);
    }
    if (nf != f.size() || !rest.empty())
      throw std::runtime_error("snapshot line " + std::to_string(lineno) + ": expected 10 fields");
    s.id.push_back(detail::parse_field<std::uint32_t>(f[0], lineno));
    const int type = detail::parse_field<int>(f[1], lineno);
    if (type != 0 && type != 1) throw std::runtime_error("snapshot line " + std::to_string(lineno) + ": bad type");
    s.kind.push_back(static_cast<ParticleKind>(type));
    std::array<float, 8> v{};
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = detail::parse_field<float>(f[k + 2], lineno);
    s.pos.push_back({v[0], v[1], v[2]});
    s.vel.push_back({v[3], v[4], v[5]});
    s.rho.push_back(v[6]);
    s.press.push_back(v[7]);
  }
  return s;
}

inline void write_snapshot_file(const std::string& path, const Snapshot& s) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  write_snapshot(os, s);
}

inline Snapshot read_snapshot_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_snapshot(is);
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct SnapshotTolerance {
  double rel = 1e-5;
};

/// L-infinity difference of one field, relative to the largest magnitude the
/// field takes in either snapshot.
struct FieldDiff {
  std::string field;
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::uint32_t worst_id = 0;
};

struct SnapshotComparison {
  std::vector<FieldDiff> fields;
  bool pass = true;

  const FieldDiff& worst() const {
    return *std::max_element(fields.begin(), fields.end(),
                             [](const FieldDiff& a, const FieldDiff& b) { return a.max_rel < b.max_rel; });
  }
};

/// Matches particles by id, so engines that reorder differently compare fine.
inline SnapshotComparison compare_snapshots(const Snapshot& a, const Snapshot& b, const SnapshotTolerance& tol = {}) {
  if (a.size() != b.size())
    throw std::invalid_argument("compare_snapshots: particle counts differ (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  std::unordered_map<std::uint32_t, std::size_t> where;
  where.reserve(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) where.emplace(b.id[j], j);
  if (where.size() != b.size()) throw std::invalid_argument("compare_snapshots: duplicate ids");
  std::vector<std::size_t> match(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto it = where.find(a.id[i]);
    if (it == where.end()) throw std::invalid_argument("compare_snapshots: id sets differ");
    match[i] = it->second;
  }

  using Getter = double (*)(const Snapshot&, std::size_t);
  static constexpr std::array<std::pair<std::string_view, Getter>, 8> getters{{
      {"x", [](const Snapshot& s, std::size_t i) { return double(s.pos[i].x); }},
      {"y", [](const Snapshot& s, std::size_t i) { return double(s.pos[i].y); }},
      {"z", [](const Snapshot& s, std::size_t i) { return double(s.pos[i].z); }},
      {"vx", [](const Snapshot& s, std::size_t i) { return double(s.vel[i].x); }},
      {"vy", [](const Snapshot& s, std::size_t i) { return double(s.vel[i].y); }},
      {"vz", [](const Snapshot& s, std::size_t i) { return double(s.vel[i].z); }},
      {"rho", [](const Snapshot& s, std::size_t i) { return double(s.rho[i]); }},
      {"press", [](const Snapshot& s, std::size_t i) { return double(s.press[i]); }},
  }};

  SnapshotComparison out;
  for (const auto& [name, get] : getters) {
    FieldDiff d{std::string(name)};
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double va = get(a, i);
      const double vb = get(b, match[i]);
      scale = std::max({scale, std::abs(va), std::abs(vb)});
      const double diff = std::abs(va - vb);
      if (diff > d.max_abs || std::isnan(diff)) {
        d.max_abs = std::isnan(diff) ? std::numeric_limits<double>::infinity() : diff;
        d.worst_id = a.id[i];
      }
    }
    // A field that is zero everywhere except for the difference itself still
    // counts the difference in full.
    const double denom = std::max(scale, d.max_abs);
    d.max_rel = denom > 0.0 ? d.max_abs / denom : 0.0;
    if (d.max_rel > tol.rel) out.pass = false;
    out.fields.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stats stream
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json stats_json(const StepStats& s) {
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["dt"] = s.dt;
  j["wall_s"] = s.wall_seconds;
  j["candidate_pairs"] = s.candidate_pairs;
  j["true_pairs"] = s.true_pairs;
  j["force_evals"] = s.force_evals;
  j["stage_nl_s"] = s.stage_nl_seconds;
  j["stage_pi_s"] = s.stage_pi_seconds;
  j["stage_su_s"] = s.stage_su_seconds;
  return j;
}

inline void write_stats_line(std::ostream& os, const StepStats& s) { os << stats_json(s).dump() << '\n'; }

inline StepStats parse_stats_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  StepStats s;
  s.step = j.at("step").get<std::uint64_t>();
  s.dt = j.at("dt").get<double>();
  s.wall_seconds = j.at("wall_s").get<double>();
  s.candidate_pairs = j.at("candidate_pairs").get<std::uint64_t>();
  s.true_pairs = j.at("true_pairs").get<std::uint64_t>();
  s.force_evals = j.at("force_evals").get<std::uint64_t>();
  s.stage_nl_seconds = j.at("stage_nl_s").get<double>();
  s.stage_pi_seconds = j.at("stage_pi_s").get<double>();
  s.stage_su_seconds = j.at("stage_su_s").get<double>();
  return s;
}

}  // namespace sphperf

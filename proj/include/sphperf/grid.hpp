#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphperf/model.hpp"
#include "sphperf/vec3.hpp"

namespace sphperf {

using CellIndex = std::uint32_t;
inline constexpr CellIndex kOutOfDomain = std::numeric_limits<CellIndex>::max();

/// Uniform cell decomposition of a fixed domain box. Cells have side
/// support / reach, so every neighbour of a particle lies within `reach`
/// cells of its own along each axis. Linear index = x + dims.x (y + dims.y z).
struct GridGeometry {
  Vec3d origin;
  Vec3d upper;
  double cell_size = 0.0;
  std::array<std::uint32_t, 3> dims{1, 1, 1};
  int reach = 1;

  static GridGeometry make(const Vec3d& lo, const Vec3d& hi, double cell_size, int reach) {
    if (!(cell_size > 0.0)) throw std::invalid_argument("cell_size must be positive");
    if (reach < 1) throw std::invalid_argument("reach must be >= 1");
    GridGeometry g;
    g.origin = lo;
    g.upper = hi;
    g.cell_size = cell_size;
    g.reach = reach;
    const double ext[3] = {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
    for (int a = 0; a < 3; ++a) {
      const double n = std::ceil(ext[a] / cell_size);
      if (!(n >= 1.0) || n > 1.0e6) throw std::invalid_argument("grid extent yields an invalid cell count");
      g.dims[a] = static_cast<std::uint32_t>(n);
    }
    if (static_cast<double>(g.dims[0]) * g.dims[1] * g.dims[2] > 4.0e9)
      throw std::invalid_argument("grid has too many cells");
    return g;
  }

  std::uint32_t ncells() const { return dims[0] * dims[1] * dims[2]; }

  CellIndex linear(std::uint32_t x, std::uint32_t y, std::uint32_t z) const { return x + dims[0] * (y + dims[1] * z); }

  std::array<std::uint32_t, 3> coords(CellIndex c) const {
    return {c % dims[0], (c / dims[0]) % dims[1], c / (dims[0] * dims[1])};
  }
};

/// Geometry used by the solver: cells of side 2h / n_subdiv over the domain box.
inline GridGeometry make_grid_geometry(const SimParams& p, int n_subdiv) {
  return GridGeometry::make(p.domain_min, p.domain_max, p.support() / n_subdiv, n_subdiv);
}

struct CellGrid {
  GridGeometry geom;
  std::vector<CellIndex> cell_of;              // kOutOfDomain for escaped particles
  std::vector<std::uint32_t> out_of_domain;    // indices of escaped particles
  std::vector<std::uint32_t> sort_perm;        // new index -> old index, filled by reorder

  double cell_size() const { return geom.cell_size; }
  bool all_inside() const { return out_of_domain.empty(); }
};

namespace detail {

inline bool axis_cell(double p, double lo, double hi, double cell, std::uint32_t dim, std::uint32_t& out) {
  if (!(p >= lo && p <= hi)) return false;  // also rejects NaN
  const double c = std::floor((p - lo) / cell);
  out = c >= static_cast<double>(dim) ? dim - 1 : static_cast<std::uint32_t>(c);
  return true;
}

}  // namespace detail

/// Cells are half-open and lower-inclusive; a particle exactly on the upper
/// domain face belongs to the last cell. Particles outside are flagged.
inline CellGrid assign_cells(std::span<const Vec3f> positions, const GridGeometry& geom) {
  CellGrid grid;
  grid.geom = geom;
  grid.cell_of.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3f& p = positions[i];
    std::uint32_t cx, cy, cz;
    const bool inside = detail::axis_cell(p.x, geom.origin.x, geom.upper.x, geom.cell_size, geom.dims[0], cx) &&
                        detail::axis_cell(p.y, geom.origin.y, geom.upper.y, geom.cell_size, geom.dims[1], cy) &&
                        detail::axis_cell(p.z, geom.origin.z, geom.upper.z, geom.cell_size, geom.dims[2], cz);
    if (inside) {
      grid.cell_of[i] = geom.linear(cx, cy, cz);
    } else {
      grid.cell_of[i] = kOutOfDomain;
      grid.out_of_domain.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return grid;
}

inline CellGrid assign_cells(std::span<const Vec3f> positions, const SimParams& params) {
  return assign_cells(positions, make_grid_geometry(params, params.n_subdiv));
}

template <typename T>
std::vector<T> permute(std::span<const T> src, std::span<const std::uint32_t> perm) {
  std::vector<T> out(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = src[perm[i]];
  return out;
}

template <typename T>
std::vector<T> permute(const std::vector<T>& src, std::span<const std::uint32_t> perm) {
  return permute(std::span<const T>(src), perm);
}

inline std::vector<std::uint32_t> invert_permutation(std::span<const std::uint32_t> perm) {
  std::vector<std::uint32_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<std::uint32_t>(i);
  return inv;
}

struct ReorderResult {
  ParticleSystem system;
  DerivedQuantities derived;                // permuted only when one was supplied
  std::vector<std::uint32_t> sort_perm;     // new -> old
  std::vector<std::uint32_t> inverse;       // old -> new
  std::vector<CellIndex> sorted_cells;      // cell_of in the new order
};

namespace detail {

// Stable counting sort of [begin, end) by cell; appends old indices to perm.
inline void counting_sort_segment(std::span<const CellIndex> cell_of, std::size_t begin, std::size_t end,
                                  std::uint32_t ncells, std::vector<std::uint32_t>& perm) {
  std::vector<std::uint32_t> offset(static_cast<std::size_t>(ncells) + 1, 0);
  for (std::size_t i = begin; i < end; ++i) ++offset[cell_of[i] + 1];
  for (std::uint32_t c = 0; c < ncells; ++c) offset[c + 1] += offset[c];
  const std::size_t base = perm.size();
  perm.resize(base + (end - begin));
  for (std::size_t i = begin; i < end; ++i) perm[base + offset[cell_of[i]]++] = static_cast<std::uint32_t>(i);
}

}  // namespace detail

/// Stable sort by cell, boundary and fluid segments separately, carrying every
/// state array (and the derived arrays, if given) along. ids are preserved.
inline ReorderResult reorder(const ParticleSystem& sys, const CellGrid& grid, const DerivedQuantities* derived = nullptr) {
  if (grid.cell_of.size() != sys.size()) throw std::invalid_argument("reorder: grid and system lengths differ");
  if (!grid.all_inside())
    throw std::invalid_argument("reorder: particle " + std::to_string(sys.id[grid.out_of_domain.front()]) +
                                " is outside the domain");
  const std::uint32_t ncells = grid.geom.ncells();
  ReorderResult r;
  r.sort_perm.reserve(sys.size());
  detail::counting_sort_segment(grid.cell_of, 0, sys.count_boundary, ncells, r.sort_perm);
  detail::counting_sort_segment(grid.cell_of, sys.count_boundary, sys.size(), ncells, r.sort_perm);
  r.inverse = invert_permutation(r.sort_perm);

  const std::span<const std::uint32_t> perm(r.sort_perm);
  ParticleSystem& out = r.system;
  out.count_boundary = sys.count_boundary;
  out.count_fluid = sys.count_fluid;
  out.mass_boundary = sys.mass_boundary;
  out.mass_fluid = sys.mass_fluid;
  out.layout = sys.layout;
  out.pos = permute(sys.pos, perm);
  out.vel = permute(sys.vel, perm);
  out.rho = permute(sys.rho, perm);
  out.kind = permute(sys.kind, perm);
  out.id = permute(sys.id, perm);
  r.sorted_cells = permute(grid.cell_of, perm);
  if (derived != nullptr) {
    r.derived.press = permute(derived->press, perm);
    r.derived.csound = permute(derived->csound, perm);
    r.derived.prrho = permute(derived->prrho, perm);
    r.derived.tensil = permute(derived->tensil, perm);
  }
  return r;
}

struct CellRange {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  std::uint32_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  friend bool operator==(const CellRange&, const CellRange&) = default;
};

/// Per-cell [begin, end) ranges into cell-sorted particle arrays.
struct CellBeginEnd {
  std::vector<CellRange> cells;

  std::uint32_t ncells() const { return static_cast<std::uint32_t>(cells.size()); }
  const CellRange& operator[](CellIndex c) const { return cells[c]; }
};

/// Boundary-detection construction: a particle whose cell differs from its
/// predecessor opens that cell, one that differs from its successor closes it.
/// Empty cells then collapse onto the running cursor so consecutive ranges
/// tile [offset, offset + N).
inline CellBeginEnd build_cell_begin_end(std::span<const CellIndex> sorted_cells, std::uint32_t ncells,
                                         std::uint32_t offset = 0) {
  constexpr std::uint32_t kUnset = std::numeric_limits<std::uint32_t>::max();
  CellBeginEnd cbe;
  cbe.cells.assign(ncells, CellRange{kUnset, kUnset});
  const std::size_t n = sorted_cells.size();
  for (std::size_t i = 0; i < n; ++i) {
    const CellIndex c = sorted_cells[i];
    if (c >= ncells) throw std::invalid_argument("build_cell_begin_end: cell index out of range");
    if (i > 0 && sorted_cells[i - 1] > c) throw std::invalid_argument("build_cell_begin_end: cells not sorted");
    const auto idx = static_cast<std::uint32_t>(i) + offset;
    if (i == 0 || sorted_cells[i - 1] != c) cbe.cells[c].begin = idx;
    if (i + 1 == n || sorted_cells[i + 1] != c) cbe.cells[c].end = idx + 1;
  }
  std::uint32_t cursor = offset;
  for (CellRange& r : cbe.cells) {
    if (r.begin == kUnset) {
      r.begin = r.end = cursor;
    } else {
      cursor = r.end;
    }
  }
  return cbe;
}

/// Cell lookup for both particle lists over one shared grid.
struct NeighborGrid {
  GridGeometry geom;
  CellBeginEnd boundary;
  CellBeginEnd fluid;
  std::vector<CellIndex> cell_of;  // per sorted particle
};

inline NeighborGrid build_neighbor_grid(const GridGeometry& geom, std::span<const CellIndex> sorted_cells,
                                        std::size_t count_boundary) {
  NeighborGrid ng;
  ng.geom = geom;
  ng.cell_of.assign(sorted_cells.begin(), sorted_cells.end());
  ng.boundary = build_cell_begin_end(sorted_cells.first(count_boundary), geom.ncells(), 0);
  ng.fluid = build_cell_begin_end(sorted_cells.subspan(count_boundary), geom.ncells(),
                                  static_cast<std::uint32_t>(count_boundary));
  return ng;
}

// ---------------------------------------------------------------------------
// Half stencil for symmetric traversal
// ---------------------------------------------------------------------------

struct StencilOffset {
  int dx, dy, dz;
};

/// Offsets of the (2 reach + 1)^3 block that come lexicographically after the
/// centre (ordered by z, then y, then x). Together with the centre cell these
/// visit every unordered pair of cells in range exactly once.
inline std::vector<StencilOffset> forward_offsets(int reach = 1) {
  std::vector<StencilOffset> out;
  for (int dz = 0; dz <= reach; ++dz)
    for (int dy = -reach; dy <= reach; ++dy)
      for (int dx = -reach; dx <= reach; ++dx) {
        const bool forward = dz > 0 || (dz == 0 && dy > 0) || (dz == 0 && dy == 0 && dx > 0);
        if (forward) out.push_back({dx, dy, dz});
      }
  return out;
}

inline std::vector<StencilOffset> full_offsets(int reach = 1) {
  std::vector<StencilOffset> out;
  for (int dz = -reach; dz <= reach; ++dz)
    for (int dy = -reach; dy <= reach; ++dy)
      for (int dx = -reach; dx <= reach; ++dx) out.push_back({dx, dy, dz});
  return out;
}

inline bool offset_cell(const std::array<std::uint32_t, 3>& c, const StencilOffset& o,
                        const std::array<std::uint32_t, 3>& dims, std::array<std::uint32_t, 3>& out) {
  const long v[3] = {static_cast<long>(c[0]) + o.dx, static_cast<long>(c[1]) + o.dy, static_cast<long>(c[2]) + o.dz};
  for (int a = 0; a < 3; ++a) {
    if (v[a] < 0 || v[a] >= static_cast<long>(dims[a])) return false;
    out[a] = static_cast<std::uint32_t>(v[a]);
  }
  return true;
}

struct HalfStencil {
  CellIndex self;                    // interacts with itself through ordered pairs j > i
  std::vector<CellIndex> neighbors;  // forward cells inside the domain
};

inline HalfStencil forward_cells(const std::array<std::uint32_t, 3>& cell, const std::array<std::uint32_t, 3>& dims,
                                 int reach = 1) {
  const auto lin = [&](const std::array<std::uint32_t, 3>& c) { return c[0] + dims[0] * (c[1] + dims[1] * c[2]); };
  HalfStencil hs{lin(cell), {}};
  for (const StencilOffset& o : forward_offsets(reach)) {
    std::array<std::uint32_t, 3> nb;
    if (offset_cell(cell, o, dims, nb)) hs.neighbors.push_back(lin(nb));
  }
  return hs;
}

// ---------------------------------------------------------------------------
// Interaction ranges
// ---------------------------------------------------------------------------

/// Rows of the candidate block around a cell: one (cy, cz) pair per row,
/// each row spanning [cx - reach, cx + reach] clipped to the domain. Calls
/// fn(range) with the contiguous particle span of that row, or an empty
/// range for rows outside the domain.
template <typename Fn>
void for_each_row(const CellBeginEnd& cbe, const GridGeometry& geom, const std::array<std::uint32_t, 3>& c, Fn&& fn) {
  const int r = geom.reach;
  const long xmin = std::max<long>(0, static_cast<long>(c[0]) - r);
  const long xmax = std::min<long>(static_cast<long>(geom.dims[0]) - 1, static_cast<long>(c[0]) + r);
  for (int dz = -r; dz <= r; ++dz) {
    const long cz = static_cast<long>(c[2]) + dz;
    for (int dy = -r; dy <= r; ++dy) {
      const long cy = static_cast<long>(c[1]) + dy;
      if (cz < 0 || cz >= static_cast<long>(geom.dims[2]) || cy < 0 || cy >= static_cast<long>(geom.dims[1])) {
        fn(CellRange{});
        continue;
      }
      const CellIndex first = geom.linear(static_cast<std::uint32_t>(xmin), static_cast<std::uint32_t>(cy),
                                          static_cast<std::uint32_t>(cz));
      const CellIndex last = geom.linear(static_cast<std::uint32_t>(xmax), static_cast<std::uint32_t>(cy),
                                         static_cast<std::uint32_t>(cz));
      fn(CellRange{cbe[first].begin, cbe[last].end});
    }
  }
}

/// Precomputed per-cell particle ranges for one particle list: 9 rows per
/// cell at reach 1, 25 at reach 2.
class InteractionRanges {
 public:
  InteractionRanges() = default;
  InteractionRanges(std::uint32_t ncells, int rows_per_cell)
      : rows_(rows_per_cell), ranges_(static_cast<std::size_t>(ncells) * rows_per_cell) {}

  int rows_per_cell() const { return rows_; }
  std::uint32_t ncells() const { return rows_ == 0 ? 0 : static_cast<std::uint32_t>(ranges_.size() / rows_); }
  std::span<const CellRange> of(CellIndex c) const {
    return std::span<const CellRange>(ranges_).subspan(static_cast<std::size_t>(c) * rows_, rows_);
  }
  std::span<CellRange> of(CellIndex c) {
    return std::span<CellRange>(ranges_).subspan(static_cast<std::size_t>(c) * rows_, rows_);
  }
  std::size_t bytes() const { return ranges_.size() * sizeof(CellRange); }

 private:
  int rows_ = 0;
  std::vector<CellRange> ranges_;
};

inline InteractionRanges build_ranges(const CellBeginEnd& cbe, const GridGeometry& geom, int n_subdiv) {
  if (n_subdiv != 1 && n_subdiv != 2) throw std::invalid_argument("interaction ranges support n_subdiv 1 or 2");
  if (geom.reach != n_subdiv) throw std::invalid_argument("grid reach does not match n_subdiv");
  if (cbe.ncells() != geom.ncells()) throw std::invalid_argument("CellBeginEnd does not match the grid");
  const int side = 2 * n_subdiv + 1;
  InteractionRanges ir(geom.ncells(), side * side);
  for (CellIndex c = 0; c < geom.ncells(); ++c) {
    auto out = ir.of(c);
    std::size_t k = 0;
    for_each_row(cbe, geom, geom.coords(c), [&](CellRange r) { out[k++] = r; });
  }
  return ir;
}

/// Ranges for both particle lists.
struct NeighborRanges {
  InteractionRanges boundary;
  InteractionRanges fluid;

  std::size_t bytes() const { return boundary.bytes() + fluid.bytes(); }
};

inline NeighborRanges build_ranges(const NeighborGrid& ng, int n_subdiv) {
  return {build_ranges(ng.boundary, ng.geom, n_subdiv), build_ranges(ng.fluid, ng.geom, n_subdiv)};
}

/// Searched volume over kernel-sphere volume for cells of side support/n:
/// (2 + 1/n)^3 / (4 pi / 3). Tends to 6/pi.
inline double searched_to_sphere_volume_ratio(double n) {
  const double s = 2.0 + 1.0 / n;
  return s * s * s / (4.0 * std::numbers::pi / 3.0);
}

}  // namespace sphperf

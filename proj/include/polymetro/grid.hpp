#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "polymetro/error.hpp"
#include "polymetro/geometry.hpp"

namespace polymetro {

/// Regular lattice of spacing s anchored at the bounding-box corner. Cell k
/// along axis a has center lo_a + (k + 1/2) s; only cells whose centers lie in
/// the open polytope are kept and numbered.
class Grid {
 public:
  int dim() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return coords_.size() / shape_.size(); }
  double spacing() const { return s_; }
  double cell_volume() const { return std::pow(s_, dim()); }
  const Vector& origin() const { return lo_; }
  const std::vector<std::int64_t>& shape() const { return shape_; }

  Vector center(std::size_t i) const {
    Vector c(dim());
    for (int a = 0; a < dim(); ++a) c(a) = lo_(a) + (static_cast<double>(coord(i, a)) + 0.5) * s_;
    return c;
  }

  std::int64_t coord(std::size_t i, int axis) const { return coords_[i * shape_.size() + static_cast<std::size_t>(axis)]; }

  /// Kept cell at a lattice multi-index, or kOutside.
  std::size_t at_lattice(const std::int64_t* k) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
      if (k[a] < 0 || k[a] >= shape_[a]) return kOutside;
      flat = flat * static_cast<std::size_t>(shape_[a]) + static_cast<std::size_t>(k[a]);
    }
    std::int32_t id = lookup_[flat];
    return id < 0 ? kOutside : static_cast<std::size_t>(id);
  }

  /// Kept cell whose lattice square contains x, or kOutside.
  std::size_t cell_at(const double* x) const {
    std::int64_t k[8];
    for (int a = 0; a < dim(); ++a) k[a] = static_cast<std::int64_t>(std::floor((x[a] - lo_(a)) / s_));
    return at_lattice(k);
  }

  std::size_t cell_at(const Vector& x) const { return cell_at(x.data()); }

  /// Neighbouring kept cell at a lattice offset, or kOutside.
  std::size_t shifted(std::size_t i, const std::vector<int>& offset) const {
    std::int64_t k[8];
    for (int a = 0; a < dim(); ++a) k[a] = coord(i, a) + offset[static_cast<std::size_t>(a)];
    return at_lattice(k);
  }

 private:
  friend Grid discretize(const Polytope& p, double s, std::size_t cap);

  double s_ = 0.0;
  Vector lo_;
  std::vector<std::int64_t> shape_;
  std::vector<std::int64_t> coords_;
  std::vector<std::int32_t> lookup_;
};

inline constexpr std::size_t kDefaultCellCap = 200000;

inline Grid discretize(const Polytope& p, double s, std::size_t cap = kDefaultCellCap) {
  require(s > 0.0 && std::isfinite(s), ErrorCode::InvalidArgument, "grid spacing must be positive");
  const int d = p.dim();
  require(d <= 8, ErrorCode::BadSize, "grids are limited to dimension 8");
  Grid g;
  g.s_ = s;
  g.lo_ = p.box_lo();
  g.shape_.resize(static_cast<std::size_t>(d));
  double total = 1.0;
  for (int a = 0; a < d; ++a) {
    // Box bounds come from an LP; a relative nudge keeps exact fits like 1/0.25 at 4 cells.
    double span = (p.box_hi()(a) - g.lo_(a)) / s;
    auto n = static_cast<std::int64_t>(std::ceil(span - 1e-9 * std::max(1.0, span)));
    g.shape_[static_cast<std::size_t>(a)] = std::max<std::int64_t>(n, 1);
    total *= static_cast<double>(g.shape_[static_cast<std::size_t>(a)]);
  }
  require(total <= 5e7, ErrorCode::TooManyCells, "lattice over the bounding box is too large");

  g.lookup_.assign(static_cast<std::size_t>(total), -1);
  std::vector<std::int64_t> k(static_cast<std::size_t>(d), 0);
  Vector c(d);
  std::size_t kept = 0;
  for (std::size_t flat = 0; flat < g.lookup_.size(); ++flat) {
    // Row-major multi-index of flat.
    std::size_t rem = flat;
    for (int a = d - 1; a >= 0; --a) {
      auto n = static_cast<std::size_t>(g.shape_[static_cast<std::size_t>(a)]);
      k[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(rem % n);
      rem /= n;
    }
    for (int a = 0; a < d; ++a) c(a) = g.lo_(a) + (static_cast<double>(k[static_cast<std::size_t>(a)]) + 0.5) * s;
    if (!p.contains(c)) continue;
    if (++kept > cap) fail(ErrorCode::TooManyCells, "cell count exceeds the cap of " + std::to_string(cap));
    g.lookup_[flat] = static_cast<std::int32_t>(kept - 1);
    g.coords_.insert(g.coords_.end(), k.begin(), k.end());
  }
  require(kept > 0, ErrorCode::ResolutionTooCoarse, "no cell center lies inside the polytope; refine the grid");
  return g;
}

}  // namespace polymetro

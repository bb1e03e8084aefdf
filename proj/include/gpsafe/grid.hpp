#pragma once

#include "gpsafe/core.hpp"

#include <string>
#include <vector>

namespace gpsafe {

// Uniform cell-center grid over a box. Every point of the box lies within
// tau (1-norm) of a grid point: each side j is split into
// ceil(s_j * D / (2 tau)) cells. Points are ordered row-major, the last
// dimension varying fastest.
class Grid {
 public:
  Grid(Box box, double tau, std::vector<Index> counts);

  const Box& box() const { return box_; }
  double tau() const { return tau_; }
  Index dim() const { return box_.dim(); }
  Index size() const { return size_; }
  const std::vector<Index>& counts() const { return counts_; }
  Vector steps() const;

  Vector point(Index i) const;
  std::vector<Index> multi_index(Index i) const;
  // Index of the grid point whose cell contains x (x clamped to the box).
  Index nearest(const Vector& x) const;

 private:
  Box box_;
  double tau_;
  std::vector<Index> counts_;
  Index size_;
};

class GridTooLarge : public InvalidArgument {
 public:
  GridTooLarge(const std::string& what, Index points) : InvalidArgument(what), points_(points) {}
  Index points() const { return points_; }

 private:
  Index points_;
};

constexpr Index kDefaultGridCap = 10'000'000;

Grid discretize(const Box& box, double tau, Index cap = kDefaultGridCap);

// Number of points discretize would produce, without building the grid.
// Saturates at the largest Index instead of overflowing.
Index grid_size(const Box& box, double tau);

}  // namespace gpsafe

#include "gpsafe/grid.hpp"

#include <cmath>
#include <limits>

namespace gpsafe {

namespace {

std::vector<Index> cell_counts(const Box& box, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("discretization tau must be positive and finite");
  const double dim = static_cast<double>(box.dim());
  const Vector sides = box.sides();
  std::vector<Index> counts(box.dim());
  for (Index j = 0; j < box.dim(); ++j) {
    const double c = std::ceil(sides(j) * dim / (2.0 * tau));
    counts[j] = c > 1e15 ? std::numeric_limits<Index>::max() : std::max<Index>(1, static_cast<Index>(c));
  }
  return counts;
}

Index saturating_product(const std::vector<Index>& counts) {
  Index n = 1;
  for (Index c : counts) {
    if (c != 0 && n > std::numeric_limits<Index>::max() / c) return std::numeric_limits<Index>::max();
    n *= c;
  }
  return n;
}

}  // namespace

Grid::Grid(Box box, double tau, std::vector<Index> counts)
    : box_(std::move(box)), tau_(tau), counts_(std::move(counts)), size_(saturating_product(counts_)) {
  if (static_cast<Index>(counts_.size()) != box_.dim()) throw InvalidArgument("grid counts do not match box dimension");
}

Vector Grid::steps() const {
  Vector s = box_.sides();
  for (Index j = 0; j < dim(); ++j) s(j) /= static_cast<double>(counts_[j]);
  return s;
}

std::vector<Index> Grid::multi_index(Index i) const {
  if (i < 0 || i >= size_) throw InvalidArgument("grid index out of range");
  std::vector<Index> idx(dim());
  for (Index j = dim() - 1; j >= 0; --j) {
    idx[j] = i % counts_[j];
    i /= counts_[j];
  }
  return idx;
}

Vector Grid::point(Index i) const {
  const auto idx = multi_index(i);
  Vector p(dim());
  for (Index j = 0; j < dim(); ++j) {
    const double step = (box_.upper()(j) - box_.lower()(j)) / static_cast<double>(counts_[j]);
    p(j) = box_.lower()(j) + (static_cast<double>(idx[j]) + 0.5) * step;
  }
  return p;
}

Index Grid::nearest(const Vector& x) const {
  require_dim(x, dim(), "grid query");
  const Vector c = box_.clamp(x);
  Index i = 0;
  for (Index j = 0; j < dim(); ++j) {
    const double side = box_.upper()(j) - box_.lower()(j);
    Index cell = 0;
    if (side > 0.0) {
      cell = static_cast<Index>(std::floor((c(j) - box_.lower()(j)) / side * static_cast<double>(counts_[j])));
      cell = std::clamp<Index>(cell, 0, counts_[j] - 1);
    }
    i = i * counts_[j] + cell;
  }
  return i;
}

Index grid_size(const Box& box, double tau) { return saturating_product(cell_counts(box, tau)); }

Grid discretize(const Box& box, double tau, Index cap) {
  auto counts = cell_counts(box, tau);
  const Index n = saturating_product(counts);
  if (n > cap) {
    throw GridTooLarge("grid at tau=" + std::to_string(tau) + " has " + std::to_string(n) +
                          " points, above the cap of " + std::to_string(cap), n);
  }
  return Grid(box, tau, std::move(counts));
}

}  // namespace gpsafe

#pragma once

#include "gpsafe/core.hpp"

#include <iosfwd>
#include <string>

namespace gpsafe {

// Transition samples (x_i, u_i, f(x_i, u_i)) stored row-wise.
class Dataset {
 public:
  Dataset(Index state_dim, Index control_dim);

  void add(const Vector& state, const Vector& control, const Vector& next_state);
  void reserve(Index n);

  Index size() const { return size_; }
  bool empty() const { return size_ == 0; }
  Index state_dim() const { return state_dim_; }
  Index control_dim() const { return control_dim_; }
  Index input_dim() const { return state_dim_ + control_dim_; }

  Vector state(Index i) const { return states_.row(i).transpose(); }
  Vector control(Index i) const { return controls_.row(i).transpose(); }
  Vector next_state(Index i) const { return next_.row(i).transpose(); }

  auto states() const { return states_.topRows(size_); }
  auto controls() const { return controls_.topRows(size_); }
  auto next_states() const { return next_.topRows(size_); }

  // Joint inputs [x u], one row per sample.
  Matrix inputs() const;

  // Header x0..,u0..,y0..; values written with 17 significant digits.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;
  static Dataset read_csv(std::istream& in);
  static Dataset read_csv(const std::string& path);

 private:
  Index state_dim_;
  Index control_dim_;
  Index size_ = 0;
  Matrix states_;
  Matrix controls_;
  Matrix next_;
};

}  // namespace gpsafe

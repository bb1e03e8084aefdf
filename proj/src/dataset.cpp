#include "gpsafe/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace gpsafe {

Dataset::Dataset(Index state_dim, Index control_dim) : state_dim_(state_dim), control_dim_(control_dim) {
  if (state_dim <= 0 || control_dim <= 0) throw InvalidArgument("dataset dimensions must be positive");
  states_.resize(0, state_dim);
  controls_.resize(0, control_dim);
  next_.resize(0, state_dim);
}

void Dataset::reserve(Index n) {
  if (n <= states_.rows()) return;
  states_.conservativeResize(n, Eigen::NoChange);
  controls_.conservativeResize(n, Eigen::NoChange);
  next_.conservativeResize(n, Eigen::NoChange);
}

void Dataset::add(const Vector& state, const Vector& control, const Vector& next_state) {
  require_dim(state, state_dim_, "dataset state");
  require_dim(control, control_dim_, "dataset control");
  require_dim(next_state, state_dim_, "dataset next state");
  require_finite(state, "dataset state");
  require_finite(control, "dataset control");
  require_finite(next_state, "dataset next state");
  if (size_ == states_.rows()) reserve(std::max<Index>(16, 2 * size_));
  states_.row(size_) = state.transpose();
  controls_.row(size_) = control.transpose();
  next_.row(size_) = next_state.transpose();
  ++size_;
}

Matrix Dataset::inputs() const {
  Matrix w(size_, input_dim());
  w << states(), controls();
  return w;
}

void Dataset::write_csv(std::ostream& out) const {
  for (Index j = 0; j < state_dim_; ++j) out << (j ? "," : "") << "x" << j;
  for (Index j = 0; j < control_dim_; ++j) out << ",u" << j;
  for (Index j = 0; j < state_dim_; ++j) out << ",y" << j;
  out << "\n";
  char buf[32];
  auto put = [&](double v, bool first) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (!first) out << ',';
    out << buf;
  };
  for (Index i = 0; i < size_; ++i) {
    for (Index j = 0; j < state_dim_; ++j) put(states_(i, j), j == 0);
    for (Index j = 0; j < control_dim_; ++j) put(controls_(i, j), false);
    for (Index j = 0; j < state_dim_; ++j) put(next_(i, j), false);
    out << "\n";
  }
}

void Dataset::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_csv(out);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double parse_double(const std::string& s, Index line) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && *begin == ' ') ++begin;
  if (begin < end && *begin == '+') ++begin;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  while (ptr < end && (*ptr == ' ' || *ptr == '\r')) ++ptr;
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("dataset csv line " + std::to_string(line) + ": cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

Dataset Dataset::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("dataset csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Index nx = 0, nu = 0, ny = 0;
  for (const auto& h : split(line)) {
    if (h.empty()) throw InvalidArgument("dataset csv has an empty header cell");
    const char c = h[0];
    const Index expect = c == 'x' ? nx : c == 'u' ? nu : ny;
    if ((c != 'x' && c != 'u' && c != 'y') || h.substr(1) != std::to_string(expect)) {
      throw InvalidArgument("dataset csv header cell '" + h + "' out of order");
    }
    (c == 'x' ? nx : c == 'u' ? nu : ny)++;
  }
  if (nx == 0 || nu == 0 || ny != nx) throw InvalidArgument("dataset csv header needs x*, u* and as many y* as x*");
  Dataset d(nx, nu);
  Index lineno = 1;
  Vector x(nx), u(nu), y(nx);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<Index>(cells.size()) != 2 * nx + nu) {
      throw InvalidArgument("dataset csv line " + std::to_string(lineno) + ": wrong number of cells");
    }
    for (Index j = 0; j < nx; ++j) x(j) = parse_double(cells[j], lineno);
    for (Index j = 0; j < nu; ++j) u(j) = parse_double(cells[nx + j], lineno);
    for (Index j = 0; j < nx; ++j) y(j) = parse_double(cells[nx + nu + j], lineno);
    d.add(x, u, y);
  }
  return d;
}

Dataset Dataset::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_csv(in);
}

}  // namespace gpsafe

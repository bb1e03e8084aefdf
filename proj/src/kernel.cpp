#include "gpsafe/kernel.hpp"

#include <cmath>

namespace gpsafe {

void SquaredExponential::validate(Index input_dim) const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw InvalidArgument("kernel signal variance must be positive and finite");
  }
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw InvalidArgument("kernel lengthscale must be positive and finite");
  }
  if (input_scale.size() != 0) {
    require_dim(input_scale, input_dim, "kernel input_scale");
    require_finite(input_scale, "kernel input_scale");
    if ((input_scale.array() <= 0.0).any()) throw InvalidArgument("kernel input_scale must be positive");
  }
}

double SquaredExponential::max_scale() const {
  return input_scale.size() == 0 ? 1.0 : input_scale.maxCoeff();
}

double SquaredExponential::lipschitz() const {
  return signal_variance * std::exp(-0.5) / lengthscale * max_scale();
}

double kernel_eval(const SquaredExponential& k, const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InvalidArgument("kernel_eval: argument dimensions differ");
  k.validate(a.size());
  require_finite(a, "kernel_eval argument");
  require_finite(b, "kernel_eval argument");
  return k(a, b);
}

void to_json(nlohmann::json& j, const SquaredExponential& k) {
  j = nlohmann::json{{"type", "squared_exponential"},
                     {"signal_variance", k.signal_variance},
                     {"lengthscale", k.lengthscale}};
  if (k.input_scale.size() != 0) {
    j["input_scale"] = std::vector<double>(k.input_scale.data(), k.input_scale.data() + k.input_scale.size());
  }
}

void from_json(const nlohmann::json& j, SquaredExponential& k) {
  if (j.contains("type") && j.at("type") != "squared_exponential") {
    throw InvalidArgument("unsupported kernel type " + j.at("type").dump());
  }
  k.signal_variance = j.at("signal_variance").get<double>();
  k.lengthscale = j.at("lengthscale").get<double>();
  k.input_scale.resize(0);
  if (j.contains("input_scale")) {
    const auto s = j.at("input_scale").get<std::vector<double>>();
    k.input_scale = Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size()));
  }
}

Execution parse_execution(const std::string& s) {
  if (s == "serial") return Execution::serial;
  if (s == "parallel") return Execution::parallel;
  throw InvalidArgument("unknown execution mode '" + s + "'");
}

namespace serial {

Matrix kernel_matrix(const SquaredExponential& k, const Matrix& rows) {
  const Index n = rows.rows();
  Matrix K(n, n);
  for (Index i = 0; i < n; ++i) {
    K(i, i) = k.signal_variance;
    for (Index j = i + 1; j < n; ++j) {
      K(i, j) = k(rows.row(i), rows.row(j));
      K(j, i) = K(i, j);
    }
  }
  return K;
}

Matrix cross_kernel(const SquaredExponential& k, const Matrix& rows, const Matrix& queries) {
  Matrix C(rows.rows(), queries.rows());
  for (Index q = 0; q < queries.rows(); ++q) {
    for (Index i = 0; i < rows.rows(); ++i) C(i, q) = k(rows.row(i), queries.row(q));
  }
  return C;
}

}  // namespace serial

namespace parallel {
namespace {

Matrix scaled(const SquaredExponential& k, const Matrix& m) {
  if (k.input_scale.size() == 0) return m / k.lengthscale;
  return m * (k.input_scale / k.lengthscale).asDiagonal();
}

}  // namespace

Matrix kernel_matrix(const SquaredExponential& k, const Matrix& rows) {
  const Matrix s = scaled(k, rows);
  const Vector norms = s.rowwise().squaredNorm();
  Matrix K = s * s.transpose();
  const Index n = rows.rows();
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double r2 = i == j ? 0.0 : std::max(0.0, norms(i) + norms(j) - 2.0 * K(i, j));
      K(i, j) = k.signal_variance * std::exp(-0.5 * r2);
    }
  }
  return K;
}

Matrix cross_kernel(const SquaredExponential& k, const Matrix& rows, const Matrix& queries) {
  const Matrix s = scaled(k, rows);
  const Matrix t = scaled(k, queries);
  const Vector ns = s.rowwise().squaredNorm();
  const Vector nt = t.rowwise().squaredNorm();
  Matrix C = s * t.transpose();
  const Index m = queries.rows();
#pragma omp parallel for schedule(static)
  for (Index q = 0; q < m; ++q) {
    for (Index i = 0; i < rows.rows(); ++i) {
      const double r2 = std::max(0.0, ns(i) + nt(q) - 2.0 * C(i, q));
      C(i, q) = k.signal_variance * std::exp(-0.5 * r2);
    }
  }
  return C;
}

}  // namespace parallel

Matrix kernel_matrix(const SquaredExponential& k, const Matrix& rows, Execution exec) {
  return exec == Execution::serial ? serial::kernel_matrix(k, rows) : parallel::kernel_matrix(k, rows);
}

Matrix cross_kernel(const SquaredExponential& k, const Matrix& rows, const Matrix& queries,
                    Execution exec) {
  return exec == Execution::serial ? serial::cross_kernel(k, rows, queries)
                                   : parallel::cross_kernel(k, rows, queries);
}

}  // namespace gpsafe

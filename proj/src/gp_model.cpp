#include "gpsafe/gp_model.hpp"

#include "gpsafe/parallel_for.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gpsafe {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-6;

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) rows.back()[j] = m(i, j);
  }
  return rows;
}

Matrix json_matrix(const nlohmann::json& j, Index cols, const char* what) {
  Matrix m(static_cast<Index>(j.size()), cols);
  for (Index i = 0; i < m.rows(); ++i) {
    const auto& row = j.at(i);
    if (static_cast<Index>(row.size()) != cols) throw InvalidArgument(std::string("model json: bad row width in ") + what);
    for (Index c = 0; c < cols; ++c) m(i, c) = row.at(c).get<double>();
  }
  return m;
}

}  // namespace

std::string to_string(PriorMean m) { return m == PriorMean::zero ? "zero" : "state"; }

PriorMean parse_prior_mean(const std::string& s) {
  if (s == "zero") return PriorMean::zero;
  if (s == "state") return PriorMean::state;
  throw InvalidArgument("unknown prior mean '" + s + "'");
}

void GpModel::factorize(Execution exec, std::optional<double> fixed_jitter) {
  Matrix K = kernel_matrix(kernel_, inputs_, exec);
  const double s2 = kernel_.signal_variance;
  double eps = fixed_jitter ? *fixed_jitter : kJitterStart * s2;
  for (;;) {
    Matrix Kj = K;
    Kj.diagonal().array() += eps;
    llt_.compute(Kj);
    if (llt_.info() == Eigen::Success) break;
    if (fixed_jitter || eps >= kJitterMax * s2 * (1 - 1e-12)) {
      throw FitError("kernel matrix not positive definite at jitter " + std::to_string(eps / s2) +
                     " * signal variance (" + std::to_string(size()) + " inputs)");
    }
    eps *= 10.0;
  }
  jitter_ = eps;
  alpha_ = llt_.solve(targets_);
}

void GpModel::compute_k_inv_frobenius() {
  const Matrix inv = llt_.solve(Matrix::Identity(size(), size()));
  k_inv_frobenius_ = inv.norm();
}

void GpModel::group_controls() {
  control_group_.assign(static_cast<std::size_t>(size()), 0);
  std::vector<Vector> table;
  for (Index i = 0; i < size(); ++i) {
    const Vector u = inputs_.row(i).tail(control_dim_).transpose();
    auto it = std::find_if(table.begin(), table.end(), [&](const Vector& c) { return c == u; });
    if (it == table.end()) {
      table.push_back(u);
      it = table.end() - 1;
    }
    control_group_[static_cast<std::size_t>(i)] = it - table.begin();
    if (static_cast<Index>(table.size()) > StatePosterior::kMaxGroups) break;
  }
  distinct_controls_.resize(static_cast<Index>(table.size()), control_dim_);
  for (Index g = 0; g < distinct_controls_.rows(); ++g) distinct_controls_.row(g) = table[g].transpose();
}

GpModel GpModel::fit(const SquaredExponential& kernel, const Dataset& data, const GpFitOptions& options) {
  if (data.empty()) throw InvalidArgument("cannot fit a GP to an empty dataset");
  kernel.validate(data.input_dim());
  if (!(options.delta > 0.0 && options.delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (options.input_domain.dim() != data.input_dim()) {
    throw InvalidArgument("fit: input domain dimension does not match the dataset");
  }
  if (!(options.dynamics_lipschitz >= 0.0)) throw InvalidArgument("fit: dynamics Lipschitz constant must be >= 0");

  GpModel m;
  m.kernel_ = kernel;
  m.prior_mean_ = options.prior_mean;
  m.state_dim_ = data.state_dim();
  m.control_dim_ = data.control_dim();
  m.inputs_ = data.inputs();
  m.observations_ = data.next_states();
  m.targets_ = m.observations_;
  if (m.prior_mean_ == PriorMean::state) m.targets_ -= data.states();
  m.delta_ = options.delta;
  m.factorize(options.execution, std::nullopt);
  m.compute_k_inv_frobenius();
  m.group_controls();

  if (options.error_bound_tau) {
    m.bound_ = uniform_error_beta(m, options.input_domain, options.delta, *options.error_bound_tau,
                                  options.dynamics_lipschitz);
  } else {
    if (!(options.grid_tau > 0.0)) throw InvalidArgument("fit: grid_tau or error_bound_tau is required");
    const double sigma_tilde = variance_upper_bound(m, options.grid_tau);
    double tau = options.grid_tau;
    for (int it = 0; it < 60; ++it) {
      m.bound_ = uniform_error_beta(m, options.input_domain, options.delta, tau, options.dynamics_lipschitz);
      if (m.bound_.gamma <= options.gamma_budget * m.bound_.beta * sigma_tilde) break;
      tau *= 0.1;
    }
  }
  return m;
}

Prediction GpModel::predict_joint(const Vector& w) const {
  require_dim(w, input_dim(), "predict input");
  require_finite(w, "predict input");
  Vector ks(size());
  for (Index i = 0; i < size(); ++i) ks(i) = kernel_(inputs_.row(i).transpose(), w);
  Prediction p;
  p.mean = alpha_.transpose() * ks;
  if (prior_mean_ == PriorMean::state) p.mean += w.head(state_dim_);
  const Vector v = llt_.matrixL().solve(ks);
  const double var = std::max(0.0, kernel_.signal_variance - v.squaredNorm());
  p.sigma = static_cast<double>(state_dim_) * std::sqrt(var);
  return p;
}

Prediction GpModel::predict(const Vector& x, const Vector& u) const {
  require_dim(x, state_dim_, "predict state");
  require_dim(u, control_dim_, "predict control");
  Vector w(input_dim());
  w << x, u;
  return predict_joint(w);
}

void GpModel::predict_batch(const Matrix& queries, Matrix& means, Vector& sigmas, Execution exec) const {
  if (queries.cols() != input_dim()) throw InvalidArgument("predict_batch: query width mismatch");
  const Index m = queries.rows();
  means.resize(m, state_dim_);
  sigmas.resize(m);
  if (exec == Execution::serial) {
    for (Index q = 0; q < m; ++q) {
      const Prediction p = predict_joint(queries.row(q).transpose());
      means.row(q) = p.mean.transpose();
      sigmas(q) = p.sigma;
    }
    return;
  }
  if (!queries.allFinite()) throw InvalidArgument("predict input contains non-finite values");
  constexpr Index kBlock = 128;
  const Index blocks = (m + kBlock - 1) / kBlock;
  for_each_index(blocks, Execution::parallel, [&](Index b) {
    const Index start = b * kBlock;
    const Index len = std::min(kBlock, m - start);
    const Matrix q = queries.middleRows(start, len);
    const Matrix C = serial::cross_kernel(kernel_, inputs_, q);
    Matrix mu = C.transpose() * alpha_;
    if (prior_mean_ == PriorMean::state) mu += q.leftCols(state_dim_);
    const Matrix V = llt_.matrixL().solve(C);
    const Vector var = (kernel_.signal_variance - V.colwise().squaredNorm().array()).cwiseMax(0.0).matrix().transpose();
    means.middleRows(start, len) = mu;
    sigmas.segment(start, len) = static_cast<double>(state_dim_) * var.array().sqrt().matrix();
  });
}

StatePosterior::StatePosterior(const GpModel& model, const Vector& x) : model_(&model), x_(x) {
  require_dim(x, model.state_dim(), "state");
  require_finite(x, "state");
  const Index groups = model.distinct_controls().rows();
  factored_ = groups <= kMaxGroups;
  if (!factored_) return;
  const Index n = model.size();
  Matrix v = Matrix::Zero(n, groups);
  Vector w(model.input_dim());
  for (Index i = 0; i < n; ++i) {
    const Index g = model.control_group()[static_cast<std::size_t>(i)];
    w << x, model.distinct_controls().row(g).transpose();
    v(i, g) = model.kernel()(model.inputs().row(i).transpose(), w);
  }
  mean_coef_ = v.transpose() * model.alpha();
  w_ = model.factorization().matrixL().solve(v);
}

Vector StatePosterior::control_weights(const Vector& u) const {
  const GpModel& m = *model_;
  const Matrix& controls = m.distinct_controls();
  Vector a(controls.rows());
  Vector w(m.input_dim()), c(m.input_dim());
  w << x_, u;
  c << x_, Vector::Zero(m.control_dim());
  for (Index g = 0; g < controls.rows(); ++g) {
    c.tail(m.control_dim()) = controls.row(g).transpose();
    a(g) = m.kernel()(w, c) / m.kernel().signal_variance;
  }
  return a;
}

Vector StatePosterior::predict_mean(const Vector& u) const {
  if (!factored_) return model_->predict(x_, u).mean;
  require_dim(u, model_->control_dim(), "predict control");
  require_finite(u, "predict control");
  Vector mean = mean_coef_.transpose() * control_weights(u);
  if (model_->prior_mean() == PriorMean::state) mean += x_;
  return mean;
}

Prediction StatePosterior::predict(const Vector& u) const {
  if (!factored_) return model_->predict(x_, u);
  require_dim(u, model_->control_dim(), "predict control");
  require_finite(u, "predict control");
  const Vector a = control_weights(u);
  Prediction p;
  p.mean = mean_coef_.transpose() * a;
  if (model_->prior_mean() == PriorMean::state) p.mean += x_;
  const double var = std::max(0.0, model_->kernel().signal_variance - (w_ * a).squaredNorm());
  p.sigma = static_cast<double>(model_->state_dim()) * std::sqrt(var);
  return p;
}

double GpModel::sigma_tolerance() const {
  return static_cast<double>(state_dim_) * std::sqrt(jitter_ + 1e-13 * kernel_.signal_variance);
}

GpModel GpModel::with_beta(double beta) const {
  GpModel m = *this;
  m.bound_.beta = beta;
  m.bound_.gamma = error_gamma(m.bound_, beta);
  return m;
}

nlohmann::json GpModel::to_json() const {
  nlohmann::json j;
  j["format"] = "gpsafe-gp-model";
  j["version"] = 1;
  j["kernel"] = kernel_;
  j["prior_mean"] = to_string(prior_mean_);
  j["state_dim"] = state_dim_;
  j["control_dim"] = control_dim_;
  j["jitter"] = jitter_;
  j["k_inv_frobenius"] = k_inv_frobenius_;
  j["delta"] = delta_;
  j["beta_f"] = bound_.beta;
  j["gamma"] = bound_.gamma;
  j["error_bound_tau"] = bound_.tau;
  j["log_covering"] = bound_.log_covering;
  j["omega"] = bound_.omega;
  j["mean_lipschitz"] = std::vector<double>(bound_.mean_lipschitz.data(),
                                            bound_.mean_lipschitz.data() + bound_.mean_lipschitz.size());
  j["target_lipschitz"] = bound_.target_lipschitz;
  j["inputs"] = matrix_json(inputs_);
  j["observations"] = matrix_json(observations_);
  j["alpha"] = matrix_json(alpha_);
  return j;
}

GpModel GpModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gpsafe-gp-model") throw InvalidArgument("not a gpsafe GP model file");
  GpModel m;
  m.kernel_ = j.at("kernel").get<SquaredExponential>();
  m.prior_mean_ = parse_prior_mean(j.at("prior_mean").get<std::string>());
  m.state_dim_ = j.at("state_dim").get<Index>();
  m.control_dim_ = j.at("control_dim").get<Index>();
  m.kernel_.validate(m.input_dim());
  m.inputs_ = json_matrix(j.at("inputs"), m.input_dim(), "inputs");
  m.observations_ = json_matrix(j.at("observations"), m.state_dim_, "observations");
  if (m.observations_.rows() != m.inputs_.rows()) throw InvalidArgument("model json: inputs/observations length mismatch");
  m.targets_ = m.observations_;
  if (m.prior_mean_ == PriorMean::state) m.targets_ -= m.inputs_.leftCols(m.state_dim_);
  m.delta_ = j.at("delta").get<double>();
  m.factorize(Execution::parallel, j.at("jitter").get<double>());
  m.group_controls();
  if (j.contains("alpha")) {
    // The stored weights are authoritative; a mismatch means a corrupted file.
    const Matrix stored = json_matrix(j.at("alpha"), m.state_dim_, "alpha");
    const double scale = std::max(1.0, m.alpha_.cwiseAbs().maxCoeff());
    if (stored.rows() != m.alpha_.rows() || (stored - m.alpha_).cwiseAbs().maxCoeff() > 1e-6 * scale) {
      throw InvalidArgument("model json: alpha does not match the refactorized kernel matrix");
    }
    m.alpha_ = stored;
  }
  if (j.contains("k_inv_frobenius")) {
    m.k_inv_frobenius_ = j.at("k_inv_frobenius").get<double>();
  } else {
    m.compute_k_inv_frobenius();
  }
  m.bound_.beta = j.at("beta_f").get<double>();
  m.bound_.gamma = j.value("gamma", 0.0);
  m.bound_.tau = j.value("error_bound_tau", 0.0);
  m.bound_.log_covering = j.value("log_covering", 0.0);
  m.bound_.omega = j.value("omega", 0.0);
  const auto ml = j.value("mean_lipschitz", std::vector<double>{});
  m.bound_.mean_lipschitz = Eigen::Map<const Vector>(ml.data(), static_cast<Index>(ml.size()));
  if (j.contains("target_lipschitz")) {
    // gamma is a function of beta; recompute it so the two stay consistent.
    m.bound_.target_lipschitz = j.at("target_lipschitz").get<double>();
    m.bound_.gamma = error_gamma(m.bound_, m.bound_.beta);
  }
  return m;
}

void GpModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << to_json().dump();
}

GpModel GpModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return from_json(nlohmann::json::parse(in));
}

double variance_upper_bound(const GpModel& model, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("variance_upper_bound: tau must be positive");
  const double lk = model.kernel_lipschitz();
  const double n = static_cast<double>(model.size());
  const double inner = 2.0 * lk * tau + 2.0 * n * lk * tau * model.k_inv_frobenius() * model.kernel().max_value();
  return static_cast<double>(model.state_dim()) * std::sqrt(inner);
}

Vector mean_upper_bound(const GpModel& model, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("mean_upper_bound: tau must be positive");
  const double slope = std::sqrt(static_cast<double>(model.size())) * model.kernel_lipschitz() * tau;
  Vector bound = model.observations().colwise().maxCoeff().transpose() + slope * model.k_inv_y_norms();
  if (model.prior_mean() == PriorMean::state) bound.array() += tau;
  return bound;
}

ErrorBound uniform_error_beta(const GpModel& model, const Box& domain, double delta, double tau, double l_f) {
  if (!(tau > 0.0)) throw InvalidArgument("uniform_error_beta: tau must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("uniform_error_beta: delta must lie in (0, 1)");
  if (domain.dim() != model.input_dim()) throw InvalidArgument("uniform_error_beta: domain dimension mismatch");
  const double dim = static_cast<double>(domain.dim());
  const double n = static_cast<double>(model.size());
  const double lk = model.kernel_lipschitz();

  ErrorBound b;
  b.tau = tau;
  // The index set of the output dimensions is part of the covered domain.
  b.log_covering = std::log(static_cast<double>(model.state_dim()));
  const Vector sides = domain.sides();
  for (Index j = 0; j < domain.dim(); ++j) {
    b.log_covering += std::log(std::max(1.0, std::ceil(sides(j) * dim / (2.0 * tau))));
  }
  b.beta = std::sqrt(2.0 * (b.log_covering - std::log(delta)));
  b.omega = std::sqrt(2.0 * tau * lk * (1.0 + n * model.k_inv_frobenius() * model.kernel().max_value()));
  b.mean_lipschitz = lk * std::sqrt(n) * model.k_inv_y_norms();
  // Lipschitz constant of the regressed function; the state prior mean
  // subtracts the identity map.
  b.target_lipschitz = l_f + (model.prior_mean() == PriorMean::state ? 1.0 : 0.0);
  b.gamma = error_gamma(b, b.beta);
  return b;
}

double error_gamma(const ErrorBound& b, double beta) {
  double gamma = 0.0;
  for (Index d = 0; d < b.mean_lipschitz.size(); ++d) {
    gamma += (b.mean_lipschitz(d) + b.target_lipschitz) * b.tau + beta * b.omega;
  }
  return gamma;
}

}  // namespace gpsafe

#include "gpsafe/synthesis.hpp"

#include "gpsafe/parallel_for.hpp"

#include <cmath>
#include <sstream>

namespace gpsafe {

void to_json(nlohmann::json& j, const ControlSamplerConfig& c) {
  j = nlohmann::json{{"mode", c.mode == ControlSamplerConfig::Mode::grid ? "grid" : "random"},
                     {"max_resolution", c.max_resolution},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ControlSamplerConfig& c) {
  const ControlSamplerConfig d;
  const std::string mode = j.value("mode", std::string("grid"));
  if (mode == "grid") {
    c.mode = ControlSamplerConfig::Mode::grid;
  } else if (mode == "random") {
    c.mode = ControlSamplerConfig::Mode::random;
  } else {
    throw InvalidArgument("unknown control sampler mode '" + mode + "'");
  }
  c.max_resolution = j.value("max_resolution", d.max_resolution);
  c.seed = j.value("seed", d.seed);
  if (c.max_resolution < 2) throw InvalidArgument("sampler max_resolution must be >= 2");
}

std::vector<Vector> sample_controls(const Box& control_box, int resolution, const ControlSamplerConfig& config,
                                    std::uint64_t stream) {
  if (resolution < 2) throw InvalidArgument("sampling resolution must be >= 2");
  const Index nu = control_box.dim();
  Index count = 1;
  for (Index j = 0; j < nu; ++j) count *= resolution;
  std::vector<Vector> out;
  out.reserve(count);
  if (config.mode == ControlSamplerConfig::Mode::random) {
    Rng rng(mix_seed(config.seed, stream * 64 + static_cast<std::uint64_t>(resolution)));
    for (Index i = 0; i < count; ++i) out.push_back(rng.uniform(control_box));
    return out;
  }
  for (Index i = 0; i < count; ++i) {
    Vector u(nu);
    Index rest = i;
    for (Index j = nu - 1; j >= 0; --j) {
      const Index k = rest % resolution;
      rest /= resolution;
      const double lo = control_box.lower()(j), hi = control_box.upper()(j);
      u(j) = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(resolution - 1);
    }
    out.push_back(std::move(u));
  }
  return out;
}

namespace {

std::string describe(const Vector& v) {
  std::ostringstream os;
  os << "[";
  for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << "]";
  return os.str();
}

AssumptionViolation no_increasing_control(const Grid& grid, Index i, int max_resolution) {
  const Vector x = grid.point(i);
  return AssumptionViolation("no sampled control increases d_dot at grid point " + std::to_string(i) + " " +
                                 describe(x) + " up to resolution " + std::to_string(max_resolution),
                             x);
}

}  // namespace

InfSupEstimate estimate_infsup(const Environment& env, const Grid& grid, double l_delta,
                               const ControlSamplerConfig& sampler, Execution exec) {
  if (grid.dim() != env.state_dim()) throw InvalidArgument("estimate_infsup: grid dimension mismatch");
  if (!(l_delta >= 0.0)) throw InvalidArgument("estimate_infsup: L_delta must be >= 0");
  const Index n = grid.size();
  InfSupEstimate est;
  est.controls.resize(n, env.control_dim());
  est.values.resize(n);
  est.resolutions.assign(n, 0);
  for_each_index(n, exec, [&](Index i) {
    const Vector x = grid.point(i);
    const double base = env.measure(x).d_dot;
    for (int r = 2; r <= sampler.max_resolution; r *= 2) {
      double best = -std::numeric_limits<double>::infinity();
      Vector best_u;
      for (const Vector& u : sample_controls(env.control_box(), r, sampler, static_cast<std::uint64_t>(i))) {
        const double v = env.measure(env.step(x, u)).d_dot - base;
        if (v > best) {
          best = v;
          best_u = u;
        }
      }
      if (best > 0.0) {
        est.controls.row(i) = best_u.transpose();
        est.values(i) = best;
        est.resolutions[i] = r;
        return;
      }
    }
    throw no_increasing_control(grid, i, sampler.max_resolution);
  });
  est.min_value = est.values.minCoeff(&est.argmin);
  est.lower_bound = est.min_value - l_delta * grid.tau();
  return est;
}

std::string to_string(DatasetControls c) { return c == DatasetControls::first ? "first" : "all"; }

DatasetControls parse_dataset_controls(const std::string& s) {
  if (s == "first") return DatasetControls::first;
  if (s == "all") return DatasetControls::all;
  throw InvalidArgument("unknown dataset control selection '" + s + "'");
}

DatasetBuild build_dataset(const Environment& env, const Grid& grid, double infsup_lower_bound,
                           const ControlSamplerConfig& sampler, DatasetControls controls, Execution exec) {
  if (grid.dim() != env.state_dim()) throw InvalidArgument("build_dataset: grid dimension mismatch");
  const double threshold = 0.5 * infsup_lower_bound;
  const Index n = grid.size();
  std::vector<std::vector<Vector>> chosen(n);
  std::vector<std::vector<double>> rates(n);
  for_each_index(n, exec, [&](Index i) {
    const Vector x = grid.point(i);
    const double base = env.measure(x).d_dot;
    for (int r = 2; r <= sampler.max_resolution; r *= 2) {
      double best = -std::numeric_limits<double>::infinity();
      for (const Vector& u : sample_controls(env.control_box(), r, sampler, static_cast<std::uint64_t>(i))) {
        const double v = env.measure(env.step(x, u)).d_dot - base;
        if (!(v > threshold)) continue;
        if (controls == DatasetControls::all) {
          chosen[i].push_back(u);
          rates[i].push_back(v);
        } else if (v > best) {
          best = v;
          chosen[i].assign(1, u);
          rates[i].assign(1, v);
        }
      }
      if (!chosen[i].empty()) return;
    }
    throw no_increasing_control(grid, i, sampler.max_resolution);
  });
  DatasetBuild out{Dataset(env.state_dim(), env.control_dim()), {}, {}};
  Index rows = 0;
  for (const auto& c : chosen) rows += static_cast<Index>(c.size());
  out.data.reserve(rows);
  for (Index i = 0; i < n; ++i) {
    const Vector x = grid.point(i);
    for (std::size_t k = 0; k < chosen[i].size(); ++k) {
      out.data.add(x, chosen[i][k], env.step(x, chosen[i][k]));
      out.grid_index.push_back(i);
      out.delta_rate.push_back(rates[i][k]);
    }
  }
  return out;
}

TauCondition check_tau_condition(const TauConditionInputs& in) {
  if (!(in.tau > 0.0)) throw InvalidArgument("tau condition: tau must be positive");
  const auto& l = in.lipschitz;
  TauCondition c;
  c.gp_term = 2.0 * in.beta * static_cast<double>(in.state_dim) * std::sqrt(2.0 * in.kernel_lipschitz) *
              std::sqrt(1.0 + static_cast<double>(in.data_size) * in.k_inv_frobenius * in.kernel_max);
  if (in.infsup > 0.0) {
    const double ratio = in.infsup / (2.0 * (l.distance + l.distance_rate) * (1.0 + l.dynamics + c.gp_term));
    c.rhs = std::min(1.0, ratio * ratio);
  }
  c.satisfied = in.infsup > 0.0 && in.tau <= c.rhs;
  return c;
}

double tau_bound_without_gp(double infsup, const LipschitzBundle& l) {
  if (!(infsup > 0.0)) return 0.0;
  const double ratio = infsup / (2.0 * (l.distance + l.distance_rate) * (1.0 + l.dynamics));
  return std::min(1.0, ratio * ratio);
}

KSelection select_k(const Dataset& data, const MeasureFn& measure, double tau, const LipschitzBundle& l,
                    double beta, double sigma_tilde, double eta, double d_min, double margin) {
  if (data.empty()) throw InvalidArgument("select_k: empty dataset");
  if (!(margin >= 0.0)) throw InvalidArgument("select_k: margin must be >= 0");
  const double l_sum = l.distance + l.distance_rate;
  const double slack = l_sum * (tau + l.dynamics * tau + 2.0 * beta * sigma_tilde);
  KSelection sel;
  sel.upsilon.resize(data.size());
  sel.upsilon_max = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < data.size(); ++i) {
    const SafetyMeasure now = measure(data.state(i));
    const SafetyMeasure next = measure(data.next_state(i));
    const double den = next.d_dot - now.d_dot - slack;
    if (!(den > 0.0)) {
      throw Error("select_k: nonpositive denominator " + std::to_string(den) + " at dataset row " +
                  std::to_string(i));
    }
    sel.upsilon[i] = (eta + now.d - next.d) / den;
    if (sel.upsilon[i] > sel.upsilon_max) {
      sel.upsilon_max = sel.upsilon[i];
      sel.argmax = i;
    }
  }
  sel.params.sigma = 0.0;
  sel.params.n = 1.0;
  sel.params.k = (1.0 + margin) * std::max(1.0, sel.upsilon_max);
  sel.params.eta = eta;
  sel.params.d_min = d_min;
  return sel;
}

void to_json(nlohmann::json& j, const SynthesisConfig& c) {
  j = nlohmann::json{{"kernel", c.kernel},
                     {"delta", c.delta},
                     {"eta", c.eta},
                     {"tau0", c.tau0},
                     {"shrink", c.shrink},
                     {"max_attempts", c.max_attempts},
                     {"grid_cap", c.grid_cap},
                     {"gp_size_cap", c.gp_size_cap},
                     {"sampler", c.sampler},
                     {"dataset_controls", to_string(c.dataset_controls)},
                     {"prior_mean", to_string(c.prior_mean)},
                     {"gamma_budget", c.gamma_budget},
                     {"k_margin", c.k_margin},
                     {"execution", c.execution == Execution::serial ? "serial" : "parallel"}};
  if (c.d_min) j["d_min"] = *c.d_min;
  if (c.lipschitz) j["lipschitz"] = *c.lipschitz;
}

void from_json(const nlohmann::json& j, SynthesisConfig& c) {
  const SynthesisConfig d;
  c.kernel = j.at("kernel").get<SquaredExponential>();
  c.delta = j.value("delta", d.delta);
  c.eta = j.value("eta", d.eta);
  c.d_min = j.contains("d_min") ? std::optional<double>(j.at("d_min").get<double>()) : std::nullopt;
  c.lipschitz = j.contains("lipschitz") ? std::optional<LipschitzBundle>(j.at("lipschitz").get<LipschitzBundle>())
                                        : std::nullopt;
  c.tau0 = j.value("tau0", d.tau0);
  c.shrink = j.value("shrink", d.shrink);
  c.max_attempts = j.value("max_attempts", d.max_attempts);
  c.grid_cap = j.value("grid_cap", d.grid_cap);
  c.gp_size_cap = j.value("gp_size_cap", d.gp_size_cap);
  c.sampler = j.value("sampler", d.sampler);
  c.dataset_controls = parse_dataset_controls(j.value("dataset_controls", std::string("first")));
  c.prior_mean = parse_prior_mean(j.value("prior_mean", std::string("zero")));
  c.gamma_budget = j.value("gamma_budget", d.gamma_budget);
  c.k_margin = j.value("k_margin", d.k_margin);
  c.execution = parse_execution(j.value("execution", std::string("parallel")));
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (!(c.eta >= 0.0)) throw InvalidArgument("eta must be >= 0");
  if (!(c.tau0 > 0.0)) throw InvalidArgument("tau0 must be positive");
  if (!(c.shrink > 0.0 && c.shrink < 1.0)) throw InvalidArgument("shrink factor must lie in (0, 1)");
  if (c.max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
}

void to_json(nlohmann::json& j, const SynthesisAttempt& a) {
  j = nlohmann::json{{"tau", a.tau},
                     {"grid_points", a.grid_points},
                     {"dataset_size", a.dataset_size},
                     {"infsup_lower_bound", a.infsup_lower_bound},
                     {"tau_bound", a.tau_bound},
                     {"outcome", a.outcome}};
}

void from_json(const nlohmann::json& j, SynthesisAttempt& a) {
  a.tau = j.at("tau").get<double>();
  a.grid_points = j.at("grid_points").get<Index>();
  a.dataset_size = j.at("dataset_size").get<Index>();
  a.infsup_lower_bound = j.at("infsup_lower_bound").get<double>();
  a.tau_bound = j.at("tau_bound").get<double>();
  a.outcome = j.at("outcome").get<std::string>();
}

void to_json(nlohmann::json& j, const SynthesisCertificate& c) {
  j = nlohmann::json{{"environment", c.environment},
                     {"tau", c.tau},
                     {"grid_points", c.grid_points},
                     {"dataset_size", c.dataset_size},
                     {"infsup_lower_bound", c.infsup_lower_bound},
                     {"delta", c.delta},
                     {"beta_f", c.beta_f},
                     {"gamma", c.gamma},
                     {"sigma_tilde", c.sigma_tilde},
                     {"kernel_lipschitz", c.kernel_lipschitz},
                     {"k_inv_frobenius", c.k_inv_frobenius},
                     {"jitter", c.jitter},
                     {"tau_condition_rhs", c.tau_condition_rhs},
                     {"tau_condition_ok", c.tau_condition_ok},
                     {"lipschitz", c.lipschitz},
                     {"params", c.params},
                     {"upsilon_max", c.upsilon_max},
                     {"l_phi", c.l_phi},
                     {"attempts", c.attempts}};
}

void from_json(const nlohmann::json& j, SynthesisCertificate& c) {
  c.environment = j.at("environment").get<std::string>();
  c.tau = j.at("tau").get<double>();
  c.grid_points = j.at("grid_points").get<Index>();
  c.dataset_size = j.at("dataset_size").get<Index>();
  c.infsup_lower_bound = j.at("infsup_lower_bound").get<double>();
  c.delta = j.at("delta").get<double>();
  c.beta_f = j.at("beta_f").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.sigma_tilde = j.at("sigma_tilde").get<double>();
  c.kernel_lipschitz = j.at("kernel_lipschitz").get<double>();
  c.k_inv_frobenius = j.at("k_inv_frobenius").get<double>();
  c.jitter = j.at("jitter").get<double>();
  c.tau_condition_rhs = j.at("tau_condition_rhs").get<double>();
  c.tau_condition_ok = j.at("tau_condition_ok").get<bool>();
  c.lipschitz = j.at("lipschitz").get<LipschitzBundle>();
  c.params = j.at("params").get<SafetyIndexParams>();
  c.upsilon_max = j.at("upsilon_max").get<double>();
  c.l_phi = j.at("l_phi").get<double>();
  c.attempts = j.value("attempts", std::vector<SynthesisAttempt>{});
}

namespace {

GpFitOptions fit_options(const Environment& env, const SynthesisConfig& config, double tau) {
  GpFitOptions o;
  o.delta = config.delta;
  o.input_domain = env.joint_box();
  o.dynamics_lipschitz = config.lipschitz ? config.lipschitz->dynamics : env.lipschitz().dynamics;
  o.prior_mean = config.prior_mean;
  o.grid_tau = tau;
  o.gamma_budget = config.gamma_budget;
  o.execution = config.execution;
  return o;
}

ModelBuild fit_on(const Environment& env, const SynthesisConfig& config, Grid grid, InfSupEstimate infsup,
                  DatasetBuild dataset) {
  if (dataset.data.size() > config.gp_size_cap) {
    throw GridTooLarge("dataset of " + std::to_string(dataset.data.size()) + " rows exceeds the GP size cap of " +
                           std::to_string(config.gp_size_cap),
                       dataset.data.size());
  }
  const LipschitzBundle l = config.lipschitz.value_or(env.lipschitz());
  GpModel model = GpModel::fit(config.kernel, dataset.data, fit_options(env, config, grid.tau()));
  const double sigma_tilde = variance_upper_bound(model, grid.tau());
  TauConditionInputs in;
  in.tau = grid.tau();
  in.infsup = infsup.lower_bound;
  in.lipschitz = l;
  in.beta = model.beta();
  in.state_dim = env.state_dim();
  in.kernel_lipschitz = model.kernel_lipschitz();
  in.data_size = model.size();
  in.k_inv_frobenius = model.k_inv_frobenius();
  in.kernel_max = model.kernel().max_value();
  const TauCondition cond = check_tau_condition(in);
  return ModelBuild{std::move(grid), std::move(infsup), std::move(dataset), std::move(model), sigma_tilde, cond};
}

}  // namespace

ModelBuild build_model(const Environment& env, double tau, const SynthesisConfig& config) {
  const LipschitzBundle l = config.lipschitz.value_or(env.lipschitz());
  Grid grid = discretize(env.state_box(), tau, config.grid_cap);
  InfSupEstimate infsup = estimate_infsup(env, grid, l.delta_distance_rate, config.sampler, config.execution);
  DatasetBuild dataset =
      build_dataset(env, grid, infsup.lower_bound, config.sampler, config.dataset_controls, config.execution);
  return fit_on(env, config, std::move(grid), std::move(infsup), std::move(dataset));
}

SynthesisCertificate describe_build(const Environment& env, const SynthesisConfig& config, const ModelBuild& build,
                                    const SafetyIndexParams& params) {
  const LipschitzBundle l = config.lipschitz.value_or(env.lipschitz());
  SynthesisCertificate c;
  c.environment = env.name();
  c.tau = build.grid.tau();
  c.grid_points = build.grid.size();
  c.dataset_size = build.dataset.data.size();
  c.infsup_lower_bound = build.infsup.lower_bound;
  c.delta = config.delta;
  c.beta_f = build.model.beta();
  c.gamma = build.model.gamma();
  c.sigma_tilde = build.sigma_tilde;
  c.kernel_lipschitz = build.model.kernel_lipschitz();
  c.k_inv_frobenius = build.model.k_inv_frobenius();
  c.jitter = build.model.jitter();
  c.tau_condition_rhs = build.tau_condition.rhs;
  c.tau_condition_ok = build.tau_condition.satisfied;
  c.lipschitz = l;
  c.params = params;
  c.l_phi = safety_index_lipschitz(params, l.distance, l.distance_rate, env.max_distance());
  return c;
}

SynthesisResult synthesize(const Environment& env, const SynthesisConfig& config) {
  const LipschitzBundle l = config.lipschitz.value_or(env.lipschitz());
  const double d_min = config.d_min.value_or(env.default_d_min());
  std::vector<SynthesisAttempt> attempts;
  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << "synthesis failed: " << why << " after " << attempts.size() << " attempts";
    if (!attempts.empty()) {
      const auto& last = attempts.back();
      os << "; last attempt tau=" << last.tau << " (" << last.grid_points << " grid points): " << last.outcome;
    }
    return SynthesisFailure(os.str(), attempts);
  };

  double tau = config.tau0;
  for (int a = 0; a < config.max_attempts; ++a, tau *= config.shrink) {
    SynthesisAttempt at;
    at.tau = tau;
    at.grid_points = grid_size(env.state_box(), tau);
    if (at.grid_points > config.grid_cap) {
      at.outcome = "grid above the cap";
      attempts.push_back(at);
      throw fail("grid at tau=" + std::to_string(tau) + " would have " + std::to_string(at.grid_points) +
                 " points, above the cap of " + std::to_string(config.grid_cap));
    }
    Grid grid = discretize(env.state_box(), tau, config.grid_cap);
    InfSupEstimate infsup = estimate_infsup(env, grid, l.delta_distance_rate, config.sampler, config.execution);
    at.infsup_lower_bound = infsup.lower_bound;
    if (!(infsup.lower_bound > 0.0)) {
      std::ostringstream os;
      os << "inf-sup lower bound " << infsup.lower_bound << " is not positive (min sampled delta d_dot "
         << infsup.min_value << ", L_delta * tau = " << l.delta_distance_rate * tau << ")";
      at.outcome = os.str();
      attempts.push_back(at);
      continue;
    }
    at.tau_bound = tau_bound_without_gp(infsup.lower_bound, l);
    if (tau > at.tau_bound) {
      at.outcome = "tau above " + std::to_string(at.tau_bound) + ", the admissible bound before the GP term";
      attempts.push_back(at);
      continue;
    }
    DatasetBuild dataset =
        build_dataset(env, grid, infsup.lower_bound, config.sampler, config.dataset_controls, config.execution);
    at.dataset_size = dataset.data.size();
    if (dataset.data.size() > config.gp_size_cap) {
      at.outcome = "dataset above the GP size cap";
      attempts.push_back(at);
      throw fail("dataset of " + std::to_string(dataset.data.size()) + " rows exceeds the GP size cap of " +
                 std::to_string(config.gp_size_cap));
    }
    ModelBuild build = fit_on(env, config, std::move(grid), std::move(infsup), std::move(dataset));
    at.tau_bound = build.tau_condition.rhs;
    if (!build.tau_condition.satisfied) {
      std::ostringstream os;
      os << "tau condition fails: admissible tau " << build.tau_condition.rhs << " (GP term "
         << build.tau_condition.gp_term << ", 1 + L_f = " << 1.0 + l.dynamics << ")";
      at.outcome = os.str();
      attempts.push_back(at);
      continue;
    }
    at.outcome = "tau condition holds";
    attempts.push_back(at);

    const KSelection sel = select_k(build.dataset.data, env.measure_fn(), tau, l, build.model.beta(),
                                    build.sigma_tilde, config.eta, d_min, config.k_margin);
    SynthesisCertificate c = describe_build(env, config, build, sel.params);
    c.upsilon_max = sel.upsilon_max;
    c.attempts = attempts;
    return SynthesisResult{std::move(c), std::move(build)};
  }
  throw fail("attempt limit reached");
}

}  // namespace gpsafe

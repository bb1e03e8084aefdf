#include "gpsafe/rollout.hpp"

#include "gpsafe/parallel_for.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

namespace gpsafe {

Policy uniform_random_policy(const Box& control_box, std::uint64_t seed, Index hold) {
  if (hold < 1) throw InvalidArgument("policy hold must be >= 1");
  auto rng = std::make_shared<Rng>(seed);
  auto current = std::make_shared<Vector>();
  return [control_box, rng, current, hold](const Vector&, Index t) {
    if (t % hold == 0 || current->size() == 0) *current = rng->uniform(control_box);
    return *current;
  };
}

Policy constant_policy(const Vector& u) {
  return [u](const Vector&, Index) { return u; };
}

std::vector<TraceRecord> rollout(const Environment& env, const Policy& policy, const Safeguard* safeguard,
                                 const SafetyIndexParams& params, const Vector& x0, Index steps) {
  require_dim(x0, env.state_dim(), "rollout initial state");
  require_finite(x0, "rollout initial state");
  if (steps < 0) throw InvalidArgument("rollout: negative step count");
  std::vector<TraceRecord> trace;
  trace.reserve(steps);
  Vector x = x0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index t = 0; t < steps; ++t) {
    TraceRecord r;
    r.t = t;
    r.state = x;
    r.u_ref = policy(x, t);
    r.phi = safety_index(params, env.measure(x));
    if (safeguard) {
      const SafeguardResult s = safeguard->project(x, r.u_ref);
      r.u = s.control;
      r.u_f = s.upper_bound;
      r.threshold = s.threshold;
      r.status = to_string(s.status);
    } else {
      r.u = env.control_box().clamp(r.u_ref);
      r.u_f = nan;
      r.threshold = nan;
      r.status = "unfiltered";
    }
    x = env.step(x, r.u);
    r.phi_next = safety_index(params, env.measure(x));
    trace.push_back(std::move(r));
  }
  return trace;
}

Vector sample_safe_state(const Environment& env, const SafetyIndexParams& params, Rng& rng, double lo, double hi,
                             int max_tries) {
  for (int i = 0; i < max_tries; ++i) {
    Vector x = rng.uniform(env.state_box());
    const SafetyMeasure m = env.measure(x);
    const double phi = safety_index(params, m);
    if (m.d >= params.d_min && phi >= lo && phi <= hi) return x;
  }
  throw Error("no state with d >= d_min and phi in [" + std::to_string(lo) + ", " + std::to_string(hi) + "] after " +
              std::to_string(max_tries) + " draws");
}

RolloutSummary summarize_trace(const Environment& env, const SafetyIndexParams& params,
                               const std::vector<TraceRecord>& trace) {
  RolloutSummary s;
  s.steps = static_cast<Index>(trace.size());
  s.max_phi = -std::numeric_limits<double>::infinity();
  s.min_distance = std::numeric_limits<double>::infinity();
  for (const TraceRecord& r : trace) {
    s.max_phi = std::max(s.max_phi, r.phi_next);
    const double d = env.measure(env.step(r.state, r.u)).d;
    s.min_distance = std::min(s.min_distance, d);
    if (d < params.d_min) ++s.below_d_min;
    if (r.phi_next > 0.0) ++s.positive_phi;
    if (r.status == "unfiltered") continue;
    if (r.phi_next > r.u_f) ++s.bound_violations;
    if (!(r.u_f < r.threshold)) ++s.unsafe_controls;
    if (r.status == "infeasible_fallback") ++s.fallbacks;
  }
  return s;
}

void to_json(nlohmann::json& j, const RolloutSummary& s) {
  // JSON has no infinities; an empty trace reports nulls.
  auto finite = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"steps", s.steps},
                     {"max_phi", finite(s.max_phi)},
                     {"min_distance", finite(s.min_distance)},
                     {"bound_violations", s.bound_violations},
                     {"unsafe_controls", s.unsafe_controls},
                     {"fallbacks", s.fallbacks},
                     {"positive_phi", s.positive_phi},
                     {"below_d_min", s.below_d_min}};
}

std::vector<std::string> state_names(const Environment& env) {
  if (dynamic_cast<const PlanarArm*>(&env)) return {"theta1", "theta2", "dtheta1", "dtheta2"};
  if (dynamic_cast<const DoubleIntegrator*>(&env)) return {"p", "v"};
  std::vector<std::string> n;
  for (Index i = 0; i < env.state_dim(); ++i) n.push_back("x" + std::to_string(i));
  return n;
}

std::vector<std::string> control_names(const Environment& env) {
  if (dynamic_cast<const PlanarArm*>(&env)) return {"u1", "u2"};
  std::vector<std::string> n;
  for (Index i = 0; i < env.control_dim(); ++i) n.push_back("u" + std::to_string(i + 1));
  return n;
}

namespace {

void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << ',' << buf;
}

double parse(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* begin = s.data();
  if (!s.empty() && s[0] == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidArgument("trace csv: cannot parse '" + s + "'");
  return v;
}

}  // namespace

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace,
                     const std::vector<std::string>& snames, const std::vector<std::string>& cnames) {
  out << "t";
  for (const auto& n : snames) out << ',' << n;
  for (const auto& n : cnames) out << ',' << n << "_ref";
  for (const auto& n : cnames) out << ',' << n;
  out << ",phi,phi_next,u_f,threshold,status\n";
  for (const auto& r : trace) {
    out << r.t;
    for (Index i = 0; i < r.state.size(); ++i) put(out, r.state(i));
    for (Index i = 0; i < r.u_ref.size(); ++i) put(out, r.u_ref(i));
    for (Index i = 0; i < r.u.size(); ++i) put(out, r.u(i));
    put(out, r.phi);
    put(out, r.phi_next);
    put(out, r.u_f);
    put(out, r.threshold);
    out << ',' << r.status << '\n';
  }
}

std::vector<TraceRecord> read_trace_csv(std::istream& in, Index nx, Index nu) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("trace csv is empty");
  std::vector<TraceRecord> trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<Index>(cells.size()) != 1 + nx + 2 * nu + 5) throw InvalidArgument("trace csv: wrong cell count");
    TraceRecord r;
    r.t = std::stoll(cells[0]);
    std::size_t c = 1;
    r.state.resize(nx);
    r.u_ref.resize(nu);
    r.u.resize(nu);
    for (Index i = 0; i < nx; ++i) r.state(i) = parse(cells[c++]);
    for (Index i = 0; i < nu; ++i) r.u_ref(i) = parse(cells[c++]);
    for (Index i = 0; i < nu; ++i) r.u(i) = parse(cells[c++]);
    r.phi = parse(cells[c++]);
    r.phi_next = parse(cells[c++]);
    r.u_f = parse(cells[c++]);
    r.threshold = parse(cells[c++]);
    r.status = cells[c];
    trace.push_back(std::move(r));
  }
  return trace;
}

int FeasibilityMap::total() const {
  int t = 0;
  for (int c : counts) t += c;
  return t;
}

FeasibilityMap feasibility_map(const Environment& env, const Safeguard& safeguard, const FeasibilityConfig& config,
                               Execution exec) {
  const Index np = static_cast<Index>(config.cells.size());
  if (np < 1 || np > env.state_dim()) throw InvalidArgument("feasibility map: bad number of position dimensions");
  if (config.samples_per_cell < 1) throw InvalidArgument("feasibility map: samples_per_cell must be >= 1");
  Index n_cells = 1;
  for (Index c : config.cells) {
    if (c < 1) throw InvalidArgument("feasibility map: cell counts must be >= 1");
    n_cells *= c;
  }
  const Box& box = env.state_box();
  FeasibilityMap map;
  map.cells = config.cells;
  map.samples_per_cell = config.samples_per_cell;
  map.counts.assign(n_cells, 0);
  for_each_index(n_cells, exec, [&](Index cell) {
    Vector x(env.state_dim());
    Index rest = cell;
    for (Index j = np - 1; j >= 0; --j) {
      const Index k = rest % config.cells[j];
      rest /= config.cells[j];
      const double step = box.sides()(j) / static_cast<double>(config.cells[j]);
      x(j) = box.lower()(j) + (static_cast<double>(k) + 0.5) * step;
    }
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(cell)));
    int infeasible = 0;
    for (int s = 0; s < config.samples_per_cell; ++s) {
      for (Index j = np; j < env.state_dim(); ++j) x(j) = rng.uniform(box.lower()(j), box.upper()(j));
      if (!safeguard.scan_has_safe(x)) ++infeasible;
    }
    map.counts[cell] = infeasible;
  });
  return map;
}

void write_feasibility_csv(std::ostream& out, const FeasibilityMap& map) {
  const Index cols = map.cells.back();
  for (std::size_t i = 0; i < map.counts.size(); ++i) {
    out << map.counts[i] << ((static_cast<Index>(i) + 1) % cols == 0 ? "\n" : ",");
  }
}

}  // namespace gpsafe

#include "gpsafe/rollout.hpp"
#include "gpsafe/synthesis.hpp"
#include "gpsafe/validation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#ifndef GPSAFE_VERSION
#define GPSAFE_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpsafe;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Missing files, unreadable or malformed inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string artifacts;
  std::optional<double> k_override;
  std::optional<Index> steps;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

class Run {
 public:
  explicit Run(const Options& opt) : opt_(opt) {
    json raw = read_json(opt.config_path);
    // A manifest carries its resolved config; rerunning from it reproduces the run.
    if (raw.value("format", "") == "gpsafe-manifest") raw = raw.at("config");
    config_ = std::move(raw);
    if (opt.seed) config_["seed"] = *opt.seed;
    seed_ = config_.value("seed", std::uint64_t{0});
    try {
      env_ = make_environment(config_.at("environment"));
      if (config_.contains("synthesis")) {
        synthesis_ = config_.at("synthesis").get<SynthesisConfig>();
        config_["synthesis"] = synthesis_;
      }
      SafeguardConfig sg = config_.value("safeguard", SafeguardConfig{});
      sg.seed = seed_;
      config_["safeguard"] = sg;
      safeguard_ = sg;
    } catch (const json::exception& e) {
      throw UsageError(std::string("bad config: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw UsageError(std::string("bad config: ") + e.what());
    }
    out_ = opt.out;
    artifacts_ = opt.artifacts.empty() ? out_ : fs::path(opt.artifacts);
    fs::create_directories(out_);
  }

  const json& config() const { return config_; }
  const Environment& env() const { return *env_; }
  const SynthesisConfig& synthesis() const { return synthesis_; }
  const SafeguardConfig& safeguard_config() const { return safeguard_; }
  std::uint64_t seed() const { return seed_; }
  fs::path out(const std::string& name) const { return out_ / name; }
  fs::path artifact(const std::string& name) const { return artifacts_ / name; }

  json section(const std::string& name) const { return config_.value(name, json::object()); }

  void add_output(const std::string& name) { outputs_.push_back(name); }

  void write_manifest(int exit_code) const {
    json m;
    m["format"] = "gpsafe-manifest";
    m["command"] = opt_.command;
    m["arguments"] = opt_.arguments;
    m["version"] = GPSAFE_VERSION;
    m["created"] = utc_now();
    m["exit_code"] = exit_code;
    m["outputs"] = outputs_;
    m["config"] = config_;
    if (!opt_.artifacts.empty()) m["artifacts"] = opt_.artifacts;
    if (opt_.k_override) m["k_override"] = *opt_.k_override;
    if (opt_.steps) m["steps"] = *opt_.steps;
    write_json(out_ / "manifest.json", m);
  }

 private:
  const Options& opt_;
  json config_;
  std::uint64_t seed_ = 0;
  std::unique_ptr<Environment> env_;
  SynthesisConfig synthesis_;
  SafeguardConfig safeguard_;
  fs::path out_;
  fs::path artifacts_;
  std::vector<std::string> outputs_;
};

// Certificate (or application summary) and model written by `synth`.
struct Artifacts {
  SynthesisCertificate certificate;
  GpModel model;
};

Artifacts load_artifacts(const Run& run) {
  fs::path cert = run.artifact("certificate.json");
  if (!fs::exists(cert)) cert = run.artifact("application.json");
  const fs::path model = run.artifact("model.json");
  if (!fs::exists(cert) || !fs::exists(model)) {
    throw UsageError("missing certificate.json (or application.json) or model.json in " +
                     cert.parent_path().string() + " (run synth first or pass --artifacts)");
  }
  try {
    Artifacts a{read_json(cert).get<SynthesisCertificate>(), GpModel::from_json(read_json(model))};
    if (a.certificate.environment != run.env().name()) {
      throw UsageError("artifacts are for environment '" + a.certificate.environment + "', config is for '" +
                       run.env().name() + "'");
    }
    return a;
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad artifact: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("bad artifact: ") + e.what());
  }
}

double l_phi_for(const Environment& env, const LipschitzBundle& l, const SafetyIndexParams& p) {
  return safety_index_lipschitz(p, l.distance, l.distance_rate, env.max_distance());
}

int cmd_synth(Run& run) {
  if (!run.config().contains("synthesis")) throw UsageError("config has no synthesis section");
  const Environment& env = run.env();
  const SynthesisConfig& cfg = run.synthesis();
  SynthesisCertificate cert;
  std::optional<ModelBuild> build;
  std::string cert_name = "certificate.json";
  const json app = run.section("application");
  if (!app.empty()) {
    // Fixed discretization and a configured safety index. Same schema as a
    // certificate, but the tau condition need not hold, so it gets its own name.
    cert_name = "application.json";
    SafetyIndexParams params;
    try {
      params = app.at("params").get<SafetyIndexParams>();
      if (!app.at("params").contains("eta")) params.eta = cfg.eta;
      if (!app.at("params").contains("d_min")) params.d_min = cfg.d_min.value_or(env.default_d_min());
    } catch (const json::exception& e) {
      throw UsageError(std::string("bad application section: ") + e.what());
    }
    build = build_model(env, app.at("tau").get<double>(), cfg);
    cert = describe_build(env, cfg, *build, params);
  } else {
    try {
      SynthesisResult r = synthesize(env, cfg);
      cert = std::move(r.certificate);
      build = std::move(r.build);
    } catch (const SynthesisFailure& e) {
      std::cerr << e.what() << "\n";
      write_json(run.out("failure.json"), json{{"error", e.what()}, {"attempts", e.attempts()}});
      run.add_output("failure.json");
      return kExitFailure;
    }
  }
  // Drop a stale file of the other kind so later commands pick up this run.
  fs::remove(run.out(cert_name == "certificate.json" ? "application.json" : "certificate.json"));
  write_json(run.out(cert_name), cert);
  build->dataset.data.write_csv(run.out("dataset.csv").string());
  build->model.save(run.out("model.json").string());
  for (const std::string& f : {cert_name, std::string("dataset.csv"), std::string("model.json")}) run.add_output(f);
  std::cout << "tau " << cert.tau << ", " << cert.dataset_size << " samples, k " << cert.params.k
            << (cert.tau_condition_ok ? " (tau condition holds)" : " (tau condition does not hold)") << "\n";
  return 0;
}

int cmd_rollout(Run& run, const Options& opt) {
  const Artifacts a = load_artifacts(run);
  const Environment& env = run.env();
  const json cfg = run.section("rollout");
  const Index steps = opt.steps.value_or(cfg.value("steps", Index{2000}));
  if (steps < 0) throw UsageError("--steps must be >= 0");
  const int runs = cfg.value("runs", 2);
  const Index hold = cfg.value("hold", Index{1});
  const double phi_min = cfg.value("phi_min", -0.3);
  const SafetyIndexParams& params = a.certificate.params;
  const SafetyBound bound(a.model, params, env.measure_fn(), a.certificate.l_phi);
  const Safeguard safeguard(bound, env.control_box(), run.safeguard_config());

  json summaries = json::array();
  for (int r = 0; r < runs; ++r) {
    Rng rng(mix_seed(run.seed(), static_cast<std::uint64_t>(r)));
    const Vector x0 = sample_safe_state(env, params, rng, phi_min, 0.0);
    const Policy policy =
        uniform_random_policy(env.control_box(), mix_seed(run.seed(), 1000 + static_cast<std::uint64_t>(r)), hold);
    const auto trace = rollout(env, policy, &safeguard, params, x0, steps);
    const std::string name = "trace_" + std::to_string(r) + ".csv";
    std::ofstream out(run.out(name));
    if (!out) throw UsageError("cannot write " + run.out(name).string());
    write_trace_csv(out, trace, state_names(env), control_names(env));
    run.add_output(name);
    json s = summarize_trace(env, params, trace);
    s["trace"] = name;
    s["initial_state"] = std::vector<double>(x0.data(), x0.data() + x0.size());
    summaries.push_back(s);
    std::cout << name << ": " << s.dump() << "\n";
  }
  write_json(run.out("summary.json"), json{{"runs", summaries}, {"params", params}});
  run.add_output("summary.json");
  return 0;
}

int cmd_feasibility(Run& run, const Options& opt) {
  const Artifacts a = load_artifacts(run);
  const Environment& env = run.env();
  SafetyIndexParams params = a.certificate.params;
  if (opt.k_override) params.k = *opt.k_override;
  params.validate();
  const SafetyBound bound(a.model, params, env.measure_fn(), l_phi_for(env, a.certificate.lipschitz, params));
  const Safeguard safeguard(bound, env.control_box(), run.safeguard_config());
  const json cfg = run.section("feasibility");
  FeasibilityConfig fc;
  fc.cells = cfg.value("cells", std::vector<Index>{10, 10});
  fc.samples_per_cell = cfg.value("samples_per_cell", 100);
  fc.seed = run.seed();
  const FeasibilityMap map = feasibility_map(env, safeguard, fc);
  std::ofstream out(run.out("feasibility.csv"));
  if (!out) throw UsageError("cannot write feasibility.csv");
  write_feasibility_csv(out, map);
  write_json(run.out("feasibility.json"), json{{"cells", map.cells},
                                               {"samples_per_cell", map.samples_per_cell},
                                               {"seed", fc.seed},
                                               {"k", params.k},
                                               {"params", params},
                                               {"infeasible", map.total()}});
  run.add_output("feasibility.csv");
  run.add_output("feasibility.json");
  std::cout << map.total() << " infeasible states at k " << params.k << "\n";
  return 0;
}

int cmd_validate(Run& run) {
  const Artifacts a = load_artifacts(run);
  const json cfg = run.section("validation");
  ValidationConfig vc;
  vc.queries = cfg.value("queries", vc.queries);
  vc.lipschitz_pairs = cfg.value("lipschitz_pairs", vc.lipschitz_pairs);
  vc.seed = run.seed();
  const ValidationReport report = validate_model(a.model, run.env(), a.certificate.tau, vc);
  write_json(run.out("report.json"), report);
  run.add_output("report.json");
  for (const SuiteResult& s : report.suites) {
    std::cout << s.name << ": " << (s.passed ? "pass" : "FAIL") << " (" << s.violations << "/" << s.queries
              << " violations, worst margin " << s.worst_margin << ")\n";
    if (s.passed) continue;
    for (const auto& q : s.violating) {
      std::cerr << "  " << s.name << " violated at";
      for (double v : q) std::cerr << " " << v;
      std::cerr << "\n";
    }
  }
  return report.passed() ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe control with Gaussian-process dynamics models and implicit safety indices"};
  app.require_subcommand(1);
  Options opt;
  for (int i = 1; i < argc; ++i) opt.arguments.emplace_back(argv[i]);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Run configuration (JSON) or a manifest.json")->required();
    sub->add_option("--seed", opt.seed, "Global seed; overrides the config");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
  };
  auto add_artifacts = [&](CLI::App* sub) {
    sub->add_option("--artifacts", opt.artifacts, "Directory with certificate.json and model.json (default: --out)");
  };
  CLI::App* synth = app.add_subcommand("synth", "Synthesize the safety index and fit the dynamics model");
  add_common(synth);
  CLI::App* roll = app.add_subcommand("rollout", "Safeguarded rollouts under a random exploration policy");
  add_common(roll);
  add_artifacts(roll);
  roll->add_option("--steps", opt.steps, "Steps per rollout; overrides the config");
  CLI::App* feas = app.add_subcommand("feasibility", "Count states without a safe control");
  add_common(feas);
  add_artifacts(feas);
  feas->add_option("--k-override", opt.k_override, "Use this safety-index gain instead of the certificate's");
  CLI::App* val = app.add_subcommand("validate", "Empirical checks of the model's error bounds");
  add_common(val);
  add_artifacts(val);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  opt.command = app.get_subcommands().front()->get_name();

  int code = 0;
  std::optional<Run> run;
  try {
    run.emplace(opt);
    if (opt.command == "synth") code = cmd_synth(*run);
    if (opt.command == "rollout") code = cmd_rollout(*run, opt);
    if (opt.command == "feasibility") code = cmd_feasibility(*run, opt);
    if (opt.command == "validate") code = cmd_validate(*run);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitFailure;
  }
  if (run) {
    try {
      run->write_manifest(code);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      if (code == 0) code = kExitUsage;
    }
  }
  return code;
}

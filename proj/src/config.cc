#include "arccm/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace arccm {

namespace {

int LineOf(const toml::node& n) {
  return static_cast<int>(n.source().begin.line);
}

// One TOML table; each Get marks a key as known, Finish rejects the rest.
class Section {
 public:
  Section(const toml::table* table, std::string name, std::string origin)
      : table_(table), name_(std::move(name)), origin_(std::move(origin)) {}

  [[noreturn]] void Fail(const toml::node& n, const std::string& msg) const {
    const int line = LineOf(n);
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg, line);
  }

  const toml::node* Find(const std::string& key) {
    known_.insert(key);
    if (!table_) return nullptr;
    return table_->get(key);
  }

  std::string Where(const std::string& key) const {
    return name_.empty() ? key : "[" + name_ + "] " + key;
  }

  void Get(const std::string& key, double* out) {
    if (const auto* n = Find(key)) {
      if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) {
        *out = *v;
      } else {
        Fail(*n, Where(key) + " must be a number");
      }
    }
  }

  void Get(const std::string& key, int* out) {
    if (const auto* n = Find(key)) {
      if (!n->is_integer()) Fail(*n, Where(key) + " must be an integer");
      *out = static_cast<int>(*n->value<std::int64_t>());
    }
  }

  void Get(const std::string& key, std::uint64_t* out) {
    if (const auto* n = Find(key)) {
      const auto v = n->value<std::int64_t>();
      if (!n->is_integer() || *v < 0) {
        Fail(*n, Where(key) + " must be a non-negative integer");
      }
      *out = static_cast<std::uint64_t>(*v);
    }
  }

  void Get(const std::string& key, bool* out) {
    if (const auto* n = Find(key)) {
      if (!n->is_boolean()) Fail(*n, Where(key) + " must be true or false");
      *out = *n->value<bool>();
    }
  }

  void Get(const std::string& key, std::string* out) {
    if (const auto* n = Find(key)) {
      if (!n->is_string()) Fail(*n, Where(key) + " must be a string");
      *out = *n->value<std::string>();
    }
  }

  void Get(const std::string& key, std::vector<double>* out) {
    if (const auto* n = Find(key)) {
      const auto* arr = n->as_array();
      if (!arr) Fail(*n, Where(key) + " must be an array of numbers");
      out->clear();
      for (const auto& e : *arr) {
        if (!e.is_number()) Fail(e, Where(key) + " must hold numbers");
        out->push_back(*e.value<double>());
      }
    }
  }

  void Get(const std::string& key, Eigen::VectorXd* out, int expected) {
    std::vector<double> v;
    const auto* n = table_ ? table_->get(key) : nullptr;
    Get(key, &v);
    if (!n) return;
    if (expected > 0 && static_cast<int>(v.size()) != expected) {
      Fail(*n, Where(key) + " must have " + std::to_string(expected) +
                   " entries");
    }
    *out = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
  }

  template <typename T>
  void GetChecked(const std::string& key, T* out, auto&& valid,
                  const std::string& requirement) {
    Get(key, out);
    if (const auto* n = table_ ? table_->get(key) : nullptr) {
      if (!valid(*out)) Fail(*n, Where(key) + " " + requirement);
    }
  }

  // Enum-like string parsed by `parse`; its exceptions become diagnostics.
  template <typename T, typename Parse>
  void GetEnum(const std::string& key, T* out, Parse parse) {
    std::string s;
    Get(key, &s);
    if (const auto* n = table_ ? table_->get(key) : nullptr) {
      try {
        *out = parse(s);
      } catch (const std::invalid_argument& e) {
        Fail(*n, Where(key) + ": " + e.what());
      }
    }
  }

  void Finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!known_.count(std::string(k.str()))) {
        Fail(v, "unknown key " + Where(std::string(k.str())));
      }
    }
  }

 private:
  const toml::table* table_;
  std::string name_;
  std::string origin_;
  std::set<std::string> known_;
};

auto Positive = [](auto v) { return v > 0; };
auto NonNegative = [](auto v) { return v >= 0; };

}  // namespace

void RunConfig::ApplySeed(std::uint64_t s) {
  seed = s;
  verify.prop1.seed = s + 2;
  verify.clf.seed = s + 3;
}

UncertainSystem RunConfig::MakeSystem() const {
  if (system == kExampleSystemName) return ExampleSystem();
  throw std::invalid_argument("unknown system '" + system + "'");
}

Eigen::VectorXd RunConfig::TrueParameters() const {
  return simulation.theta_true.size() ? simulation.theta_true
                                      : ExampleTrueParameters();
}

namespace {

GridSpec GridFor(const UncertainSystem& sys, int theta_count, int state_count,
                 int random_states, int random_joint, std::uint64_t seed) {
  GridSpec g = DefaultSynthesisGrid(sys, UnmatchedParameters(sys));
  for (auto& a : g.theta) {
    if (!a.vertices) a.count = theta_count;
  }
  for (auto& a : g.state) a.count = state_count;
  g.random_states = random_states;
  g.random_joint = random_joint;
  g.seed = seed;
  return g;
}

}  // namespace

SynthesisConfig RunConfig::SynthesisSettings(const UncertainSystem& sys) const {
  SynthesisConfig c = synthesis.solver;
  c.grid = GridFor(sys, synthesis.theta_grid, synthesis.state_grid,
                   synthesis.random_states, synthesis.random_joint, seed);
  c.threads = threads;
  return c;
}

GridSpec RunConfig::ValidationGrid(const UncertainSystem& sys) const {
  GridSpec g = GridFor(sys, verify.validation_theta_grid,
                       verify.validation_state_grid, 0,
                       verify.validation_random_joint, seed + 1);
  // fresh samples over the whole box, vertex axes included
  g.joint_vertices = false;
  return g;
}

RunConfig ParseRunConfig(const std::string& text, const std::string& origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    const int line = static_cast<int>(e.source().begin.line);
    throw ConfigError(origin + ":" + std::to_string(line) + ": " +
                          std::string(e.description()),
                      line);
  }
  RunConfig cfg;
  Section top(&root, "", origin);
  std::uint64_t seed = cfg.seed;
  top.Get("seed", &seed);
  cfg.ApplySeed(seed);
  top.GetChecked("threads", &cfg.threads, NonNegative, "must be >= 0");

  auto table = [&](const char* name) -> const toml::table* {
    const auto* n = top.Find(name);
    if (!n) return nullptr;
    if (!n->is_table()) top.Fail(*n, std::string(name) + " must be a table");
    return n->as_table();
  };

  {
    Section s(table("system"), "system", origin);
    s.Get("name", &cfg.system);
    s.Get("theta_true", &cfg.simulation.theta_true, 0);
    s.Finish();
  }
  {
    Section s(table("synthesis"), "synthesis", origin);
    auto& c = cfg.synthesis.solver;
    s.GetChecked("degree", &c.degree, NonNegative, "must be >= 0");
    s.Get("lambdas", &c.lambdas);
    s.Get("mus", &c.mus);
    s.GetChecked("a_low", &c.a_low, Positive, "must be > 0");
    s.GetChecked("a_high", &c.a_high, Positive, "must be > 0");
    s.GetChecked("temperature", &c.temperature, Positive, "must be > 0");
    s.GetChecked("temperature_start", &c.temperature_start, Positive,
                 "must be > 0");
    s.Get("margin_target", &c.margin_target);
    s.Get("penalty_shift", &c.penalty_shift);
    s.GetChecked("c2_weight", &c.c2_weight, NonNegative, "must be >= 0");
    s.GetChecked("alpha_weight", &c.alpha_weight, NonNegative, "must be >= 0");
    s.GetChecked("max_iterations", &c.max_iterations, Positive, "must be > 0");
    s.GetChecked("max_rounds", &c.max_rounds, Positive, "must be > 0");
    s.GetChecked("initial_working_set", &c.initial_working_set, Positive,
                 "must be > 0");
    s.GetChecked("exchange_batch", &c.exchange_batch, Positive, "must be > 0");
    s.Get("tighten", &c.tighten);
    s.GetChecked("bound_slack", &c.bound_slack, NonNegative, "must be >= 0");
    s.GetEnum("rate_convention", &c.convention, ParseRateConvention);
    s.GetChecked("theta_grid", &cfg.synthesis.theta_grid, Positive,
                 "must be > 0");
    s.GetChecked("state_grid", &cfg.synthesis.state_grid, Positive,
                 "must be > 0");
    s.GetChecked("random_states", &cfg.synthesis.random_states, NonNegative,
                 "must be >= 0");
    s.GetChecked("random_joint", &cfg.synthesis.random_joint, NonNegative,
                 "must be >= 0");
    s.Finish();
    if (c.lambdas.empty() || c.mus.empty()) {
      throw ConfigError(origin + ": [synthesis] lambdas and mus need values",
                        0);
    }
  }
  {
    Section s(table("simulation"), "simulation", origin);
    auto& c = cfg.simulation;
    s.Get("t0", &c.t0);
    s.Get("t1", &c.t1);
    s.GetChecked("h", &c.h, Positive, "must be > 0");
    s.GetChecked("control_period", &c.control_period, Positive, "must be > 0");
    s.Get("x0", &c.x0, 0);
    s.Get("offset", &c.offset, 0);
    s.GetChecked("curve_degree", &c.curve_degree, Positive, "must be > 0");
    s.GetChecked("quadrature", &c.quadrature, Positive, "must be > 0");
    s.GetChecked("geodesic_max_iterations", &c.geodesic.max_iterations,
                 Positive, "must be > 0");
    s.GetChecked("geodesic_tolerance", &c.geodesic.tolerance, Positive,
                 "must be > 0");
    s.Get("warm_start", &c.warm_start);
    s.Get("continuous_feedforward", &c.continuous_feedforward);
    s.Finish();
    try {
      c.SubstepsPerTick();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(origin + ": [simulation] " + e.what(), 0);
    }
  }
  {
    Section s(table("estimator"), "estimator", origin);
    auto& c = cfg.simulation.estimator;
    s.GetEnum("kind", &c.kind, ParseEstimatorKind);
    s.Get("theta0", &c.theta0, 0);
    s.Get("theta_final", &c.theta_final, 0);
    s.Get("t_start", &c.t_start);
    s.Get("t_end", &c.t_end);
    s.Get("rho_min", &c.rho_min);
    s.GetEnum("norm", &c.norm, ParseRateNorm);
    s.GetChecked("window", &c.rls.window, Positive, "must be > 0");
    s.GetChecked("regularization", &c.rls.regularization, NonNegative,
                 "must be >= 0");
    s.GetChecked("singular_tolerance", &c.rls.singular_tolerance, NonNegative,
                 "must be >= 0");
    s.GetChecked(
        "derivative", &c.rls.derivative,
        [](const std::string& v) { return v == "backward" || v == "integral"; },
        "must be \"backward\" or \"integral\"");
    s.Finish();
  }
  {
    Section s(table("verify"), "verify", origin);
    auto& c = cfg.verify;
    s.GetChecked("validation_theta_grid", &c.validation_theta_grid, Positive,
                 "must be > 0");
    s.GetChecked("validation_state_grid", &c.validation_state_grid, Positive,
                 "must be > 0");
    s.GetChecked("validation_random_joint", &c.validation_random_joint,
                 NonNegative, "must be >= 0");
    s.GetChecked("validation_tolerance", &c.validation_tolerance, NonNegative,
                 "must be >= 0");
    s.GetChecked("slack", &c.bounds.slack, NonNegative, "must be >= 0");
    double sup = -1.0;
    s.Get("sup_theta_err", &sup);
    if (sup >= 0.0) c.bounds.sup_theta_err = sup;
    s.GetChecked("prop1_curves", &c.prop1.curves, Positive, "must be > 0");
    s.GetChecked("prop1_slack", &c.prop1.relative_slack, NonNegative,
                 "must be >= 0");
    s.GetChecked("clf_samples", &c.clf.samples, Positive, "must be > 0");
    s.GetChecked("sigma_slope", &c.sigma_slope, NonNegative, "must be >= 0");
    s.GetChecked("ud_range", &c.clf.ud_range, NonNegative, "must be >= 0");
    s.Finish();
  }
  {
    Section s(table("output"), "output", origin);
    s.Get("plots", &cfg.output.plots);
    s.Finish();
  }
  top.Finish();
  return cfg;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path, 0);
  std::stringstream ss;
  ss << f.rdbuf();
  return ParseRunConfig(ss.str(), path);
}

}  // namespace arccm

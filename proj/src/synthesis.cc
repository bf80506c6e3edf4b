#include "arccm/synthesis.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "arccm/linalg.h"
#include "arccm/optim.h"
#include "arccm/parallel.h"

namespace arccm {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Uniform double in [0, 1) from the top 53 bits; identical on every
// standard library, unlike std::uniform_real_distribution.
double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd UniformIn(std::mt19937_64& rng, const ParameterBox& box) {
  Eigen::VectorXd v(box.size());
  for (int i = 0; i < box.size(); ++i) {
    v[i] = box[i].lo + (box[i].hi - box[i].lo) * Uniform01(rng);
  }
  return v;
}

std::vector<double> AxisSamples(const GridAxis& axis, const Interval& box) {
  const Interval r = axis.range.value_or(box);
  if (axis.vertices) return {r.lo, r.hi};
  if (axis.count < 1) throw std::invalid_argument("grid axis count < 1");
  if (axis.count == 1) return {0.5 * (r.lo + r.hi)};
  std::vector<double> out(axis.count);
  for (int i = 0; i < axis.count; ++i) {
    out[i] = r.lo + (r.hi - r.lo) * i / (axis.count - 1);
  }
  return out;
}

// Row-major tensor product of per-axis samples (last axis fastest).
std::vector<Eigen::VectorXd> Lattice(
    const std::vector<std::vector<double>>& axes) {
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.size();
  std::vector<Eigen::VectorXd> out;
  out.reserve(total);
  const int d = static_cast<int>(axes.size());
  for (std::size_t idx = 0; idx < total; ++idx) {
    Eigen::VectorXd v(d);
    std::size_t r = idx;
    for (int a = d - 1; a >= 0; --a) {
      v[a] = axes[a][r % axes[a].size()];
      r /= axes[a].size();
    }
    out.push_back(std::move(v));
  }
  return out;
}

double Softplus(double y) {
  return y > 0.0 ? y + std::log1p(std::exp(-y)) : std::log1p(std::exp(y));
}

double Sigmoid(double y) {
  if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

std::string PointString(const Eigen::VectorXd& x, const Eigen::VectorXd& th) {
  std::ostringstream os;
  os.precision(17);
  os << "x=(";
  for (int i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << ") theta=(";
  for (int i = 0; i < th.size(); ++i) os << (i ? "," : "") << th[i];
  os << ")";
  return os.str();
}

nlohmann::json VecJson(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd JsonVec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

double MinEig(const Eigen::MatrixXd& m, const Eigen::VectorXd& x,
              const Eigen::VectorXd& th) {
  const int d = static_cast<int>(m.rows());
  RowMat r = m;
  double value = 0.0;
  Eigen::VectorXd v(d);
  if (!JacobiMinEigen(d, r.data(), &value, v.data())) {
    throw std::runtime_error("non-finite eigenvalue at " + PointString(x, th));
  }
  return value;
}

void Update(ConditionMargin* cm, double value, const Eigen::VectorXd& x,
            const Eigen::VectorXd& th, const std::string& label,
            bool larger_is_worse) {
  const bool worse = !cm->evaluated ||
                     (larger_is_worse ? value > cm->value : value < cm->value);
  if (worse) {
    cm->value = value;
    cm->x = x;
    cm->theta = th;
    cm->label = label;
  }
  cm->evaluated = true;
}

void Merge(ConditionMargin* into, const ConditionMargin& from,
           bool larger_is_worse) {
  if (!from.evaluated) return;
  Update(into, from.value, from.x, from.theta, from.label, larger_is_worse);
}

std::vector<bool> Mask(int n, int p, const std::vector<int>& states,
                       const std::vector<int>& params) {
  std::vector<bool> mask(n + p, false);
  for (int s : states) {
    if (s < 0 || s >= n) throw std::invalid_argument("state mask out of range");
    mask[s] = true;
  }
  for (int q : params) {
    if (q < 0 || q >= p) {
      throw std::invalid_argument("parameter mask out of range");
    }
    mask[n + q] = true;
  }
  return mask;
}

// States that some constant input column moves along alone (b_r = c·e_j).
std::vector<int> DefaultWStates(const UncertainSystem& sys) {
  const DynamicsTerms t = EvaluateTerms(sys, sys.state_box.Midpoint());
  std::vector<bool> drop(sys.n, false);
  if (t.constant_input) {
    for (int r = 0; r < sys.m; ++r) {
      int nonzero = 0;
      int where = -1;
      for (int i = 0; i < sys.n; ++i) {
        if (t.B(i, r) != 0.0) {
          ++nonzero;
          where = i;
        }
      }
      if (nonzero == 1) drop[where] = true;
    }
  }
  std::vector<int> out;
  for (int i = 0; i < sys.n; ++i) {
    if (!drop[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

std::string RateConventionName(RateConvention c) {
  return c == RateConvention::kC1TwoLambda ? "c1-2lambda" : "proof-lambda";
}

RateConvention ParseRateConvention(const std::string& name) {
  if (name == "c1-2lambda") return RateConvention::kC1TwoLambda;
  if (name == "proof-lambda") return RateConvention::kProofLambda;
  throw std::invalid_argument("unknown rate_convention '" + name +
                              "' (expected c1-2lambda or proof-lambda)");
}

// ---------------------------------------------------------------- grids

std::string GridSpec::Describe() const {
  std::ostringstream os;
  auto axes = [&](const std::vector<GridAxis>& v, const char* prefix) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      os << (i ? " " : "") << prefix << i + 1 << ":";
      if (v[i].vertices) {
        os << "vertices";
      } else {
        os << v[i].count;
      }
    }
  };
  os << "theta[";
  axes(theta, "th");
  os << "] x[";
  axes(state, "x");
  os << "] random_states=" << random_states << " random_joint=" << random_joint
     << (joint_vertices ? " joint_vertices" : "") << " seed=" << seed;
  return os.str();
}

nlohmann::json GridSpec::ToJson() const {
  auto axes = [](const std::vector<GridAxis>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& ax : v) {
      nlohmann::json j;
      j["count"] = ax.count;
      j["vertices"] = ax.vertices;
      if (ax.range) j["range"] = {ax.range->lo, ax.range->hi};
      a.push_back(j);
    }
    return a;
  };
  nlohmann::json j;
  j["theta"] = axes(theta);
  j["state"] = axes(state);
  j["random_states"] = random_states;
  j["random_joint"] = random_joint;
  j["joint_vertices"] = joint_vertices;
  j["seed"] = seed;
  return j;
}

GridSpec GridSpec::FromJson(const nlohmann::json& j) {
  auto axes = [](const nlohmann::json& a) {
    std::vector<GridAxis> v;
    for (const auto& e : a) {
      GridAxis ax;
      ax.count = e.at("count").get<int>();
      ax.vertices = e.at("vertices").get<bool>();
      if (e.contains("range")) {
        ax.range = Interval{e["range"][0].get<double>(),
                            e["range"][1].get<double>()};
      }
      v.push_back(ax);
    }
    return v;
  };
  GridSpec g;
  g.theta = axes(j.at("theta"));
  g.state = axes(j.at("state"));
  g.random_states = j.at("random_states").get<int>();
  g.random_joint = j.at("random_joint").get<int>();
  g.joint_vertices = j.value("joint_vertices", false);
  g.seed = j.at("seed").get<std::uint64_t>();
  return g;
}

SampleGrid::SampleGrid(const UncertainSystem& sys, const GridSpec& spec) {
  if (static_cast<int>(spec.theta.size()) != sys.p ||
      static_cast<int>(spec.state.size()) != sys.n) {
    throw std::invalid_argument("grid spec dimensions do not match the system");
  }
  std::vector<std::vector<double>> th_axes;
  for (int i = 0; i < sys.p; ++i) {
    th_axes.push_back(AxisSamples(spec.theta[i], sys.theta_box[i]));
  }
  std::vector<std::vector<double>> x_axes;
  for (int i = 0; i < sys.n; ++i) {
    x_axes.push_back(AxisSamples(spec.state[i], sys.state_box[i]));
  }
  thetas_ = Lattice(th_axes);
  states_ = Lattice(x_axes);
  std::mt19937_64 rng(spec.seed);
  for (int k = 0; k < spec.random_states; ++k) {
    states_.push_back(UniformIn(rng, sys.state_box));
  }
  std::bernoulli_distribution coin;
  for (int k = 0; k < spec.random_joint; ++k) {
    joint_x_.push_back(UniformIn(rng, sys.state_box));
    Eigen::VectorXd th = UniformIn(rng, sys.theta_box);
    if (spec.joint_vertices) {
      for (int i = 0; i < sys.p; ++i) {
        if (spec.theta[i].vertices) {
          th[i] = coin(rng) ? sys.theta_box[i].hi : sys.theta_box[i].lo;
        }
      }
    }
    joint_theta_.push_back(std::move(th));
  }
  description_ = spec.Describe();
}

const Eigen::VectorXd& SampleGrid::x(std::size_t i) const {
  if (i < lattice_size()) return states_[i / thetas_.size()];
  return joint_x_.at(i - lattice_size());
}

const Eigen::VectorXd& SampleGrid::theta(std::size_t i) const {
  if (i < lattice_size()) return thetas_[i % thetas_.size()];
  return joint_theta_.at(i - lattice_size());
}

GridSpec DefaultSynthesisGrid(const UncertainSystem& sys,
                              const std::vector<int>& gridded_params) {
  GridSpec g;
  g.theta.assign(sys.p, GridAxis{2, true, std::nullopt});
  for (int i : gridded_params) g.theta.at(i) = GridAxis{21, false, std::nullopt};
  g.state.assign(sys.n, GridAxis{5, false, std::nullopt});
  g.random_joint = 100000;
  g.joint_vertices = true;
  g.seed = 1;
  return g;
}

std::vector<int> UnmatchedParameters(const UncertainSystem& sys) {
  std::mt19937_64 rng(20240611);
  std::vector<bool> unmatched(sys.p, false);
  for (int k = 0; k < 16; ++k) {
    const Eigen::VectorXd x =
        k == 0 ? sys.state_box.Midpoint() : UniformIn(rng, sys.state_box);
    const DynamicsTerms t = EvaluateTerms(sys, x);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(t.B);
    for (int i = 0; i < sys.p; ++i) {
      const Eigen::VectorXd d = t.delta.row(i).transpose();
      const Eigen::VectorXd resid = d - t.B * qr.solve(d);
      if (resid.norm() > 1e-9 * (1.0 + d.norm())) unmatched[i] = true;
    }
  }
  std::vector<int> out;
  for (int i = 0; i < sys.p; ++i) {
    if (unmatched[i]) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------- condition blocks

std::vector<ConditionBlock> AssembleConditionBlocks(
    const DualMetric& metric, const ConditionSettings& s,
    const UncertainSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const int n = sys.n;
  const int p = sys.p;
  const DynamicsTerms terms = EvaluateTerms(sys, x);
  MetricEval ev;
  metric.Evaluate(x, theta, MetricRequest{true, true, true}, &ev);
  const Eigen::MatrixXd& W = ev.W;
  const Eigen::VectorXd drift = terms.Drift(theta);
  const Eigen::MatrixXd A = terms.Jacobian(theta);

  Eigen::MatrixXd dW = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) dW += ev.dW_dx[i] * drift[i];
  const double c_lambda =
      s.convention == RateConvention::kC1TwoLambda ? 2.0 * s.lambda : s.lambda;
  const Eigen::MatrixXd BY = terms.B * ev.Y;
  Eigen::MatrixXd what =
      dW - A * W - W * A.transpose() - BY - BY.transpose() - c_lambda * W;

  std::vector<ConditionBlock> out;
  Eigen::MatrixXd c1(n + p, n + p);
  c1.topLeftCorner(n, n) = 0.5 * (what + what.transpose());
  c1.topRightCorner(n, p) = -terms.delta.transpose();
  c1.bottomLeftCorner(p, n) = -terms.delta;
  c1.bottomRightCorner(p, p) = s.alpha_sq * Eigen::MatrixXd::Identity(p, p);
  out.push_back({ConditionKind::kC1, "C1", std::move(c1)});

  for (int r = 0; r < sys.m; ++r) {
    Eigen::MatrixXd db = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) db += ev.dW_dx[j] * terms.B(j, r);
    const Eigen::MatrixXd& G = terms.b_jac[r];
    out.push_back({ConditionKind::kC2, "C2[u" + std::to_string(r + 1) + "]",
                   db - W * G.transpose() - G * W});
  }
  for (int i : metric.param_dependencies()) {
    const Eigen::MatrixXd& dth = ev.dW_dtheta[i];
    const std::string tag = "[th" + std::to_string(i + 1) + "]";
    out.push_back({ConditionKind::kC3, "C3+" + tag, s.mu * W + dth});
    out.push_back({ConditionKind::kC3, "C3-" + tag, s.mu * W - dth});
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  out.push_back({ConditionKind::kBounds, "bound_low", W - I / s.a_high});
  out.push_back({ConditionKind::kBounds, "bound_high", I / s.a_low - W});
  return out;
}

// ---------------------------------------------------------- validation

nlohmann::json ConditionMargin::ToJson() const {
  nlohmann::json j;
  j["evaluated"] = evaluated;
  if (evaluated) {
    j["value"] = value;
    j["x"] = VecJson(x);
    j["theta"] = VecJson(theta);
    j["label"] = label;
  }
  return j;
}

ConditionMargin ConditionMargin::FromJson(const nlohmann::json& j) {
  ConditionMargin m;
  m.evaluated = j.at("evaluated").get<bool>();
  if (m.evaluated) {
    m.value = j.at("value").get<double>();
    m.x = JsonVec(j.at("x"));
    m.theta = JsonVec(j.at("theta"));
    m.label = j.at("label").get<std::string>();
  }
  return m;
}

double ValidationReport::worst_margin() const {
  double w = std::numeric_limits<double>::infinity();
  if (c1.evaluated) w = std::min(w, c1.value);
  if (c3.evaluated) w = std::min(w, c3.value);
  if (bounds.evaluated) w = std::min(w, bounds.value);
  if (c2.evaluated) w = std::min(w, -c2.value);
  return w;
}

nlohmann::json ValidationReport::ToJson() const {
  nlohmann::json j;
  j["c1"] = c1.ToJson();
  j["c2"] = c2.ToJson();
  j["c3"] = c3.ToJson();
  j["bounds"] = bounds.ToJson();
  j["w_eig_min"] = w_eig_min;
  j["w_eig_max"] = w_eig_max;
  j["grid"] = grid;
  j["points"] = points;
  j["worst_margin"] = worst_margin();
  return j;
}

ValidationReport ValidationReport::FromJson(const nlohmann::json& j) {
  ValidationReport r;
  r.c1 = ConditionMargin::FromJson(j.at("c1"));
  r.c2 = ConditionMargin::FromJson(j.at("c2"));
  r.c3 = ConditionMargin::FromJson(j.at("c3"));
  r.bounds = ConditionMargin::FromJson(j.at("bounds"));
  r.w_eig_min = j.at("w_eig_min").get<double>();
  r.w_eig_max = j.at("w_eig_max").get<double>();
  r.grid = j.at("grid").get<std::string>();
  r.points = j.at("points").get<std::size_t>();
  return r;
}

ValidationReport ValidateMetric(const DualMetric& metric,
                                const ConditionSettings& settings,
                                const UncertainSystem& sys,
                                const GridSpec& spec, int threads) {
  const SampleGrid grid(sys, spec);
  constexpr std::size_t kJointChunk = 64;
  const std::size_t lattice_chunks = grid.num_states();
  const std::size_t joint_chunks =
      (grid.num_joint() + kJointChunk - 1) / kJointChunk;
  std::vector<ValidationReport> partial(lattice_chunks + joint_chunks);
  auto visit = [&](ValidationReport* r, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& th) {
    const auto blocks = AssembleConditionBlocks(metric, settings, sys, x, th);
    for (const auto& b : blocks) {
      switch (b.kind) {
        case ConditionKind::kC1:
          Update(&r->c1, MinEig(b.matrix, x, th), x, th, b.label, false);
          break;
        case ConditionKind::kC2:
          Update(&r->c2, b.matrix.cwiseAbs().maxCoeff(), x, th, b.label, true);
          break;
        case ConditionKind::kC3:
          Update(&r->c3, MinEig(b.matrix, x, th), x, th, b.label, false);
          break;
        case ConditionKind::kBounds:
          Update(&r->bounds, MinEig(b.matrix, x, th), x, th, b.label, false);
          break;
      }
    }
    MetricEval ev;
    metric.Evaluate(x, th, MetricRequest{}, &ev);
    const SymmetricEigen e = JacobiEigen(ev.W);
    r->w_eig_min = std::min(r->w_eig_min, e.values[0]);
    r->w_eig_max = std::max(r->w_eig_max, e.values[e.values.size() - 1]);
    ++r->points;
  };
  ParallelFor(partial.size(), ResolveThreads(threads),
              [&](std::size_t c, int) {
                ValidationReport* r = &partial[c];
                if (c < lattice_chunks) {
                  for (std::size_t t = 0; t < grid.num_thetas(); ++t) {
                    visit(r, grid.state(c), grid.lattice_theta(t));
                  }
                } else {
                  const std::size_t begin =
                      grid.lattice_size() + (c - lattice_chunks) * kJointChunk;
                  const std::size_t end =
                      std::min(grid.size(), begin + kJointChunk);
                  for (std::size_t i = begin; i < end; ++i) {
                    visit(r, grid.x(i), grid.theta(i));
                  }
                }
              });
  ValidationReport out;
  for (const auto& r : partial) {
    Merge(&out.c1, r.c1, false);
    Merge(&out.c2, r.c2, true);
    Merge(&out.c3, r.c3, false);
    Merge(&out.bounds, r.bounds, false);
    out.w_eig_min = std::min(out.w_eig_min, r.w_eig_min);
    out.w_eig_max = std::max(out.w_eig_max, r.w_eig_max);
    out.points += r.points;
  }
  out.grid = grid.description();
  return out;
}

// --------------------------------------------------------- certificate

double MetricCertificate::alpha() const { return std::sqrt(alpha_sq); }

ConditionSettings MetricCertificate::settings() const {
  return ConditionSettings{lambda, mu, alpha_sq, a_low, a_high, convention};
}

nlohmann::json MetricCertificate::ToJson() const {
  nlohmann::json j;
  j["format"] = "arccm-certificate";
  j["version"] = 1;
  j["system"] = system;
  j["lambda"] = lambda;
  j["mu"] = mu;
  j["alpha_sq"] = alpha_sq;
  j["alpha"] = alpha();
  j["a_low"] = a_low;
  j["a_high"] = a_high;
  j["rate_convention"] = RateConventionName(convention);
  j["margin_target"] = margin_target;
  j["num_params"] = metric->num_params();
  j["w_basis"] = metric->W().basis().ToJson();
  const bool shared = metric->W().basis_ptr() == metric->Y().basis_ptr();
  j["y_basis"] = shared ? nlohmann::json("shared")
                        : metric->Y().basis().ToJson();
  j["W"] = metric->W().ToJson();
  j["Y"] = metric->Y().ToJson();
  j["grid"] = grid.ToJson();
  j["validation"] = validation.ToJson();
  return j;
}

MetricCertificate MetricCertificate::FromJson(const nlohmann::json& j) {
  if (j.value("format", "") != "arccm-certificate") {
    throw std::invalid_argument("not an arccm certificate");
  }
  MetricCertificate c;
  c.system = j.at("system").get<std::string>();
  c.lambda = j.at("lambda").get<double>();
  c.mu = j.at("mu").get<double>();
  c.alpha_sq = j.at("alpha_sq").get<double>();
  c.a_low = j.at("a_low").get<double>();
  c.a_high = j.at("a_high").get<double>();
  c.convention = ParseRateConvention(j.at("rate_convention").get<std::string>());
  c.margin_target = j.at("margin_target").get<double>();
  auto wb = std::make_shared<const MonomialBasis>(
      MonomialBasis::FromJson(j.at("w_basis")));
  std::shared_ptr<const MonomialBasis> yb = wb;
  if (!j.at("y_basis").is_string()) {
    yb = std::make_shared<const MonomialBasis>(
        MonomialBasis::FromJson(j.at("y_basis")));
  }
  c.metric = std::make_shared<const PolyDualMetric>(
      PolyMatrixFamily::FromJson(j.at("W"), wb),
      PolyMatrixFamily::FromJson(j.at("Y"), yb),
      j.at("num_params").get<int>());
  c.grid = GridSpec::FromJson(j.at("grid"));
  c.validation = ValidationReport::FromJson(j.at("validation"));
  return c;
}

void WriteCertificate(const MetricCertificate& cert, const std::string& path) {
  if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) {
    std::filesystem::create_directories(dir);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << cert.ToJson().dump(1) << "\n";
}

MetricCertificate ReadCertificate(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return MetricCertificate::FromJson(j);
}

ValidationReport ValidateCertificate(const MetricCertificate& cert,
                                     const UncertainSystem& sys,
                                     const GridSpec& grid, int threads) {
  return ValidateMetric(*cert.metric, cert.settings(), sys, grid, threads);
}

// ------------------------------------------------------- fast penalty

namespace {
// C2 residuals below this count as satisfied in working-set margins.
constexpr double kC2Tolerance = 1e-9;
}  // namespace

struct SynthesisProblem::Workspace {
  // All row-major.
  std::vector<double> W, D, Wth, Wb, Y, c1, c3, bl, bh, R;
  std::vector<double> vec;
};

SynthesisProblem::SynthesisProblem(const UncertainSystem& sys,
                                   SynthesisConfig cfg)
    : sys_(sys), cfg_(std::move(cfg)), grid_(sys, [&] {
        sys.Validate();
        if (cfg_.grid.theta.empty() && cfg_.grid.state.empty()) {
          cfg_.grid = DefaultSynthesisGrid(
              sys, cfg_.w_param_vars.value_or(UnmatchedParameters(sys)));
        }
        return cfg_.grid;
      }()) {
  const int n = sys_.n;
  const int p = sys_.p;
  if (n + p > kMaxJacobiDim) {
    throw std::invalid_argument("n + p exceeds the supported block size");
  }
  for (double l : cfg_.lambdas) {
    if (!(l > 0.0)) throw std::invalid_argument("λ candidates must be > 0");
  }
  for (double m : cfg_.mus) {
    if (!(m > 0.0)) throw std::invalid_argument("μ candidates must be > 0");
  }
  if (!(cfg_.a_low > 0.0) || !(cfg_.a_high > cfg_.a_low)) {
    throw std::invalid_argument("need 0 < a_low < a_high");
  }
  const std::vector<int> ws = cfg_.w_state_vars.value_or(DefaultWStates(sys_));
  w_params_ = cfg_.w_param_vars.value_or(UnmatchedParameters(sys_));
  std::sort(w_params_.begin(), w_params_.end());
  std::vector<int> ys(n);
  for (int i = 0; i < n; ++i) ys[i] = i;
  if (cfg_.y_state_vars) ys = *cfg_.y_state_vars;
  const std::vector<int> yp = cfg_.y_param_vars.value_or(w_params_);

  Eigen::VectorXd center(n + p);
  Eigen::VectorXd scale(n + p);
  center << sys_.state_box.Midpoint(), sys_.theta_box.Midpoint();
  scale << sys_.state_box.HalfWidths(), sys_.theta_box.HalfWidths();
  for (int i = 0; i < n + p; ++i) {
    if (!(scale[i] > 0.0)) scale[i] = 1.0;
  }
  const auto wmask = Mask(n, p, ws, w_params_);
  const auto ymask = Mask(n, p, ys, yp);
  w_basis_ = std::make_shared<const MonomialBasis>(n + p, cfg_.degree, wmask,
                                                   center, scale);
  y_basis_ = wmask == ymask
                 ? w_basis_
                 : std::make_shared<const MonomialBasis>(
                       n + p, cfg_.degree, ymask, center, scale);
  for (int v = 0; v < n + p; ++v) {
    if (wmask[v]) w_vars_.push_back(v);
  }
  PolyMatrixFamily probe(n, n, true, w_basis_);
  for (int e = 0; e < probe.num_free_entries(); ++e) {
    const auto [i, j] = probe.free_entry(e);
    entry_row_.push_back(i);
    entry_col_.push_back(j);
  }
  kw_ = w_basis_->size();
  ky_ = y_basis_->size();
  y_begin_ = probe.num_free_entries() * kw_;
  num_vars_ = y_begin_ + sys_.m * n * ky_ + 1;
  threads_ = ResolveThreads(cfg_.threads);
}

void SynthesisProblem::Log(const std::string& msg) const {
  if (cfg_.log) cfg_.log(msg);
}

Eigen::VectorXd SynthesisProblem::InitialPoint() const {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(num_vars_);
  std::vector<int> zero(sys_.n + sys_.p, 0);
  const int k0 = w_basis_->IndexOf(zero);
  for (std::size_t e = 0; e < entry_row_.size(); ++e) {
    if (entry_row_[e] == entry_col_[e]) z[w_offset(static_cast<int>(e)) + k0] = 1.0;
  }
  z[alpha_index()] = 10.0;
  return z;
}

std::shared_ptr<const PolyDualMetric> SynthesisProblem::MetricFromDecision(
    const Eigen::VectorXd& z) const {
  const int n = sys_.n;
  PolyMatrixFamily W(n, n, true, w_basis_);
  for (std::size_t e = 0; e < entry_row_.size(); ++e) {
    for (int k = 0; k < kw_; ++k) {
      W.set_coeff(entry_row_[e], entry_col_[e], k,
                  z[w_offset(static_cast<int>(e)) + k]);
    }
  }
  PolyMatrixFamily Y(sys_.m, n, false, y_basis_);
  for (int r = 0; r < sys_.m; ++r) {
    for (int c = 0; c < n; ++c) {
      for (int k = 0; k < ky_; ++k) Y.set_coeff(r, c, k, z[y_offset(r, c) + k]);
    }
  }
  return std::make_shared<const PolyDualMetric>(std::move(W), std::move(Y),
                                                sys_.p);
}

void SynthesisProblem::PrepareInto(const DynamicsTerms& terms,
                                   const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& th,
                                   PreparedPoint* out) const {
  const int n = sys_.n;
  const int p = sys_.p;
  const int m = sys_.m;
  const int T = static_cast<int>(w_params_.size());
  out->x = x;
  out->theta = th;
  Eigen::VectorXd z(n + p);
  z << x, th;
  std::vector<double> partials(static_cast<std::size_t>(n + p) * kw_, 0.0);
  out->w_mono.resize(kw_);
  w_basis_->EvaluateWithPartials(z, w_vars_, out->w_mono, partials);
  const Eigen::VectorXd drift = terms.Drift(th);
  out->w_drift.assign(kw_, 0.0);
  out->w_dinput.assign(static_cast<std::size_t>(m) * kw_, 0.0);
  for (int v : w_vars_) {
    if (v >= n) continue;
    const double* dp = partials.data() + static_cast<std::size_t>(v) * kw_;
    for (int k = 0; k < kw_; ++k) out->w_drift[k] += dp[k] * drift[v];
    for (int r = 0; r < m; ++r) {
      const double b = terms.B(v, r);
      if (b == 0.0) continue;
      for (int k = 0; k < kw_; ++k) out->w_dinput[r * kw_ + k] += dp[k] * b;
    }
  }
  out->w_dtheta.resize(static_cast<std::size_t>(T) * kw_);
  for (int t = 0; t < T; ++t) {
    const double* dp =
        partials.data() + static_cast<std::size_t>(n + w_params_[t]) * kw_;
    std::copy(dp, dp + kw_, out->w_dtheta.begin() + t * kw_);
  }
  if (y_basis_ == w_basis_) {
    out->y_mono = out->w_mono;
  } else {
    out->y_mono.resize(ky_);
    y_basis_->Evaluate(z, out->y_mono);
  }
  const Eigen::MatrixXd A = terms.Jacobian(th);
  out->A.resize(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out->A[i * n + j] = A(i, j);
  }
  out->delta.resize(p * n);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < n; ++j) out->delta[i * n + j] = terms.delta(i, j);
  }
  out->B.resize(n * m);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < m; ++r) out->B[i * m + r] = terms.B(i, r);
  }
  out->b_jac.clear();
  if (!terms.constant_input) {
    out->b_jac.resize(static_cast<std::size_t>(m) * n * n);
    for (int r = 0; r < m; ++r) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          out->b_jac[(r * n + i) * n + j] = terms.b_jac[r](i, j);
        }
      }
    }
  }
}

PreparedPoint SynthesisProblem::Prepare(std::size_t index) const {
  PreparedPoint pt;
  PrepareInto(EvaluateTerms(sys_, grid_.x(index)), grid_.x(index),
              grid_.theta(index), &pt);
  pt.index = index;
  return pt;
}

PreparedPoint SynthesisProblem::Prepare(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  PreparedPoint pt;
  PrepareInto(EvaluateTerms(sys_, x), x, theta, &pt);
  pt.index = static_cast<std::size_t>(-1);
  return pt;
}

std::vector<PreparedPoint> SynthesisProblem::Prepare(
    std::span<const std::size_t> indices) const {
  std::vector<PreparedPoint> out(indices.size());
  ParallelFor(indices.size(), threads_, [&](std::size_t i, int) {
    out[i] = Prepare(indices[i]);
  });
  return out;
}

PenaltyOptions SynthesisProblem::MakeOptions(double lambda, double mu) const {
  PenaltyOptions o;
  o.lambda = lambda;
  o.mu = mu;
  o.a_low = cfg_.a_low;
  o.a_high = cfg_.a_high;
  o.temperature = cfg_.temperature;
  o.shift = cfg_.penalty_shift;
  o.c2_weight = cfg_.c2_weight;
  o.alpha_weight = cfg_.alpha_weight;
  o.convention = cfg_.convention;
  return o;
}

void SynthesisProblem::BuildBlocks(const Eigen::VectorXd& zv,
                                   const PenaltyOptions& opts,
                                   const PreparedPoint& pt,
                                   Workspace* ws) const {
  const int n = sys_.n;
  const int p = sys_.p;
  const int m = sys_.m;
  const int T = static_cast<int>(w_params_.size());
  const int N = n + p;
  const double* z = zv.data();
  ws->W.assign(n * n, 0.0);
  ws->D.assign(n * n, 0.0);
  ws->Wth.assign(T * n * n, 0.0);
  ws->Wb.assign(m * n * n, 0.0);
  ws->Y.assign(m * n, 0.0);
  for (std::size_t e = 0; e < entry_row_.size(); ++e) {
    const double* c = z + w_offset(static_cast<int>(e));
    double w = 0.0;
    double d = 0.0;
    for (int k = 0; k < kw_; ++k) {
      w += c[k] * pt.w_mono[k];
      d += c[k] * pt.w_drift[k];
    }
    const int i = entry_row_[e];
    const int j = entry_col_[e];
    ws->W[i * n + j] = ws->W[j * n + i] = w;
    ws->D[i * n + j] = ws->D[j * n + i] = d;
    for (int t = 0; t < T; ++t) {
      const double* dm = pt.w_dtheta.data() + t * kw_;
      double s = 0.0;
      for (int k = 0; k < kw_; ++k) s += c[k] * dm[k];
      ws->Wth[(t * n + i) * n + j] = ws->Wth[(t * n + j) * n + i] = s;
    }
    for (int r = 0; r < m; ++r) {
      const double* dm = pt.w_dinput.data() + r * kw_;
      double s = 0.0;
      for (int k = 0; k < kw_; ++k) s += c[k] * dm[k];
      ws->Wb[(r * n + i) * n + j] = ws->Wb[(r * n + j) * n + i] = s;
    }
  }
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) {
      const double* cy = z + y_offset(r, c);
      double s = 0.0;
      for (int k = 0; k < ky_; ++k) s += cy[k] * pt.y_mono[k];
      ws->Y[r * n + c] = s;
    }
  }
  const double c_lambda = opts.convention == RateConvention::kC1TwoLambda
                              ? 2.0 * opts.lambda
                              : opts.lambda;
  // C1: [[D − AW − WAᵀ − BY − YᵀBᵀ − cλW, −Δᵀ], [−Δ, α²I]].
  ws->c1.assign(N * N, 0.0);
  const double* A = pt.A.data();
  const double* W = ws->W.data();
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double aw = 0.0;
      for (int k = 0; k < n; ++k) {
        aw += A[i * n + k] * W[k * n + j] + W[i * n + k] * A[j * n + k];
      }
      double by = 0.0;
      for (int r = 0; r < m; ++r) {
        by += pt.B[i * m + r] * ws->Y[r * n + j] +
              pt.B[j * m + r] * ws->Y[r * n + i];
      }
      const double v = ws->D[i * n + j] - aw - by - c_lambda * W[i * n + j];
      ws->c1[i * N + j] = ws->c1[j * N + i] = v;
    }
  }
  for (int t = 0; t < p; ++t) {
    for (int i = 0; i < n; ++i) {
      ws->c1[i * N + n + t] = ws->c1[(n + t) * N + i] = -pt.delta[t * n + i];
    }
    ws->c1[(n + t) * N + n + t] = z[alpha_index()];
  }
  ws->c3.assign(2 * T * n * n, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int q = 0; q < n * n; ++q) {
      const double mw = opts.mu * W[q];
      const double dth = ws->Wth[t * n * n + q];
      ws->c3[(2 * t) * n * n + q] = mw + dth;
      ws->c3[(2 * t + 1) * n * n + q] = mw - dth;
    }
  }
  ws->bl.assign(n * n, 0.0);
  ws->bh.assign(n * n, 0.0);
  for (int q = 0; q < n * n; ++q) {
    ws->bl[q] = W[q];
    ws->bh[q] = -W[q];
  }
  for (int i = 0; i < n; ++i) {
    ws->bl[i * n + i] -= 1.0 / opts.a_high;
    ws->bh[i * n + i] += 1.0 / opts.a_low;
  }
  // C2 residuals Wb_r − W Gᵀ − G W.
  ws->R.assign(m * n * n, 0.0);
  for (int r = 0; r < m; ++r) {
    double* R = ws->R.data() + r * n * n;
    for (int q = 0; q < n * n; ++q) R[q] = ws->Wb[r * n * n + q];
    if (!pt.b_jac.empty()) {
      const double* G = pt.b_jac.data() + r * n * n;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int k = 0; k < n; ++k) {
            s += W[i * n + k] * G[j * n + k] + G[i * n + k] * W[k * n + j];
          }
          R[i * n + j] -= s;
        }
      }
    }
  }
}

double SynthesisProblem::Evaluate(const Eigen::VectorXd& zv,
                                  const PenaltyOptions& opts,
                                  const PreparedPoint& pt, Workspace* ws,
                                  double* grad, double* margin) const {
  BuildBlocks(zv, opts, pt, ws);
  const int n = sys_.n;
  const int p = sys_.p;
  const int m = sys_.m;
  const int T = static_cast<int>(w_params_.size());
  const int N = n + p;
  const double c_lambda = opts.convention == RateConvention::kC1TwoLambda
                              ? 2.0 * opts.lambda
                              : opts.lambda;
  double total = 0.0;
  double worst = std::numeric_limits<double>::infinity();
  ws->vec.resize(N);
  double* v = ws->vec.data();

  // Hinge value and dφ/dλ_min.
  auto hinge = [&](double lmin, double* dphi) {
    const double y = opts.shift - lmin;
    if (opts.smoothed) {
      const double tau = opts.temperature;
      *dphi = -Sigmoid(y / tau);
      return tau * Softplus(y / tau);
    }
    *dphi = y > 0.0 ? -1.0 : 0.0;
    return std::max(0.0, y);
  };
  auto min_eig = [&](int dim, const double* a) {
    double value = 0.0;
    if (!JacobiMinEigen(dim, a, &value, v)) {
      throw std::runtime_error("non-finite eigenvalue in penalty at " +
                               PointString(pt.x, pt.theta));
    }
    return value;
  };
  auto quad = [&](int e, const double* u, double* q) {
    const int i = entry_row_[e];
    const int j = entry_col_[e];
    *q = i == j ? u[i] * u[i] : 2.0 * u[i] * u[j];
  };
  constexpr double kTiny = 1e-300;

  // C1.
  {
    const double lmin = min_eig(N, ws->c1.data());
    worst = std::min(worst, lmin);
    double g = 0.0;
    total += hinge(lmin, &g);
    if (grad && std::abs(g) > kTiny) {
      const double* u = v;
      const double* A = pt.A.data();
      double a[kMaxJacobiDim];
      for (int i = 0; i < n; ++i) {
        a[i] = 0.0;
        for (int r = 0; r < n; ++r) a[i] += A[r * n + i] * u[r];
      }
      for (std::size_t e = 0; e < entry_row_.size(); ++e) {
        const int i = entry_row_[e];
        const int j = entry_col_[e];
        double q = 0.0;
        quad(static_cast<int>(e), u, &q);
        const double s = i == j ? a[i] * u[i] : a[i] * u[j] + a[j] * u[i];
        const double cm = g * (2.0 * s + c_lambda * q);
        const double cd = g * q;
        double* gw = grad + w_offset(static_cast<int>(e));
        for (int k = 0; k < kw_; ++k) {
          gw[k] += cd * pt.w_drift[k] - cm * pt.w_mono[k];
        }
      }
      for (int r = 0; r < m; ++r) {
        double bu = 0.0;
        for (int i = 0; i < n; ++i) bu += pt.B[i * m + r] * u[i];
        if (bu == 0.0) continue;
        for (int c = 0; c < n; ++c) {
          const double coef = -2.0 * g * bu * u[c];
          double* gy = grad + y_offset(r, c);
          for (int k = 0; k < ky_; ++k) gy[k] += coef * pt.y_mono[k];
        }
      }
      double ww = 0.0;
      for (int t = 0; t < p; ++t) ww += v[n + t] * v[n + t];
      grad[alpha_index()] += g * ww;
    }
  }
  // C3 pairs.
  for (int t = 0; t < T; ++t) {
    for (int sign = 0; sign < 2; ++sign) {
      const double lmin = min_eig(n, ws->c3.data() + (2 * t + sign) * n * n);
      worst = std::min(worst, lmin);
      double g = 0.0;
      total += hinge(lmin, &g);
      if (!grad || std::abs(g) <= kTiny) continue;
      const double sg = sign == 0 ? 1.0 : -1.0;
      const double* dm = pt.w_dtheta.data() + t * kw_;
      for (std::size_t e = 0; e < entry_row_.size(); ++e) {
        double q = 0.0;
        quad(static_cast<int>(e), v, &q);
        const double cq = g * q;
        double* gw = grad + w_offset(static_cast<int>(e));
        for (int k = 0; k < kw_; ++k) {
          gw[k] += cq * (opts.mu * pt.w_mono[k] + sg * dm[k]);
        }
      }
    }
  }
  // Uniform bounds.
  for (int side = 0; side < 2; ++side) {
    const double lmin = min_eig(n, side == 0 ? ws->bl.data() : ws->bh.data());
    worst = std::min(worst, lmin);
    double g = 0.0;
    total += hinge(lmin, &g);
    if (!grad || std::abs(g) <= kTiny) continue;
    const double sg = side == 0 ? 1.0 : -1.0;
    for (std::size_t e = 0; e < entry_row_.size(); ++e) {
      double q = 0.0;
      quad(static_cast<int>(e), v, &q);
      const double cq = sg * g * q;
      double* gw = grad + w_offset(static_cast<int>(e));
      for (int k = 0; k < kw_; ++k) gw[k] += cq * pt.w_mono[k];
    }
  }
  // C2: weight·‖R‖²_F.
  for (int r = 0; r < m; ++r) {
    const double* R = ws->R.data() + r * n * n;
    double fro = 0.0;
    double maxabs = 0.0;
    for (int q = 0; q < n * n; ++q) {
      fro += R[q] * R[q];
      maxabs = std::max(maxabs, std::abs(R[q]));
    }
    // An exactly satisfied C2 (the usual case) must not cap the margin at 0.
    if (maxabs > kC2Tolerance) worst = std::min(worst, -maxabs);
    total += opts.c2_weight * fro;
    if (!grad || fro == 0.0) continue;
    // RG + GᵀR for the input-Jacobian part.
    double S[kMaxJacobiDim * kMaxJacobiDim] = {};
    if (!pt.b_jac.empty()) {
      const double* G = pt.b_jac.data() + r * n * n;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int k = 0; k < n; ++k) {
            s += R[i * n + k] * G[k * n + j] + G[k * n + i] * R[k * n + j];
          }
          S[i * n + j] = s;
        }
      }
    }
    const double* db = pt.w_dinput.data() + r * kw_;
    for (std::size_t e = 0; e < entry_row_.size(); ++e) {
      const int i = entry_row_[e];
      const int j = entry_col_[e];
      const double re = i == j ? R[i * n + i] : R[i * n + j] + R[j * n + i];
      const double se = i == j ? S[i * n + i] : S[i * n + j] + S[j * n + i];
      const double c = 2.0 * opts.c2_weight;
      double* gw = grad + w_offset(static_cast<int>(e));
      for (int k = 0; k < kw_; ++k) {
        gw[k] += c * (re * db[k] - se * pt.w_mono[k]);
      }
    }
  }
  if (margin) *margin = worst;
  return total;
}

double SynthesisProblem::ScreenMargin(const Eigen::VectorXd& z,
                                      const PenaltyOptions& opts,
                                      const PreparedPoint& pt, Workspace* ws,
                                      double threshold) const {
  BuildBlocks(z, opts, pt, ws);
  const int n = sys_.n;
  const int N = n + sys_.p;
  const int T = static_cast<int>(w_params_.size());
  ws->vec.resize(N);
  double worst = std::numeric_limits<double>::infinity();
  auto check = [&](int dim, const double* a) {
    if (CholeskyShiftSucceeds(dim, a, threshold)) return;
    double value = 0.0;
    if (!JacobiMinEigen(dim, a, &value, ws->vec.data())) {
      throw std::runtime_error("non-finite eigenvalue at " +
                               PointString(pt.x, pt.theta));
    }
    worst = std::min(worst, value);
  };
  check(N, ws->c1.data());
  for (int b = 0; b < 2 * T; ++b) check(n, ws->c3.data() + b * n * n);
  check(n, ws->bl.data());
  check(n, ws->bh.data());
  for (double r : ws->R) {
    if (std::abs(r) > kC2Tolerance) worst = std::min(worst, -std::abs(r));
  }
  return worst;
}

double SynthesisProblem::PointMargin(const Eigen::VectorXd& z,
                                     const PenaltyOptions& opts,
                                     const PreparedPoint& point) const {
  Workspace ws;
  double margin = 0.0;
  Evaluate(z, opts, point, &ws, nullptr, &margin);
  return margin;
}

double SynthesisProblem::Penalty(const Eigen::VectorXd& z,
                                 const PenaltyOptions& opts,
                                 std::span<const PreparedPoint> points,
                                 Eigen::VectorXd* grad) const {
  if (z.size() != num_vars_) {
    throw std::invalid_argument("decision vector has wrong size");
  }
  constexpr std::size_t kChunk = 64;
  const std::size_t chunks = (points.size() + kChunk - 1) / kChunk;
  std::vector<double> values(chunks, 0.0);
  std::vector<std::vector<double>> grads(grad ? chunks : 0);
  ParallelFor(chunks, threads_, [&](std::size_t c, int) {
    Workspace ws;
    double* g = nullptr;
    if (grad) {
      grads[c].assign(num_vars_, 0.0);
      g = grads[c].data();
    }
    const std::size_t end = std::min(points.size(), (c + 1) * kChunk);
    double sum = 0.0;
    for (std::size_t i = c * kChunk; i < end; ++i) {
      sum += Evaluate(z, opts, points[i], &ws, g, nullptr);
    }
    values[c] = sum;
  });
  double total = opts.alpha_weight * z[alpha_index()];
  for (double v : values) total += v;
  if (grad) {
    grad->setZero(num_vars_);
    for (const auto& g : grads) {
      *grad += Eigen::Map<const Eigen::VectorXd>(g.data(), num_vars_);
    }
    (*grad)[alpha_index()] += opts.alpha_weight;
  }
  return total;
}

SynthesisProblem::ScanResult SynthesisProblem::Scan(
    const Eigen::VectorXd& z, const PenaltyOptions& opts, double threshold,
    std::size_t max_violators) const {
  constexpr std::size_t kJointChunk = 64;
  const std::size_t lattice_chunks = grid_.num_states();
  const std::size_t joint_chunks =
      (grid_.num_joint() + kJointChunk - 1) / kJointChunk;
  std::vector<std::vector<std::pair<double, std::size_t>>> found(
      lattice_chunks + joint_chunks);
  ParallelFor(found.size(), threads_, [&](std::size_t c, int) {
    Workspace ws;
    PreparedPoint pt;
    auto visit = [&](const DynamicsTerms& terms, std::size_t i) {
      PrepareInto(terms, grid_.x(i), grid_.theta(i), &pt);
      const double mg = ScreenMargin(z, opts, pt, &ws, threshold);
      if (mg < threshold) found[c].emplace_back(mg, i);
    };
    if (c < lattice_chunks) {
      const DynamicsTerms terms = EvaluateTerms(sys_, grid_.state(c));
      const std::size_t nt = grid_.num_thetas();
      for (std::size_t t = 0; t < nt; ++t) visit(terms, c * nt + t);
    } else {
      const std::size_t begin =
          grid_.lattice_size() + (c - lattice_chunks) * kJointChunk;
      const std::size_t end = std::min(grid_.size(), begin + kJointChunk);
      for (std::size_t i = begin; i < end; ++i) {
        visit(EvaluateTerms(sys_, grid_.x(i)), i);
      }
    }
  });
  ScanResult out;
  for (auto& f : found) {
    out.violators.insert(out.violators.end(), f.begin(), f.end());
  }
  std::stable_sort(out.violators.begin(), out.violators.end());
  if (!out.violators.empty()) {
    out.worst = out.violators.front().first;
    out.worst_index = out.violators.front().second;
  }
  if (out.violators.size() > max_violators) out.violators.resize(max_violators);
  return out;
}

// ------------------------------------------------------ line search

SynthesisProblem::FixedResult SynthesisProblem::SolveFixed(
    double lambda, double mu, const Eigen::VectorXd& z0) const {
  PenaltyOptions opts = MakeOptions(lambda, mu);
  const std::size_t total = grid_.size();
  std::vector<std::size_t> working;
  std::unordered_set<std::size_t> in_set;
  const std::size_t initial =
      std::min<std::size_t>(total, std::max(1, cfg_.initial_working_set));
  for (std::size_t i = 0; i < initial; ++i) {
    const std::size_t idx = i * total / initial;
    if (in_set.insert(idx).second) working.push_back(idx);
  }
  std::vector<PreparedPoint> prepared = Prepare(working);

  FixedResult res;
  res.z = z0;
  double best_worst = -std::numeric_limits<double>::infinity();
  int stall = 0;
  const double stop_margin = 0.5 * (cfg_.margin_target + cfg_.penalty_shift);
  for (int round = 0; round < cfg_.max_rounds; ++round) {
    opts.temperature = std::max(
        cfg_.temperature, cfg_.temperature_start * std::pow(0.5, round));
    PenaltyOptions exact = opts;
    exact.smoothed = false;
    auto working_worst = [&](const Eigen::VectorXd& z) {
      std::vector<double> w(prepared.size());
      ParallelFor(prepared.size(), threads_, [&](std::size_t i, int) {
        w[i] = PointMargin(z, exact, prepared[i]);
      });
      return *std::min_element(w.begin(), w.end());
    };
    LbfgsOptions lo;
    lo.max_iterations = cfg_.max_iterations;
    lo.memory = 20;
    lo.gradient_abs = 1e-10;
    const bool last_temperature = opts.temperature <= cfg_.temperature;
    auto result = MinimizeLbfgs(
        [&](const Eigen::VectorXd& z, Eigen::VectorXd* g) {
          return Penalty(z, opts, prepared, g);
        },
        res.z, lo,
        [&](const Eigen::VectorXd& z, double, int it) {
          if (!last_temperature || it % 20 != 0) return false;
          return working_worst(z) >= stop_margin;
        });
    res.z = result.x;
    res.iterations += result.iterations;
    res.rounds = round + 1;
    const ScanResult scan = Scan(res.z, opts, cfg_.margin_target,
                                 static_cast<std::size_t>(cfg_.exchange_batch) * 4);
    std::ostringstream os;
    os << "  lambda=" << lambda << " mu=" << mu << " round " << round + 1
       << " tau=" << opts.temperature << " iters=" << result.iterations
       << " working=" << prepared.size() << " alpha_sq=" << res.z[alpha_index()]
       << " violators=" << scan.violators.size();
    if (!scan.violators.empty()) os << " worst=" << scan.worst;
    Log(os.str());
    res.working_set = prepared.size();
    if (scan.violators.empty()) {
      if (!last_temperature) continue;
      res.feasible = true;
      res.worst = cfg_.margin_target;
      return res;
    }
    res.worst = scan.worst;
    if (scan.worst > best_worst + 1e-6) {
      best_worst = scan.worst;
      stall = 0;
    } else if (last_temperature && ++stall >= 3) {
      break;
    }
    std::vector<std::size_t> added;
    for (const auto& [mg, idx] : scan.violators) {
      if (static_cast<int>(added.size()) >= cfg_.exchange_batch) break;
      if (in_set.insert(idx).second) added.push_back(idx);
    }
    auto extra = Prepare(added);
    for (auto& e : extra) prepared.push_back(std::move(e));
    working.insert(working.end(), added.begin(), added.end());
  }
  return res;
}

SynthesisResult SynthesisProblem::Solve() const {
  std::vector<double> lambdas = cfg_.lambdas;
  std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
  lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
  std::vector<double> mus = cfg_.mus;
  std::sort(mus.begin(), mus.end());
  mus.erase(std::unique(mus.begin(), mus.end()), mus.end());

  SynthesisResult out;
  Eigen::VectorXd warm = InitialPoint();
  for (double lambda : lambdas) {
    std::optional<FixedResult> winner;
    double winner_mu = 0.0;
    for (double mu : mus) {
      Log("attempt lambda=" + std::to_string(lambda) +
          " mu=" + std::to_string(mu));
      FixedResult r = SolveFixed(lambda, mu, warm);
      SynthesisAttempt a{lambda, mu, r.feasible, r.worst,
                         r.z[alpha_index()], r.rounds, r.iterations,
                         r.working_set};
      out.attempts.push_back(a);
      out.best_margin = std::max(out.best_margin, r.worst);
      if (!r.feasible) continue;
      warm = r.z;
      if (!winner || r.z[alpha_index()] < winner->z[alpha_index()]) {
        winner = r;
        winner_mu = mu;
      }
    }
    if (!winner) continue;

    Eigen::VectorXd z = winner->z;
    const PenaltyOptions opts = MakeOptions(lambda, winner_mu);
    if (cfg_.tighten) {
      // Smallest α² keeping every margin ≥ target (C1 is monotone in α²).
      double lo = 0.0;
      double hi = z[alpha_index()];
      for (int it = 0; it < 10; ++it) {
        const double mid = 0.5 * (lo + hi);
        Eigen::VectorXd trial = z;
        trial[alpha_index()] = mid;
        if (Scan(trial, opts, cfg_.margin_target, 1).violators.empty()) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      z[alpha_index()] = hi;
    }
    MetricCertificate cert;
    cert.system = sys_.name;
    cert.metric = MetricFromDecision(z);
    cert.lambda = lambda;
    cert.mu = winner_mu;
    cert.alpha_sq = z[alpha_index()];
    cert.a_low = cfg_.a_low;
    cert.a_high = cfg_.a_high;
    cert.convention = cfg_.convention;
    cert.margin_target = cfg_.margin_target;
    cert.grid = cfg_.grid;
    if (cfg_.tighten) {
      const ValidationReport pre =
          ValidateCertificate(cert, sys_, cfg_.grid, threads_);
      const double s = 1.0 + cfg_.bound_slack;
      cert.a_high = s / pre.w_eig_min;
      cert.a_low = 1.0 / (s * pre.w_eig_max);
    }
    cert.validation = ValidateCertificate(cert, sys_, cfg_.grid, threads_);
    std::ostringstream os;
    os << "certificate lambda=" << cert.lambda << " mu=" << cert.mu
       << " alpha_sq=" << cert.alpha_sq << " a_low=" << cert.a_low
       << " a_high=" << cert.a_high
       << " worst_margin=" << cert.validation.worst_margin();
    Log(os.str());
    out.feasible = true;
    out.best_margin = cert.validation.worst_margin();
    out.certificate = std::move(cert);
    return out;
  }
  return out;
}

SynthesisResult Synthesize(const UncertainSystem& sys,
                           const SynthesisConfig& cfg) {
  return SynthesisProblem(sys, cfg).Solve();
}

}  // namespace arccm

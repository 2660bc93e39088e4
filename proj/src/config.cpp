#include "moran/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "moran/expression.hpp"
#include "moran/particle.hpp"

namespace moran {

ConfigError::ConfigError(const std::string& message, int line, int column)
    : Error(line > 0 ? message + " (line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ")"
                     : message),
      line_(line),
      column_(column) {}

namespace {

[[noreturn]] void fail(const YAML::Node& node, const std::string& message) {
  int line = 0, column = 0;
  if (node.IsDefined()) {
    const YAML::Mark m = node.Mark();
    if (m.line >= 0) {
      line = m.line + 1;
      column = m.column + 1;
    }
  }
  throw ConfigError(message, line, column);
}

YAML::Node require(const YAML::Node& parent, const std::string& key, const std::string& where) {
  const YAML::Node n = parent[key];
  if (!n) fail(parent, "missing required key '" + where + key + "'");
  return n;
}

double as_double(const YAML::Node& n, const std::string& what) {
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    fail(n, what + ": expected a number");
  }
}

std::int64_t as_int(const YAML::Node& n, const std::string& what) {
  try {
    return n.as<std::int64_t>();
  } catch (const YAML::Exception&) {
    fail(n, what + ": expected an integer");
  }
}

std::string as_string(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) fail(n, what + ": expected a string");
  return n.as<std::string>();
}

double get_double(const YAML::Node& parent, const std::string& key, double fallback) {
  const YAML::Node n = parent[key];
  return n ? as_double(n, key) : fallback;
}

Vector parse_vector(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence()) fail(n, what + ": expected a list of numbers");
  Vector v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = as_double(n[i], what);
  return v;
}

Matrix parse_matrix(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() == 0) fail(n, what + ": expected a list of rows");
  const std::size_t rows = n.size();
  std::size_t cols = 0;
  Matrix m;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!n[i].IsSequence()) fail(n[i], what + ": each row must be a list");
    if (i == 0) {
      cols = n[i].size();
      m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    } else if (n[i].size() != cols) {
      fail(n[i], what + ": rows have different lengths");
    }
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = as_double(n[i][j], what);
  }
  return m;
}

ParameterTable parse_params(const YAML::Node& n) {
  ParameterTable t;
  if (!n) return t;
  if (!n.IsMap()) fail(n, "kernel.params: expected a mapping");
  for (const auto& kv : n) {
    const std::string key = kv.first.as<std::string>();
    if (kv.second.IsSequence()) {
      std::vector<double> v;
      for (const auto& e : kv.second) v.push_back(as_double(e, "kernel.params." + key));
      t.arrays[key] = v;
    } else {
      t.scalars[key] = as_double(kv.second, "kernel.params." + key);
    }
  }
  return t;
}

Expression parse_expression(const YAML::Node& n, const ParameterTable& params) {
  try {
    return Expression::parse(n.as<std::string>(), params);
  } catch (const ExpressionError& e) {
    fail(n, e.what());
  }
}

bool is_expression(const YAML::Node& n) {
  if (!n.IsScalar()) return false;
  try {
    n.as<double>();
    return false;
  } catch (const YAML::Exception&) {
    return true;
  }
}

SiteFunction parse_site(const YAML::Node& n, std::size_t size, const ParameterTable& params,
                        const std::string& what) {
  if (!n) return SiteFunction::zero(size);
  if (n.IsSequence()) {
    Vector v = parse_vector(n, what);
    if (v.size() != static_cast<Eigen::Index>(size)) fail(n, what + ": wrong length");
    return SiteFunction::constant(std::move(v));
  }
  if (!is_expression(n)) return SiteFunction::constant(Vector::Constant(static_cast<Eigen::Index>(size), as_double(n, what)));
  try {
    return parse_expression(n, params).site_function(size);
  } catch (const ExpressionError& e) {
    fail(n, what + ": " + e.what());
  }
}

PairFunction parse_pair(const YAML::Node& n, std::size_t size, const ParameterTable& params,
                        const std::string& what) {
  if (!n) return PairFunction::zero(size);
  if (n.IsSequence()) {
    Matrix m = parse_matrix(n, what);
    if (m.rows() != static_cast<Eigen::Index>(size) || m.cols() != static_cast<Eigen::Index>(size))
      fail(n, what + ": wrong dimensions");
    return PairFunction::constant(std::move(m));
  }
  if (!is_expression(n))
    return PairFunction::constant(Matrix::Constant(static_cast<Eigen::Index>(size),
                                                   static_cast<Eigen::Index>(size), as_double(n, what)));
  return parse_expression(n, params).pair_function(size);
}

SelectionKernel parse_kernel(const YAML::Node& n, std::size_t size) {
  if (!n) return SelectionKernel::none(size);
  if (!n.IsMap()) fail(n, "model.kernel: expected a mapping");
  const ParameterTable params = parse_params(n["params"]);
  const std::string form = n["form"] ? as_string(n["form"], "model.kernel.form") : "additive";
  if (form == "none") return SelectionKernel::none(size);
  if (form == "additive") {
    AdditiveKernel a;
    a.death = parse_site(n["death"], size, params, "model.kernel.death");
    a.birth = parse_site(n["birth"], size, params, "model.kernel.birth");
    a.symmetric = parse_pair(n["symmetric"], size, params, "model.kernel.symmetric");
    return SelectionKernel(std::move(a));
  }
  if (form == "general") {
    GeneralKernel g;
    if (n["V"]) {
      const PairFunction v = parse_pair(n["V"], size, params, "model.kernel.V");
      if (v.mu_dependent())
        fail(n["V"], "model.kernel.V: the non-symmetric part of a general kernel must not read mu");
      const auto base = SelectionKernel::general_from_matrix(v(Measure::uniform(size)));
      g.components = base.general_form()->components;
    }
    if (n["components"]) {
      const YAML::Node cs = n["components"];
      if (!cs.IsSequence()) fail(cs, "model.kernel.components: expected a list");
      for (const auto& c : cs) {
        GeneralKernel::Component comp{parse_vector(require(c, "death", "components[]."), "death"),
                                      parse_vector(require(c, "birth", "components[]."), "birth")};
        if (comp.death.size() != static_cast<Eigen::Index>(size) ||
            comp.birth.size() != static_cast<Eigen::Index>(size))
          fail(c, "model.kernel.components: wrong length");
        g.components.push_back(std::move(comp));
      }
    }
    g.symmetric = parse_pair(n["symmetric"], size, params, "model.kernel.symmetric");
    return SelectionKernel(std::move(g));
  }
  fail(n["form"], "model.kernel.form: expected additive, general or none");
}

std::function<double(std::size_t)> rate_sequence(const YAML::Node& n, const std::string& what) {
  if (!is_expression(n)) {
    const double v = as_double(n, what);
    return [v](std::size_t) { return v; };
  }
  const Expression e = parse_expression(n, {});
  if (e.uses_mu() || e.uses_y()) fail(n, what + ": rate expressions may only use x");
  return [e](std::size_t x) {
    Expression::Context ctx;
    ctx.x = static_cast<double>(x);
    return e.evaluate(ctx);
  };
}

BDParams parse_bd(const YAML::Node& p, std::size_t K) {
  BDParams bd;
  bd.b = rate_sequence(require(p, "b", "model.params."), "model.params.b");
  bd.d = rate_sequence(require(p, "d", "model.params."), "model.params.d");
  bd.K = K;
  if (p["boundary"]) {
    try {
      bd.boundary = boundary_policy_from_string(as_string(p["boundary"], "boundary"));
    } catch (const InvalidArgument& e) {
      fail(p["boundary"], e.what());
    }
  }
  return bd;
}

}  // namespace

ResolvedModel build_model(const YAML::Node& node) {
  if (!node.IsMap()) fail(node, "model: expected a mapping");
  ResolvedModel out;
  out.node = node;
  try {
    if (node["builder"]) {
      out.builder = as_string(node["builder"], "model.builder");
      const YAML::Node p = node["params"] ? node["params"] : YAML::Node(YAML::NodeType::Map);
      if (out.builder == "two_allelic") {
        out.spec = two_allelic(as_double(require(p, "a", "model.params."), "a"),
                               as_double(require(p, "b", "model.params."), "b"),
                               get_double(p, "p", 0.0), get_double(p, "q", 0.0));
      } else if (out.builder == "birth_death") {
        const auto K = static_cast<std::size_t>(as_int(require(p, "K", "model.params."), "K"));
        out.bd = parse_bd(p, K);
        out.spec = birth_death(*out.bd);
      } else if (out.builder == "counterexample") {
        const B1Mode mode = p["b1_mode"] ? b1_mode_from_string(as_string(p["b1_mode"], "b1_mode"))
                                         : B1Mode::Paper;
        out.counterexample = counterexample_bd(
            as_double(require(p, "b", "model.params."), "b"),
            as_double(require(p, "d", "model.params."), "d"), mode,
            static_cast<std::size_t>(as_int(require(p, "K", "model.params."), "K")),
            get_double(p, "b1", -1.0));
        out.spec = out.counterexample->spec;
      } else {
        fail(node["builder"], "model.builder: unknown builder '" + out.builder +
                                  "' (expected two_allelic, birth_death, counterexample)");
      }
    } else {
      const Matrix q = parse_matrix(require(node, "Q", "model."), "model.Q");
      if (q.rows() != q.cols()) fail(node["Q"], "model.Q: must be square");
      const auto size = static_cast<std::size_t>(q.rows());
      std::vector<std::string> labels;
      if (node["labels"])
        for (const auto& l : node["labels"]) labels.push_back(l.as<std::string>());
      const std::string name = node["name"] ? as_string(node["name"], "model.name") : "inline";
      out.spec = make_model(name, StateSpace(size, labels), RateMatrix(q),
                            parse_kernel(node["kernel"], size));
    }
    if (node["fleming_viot"] && node["fleming_viot"].as<bool>()) out.spec = fleming_viot_mode(out.spec);
    if (node["sigma_reduce"] && node["sigma_reduce"].as<bool>()) out.spec = sigma_reduce(out.spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const YAML::Exception& e) {
    fail(node, std::string("model: ") + e.what());
  } catch (const InvalidArgument& e) {
    fail(node, std::string("model: ") + e.what());
  } catch (const SizeMismatch& e) {
    fail(node, std::string("model: ") + e.what());
  } catch (const NotAdditive& e) {
    fail(node, std::string("model: ") + e.what());
  }
  return out;
}

ModelSpec rebuild_with_size(const ResolvedModel& model, std::size_t K) {
  if (model.bd) {
    BDParams p = *model.bd;
    p.K = K;
    return birth_death(p);
  }
  if (model.counterexample) {
    const auto& c = *model.counterexample;
    return counterexample_bd(c.b, c.d, c.mode, K, c.b1).spec;
  }
  throw InvalidArgument("model has no truncation parameter to double");
}

Measure parse_measure(const YAML::Node& n, std::size_t size) {
  if (!n) return Measure::uniform(size);
  if (n.IsSequence()) {
    const Vector w = parse_vector(n, "mu0");
    if (w.size() != static_cast<Eigen::Index>(size)) fail(n, "mu0: wrong length");
    try {
      return Measure::probability(w, 1e-9);
    } catch (const Error& e) {
      fail(n, std::string("mu0: ") + e.what());
    }
  }
  const std::string s = as_string(n, "mu0");
  if (s == "uniform") return Measure::uniform(size);
  if (s.rfind("delta:", 0) == 0) {
    const long k = std::strtol(s.c_str() + 6, nullptr, 10);
    if (k < 1 || static_cast<std::size_t>(k) > size) fail(n, "mu0: delta label out of range");
    return Measure::delta(size, static_cast<std::size_t>(k - 1));
  }
  fail(n, "mu0: expected a list, 'uniform' or 'delta:<label>'");
}

NamedFunction parse_function(const YAML::Node& n, std::size_t size, std::size_t index) {
  std::string name = "phi" + std::to_string(index + 1);
  YAML::Node body = n;
  if (n.IsMap()) {
    if (n["name"]) name = as_string(n["name"], "phi.name");
    if (n["values"]) body = n["values"];
    else if (n["indicator"]) body = YAML::Node("indicator:" + n["indicator"].as<std::string>());
    else fail(n, "phi: expected 'values' or 'indicator'");
  }
  if (body.IsSequence()) {
    const Vector v = parse_vector(body, "phi");
    if (v.size() != static_cast<Eigen::Index>(size)) fail(n, "phi: wrong length");
    return {name, TestFunction(v)};
  }
  const std::string s = as_string(body, "phi");
  if (s.rfind("indicator:", 0) == 0) {
    const long k = std::strtol(s.c_str() + 10, nullptr, 10);
    if (k < 1 || static_cast<std::size_t>(k) > size) fail(n, "phi: indicator label out of range");
    if (!n.IsMap()) name = "ind" + std::to_string(k);
    return {name, TestFunction::indicator(size, static_cast<std::size_t>(k - 1))};
  }
  if (s.rfind("constant:", 0) == 0) {
    if (!n.IsMap()) name = "const";
    return {name, TestFunction::constant(size, std::strtod(s.c_str() + 9, nullptr))};
  }
  fail(n, "phi: expected a list, 'indicator:<label>' or 'constant:<value>'");
}

std::vector<NamedFunction> parse_functions(const YAML::Node& n, std::size_t size) {
  std::vector<NamedFunction> out;
  if (n.IsSequence() && n.size() > 0 && !n[0].IsSequence() && !n[0].IsMap() && !is_expression(n[0])) {
    out.push_back(parse_function(n, size, 0));
    return out;
  }
  if (n.IsSequence()) {
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(parse_function(n[i], size, i));
    return out;
  }
  out.push_back(parse_function(n, size, 0));
  return out;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  cfg.text = text;
  cfg.hash = fnv1a_hex(text);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("config is not valid YAML: " + e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  if (!root.IsMap()) throw ConfigError("config root must be a mapping", 1, 1);
  const YAML::Node task = root["task"];
  if (!task) fail(root, "missing required key 'task'");
  const YAML::Node type = task.IsMap() ? require(task, "type", "task.") : task;
  const std::string full = as_string(type, "task");
  const auto colon = full.find(':');
  cfg.task = full.substr(0, colon);
  cfg.task_arg = colon == std::string::npos ? "" : full.substr(colon + 1);
  static const std::set<std::string> tasks{"validate", "simulate", "flow",     "eigen",
                                           "variance", "experiment", "zoo-check"};
  if (!tasks.count(cfg.task))
    fail(type, "task: unknown task '" + full +
                   "' (expected validate, simulate, flow, eigen, variance, experiment:<name>, "
                   "zoo-check:<name>)");
  if ((cfg.task == "experiment" || cfg.task == "zoo-check") && cfg.task_arg.empty())
    fail(type, "task: '" + cfg.task + "' needs a name after ':'");
  cfg.task_node = task.IsMap() ? task : YAML::Node(YAML::NodeType::Map);

  if (root["seed"]) cfg.seed = static_cast<std::uint64_t>(as_int(root["seed"], "seed"));
  if (root["output"]) cfg.output_dir = as_string(root["output"], "output");
  if (root["tolerance_profile"]) cfg.tolerance_profile = as_string(root["tolerance_profile"], "tolerance_profile");
  if (cfg.tolerance_profile == "strict") cfg.tolerances = Tolerances::strict();
  else if (cfg.tolerance_profile != "default")
    fail(root["tolerance_profile"], "tolerance_profile: expected strict or default");
  if (const YAML::Node t = root["tolerances"]) {
    if (!t.IsMap()) fail(t, "tolerances: expected a mapping");
    cfg.tolerances.exact = get_double(t, "exact", cfg.tolerances.exact);
    cfg.tolerances.flow = get_double(t, "flow", cfg.tolerances.flow);
    cfg.tolerances.eigen = get_double(t, "eigen", cfg.tolerances.eigen);
    cfg.tolerances.mass_drift = get_double(t, "mass_drift", cfg.tolerances.mass_drift);
    cfg.tolerances.negativity = get_double(t, "negativity", cfg.tolerances.negativity);
  }
  cfg.model = build_model(require(root, "model", ""));
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ExperimentPlan parse_plan(const RunConfig& config) {
  const YAML::Node t = config.task_node;
  ExperimentPlan plan;
  try {
    plan.kind = experiment_from_string(config.task_arg);
  } catch (const InvalidArgument& e) {
    fail(t, e.what());
  }
  plan.model = config.model.spec;
  const std::size_t size = plan.model.size();
  plan.mu0 = parse_measure(t["mu0"], size);
  plan.functions = parse_functions(require(t, "phi", "task."), size);
  const YAML::Node ns = require(t, "N", "task.");
  if (ns.IsSequence()) {
    for (const auto& n : ns) plan.n_grid.push_back(as_int(n, "task.N"));
  } else {
    plan.n_grid.push_back(as_int(ns, "task.N"));
  }
  plan.replicates = static_cast<std::size_t>(as_int(require(t, "replicates", "task."), "task.replicates"));
  plan.horizon = get_double(t, "horizon", plan.horizon);
  if (t["sample_times"]) {
    const Vector st = parse_vector(t["sample_times"], "task.sample_times");
    plan.sample_times.assign(st.data(), st.data() + st.size());
  }
  if (t["p_norms"]) {
    const Vector pn = parse_vector(t["p_norms"], "task.p_norms");
    plan.p_norms.assign(pn.data(), pn.data() + pn.size());
  }
  plan.seed = config.seed;
  plan.bootstrap_resamples =
      t["bootstrap"] ? static_cast<std::size_t>(as_int(t["bootstrap"], "task.bootstrap")) : 1000;
  plan.ci_level = get_double(t, "ci_level", 0.95);
  plan.config_hash = config.hash;
  if (const YAML::Node a = t["acceptance"]) {
    auto pair = [&](const char* key) -> std::optional<std::pair<double, double>> {
      if (!a[key]) return std::nullopt;
      const Vector v = parse_vector(a[key], std::string("task.acceptance.") + key);
      if (v.size() != 2) fail(a[key], std::string("task.acceptance.") + key + ": expected [lo, hi]");
      return std::make_pair(v[0], v[1]);
    };
    plan.acceptance.slope = pair("slope");
    plan.acceptance.variance_ratio = pair("variance_ratio");
    if (a["slope_p"]) plan.acceptance.slope_p = as_double(a["slope_p"], "slope_p");
    if (a["max_time_ratio"]) plan.acceptance.max_time_ratio = as_double(a["max_time_ratio"], "max_time_ratio");
    if (a["ks_max"]) plan.acceptance.ks_max = as_double(a["ks_max"], "ks_max");
  }
  try {
    if (plan.kind != ExperimentKind::UniformInTime) plan.validate();
  } catch (const Error& e) {
    fail(t, e.what());
  }
  return plan;
}

}  // namespace moran

// Command-line entry point: reads a run config, executes one task and writes
// summary.json plus task CSVs under the output directory.
//
// Exit status: 0 ok, 1 config error, 2 validation failure, 3 acceptance
// failure, 4 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "moran/config.hpp"
#include "moran/expression.hpp"
#include "moran/harness.hpp"
#include "moran/particle.hpp"
#include "moran/solvers.hpp"
#include "moran/variance.hpp"
#include "moran/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moran;

namespace {

enum Exit { kOk = 0, kConfig = 1, kValidation = 2, kAcceptance = 3, kNumerical = 4 };

struct Context {
  RunConfig config;
  fs::path out;
  std::size_t workers = 1;
  json results = json::object();
  int status = kOk;
};

std::string provenance_line(const Context& ctx) {
  return "# config_hash=" + ctx.config.hash + " seed=" + std::to_string(ctx.config.seed) + "\n";
}

void write_text(const Context& ctx, const std::string& name, const std::string& body) {
  std::ofstream f(ctx.out / name);
  if (!f) throw ConfigError("cannot write '" + (ctx.out / name).string() + "'");
  f << body;
}

void write_csv(const Context& ctx, const std::string& name, const std::string& body) {
  write_text(ctx, name, provenance_line(ctx) + body);
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string measure_header(std::size_t size, const std::string& first) {
  std::string h = first;
  for (std::size_t x = 1; x <= size; ++x) h += ",x_" + std::to_string(x);
  return h + "\n";
}

std::string measure_row(double t, const Vector& w) {
  std::string s = format_double(t);
  for (Eigen::Index x = 0; x < w.size(); ++x) s += "," + format_double(w[x]);
  return s + "\n";
}

double task_double(const YAML::Node& t, const std::string& key, double fallback) {
  const YAML::Node n = t[key];
  if (!n) return fallback;
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError("task." + key + ": expected a number", n.Mark().line + 1, n.Mark().column + 1);
  }
}

std::vector<double> grid(double horizon, std::size_t points) {
  std::vector<double> times;
  for (std::size_t i = 0; i < points; ++i)
    times.push_back(points == 1 ? horizon : horizon * static_cast<double>(i) / static_cast<double>(points - 1));
  return times;
}

json validation_json(const ValidationReport& rep) {
  return {{"admissible", rep.admissible()}, {"violations", rep.violations},
          {"warnings", rep.warnings}, {"kernel_bound", rep.kernel_bound},
          {"measures_evaluated", rep.measures_evaluated}, {"irreducible", rep.irreducible}};
}

void run_simulate(Context& ctx) {
  const auto& spec = ctx.config.model.spec;
  const YAML::Node t = ctx.config.task_node;
  if (!t["N"]) throw ConfigError("missing required key 'task.N'");
  const auto n = t["N"].as<std::int64_t>();
  const double horizon = task_double(t, "horizon", 1.0);
  const auto points = static_cast<std::size_t>(task_double(t, "samples", 11));
  const auto reps = static_cast<std::size_t>(task_double(t, "replicates", 1));
  const bool log_events = t["events"] && t["events"].as<bool>();
  const Measure mu0 = parse_measure(t["mu0"], spec.size());
  const auto times = grid(horizon, points);
  SimulationOptions opt;
  opt.log_events = log_events;
  const auto records = run_replicates(reps, ctx.workers, [&](std::size_t r) {
    return simulate(spec, n, mu0, horizon, times,
                    derive_seed(ctx.config.seed, static_cast<std::uint64_t>(n), r), opt);
  });
  std::uint64_t events = 0;
  double visited_bound = 0.0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    events += records[r].event_count;
    visited_bound = std::max(visited_bound, records[r].kernel_bound_visited);
    const std::string suffix = reps == 1 ? "" : "_" + std::to_string(r);
    std::string csv = measure_header(spec.size(), "time");
    for (std::size_t j = 0; j < times.size(); ++j) csv += measure_row(times[j], records[r].measures[j].weights());
    write_csv(ctx, "trajectory" + suffix + ".csv", csv);
    if (log_events) {
      std::string ev = "time,from,to\n";
      for (const auto& e : records[r].events)
        ev += format_double(e.time) + "," + std::to_string(e.from + 1) + "," + std::to_string(e.to + 1) + "\n";
      write_csv(ctx, "events" + suffix + ".csv", ev);
    }
  }
  ctx.results = {{"N", n}, {"horizon", horizon}, {"replicates", reps}, {"events", events},
                 {"kernel_bound_visited", visited_bound},
                 {"m_T", vector_json(records.front().measures.back().weights())}};
}

void run_flow(Context& ctx) {
  const auto& spec = ctx.config.model.spec;
  const YAML::Node t = ctx.config.task_node;
  const double horizon = task_double(t, "horizon", 5.0);
  const auto points = static_cast<std::size_t>(task_double(t, "points", 101));
  const Measure mu0 = parse_measure(t["mu0"], spec.size());
  const auto times = grid(horizon, points);
  std::string method = t["method"] ? t["method"].as<std::string>()
                                   : (spec.selection.is_additive() ? "both" : "ode");
  std::optional<FlowTrajectory> semi, ode;
  if (method == "semigroup" || method == "both") semi = normalized_flow(spec, mu0, times);
  if (method == "ode" || method == "both") {
    OdeOptions opt;
    opt.tolerances = ctx.config.tolerances;
    ode = mean_field_ode(spec, mu0, times, opt);
  }
  if (!semi && !ode) throw ConfigError("task.method: expected semigroup, ode or both");
  auto dump = [&](const FlowTrajectory& f) {
    std::string csv = measure_header(spec.size(), "time");
    for (std::size_t j = 0; j < f.times.size(); ++j) csv += measure_row(f.times[j], f.measures[j].weights());
    return csv;
  };
  if (semi) write_csv(ctx, "flow.csv", dump(*semi));
  if (ode) {
    write_csv(ctx, semi ? "flow_ode.csv" : "flow.csv", dump(*ode));
    ctx.results["ode"] = {{"step", ode->step}, {"cumulative_mass_drift", ode->cumulative_mass_drift},
                          {"clipped_entries", ode->clipped_entries},
                          {"excess_drift_steps", ode->excess_drift_steps},
                          {"error_estimate", ode->error_estimate}};
  }
  if (semi && ode) {
    double gap = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j)
      gap = std::max(gap, tv_distance(semi->measures[j], ode->measures[j]));
    ctx.results["sup_tv_semigroup_vs_ode"] = gap;
  }
  const auto& last = semi ? semi->measures.back() : ode->measures.back();
  ctx.results["mu_T"] = vector_json(last.weights());
  ctx.results["horizon"] = horizon;
}

void run_eigen(Context& ctx) {
  const auto& spec = ctx.config.model.spec;
  const EigenTriplet trip = eigen_triplet(spec, ctx.config.tolerances);
  const RateMatrix qh = doob_transform(spec, trip);
  const ErgodicityDiagnostic ergo = ergodicity_check(spec);
  json doc = {{"lambda", trip.lambda}, {"mu_inf", vector_json(trip.mu_inf.weights())},
              {"h", vector_json(trip.h.values())}, {"spectral_gap", trip.spectral_gap},
              {"left_residual", trip.left_residual}, {"right_residual", trip.right_residual},
              {"power_lambda", trip.power_lambda}, {"doob_row_sum_error", qh.max_row_sum_error()},
              {"normalised_decay_rate", ergo.normalised_rate},
              {"unnormalised_decay_rate", ergo.unnormalised_rate},
              {"config_hash", ctx.config.hash}, {"seed", ctx.config.seed}};
  write_text(ctx, "triplet.json", doc.dump(2) + "\n");
  ctx.results = doc;
  if (trip.left_residual > ctx.config.tolerances.eigen || trip.right_residual > ctx.config.tolerances.eigen)
    ctx.status = kNumerical;
}

json variance_json(const VarianceReport& r) {
  return {{"sigma2", r.sigma2}, {"var_term", r.decomposition.var_term},
          {"symmetric_integral", r.decomposition.symmetric_integral},
          {"selection_integral", r.decomposition.selection_integral},
          {"quadrature_error_estimate", r.quadrature_error_estimate}, {"horizon", r.horizon},
          {"intervals", r.intervals}, {"tail_bound", r.tail_bound},
          {"fitted_rate", r.fitted_rate}, {"degenerate", r.degenerate}};
}

void run_variance(Context& ctx) {
  const auto& spec = ctx.config.model.spec;
  const YAML::Node t = ctx.config.task_node;
  if (!t["phi"]) throw ConfigError("missing required key 'task.phi'");
  const auto phis = parse_functions(t["phi"], spec.size());
  const Measure mu0 = parse_measure(t["mu0"], spec.size());
  double horizon = 4.0;
  if (t["horizon"]) {
    const std::string h = t["horizon"].as<std::string>();
    horizon = (h == "inf" || h == ".inf") ? std::numeric_limits<double>::infinity() : task_double(t, "horizon", 4.0);
  }
  const bool compare = t["compare"] && t["compare"].as<bool>();
  json doc = {{"config_hash", ctx.config.hash}, {"seed", ctx.config.seed}};
  for (const auto& f : phis) {
    json entry;
    if (compare) {
      const VarianceComparison c = variance_compare(spec, mu0, f.phi, horizon);
      entry = {{"original", variance_json(c.original)}, {"reduced", variance_json(c.reduced)},
               {"reduction", c.reduction}, {"flow_gap", c.flow_gap}};
    } else {
      entry = std::isinf(horizon) ? variance_json(sigma2_inf(spec, f.phi))
                                  : variance_json(sigma2_T(spec, mu0, horizon, f.phi));
    }
    doc[f.name] = entry;
  }
  write_text(ctx, "variance.json", doc.dump(2) + "\n");
  ctx.results = doc;
}

void run_experiment_task(Context& ctx) {
  ExperimentPlan plan = parse_plan(ctx.config);
  plan.workers = ctx.workers;
  const ExperimentReport rep = run_experiment(plan);
  write_text(ctx, "report.json", rep.to_json().dump(2) + "\n");
  write_csv(ctx, "errors.csv", rep.errors_csv());
  std::string slopes = "label,slope,slope_se,intercept,degenerate\n";
  for (const auto& s : rep.slopes)
    slopes += s.label + "," + format_double(s.slope) + "," + format_double(s.slope_se) + "," +
              format_double(s.intercept) + "," + (s.degenerate ? "1" : "0") + "\n";
  write_csv(ctx, "slopes.csv", slopes);
  json checks = json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"value", c.value}, {"applied", c.applied}, {"passed", c.passed}});
  ctx.results = {{"experiment", rep.experiment}, {"passed", rep.passed()}, {"checks", checks}};
  if (!rep.passed()) ctx.status = kAcceptance;
}

void expect_verdict(Context& ctx, const std::string& got) {
  const YAML::Node e = ctx.config.task_node["expect"];
  if (!e) return;
  const std::string want = e.as<std::string>();
  ctx.results["expected"] = want;
  if (want != got) ctx.status = kAcceptance;
}

void run_zoo_check(Context& ctx) {
  const auto& model = ctx.config.model;
  const YAML::Node t = ctx.config.task_node;
  const std::string name = ctx.config.task_arg;
  if (name == "series") {
    if (!model.bd) throw ConfigError("zoo-check:series needs model.builder: birth_death");
    const auto k_terms = static_cast<std::size_t>(task_double(t, "K_terms", 1000));
    const SeriesCheck a = bd_qsd_uniqueness_check(*model.bd, k_terms);
    const SeriesCheck b = bd_qsd_uniqueness_check(*model.bd, 2 * k_terms);
    std::string csv = "k,term,partial_sum\n";
    for (std::size_t i = 0; i < a.terms.size(); ++i)
      csv += std::to_string(i + 2) + "," + format_double(a.terms[i]) + "," + format_double(a.partial_sums[i]) + "\n";
    write_csv(ctx, "series.csv", csv);
    ctx.results = {{"K_terms", k_terms}, {"verdict", to_string(a.verdict)},
                   {"verdict_doubled", to_string(b.verdict)}, {"power_exponent", a.power_exponent},
                   {"tail_ratio_min", a.tail_ratio_min}, {"tail_ratio_max", a.tail_ratio_max},
                   {"partial_sum", a.partial_sums.back()}, {"stable", a.verdict == b.verdict}};
    if (a.verdict != b.verdict) ctx.status = kAcceptance;
    expect_verdict(ctx, to_string(a.verdict));
  } else if (name == "rate") {
    if (!t["K"] || !t["K"].IsSequence()) throw ConfigError("missing required key 'task.K' (list of labels)");
    std::vector<std::size_t> subset;
    for (const auto& k : t["K"]) subset.push_back(k.as<std::size_t>() - 1);
    const RateCriterion r = rate_criterion_check(model.spec, subset);
    ctx.results = {{"lhs", r.lhs}, {"rhs", r.rhs}, {"holds", r.holds}};
    expect_verdict(ctx, r.holds ? "holds" : "fails");
  } else if (name == "spectral") {
    const double eps = task_double(t, "eps", 0.1);
    SpectralCriterion s;
    if (model.bd || model.counterexample) {
      const auto doublings = static_cast<int>(task_double(t, "doublings", 2));
      const std::size_t K = model.spec.size();
      std::function<std::optional<AnalyticEigen>(std::size_t)> analytic;
      if (model.counterexample) {
        const auto c = *model.counterexample;
        analytic = [c](std::size_t k) -> std::optional<AnalyticEigen> {
          return counterexample_bd(c.b, c.d, c.mode, k, c.b1).eigen;
        };
      }
      s = spectral_criterion_doubling([&](std::size_t k) { return rebuild_with_size(model, k); },
                                      analytic, K, eps, doublings);
    } else {
      s = spectral_criterion_check(model.spec, eps);
    }
    json d = json::array();
    for (const auto& x : s.doubling) d.push_back({{"K", x.K}, {"k_eps_size", x.k_eps_size}, {"h_inv_norm", x.h_inv_norm}});
    std::vector<std::size_t> labels;
    for (auto x : s.k_eps) labels.push_back(x + 1);
    ctx.results = {{"K_eps", labels}, {"h_inv_norm", s.h_inv_norm}, {"holds", s.holds},
                   {"doubling", d}, {"note", s.note}};
    expect_verdict(ctx, s.holds ? "holds" : "fails");
  } else if (name == "counterexample") {
    if (!model.counterexample) throw ConfigError("zoo-check:counterexample needs model.builder: counterexample");
    const auto& c = *model.counterexample;
    const Vector r = c.residuals();
    std::string csv = "n,residual\n";
    double interior = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      csv += std::to_string(i + 1) + "," + format_double(r[i]) + "\n";
      if (i >= 1 && i + 1 < r.size()) interior = std::max(interior, std::abs(r[i]));
    }
    write_csv(ctx, "residuals.csv", csv);
    const double gap = std::abs(r[0] - c.row1_closed_form());
    ctx.results = {{"b1_mode", to_string(c.mode)}, {"lambda", c.eigen.lambda}, {"d1", c.d1},
                   {"b1", c.b1}, {"interior_max_residual", interior}, {"row1_residual", r[0]},
                   {"row1_closed_form", c.row1_closed_form()}, {"row1_gap", gap}};
    if (interior > 1e-12 || gap > 1e-12) ctx.status = kAcceptance;
  } else {
    throw ConfigError("unknown zoo-check '" + name + "' (expected series, rate, spectral, counterexample)");
  }
}

void print_summary(const json& summary) {
  std::cout << "task      " << summary["task"].get<std::string>() << "\n"
            << "model     " << summary["model"].get<std::string>() << "\n"
            << "status    " << summary["status"].get<std::string>() << " (exit "
            << summary["exit_code"].get<int>() << ")\n";
  if (summary.contains("validation"))
    for (const auto& v : summary["validation"]["violations"])
      std::cout << "violation " << v.get<std::string>() << "\n";
  if (summary.contains("error")) std::cout << "error     " << summary["error"].get<std::string>() << "\n";
  if (summary.contains("results"))
    for (const auto& [k, v] : summary["results"].items()) {
      std::string s = v.dump();
      if (s.size() > 60) s = s.substr(0, 57) + "...";
      std::cout << std::left << std::setw(26) << k << s << "\n";
    }
}

const char* status_name(int code) {
  switch (code) {
    case kOk: return "ok";
    case kConfig: return "config-error";
    case kValidation: return "validation-failure";
    case kAcceptance: return "acceptance-failure";
    default: return "numerical-failure";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moran / Fleming-Viot particle toolkit"};
  std::string config_path, out_dir, profile;
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "run config (YAML)")->required();
  app.add_option("--workers", workers, "worker threads for replicates")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--tolerance-profile", profile, "strict or default")
      ->check(CLI::IsMember({"strict", "default"}));
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.workers = workers;
  json summary = {{"task", ""}, {"model", ""}};
  int code = kOk;
  try {
    ctx.config = load_config(config_path);
    if (seed) ctx.config.seed = *seed;
    if (!profile.empty()) {
      ctx.config.tolerance_profile = profile;
      ctx.config.tolerances = profile == "strict" ? Tolerances::strict() : Tolerances::defaults();
    }
    ctx.out = out_dir.empty() ? fs::path(ctx.config.output_dir) : fs::path(out_dir);
    fs::create_directories(ctx.out);
    summary["task"] = ctx.config.task + (ctx.config.task_arg.empty() ? "" : ":" + ctx.config.task_arg);
    summary["model"] = ctx.config.model.spec.name;

    ValidationOptions vopt;
    vopt.tolerances = ctx.config.tolerances;
    const ValidationReport vrep = validate_model(ctx.config.model.spec, vopt);
    summary["validation"] = validation_json(vrep);
    if (!vrep.admissible()) {
      code = kValidation;
    } else {
      const std::string& task = ctx.config.task;
      if (task == "simulate") run_simulate(ctx);
      else if (task == "flow") run_flow(ctx);
      else if (task == "eigen") run_eigen(ctx);
      else if (task == "variance") run_variance(ctx);
      else if (task == "experiment") run_experiment_task(ctx);
      else if (task == "zoo-check") run_zoo_check(ctx);
      code = ctx.status;
      summary["results"] = ctx.results;
    }
  } catch (const ConfigError& e) {
    code = kConfig;
    summary["error"] = e.what();
  } catch (const ExpressionError& e) {
    code = kConfig;
    summary["error"] = e.what();
  } catch (const YAML::Exception& e) {
    code = kConfig;
    summary["error"] = std::string("config: ") + e.what();
  } catch (const InvalidArgument& e) {
    code = kConfig;
    summary["error"] = e.what();
  } catch (const SizeMismatch& e) {
    code = kConfig;
    summary["error"] = e.what();
  } catch (const NotAdditive& e) {
    code = kConfig;
    summary["error"] = std::string(e.what()) + " (this task needs an additive kernel)";
  } catch (const MuDependentLambda& e) {
    code = kValidation;
    summary["error"] = e.what();
  } catch (const Error& e) {
    code = kNumerical;
    summary["error"] = e.what();
  } catch (const std::exception& e) {
    code = kNumerical;
    summary["error"] = e.what();
  }
  summary["exit_code"] = code;
  summary["status"] = status_name(code);
  summary["provenance"] = {{"config_hash", ctx.config.hash}, {"seed", ctx.config.seed},
                           {"code_version", code_version()}};
  if (!ctx.out.empty()) {
    std::ofstream f(ctx.out / "summary.json");
    if (f) f << summary.dump(2) << "\n";
  }
  print_summary(summary);
  if (code == kConfig) std::cerr << "error: " << summary["error"].get<std::string>() << "\n";
  return code;
}

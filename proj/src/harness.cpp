#include "moran/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <sstream>

#include "moran/linalg.hpp"
#include "moran/particle.hpp"
#include "moran/rng.hpp"
#include "moran/solvers.hpp"
#include "moran/stats.hpp"
#include "moran/variance.hpp"

namespace moran {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::PocRate: return "poc_rate";
    case ExperimentKind::UniformInTime: return "uniform_in_time";
    case ExperimentKind::Clt: return "clt_check";
    case ExperimentKind::Bias: return "bias_check";
    case ExperimentKind::ReductionCompare: break;
  }
  return "reduction_compare";
}

ExperimentKind experiment_from_string(const std::string& name) {
  if (name == "poc_rate") return ExperimentKind::PocRate;
  if (name == "uniform_in_time") return ExperimentKind::UniformInTime;
  if (name == "clt_check" || name == "clt") return ExperimentKind::Clt;
  if (name == "bias_check" || name == "bias") return ExperimentKind::Bias;
  if (name == "reduction_compare") return ExperimentKind::ReductionCompare;
  throw InvalidArgument("unknown experiment '" + name +
                        "' (expected poc_rate, uniform_in_time, clt_check, bias_check, "
                        "reduction_compare)");
}

void ExperimentPlan::validate() const {
  if (n_grid.empty()) throw InvalidArgument("plan: N grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw InvalidArgument("plan: N values must be >= 1");
    if (i > 0 && n_grid[i] <= n_grid[i - 1])
      throw InvalidArgument("plan: N grid must be sorted ascending without repeats");
  }
  if (replicates < 2) throw InvalidArgument("plan: replicate count M must be >= 2");
  if (!(horizon >= 0.0) || !std::isfinite(horizon))
    throw InvalidArgument("plan: horizon must be finite and >= 0");
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < 0.0 || sample_times[i] > horizon)
      throw InvalidArgument("plan: sample times must lie within [0, horizon]");
    if (i > 0 && sample_times[i] < sample_times[i - 1])
      throw InvalidArgument("plan: sample times must be sorted");
  }
  if (functions.empty()) throw InvalidArgument("plan: no test functions");
  for (const auto& f : functions)
    if (f.phi.size() != model.size())
      throw SizeMismatch("plan: test function '" + f.name + "' has the wrong size");
  if (mu0.size() != model.size()) throw SizeMismatch("plan: mu0 has the wrong size");
  if (!mu0.is_probability(1e-9)) throw InvalidArgument("plan: mu0 is not a probability");
  for (double p : p_norms)
    if (!(p >= 1.0)) throw InvalidArgument("plan: p-norms must be >= 1");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw InvalidArgument("plan: ci_level in (0, 1)");
  if (bootstrap_resamples < 10) throw InvalidArgument("plan: need >= 10 bootstrap resamples");
}

bool ExperimentReport::passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckRow& c) { return !c.applied || c.passed; });
}

std::string code_version() { return "0.1.0"; }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

nlohmann::json ExperimentReport::to_json(bool with_timestamp) const {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["model"] = model;
  j["passed"] = passed();
  j["provenance"] = {{"seed", provenance.seed},
                     {"config_hash", provenance.config_hash},
                     {"code_version", provenance.code_version}};
  if (with_timestamp) j["provenance"]["timestamp"] = provenance.timestamp;
  auto& rows_j = j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"N", r.n}, {"t", r.t}, {"phi", r.phi}, {"p", r.p},
                      {"estimate", r.estimate}, {"ci_lo", r.ci_lo}, {"ci_hi", r.ci_hi}});
  auto& slopes_j = j["slopes"] = nlohmann::json::array();
  for (const auto& s : slopes)
    slopes_j.push_back({{"label", s.label}, {"slope", s.slope}, {"slope_se", s.slope_se},
                        {"intercept", s.intercept}, {"degenerate", s.degenerate}});
  auto& checks_j = j["checks"] = nlohmann::json::array();
  for (const auto& c : checks)
    checks_j.push_back({{"name", c.name}, {"value", c.value}, {"lo", c.lo}, {"hi", c.hi},
                        {"applied", c.applied}, {"passed", c.passed}, {"detail", c.detail}});
  j["details"] = details;
  return j;
}

std::string ExperimentReport::errors_csv() const {
  std::ostringstream os;
  os << "N,t,phi,p,estimate,ci_lo,ci_hi\n";
  for (const auto& r : rows)
    os << r.n << ',' << format_double(r.t) << ',' << r.phi << ',' << format_double(r.p) << ','
       << format_double(r.estimate) << ',' << format_double(r.ci_lo) << ','
       << format_double(r.ci_hi) << '\n';
  return os.str();
}

namespace {

constexpr std::uint64_t kBootstrapRun = 0xb0075742ULL;
// Errors at or below this are rounding noise (e.g. a constant test function).
constexpr double kZeroError = 1e-12;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ExperimentReport start_report(const ExperimentPlan& plan) {
  ExperimentReport rep;
  rep.experiment = to_string(plan.kind);
  rep.model = plan.model.name;
  rep.provenance = {plan.seed, plan.config_hash, code_version(), utc_timestamp()};
  return rep;
}

using Sample = std::vector<Vector>;  // empirical weights at each sample time

std::vector<Sample> run_mc(const ModelSpec& spec, std::int64_t n, const Measure& mu0,
                           double horizon, const std::vector<double>& times,
                           std::uint64_t seed, std::size_t replicates, std::size_t workers) {
  return run_replicates(replicates, workers, [&](std::size_t r) {
    const auto rec = simulate(spec, n, mu0, horizon, times,
                              derive_seed(seed, static_cast<std::uint64_t>(n), r));
    Sample s;
    s.reserve(rec.measures.size());
    for (const auto& m : rec.measures) s.push_back(m.weights());
    return s;
  });
}

double lp_norm(const std::vector<double>& abs_err, double p) {
  double s = 0.0;
  for (double e : abs_err) s += std::pow(e, p);
  return std::pow(s / static_cast<double>(abs_err.size()), 1.0 / p);
}

// Percentile interval widened, if needed, to contain the point estimate.
stats::Interval contain(stats::Interval ci, double estimate) {
  ci.lo = std::min(ci.lo, estimate);
  ci.hi = std::max(ci.hi, estimate);
  return ci;
}

ErrorRow lp_row(const ExperimentPlan& plan, std::int64_t n, double t, const std::string& phi,
                double p, const std::vector<double>& abs_err, std::uint64_t row_index) {
  ErrorRow row{n, t, phi, p, lp_norm(abs_err, p), 0.0, 0.0};
  const auto ci = contain(
      stats::bootstrap_ci(abs_err, [p](const std::vector<double>& s) { return lp_norm(s, p); },
                          plan.bootstrap_resamples, plan.ci_level,
                          derive_seed(plan.seed, kBootstrapRun, row_index)),
      row.estimate);
  row.ci_lo = ci.lo;
  row.ci_hi = ci.hi;
  return row;
}

SlopeRow loglog_slope(const std::string& label, const std::vector<std::int64_t>& ns,
                      const std::vector<double>& values) {
  SlopeRow s;
  s.label = label;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!(values[i] > kZeroError)) {
      s.degenerate = true;
      return s;
    }
    x.push_back(std::log(static_cast<double>(ns[i])));
    y.push_back(std::log(values[i]));
  }
  if (x.size() < 2) {
    s.degenerate = true;
    return s;
  }
  const auto fit = stats::ols(x, y);
  s.slope = fit.slope;
  s.slope_se = fit.slope_se;
  s.intercept = fit.intercept;
  return s;
}

std::string slope_detail(const SlopeRow& s) {
  std::ostringstream os;
  os << "slope " << s.slope << " +- " << s.slope_se;
  return os.str();
}

double first_p(const ExperimentPlan& plan, double wanted) {
  for (double p : plan.p_norms)
    if (p == wanted) return p;
  return plan.p_norms.empty() ? 2.0 : plan.p_norms.front();
}

std::string tag(std::int64_t n, const std::string& phi) {
  return "N=" + std::to_string(n) + ",phi=" + phi;
}

}  // namespace

ExperimentReport poc_rate(const ExperimentPlan& plan) {
  plan.validate();
  ExperimentReport rep = start_report(plan);
  std::vector<double> times = plan.sample_times;
  if (times.empty())
    for (int i = 1; i <= 20; ++i) times.push_back(plan.horizon * i / 20.0);
  const FlowTrajectory flow = normalized_flow(plan.model, plan.mu0, times);
  if (plan.p_norms.empty()) throw InvalidArgument("poc_rate: no p-norms");

  // estimates[phi][p][N]
  std::vector<std::vector<std::vector<double>>> est(
      plan.functions.size(), std::vector<std::vector<double>>(plan.p_norms.size()));
  std::uint64_t row_index = 0;
  for (std::int64_t n : plan.n_grid) {
    const auto mc = run_mc(plan.model, n, plan.mu0, plan.horizon, times, plan.seed,
                           plan.replicates, plan.workers);
    for (std::size_t f = 0; f < plan.functions.size(); ++f) {
      const Vector& phi = plan.functions[f].phi.values();
      std::vector<double> sup_err(mc.size(), 0.0);
      for (std::size_t r = 0; r < mc.size(); ++r)
        for (std::size_t j = 0; j < times.size(); ++j)
          sup_err[r] = std::max(sup_err[r],
                                std::abs(mc[r][j].dot(phi) - flow.measures[j].integrate(phi)));
      for (std::size_t k = 0; k < plan.p_norms.size(); ++k) {
        rep.rows.push_back(lp_row(plan, n, plan.horizon, plan.functions[f].name,
                                  plan.p_norms[k], sup_err, row_index++));
        est[f][k].push_back(rep.rows.back().estimate);
      }
    }
  }
  for (std::size_t f = 0; f < plan.functions.size(); ++f)
    for (std::size_t k = 0; k < plan.p_norms.size(); ++k)
      rep.slopes.push_back(loglog_slope(
          "phi=" + plan.functions[f].name + ",p=" + format_double(plan.p_norms[k]),
          plan.n_grid, est[f][k]));

  if (plan.acceptance.slope) {
    const double p = first_p(plan, plan.acceptance.slope_p.value_or(2.0));
    const std::size_t k = static_cast<std::size_t>(
        std::find(plan.p_norms.begin(), plan.p_norms.end(), p) - plan.p_norms.begin());
    const SlopeRow& s = rep.slopes[k];
    CheckRow c{"poc_slope[phi=" + plan.functions[0].name + ",p=" + format_double(p) + "]",
               s.slope, plan.acceptance.slope->first, plan.acceptance.slope->second,
               !s.degenerate, true, s.degenerate ? "degenerate (all errors zero)" : slope_detail(s)};
    c.passed = !c.applied || (s.slope >= c.lo && s.slope <= c.hi);
    rep.checks.push_back(c);
  }
  rep.details["sample_points"] = times.size();
  rep.details["sup_note"] = "sup over [0,T] approximated by the max over the sample grid; t column holds T";
  return rep;
}

ExperimentReport uniform_in_time(const ExperimentPlan& plan) {
  ExperimentPlan p = plan;
  bool c2 = false;
  double relaxation = 1.0;
  try {
    const ErgodicityDiagnostic ergo = ergodicity_check(plan.model);
    const EigenTriplet trip = eigen_triplet(plan.model);
    c2 = ergo.confirmed;
    relaxation = 1.0 / trip.spectral_gap;
  } catch (const NotAdditive&) {
    c2 = false;
  } catch (const Error&) {
    c2 = false;
  }
  if (p.sample_times.empty()) {
    for (double m : {1.0, 5.0, 10.0, 20.0}) p.sample_times.push_back(m * relaxation);
  }
  p.horizon = std::max(p.horizon, p.sample_times.back());
  p.validate();
  ExperimentReport rep = start_report(p);
  rep.details["c2_confirmed"] = c2;
  rep.details["relaxation_time"] = relaxation;

  std::vector<Measure> limit;
  try {
    limit = normalized_flow(p.model, p.mu0, p.sample_times).measures;
  } catch (const NotAdditive&) {
    limit = mean_field_ode(p.model, p.mu0, p.sample_times).measures;
  }
  const double pp = first_p(p, 2.0);
  std::uint64_t row_index = 0;
  for (std::int64_t n : p.n_grid) {
    const auto mc = run_mc(p.model, n, p.mu0, p.horizon, p.sample_times, p.seed, p.replicates,
                           p.workers);
    for (std::size_t f = 0; f < p.functions.size(); ++f) {
      const Vector& phi = p.functions[f].phi.values();
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (std::size_t j = 0; j < p.sample_times.size(); ++j) {
        std::vector<double> err(mc.size());
        for (std::size_t r = 0; r < mc.size(); ++r)
          err[r] = std::abs(mc[r][j].dot(phi) - limit[j].integrate(phi));
        for (double pn : p.p_norms) {
          rep.rows.push_back(lp_row(p, n, p.sample_times[j], p.functions[f].name, pn, err,
                                    row_index++));
          if (pn == pp) {
            lo = std::min(lo, rep.rows.back().estimate);
            hi = std::max(hi, rep.rows.back().estimate);
          }
        }
      }
      const double ratio = lo > kZeroError ? hi / lo : std::numeric_limits<double>::quiet_NaN();
      CheckRow c{"time_ratio[" + tag(n, p.functions[f].name) + "]", ratio, 1.0,
                 p.acceptance.max_time_ratio.value_or(2.0), false, true, ""};
      if (!(lo > kZeroError)) {
        c.detail = "degenerate (zero error)";
      } else if (!c2) {
        c.detail = "exponential ergodicity not confirmed: reported without assertion";
      } else if (p.acceptance.max_time_ratio) {
        c.applied = true;
        c.passed = ratio <= c.hi;
        c.detail = "max/min L^" + format_double(pp) + " error across sample times";
      } else {
        c.detail = "no bound configured";
      }
      rep.checks.push_back(c);
    }
  }
  return rep;
}

ExperimentReport clt_check(const ExperimentPlan& plan) {
  ExperimentPlan p = plan;
  p.sample_times = {p.horizon};
  p.validate();
  ExperimentReport rep = start_report(p);
  const Measure mu_t = normalized_flow(p.model, p.mu0, {p.horizon}).measures.back();
  std::uint64_t row_index = 0;
  rep.details["cases"] = nlohmann::json::array();
  for (const auto& f : p.functions) {
    const VarianceReport sig = sigma2_T(p.model, p.mu0, p.horizon, f.phi);
    const double target = mu_t.integrate(f.phi);
    for (std::int64_t n : p.n_grid) {
      nlohmann::json cj = {{"N", n}, {"phi", f.name}, {"sigma2_T", sig.sigma2},
                           {"var_term", sig.decomposition.var_term},
                           {"symmetric_integral", sig.decomposition.symmetric_integral},
                           {"selection_integral", sig.decomposition.selection_integral},
                           {"quadrature_error_estimate", sig.quadrature_error_estimate}};
      if (sig.degenerate || !(sig.sigma2 > 1e-15)) {
        cj["degenerate"] = true;
        rep.details["cases"].push_back(cj);
        rep.checks.push_back({"clt_degenerate[" + tag(n, f.name) + "]", 0.0, 0.0, 0.0, false, true,
                              "zero limiting variance: no test run"});
        continue;
      }
      const auto mc = run_mc(p.model, n, p.mu0, p.horizon, p.sample_times, p.seed, p.replicates,
                             p.workers);
      const double root_n = std::sqrt(static_cast<double>(n));
      std::vector<double> z(mc.size()), err(mc.size());
      for (std::size_t r = 0; r < mc.size(); ++r) {
        const double d = mc[r][0].dot(f.phi.values()) - target;
        z[r] = root_n * d;
        err[r] = std::abs(d);
      }
      rep.rows.push_back(lp_row(p, n, p.horizon, f.name, 2.0, err, row_index++));
      const double var = stats::variance(z);
      const auto vci = contain(stats::bootstrap_ci(z, stats::variance, p.bootstrap_resamples,
                                                   p.ci_level,
                                                   derive_seed(p.seed, kBootstrapRun, row_index++)),
                               var);
      const double ratio = var / sig.sigma2;
      const double ks = stats::ks_distance_normal(z, 0.0, std::sqrt(sig.sigma2));
      cj["sample_variance"] = var;
      cj["variance_ci"] = {vci.lo, vci.hi};
      cj["variance_ratio"] = ratio;
      cj["ks_distance"] = ks;
      cj["skewness"] = stats::skewness(z);
      cj["excess_kurtosis"] = stats::excess_kurtosis(z);
      rep.details["cases"].push_back(cj);

      std::ostringstream d1;
      d1 << "sample variance " << var << " vs sigma2_T " << sig.sigma2 << ", ratio CI ["
         << vci.lo / sig.sigma2 << ", " << vci.hi / sig.sigma2 << "]";
      CheckRow rc{"variance_ratio[" + tag(n, f.name) + "]", ratio,
                  p.acceptance.variance_ratio ? p.acceptance.variance_ratio->first : 0.0,
                  p.acceptance.variance_ratio ? p.acceptance.variance_ratio->second : 0.0,
                  p.acceptance.variance_ratio.has_value(), true, d1.str()};
      rc.passed = !rc.applied || (ratio >= rc.lo && ratio <= rc.hi);
      rep.checks.push_back(rc);
      CheckRow kc{"ks_distance[" + tag(n, f.name) + "]", ks, 0.0,
                  p.acceptance.ks_max.value_or(0.0), p.acceptance.ks_max.has_value(), true,
                  "sup |F_M - Phi(./sigma)|"};
      kc.passed = !kc.applied || ks <= kc.hi;
      rep.checks.push_back(kc);
    }
  }
  return rep;
}

ExperimentReport bias_check(const ExperimentPlan& plan) {
  ExperimentPlan p = plan;
  p.sample_times = {p.horizon};
  p.validate();
  ExperimentReport rep = start_report(p);
  const Measure mu_t = normalized_flow(p.model, p.mu0, {p.horizon}).measures.back();
  const Vector& target = mu_t.weights();
  std::vector<double> tvs, exact_tvs;
  bool exact_all = true;
  bool bias_below = true;
  rep.details["cases"] = nlohmann::json::array();
  std::uint64_t row_index = 0;
  for (std::int64_t n : p.n_grid) {
    const auto mc = run_mc(p.model, n, p.mu0, p.horizon, p.sample_times, p.seed, p.replicates,
                           p.workers);
    const std::size_t m = mc.size();
    Vector mean = Vector::Zero(target.size());
    for (const auto& s : mc) mean += s[0];
    mean /= static_cast<double>(m);
    const double tv = 0.5 * (mean - target).cwiseAbs().sum();
    double mean_tv = 0.0;
    Vector second = Vector::Zero(target.size());
    for (const auto& s : mc) {
      mean_tv += 0.5 * (s[0] - target).cwiseAbs().sum();
      second += (s[0] - mean).cwiseAbs2();
    }
    mean_tv /= static_cast<double>(m);
    const double noise = 0.5 * (second / static_cast<double>(m - 1)).cwiseSqrt().sum() /
                         std::sqrt(static_cast<double>(m));

    // Bootstrap over replicate indices.
    Rng rng(derive_seed(p.seed, kBootstrapRun, row_index));
    std::vector<double> draws;
    for (std::size_t b = 0; b < p.bootstrap_resamples; ++b) {
      Vector acc = Vector::Zero(target.size());
      for (std::size_t i = 0; i < m; ++i) acc += mc[rng.below(m)][0];
      draws.push_back(0.5 * (acc / static_cast<double>(m) - target).cwiseAbs().sum());
    }
    std::sort(draws.begin(), draws.end());
    const double alpha = 0.5 * (1.0 - p.ci_level);
    stats::Interval ci{draws[static_cast<std::size_t>(alpha * (draws.size() - 1))],
                       draws[static_cast<std::size_t>((1.0 - alpha) * (draws.size() - 1))]};
    ci = contain(ci, tv);
    rep.rows.push_back({n, p.horizon, "tv", 1.0, tv, ci.lo, ci.hi});
    ++row_index;
    tvs.push_back(tv);
    if (!(tv < mean_tv)) bias_below = false;

    nlohmann::json cj = {{"N", n}, {"tv_bias", tv}, {"mean_tv_error", mean_tv},
                         {"monte_carlo_noise", noise}};
    if (simplex_size(p.model.size(), n) <= 600) {
      const SimplexGenerator gen = master_generator(p.model, n, 600);
      const Eigen::RowVectorXd law =
          multinomial_law(gen, p.mu0).transpose() * linalg::expm(p.horizon * gen.generator.entries());
      Vector exact_mean = Vector::Zero(target.size());
      for (std::size_t i = 0; i < gen.states.size(); ++i)
        exact_mean += law[static_cast<Eigen::Index>(i)] * gen.states[i].empirical().weights();
      const double exact_tv = 0.5 * (exact_mean - target).cwiseAbs().sum();
      cj["exact_tv_bias"] = exact_tv;
      exact_tvs.push_back(exact_tv);
    } else {
      exact_all = false;
    }
    rep.details["cases"].push_back(cj);
  }
  rep.slopes.push_back(loglog_slope("tv_bias", p.n_grid, tvs));
  if (exact_all && !exact_tvs.empty())
    rep.slopes.push_back(loglog_slope("exact_tv_bias", p.n_grid, exact_tvs));
  if (p.acceptance.slope) {
    const SlopeRow& s = rep.slopes.front();
    CheckRow c{"bias_slope", s.slope, p.acceptance.slope->first, p.acceptance.slope->second,
               !s.degenerate, true, s.degenerate ? "degenerate (zero bias)" : slope_detail(s)};
    c.passed = !c.applied || (s.slope >= c.lo && s.slope <= c.hi);
    rep.checks.push_back(c);
    rep.checks.push_back({"bias_below_mean_error", bias_below ? 1.0 : 0.0, 1.0, 1.0, true,
                          bias_below, "TV(mean m, mu_t) < E TV(m, mu_t) at every N"});
  }
  return rep;
}

ExperimentReport reduction_compare(const ExperimentPlan& plan) {
  ExperimentPlan p = plan;
  p.sample_times = {p.horizon};
  p.validate();
  ExperimentReport rep = start_report(p);
  const ModelSpec reduced = sigma_reduce(p.model);
  const Measure mu_t = normalized_flow(p.model, p.mu0, {p.horizon}).measures.back();
  rep.details["cases"] = nlohmann::json::array();
  std::uint64_t row_index = 0;
  for (const auto& f : p.functions) {
    const VarianceComparison cmp = variance_compare(p.model, p.mu0, f.phi, p.horizon);
    rep.checks.push_back({"flow_gate[phi=" + f.name + "]", cmp.flow_gap, 0.0, 1e-8, true,
                          cmp.flow_gap <= 1e-8, "sup-TV between mean-field flows"});
    const double diff_q = cmp.reduced.sigma2 - cmp.original.sigma2;
    rep.checks.push_back({"quadrature_ordering[phi=" + f.name + "]", diff_q, -1e300, 1e-10, true,
                          diff_q <= 1e-10,
                          "sigma2(reduced) - sigma2(original); strict: " +
                              std::string(diff_q < -1e-10 ? "yes" : "no")});
    const double target = mu_t.integrate(f.phi);
    for (std::int64_t n : p.n_grid) {
      const auto mc_o = run_mc(p.model, n, p.mu0, p.horizon, p.sample_times, p.seed,
                               p.replicates, p.workers);
      const auto mc_r = run_mc(reduced, n, p.mu0, p.horizon, p.sample_times, p.seed,
                               p.replicates, p.workers);
      const double root_n = std::sqrt(static_cast<double>(n));
      const std::size_t m = mc_o.size();
      std::vector<double> zo(m), zr(m), eo(m), er(m);
      for (std::size_t r = 0; r < m; ++r) {
        eo[r] = mc_o[r][0].dot(f.phi.values()) - target;
        er[r] = mc_r[r][0].dot(f.phi.values()) - target;
        zo[r] = root_n * eo[r];
        zr[r] = root_n * er[r];
        eo[r] = std::abs(eo[r]);
        er[r] = std::abs(er[r]);
      }
      rep.rows.push_back(lp_row(p, n, p.horizon, f.name, 2.0, eo, row_index++));
      rep.rows.push_back(lp_row(p, n, p.horizon, f.name + "+reduced", 2.0, er, row_index++));
      const double vo = stats::variance(zo), vr = stats::variance(zr);
      const auto cio = contain(stats::bootstrap_ci(zo, stats::variance, p.bootstrap_resamples,
                                                   p.ci_level,
                                                   derive_seed(p.seed, kBootstrapRun, row_index)),
                               vo);
      const auto cir = contain(stats::bootstrap_ci(zr, stats::variance, p.bootstrap_resamples,
                                                   p.ci_level,
                                                   derive_seed(p.seed, kBootstrapRun, row_index)),
                               vr);
      ++row_index;
      // Paired bootstrap of the variance difference (same resampled indices).
      Rng rng(derive_seed(p.seed, kBootstrapRun, row_index++));
      std::vector<double> diffs, so(m), sr(m);
      for (std::size_t b = 0; b < p.bootstrap_resamples; ++b) {
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t k = rng.below(m);
          so[i] = zo[k];
          sr[i] = zr[k];
        }
        diffs.push_back(stats::variance(sr) - stats::variance(so));
      }
      std::sort(diffs.begin(), diffs.end());
      const double alpha = 0.5 * (1.0 - p.ci_level);
      const double dlo = diffs[static_cast<std::size_t>(alpha * (diffs.size() - 1))];
      const double dhi = diffs[static_cast<std::size_t>((1.0 - alpha) * (diffs.size() - 1))];
      const bool overlap = cir.lo <= cio.hi && cio.lo <= cir.hi;
      const bool ordered = vr <= vo || overlap;
      rep.details["cases"].push_back(
          {{"N", n}, {"phi", f.name}, {"sigma2_original", cmp.original.sigma2},
           {"sigma2_reduced", cmp.reduced.sigma2}, {"variance_original", vo},
           {"variance_reduced", vr}, {"ci_original", {cio.lo, cio.hi}},
           {"ci_reduced", {cir.lo, cir.hi}}, {"paired_difference_ci", {dlo, dhi}}});
      std::ostringstream d;
      d << "reduced " << vr << " [" << cir.lo << ", " << cir.hi << "] vs original " << vo << " ["
        << cio.lo << ", " << cio.hi << "]";
      rep.checks.push_back({"empirical_ordering[" + tag(n, f.name) + "]", vr - vo, dlo, dhi, true,
                            ordered, d.str()});
    }
  }
  return rep;
}

ExperimentReport run_experiment(const ExperimentPlan& plan) {
  switch (plan.kind) {
    case ExperimentKind::PocRate: return poc_rate(plan);
    case ExperimentKind::UniformInTime: return uniform_in_time(plan);
    case ExperimentKind::Clt: return clt_check(plan);
    case ExperimentKind::Bias: return bias_check(plan);
    case ExperimentKind::ReductionCompare: break;
  }
  return reduction_compare(plan);
}

}  // namespace moran

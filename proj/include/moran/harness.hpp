#ifndef MORAN_HARNESS_HPP
#define MORAN_HARNESS_HPP

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moran/model.hpp"

namespace moran {

enum class ExperimentKind { PocRate, UniformInTime, Clt, Bias, ReductionCompare };
std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& name);

struct NamedFunction {
  std::string name;
  TestFunction phi;
};

/// Acceptance bounds; an unset bound means the statistic is only reported.
struct AcceptanceBounds {
  std::optional<std::pair<double, double>> slope;           // poc_rate, bias_check
  std::optional<double> max_time_ratio;                     // uniform_in_time
  std::optional<std::pair<double, double>> variance_ratio;  // clt_check
  std::optional<double> ks_max;                             // clt_check
  std::optional<double> slope_p;  // which p-norm the poc slope bound applies to (default 2)
};

struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::PocRate;
  ModelSpec model;
  Measure mu0;
  std::vector<NamedFunction> functions;
  std::vector<std::int64_t> n_grid;
  std::size_t replicates = 500;
  double horizon = 1.0;
  /// Empty selects the default grid: 20 points on (0, horizon] for poc_rate,
  /// {1, 5, 10, 20} relaxation times for uniform_in_time, {horizon} otherwise.
  std::vector<double> sample_times;
  std::vector<double> p_norms{1.0, 2.0, 4.0};
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::size_t bootstrap_resamples = 1000;
  double ci_level = 0.95;
  AcceptanceBounds acceptance;
  std::string config_hash;

  /// Throws InvalidArgument on a malformed plan.
  void validate() const;
};

struct ErrorRow {
  std::int64_t n = 0;
  double t = 0.0;
  std::string phi;
  double p = 0.0;
  double estimate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct SlopeRow {
  std::string label;
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  bool degenerate = false;
};

struct CheckRow {
  std::string name;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool applied = false;  // false: reported without assertion
  bool passed = true;
  std::string detail;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string code_version;
  std::string timestamp;
};

struct ExperimentReport {
  std::string experiment;
  std::string model;
  std::vector<ErrorRow> rows;
  std::vector<SlopeRow> slopes;
  std::vector<CheckRow> checks;
  nlohmann::json details = nlohmann::json::object();
  Provenance provenance;

  /// All applied checks passed.
  bool passed() const;
  nlohmann::json to_json(bool with_timestamp = true) const;
  /// `N,t,phi,p,estimate,ci_lo,ci_hi`.
  std::string errors_csv() const;
};

std::string code_version();
/// FNV-1a 64-bit hash, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
/// 17 significant digits (round-trip exact), used in every CSV.
std::string format_double(double x);

ExperimentReport poc_rate(const ExperimentPlan& plan);
ExperimentReport uniform_in_time(const ExperimentPlan& plan);
ExperimentReport clt_check(const ExperimentPlan& plan);
ExperimentReport bias_check(const ExperimentPlan& plan);
ExperimentReport reduction_compare(const ExperimentPlan& plan);
ExperimentReport run_experiment(const ExperimentPlan& plan);

/// Evaluates fn(r) for r = 0..count-1 on `workers` threads; results are
/// stored by index so the output does not depend on scheduling.
template <class Fn>
auto run_replicates(std::size_t count, std::size_t workers, Fn fn)
    -> std::vector<decltype(fn(std::size_t{0}))> {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> out(count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t r = 0; r < count; ++r) out[r] = fn(r);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= count) return;
      try {
        out[r] = fn(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace moran

#endif  // MORAN_HARNESS_HPP

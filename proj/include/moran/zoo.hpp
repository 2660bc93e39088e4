#ifndef MORAN_ZOO_HPP
#define MORAN_ZOO_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "moran/model.hpp"
#include "moran/solvers.hpp"

namespace moran {

/// Two types, Q = [[-a, a], [b, -b]], Vd = (0, q), Vb = (0, p).
ModelSpec two_allelic(double a, double b, double p, double q);

/// Three-state chain {1, 2, cemetery} with killing rates sup(Lambda) - Lambda:
/// the sub-Markov chain whose conditioned law is the normalised flow.
RateMatrix two_allelic_absorbed_generator(double a, double b, double p, double q);

/// Birth and death rates indexed by the 1-based state label.
struct BDParams {
  std::function<double(std::size_t)> b;
  std::function<double(std::size_t)> d;
  std::size_t K = 0;
  BoundaryPolicy boundary = BoundaryPolicy::AbsorbForbid;

  static BDParams constant(double b, double d, std::size_t K);
};

/// Tridiagonal Q on {1..K} with killing Lambda = -d_1 1_{1}
/// (Vd(1) = d_1, Vb = 0). AbsorbForbid drops the up-rate at K; Reflect
/// redirects it to K - 1.
ModelSpec birth_death(const BDParams& params);

enum class SeriesVerdict { Converging, Diverging, Inconclusive };
std::string to_string(SeriesVerdict v);

struct SeriesCheck {
  std::vector<double> terms;         // t_k for k = 2..K_terms
  std::vector<double> partial_sums;  // running sums of terms
  double tail_ratio_min = 0.0;       // over the last decade of terms
  double tail_ratio_max = 0.0;
  double power_exponent = 0.0;       // slope of log t_k against log k
  SeriesVerdict verdict = SeriesVerdict::Inconclusive;
};

/// Partial sums of sum_{k>=2} (1 / (d_k alpha_k)) sum_{r>=k} alpha_r with
/// alpha_r = prod_{i<r} b_i / prod_{2<=i<=r} d_i, the inner sum cut at
/// r = 2 K_terms. The verdict is a heuristic: ratio test first, then the
/// power-law exponent of the tail terms (< -1.1 converging, > -0.9 diverging).
SeriesCheck bd_qsd_uniqueness_check(const BDParams& params, std::size_t k_terms);

struct RateCriterion {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// inf_{y not in K} (Lambda(y) + sum_{x in K} Q(y, x)) > sup Lambda, with K
/// given as 0-based indices.
RateCriterion rate_criterion_check(const ModelSpec& spec, const std::vector<std::size_t>& subset);

/// Eigen-elements supplied analytically instead of solved for.
struct AnalyticEigen {
  Vector h;
  double lambda = 0.0;
};

struct SpectralCriterion {
  struct Doubling {
    std::size_t K = 0;
    std::size_t k_eps_size = 0;
    double h_inv_norm = 0.0;
  };
  std::vector<std::size_t> k_eps;  // 0-based
  double h_inv_norm = 0.0;
  bool holds = false;
  std::vector<Doubling> doubling;
  std::string note;
};

/// K_eps = {x : Lambda(x) >= lambda - eps} and max 1/h on one space. On an
/// untruncated (finite) space the criterion holds whenever h > 0.
SpectralCriterion spectral_criterion_check(const ModelSpec& spec, double eps,
                                           const std::optional<AnalyticEigen>& analytic = {});

/// Doubling test over truncations K, 2K, 4K, ...: holds when |K_eps| does
/// not grow and max 1/h grows by at most a factor 2 per doubling.
SpectralCriterion spectral_criterion_doubling(
    const std::function<ModelSpec(std::size_t)>& builder,
    const std::function<std::optional<AnalyticEigen>(std::size_t)>& analytic,
    std::size_t K, double eps, int doublings = 2);

enum class B1Mode { Paper, Consistent };
std::string to_string(B1Mode m);
B1Mode b1_mode_from_string(const std::string& name);

struct Counterexample {
  ModelSpec spec;
  double b = 0.0, d = 0.0, b1 = 0.0, d1 = 0.0;
  B1Mode mode = B1Mode::Paper;
  AnalyticEigen eigen;  // h(n) = e^{-n}, lambda = b(e^{-1} - 1) + d(e - 1)

  /// (Q + Lambda) h - lambda h, row by row.
  Vector residuals() const;
  /// Closed form of the row-1 residual: e^{-1} (b1 - b)(e^{-1} - 1) in paper
  /// mode, 0 in consistent mode.
  double row1_closed_form() const;
};

/// Birth rate b (b1 at state 1), death rate d, Lambda = d1 1_{1}. Paper mode
/// uses d1 = d(e - 1); consistent mode d1 = d(e - 1) + (b1 - b)(1 - e^{-1}).
/// A negative b1 selects b + 1.
Counterexample counterexample_bd(double b, double d, B1Mode mode, std::size_t K,
                                 double b1 = -1.0);

}  // namespace moran

#endif  // MORAN_ZOO_HPP

#ifndef MORAN_VARIANCE_HPP
#define MORAN_VARIANCE_HPP

#include <limits>

#include "moran/model.hpp"
#include "moran/solvers.hpp"

namespace moran {

struct VarianceDecomposition {
  double var_term = 0.0;
  double symmetric_integral = 0.0;
  double selection_integral = 0.0;  // already multiplied by 2
};

struct VarianceReport {
  double sigma2 = 0.0;
  VarianceDecomposition decomposition;
  double quadrature_error_estimate = 0.0;

  double horizon = 0.0;          // T, or the truncation horizon for T = infinity
  std::size_t intervals = 0;     // Simpson intervals of the accepted rule
  double tail_bound = 0.0;       // infinite horizon only
  double fitted_rate = 0.0;      // infinite horizon only, compare with 2 * gap
  bool degenerate = false;       // phi constant under the reference measure
};

/// S_mu(phi) = sum_{x,y} (phi(x) - phi(y))^2 V^s_mu(x, y) mu(x) mu(y).
double s_mu(const ModelSpec& spec, const Measure& mu, const TestFunction& phi);

/// Gamma_L(phi) = L(phi^2) - 2 phi L phi.
TestFunction carre_du_champ(const RateMatrix& l, const TestFunction& phi);
/// Jump form sum_y L(x, y) (phi(y) - phi(x))^2.
TestFunction carre_du_champ_jump(const RateMatrix& l, const TestFunction& phi);

struct QuadratureOptions {
  double relative_tolerance = 1e-6;
  std::size_t initial_intervals = 64;
  std::size_t max_intervals = std::size_t{1} << 17;
  /// Infinite horizon: stop once the integrand is below this fraction of the
  /// running total.
  double tail_fraction = 1e-12;
};

/// Asymptotic variance at a finite horizon T.
VarianceReport sigma2_T(const ModelSpec& spec, const Measure& mu0, double horizon,
                        const TestFunction& phi, const QuadratureOptions& options = {});

/// Asymptotic variance of the long-time limit, built on the eigen triplet.
VarianceReport sigma2_inf(const ModelSpec& spec, const TestFunction& phi,
                          const QuadratureOptions& options = {});

/// Fleming-Viot closed form Var(phi) - 2 lambda int e^{-2 lambda s}
/// Var(P_s phibar) ds, evaluated from the spectral decomposition of Q + Lambda.
/// Requires Vb = 0 and V^s = 0.
double sigma2_inf_fleming_viot(const ModelSpec& spec, const TestFunction& phi);

struct VarianceComparison {
  VarianceReport original;
  VarianceReport reduced;
  double reduction = 0.0;
  double flow_gap = 0.0;  // sup-TV between the two mean-field flows
};

/// Compares sigma2 of `spec` and of sigma_reduce(spec). A horizon of
/// +infinity compares sigma2_inf; `mu0` is ignored in that case.
VarianceComparison variance_compare(const ModelSpec& spec, const Measure& mu0,
                                    const TestFunction& phi, double horizon,
                                    const QuadratureOptions& options = {});

}  // namespace moran

#endif  // MORAN_VARIANCE_HPP

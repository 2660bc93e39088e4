#ifndef MORAN_SOLVERS_HPP
#define MORAN_SOLVERS_HPP

#include <cstdint>
#include <vector>

#include "moran/model.hpp"

namespace moran {

struct FlowTrajectory {
  enum class Method { Semigroup, Ode };

  std::vector<double> times;
  std::vector<Measure> measures;
  Method method = Method::Semigroup;

  // ODE diagnostics (zero for the semigroup route).
  double step = 0.0;
  double cumulative_mass_drift = 0.0;
  std::size_t clipped_entries = 0;
  std::size_t excess_drift_steps = 0;
  double error_estimate = 0.0;  // Richardson step-halving, sup TV

  /// Measure at a node time; throws if `t` is not (within 1e-12) a node.
  const Measure& at(double t) const;
  std::size_t node_of(double t) const;
};

std::string to_string(FlowTrajectory::Method m);

/// Q + diag(Lambda - shift).
Matrix feynman_kac_generator(const ModelSpec& spec, double shift = 0.0);

/// P_t^Lambda phi = e^{t (Q + Lambda)} phi.
TestFunction fk_semigroup(const ModelSpec& spec, double t, const TestFunction& phi);

/// mu_t = mu0 P_t / mu0 P_t(1), evaluated with the shifted potential
/// Lambda - sup Lambda.
FlowTrajectory normalized_flow(const ModelSpec& spec, const Measure& mu0,
                               const std::vector<double>& times);

struct OdeOptions {
  double step = 0.0;  // 0 selects 1e-3 min(1, 1/maxrate)
  bool estimate_error = true;
  Tolerances tolerances{};
};

/// d/dt gamma(x) = (gamma Q)(x) - gamma(x) sum_y D_gamma(x, y) gamma(y) with
/// D_gamma(x, y) = V_gamma(x, y) - V_gamma(y, x).
Vector mean_field_rhs(const ModelSpec& spec, const Vector& gamma);
double default_ode_step(const ModelSpec& spec, const Measure& mu0);

/// Fixed-step RK4 integration of the mean-field equation.
FlowTrajectory mean_field_ode(const ModelSpec& spec, const Measure& mu0,
                              const std::vector<double>& times,
                              const OdeOptions& options = {});

/// P(s, t) solving d/dt P(s, t) = P(s, t) Qtilde_{mu_t}, with Qtilde built
/// from V - V^s and mu_t taken from (and continued alongside) `flow`.
Matrix inhomogeneous_propagator(const ModelSpec& spec, double s, double t,
                                const FlowTrajectory& flow, double step = 0.0);

struct EigenTriplet {
  Measure mu_inf;
  TestFunction h;
  double lambda = 0.0;
  double spectral_gap = 0.0;  // lambda - Re(second eigenvalue)
  double left_residual = 0.0;   // || mu_inf (Q + Lambda) - lambda mu_inf ||_1
  double right_residual = 0.0;  // || (Q + Lambda) h - lambda h ||_inf
  double power_lambda = 0.0;    // power-iteration cross-check
  std::size_t power_iterations = 0;
};

class NotSimple : public Error {
 public:
  using Error::Error;
};

/// Dominant eigen-elements of A = Q + Lambda with mu_inf(1) = 1, mu_inf(h) = 1.
EigenTriplet eigen_triplet(const ModelSpec& spec, const Tolerances& tol = {});
EigenTriplet eigen_triplet_of(const Matrix& a, const Tolerances& tol = {});

/// Q^h phi = h^{-1} (Q + Lambda - lambda)(h phi).
RateMatrix doob_transform(const ModelSpec& spec, const EigenTriplet& triplet);

/// W_{t,T} phi = P_{T-t} phi / mu_t(P_{T-t} 1), mu_t read from `flow`.
TestFunction w_operator(const ModelSpec& spec, const FlowTrajectory& flow,
                        double t, double horizon, const TestFunction& phi);

/// log mu(P_dt^Lambda 1), computed with the shifted potential.
double log_mass(const ModelSpec& spec, const Measure& mu, double dt);

struct ErgodicityDiagnostic {
  double normalised_rate = 0.0;    // min over measures of the fitted TV decay rate
  double unnormalised_rate = 0.0;  // same for e^{-lambda t} mu0 P_t - mu0(h) mu_inf
  double horizon = 0.0;
  std::size_t measures = 0;
  bool confirmed = false;          // both rates positive
};

/// Fits exponential decay of TV(mu_t, mu_inf) and of
/// ||e^{-lambda t} mu0 P_t - mu0(h) mu_inf||_TV for random initial laws.
ErgodicityDiagnostic ergodicity_check(const ModelSpec& spec, std::size_t count = 10,
                                      std::uint64_t seed = 7);

}  // namespace moran

#endif  // MORAN_SOLVERS_HPP

#include "moran/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <sstream>

#include "moran/linalg.hpp"

namespace moran {

std::string to_string(FlowTrajectory::Method m) {
  return m == FlowTrajectory::Method::Semigroup ? "semigroup" : "ode";
}

std::size_t FlowTrajectory::node_of(double t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t - 1e-12);
  if (it == times.end() || std::abs(*it - t) > 1e-12) {
    std::ostringstream os;
    os << "time " << t << " is not a node of the flow";
    throw InvalidArgument(os.str());
  }
  return static_cast<std::size_t>(it - times.begin());
}

const Measure& FlowTrajectory::at(double t) const { return measures[node_of(t)]; }

namespace {

void check_times(const std::vector<double>& times) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0)) throw InvalidArgument("flow times must be >= 0");
    if (i > 0 && times[i] < times[i - 1]) throw InvalidArgument("flow times must be sorted");
  }
}

double sup_lambda(const ModelSpec& spec) { return lambda_of(spec).values().maxCoeff(); }

}  // namespace

Matrix feynman_kac_generator(const ModelSpec& spec, double shift) {
  const TestFunction lambda = lambda_of(spec);
  Matrix a = spec.mutation.entries();
  a.diagonal() += (lambda.values().array() - shift).matrix();
  return a;
}

TestFunction fk_semigroup(const ModelSpec& spec, double t, const TestFunction& phi) {
  if (!(t >= 0.0)) throw InvalidArgument("fk_semigroup: t must be >= 0");
  if (phi.size() != spec.size()) throw SizeMismatch("fk_semigroup: function size");
  const Matrix e = linalg::expm(t * feynman_kac_generator(spec));
  return TestFunction(e * phi.values());
}

FlowTrajectory normalized_flow(const ModelSpec& spec, const Measure& mu0,
                               const std::vector<double>& times) {
  check_times(times);
  if (mu0.size() != spec.size()) throw SizeMismatch("normalized_flow: mu0 size");
  const Matrix a = feynman_kac_generator(spec, sup_lambda(spec));
  FlowTrajectory flow;
  flow.method = FlowTrajectory::Method::Semigroup;
  flow.times = times;
  std::map<double, Matrix> cache;
  Eigen::RowVectorXd row = mu0.weights().transpose();
  double current = 0.0;
  for (double t : times) {
    const double dt = t - current;
    if (dt > 0.0) {
      auto it = cache.find(dt);
      if (it == cache.end()) it = cache.emplace(dt, linalg::expm(dt * a)).first;
      row = row * it->second;
      const double mass = row.sum();
      if (!(mass > 1e-300) || !std::isfinite(mass))
        throw NumericalFailure(
            "normalized_flow: denominator underflow; shift Lambda by a constant "
            "(the normalised flow is translation invariant)");
      row /= mass;
    }
    flow.measures.push_back(Measure::signed_measure(row.transpose()));
    current = t;
  }
  return flow;
}

Vector mean_field_rhs(const ModelSpec& spec, const Vector& gamma) {
  const Measure mu = Measure::signed_measure(gamma);
  const Matrix d = effective_drift(spec, mu);
  Vector out = spec.mutation.entries().transpose() * gamma;
  out -= gamma.cwiseProduct(d * gamma);
  return out;
}

double default_ode_step(const ModelSpec& spec, const Measure& mu0) {
  double vmax = 0.0;
  for (const auto& m : {mu0, Measure::uniform(spec.size())})
    vmax = std::max(vmax, spec.selection.evaluate(m).cwiseAbs().maxCoeff());
  const double maxrate = spec.mutation.max_exit_rate() + vmax;
  return 1e-3 * std::min(1.0, maxrate > 0.0 ? 1.0 / maxrate : 1.0);
}

namespace {

struct OdeRun {
  std::vector<Vector> states;
  double drift = 0.0;
  std::size_t clipped = 0;
  std::size_t excess = 0;
};

Vector rk4_step(const ModelSpec& spec, const Vector& g, double h) {
  const Vector k1 = mean_field_rhs(spec, g);
  const Vector k2 = mean_field_rhs(spec, g + 0.5 * h * k1);
  const Vector k3 = mean_field_rhs(spec, g + 0.5 * h * k2);
  const Vector k4 = mean_field_rhs(spec, g + h * k3);
  return g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

OdeRun run_ode(const ModelSpec& spec, const Measure& mu0, const std::vector<double>& times,
               double h, const Tolerances& tol) {
  OdeRun run;
  Vector g = mu0.weights();
  double current = 0.0;
  for (double t : times) {
    const double span = t - current;
    if (span > 0.0) {
      const auto n = static_cast<std::size_t>(std::ceil(span / h - 1e-9));
      const double hh = span / static_cast<double>(std::max<std::size_t>(n, 1));
      for (std::size_t i = 0; i < std::max<std::size_t>(n, 1); ++i) {
        g = rk4_step(spec, g, hh);
        for (Eigen::Index x = 0; x < g.size(); ++x) {
          if (g[x] < 0.0) {
            if (g[x] < -tol.negativity) ++run.clipped;
            g[x] = 0.0;
          }
        }
        const double mass = g.sum();
        if (!std::isfinite(mass) || mass <= 0.0)
          throw NumericalFailure("mean_field_ode: solution lost all mass");
        const double drift = std::abs(mass - 1.0);
        run.drift += drift;
        if (drift > tol.mass_drift) ++run.excess;
        g /= mass;
      }
    }
    run.states.push_back(g);
    current = t;
  }
  return run;
}

}  // namespace

FlowTrajectory mean_field_ode(const ModelSpec& spec, const Measure& mu0,
                              const std::vector<double>& times, const OdeOptions& options) {
  check_times(times);
  if (mu0.size() != spec.size()) throw SizeMismatch("mean_field_ode: mu0 size");
  const double h = options.step > 0.0 ? options.step : default_ode_step(spec, mu0);
  const double horizon = times.empty() ? 0.0 : times.back();
  if (h < 1e-14 * std::max(1.0, horizon))
    throw NumericalFailure("mean_field_ode: step-size underflow");
  OdeRun run = run_ode(spec, mu0, times, h, options.tolerances);
  FlowTrajectory flow;
  flow.method = FlowTrajectory::Method::Ode;
  flow.times = times;
  flow.step = h;
  flow.cumulative_mass_drift = run.drift;
  flow.clipped_entries = run.clipped;
  flow.excess_drift_steps = run.excess;
  for (auto& g : run.states) flow.measures.push_back(Measure::signed_measure(std::move(g)));
  if (options.estimate_error) {
    OdeRun fine = run_ode(spec, mu0, times, 0.5 * h, options.tolerances);
    double err = 0.0;
    for (std::size_t i = 0; i < fine.states.size(); ++i)
      err = std::max(err,
                     0.5 * (fine.states[i] - flow.measures[i].weights()).cwiseAbs().sum());
    flow.error_estimate = err / 15.0;
  }
  return flow;
}

Matrix inhomogeneous_propagator(const ModelSpec& spec, double s, double t,
                                const FlowTrajectory& flow, double step) {
  if (!(s <= t)) throw InvalidArgument("inhomogeneous_propagator: need s <= t");
  if (flow.times.empty() || s < flow.times.front() - 1e-12 || t > flow.times.back() + 1e-12)
    throw InvalidArgument("inhomogeneous_propagator: flow does not cover [s, t]");
  const auto n = static_cast<Eigen::Index>(spec.size());
  const double h = step > 0.0 ? step : default_ode_step(spec, flow.measures.front());

  // mu_s: the last node at or before s, advanced to s if needed.
  auto it = std::upper_bound(flow.times.begin(), flow.times.end(), s + 1e-12);
  const std::size_t node = static_cast<std::size_t>(it - flow.times.begin()) - 1;
  Vector mu = flow.measures[node].weights();
  double gap = s - flow.times[node];
  if (gap > 1e-12) {
    const auto m = static_cast<std::size_t>(std::ceil(gap / h));
    for (std::size_t i = 0; i < m; ++i) mu = rk4_step(spec, mu, gap / static_cast<double>(m));
  }

  Matrix p = Matrix::Identity(n, n);
  const double span = t - s;
  if (span <= 0.0) return p;
  const auto steps = static_cast<std::size_t>(std::ceil(span / h - 1e-9));
  const double hh = span / static_cast<double>(steps);
  auto gen = [&](const Vector& g) {
    return reduced_selection_generator(spec, Measure::signed_measure(g)).entries();
  };
  for (std::size_t i = 0; i < steps; ++i) {
    const Vector m1 = mean_field_rhs(spec, mu);
    const Matrix p1 = p * gen(mu);
    const Vector mu2 = mu + 0.5 * hh * m1;
    const Vector m2 = mean_field_rhs(spec, mu2);
    const Matrix p2 = (p + 0.5 * hh * p1) * gen(mu2);
    const Vector mu3 = mu + 0.5 * hh * m2;
    const Vector m3 = mean_field_rhs(spec, mu3);
    const Matrix p3 = (p + 0.5 * hh * p2) * gen(mu3);
    const Vector mu4 = mu + hh * m3;
    const Vector m4 = mean_field_rhs(spec, mu4);
    const Matrix p4 = (p + hh * p3) * gen(mu4);
    mu += (hh / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
    p += (hh / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
  }
  if (!p.allFinite()) throw NumericalFailure("inhomogeneous_propagator: non-finite result");
  return p;
}

EigenTriplet eigen_triplet_of(const Matrix& a, const Tolerances& tol) {
  const Eigen::Index n = a.rows();
  EigenTriplet out;
  if (n == 1) {
    out.lambda = a(0, 0);
    out.mu_inf = Measure::delta(1, 0);
    out.h = TestFunction(Vector::Ones(1));
    out.spectral_gap = std::numeric_limits<double>::infinity();
    out.power_lambda = out.lambda;
    return out;
  }
  Eigen::EigenSolver<Matrix> right(a);
  Eigen::EigenSolver<Matrix> left(a.transpose());
  if (right.info() != Eigen::Success || left.info() != Eigen::Success)
    throw NumericalFailure("eigen_triplet: eigensolver failed");

  auto dominant = [](const Eigen::VectorXcd& ev, double& gap) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < ev.size(); ++i)
      if (ev[i].real() > ev[best].real()) best = i;
    double second = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (i != best) second = std::max(second, ev[i].real());
    gap = ev[best].real() - second;
    return best;
  };
  double gap_r = 0.0, gap_l = 0.0;
  const Eigen::Index ir = dominant(right.eigenvalues(), gap_r);
  const Eigen::Index il = dominant(left.eigenvalues(), gap_l);
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (gap_r <= 1e-9 * scale) {
    std::ostringstream os;
    os << "eigen_triplet: dominant eigenvalue is not simple (spectral gap estimate "
       << gap_r << ")";
    throw NotSimple(os.str());
  }
  double lambda = right.eigenvalues()[ir].real();
  Vector h = right.eigenvectors().col(ir).real();
  Vector mu = left.eigenvectors().col(il).real();
  if (mu.sum() < 0.0) mu = -mu;
  if (h.sum() < 0.0) h = -h;

  // Inverse iteration polish with a slightly shifted pole.
  const double shift = lambda + 1e-7 * scale;
  Eigen::PartialPivLU<Matrix> lu(a - shift * Matrix::Identity(n, n));
  Eigen::PartialPivLU<Matrix> lut(a.transpose() - shift * Matrix::Identity(n, n));
  for (int it = 0; it < 2; ++it) {
    Vector h2 = lu.solve(h);
    Vector mu2 = lut.solve(mu);
    if (h2.allFinite() && mu2.allFinite()) {
      h = h2 / h2.cwiseAbs().maxCoeff();
      mu = mu2 / mu2.cwiseAbs().maxCoeff();
    }
  }
  if (mu.sum() < 0.0) mu = -mu;
  if (h.sum() < 0.0) h = -h;
  mu /= mu.sum();
  if (mu.minCoeff() < -tol.eigen || h.minCoeff() < 0.0)
    throw NumericalFailure(
        "eigen_triplet: dominant eigenvectors have mixed signs (reducible chain or "
        "truncation artifact)");
  mu = mu.cwiseMax(0.0);
  mu /= mu.sum();
  lambda = mu.dot(a * h) / mu.dot(h);
  h /= mu.dot(h);

  out.lambda = lambda;
  out.spectral_gap = gap_r;
  out.left_residual = (a.transpose() * mu - lambda * mu).cwiseAbs().sum();
  out.right_residual = (a * h - lambda * h).cwiseAbs().maxCoeff();
  out.mu_inf = Measure::signed_measure(mu);
  out.h = TestFunction(h);

  // Power iteration on e^{tau (A - rho I)} as an independent check of lambda.
  double rho = -std::numeric_limits<double>::infinity();
  for (Eigen::Index x = 0; x < n; ++x) rho = std::max(rho, a.row(x).sum());
  const double tau = std::clamp(10.0 / gap_r, 1.0, 200.0);
  const Matrix b = linalg::expm(tau * (a - rho * Matrix::Identity(n, n)));
  Vector v = Vector::Ones(n) / static_cast<double>(n);
  double growth = 0.0, previous = 0.0;
  std::size_t iter = 0;
  for (; iter < 20000; ++iter) {
    Vector w = b * v;
    growth = w.sum() / v.sum();
    v = w / w.sum();
    if (iter > 2 && std::abs(growth - previous) <= 1e-15 * std::abs(growth)) break;
    previous = growth;
  }
  out.power_lambda = rho + std::log(growth) / tau;
  out.power_iterations = iter;
  return out;
}

EigenTriplet eigen_triplet(const ModelSpec& spec, const Tolerances& tol) {
  if (!spec.mutation.is_irreducible())
    throw InvalidArgument("eigen_triplet: mutation generator must be irreducible");
  return eigen_triplet_of(feynman_kac_generator(spec), tol);
}

RateMatrix doob_transform(const ModelSpec& spec, const EigenTriplet& triplet) {
  const Vector& h = triplet.h.values();
  if (h.minCoeff() <= 0.0)
    throw InvalidArgument("doob_transform: h must be strictly positive");
  const Matrix a = feynman_kac_generator(spec);
  const Eigen::Index n = a.rows();
  Matrix qh(n, n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = 0; y < n; ++y)
      qh(x, y) = (x == y) ? a(x, x) - triplet.lambda : a(x, y) * h[y] / h[x];
  return RateMatrix(std::move(qh));
}

TestFunction w_operator(const ModelSpec& spec, const FlowTrajectory& flow, double t,
                        double horizon, const TestFunction& phi) {
  if (!(t <= horizon)) throw InvalidArgument("w_operator: need t <= T");
  const Measure& mu_t = flow.at(t);
  const double beta = sup_lambda(spec);
  const Matrix e = linalg::expm((horizon - t) * feynman_kac_generator(spec, beta));
  const Vector num = e * phi.values();
  const double den = mu_t.integrate(Vector(e * Vector::Ones(e.rows())));
  if (!(den > 1e-300) || !std::isfinite(den))
    throw NumericalFailure(
        "w_operator: denominator underflow; shift Lambda by a constant");
  return TestFunction(num / den);
}

double log_mass(const ModelSpec& spec, const Measure& mu, double dt) {
  const double beta = sup_lambda(spec);
  const Matrix e = linalg::expm(dt * feynman_kac_generator(spec, beta));
  const double m = mu.integrate(Vector(e * Vector::Ones(e.rows())));
  if (!(m > 0.0)) throw NumericalFailure("log_mass: mass underflow");
  return std::log(m) + beta * dt;
}

}  // namespace moran

namespace moran {

namespace {

// Negative slope of log(err) against t over points above the rounding floor.
double decay_rate(const std::vector<double>& t, const std::vector<double>& err) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(err[i] > 1e-13)) continue;
    const double y = std::log(err[i]);
    sx += t[i]; sy += y; sxx += t[i] * t[i]; sxy += t[i] * y; m += 1.0;
  }
  const double den = m * sxx - sx * sx;
  if (m < 3.0 || !(den > 0.0)) return std::numeric_limits<double>::infinity();
  return -(m * sxy - sx * sy) / den;
}

}  // namespace

ErgodicityDiagnostic ergodicity_check(const ModelSpec& spec, std::size_t count,
                                      std::uint64_t seed) {
  const EigenTriplet trip = eigen_triplet(spec);
  const auto n = static_cast<Eigen::Index>(spec.size());
  const Matrix b = feynman_kac_generator(spec) - trip.lambda * Matrix::Identity(n, n);
  ErgodicityDiagnostic out;
  out.measures = count;
  out.horizon = 20.0 / std::max(trip.spectral_gap, 1e-3);
  const int points = 40;
  const double dt = out.horizon / points;
  const Matrix step = linalg::expm(dt * b);
  out.normalised_rate = std::numeric_limits<double>::infinity();
  out.unnormalised_rate = std::numeric_limits<double>::infinity();
  for (const Measure& mu0 : sample_measures(spec.size(), count, seed)) {
    std::vector<double> times, norm_err, unnorm_err;
    Eigen::RowVectorXd row = mu0.weights().transpose();
    const Eigen::RowVectorXd limit = mu0.integrate(trip.h) * trip.mu_inf.weights().transpose();
    for (int j = 0; j <= points; ++j) {
      times.push_back(j * dt);
      unnorm_err.push_back(0.5 * (row - limit).cwiseAbs().sum());
      norm_err.push_back(0.5 * (row / row.sum() - trip.mu_inf.weights().transpose()).cwiseAbs().sum());
      row = row * step;
    }
    out.normalised_rate = std::min(out.normalised_rate, decay_rate(times, norm_err));
    out.unnormalised_rate = std::min(out.unnormalised_rate, decay_rate(times, unnorm_err));
  }
  out.confirmed = out.normalised_rate > 0.0 && out.unnormalised_rate > 0.0;
  return out;
}

}  // namespace moran

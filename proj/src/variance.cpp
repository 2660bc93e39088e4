#include "moran/variance.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "moran/linalg.hpp"

namespace moran {

double s_mu(const ModelSpec& spec, const Measure& mu, const TestFunction& phi) {
  const Matrix vs = spec.selection.symmetric_part(mu);
  const Vector& f = phi.values();
  const Vector& w = mu.weights();
  double total = 0.0;
  for (Eigen::Index x = 0; x < f.size(); ++x)
    for (Eigen::Index y = 0; y < f.size(); ++y) {
      const double d = f[x] - f[y];
      total += d * d * vs(x, y) * w[x] * w[y];
    }
  return total;
}

TestFunction carre_du_champ(const RateMatrix& l, const TestFunction& phi) {
  const Vector& f = phi.values();
  const Vector sq = f.cwiseProduct(f);
  return TestFunction(Vector(l.entries() * sq - 2.0 * f.cwiseProduct(l.entries() * f)));
}

TestFunction carre_du_champ_jump(const RateMatrix& l, const TestFunction& phi) {
  const Vector& f = phi.values();
  const Matrix& m = l.entries();
  Vector out = Vector::Zero(f.size());
  for (Eigen::Index x = 0; x < f.size(); ++x)
    for (Eigen::Index y = 0; y < f.size(); ++y) {
      if (x == y) continue;
      const double d = f[y] - f[x];
      out[x] += m(x, y) * d * d;
    }
  return TestFunction(std::move(out));
}

namespace {

struct Integrals {
  double symmetric = 0.0;
  double selection = 0.0;
  double total() const { return symmetric + selection; }
};

// Integrand pieces at measure mu for the function w = W phibar.
void integrand(const ModelSpec& spec, const AdditiveKernel& a, const Measure& mu,
               const Vector& w, double& f_sym, double& f_sel) {
  f_sym = s_mu(spec, mu, TestFunction(w));
  const Vector weight = a.birth(mu).array() + mu.integrate(a.death(mu));
  f_sel = mu.integrate(Vector(w.cwiseProduct(w).cwiseProduct(weight)));
}

Integrals finite_horizon(const ModelSpec& spec, const Measure& mu0, double horizon,
                         const Vector& phibar, std::size_t n) {
  const auto& a = spec.selection.additive_form();
  const double h = horizon / static_cast<double>(n);
  const double beta = lambda_of(spec).values().maxCoeff();
  const Matrix e = linalg::expm(h * feynman_kac_generator(spec, beta));

  std::vector<Vector> mus(n + 1);
  mus[0] = mu0.weights();
  for (std::size_t k = 0; k < n; ++k) {
    Vector next = e.transpose() * mus[k];
    const double mass = next.sum();
    if (!(mass > 1e-300)) throw NumericalFailure("sigma2_T: flow underflow; shift Lambda");
    mus[k + 1] = next / mass;
  }
  std::vector<Vector> g(n + 1), u(n + 1);
  g[0] = phibar;
  u[0] = Vector::Ones(phibar.size());
  for (std::size_t j = 0; j < n; ++j) {
    g[j + 1] = e * g[j];
    u[j + 1] = e * u[j];
  }
  std::vector<double> f1(n + 1), f2(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const Measure mu = Measure::signed_measure(mus[k]);
    const double den = mu.integrate(u[n - k]);
    if (!(den > 1e-300))
      throw NumericalFailure("sigma2_T: W denominator underflow; shift Lambda");
    integrand(spec, a, mu, g[n - k] / den, f1[k], f2[k]);
  }
  return {linalg::simpson(f1, h), 2.0 * linalg::simpson(f2, h)};
}

struct InfiniteRun {
  Integrals integrals;
  double horizon = 0.0;
  std::size_t intervals = 0;
  double rate = 0.0;
  double tail = 0.0;
};

InfiniteRun infinite_horizon(const ModelSpec& spec, const EigenTriplet& trip,
                             const Vector& phibar, double var, double h,
                             const QuadratureOptions& options) {
  const auto& a = spec.selection.additive_form();
  const Eigen::Index n = phibar.size();
  const Matrix b = feynman_kac_generator(spec) - trip.lambda * Matrix::Identity(n, n);
  const Matrix e = linalg::expm(h * b);
  const std::size_t max_steps = 4'000'000;

  std::vector<double> f1, f2, f;
  Vector g = phibar;
  double running = var;
  for (std::size_t k = 0;; ++k) {
    double s1 = 0.0, s2 = 0.0;
    integrand(spec, a, trip.mu_inf, g, s1, s2);
    f1.push_back(s1);
    f2.push_back(s2);
    f.push_back(s1 + 2.0 * s2);
    if (k > 0) running += 0.5 * h * (f[k] + f[k - 1]);
    if (k >= 20 && k % 2 == 0 && f[k] <= options.tail_fraction * running) break;
    if (k >= max_steps)
      throw NumericalFailure(
          "sigma2_inf: integrand does not decay; (C2) likely fails on this truncation");
    g = e * g;
  }

  InfiniteRun run;
  run.intervals = f.size() - 1;
  run.horizon = h * static_cast<double>(run.intervals);
  run.integrals = {linalg::simpson(f1, h), 2.0 * linalg::simpson(f2, h)};

  // Exponential fit over the last decade of integrand magnitude.
  const double last = f.back();
  std::size_t j0 = f.size() - 1;
  while (j0 > 0 && !(f[j0 - 1] >= 10.0 * last)) --j0;
  if (j0 > 0) --j0;
  const std::size_t start = std::min(j0, f.size() - 3);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, m = 0.0;
  for (std::size_t j = start; j < f.size(); ++j) {
    if (!(f[j] > 0.0)) continue;
    const double x = h * static_cast<double>(j);
    const double y = std::log(f[j]);
    sx += x; sy += y; sxx += x * x; sxy += x * y; m += 1.0;
  }
  if (last == 0.0) {
    run.rate = std::numeric_limits<double>::infinity();
  } else {
    const double den = m * sxx - sx * sx;
    run.rate = (m >= 2.0 && den > 0.0) ? -(m * sxy - sx * sy) / den : 0.0;
    if (!(run.rate > 0.0))
      throw NumericalFailure("sigma2_inf: exponential fit does not confirm decay");
    run.tail = last / run.rate;
  }
  return run;
}

}  // namespace

VarianceReport sigma2_T(const ModelSpec& spec, const Measure& mu0, double horizon,
                        const TestFunction& phi, const QuadratureOptions& options) {
  if (!(horizon >= 0.0) || !std::isfinite(horizon))
    throw InvalidArgument("sigma2_T: horizon must be finite and >= 0");
  if (phi.size() != spec.size() || mu0.size() != spec.size())
    throw SizeMismatch("sigma2_T: sizes differ from the model");
  spec.selection.additive_form();

  VarianceReport rep;
  rep.horizon = horizon;
  const Measure mu_t = normalized_flow(spec, mu0, {0.0, horizon}).measures.back();
  const double mean_t = mu_t.integrate(phi);
  const Vector phibar = phi.values().array() - mean_t;
  rep.decomposition.var_term = std::max(0.0, mu_t.variance(phi.values()));
  rep.degenerate = phibar.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, phi.sup_norm());
  if (horizon == 0.0 || rep.degenerate) {
    rep.sigma2 = rep.decomposition.var_term;
    return rep;
  }

  std::size_t n = std::max<std::size_t>(2, options.initial_intervals + options.initial_intervals % 2);
  Integrals coarse = finite_horizon(spec, mu0, horizon, phibar, n);
  for (;;) {
    const std::size_t n2 = 2 * n;
    if (n2 > options.max_intervals)
      throw NumericalFailure("sigma2_T: quadrature did not converge");
    const Integrals fine = finite_horizon(spec, mu0, horizon, phibar, n2);
    const double change = std::abs(fine.total() - coarse.total());
    const double total = rep.decomposition.var_term + fine.total();
    n = n2;
    if (change <= options.relative_tolerance * std::max(std::abs(total), 1e-300)) {
      // One Romberg step on the last two Simpson levels.
      auto romberg = [](double f, double c) { return std::max(0.0, f + (f - c) / 15.0); };
      coarse = {romberg(fine.symmetric, coarse.symmetric), romberg(fine.selection, coarse.selection)};
      rep.quadrature_error_estimate = change / 15.0;
      break;
    }
    coarse = fine;
  }
  rep.intervals = n;
  rep.decomposition.symmetric_integral = coarse.symmetric;
  rep.decomposition.selection_integral = coarse.selection;
  rep.sigma2 = rep.decomposition.var_term + coarse.total();
  return rep;
}

VarianceReport sigma2_inf(const ModelSpec& spec, const TestFunction& phi,
                          const QuadratureOptions& options) {
  if (phi.size() != spec.size()) throw SizeMismatch("sigma2_inf: phi size");
  spec.selection.additive_form();
  const EigenTriplet trip = eigen_triplet(spec);
  const Vector phibar = phi.values().array() - trip.mu_inf.integrate(phi);

  VarianceReport rep;
  rep.decomposition.var_term = std::max(0.0, trip.mu_inf.variance(phi.values()));
  if (phibar.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, phi.sup_norm())) {
    rep.degenerate = true;
    rep.sigma2 = rep.decomposition.var_term;
    return rep;
  }

  const double scale = std::max(1.0, feynman_kac_generator(spec).diagonal().cwiseAbs().maxCoeff());
  double h = std::min(0.1, 0.25 / scale);
  InfiniteRun coarse = infinite_horizon(spec, trip, phibar, rep.decomposition.var_term, h, options);
  for (int level = 0;; ++level) {
    if (level > 12) throw NumericalFailure("sigma2_inf: quadrature did not converge");
    h *= 0.5;
    const InfiniteRun fine =
        infinite_horizon(spec, trip, phibar, rep.decomposition.var_term, h, options);
    const double change = std::abs(fine.integrals.total() - coarse.integrals.total());
    const double total = rep.decomposition.var_term + fine.integrals.total();
    const InfiniteRun previous = coarse;
    coarse = fine;
    if (change <= options.relative_tolerance * std::max(std::abs(total), 1e-300)) {
      // One Romberg step on the last two Simpson levels.
      auto romberg = [](double f, double c) { return std::max(0.0, f + (f - c) / 15.0); };
      coarse.integrals.symmetric = romberg(fine.integrals.symmetric, previous.integrals.symmetric);
      coarse.integrals.selection = romberg(fine.integrals.selection, previous.integrals.selection);
      rep.quadrature_error_estimate = change / 15.0 + fine.tail;
      break;
    }
  }
  rep.horizon = coarse.horizon;
  rep.intervals = coarse.intervals;
  rep.tail_bound = coarse.tail;
  rep.fitted_rate = coarse.rate;
  rep.decomposition.symmetric_integral = coarse.integrals.symmetric;
  rep.decomposition.selection_integral = coarse.integrals.selection;
  rep.sigma2 = rep.decomposition.var_term + coarse.integrals.total();
  return rep;
}

double sigma2_inf_fleming_viot(const ModelSpec& spec, const TestFunction& phi) {
  const auto& a = spec.selection.additive_form();
  const Measure probe = Measure::uniform(spec.size());
  if (a.birth(probe).cwiseAbs().maxCoeff() != 0.0 || !a.symmetric.is_zero())
    throw InvalidArgument("sigma2_inf_fleming_viot: needs Vb = 0 and V^s = 0");
  const EigenTriplet trip = eigen_triplet(spec);
  const Eigen::Index n = static_cast<Eigen::Index>(spec.size());
  const Vector& mu = trip.mu_inf.weights();
  const Vector phibar = phi.values().array() - trip.mu_inf.integrate(phi);
  const double var = trip.mu_inf.variance(phi.values());

  const Matrix b = feynman_kac_generator(spec) - trip.lambda * Matrix::Identity(n, n);
  Eigen::EigenSolver<Matrix> es(b);
  if (es.info() != Eigen::Success)
    throw NumericalFailure("sigma2_inf_fleming_viot: eigensolver failed");
  const Eigen::MatrixXcd v = es.eigenvectors();
  const Eigen::VectorXcd d = es.eigenvalues();
  const Eigen::VectorXcd c = v.partialPivLu().solve(phibar.cast<std::complex<double>>());

  const double cscale = std::max(1e-300, c.cwiseAbs().maxCoeff());
  std::complex<double> integral = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index l = 0; l < n; ++l) {
      const std::complex<double> coef = c[k] * c[l];
      if (std::abs(coef) <= 1e-14 * cscale * cscale) continue;
      const std::complex<double> sum = d[k] + d[l];
      if (sum.real() >= -1e-12) {
        std::ostringstream os;
        os << "sigma2_inf_fleming_viot: non-decaying mode (eigenvalue sum " << sum.real() << ")";
        throw NumericalFailure(os.str());
      }
      std::complex<double> overlap = 0.0;
      for (Eigen::Index x = 0; x < n; ++x) overlap += mu[x] * v(x, k) * v(x, l);
      integral += coef * overlap * (-1.0 / sum);
    }
  }
  return var - 2.0 * trip.lambda * integral.real();
}

VarianceComparison variance_compare(const ModelSpec& spec, const Measure& mu0,
                                    const TestFunction& phi, double horizon,
                                    const QuadratureOptions& options) {
  const ModelSpec reduced = sigma_reduce(spec);
  const bool infinite = std::isinf(horizon);
  const Measure start = infinite ? eigen_triplet(spec).mu_inf : mu0;
  const double span = infinite ? 10.0 : horizon;

  std::vector<double> times;
  for (int i = 0; i <= 50; ++i) times.push_back(span * i / 50.0);
  OdeOptions ode;
  ode.estimate_error = false;
  const FlowTrajectory f1 = mean_field_ode(spec, start, times, ode);
  const FlowTrajectory f2 = mean_field_ode(reduced, start, times, ode);
  VarianceComparison out;
  for (std::size_t i = 0; i < times.size(); ++i)
    out.flow_gap = std::max(out.flow_gap, tv_distance(f1.measures[i], f2.measures[i]));
  if (out.flow_gap > 1e-8) {
    std::ostringstream os;
    os << "variance_compare: reduced flow differs from original by " << out.flow_gap;
    throw NumericalFailure(os.str());
  }

  if (infinite) {
    out.original = sigma2_inf(spec, phi, options);
    out.reduced = sigma2_inf(reduced, phi, options);
  } else {
    out.original = sigma2_T(spec, mu0, horizon, phi, options);
    out.reduced = sigma2_T(reduced, mu0, horizon, phi, options);
  }
  out.reduction = out.original.sigma2 - out.reduced.sigma2;
  if (out.reduction < -1e-10 - out.original.quadrature_error_estimate -
                          out.reduced.quadrature_error_estimate) {
    std::ostringstream os;
    os << "variance_compare: reduced variance exceeds original by " << -out.reduction;
    throw NumericalFailure(os.str());
  }
  return out;
}

}  // namespace moran

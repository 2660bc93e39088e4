#include "moran/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace moran {

ModelSpec two_allelic(double a, double b, double p, double q) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("two_allelic: need a, b > 0");
  if (!(p >= 0.0) || !(q >= 0.0)) throw InvalidArgument("two_allelic: need p, q >= 0");
  Matrix q_mat(2, 2);
  q_mat << -a, a, b, -b;
  Vector death(2), birth(2);
  death << 0.0, q;
  birth << 0.0, p;
  std::ostringstream name;
  name << "two-allelic(a=" << a << ",b=" << b << ",p=" << p << ",q=" << q << ")";
  return make_model(name.str(), StateSpace(2), RateMatrix(q_mat),
                    SelectionKernel::additive(death, birth));
}

RateMatrix two_allelic_absorbed_generator(double a, double b, double p, double q) {
  const ModelSpec spec = two_allelic(a, b, p, q);
  const Vector lambda = lambda_of(spec).values();
  const Vector kill = lambda.maxCoeff() - lambda.array();
  Matrix g = Matrix::Zero(3, 3);
  g(0, 1) = a;
  g(0, 2) = kill[0];
  g(1, 0) = b;
  g(1, 2) = kill[1];
  g(0, 0) = -(a + kill[0]);
  g(1, 1) = -(b + kill[1]);
  return RateMatrix(std::move(g));
}

BDParams BDParams::constant(double b, double d, std::size_t K) {
  BDParams p;
  p.b = [b](std::size_t) { return b; };
  p.d = [d](std::size_t) { return d; };
  p.K = K;
  return p;
}

ModelSpec birth_death(const BDParams& params) {
  const std::size_t k = params.K;
  if (k < 3) throw InvalidArgument("birth_death: truncation K must be >= 3");
  if (!params.b || !params.d) throw InvalidArgument("birth_death: rates not set");
  Matrix rates = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t x = 1; x <= k; ++x) {
    const double bx = params.b(x);
    const double dx = params.d(x);
    if (!(bx > 0.0) || !(dx > 0.0) || !std::isfinite(bx) || !std::isfinite(dx)) {
      std::ostringstream os;
      os << "birth_death: rates must be positive and finite (state " << x << ")";
      throw InvalidArgument(os.str());
    }
    const auto i = static_cast<Eigen::Index>(x - 1);
    if (x < k) rates(i, i + 1) += bx;
    else if (params.boundary == BoundaryPolicy::Reflect) rates(i, i - 1) += bx;
    if (x >= 2) rates(i, i - 1) += dx;
  }
  Vector death = Vector::Zero(static_cast<Eigen::Index>(k));
  death[0] = params.d(1);
  TruncationInfo info;
  info.retained = k;
  info.boundary_policy = params.boundary;
  std::ostringstream name;
  name << "birth-death(K=" << k << "," << to_string(params.boundary) << ")";
  return make_model(name.str(), StateSpace(k, {}, info), RateMatrix::from_off_diagonal(rates),
                    SelectionKernel::additive(death, Vector::Zero(static_cast<Eigen::Index>(k))));
}

std::string to_string(SeriesVerdict v) {
  switch (v) {
    case SeriesVerdict::Converging: return "converging";
    case SeriesVerdict::Diverging: return "diverging";
    case SeriesVerdict::Inconclusive: break;
  }
  return "inconclusive";
}

SeriesCheck bd_qsd_uniqueness_check(const BDParams& params, std::size_t k_terms) {
  if (k_terms < 10) throw InvalidArgument("bd_qsd_uniqueness_check: K_terms must be >= 10");
  const std::size_t r_max = 2 * k_terms;

  // log R_k with R_k = sum_{r>=k} alpha_r / alpha_k = 1 + (b_k / d_{k+1}) R_{k+1}.
  std::vector<double> log_r(r_max + 2, 0.0);
  for (std::size_t k = r_max; k >= 2; --k) {
    if (k == r_max) {
      log_r[k] = 0.0;
      continue;
    }
    const double log_step = std::log(params.b(k)) - std::log(params.d(k + 1)) + log_r[k + 1];
    log_r[k] = log_step > 0.0 ? log_step + std::log1p(std::exp(-log_step))
                              : std::log1p(std::exp(log_step));
  }

  SeriesCheck out;
  double sum = 0.0;
  for (std::size_t k = 2; k <= k_terms; ++k) {
    const double log_t = log_r[k] - std::log(params.d(k));
    const double t = std::exp(log_t);
    if (!std::isfinite(t))
      throw NumericalFailure("bd_qsd_uniqueness_check: term overflow");
    out.terms.push_back(t);
    sum += t;
    out.partial_sums.push_back(sum);
  }

  // Tail diagnostics over the last decade k in [K/10, K] (at least 10 terms).
  const std::size_t n = out.terms.size();
  const std::size_t first =
      std::min(n >= 10 ? n - 10 : 0, std::max<std::size_t>(k_terms / 10, 2) - 2);
  out.tail_ratio_min = std::numeric_limits<double>::infinity();
  out.tail_ratio_max = 0.0;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, m = 0.0;
  for (std::size_t i = first; i < n; ++i) {
    if (i + 1 < n) {
      const double ratio = out.terms[i + 1] / out.terms[i];
      out.tail_ratio_min = std::min(out.tail_ratio_min, ratio);
      out.tail_ratio_max = std::max(out.tail_ratio_max, ratio);
    }
    const double x = std::log(static_cast<double>(i + 2));
    const double y = std::log(out.terms[i]);
    sx += x; sy += y; sxx += x * x; sxy += x * y; m += 1.0;
  }
  out.power_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);

  if (out.tail_ratio_max < 0.99) out.verdict = SeriesVerdict::Converging;
  else if (out.tail_ratio_min > 1.01) out.verdict = SeriesVerdict::Diverging;
  else if (out.power_exponent < -1.1) out.verdict = SeriesVerdict::Converging;
  else if (out.power_exponent > -0.9) out.verdict = SeriesVerdict::Diverging;
  else out.verdict = SeriesVerdict::Inconclusive;
  return out;
}

RateCriterion rate_criterion_check(const ModelSpec& spec, const std::vector<std::size_t>& subset) {
  const std::size_t n = spec.size();
  const std::set<std::size_t> k(subset.begin(), subset.end());
  if (k.empty()) throw InvalidArgument("rate_criterion_check: K must be nonempty");
  for (std::size_t x : k)
    if (x >= n) throw InvalidArgument("rate_criterion_check: K contains a state outside E");
  if (k.size() == n)
    throw InvalidArgument("rate_criterion_check: K covers the whole space (criterion vacuous)");
  const Vector lambda = lambda_of(spec).values();
  RateCriterion out;
  out.rhs = lambda.maxCoeff();
  out.lhs = std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < n; ++y) {
    if (k.count(y)) continue;
    double inflow = 0.0;
    for (std::size_t x : k) inflow += spec.mutation(y, x);
    out.lhs = std::min(out.lhs, lambda[static_cast<Eigen::Index>(y)] + inflow);
  }
  out.holds = out.lhs > out.rhs;
  return out;
}

SpectralCriterion spectral_criterion_check(const ModelSpec& spec, double eps,
                                           const std::optional<AnalyticEigen>& analytic) {
  if (!(eps > 0.0)) throw InvalidArgument("spectral_criterion_check: eps must be > 0");
  Vector h;
  double lambda = 0.0;
  if (analytic) {
    h = analytic->h;
    lambda = analytic->lambda;
    if (h.size() != static_cast<Eigen::Index>(spec.size()))
      throw SizeMismatch("spectral_criterion_check: analytic h size");
  } else {
    const EigenTriplet trip = eigen_triplet(spec);
    h = trip.h.values();
    lambda = trip.lambda;
  }
  const Vector lam = lambda_of(spec).values();
  SpectralCriterion out;
  for (Eigen::Index x = 0; x < lam.size(); ++x)
    if (lam[x] >= lambda - eps) out.k_eps.push_back(static_cast<std::size_t>(x));
  out.h_inv_norm = h.minCoeff() > 0.0 ? 1.0 / h.minCoeff()
                                      : std::numeric_limits<double>::infinity();
  const bool finite_norm = std::isfinite(out.h_inv_norm);
  if (spec.space.truncation()) {
    out.holds = finite_norm;
    out.note = "truncated space: single-K check only, run the doubling test for a verdict";
  } else {
    out.holds = finite_norm;
    out.note = "finite space: K_eps finite and h bounded below";
  }
  return out;
}

SpectralCriterion spectral_criterion_doubling(
    const std::function<ModelSpec(std::size_t)>& builder,
    const std::function<std::optional<AnalyticEigen>(std::size_t)>& analytic,
    std::size_t K, double eps, int doublings) {
  if (doublings < 1) throw InvalidArgument("spectral_criterion_doubling: need >= 1 doubling");
  SpectralCriterion out;
  bool stable = true;
  for (int i = 0; i <= doublings; ++i) {
    const std::size_t k = K << i;
    const ModelSpec spec = builder(k);
    const SpectralCriterion one =
        spectral_criterion_check(spec, eps, analytic ? analytic(k) : std::nullopt);
    if (i == 0) {
      out.k_eps = one.k_eps;
      out.h_inv_norm = one.h_inv_norm;
    } else {
      const auto& prev = out.doubling.back();
      if (one.k_eps.size() > prev.k_eps_size) stable = false;
      if (!std::isfinite(one.h_inv_norm) || one.h_inv_norm > 2.0 * prev.h_inv_norm) stable = false;
    }
    out.doubling.push_back({k, one.k_eps.size(), one.h_inv_norm});
  }
  out.holds = stable && std::isfinite(out.h_inv_norm);
  out.note = stable ? "K_eps and max 1/h stable under doubling"
                    : "K_eps or max 1/h grows under doubling";
  return out;
}

std::string to_string(B1Mode m) { return m == B1Mode::Paper ? "paper" : "consistent"; }

B1Mode b1_mode_from_string(const std::string& name) {
  if (name == "paper") return B1Mode::Paper;
  if (name == "consistent") return B1Mode::Consistent;
  throw InvalidArgument("unknown b1_mode '" + name + "' (expected paper or consistent)");
}

Vector Counterexample::residuals() const {
  const Matrix a = feynman_kac_generator(spec);
  return a * eigen.h - eigen.lambda * eigen.h;
}

double Counterexample::row1_closed_form() const {
  const double e1 = std::exp(-1.0);
  return mode == B1Mode::Paper ? e1 * (b1 - b) * (e1 - 1.0) : 0.0;
}

Counterexample counterexample_bd(double b, double d, B1Mode mode, std::size_t K, double b1) {
  if (!(b > 0.0) || !(d > 0.0)) throw InvalidArgument("counterexample_bd: need b, d > 0");
  if (!(b < d)) throw InvalidArgument("counterexample_bd: need b < d");
  if (K < 10) throw InvalidArgument("counterexample_bd: need K >= 10");
  if (b1 < 0.0) b1 = b + 1.0;
  if (mode == B1Mode::Paper && !(b1 > b))
    throw InvalidArgument("counterexample_bd: paper mode needs b1 > b");
  const double e = std::exp(1.0);
  Counterexample out;
  out.b = b;
  out.d = d;
  out.b1 = b1;
  out.mode = mode;
  out.d1 = d * (e - 1.0);
  if (mode == B1Mode::Consistent) out.d1 += (b1 - b) * (1.0 - 1.0 / e);

  const auto n = static_cast<Eigen::Index>(K);
  Matrix rates = Matrix::Zero(n, n);
  rates(0, 1) = b1;
  for (Eigen::Index x = 1; x < n; ++x) {
    if (x + 1 < n) rates(x, x + 1) = b;
    rates(x, x - 1) = d;
  }
  Vector birth = Vector::Zero(n);
  birth[0] = out.d1;
  TruncationInfo info;
  info.retained = K;
  info.boundary_policy = BoundaryPolicy::AbsorbForbid;
  std::ostringstream name;
  name << "counterexample(b=" << b << ",d=" << d << ",b1=" << b1 << "," << to_string(mode)
       << ",K=" << K << ")";
  out.spec = make_model(name.str(), StateSpace(K, {}, info), RateMatrix::from_off_diagonal(rates),
                        SelectionKernel::additive(Vector::Zero(n), birth));
  out.eigen.h = Vector(n);
  for (Eigen::Index x = 0; x < n; ++x) out.eigen.h[x] = std::exp(-static_cast<double>(x + 1));
  out.eigen.lambda = b * (1.0 / e - 1.0) + d * (e - 1.0);
  return out;
}

}  // namespace moran

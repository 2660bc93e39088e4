#include "moran/model.hpp"

#include <cmath>
#include <sstream>

#include "moran/rng.hpp"

namespace moran {

ModelSpec make_model(std::string name, StateSpace space, RateMatrix mutation,
                     SelectionKernel selection) {
  if (mutation.size() != space.size())
    throw SizeMismatch("mutation generator size does not match state space");
  if (selection.size() != space.size())
    throw SizeMismatch("selection kernel size does not match state space");
  ModelSpec spec;
  spec.name = std::move(name);
  spec.space = std::move(space);
  spec.mutation = std::move(mutation);
  spec.selection = std::move(selection);
  return spec;
}

std::vector<Measure> sample_measures(std::size_t size, std::size_t count,
                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Measure> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector w(static_cast<Eigen::Index>(size));
    for (Eigen::Index x = 0; x < w.size(); ++x) w[x] = rng.exponential(1.0);
    out.push_back(Measure::normalised(std::move(w)));
  }
  return out;
}

namespace {

std::string entry(const char* what, Eigen::Index x, Eigen::Index y, double v) {
  std::ostringstream os;
  os.precision(17);
  os << what << " at (" << x + 1 << "," << y + 1 << "): " << v;
  return os.str();
}

Vector lambda_at(const AdditiveKernel& a, const Measure& mu) {
  return a.birth(mu) - a.death(mu);
}

}  // namespace

ValidationReport validate_model(const ModelSpec& spec,
                                const ValidationOptions& options) {
  ValidationReport report;
  const double tol = options.tolerances.exact;
  const auto n = static_cast<Eigen::Index>(spec.size());

  if (spec.mutation.size() != spec.size() || spec.selection.size() != spec.size()) {
    report.violations.push_back("size mismatch between state space, Q and V");
    return report;
  }

  const Matrix& q = spec.mutation.entries();
  bool negative_reported = false;
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      if (x != y && q(x, y) < 0.0 && !negative_reported) {
        report.violations.push_back(
            entry("negative off-diagonal mutation rate", x, y, q(x, y)));
        negative_reported = true;
      }
    }
    const double row = q.row(x).sum();
    if (std::abs(row) > tol) {
      std::ostringstream os;
      os.precision(17);
      os << "nonzero row sum in mutation generator row " << x + 1 << ": " << row;
      report.violations.push_back(os.str());
    }
  }
  if (!q.allFinite()) report.violations.push_back("non-finite mutation rate");

  report.irreducible = spec.mutation.is_irreducible();
  if (!report.irreducible)
    report.warnings.push_back("mutation generator is reducible");

  std::vector<Measure> measures;
  measures.push_back(Measure::uniform(spec.size()));
  for (std::size_t x = 0; x < spec.size() && x < 16; ++x)
    measures.push_back(Measure::delta(spec.size(), x));
  for (auto& m : sample_measures(spec.size(), options.random_measures, options.seed))
    measures.push_back(std::move(m));
  for (const auto& m : options.extra_measures) measures.push_back(m);

  const auto* additive = std::get_if<AdditiveKernel>(&spec.selection.form());
  Vector lambda_ref;
  if (additive) lambda_ref = lambda_at(*additive, measures.front());

  bool neg = false, asym = false, lam = false, nonfinite = false;
  for (const auto& mu : measures) {
    const Matrix v = spec.selection.evaluate(mu);
    if (!v.allFinite()) {
      if (!nonfinite) report.violations.push_back("non-finite selection rate");
      nonfinite = true;
      continue;
    }
    report.kernel_bound = std::max(report.kernel_bound, v.maxCoeff());
    if (!neg && v.minCoeff() < 0.0) {
      Eigen::Index x, y;
      v.minCoeff(&x, &y);
      report.violations.push_back(entry("negative selection rate", x, y, v(x, y)));
      neg = true;
    }
    const Matrix s = spec.selection.symmetric_part(mu);
    if (!asym && (s - s.transpose()).cwiseAbs().maxCoeff() > 0.0) {
      report.violations.push_back("asymmetric symmetric_part");
      asym = true;
    }
    if (additive) {
      const Vector d = additive->death(mu);
      const Vector b = additive->birth(mu);
      if (!neg && (d.minCoeff() < 0.0 || b.minCoeff() < 0.0)) {
        report.violations.push_back("negative additive death or birth rate");
        neg = true;
      }
      if (!lam && (lambda_at(*additive, mu) - lambda_ref).cwiseAbs().maxCoeff() > tol) {
        report.violations.push_back(
            "Lambda = Vb - Vd depends on mu (additive form requires a mu-free Lambda)");
        lam = true;
      }
    }
    ++report.measures_evaluated;
  }

  if (const auto* g = spec.selection.general_form()) {
    Vector diff_sum = Vector::Zero(n);
    Vector sup_death = Vector::Zero(n);
    Vector sup_birth = Vector::Zero(n);
    for (const auto& c : g->components) {
      diff_sum += (c.death - c.birth).cwiseAbs();
      sup_death = sup_death.cwiseMax(c.death);
      sup_birth = sup_birth.cwiseMax(c.birth);
    }
    if (!diff_sum.allFinite() || !sup_death.allFinite() || !sup_birth.allFinite())
      report.violations.push_back("general kernel component bounds are not finite");
  }
  return report;
}

Matrix effective_drift(const ModelSpec& spec, const Measure& mu) {
  const Matrix v = spec.selection.non_symmetric(mu);
  return v - v.transpose();
}

TestFunction lambda_of(const ModelSpec& spec, double tol) {
  const auto& a = spec.selection.additive_form();
  const Vector ref = lambda_at(a, Measure::uniform(spec.size()));
  for (const auto& mu : sample_measures(spec.size(), 3, 0x1a4bdaULL)) {
    const double gap = (lambda_at(a, mu) - ref).cwiseAbs().maxCoeff();
    if (gap > tol) {
      std::ostringstream os;
      os << "Lambda differs by " << gap << " between reference and sampled measure";
      throw MuDependentLambda(os.str());
    }
  }
  return TestFunction(ref);
}

ModelSpec sigma_reduce(const ModelSpec& spec) {
  const auto& a = spec.selection.additive_form();
  const std::size_t n = spec.size();
  AdditiveKernel reduced;
  reduced.symmetric = PairFunction::zero(n);
  if (!a.death.mu_dependent() && !a.birth.mu_dependent()) {
    const Vector diff = a.death.values() - a.birth.values();
    reduced.death = SiteFunction::constant(diff.cwiseMax(0.0));
    reduced.birth = SiteFunction::constant((-diff).cwiseMax(0.0));
  } else {
    const SiteFunction death = a.death;
    const SiteFunction birth = a.birth;
    reduced.death = SiteFunction::dynamic(n, [death, birth](const Measure& mu) {
      return Vector((death(mu) - birth(mu)).cwiseMax(0.0));
    });
    reduced.birth = SiteFunction::dynamic(n, [death, birth](const Measure& mu) {
      return Vector((birth(mu) - death(mu)).cwiseMax(0.0));
    });
  }
  ModelSpec out = spec;
  out.name = spec.name + "+sigma-reduced";
  out.selection = SelectionKernel(std::move(reduced));
  return out;
}

namespace {

RateMatrix generator_from_kernel(const ModelSpec& spec, const Measure& mu,
                                 const Matrix& v) {
  const Matrix& q = spec.mutation.entries();
  const Eigen::Index n = q.rows();
  Matrix l = q;
  for (Eigen::Index x = 0; x < n; ++x) {
    double exit = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      if (y == x) continue;
      l(x, y) = q(x, y) + mu[static_cast<std::size_t>(y)] * v(x, y);
      exit += l(x, y);
    }
    l(x, x) = -exit;
  }
  return RateMatrix(std::move(l));
}

}  // namespace

RateMatrix selection_generator(const ModelSpec& spec, const Measure& mu) {
  return generator_from_kernel(spec, mu, spec.selection.evaluate(mu));
}

RateMatrix reduced_selection_generator(const ModelSpec& spec, const Measure& mu) {
  return generator_from_kernel(spec, mu, spec.selection.non_symmetric(mu));
}

}  // namespace moran

#include "moran/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace moran {

std::string to_string(BoundaryPolicy policy) {
  return policy == BoundaryPolicy::Reflect ? "reflect" : "absorb-forbid";
}

BoundaryPolicy boundary_policy_from_string(const std::string& name) {
  if (name == "reflect") return BoundaryPolicy::Reflect;
  if (name == "absorb-forbid" || name == "absorb_forbid")
    return BoundaryPolicy::AbsorbForbid;
  throw InvalidArgument("unknown boundary policy '" + name + "'");
}

StateSpace::StateSpace(std::size_t size, std::vector<std::string> labels,
                       std::optional<TruncationInfo> truncation)
    : size_(size), labels_(std::move(labels)), truncation_(std::move(truncation)) {
  if (size_ == 0) throw InvalidArgument("state space must have size >= 1");
  if (!labels_.empty()) {
    if (labels_.size() != size_)
      throw InvalidArgument("state space labels must have exactly size entries");
    std::set<std::string> unique(labels_.begin(), labels_.end());
    if (unique.size() != labels_.size())
      throw InvalidArgument("state space labels must be distinct");
  }
}

std::string StateSpace::label(std::size_t x) const {
  if (!labels_.empty()) return labels_.at(x);
  return std::to_string(x + 1);
}

TestFunction::TestFunction(Vector values) : values_(std::move(values)) {
  sup_norm_ = values_.size() == 0 ? 0.0 : values_.cwiseAbs().maxCoeff();
}

TestFunction TestFunction::constant(std::size_t size, double value) {
  return TestFunction(Vector::Constant(static_cast<Eigen::Index>(size), value));
}

TestFunction TestFunction::indicator(std::size_t size, std::size_t x) {
  if (x >= size) throw InvalidArgument("indicator index out of range");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(size));
  v[static_cast<Eigen::Index>(x)] = 1.0;
  return TestFunction(std::move(v));
}

bool TestFunction::is_constant(double tol) const {
  if (values_.size() == 0) return true;
  return values_.maxCoeff() - values_.minCoeff() <= tol;
}

Measure Measure::probability(Vector weights, double tol) {
  Measure m(std::move(weights));
  if (!m.is_probability(tol))
    throw InvalidArgument("weights do not form a probability measure");
  return m;
}

Measure Measure::signed_measure(Vector weights) {
  return Measure(std::move(weights));
}

Measure Measure::uniform(std::size_t size) {
  if (size == 0) throw InvalidArgument("measure size must be >= 1");
  const auto n = static_cast<Eigen::Index>(size);
  return Measure(Vector::Constant(n, 1.0 / static_cast<double>(size)));
}

Measure Measure::delta(std::size_t size, std::size_t x) {
  if (x >= size) throw InvalidArgument("delta index out of range");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(size));
  v[static_cast<Eigen::Index>(x)] = 1.0;
  return Measure(std::move(v));
}

Measure Measure::normalised(Vector weights) {
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericalFailure("cannot normalise weights with total mass " +
                           std::to_string(total));
  weights /= total;
  return Measure(std::move(weights));
}

bool Measure::is_probability(double tol) const {
  if (weights_.size() == 0) return false;
  if (!weights_.allFinite()) return false;
  if (weights_.minCoeff() < -tol) return false;
  return std::abs(weights_.sum() - 1.0) <= tol;
}

double Measure::integrate(const Vector& phi) const {
  if (phi.size() != weights_.size())
    throw SizeMismatch("measure and function sizes differ");
  return weights_.dot(phi);
}

double Measure::variance(const Vector& phi) const {
  const double m = integrate(phi);
  return weights_.dot((phi.array() - m).square().matrix());
}

RateMatrix RateMatrix::from_off_diagonal(const Matrix& rates) {
  Matrix q = rates;
  for (Eigen::Index x = 0; x < q.rows(); ++x) {
    q(x, x) = 0.0;
    q(x, x) = -q.row(x).sum();
  }
  return RateMatrix(std::move(q));
}

double RateMatrix::max_row_sum_error() const {
  if (entries_.size() == 0) return 0.0;
  return entries_.rowwise().sum().cwiseAbs().maxCoeff();
}

double RateMatrix::min_off_diagonal() const {
  double m = 0.0;
  bool first = true;
  for (Eigen::Index x = 0; x < entries_.rows(); ++x)
    for (Eigen::Index y = 0; y < entries_.cols(); ++y) {
      if (x == y) continue;
      if (first || entries_(x, y) < m) m = entries_(x, y);
      first = false;
    }
  return m;
}

namespace {

std::vector<bool> reachable(const Matrix& m, Eigen::Index start, bool forward) {
  const Eigen::Index n = m.rows();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<Eigen::Index> stack{start};
  seen[static_cast<std::size_t>(start)] = true;
  while (!stack.empty()) {
    const Eigen::Index x = stack.back();
    stack.pop_back();
    for (Eigen::Index y = 0; y < n; ++y) {
      const double w = forward ? m(x, y) : m(y, x);
      if (y != x && w > 0.0 && !seen[static_cast<std::size_t>(y)]) {
        seen[static_cast<std::size_t>(y)] = true;
        stack.push_back(y);
      }
    }
  }
  return seen;
}

}  // namespace

bool RateMatrix::is_irreducible() const {
  if (entries_.rows() <= 1) return true;
  const auto fwd = reachable(entries_, 0, true);
  const auto bwd = reachable(entries_, 0, false);
  return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
         std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

double RateMatrix::max_exit_rate() const {
  if (entries_.size() == 0) return 0.0;
  return entries_.diagonal().cwiseAbs().maxCoeff();
}

double tv_distance(const Measure& mu1, const Measure& mu2) {
  if (mu1.size() != mu2.size()) throw SizeMismatch("tv_distance: size mismatch");
  return 0.5 * (mu1.weights() - mu2.weights()).cwiseAbs().sum();
}

double weighted_distance(const Measure& mu1, const Measure& mu2) {
  if (mu1.size() != mu2.size())
    throw SizeMismatch("weighted_distance: size mismatch");
  double total = 0.0;
  double weight = 0.5;
  for (std::size_t k = 0; k < mu1.size(); ++k) {
    total += weight * std::abs(mu1[k] - mu2[k]);
    weight *= 0.5;
  }
  return total;
}

}  // namespace moran

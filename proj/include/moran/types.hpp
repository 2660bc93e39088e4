#ifndef MORAN_TYPES_HPP
#define MORAN_TYPES_HPP

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace moran {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. Every failure raised by the library derives from Error so
// the CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class SizeMismatch : public Error {
 public:
  using Error::Error;
};

class NotAdditive : public Error {
 public:
  NotAdditive() : Error("selection kernel is not in additive form") {}
  using Error::Error;
};

class MuDependentLambda : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Centralised tolerances. `strict()` tightens the deterministic checks; the
/// statistical thresholds of the experiments are not affected.
struct Tolerances {
  double exact = 1e-12;      // algebraic identities, row sums, symmetry
  double flow = 1e-8;        // flow / propagator agreement
  double eigen = 1e-10;      // eigen-triplet residuals and normalisation
  double mass_drift = 1e-10; // per-step mass drift allowed in the ODE
  double negativity = 1e-9;  // tolerated negative weight before clipping

  static Tolerances defaults() { return {}; }
  static Tolerances strict() {
    Tolerances t;
    t.exact = 1e-13;
    t.flow = 1e-10;
    t.eigen = 1e-11;
    t.mass_drift = 1e-12;
    t.negativity = 1e-11;
    return t;
  }
};

enum class BoundaryPolicy { Reflect, AbsorbForbid };

std::string to_string(BoundaryPolicy policy);
BoundaryPolicy boundary_policy_from_string(const std::string& name);

struct TruncationInfo {
  std::string original = "countable";
  std::size_t retained = 0;
  BoundaryPolicy boundary_policy = BoundaryPolicy::AbsorbForbid;
};

/// The (possibly truncated) type space E, indexed 0..size-1 internally and
/// labelled 1..size in every export.
class StateSpace {
 public:
  explicit StateSpace(std::size_t size,
                      std::vector<std::string> labels = {},
                      std::optional<TruncationInfo> truncation = std::nullopt);

  std::size_t size() const { return size_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::string label(std::size_t x) const;
  const std::optional<TruncationInfo>& truncation() const {
    return truncation_;
  }

 private:
  std::size_t size_;
  std::vector<std::string> labels_;
  std::optional<TruncationInfo> truncation_;
};

/// A bounded function on E. The sup norm is computed once on construction.
class TestFunction {
 public:
  TestFunction() = default;
  explicit TestFunction(Vector values);

  static TestFunction constant(std::size_t size, double value);
  static TestFunction indicator(std::size_t size, std::size_t x);

  const Vector& values() const { return values_; }
  double operator()(std::size_t x) const { return values_[x]; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double sup_norm() const { return sup_norm_; }
  bool is_constant(double tol = 0.0) const;

 private:
  Vector values_;
  double sup_norm_ = 0.0;
};

/// Dense weight vector over E. Probability measures are checked on
/// construction through `probability`; `signed_measure` relaxes that for
/// differences such as m(eta) - mu.
class Measure {
 public:
  Measure() = default;

  static Measure probability(Vector weights, double tol = 1e-12);
  static Measure signed_measure(Vector weights);
  static Measure uniform(std::size_t size);
  static Measure delta(std::size_t size, std::size_t x);
  /// Rescale nonnegative weights to unit mass (no tolerance check).
  static Measure normalised(Vector weights);

  const Vector& weights() const { return weights_; }
  double operator[](std::size_t x) const { return weights_[x]; }
  std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }
  double mass() const { return weights_.sum(); }
  bool is_probability(double tol = 1e-12) const;

  double integrate(const Vector& phi) const;
  double integrate(const TestFunction& phi) const {
    return integrate(phi.values());
  }
  double variance(const Vector& phi) const;

 private:
  explicit Measure(Vector weights) : weights_(std::move(weights)) {}
  Vector weights_;
};

/// Generator matrix of a continuous-time chain (or a sub-Markov / conjugated
/// variant); row sums are checked by `is_conservative`.
class RateMatrix {
 public:
  RateMatrix() = default;
  explicit RateMatrix(Matrix entries) : entries_(std::move(entries)) {}

  /// Build from off-diagonal rates; the diagonal is set to minus the row sum.
  static RateMatrix from_off_diagonal(const Matrix& rates);

  const Matrix& entries() const { return entries_; }
  std::size_t size() const { return static_cast<std::size_t>(entries_.rows()); }
  double operator()(std::size_t x, std::size_t y) const {
    return entries_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }

  double max_row_sum_error() const;
  double min_off_diagonal() const;
  bool is_conservative(double tol = 1e-12) const {
    return max_row_sum_error() <= tol;
  }
  /// Strong connectivity of the digraph x -> y for entries(x, y) > 0.
  bool is_irreducible() const;
  /// Largest exit rate max_x |entries(x, x)|.
  double max_exit_rate() const;

 private:
  Matrix entries_;
};

double tv_distance(const Measure& mu1, const Measure& mu2);
/// Sum over k >= 1 of 2^-k |mu1(x_k) - mu2(x_k)|, x_k the k-th state in index
/// order.
double weighted_distance(const Measure& mu1, const Measure& mu2);

}  // namespace moran

#endif  // MORAN_TYPES_HPP

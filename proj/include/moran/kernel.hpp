#ifndef MORAN_KERNEL_HPP
#define MORAN_KERNEL_HPP

#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "moran/types.hpp"

namespace moran {

/// A map (mu, x) -> R, either constant in mu or supplied as a callback.
class SiteFunction {
 public:
  using Callback = std::function<Vector(const Measure&)>;

  SiteFunction() = default;
  static SiteFunction constant(Vector values);
  static SiteFunction zero(std::size_t size);
  static SiteFunction dynamic(std::size_t size, Callback fn);

  Vector operator()(const Measure& mu) const;
  bool mu_dependent() const { return static_cast<bool>(fn_); }
  std::size_t size() const { return size_; }
  /// Constant values; only valid when !mu_dependent().
  const Vector& values() const { return values_; }

 private:
  std::size_t size_ = 0;
  Vector values_;
  Callback fn_;
};

/// A map (mu, x, y) -> R, either constant in mu or supplied as a callback.
class PairFunction {
 public:
  using Callback = std::function<Matrix(const Measure&)>;

  PairFunction() = default;
  static PairFunction constant(Matrix values);
  static PairFunction zero(std::size_t size);
  static PairFunction dynamic(std::size_t size, Callback fn);

  Matrix operator()(const Measure& mu) const;
  bool mu_dependent() const { return static_cast<bool>(fn_); }
  std::size_t size() const { return size_; }
  bool is_zero() const { return !fn_ && values_.isZero(0.0); }

 private:
  std::size_t size_ = 0;
  Matrix values_;
  Callback fn_;
};

/// V(x, y) = sum_i death_i(x) birth_i(y) + symmetric(mu, x, y).
struct GeneralKernel {
  struct Component {
    Vector death;
    Vector birth;
  };
  std::vector<Component> components;
  PairFunction symmetric;
};

/// V_mu(x, y) = death(mu, x) + birth(mu, y) + symmetric(mu, x, y).
struct AdditiveKernel {
  SiteFunction death;
  SiteFunction birth;
  PairFunction symmetric;
};

class SelectionKernel {
 public:
  using Form = std::variant<GeneralKernel, AdditiveKernel>;

  SelectionKernel() = default;
  explicit SelectionKernel(Form form);

  static SelectionKernel none(std::size_t size);
  /// Decomposes a constant matrix with the row-indicator construction
  /// death_z = 1_{z}, birth_z = V(z, .).
  static SelectionKernel general_from_matrix(const Matrix& v);
  static SelectionKernel additive(Vector death, Vector birth,
                                  Matrix symmetric = Matrix());

  const Form& form() const { return form_; }
  bool is_additive() const {
    return std::holds_alternative<AdditiveKernel>(form_);
  }
  /// Throws NotAdditive for the general form.
  const AdditiveKernel& additive_form() const;
  const GeneralKernel* general_form() const {
    return std::get_if<GeneralKernel>(&form_);
  }

  std::size_t size() const { return size_; }
  bool mu_dependent() const;

  /// Full kernel V_mu(x, y).
  Matrix evaluate(const Measure& mu) const;
  /// V_mu - V^s_mu.
  Matrix non_symmetric(const Measure& mu) const;
  Matrix symmetric_part(const Measure& mu) const;
  std::string variant_name() const;

 private:
  Form form_;
  std::size_t size_ = 0;
};

}  // namespace moran

#endif  // MORAN_KERNEL_HPP

#ifndef MORAN_TESTS_SUPPORT_HPP
#define MORAN_TESTS_SUPPORT_HPP

// Reference computations used as oracles. They are deliberately naive and
// share no code with the library's solvers.

#include <cmath>
#include <vector>

#include "moran/model.hpp"
#include "moran/rng.hpp"

namespace oracle {

using moran::Matrix;
using moran::Vector;

/// e^A by scaling-and-squaring over a plain Taylor series.
inline Matrix expm_taylor(const Matrix& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.25) {
    scale *= 0.5;
    ++squarings;
  }
  const Matrix b = a * scale;
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Row vector mu e^{tA} by many small explicit Euler steps of RK4 type,
/// integrated from scratch for each call.
inline Vector rk4_row(const Matrix& a, const Vector& mu, double t, int steps) {
  Vector r = mu;
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    const Vector k1 = (r.transpose() * a).transpose();
    const Vector k2 = ((r + 0.5 * h * k1).transpose() * a).transpose();
    const Vector k3 = ((r + 0.5 * h * k2).transpose() * a).transpose();
    const Vector k4 = ((r + h * k3).transpose() * a).transpose();
    r += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return r;
}

inline double tv(const Vector& a, const Vector& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

inline Vector random_probability(std::size_t n, moran::Rng& rng) {
  Vector w(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.exponential(1.0);
  return w / w.sum();
}

/// Generator with off-diagonal rates uniform on [lo, hi].
inline Matrix random_generator(std::size_t n, moran::Rng& rng, double lo = 0.1, double hi = 1.0) {
  const auto k = static_cast<Eigen::Index>(n);
  Matrix q = Matrix::Zero(k, k);
  for (Eigen::Index x = 0; x < k; ++x)
    for (Eigen::Index y = 0; y < k; ++y)
      if (x != y) q(x, y) = lo + (hi - lo) * rng.uniform();
  for (Eigen::Index x = 0; x < k; ++x) q(x, x) = -q.row(x).sum();
  return q;
}

inline Vector random_vector(std::size_t n, moran::Rng& rng, double lo, double hi) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = lo + (hi - lo) * rng.uniform();
  return v;
}

inline Matrix random_symmetric(std::size_t n, moran::Rng& rng, double lo, double hi) {
  const auto k = static_cast<Eigen::Index>(n);
  Matrix s(k, k);
  for (Eigen::Index x = 0; x < k; ++x)
    for (Eigen::Index y = x; y < k; ++y) s(x, y) = s(y, x) = lo + (hi - lo) * rng.uniform();
  return s;
}

/// Random admissible additive model on `n` types.
inline moran::ModelSpec random_additive(std::size_t n, moran::Rng& rng, bool symmetric = true) {
  const Vector death = random_vector(n, rng, 0.0, 1.0);
  const Vector birth = random_vector(n, rng, 0.0, 1.0);
  const Matrix sym = symmetric ? random_symmetric(n, rng, 0.0, 0.5) : Matrix();
  return moran::make_model("random", moran::StateSpace(n),
                           moran::RateMatrix(random_generator(n, rng)),
                           moran::SelectionKernel::additive(death, birth, sym));
}

}  // namespace oracle

#endif  // MORAN_TESTS_SUPPORT_HPP

#include "moran/linalg.hpp"

#include <complex>

#include <unsupported/Eigen/MatrixFunctions>

namespace moran::linalg {

Matrix expm(const Matrix& a) {
  if (!a.allFinite()) throw NumericalFailure("expm: non-finite input matrix");
  Matrix e = a.exp();
  if (!e.allFinite()) throw NumericalFailure("expm: non-finite result");
  return e;
}

Matrix expm_eigen(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) throw NumericalFailure("expm_eigen: eigensolver failed");
  const Eigen::MatrixXcd v = es.eigenvectors();
  const Eigen::VectorXcd d = es.eigenvalues().array().exp();
  const Eigen::MatrixXcd r = v * d.asDiagonal() * v.inverse();
  Matrix e = r.real();
  if (!e.allFinite()) throw NumericalFailure("expm_eigen: non-finite result");
  return e;
}

Vector stationary_law(const Matrix& generator) {
  const Eigen::Index n = generator.rows();
  Matrix m = generator.transpose();
  m.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs[n - 1] = 1.0;
  Vector pi = m.fullPivLu().solve(rhs);
  if (!pi.allFinite()) throw NumericalFailure("stationary_law: singular system");
  return pi;
}

double simpson(const std::vector<double>& samples, double step) {
  const std::size_t n = samples.size();
  if (n == 1) return 0.0;
  if (n < 3 || n % 2 == 0)
    throw InvalidArgument("simpson: need an odd number (>= 3) of samples");
  double s = samples.front() + samples.back();
  for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * samples[i];
  return s * step / 3.0;
}

}  // namespace moran::linalg

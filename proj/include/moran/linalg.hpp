#ifndef MORAN_LINALG_HPP
#define MORAN_LINALG_HPP

#include <vector>

#include "moran/types.hpp"

namespace moran::linalg {

/// e^A by scaling-and-squaring with a degree-13 Pade approximant.
Matrix expm(const Matrix& a);
/// e^A through a complex eigendecomposition; only for diagonalisable A.
Matrix expm_eigen(const Matrix& a);

/// Stationary law pi L = 0, pi(1) = 1 of an irreducible conservative L.
Vector stationary_law(const Matrix& generator);

/// Composite Simpson rule on equally spaced samples (odd count >= 3).
double simpson(const std::vector<double>& samples, double step);

}  // namespace moran::linalg

#endif  // MORAN_LINALG_HPP

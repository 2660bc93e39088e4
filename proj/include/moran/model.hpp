#ifndef MORAN_MODEL_HPP
#define MORAN_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "moran/kernel.hpp"
#include "moran/types.hpp"

namespace moran {

/// Mutation generator Q plus selection kernel V on a common state space.
/// Treated as immutable once built.
struct ModelSpec {
  std::string name;
  StateSpace space{1};
  RateMatrix mutation;
  SelectionKernel selection;

  std::size_t size() const { return space.size(); }
};

ModelSpec make_model(std::string name, StateSpace space, RateMatrix mutation,
                     SelectionKernel selection);

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  double kernel_bound = 0.0;  // ||V|| over the evaluated measures
  std::size_t measures_evaluated = 0;
  bool irreducible = false;

  bool admissible() const { return violations.empty(); }
};

struct ValidationOptions {
  std::size_t random_measures = 16;
  std::uint64_t seed = 0x5eedULL;
  Tolerances tolerances{};
  /// Extra measures to include in the ||V|| certificate (e.g. visited ones).
  std::vector<Measure> extra_measures;
};

ValidationReport validate_model(const ModelSpec& spec,
                                const ValidationOptions& options = {});

/// D(x, y) = V_mu(x, y) - V_mu(y, x).
Matrix effective_drift(const ModelSpec& spec, const Measure& mu);

/// Lambda = V^b - V^d, checked to be mu-free on three random measures.
TestFunction lambda_of(const ModelSpec& spec, double tol = 1e-12);

/// Removes Sigma_mu(x, y) = min(Vd, Vb)(x) + min(Vd, Vb)(y) + V^s(x, y):
/// death' = (Vd - Vb)^+, birth' = (Vb - Vd)^+, symmetric' = 0.
ModelSpec sigma_reduce(const ModelSpec& spec);

/// Q_mu phi(x) = Q phi(x) + sum_y mu(y) V_mu(x, y) (phi(y) - phi(x)).
RateMatrix selection_generator(const ModelSpec& spec, const Measure& mu);
/// Same as selection_generator with V replaced by V - V^s.
RateMatrix reduced_selection_generator(const ModelSpec& spec,
                                       const Measure& mu);

/// Deterministic pseudo-random probability measures (flat Dirichlet).
std::vector<Measure> sample_measures(std::size_t size, std::size_t count,
                                     std::uint64_t seed);

}  // namespace moran

#endif  // MORAN_MODEL_HPP

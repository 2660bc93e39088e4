#ifndef MORAN_PARTICLE_HPP
#define MORAN_PARTICLE_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <vector>

#include "moran/model.hpp"
#include "moran/rng.hpp"

namespace moran {

/// An element eta of E_N: occupation counts summing to the population size.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<std::int64_t> counts);

  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::int64_t count(std::size_t x) const { return counts_[x]; }
  std::int64_t population() const { return population_; }
  std::size_t size() const { return counts_.size(); }

  /// One particle of type `from` becomes type `to`.
  void move(std::size_t from, std::size_t to);
  Measure empirical() const;
  double empirical_mean(const Vector& phi) const;

  bool operator==(const Configuration& other) const { return counts_ == other.counts_; }
  bool operator<(const Configuration& other) const { return counts_ < other.counts_; }

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t population_ = 0;
};

struct Transition {
  std::size_t from = 0;
  std::size_t to = 0;
  double rate = 0.0;
};

/// rate(eta -> eta - e_x + e_y) = eta(x) (Q(x, y) + eta(y)/N V_{m(eta)}(x, y)),
/// listing only positive rates with x != y and eta(x) > 0. Evaluates the
/// kernel from the spec on every call.
std::vector<Transition> enumerate_rates(const ModelSpec& spec,
                                        const Configuration& config);

/// Rate evaluation used by the simulator. For mu-independent kernels the
/// kernel matrix is evaluated once (the cached fast path); otherwise kernel
/// matrices are memoised per configuration (counts determine mu exactly),
/// behind a mutex and bounded by kMuCacheLimit entries.
class RateEvaluator {
 public:
  explicit RateEvaluator(const ModelSpec& spec, bool use_cache = true);

  /// Fills `out` and returns the total rate.
  double rates(const Configuration& config, std::vector<Transition>& out) const;
  const ModelSpec& spec() const { return *spec_; }
  bool cached() const { return cached_; }
  std::size_t mu_cache_size() const;
  /// Largest kernel entry over every measure evaluated so far (the constant
  /// kernel's maximum on the cached path).
  double visited_kernel_bound() const;

  static constexpr std::size_t kMuCacheLimit = 1 << 14;

 private:
  const ModelSpec* spec_;
  bool cached_ = false;
  bool use_mu_cache_ = false;
  Matrix q_;
  Matrix v_;
  mutable std::mutex mu_cache_mutex_;
  mutable std::map<std::vector<std::int64_t>, Matrix> mu_cache_;
  mutable double visited_bound_ = 0.0;
};

struct SimState {
  Configuration config;
  double time = 0.0;
  Rng rng{0};
  std::uint64_t event_count = 0;

  bool frozen() const { return time == std::numeric_limits<double>::infinity(); }
};

/// Each of the N particles drawn independently from mu0 (a multinomial draw).
SimState init_iid(const ModelSpec& spec, std::int64_t population,
                  const Measure& mu0, std::uint64_t seed);
void init_iid(SimState& state, std::size_t size, std::int64_t population,
              const Measure& mu0);

/// Exact jump: Exp(total rate) holding time, then a categorical event choice.
/// A state with zero total rate gets time = +infinity and is left unchanged.
/// Returns the transition that fired, if any.
const Transition* step(const RateEvaluator& rates, SimState& state,
                       std::vector<Transition>& scratch);
void step(const ModelSpec& spec, SimState& state);

struct TrajectoryRecord {
  std::vector<double> sample_times;
  std::vector<Measure> measures;
  struct Event {
    double time;
    std::size_t from;
    std::size_t to;
  };
  std::vector<Event> events;  // only filled when requested
  std::uint64_t event_count = 0;
  bool frozen = false;
  double kernel_bound_visited = 0.0;  // see RateEvaluator::visited_kernel_bound
};

class EventCapExceeded : public Error {
 public:
  using Error::Error;
};

struct SimulationOptions {
  std::uint64_t event_cap = 2'000'000'000ULL;
  bool log_events = false;
  bool use_cache = true;
  /// Called for every holding interval [t0, t1] with the configuration held
  /// on it (t1 is clipped at the horizon).
  std::function<void(double t0, double t1, const Configuration&)> on_interval;
  /// Called at each sample time with the configuration at that time.
  std::function<void(double t, const Configuration&)> on_sample;
};

TrajectoryRecord simulate(const ModelSpec& spec, std::int64_t population,
                          const Measure& mu0, double horizon,
                          const std::vector<double>& sample_times,
                          std::uint64_t seed,
                          const SimulationOptions& options = {});

/// Same dynamics run from a prepared state (already initialised).
TrajectoryRecord simulate_from(const RateEvaluator& rates, SimState& state,
                               double horizon,
                               const std::vector<double>& sample_times,
                               const SimulationOptions& options = {});

/// Runs the dynamics with labelled particles: when a type-x particle is to
/// change, one of the type-x slots is chosen uniformly. Returns the slot
/// types at the horizon.
std::vector<std::size_t> simulate_slots(const ModelSpec& spec,
                                        std::int64_t population,
                                        const Measure& mu0, double horizon,
                                        std::uint64_t seed);

class SimplexTooLarge : public Error {
 public:
  using Error::Error;
};

/// Full generator of the N-particle chain on the enumerated simplex E_N.
struct SimplexGenerator {
  std::vector<Configuration> states;
  std::map<std::vector<std::int64_t>, std::size_t> index;
  RateMatrix generator;

  std::size_t index_of(const Configuration& c) const { return index.at(c.counts()); }
};

std::uint64_t simplex_size(std::size_t types, std::int64_t population);
std::vector<Configuration> enumerate_simplex(std::size_t types, std::int64_t population);
SimplexGenerator master_generator(const ModelSpec& spec, std::int64_t population,
                                  std::size_t cap = 5000);
/// Law of the multinomial(N, mu0) initial configuration on the simplex.
Vector multinomial_law(const SimplexGenerator& gen, const Measure& mu0);

/// Additive kernel with the birth part forced to zero.
ModelSpec fleming_viot_mode(const ModelSpec& spec);

}  // namespace moran

#endif  // MORAN_PARTICLE_HPP

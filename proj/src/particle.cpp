#include "moran/particle.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace moran {

Configuration::Configuration(std::vector<std::int64_t> counts)
    : counts_(std::move(counts)) {
  for (auto c : counts_) {
    if (c < 0) throw InvalidArgument("configuration counts must be nonnegative");
    population_ += c;
  }
}

void Configuration::move(std::size_t from, std::size_t to) {
  assert(counts_[from] > 0);
  --counts_[from];
  ++counts_[to];
}

Measure Configuration::empirical() const {
  Vector w(static_cast<Eigen::Index>(counts_.size()));
  const double n = static_cast<double>(population_);
  for (std::size_t x = 0; x < counts_.size(); ++x)
    w[static_cast<Eigen::Index>(x)] = static_cast<double>(counts_[x]) / n;
  return Measure::signed_measure(std::move(w));
}

double Configuration::empirical_mean(const Vector& phi) const {
  double s = 0.0;
  for (std::size_t x = 0; x < counts_.size(); ++x)
    s += static_cast<double>(counts_[x]) * phi[static_cast<Eigen::Index>(x)];
  return s / static_cast<double>(population_);
}

namespace {

double fill_rates(const Matrix& q, const Matrix& v, const Configuration& config,
                  std::vector<Transition>& out) {
  out.clear();
  const std::size_t n = config.size();
  const double pop = static_cast<double>(config.population());
  double total = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    const std::int64_t cx = config.count(x);
    if (cx == 0) continue;
    const auto ix = static_cast<Eigen::Index>(x);
    for (std::size_t y = 0; y < n; ++y) {
      if (y == x) continue;
      const auto iy = static_cast<Eigen::Index>(y);
      const double r = static_cast<double>(cx) *
                       (q(ix, iy) + static_cast<double>(config.count(y)) / pop * v(ix, iy));
      if (r > 0.0) {
        out.push_back({x, y, r});
        total += r;
      }
    }
  }
  return total;
}

}  // namespace

std::vector<Transition> enumerate_rates(const ModelSpec& spec,
                                        const Configuration& config) {
  std::vector<Transition> out;
  const Matrix v = spec.selection.evaluate(config.empirical());
  fill_rates(spec.mutation.entries(), v, config, out);
  return out;
}

RateEvaluator::RateEvaluator(const ModelSpec& spec, bool use_cache)
    : spec_(&spec), q_(spec.mutation.entries()) {
  if (use_cache && !spec.selection.mu_dependent()) {
    cached_ = true;
    v_ = spec.selection.evaluate(Measure::uniform(spec.size()));
    visited_bound_ = v_.size() ? v_.maxCoeff() : 0.0;
  }
  use_mu_cache_ = use_cache && !cached_;
}

double RateEvaluator::visited_kernel_bound() const {
  std::lock_guard<std::mutex> lock(mu_cache_mutex_);
  return visited_bound_;
}

std::size_t RateEvaluator::mu_cache_size() const {
  std::lock_guard<std::mutex> lock(mu_cache_mutex_);
  return mu_cache_.size();
}

double RateEvaluator::rates(const Configuration& config,
                            std::vector<Transition>& out) const {
  if (cached_) return fill_rates(q_, v_, config, out);
  if (!use_mu_cache_) {
    const Matrix v = spec_->selection.evaluate(config.empirical());
    {
      std::lock_guard<std::mutex> lock(mu_cache_mutex_);
      visited_bound_ = std::max(visited_bound_, v.maxCoeff());
    }
    return fill_rates(q_, v, config, out);
  }
  {
    std::lock_guard<std::mutex> lock(mu_cache_mutex_);
    const auto it = mu_cache_.find(config.counts());
    if (it != mu_cache_.end()) return fill_rates(q_, it->second, config, out);
  }
  Matrix v = spec_->selection.evaluate(config.empirical());
  const double total = fill_rates(q_, v, config, out);
  std::lock_guard<std::mutex> lock(mu_cache_mutex_);
  visited_bound_ = std::max(visited_bound_, v.maxCoeff());
  if (mu_cache_.size() >= kMuCacheLimit) mu_cache_.clear();
  mu_cache_.emplace(config.counts(), std::move(v));
  return total;
}

void init_iid(SimState& state, std::size_t size, std::int64_t population,
              const Measure& mu0) {
  if (population <= 0) throw InvalidArgument("population N must be >= 1");
  if (mu0.size() != size) throw SizeMismatch("initial measure has wrong size");
  if (!mu0.is_probability(1e-9)) throw InvalidArgument("mu0 must be a probability measure");
  std::vector<std::int64_t> counts(size, 0);
  for (std::int64_t i = 0; i < population; ++i) {
    double u = state.rng.uniform();
    std::size_t x = 0;
    for (; x + 1 < size; ++x) {
      u -= mu0[x];
      if (u < 0.0) break;
    }
    while (mu0[x] <= 0.0 && x > 0) --x;  // rounding never lands on a null type
    ++counts[x];
  }
  state.config = Configuration(std::move(counts));
  state.time = 0.0;
  state.event_count = 0;
}

SimState init_iid(const ModelSpec& spec, std::int64_t population,
                  const Measure& mu0, std::uint64_t seed) {
  SimState state;
  state.rng = Rng(seed);
  init_iid(state, spec.size(), population, mu0);
  return state;
}

namespace {

const Transition& choose(const std::vector<Transition>& list, double total, Rng& rng) {
  double u = rng.uniform() * total;
  for (const auto& t : list) {
    u -= t.rate;
    if (u < 0.0) return t;
  }
  return list.back();
}

}  // namespace

const Transition* step(const RateEvaluator& rates, SimState& state,
                       std::vector<Transition>& scratch) {
  if (state.frozen()) return nullptr;
  const double total = rates.rates(state.config, scratch);
  if (!(total > 0.0)) {
    state.time = std::numeric_limits<double>::infinity();
    return nullptr;
  }
  state.time += state.rng.exponential(total);
  const Transition& t = choose(scratch, total, state.rng);
  state.config.move(t.from, t.to);
  ++state.event_count;
  return &t;
}

void step(const ModelSpec& spec, SimState& state) {
  RateEvaluator rates(spec);
  std::vector<Transition> scratch;
  step(rates, state, scratch);
}

TrajectoryRecord simulate_from(const RateEvaluator& rates, SimState& state,
                               double horizon,
                               const std::vector<double>& sample_times,
                               const SimulationOptions& options) {
  if (!(horizon >= 0.0)) throw InvalidArgument("horizon must be >= 0");
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < 0.0 || sample_times[i] > horizon)
      throw InvalidArgument("sample times must lie in [0, horizon]");
    if (i > 0 && sample_times[i] < sample_times[i - 1])
      throw InvalidArgument("sample times must be sorted");
  }
  TrajectoryRecord record;
  record.sample_times = sample_times;
  record.measures.reserve(sample_times.size());
  std::vector<Transition> scratch;
  std::size_t next = 0;
  const std::uint64_t start_events = state.event_count;
  for (;;) {
    const double total = rates.rates(state.config, scratch);
    double t_next = std::numeric_limits<double>::infinity();
    if (total > 0.0) t_next = state.time + state.rng.exponential(total);
    while (next < sample_times.size() && sample_times[next] < t_next) {
      record.measures.push_back(state.config.empirical());
      if (options.on_sample) options.on_sample(sample_times[next], state.config);
      ++next;
    }
    if (options.on_interval)
      options.on_interval(state.time, std::min(t_next, horizon), state.config);
    if (!(total > 0.0)) {
      record.frozen = true;
      state.time = std::numeric_limits<double>::infinity();
      break;
    }
    if (t_next > horizon) {
      state.time = horizon;
      break;
    }
    const Transition& t = choose(scratch, total, state.rng);
    state.config.move(t.from, t.to);
    state.time = t_next;
    ++state.event_count;
    if (options.log_events) record.events.push_back({t_next, t.from, t.to});
    if (state.event_count - start_events > options.event_cap)
      throw EventCapExceeded("event cap of " + std::to_string(options.event_cap) +
                             " exceeded before the horizon (mis-specified model?)");
  }
  // A sample exactly at the horizon is recorded above since t_next > horizon.
  record.event_count = state.event_count - start_events;
  record.kernel_bound_visited = rates.visited_kernel_bound();
  return record;
}

TrajectoryRecord simulate(const ModelSpec& spec, std::int64_t population,
                          const Measure& mu0, double horizon,
                          const std::vector<double>& sample_times,
                          std::uint64_t seed, const SimulationOptions& options) {
  SimState state = init_iid(spec, population, mu0, seed);
  RateEvaluator rates(spec, options.use_cache);
  return simulate_from(rates, state, horizon, sample_times, options);
}

std::vector<std::size_t> simulate_slots(const ModelSpec& spec,
                                        std::int64_t population,
                                        const Measure& mu0, double horizon,
                                        std::uint64_t seed) {
  if (population <= 0) throw InvalidArgument("population N must be >= 1");
  Rng rng(seed);
  const std::size_t k = spec.size();
  std::vector<std::size_t> slots(static_cast<std::size_t>(population));
  std::vector<std::int64_t> counts(k, 0);
  for (auto& s : slots) {
    double u = rng.uniform();
    std::size_t x = 0;
    for (; x + 1 < k; ++x) {
      u -= mu0[x];
      if (u < 0.0) break;
    }
    s = x;
    ++counts[x];
  }
  SimState state;
  state.config = Configuration(counts);
  state.rng = rng;
  RateEvaluator rates(spec);
  std::vector<Transition> scratch;
  for (;;) {
    const double total = rates.rates(state.config, scratch);
    if (!(total > 0.0)) break;
    state.time += state.rng.exponential(total);
    if (state.time > horizon) break;
    const Transition& t = choose(scratch, total, state.rng);
    // uniform choice among the slots currently of type t.from
    std::int64_t target = static_cast<std::int64_t>(
        state.rng.below(static_cast<std::uint64_t>(state.config.count(t.from))));
    for (auto& s : slots) {
      if (s == t.from && target-- == 0) {
        s = t.to;
        break;
      }
    }
    state.config.move(t.from, t.to);
  }
  return slots;
}

std::uint64_t simplex_size(std::size_t types, std::int64_t population) {
  // C(N + K - 1, K - 1), saturating.
  const std::uint64_t n = static_cast<std::uint64_t>(population) + types - 1;
  const std::uint64_t k = types - 1;
  long double c = 1.0L;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (c > 1e18L) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(c)));
}

std::vector<Configuration> enumerate_simplex(std::size_t types, std::int64_t population) {
  std::vector<Configuration> out;
  std::vector<std::int64_t> counts(types, 0);
  std::function<void(std::size_t, std::int64_t)> rec = [&](std::size_t x, std::int64_t left) {
    if (x + 1 == types) {
      counts[x] = left;
      out.emplace_back(counts);
      return;
    }
    for (std::int64_t c = left; c >= 0; --c) {
      counts[x] = c;
      rec(x + 1, left - c);
    }
  };
  rec(0, population);
  return out;
}

SimplexGenerator master_generator(const ModelSpec& spec, std::int64_t population,
                                  std::size_t cap) {
  if (population <= 0) throw InvalidArgument("population N must be >= 1");
  const std::uint64_t size = simplex_size(spec.size(), population);
  if (size > cap)
    throw SimplexTooLarge("simplex has " + std::to_string(size) +
                          " states, above the cap of " + std::to_string(cap));
  SimplexGenerator gen;
  gen.states = enumerate_simplex(spec.size(), population);
  for (std::size_t i = 0; i < gen.states.size(); ++i)
    gen.index.emplace(gen.states[i].counts(), i);
  const auto n = static_cast<Eigen::Index>(gen.states.size());
  Matrix a = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < gen.states.size(); ++i) {
    for (const auto& t : enumerate_rates(spec, gen.states[i])) {
      Configuration next = gen.states[i];
      next.move(t.from, t.to);
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(gen.index_of(next))) += t.rate;
    }
  }
  gen.generator = RateMatrix::from_off_diagonal(a);
  return gen;
}

Vector multinomial_law(const SimplexGenerator& gen, const Measure& mu0) {
  Vector p(static_cast<Eigen::Index>(gen.states.size()));
  for (std::size_t i = 0; i < gen.states.size(); ++i) {
    const auto& c = gen.states[i];
    double logp = std::lgamma(static_cast<double>(c.population()) + 1.0);
    bool zero = false;
    for (std::size_t x = 0; x < c.size(); ++x) {
      const double k = static_cast<double>(c.count(x));
      logp -= std::lgamma(k + 1.0);
      if (c.count(x) > 0) {
        if (mu0[x] <= 0.0) zero = true;
        else logp += k * std::log(mu0[x]);
      }
    }
    p[static_cast<Eigen::Index>(i)] = zero ? 0.0 : std::exp(logp);
  }
  return p;
}

ModelSpec fleming_viot_mode(const ModelSpec& spec) {
  const auto& a = spec.selection.additive_form();
  bool birth_zero = !a.birth.mu_dependent() && a.birth.values().isZero(0.0);
  if (birth_zero) return spec;
  AdditiveKernel fv{a.death, SiteFunction::zero(spec.size()), a.symmetric};
  ModelSpec out = spec;
  out.name = spec.name + "+fleming-viot";
  out.selection = SelectionKernel(std::move(fv));
  return out;
}

}  // namespace moran

#include <doctest.h>

#include <cmath>
#include <map>

#include "moran/particle.hpp"
#include "moran/stats.hpp"
#include "moran/zoo.hpp"
#include "support.hpp"

using namespace moran;

namespace {

// Upper chi-square quantile (Wilson-Hilferty), z the standard normal quantile.
double chi2_quantile(double dof, double z) {
  const double a = 2.0 / (9.0 * dof);
  return dof * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

ModelSpec three_type_model(std::uint64_t seed) {
  Rng rng(seed);
  return oracle::random_additive(3, rng);
}

}  // namespace

TEST_SUITE("init_iid") {
  TEST_CASE("point mass initial law") {
    const auto spec = two_allelic(1, 1, 0, 1);
    const SimState s = init_iid(spec, 17, Measure::delta(2, 0), 3);
    CHECK(s.config.counts() == std::vector<std::int64_t>{17, 0});
    CHECK(s.time == 0.0);
  }

  TEST_CASE("zero population is rejected") {
    CHECK_THROWS_AS(init_iid(two_allelic(1, 1, 0, 1), 0, Measure::uniform(2), 1), InvalidArgument);
  }

  TEST_CASE("multinomial mean and variance") {
    const auto spec = three_type_model(1);
    const Measure mu0 = Measure::probability((Vector(3) << 0.2, 0.5, 0.3).finished());
    const std::int64_t n = 40;
    const std::size_t reps = 10000;
    std::vector<std::vector<double>> frac(3);
    for (std::size_t r = 0; r < reps; ++r) {
      const SimState s = init_iid(spec, n, mu0, derive_seed(9, 0, r));
      for (std::size_t x = 0; x < 3; ++x) frac[x].push_back(static_cast<double>(s.config.count(x)) / n);
    }
    for (std::size_t x = 0; x < 3; ++x) {
      const double p = mu0[x];
      const double var = p * (1 - p) / n;
      CHECK(std::abs(stats::mean(frac[x]) - p) <= 3.0 * std::sqrt(var / reps));
      // Standard error of a sample variance for near-Gaussian data.
      CHECK(std::abs(stats::variance(frac[x]) - var) <= 3.0 * var * std::sqrt(2.0 / (reps - 1)) * 1.1);
    }
  }
}

TEST_SUITE("enumerate_rates") {
  TEST_CASE("hand-evaluated two-allelic rates") {
    const auto rates = enumerate_rates(two_allelic(1, 1, 0, 1), Configuration({2, 1}));
    REQUIRE(rates.size() == 2);
    std::map<std::pair<std::size_t, std::size_t>, double> by;
    for (const auto& t : rates) by[{t.from, t.to}] = t.rate;
    CHECK(by.at({0, 1}) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(by.at({1, 0}) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("all mass on one type without selection leaves only mutation exits") {
    Rng rng(2);
    const Matrix q = oracle::random_generator(4, rng);
    const auto spec = make_model("m", StateSpace(4), RateMatrix(q), SelectionKernel::none(4));
    const auto rates = enumerate_rates(spec, Configuration({0, 9, 0, 0}));
    double total = 0.0;
    for (const auto& t : rates) {
      CHECK(t.from == 1);
      CHECK(t.rate > 0.0);
      total += t.rate;
    }
    CHECK(total == doctest::Approx(9.0 * -q(1, 1)));
  }

  TEST_CASE("doubling the kernel doubles the selection part") {
    Rng rng(3);
    const Vector vd = oracle::random_vector(3, rng, 0, 1), vb = oracle::random_vector(3, rng, 0, 1);
    const Matrix q = oracle::random_generator(3, rng);
    const auto one = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel::additive(vd, vb));
    const auto two = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel::additive(2 * vd, 2 * vb));
    const auto none = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel::none(3));
    const Configuration c({3, 2, 4});
    auto as_map = [&](const ModelSpec& s) {
      std::map<std::pair<std::size_t, std::size_t>, double> m;
      for (const auto& t : enumerate_rates(s, c)) m[{t.from, t.to}] = t.rate;
      return m;
    };
    const auto r1 = as_map(one), r2 = as_map(two), r0 = as_map(none);
    for (const auto& [k, v] : r1) CHECK(r2.at(k) - r0.at(k) == doctest::Approx(2.0 * (v - r0.at(k))));
  }

  TEST_CASE("cached evaluator matches the per-event path") {
    const auto spec = three_type_model(4);
    const RateEvaluator fast(spec, true), slow(spec, false);
    CHECK(fast.cached());
    CHECK_FALSE(slow.cached());
    Rng rng(5);
    std::vector<Transition> a, b;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::int64_t> counts(3);
      for (auto& c : counts) c = static_cast<std::int64_t>(rng.below(6));
      counts[0] += 1;
      const Configuration c(counts);
      const double ta = fast.rates(c, a), tb = slow.rates(c, b);
      CHECK(ta == doctest::Approx(tb).epsilon(1e-14));
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].rate == doctest::Approx(b[i].rate).epsilon(1e-14));
    }
  }

  TEST_CASE("mu-dependent kernels are memoised per configuration") {
    const auto base = three_type_model(4);
    int calls = 0;
    AdditiveKernel k;
    k.death = SiteFunction::dynamic(3, [&calls](const Measure& mu) {
      ++calls;
      return Vector((Vector(3) << mu[0], 0.5, 1.0 - mu[2]).finished());
    });
    k.birth = SiteFunction::constant(Vector::Zero(3));
    k.symmetric = PairFunction::dynamic(3, [](const Measure& mu) {
      return Matrix(Matrix::Constant(3, 3, mu[1]));
    });
    const auto spec = make_model("mu-dependent", StateSpace(3), base.mutation,
                                 SelectionKernel(SelectionKernel::Form(k)));
    const RateEvaluator memo(spec, true), plain(spec, false);
    CHECK_FALSE(memo.cached());
    std::vector<Transition> a, b;
    const Configuration c(std::vector<std::int64_t>{1, 2, 3});
    calls = 0;
    const double t1 = memo.rates(c, a);
    const int after_first = calls;
    const double t2 = memo.rates(c, a);
    CHECK(calls == after_first);
    CHECK(t1 == t2);
    CHECK(memo.mu_cache_size() == 1);
    CHECK(plain.rates(c, b) == t1);
    plain.rates(c, b);
    CHECK(plain.mu_cache_size() == 0);

    // Same trajectory with and without memoisation.
    const auto r1 = simulate(spec, 6, Measure::uniform(3), 2.0, {1.0, 2.0}, 9);
    SimulationOptions opt;
    opt.use_cache = false;
    const auto r2 = simulate(spec, 6, Measure::uniform(3), 2.0, {1.0, 2.0}, 9, opt);
    CHECK(r1.event_count == r2.event_count);
    CHECK(r1.measures.back().weights() == r2.measures.back().weights());
    CHECK(r1.kernel_bound_visited > 0.0);
    CHECK(r1.kernel_bound_visited == r2.kernel_bound_visited);
    const Matrix v = spec.selection.evaluate(c.empirical());
    CHECK(memo.visited_kernel_bound() == v.maxCoeff());
  }
}

TEST_SUITE("step") {
  TEST_CASE("population is conserved over a million events") {
    const auto spec = three_type_model(6);
    SimState s = init_iid(spec, 25, Measure::uniform(3), 7);
    const RateEvaluator rates(spec);
    std::vector<Transition> scratch;
    double last = 0.0;
    bool ok = true;
    for (int i = 0; i < 1000000; ++i) {
      step(rates, s, scratch);
      std::int64_t sum = 0;
      for (auto c : s.config.counts()) sum += c;
      ok = ok && sum == 25 && s.time >= last;
      last = s.time;
    }
    CHECK(ok);
    CHECK(s.event_count == 1000000);
  }

  TEST_CASE("no mutation and no selection freezes the chain") {
    const auto spec = make_model("m", StateSpace(2), RateMatrix(Matrix::Zero(2, 2)), SelectionKernel::none(2));
    SimState s = init_iid(spec, 5, Measure::uniform(2), 1);
    const auto before = s.config;
    step(spec, s);
    CHECK(s.frozen());
    CHECK(s.config == before);
    const auto rec = simulate(spec, 5, Measure::uniform(2), 3.0, {0.0, 3.0}, 1);
    CHECK(rec.event_count == 0);
    CHECK(rec.frozen);
  }

  TEST_CASE("one-step jump distribution matches the rate list") {
    const auto spec = three_type_model(8);
    const Configuration start({3, 1, 2});
    const auto rates = enumerate_rates(spec, start);
    double total = 0.0;
    for (const auto& t : rates) total += t.rate;
    std::map<std::pair<std::size_t, std::size_t>, double> observed;
    const std::size_t reps = 20000;
    const RateEvaluator ev(spec);
    std::vector<Transition> scratch;
    std::vector<double> holding;
    for (std::size_t r = 0; r < reps; ++r) {
      SimState s;
      s.config = start;
      s.rng = Rng(derive_seed(10, 0, r));
      const Transition* t = step(ev, s, scratch);
      REQUIRE(t != nullptr);
      observed[{t->from, t->to}] += 1.0;
      holding.push_back(s.time);
    }
    double chi2 = 0.0;
    for (const auto& t : rates) {
      const double expected = reps * t.rate / total;
      const double o = observed[{t.from, t.to}];
      chi2 += (o - expected) * (o - expected) / expected;
    }
    CHECK(chi2 < chi2_quantile(static_cast<double>(rates.size() - 1), 2.326));
    // Holding time is Exp(total): mean 1/total.
    CHECK(std::abs(stats::mean(holding) - 1.0 / total) <= 4.0 / total / std::sqrt(double(reps)));
  }
}

TEST_SUITE("simulate") {
  TEST_CASE("single particle without selection follows e^{tQ}") {
    Rng rng(12);
    const Matrix q = oracle::random_generator(3, rng, 0.2, 1.5);
    const auto spec = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel::none(3));
    const double t = 0.8;
    const Vector law = oracle::expm_taylor(q * t).row(0).transpose();
    Vector hist = Vector::Zero(3);
    const std::size_t reps = 100000;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto rec = simulate(spec, 1, Measure::delta(3, 0), t, {t}, derive_seed(13, 1, r));
      hist += rec.measures.back().weights();
    }
    CHECK(oracle::tv(hist / double(reps), law) <= 0.02);
  }

  TEST_CASE("same seed gives an identical record") {
    const auto spec = three_type_model(14);
    SimulationOptions opt;
    opt.log_events = true;
    const auto a = simulate(spec, 30, Measure::uniform(3), 2.0, {0.5, 1.0, 2.0}, 99, opt);
    const auto b = simulate(spec, 30, Measure::uniform(3), 2.0, {0.5, 1.0, 2.0}, 99, opt);
    REQUIRE(a.events.size() == b.events.size());
    CHECK(a.event_count == b.event_count);
    for (std::size_t i = 0; i < a.events.size(); ++i) {
      CHECK(a.events[i].time == b.events[i].time);
      CHECK(a.events[i].from == b.events[i].from);
    }
    for (std::size_t j = 0; j < 3; ++j) CHECK(a.measures[j].weights() == b.measures[j].weights());
  }

  TEST_CASE("event cap is enforced") {
    SimulationOptions opt;
    opt.event_cap = 10;
    CHECK_THROWS_AS(simulate(three_type_model(15), 50, Measure::uniform(3), 10.0, {10.0}, 1, opt),
                    EventCapExceeded);
  }

  TEST_CASE("sample times outside the horizon are rejected") {
    CHECK_THROWS_AS(simulate(three_type_model(15), 5, Measure::uniform(3), 1.0, {2.0}, 1), InvalidArgument);
  }

  TEST_CASE("one record per sample time, each an empirical measure") {
    const auto rec = simulate(three_type_model(16), 7, Measure::uniform(3), 1.0, {0.0, 0.25, 1.0}, 4);
    REQUIRE(rec.measures.size() == 3);
    for (const auto& m : rec.measures) {
      CHECK(m.is_probability());
      for (std::size_t x = 0; x < 3; ++x) CHECK(std::abs(m[x] * 7 - std::round(m[x] * 7)) <= 1e-12);
    }
  }

  TEST_CASE("three-type law at N=2 matches the master equation") {
    const auto spec = three_type_model(17);
    const std::int64_t n = 2;
    const double t = 0.7;
    const auto gen = master_generator(spec, n);
    const Vector p0 = multinomial_law(gen, Measure::uniform(3));
    const Vector law = (p0.transpose() * oracle::expm_taylor(gen.generator.entries() * t)).transpose();
    Vector hist = Vector::Zero(law.size());
    const std::size_t reps = 40000;
    SimulationOptions opt;
    opt.on_sample = [&](double, const Configuration& c) { hist[gen.index_of(c)] += 1.0; };
    for (std::size_t r = 0; r < reps; ++r) simulate(spec, n, Measure::uniform(3), t, {t}, derive_seed(18, 2, r), opt);
    CHECK(oracle::tv(hist / double(reps), law) <= 0.02);
  }
}

TEST_SUITE("master_generator") {
  TEST_CASE("simplex size and enumeration") {
    CHECK(simplex_size(2, 3) == 4);
    CHECK(simplex_size(3, 3) == 10);
    CHECK(enumerate_simplex(3, 4).size() == 15);
    const auto gen = master_generator(two_allelic(1, 1, 0, 1), 3);
    CHECK(gen.states.size() == 4);
    CHECK(gen.generator.max_row_sum_error() <= 1e-12);
  }

  TEST_CASE("entries follow the transition-rate formula") {
    const auto spec = three_type_model(19);
    const std::int64_t n = 4;
    const auto gen = master_generator(spec, n);
    const Matrix q = spec.mutation.entries();
    for (const auto& eta : gen.states) {
      const Matrix v = spec.selection.evaluate(eta.empirical());
      for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t y = 0; y < 3; ++y) {
          if (x == y || eta.count(x) == 0) continue;
          Configuration to = eta;
          to.move(x, y);
          const double expected = double(eta.count(x)) * (q(x, y) + double(eta.count(y)) / n * v(x, y));
          CHECK(gen.generator(gen.index_of(eta), gen.index_of(to)) == doctest::Approx(expected).epsilon(1e-14));
        }
    }
  }

  TEST_CASE("cap on the simplex size") {
    CHECK_THROWS_AS(master_generator(three_type_model(20), 200, 5000), SimplexTooLarge);
  }
}

TEST_SUITE("fleming_viot_mode") {
  TEST_CASE("already in Fleming-Viot form is unchanged") {
    const auto spec = two_allelic(1, 2, 0, 1.5);
    const auto fv = fleming_viot_mode(spec);
    CHECK(fv.selection.evaluate(Measure::uniform(2)) == spec.selection.evaluate(Measure::uniform(2)));
  }

  TEST_CASE("two-allelic with p = 0: reduced and FV forms coincide") {
    const auto spec = two_allelic(1, 1, 0, 1);
    const Measure mu = Measure::uniform(2);
    CHECK(sigma_reduce(spec).selection.evaluate(mu) == fleming_viot_mode(spec).selection.evaluate(mu));
  }

  TEST_CASE("birth part is dropped and death part kept") {
    const auto spec = three_type_model(21);
    const auto fv = fleming_viot_mode(spec);
    CHECK(fv.selection.additive_form().birth.values().isZero(0.0));
    CHECK(fv.selection.additive_form().death.values() == spec.selection.additive_form().death.values());
    CHECK_THROWS_AS(fleming_viot_mode(make_model("g", StateSpace(2), RateMatrix(Matrix::Zero(2, 2)),
                                                 SelectionKernel::general_from_matrix(Matrix::Ones(2, 2)))),
                    NotAdditive);
  }
}

TEST_SUITE("properties") {
  TEST_CASE("exchangeable slots have equal marginal laws") {
    const auto spec = three_type_model(22);
    const std::int64_t n = 6;
    const std::size_t reps = 20000;
    Vector first = Vector::Zero(3), last = Vector::Zero(3);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto slots = simulate_slots(spec, n, Measure::uniform(3), 0.6, derive_seed(23, 3, r));
      first[static_cast<Eigen::Index>(slots.front())] += 1.0;
      last[static_cast<Eigen::Index>(slots.back())] += 1.0;
    }
    for (Eigen::Index x = 0; x < 3; ++x) {
      const double p = (first[x] + last[x]) / (2.0 * reps);
      const double se = std::sqrt(2.0 * p * (1 - p) / reps);
      CHECK(std::abs(first[x] - last[x]) / reps <= 4.0 * se);
    }
  }

  TEST_CASE("compensated empirical mean is a martingale") {
    const auto spec = three_type_model(24);
    const Vector psi = (Vector(3) << 1.0, -0.5, 2.0).finished();
    const std::int64_t n = 10;
    const double t = 1.0;
    const std::size_t reps = 4000;
    std::vector<double> m;
    for (std::size_t r = 0; r < reps; ++r) {
      double integral = 0.0;
      double start = 0.0, end = 0.0;
      SimulationOptions opt;
      opt.on_interval = [&](double t0, double t1, const Configuration& c) {
        const Measure mu = c.empirical();
        const Matrix qm = selection_generator(spec, mu).entries();
        integral += (t1 - t0) * mu.integrate(Vector(qm * psi));
      };
      opt.on_sample = [&](double s, const Configuration& c) {
        (s == 0.0 ? start : end) = c.empirical_mean(psi);
      };
      simulate(spec, n, Measure::uniform(3), t, {0.0, t}, derive_seed(25, 4, r), opt);
      m.push_back(end - start - integral);
    }
    CHECK(std::abs(stats::mean(m)) <= 3.0 * std::sqrt(stats::variance(m) / reps));
  }

  TEST_CASE("carre-du-champ identity on the enumerated simplex") {
    Rng rng(26);
    for (int trial = 0; trial < 3; ++trial) {
      const auto spec = oracle::random_additive(3, rng);
      const Vector phi = oracle::random_vector(3, rng, -1, 1);
      const std::int64_t n = 3;
      const auto gen = master_generator(spec, n);
      const Matrix g = gen.generator.entries();
      Vector f(g.rows());
      for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = gen.states[i].empirical_mean(phi);
      const Vector lhs = g * f.cwiseProduct(f) - 2.0 * f.cwiseProduct(g * f);
      for (Eigen::Index i = 0; i < f.size(); ++i) {
        const Measure mu = gen.states[i].empirical();
        const Matrix l = selection_generator(spec, mu).entries();
        const Vector gamma = l * phi.cwiseProduct(phi) - 2.0 * phi.cwiseProduct(l * phi);
        CHECK(std::abs(lhs[i] - mu.integrate(gamma) / n) <= 1e-12);
      }
    }
  }
}

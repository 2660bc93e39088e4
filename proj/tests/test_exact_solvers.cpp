#include <doctest.h>

#include <cmath>

#include "moran/linalg.hpp"
#include "moran/solvers.hpp"
#include "moran/zoo.hpp"
#include "support.hpp"

using namespace moran;

namespace {

const double kLambdaTwoAllelic = (-3.0 + std::sqrt(5.0)) / 2.0;

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(a + (b - a) * double(i) / double(n - 1));
  return t;
}

double sup_tv(const FlowTrajectory& a, const FlowTrajectory& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.measures.size(); ++i) m = std::max(m, tv_distance(a.measures[i], b.measures[i]));
  return m;
}

ModelSpec with_selection(const ModelSpec& s, SelectionKernel k) {
  return make_model(s.name, s.space, s.mutation, std::move(k));
}

// Same model with every death rate raised by beta: Lambda -> Lambda - beta.
ModelSpec shifted(const ModelSpec& s, double beta) {
  const auto& a = s.selection.additive_form();
  return with_selection(s, SelectionKernel::additive(a.death.values().array() + beta, a.birth.values(),
                                                     a.symmetric(Measure::uniform(s.size()))));
}

Vector null_left(const Matrix& g) {
  // pi g = 0 with pi(1) = 1: replace one equation by the normalisation.
  Matrix a = g.transpose();
  a.row(0).setOnes();
  Vector rhs = Vector::Zero(g.rows());
  rhs[0] = 1.0;
  return a.fullPivLu().solve(rhs);
}

}  // namespace

TEST_SUITE("matrix exponential") {
  TEST_CASE("Pade, eigendecomposition and Taylor agree on random matrices") {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 2 + trial % 5;
      Matrix a = oracle::random_generator(n, rng, 0.0, 2.0);
      a.diagonal() += oracle::random_vector(n, rng, -1.0, 0.5);
      a *= 1.0 + trial;
      const Matrix ref = oracle::expm_taylor(a);
      const double scale = ref.cwiseAbs().maxCoeff();
      CHECK((linalg::expm(a) - ref).cwiseAbs().maxCoeff() <= 1e-10 * scale);
      CHECK((linalg::expm_eigen(a) - ref).cwiseAbs().maxCoeff() <= 1e-8 * scale);
    }
  }

  TEST_CASE("non-finite input is a numerical failure") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 1) = std::nan("");
    CHECK_THROWS_AS(linalg::expm(a), NumericalFailure);
  }

  TEST_CASE("Simpson rule is exact for cubics") {
    std::vector<double> f;
    for (int i = 0; i <= 4; ++i) {
      const double x = 0.5 * i;
      f.push_back(x * x * x - x);
    }
    CHECK(linalg::simpson(f, 0.5) == doctest::Approx(4.0 - 2.0).epsilon(1e-14));
  }
}

TEST_SUITE("fk_semigroup") {
  TEST_CASE("no potential preserves constants") {
    Rng rng(2);
    const auto spec = make_model("m", StateSpace(4), RateMatrix(oracle::random_generator(4, rng)),
                                 SelectionKernel::additive(Vector::Ones(4), Vector::Ones(4)));
    const Vector v = fk_semigroup(spec, 3.0, TestFunction::constant(4, 1.0)).values();
    CHECK((v.array() - 1.0).abs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("constant potential factors out") {
    Rng rng(3);
    const Matrix q = oracle::random_generator(3, rng);
    const double c = -0.7, t = 1.3;
    const auto spec = make_model("m", StateSpace(3), RateMatrix(q),
                                 SelectionKernel::additive(Vector::Constant(3, -c), Vector::Zero(3)));
    const TestFunction phi((Vector(3) << 1.0, -2.0, 0.5).finished());
    const Vector expected = std::exp(c * t) * (oracle::expm_taylor(q * t) * phi.values());
    CHECK((fk_semigroup(spec, t, phi).values() - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("two-allelic mass decays at the dominant eigenvalue") {
    const auto spec = two_allelic(1, 1, 0, 1);
    const TestFunction one = TestFunction::constant(2, 1.0);
    const double t1 = 20.0, t2 = 30.0;
    const double m1 = fk_semigroup(spec, t1, one).values().sum();
    const double m2 = fk_semigroup(spec, t2, one).values().sum();
    CHECK((std::log(m2) - std::log(m1)) / (t2 - t1) == doctest::Approx(kLambdaTwoAllelic).epsilon(1e-9));
    const Matrix qt = (Matrix(2, 2) << -1, 1, 1, -2).finished();
    CHECK((feynman_kac_generator(spec) - qt).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("negative time is rejected") {
    CHECK_THROWS_AS(fk_semigroup(two_allelic(1, 1, 0, 1), -1.0, TestFunction::constant(2, 1)), InvalidArgument);
  }
}

TEST_SUITE("normalized_flow") {
  TEST_CASE("no potential gives the linear flow") {
    Rng rng(4);
    const Matrix q = oracle::random_generator(3, rng);
    const auto spec = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel::none(3));
    const auto mu0 = Measure::probability(oracle::random_probability(3, rng));
    const auto flow = normalized_flow(spec, mu0, {0.0, 0.5, 2.0});
    CHECK(flow.method == FlowTrajectory::Method::Semigroup);
    for (double t : {0.0, 0.5, 2.0}) {
      const Vector expected = (mu0.weights().transpose() * oracle::expm_taylor(q * t)).transpose();
      CHECK(oracle::tv(flow.at(t).weights(), expected) <= 1e-12);
    }
  }

  TEST_CASE("two-allelic flow converges to the golden-ratio QSD") {
    const auto flow = normalized_flow(two_allelic(1, 1, 0, 1), Measure::delta(2, 1), {60.0});
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    CHECK(flow.measures.back()[0] == doctest::Approx(g).epsilon(1e-10));
    CHECK(flow.measures.back()[1] == doctest::Approx(1.0 - g).epsilon(1e-10));
  }

  TEST_CASE("shift invariance") {
    Rng rng(5);
    const auto spec = oracle::random_additive(4, rng);
    const auto mu0 = Measure::probability(oracle::random_probability(4, rng));
    const auto times = linspace(0, 10, 11);
    CHECK(sup_tv(normalized_flow(spec, mu0, times), normalized_flow(shifted(spec, 3.5), mu0, times)) <= 1e-12);
  }

  TEST_CASE("propagation equation for nested times") {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
      const auto spec = oracle::random_additive(4, rng);
      const auto mu0 = Measure::probability(oracle::random_probability(4, rng));
      const double t = 0.3 + rng.uniform(), horizon = t + 2.0 * rng.uniform();
      const auto full = normalized_flow(spec, mu0, {t, horizon});
      const auto restart = normalized_flow(spec, full.at(t), {horizon - t});
      CHECK(tv_distance(full.at(horizon), restart.measures.back()) <= 1e-9);
      for (const auto& m : full.measures) CHECK(m.is_probability(1e-10));
    }
  }

  TEST_CASE("node lookup") {
    const auto flow = normalized_flow(two_allelic(1, 1, 0, 1), Measure::uniform(2), {0.0, 1.0});
    CHECK(flow.node_of(1.0) == 1);
    CHECK_THROWS_AS(flow.at(0.5), InvalidArgument);
  }
}

TEST_SUITE("mean_field_ode") {
  TEST_CASE("purely symmetric selection leaves the linear flow") {
    Rng rng(7);
    const Matrix q = oracle::random_generator(3, rng);
    const auto spec = make_model("m", StateSpace(3), RateMatrix(q),
                                 SelectionKernel::additive(Vector::Zero(3), Vector::Zero(3),
                                                           oracle::random_symmetric(3, rng, 0, 2)));
    const auto mu0 = Measure::probability(oracle::random_probability(3, rng));
    const auto flow = mean_field_ode(spec, mu0, {1.0, 3.0});
    CHECK(flow.method == FlowTrajectory::Method::Ode);
    for (double t : {1.0, 3.0}) {
      const Vector expected = (mu0.weights().transpose() * oracle::expm_taylor(q * t)).transpose();
      CHECK(oracle::tv(flow.at(t).weights(), expected) <= 1e-10);
    }
  }

  TEST_CASE("additive specs agree with the normalised flow on [0, 5]") {
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
      const auto spec = oracle::random_additive(2 + trial, rng);
      const auto mu0 = Measure::probability(oracle::random_probability(spec.size(), rng));
      const auto times = linspace(0, 5, 51);
      const auto ode = mean_field_ode(spec, mu0, times);
      CHECK(sup_tv(ode, normalized_flow(spec, mu0, times)) <= 1e-6);
      CHECK(ode.error_estimate <= 1e-8);
      CHECK(ode.cumulative_mass_drift <= 1e-8);
      CHECK(ode.step > 0.0);
    }
  }

  TEST_CASE("decompositions with the same antisymmetrisation give the same flow") {
    Rng rng(9);
    const auto base = oracle::random_additive(4, rng);
    const Matrix v = base.selection.evaluate(Measure::uniform(4));
    const Matrix s = oracle::random_symmetric(4, rng, 0, 2);
    const auto g1 = with_selection(base, SelectionKernel::general_from_matrix(v));
    const auto g2 = with_selection(base, SelectionKernel::general_from_matrix(v + s));
    const auto mu0 = Measure::uniform(4);
    const auto times = linspace(0, 4, 9);
    CHECK(sup_tv(mean_field_ode(g1, mu0, times), mean_field_ode(g2, mu0, times)) <= 1e-10);
    CHECK(sup_tv(mean_field_ode(g1, mu0, times), mean_field_ode(base, mu0, times)) <= 1e-10);
  }

  TEST_CASE("right-hand side preserves mass") {
    Rng rng(10);
    const auto spec = oracle::random_additive(5, rng);
    const Vector g = oracle::random_probability(5, rng);
    CHECK(std::abs(mean_field_rhs(spec, g).sum()) <= 1e-14);
  }

  TEST_CASE("mu-dependent general kernel stays on the simplex") {
    Rng rng(11);
    const Matrix q = oracle::random_generator(3, rng);
    GeneralKernel gk;
    gk.components.push_back({oracle::random_vector(3, rng, 0, 1), oracle::random_vector(3, rng, 0, 1)});
    gk.symmetric = PairFunction::dynamic(3, [](const Measure& mu) {
      return Matrix(mu.weights() * mu.weights().transpose());
    });
    const auto spec = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel(gk));
    const auto flow = mean_field_ode(spec, Measure::uniform(3), linspace(0, 3, 4));
    for (const auto& m : flow.measures) CHECK(m.is_probability(1e-10));
  }
}

TEST_SUITE("inhomogeneous_propagator") {
  TEST_CASE("identity at s = t and e^{(t-s)Q} without selection") {
    Rng rng(12);
    const Matrix q = oracle::random_generator(3, rng);
    const auto spec = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel::none(3));
    const auto flow = mean_field_ode(spec, Measure::uniform(3), linspace(0, 2, 5));
    CHECK((inhomogeneous_propagator(spec, 0.5, 0.5, flow) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    const Matrix p = inhomogeneous_propagator(spec, 0.5, 1.5, flow);
    CHECK((p - oracle::expm_taylor(q)).cwiseAbs().maxCoeff() <= 1e-9);
  }

  TEST_CASE("row-stochastic, transports the flow, and composes") {
    Rng rng(13);
    const auto spec = oracle::random_additive(3, rng);
    const auto times = linspace(0, 3, 31);
    const auto flow = mean_field_ode(spec, Measure::uniform(3), times);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> stu = {0.1 * (1 + rng.below(29)), 0.1 * (1 + rng.below(29)), 0.1 * (1 + rng.below(29))};
      std::sort(stu.begin(), stu.end());
      const double s = std::round(stu[0] * 10) / 10, u = std::round(stu[1] * 10) / 10, t = std::round(stu[2] * 10) / 10;
      const Matrix pst = inhomogeneous_propagator(spec, s, t, flow);
      CHECK((pst.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-8);
      CHECK(pst.minCoeff() >= -1e-12);
      const Vector moved = (flow.at(s).weights().transpose() * pst).transpose();
      CHECK(oracle::tv(moved, flow.at(t).weights()) <= 1e-7);
      const Matrix comp = inhomogeneous_propagator(spec, s, u, flow) * inhomogeneous_propagator(spec, u, t, flow);
      CHECK((comp - pst).cwiseAbs().maxCoeff() <= 1e-7);
    }
  }

  TEST_CASE("flow must cover the interval") {
    const auto spec = two_allelic(1, 1, 0, 1);
    const auto flow = mean_field_ode(spec, Measure::uniform(2), {0.0, 1.0});
    CHECK_THROWS_AS(inhomogeneous_propagator(spec, 0.0, 2.0, flow), InvalidArgument);
    CHECK_THROWS_AS(inhomogeneous_propagator(spec, 1.0, 0.5, flow), InvalidArgument);
  }
}

TEST_SUITE("eigen_triplet") {
  TEST_CASE("no potential: lambda = 0, h = 1, stationary law of Q") {
    Rng rng(14);
    const Matrix q = oracle::random_generator(4, rng);
    const auto spec = make_model("m", StateSpace(4), RateMatrix(q), SelectionKernel::none(4));
    const auto trip = eigen_triplet(spec);
    CHECK(std::abs(trip.lambda) <= 1e-12);
    CHECK((trip.h.values().array() - 1.0).abs().maxCoeff() <= 1e-10);
    CHECK(oracle::tv(trip.mu_inf.weights(), null_left(q)) <= 1e-12);
  }

  TEST_CASE("two-allelic closed form") {
    const auto trip = eigen_triplet(two_allelic(1, 1, 0, 1));
    CHECK(trip.lambda == doctest::Approx(kLambdaTwoAllelic).epsilon(1e-13));
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    CHECK(trip.mu_inf[0] == doctest::Approx(g).epsilon(1e-12));
    CHECK(trip.power_lambda == doctest::Approx(trip.lambda).epsilon(1e-9));
    CHECK(trip.spectral_gap == doctest::Approx(std::sqrt(5.0)).epsilon(1e-9));
  }

  TEST_CASE("counterexample chain: interior rows vanish for h(n) = e^{-n}") {
    const auto c = counterexample_bd(1.0, 2.0, B1Mode::Paper, 20);
    const Matrix a = feynman_kac_generator(c.spec);
    Vector h(20);
    for (int n = 0; n < 20; ++n) h[n] = std::exp(-(n + 1.0));
    const double lambda = (std::exp(-1.0) - 1.0) + 2.0 * (std::exp(1.0) - 1.0);
    const Vector r = a * h - lambda * h;
    for (int n = 1; n < 19; ++n) CHECK(std::abs(r[n]) <= 1e-12);
  }

  TEST_CASE("triplet invariants on random models") {
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
      const auto spec = oracle::random_additive(2 + trial % 6, rng);
      const auto trip = eigen_triplet(spec);
      const Matrix a = feynman_kac_generator(spec);
      CHECK(trip.mu_inf.is_probability(1e-12));
      CHECK(trip.mu_inf.integrate(trip.h) == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(trip.h.values().minCoeff() > 0.0);
      CHECK((trip.mu_inf.weights().transpose() * a - trip.lambda * trip.mu_inf.weights().transpose())
                .cwiseAbs().sum() <= 1e-10);
      CHECK((a * trip.h.values() - trip.lambda * trip.h.values()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(trip.left_residual <= 1e-10);
      CHECK(trip.right_residual <= 1e-10);
      if (lambda_of(spec).values().maxCoeff() <= 0.0) CHECK(trip.lambda <= 1e-14);
      // Dominance: every eigenvalue of A has real part at most lambda.
      const Eigen::EigenSolver<Matrix> es(a);
      CHECK(es.eigenvalues().real().maxCoeff() <= trip.lambda + 1e-10);
    }
  }

  TEST_CASE("reducible mutation generator is rejected") {
    const Matrix q = (Matrix(2, 2) << -1, 1, 0, 0).finished();
    const auto spec = make_model("m", StateSpace(2), RateMatrix(q),
                                 SelectionKernel::additive(Vector::Zero(2), Vector::Zero(2)));
    CHECK_THROWS_AS(eigen_triplet(spec), InvalidArgument);
  }

  TEST_CASE("degenerate dominant eigenvalue is reported") {
    CHECK_THROWS_AS(eigen_triplet_of(Matrix::Identity(2, 2)), NotSimple);
  }
}

TEST_SUITE("doob_transform") {
  TEST_CASE("no potential leaves Q unchanged") {
    Rng rng(16);
    const Matrix q = oracle::random_generator(3, rng);
    const auto spec = make_model("m", StateSpace(3), RateMatrix(q), SelectionKernel::none(3));
    CHECK((doob_transform(spec, eigen_triplet(spec)).entries() - q).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("conservative, with stationary law mu_inf h") {
    Rng rng(17);
    for (const auto& spec : {two_allelic(1, 1, 0, 1), oracle::random_additive(5, rng)}) {
      const auto trip = eigen_triplet(spec);
      const RateMatrix qh = doob_transform(spec, trip);
      CHECK(qh.max_row_sum_error() <= 1e-10);
      CHECK(qh.min_off_diagonal() >= 0.0);
      const Vector expected = trip.mu_inf.weights().cwiseProduct(trip.h.values());
      CHECK(oracle::tv(null_left(qh.entries()), expected / expected.sum()) <= 1e-9);
    }
  }

  TEST_CASE("nonpositive h is rejected") {
    const auto spec = two_allelic(1, 1, 0, 1);
    auto trip = eigen_triplet(spec);
    trip.h = TestFunction((Vector(2) << 1.0, 0.0).finished());
    CHECK_THROWS_AS(doob_transform(spec, trip), InvalidArgument);
  }
}

TEST_SUITE("w_operator") {
  TEST_CASE("identity at t = T and unit mass") {
    Rng rng(18);
    const auto spec = oracle::random_additive(3, rng);
    const auto flow = normalized_flow(spec, Measure::uniform(3), {0.0, 1.0, 2.0});
    const TestFunction phi((Vector(3) << 0.3, -1.0, 2.0).finished());
    CHECK((w_operator(spec, flow, 2.0, 2.0, phi).values() - phi.values()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(flow.at(1.0).integrate(w_operator(spec, flow, 1.0, 2.0, TestFunction::constant(3, 1.0))) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("propagation: mu_t(W_{t,T} phi) = mu_T(phi)") {
    Rng rng(19);
    for (int trial = 0; trial < 5; ++trial) {
      const auto spec = oracle::random_additive(4, rng);
      const auto times = linspace(0, 3, 7);
      const auto flow = normalized_flow(spec, Measure::probability(oracle::random_probability(4, rng)), times);
      const TestFunction phi(oracle::random_vector(4, rng, -1, 1));
      for (double t : times) {
        const double lhs = flow.at(t).integrate(w_operator(spec, flow, t, 3.0, phi));
        CHECK(std::abs(lhs - flow.at(3.0).integrate(phi)) <= 1e-9);
      }
    }
  }

  TEST_CASE("log mu_t(P_{T-t} 1) equals the integral of mu_s(Lambda)") {
    Rng rng(20);
    const auto spec = oracle::random_additive(3, rng);
    const Vector lambda = lambda_of(spec).values();
    const auto mu0 = Measure::probability(oracle::random_probability(3, rng));
    const double t = 0.5, horizon = 2.5;
    const int n = 400;  // Simpson intervals
    std::vector<double> grid;
    for (int i = 0; i <= n; ++i) grid.push_back(t + (horizon - t) * i / n);
    const auto flow = normalized_flow(spec, mu0, grid);
    double integral = 0.0;
    const double h = (horizon - t) / n;
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      integral += w * flow.measures[i].integrate(lambda);
    }
    integral *= h / 3.0;
    CHECK(std::abs(log_mass(spec, flow.at(t), horizon - t) - integral) <= 1e-8);
  }

  TEST_CASE("shift invariance of W") {
    Rng rng(21);
    const auto spec = oracle::random_additive(3, rng);
    const auto other = shifted(spec, 2.0);
    const auto times = linspace(0, 2, 3);
    const auto f1 = normalized_flow(spec, Measure::uniform(3), times);
    const auto f2 = normalized_flow(other, Measure::uniform(3), times);
    const TestFunction phi((Vector(3) << 1, 2, 3).finished());
    CHECK((w_operator(spec, f1, 1.0, 2.0, phi).values() - w_operator(other, f2, 1.0, 2.0, phi).values())
              .cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(eigen_triplet(other).lambda == doctest::Approx(eigen_triplet(spec).lambda - 2.0).epsilon(1e-12));
    CHECK(oracle::tv(eigen_triplet(other).mu_inf.weights(), eigen_triplet(spec).mu_inf.weights()) <= 1e-12);
  }

  TEST_CASE("t after T is rejected") {
    const auto spec = two_allelic(1, 1, 0, 1);
    const auto flow = normalized_flow(spec, Measure::uniform(2), {0.0, 1.0});
    CHECK_THROWS_AS(w_operator(spec, flow, 1.0, 0.0, TestFunction::constant(2, 1)), InvalidArgument);
  }
}

TEST_SUITE("ergodicity") {
  TEST_CASE("two-allelic flow and unnormalised semigroup decay exponentially") {
    const auto d = ergodicity_check(two_allelic(1, 1, 0, 1));
    CHECK(d.confirmed);
    CHECK(d.measures == 10);
    CHECK(d.normalised_rate > 0.0);
    CHECK(d.unnormalised_rate == doctest::Approx(std::sqrt(5.0)).epsilon(0.05));
  }

  TEST_CASE("random additive models") {
    Rng rng(22);
    for (int trial = 0; trial < 3; ++trial) CHECK(ergodicity_check(oracle::random_additive(4, rng)).confirmed);
  }
}

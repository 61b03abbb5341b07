#include <cmath>

#include "doctest.h"
#include "retstat/error.hpp"
#include "retstat/maps.hpp"

using namespace retstat;

TEST_CASE("lsv evaluation and derivative at documented points") {
  const auto T = lsv_map(0.999999999);
  CHECK(T.evaluate(0.25) == doctest::Approx(0.375).epsilon(1e-8));
  CHECK(T.derivative(0.25) == doctest::Approx(2.0).epsilon(1e-8));
  for (double a : {0.1, 0.5, 0.9}) {
    const auto S = lsv_map(a);
    CHECK(S.evaluate(0.75) == 0.5);
    CHECK(S.evaluate(0.0) == 0.0);
    CHECK(S.evaluate(0.5 - 1e-12) > 1.0 - 1e-9);
    CHECK(S.branch_count() == 2);
    CHECK(S.singular_set() == std::vector<double>{0.0, 0.5, 1.0});
  }
  CHECK_THROWS_AS(lsv_map(1.0), InvalidParameter);
  CHECK_THROWS_AS(lsv_map(0.0), InvalidParameter);
}

TEST_CASE("lsv endpoint convention sends 1/2 to the fixed point 1") {
  const auto T = lsv_map(0.5);
  CHECK(T.evaluate(0.5) == 1.0);
  CHECK(T.evaluate(1.0) == 1.0);
  const auto o = orbit(T, 0.75, 2);
  CHECK(o.points == std::vector<double>{0.75, 0.5, 1.0});
}

TEST_CASE("simple derivatives") {
  CHECK(doubling_map().derivative(0.3) == 2.0);
  CHECK(logistic_map(4.0).derivative(0.5) == 0.0);
  CHECK(tent_map().derivative(0.7) == -2.0);
}

TEST_CASE("exact dyadic and rational orbits") {
  const auto D = doubling_map();
  const auto o = orbit(D, 0.2, 4);
  REQUIRE(o.length() == 4);
  CHECK(o.points[1] == doctest::Approx(0.4));
  CHECK(o.points[2] == doctest::Approx(0.8));
  CHECK(o.points[3] == doctest::Approx(0.6));
  CHECK(o.points[4] == doctest::Approx(0.2));
  CHECK(orbit(D, 0.125, 3).points == std::vector<double>{0.125, 0.25, 0.5, 0.0});
  const auto t = orbit(tent_map(), 0.4, 2);
  CHECK(t.points[1] == doctest::Approx(0.8));
  CHECK(t.points[2] == doctest::Approx(0.4));
  const auto L = logistic_map(4.0);
  CHECK(orbit(L, 0.75, 3).points == std::vector<double>{0.75, 0.75, 0.75, 0.75});
}

TEST_CASE("orbit points equal repeated evaluation exactly") {
  for (const auto& m : {doubling_map(), tent_map(), logistic_map(3.9), lsv_map(0.5)}) {
    const auto o = orbit(m, 0.3141592653589793, 50);
    double x = o.start;
    for (std::size_t k = 0; k <= 50; ++k) {
      CHECK(o.points[k] == x);
      x = m.evaluate(x);
    }
  }
}

TEST_CASE("branch monotonicity matches the declared orientation") {
  CounterRng rng(1, 0);
  for (const auto& m : {doubling_map(), tent_map(), logistic_map(4.0), lsv_map(0.5),
                        piecewise_linear_markov_map()}) {
    for (std::size_t b = 0; b < m.branch_count(); ++b) {
      const auto& br = m.branch(b);
      for (int i = 0; i < 1000; ++i) {
        double x = rng.uniform(br.domain.lo, br.domain.hi);
        double y = rng.uniform(br.domain.lo, br.domain.hi);
        if (x == y || !br.domain.contains(x) || !br.domain.contains(y)) continue;
        if (x > y) std::swap(x, y);
        const double d = m.evaluate(y) - m.evaluate(x);
        if (d != 0.0) CHECK((d > 0 ? 1 : -1) == br.orientation);
      }
    }
  }
}

TEST_CASE("derivatives agree with central differences") {
  CounterRng rng(2, 0);
  const double h = 1e-7;
  for (const auto& m : {doubling_map(), tent_map(), logistic_map(4.0), lsv_map(0.5)}) {
    for (std::size_t b = 0; b < m.branch_count(); ++b) {
      const auto& br = m.branch(b);
      for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(br.domain.lo + 1e-5, br.domain.hi - 1e-5);
        const double fd = (br.value(x + h) - br.value(x - h)) / (2 * h);
        const double d = m.derivative(x);
        CHECK(std::fabs(d - fd) <= 1e-6 * (1 + std::fabs(d)));
      }
    }
  }
}

TEST_CASE("builtins by name and map-spec grammar") {
  const double a[] = {0.5};
  CHECK(builtin("lsv_alpha", a).branch_count() == 2);
  const auto d = builtin("doubling", {});
  CHECK(d.branch_count() == 2);
  CHECK(d.branch(0).domain == Interval::half_open(0.0, 0.5));
  CHECK(d.lossy());
  CHECK(parse_map_spec("logistic(4.0)").label() == "logistic(4)");
  CHECK_FALSE(parse_map_spec("logistic(4.0)").lossy());
  CHECK(parse_map_spec(" lsv_alpha( 0.25 ) ").evaluate(0.75) == 0.5);
  CHECK_THROWS_AS(parse_map_spec("henon(1.4)"), UnknownMap);
  CHECK_THROWS_AS(parse_map_spec("logistic(5)"), InvalidParameter);
  CHECK_THROWS_AS(parse_map_spec("logistic"), InvalidParameter);
  CHECK_THROWS_AS(parse_map_spec("logistic(abc)"), InvalidParameter);
}

TEST_CASE("critical orbit of the full logistic map") {
  const auto L = logistic_map(4.0);
  CHECK(L.critical_set() == std::vector<double>{0.5});
  const auto orb = finite_critical_orbit(L);
  REQUIRE(orb);
  CHECK(*orb == std::vector<double>{0.0, 0.5, 1.0});
  CHECK_FALSE(finite_critical_orbit(logistic_map(3.7)));
}

TEST_CASE("custom piecewise-linear rows") {
  const LinearPiece good[] = {{0.0, 0.5, 2.0, 0.0}, {0.5, 1.0, -2.0, 2.0}};
  const auto m = piecewise_linear_map(good, "custom");
  CHECK(m.evaluate(0.75) == 0.5);
  CHECK(m.lossy());
  const LinearPiece gap[] = {{0.0, 0.4, 2.0, 0.0}, {0.5, 1.0, 2.0, -1.0}};
  CHECK_THROWS_AS(piecewise_linear_map(gap), InvalidParameter);
  const LinearPiece outside[] = {{0.0, 1.0, 2.0, 0.0}};
  CHECK_THROWS_AS(piecewise_linear_map(outside), InvalidParameter);
  const double rows[] = {0.0, 0.5, 2.0, 0.0, 0.5, 1.0, 2.0, -1.0};
  CHECK(builtin("piecewise_linear_markov", rows).evaluate(0.75) == 0.5);
  const auto pm = piecewise_linear_markov_map();
  CHECK(pm.evaluate(0.125) == 0.5);
  CHECK(pm.evaluate(0.375) == 0.25);
}

TEST_CASE("points outside every branch are rejected") {
  CHECK_THROWS_AS(doubling_map().evaluate(1.5), InvalidParameter);
  CHECK_THROWS_AS(doubling_map().evaluate(std::nan("")), InvalidParameter);
  // A map whose branches leave 1/2 uncovered.
  std::vector<Branch> b{
      {Interval::half_open(0.0, 0.5), [](double x) { return 2 * x; }, [](double) { return 2.0; }, 1},
      {Interval::left_open(0.5, 1.0), [](double x) { return 2 * x - 1; }, [](double) { return 2.0; }, 1},
  };
  const PiecewiseMap gap("gap", b, {0.0, 0.5, 1.0});
  CHECK_THROWS_AS(gap.evaluate(0.5), PointOnSingularSet);
  CHECK_THROWS_AS(orbit(gap, 0.25, 3), OrbitHitsSingularSet);
}

TEST_CASE("typical orbits of lossy maps do not collapse") {
  const auto D = doubling_map();
  TypicalOrbit walk(D, 0.3, CounterRng(9, 0));
  double sum = 0.0;
  const int n = 200000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    const double x = walk.step();
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    sum += x;
    zeros += x == 0.0;
  }
  CHECK(zeros == 0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  // Non-lossy maps follow plain evaluation.
  const auto L = logistic_map(3.9);
  TypicalOrbit lw(L, 0.3, CounterRng(9, 0));
  double x = 0.3;
  for (int i = 0; i < 100; ++i) {
    x = L.evaluate(x);
    CHECK(lw.step() == x);
  }
}

#include <doctest.h>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <algorithm>
#include <random>
#include <vector>

#include "pkgee/distributions.hpp"

using namespace pkgee;

TEST_CASE("incomplete beta against boost") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ua(0.05, 200.0), ux(0.0, 1.0);
  for (int i = 0; i < 5000; ++i) {
    const double a = ua(rng), b = i % 3 == 0 ? 0.5 : ua(rng), x = ux(rng);
    const double want = boost::math::ibeta(a, b, x);
    const double got = dist::incomplete_beta(a, b, x);
    // The log-gamma prefactor costs a few ulp of a ~1e3 exponent far out in the tails.
    CHECK(std::abs(got - want) <= 5e-12 * std::max(want, 1e-300) + 1e-300);
  }
  CHECK(dist::incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(dist::incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("t tail: W = 2 on 10 d.f.") {
  const double p = dist::student_t_two_sided(2.0, 10.0);
  CHECK(p == doctest::Approx(0.0733880347707404).epsilon(1e-13));
  const boost::math::students_t t10(10.0);
  CHECK(std::abs(p - 2.0 * boost::math::cdf(boost::math::complement(t10, 2.0))) <= 1e-15);
}

TEST_CASE("t tail: estimate -0.87, S.E. 0.036 on 7.2 d.f.") {
  const double w = -0.87 / 0.036;
  const double p = dist::student_t_two_sided(w, 7.2);
  const boost::math::students_t t(7.2);
  const double want = 2.0 * boost::math::cdf(t, w);
  CHECK(std::abs(p - want) <= 1e-12 * want);
  // 3.62e-8 printed; the two-figure inputs alone move p by a few percent.
  CHECK(std::abs(p / 3.62e-8 - 1.0) <= 0.05);
}

// Tail tolerances are 5e-12 relative: the log-gamma prefactor loses a few ulp
// of an exponent that reaches ~1e3 for large d.f.
TEST_CASE("t tail against boost on random inputs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(0.5, 500.0), uw(-40.0, 40.0);
  for (int i = 0; i < 3000; ++i) {
    const double d = ud(rng), w = uw(rng);
    const boost::math::students_t t(d);
    const double want = 2.0 * boost::math::cdf(boost::math::complement(t, std::abs(w)));
    CHECK(std::abs(dist::student_t_two_sided(w, d) - want) <= 5e-12 * want + 1e-300);
    CHECK(std::abs(dist::student_t_cdf(w, d) - boost::math::cdf(t, w)) <= 1e-12);
  }
  CHECK(dist::student_t_two_sided(0.0, 3.0) == 1.0);
}

TEST_CASE("F tail against boost") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ud(0.5, 300.0), uf(0.0, 30.0);
  for (int i = 0; i < 3000; ++i) {
    const double d1 = 1 + i % 4, d2 = ud(rng), f = uf(rng);
    const boost::math::fisher_f fd(d1, d2);
    const double want = boost::math::cdf(boost::math::complement(fd, f));
    CHECK(std::abs(dist::f_upper_tail(f, d1, d2) - want) <= 5e-12 * want + 1e-300);
  }
  CHECK(dist::f_upper_tail(0.0, 2.0, 5.0) == 1.0);
}

TEST_CASE("F(1, d) is the square of t(d)") {
  for (double d : {2.5, 7.2, 30.0, 400.0}) {
    for (double w : {0.1, 1.0, 2.0, 5.0}) {
      CHECK(std::abs(dist::f_upper_tail(w * w, 1.0, d) - dist::student_t_two_sided(w, d)) <= 1e-14);
    }
  }
}

TEST_CASE("argument checks") {
  CHECK_THROWS(dist::student_t_two_sided(1.0, 0.0));
  CHECK_THROWS(dist::f_upper_tail(1.0, 0.0, 2.0));
  CHECK_THROWS(dist::incomplete_beta(-1.0, 1.0, 0.5));
  CHECK(std::isnan(dist::student_t_two_sided(std::nan(""), 3.0)));
}

TEST_CASE("two-sided p-values of t draws are uniform") {
  std::mt19937_64 rng(8);
  for (double d : {3.0, 7.2, 60.0}) {
    std::student_t_distribution<double> t(d);
    std::vector<double> p(20000);
    for (auto& x : p) x = dist::student_t_two_sided(t(rng), d);
    std::sort(p.begin(), p.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      ks = std::max({ks, p[i] - double(i) / p.size(), double(i + 1) / p.size() - p[i]});
    }
    CHECK(ks <= 1.63 / std::sqrt(double(p.size())));  // 1% KS critical value
  }
}

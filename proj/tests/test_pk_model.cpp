#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pkgee/errors.hpp"
#include "pkgee/pk_model.hpp"

using namespace pkgee;

namespace {

const PkParams kTypical{3.72, 1.38, -1.89, -0.35};
const InfusionSpec kInf{1400.0, 0.5};
const std::vector<double> kGrid = {0.1, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 4.5};

PkParams random_params(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  return {kTypical.log_vd + u(rng), kTypical.log_kel + u(rng), kTypical.log_k12 + u(rng),
          kTypical.log_k21 + u(rng)};
}

}  // namespace

TEST_CASE("hybrid rates: k12 = 0 gives the two one-compartment rates") {
  const auto r = hybrid_rate_constants(2.0, 0.0, 3.0);
  CHECK(r.a == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(r.b == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("hybrid rates: Vieta identities on random draws") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_params(rng, 3.0);
    const double kel = std::exp(p.log_kel), k12 = std::exp(p.log_k12), k21 = std::exp(p.log_k21);
    const auto r = hybrid_rate_constants(kel, k12, k21);
    REQUIRE(r.a >= r.b);
    REQUIRE(r.b > 0.0);
    CHECK(oracle::rel_err(r.a + r.b, kel + k12 + k21) <= 1e-12);
    CHECK(oracle::rel_err(r.a * r.b, kel * k21) <= 1e-12);
  }
}

TEST_CASE("hybrid rates at the study intercepts match an extended-precision quadratic") {
  const double kel = std::exp(1.38), k12 = std::exp(-1.89), k21 = std::exp(-0.35);
  const auto r = hybrid_rate_constants(kel, k12, k21);
  const auto [a, b] = oracle::quadratic_roots(kel, k12, k21);
  CHECK(oracle::rel_err(r.a, static_cast<double>(a)) <= 1e-14);
  CHECK(oracle::rel_err(r.b, static_cast<double>(b)) <= 1e-13);
}

TEST_CASE("hybrid rates: invalid and degenerate inputs") {
  CHECK_THROWS_AS(hybrid_rate_constants(-1.0, 1.0, 1.0), Error);
  CHECK_THROWS_AS(hybrid_rate_constants(1.0, 1.0, std::nan("")), Error);
  // kel = k21 with k12 = 0 is a double root.
  try {
    hybrid_rate_constants(1.5, 0.0, 1.5);
    FAIL("expected DegenerateRoots");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateRoots);
  }
}

TEST_CASE("concentration is zero at t = 0 and log_concentration rejects it") {
  CHECK(concentration(kTypical, kInf, 0.0) == 0.0);
  try {
    log_concentration(kTypical, kInf, 0.0);
    FAIL("expected NonPositiveConcentration");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonPositiveConcentration);
  }
}

TEST_CASE("long infusion approaches K0 / (V_d K_el)") {
  const double b = hybrid_rate_constants(std::exp(kTypical.log_kel), std::exp(kTypical.log_k12),
                                         std::exp(kTypical.log_k21)).b;
  const double t = 1000.0 / b;
  const InfusionSpec long_inf{1400.0 * t / 0.5, t};  // same rate, infusion still running
  const double want = long_inf.rate() / (std::exp(kTypical.log_vd) * std::exp(kTypical.log_kel));
  CHECK(oracle::rel_err(concentration(kTypical, long_inf, t), want) <= 1e-9);
  CHECK(std::abs(log_concentration(kTypical, long_inf, t) -
                 (std::log(long_inf.rate()) - kTypical.log_vd - kTypical.log_kel)) <= 1e-9);
}

TEST_CASE("closed form matches RK4 integration of the compartment ODEs") {
  SUBCASE("study intercepts") {
    const auto ode = oracle::rk4_concentrations(kTypical, kInf, kGrid);
    for (std::size_t j = 0; j < kGrid.size(); ++j) {
      CHECK(oracle::rel_err(concentration(kTypical, kInf, kGrid[j]), ode[j]) <= 1e-6);
    }
    CHECK(std::abs(log_concentration(kTypical, kInf, 1.0) - std::log(ode[3])) <= 1e-6);
  }
  SUBCASE("random draws within +-3 of the intercepts") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20; ++i) {
      const auto p = random_params(rng, 3.0);
      const auto ode = oracle::rk4_concentrations(p, kInf, kGrid, 1e-4);
      for (std::size_t j = 0; j < kGrid.size(); ++j) {
        CHECK(oracle::rel_err(concentration(p, kInf, kGrid[j]), ode[j]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("exp(log_concentration) == concentration") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ut(0.01, 6.0);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_params(rng, 2.0);
    const double t = ut(rng);
    CHECK(oracle::rel_err(std::exp(log_concentration(p, kInf, t)), concentration(p, kInf, t)) <= 1e-14);
  }
}

TEST_CASE("the two branches agree at the end of the infusion") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_params(rng, 2.0);
    const double c1 = detail::infusion_phase(p, kInf, kInf.t_in_h);
    const double c2 = detail::post_infusion_phase(p, kInf, kInf.t_in_h);
    CHECK(std::abs(c1 - c2) <= 1e-12 * c1);
  }
}

TEST_CASE("washout is strictly decreasing after the infusion") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_params(rng, 1.0);
    double prev = concentration(p, kInf, kInf.t_in_h);
    for (double t = kInf.t_in_h + 0.01; t <= 12.0; t += 0.01) {
      const double c = concentration(p, kInf, t);
      REQUIRE(c < prev);
      prev = c;
    }
  }
}

TEST_CASE("analytic jacobian matches central finite differences") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ut(0.05, 5.0), ue(-0.3, 0.3);
  std::uniform_int_distribution<int> ug(0, 2);
  for (int i = 0; i < 1000; ++i) {
    Coefficients beta = Coefficients::Zero();
    const auto base = random_params(rng, 1.5);
    beta[coef::kVd] = base.log_vd;
    beta[coef::kKel] = base.log_kel;
    beta[coef::kK12] = base.log_k12;
    beta[coef::kK21] = base.log_k21;
    for (int e : coef::kEffects) beta[e] = ue(rng);
    const auto g = static_cast<Genotype>(ug(rng));
    const double t = ut(rng);
    const DesignMatrix x(g);
    Coefficients analytic;
    try {
      analytic = jacobian_row(individual_params(x, beta), kInf, t, x);
    } catch (const Error& e) {
      REQUIRE(e.kind() == ErrorKind::DegenerateRoots);
      continue;
    }
    const Coefficients fd = oracle::fd_jacobian_row(beta, g, kInf, t);
    for (int k = 0; k < 12; ++k) {
      CHECK(std::abs(analytic[k] - fd[k]) <= std::max(1e-5 * std::abs(fd[k]), 1e-8));
    }
  }
}

TEST_CASE("jacobian zero pattern follows the design") {
  Coefficients beta = Coefficients::Zero();
  beta[coef::kVd] = 3.72;
  beta[coef::kKel] = 1.38;
  beta[coef::kK12] = -1.89;
  beta[coef::kK21] = -0.35;
  const DesignMatrix aa(Genotype::aa), het(Genotype::Aa);
  const auto row_aa = jacobian_row(individual_params(aa, beta), kInf, 1.0, aa);
  const auto row_het = jacobian_row(individual_params(het, beta), kInf, 1.0, het);
  for (int e : coef::kEffects) CHECK(row_aa[e] == 0.0);
  CHECK(row_het[coef::kVdAA] == 0.0);
  CHECK(row_het[coef::kVdAa] == row_aa[coef::kVd]);
  CHECK(row_aa[coef::kVd] == -1.0);
}

TEST_CASE("individual parameters from the design") {
  Coefficients beta = Coefficients::Zero();
  beta[coef::kVd] = 3.72;
  beta[coef::kKel] = 1.38;
  beta[coef::kK12] = -1.89;
  beta[coef::kK21] = -0.35;
  const auto aa = individual_params(DesignMatrix(Genotype::aa), beta);
  CHECK(aa.log_vd == 3.72);
  CHECK(aa.log_k21 == -0.35);
  const auto hom = individual_params(DesignMatrix(Genotype::AA), beta);
  CHECK(hom.as_vector() == aa.as_vector());
  beta[coef::kVdAa] = 0.05 * 3.72;
  const auto het = individual_params(DesignMatrix(Genotype::Aa), beta);
  CHECK(het.log_vd == doctest::Approx(3.906).epsilon(1e-14));
}

TEST_CASE("design matrix block pattern") {
  for (int g = 0; g < 3; ++g) {
    const DesignMatrix x(static_cast<Genotype>(g));
    const auto d = x.dense();
    for (int r = 0; r < 4; ++r) {
      CHECK(d.row(r).sum() >= 1.0);
      for (int c = 0; c < 12; ++c) {
        const double want = c / 3 == r ? x.row_pattern()[c % 3] : 0.0;
        CHECK(d(r, c) == want);
      }
    }
    Coefficients beta = Coefficients::LinSpaced(12, -1.0, 2.0);
    CHECK((x.apply(beta) - d * beta).norm() == 0.0);
    const ThetaVector v(0.3, -1.2, 2.5, 0.7);
    CHECK((x.pull_back(v) - d.transpose() * v).norm() == 0.0);
    Eigen::Matrix4d gm = Eigen::Matrix4d::Random();
    CHECK((x.pull_back(gm) - d.transpose() * gm * d).norm() <= 1e-15);
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS((InfusionSpec{0.0, 0.5}.validate()), Error);
  CHECK_THROWS_AS((InfusionSpec{100.0, -1.0}.validate()), Error);
  CHECK_THROWS_AS((PkParams{std::nan(""), 0, 0, 0}.validate()), Error);
  CHECK_THROWS_AS(concentration(kTypical, kInf, -1.0), Error);
}

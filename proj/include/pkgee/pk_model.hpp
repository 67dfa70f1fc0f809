#pragma once

// Two-compartment constant-rate intravenous infusion model.
//
// Units are fixed throughout the library: hours, mg, liters; every rate
// constant is in 1/h. The structural parameters are carried on the log
// scale so the natural-scale values are positive by construction.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace pkgee {

inline constexpr std::size_t kNumPkParams = 4;
inline constexpr std::size_t kNumCoefficients = 12;

using Coefficients = Eigen::Matrix<double, 12, 1>;
using CoefficientMatrix = Eigen::Matrix<double, 12, 12>;
using ThetaVector = Eigen::Vector4d;

/// Coefficient layout: for each PK parameter r (V_d, K_el, K_12, K_21) the
/// columns 3r, 3r+1, 3r+2 hold the intercept, the Aa effect and the AA effect.
namespace coef {
inline constexpr int kVd = 0, kVdAa = 1, kVdAA = 2;
inline constexpr int kKel = 3, kKelAa = 4, kKelAA = 5;
inline constexpr int kK12 = 6, kK12Aa = 7, kK12AA = 8;
inline constexpr int kK21 = 9, kK21Aa = 10, kK21AA = 11;

/// The eight SNP-effect coefficients in table order.
inline constexpr std::array<int, 8> kEffects = {kVdAa, kVdAA, kKelAa, kKelAA,
                                                kK12Aa, kK12AA, kK21Aa, kK21AA};
inline constexpr std::array<int, 4> kIntercepts = {kVd, kKel, kK12, kK21};

std::string_view name(int index);
}  // namespace coef

std::string_view pk_param_name(int r);

struct PkParams {
  double log_vd = 0.0;
  double log_kel = 0.0;
  double log_k12 = 0.0;
  double log_k21 = 0.0;

  ThetaVector as_vector() const { return {log_vd, log_kel, log_k12, log_k21}; }
  static PkParams from_vector(const ThetaVector& v) { return {v[0], v[1], v[2], v[3]}; }

  /// Throws InvalidArgument unless all four fields are finite.
  void validate() const;
};

struct InfusionSpec {
  double dose_mg = 0.0;
  double t_in_h = 0.0;

  /// K0 = Dose / T_in, mg/h.
  double rate() const { return dose_mg / t_in_h; }
  void validate() const;
};

enum class Genotype : std::uint8_t { aa = 0, Aa = 1, AA = 2 };

std::string_view to_string(Genotype g);

/// The 4x12 covariate matrix of one subject. Row r carries (1, x_Aa, x_AA)
/// in columns 3r..3r+2 and zeros elsewhere.
class DesignMatrix {
 public:
  explicit DesignMatrix(Genotype g) : genotype_(g) {}

  Genotype genotype() const { return genotype_; }
  double x_het() const { return genotype_ == Genotype::Aa ? 1.0 : 0.0; }
  double x_hom() const { return genotype_ == Genotype::AA ? 1.0 : 0.0; }

  /// (1, x_Aa, x_AA) – the nonzero pattern repeated in every row.
  Eigen::Vector3d row_pattern() const { return {1.0, x_het(), x_hom()}; }

  Eigen::Matrix<double, 4, 12> dense() const;

  /// psi = X * beta.
  ThetaVector apply(const Coefficients& beta) const;
  /// X^T * v for a theta-space vector v.
  Coefficients pull_back(const ThetaVector& v) const;
  /// X^T * G * X for a theta-space matrix G.
  CoefficientMatrix pull_back(const Eigen::Matrix4d& g) const;

 private:
  Genotype genotype_;
};

struct HybridRates {
  double a = 0.0;
  double b = 0.0;
};

/// Roots a >= b > 0 of x^2 - (kel+k12+k21) x + kel*k21. Throws
/// DegenerateRoots when a - b <= 1e-10 (a + b).
HybridRates hybrid_rate_constants(double kel, double k12, double k21);

inline constexpr double kDegenerateRootGap = 1e-10;

/// Central-compartment concentration in mg/L at time t >= 0 (hours since the
/// start of the infusion).
double concentration(const PkParams& p, const InfusionSpec& inf, double t);

/// Natural log of concentration; requires t > 0.
double log_concentration(const PkParams& p, const InfusionSpec& inf, double t);

/// d log f / d theta at time t > 0, theta = (log V_d, log K_el, log K_12, log K_21).
ThetaVector log_concentration_gradient(const PkParams& p, const InfusionSpec& inf, double t);

/// d f* / d beta for one observation: the theta-gradient pulled back through
/// the design.
Coefficients jacobian_row(const PkParams& p, const InfusionSpec& inf, double t,
                          const DesignMatrix& design);

PkParams individual_params(const DesignMatrix& design, const Coefficients& beta);

namespace detail {
// The two pieces of the closed form, evaluated exactly as written (no
// expm1 rewriting), for continuity checks at t = T_in.
double infusion_phase(const PkParams& p, const InfusionSpec& inf, double t);
double post_infusion_phase(const PkParams& p, const InfusionSpec& inf, double t);
}  // namespace detail

}  // namespace pkgee

#include "pkgee/pk_model.hpp"

#include <cmath>
#include <sstream>

#include "pkgee/errors.hpp"
#include "pkgee/simd/kernels.hpp"
#include "simd/point_eval.hpp"

namespace pkgee {

namespace coef {
std::string_view name(int index) {
  static constexpr std::string_view kNames[12] = {
      "beta_Vd",  "beta_Vd_Aa",  "beta_Vd_AA",  "beta_Kel", "beta_Kel_Aa", "beta_Kel_AA",
      "beta_K12", "beta_K12_Aa", "beta_K12_AA", "beta_K21", "beta_K21_Aa", "beta_K21_AA"};
  if (index < 0 || index >= 12) return "?";
  return kNames[index];
}
}  // namespace coef

std::string_view pk_param_name(int r) {
  static constexpr std::string_view kNames[4] = {"Vd", "Kel", "K12", "K21"};
  if (r < 0 || r >= 4) return "?";
  return kNames[r];
}

std::string_view to_string(Genotype g) {
  switch (g) {
    case Genotype::aa: return "aa";
    case Genotype::Aa: return "Aa";
    case Genotype::AA: return "AA";
  }
  return "?";
}

void PkParams::validate() const {
  if (!std::isfinite(log_vd) || !std::isfinite(log_kel) || !std::isfinite(log_k12) ||
      !std::isfinite(log_k21)) {
    throw Error(ErrorKind::InvalidArgument, "PK parameters must be finite");
  }
}

void InfusionSpec::validate() const {
  if (!(dose_mg > 0.0) || !std::isfinite(dose_mg)) {
    throw Error(ErrorKind::InvalidArgument, "dose must be positive and finite");
  }
  if (!(t_in_h > 0.0) || !std::isfinite(t_in_h)) {
    throw Error(ErrorKind::InvalidArgument, "infusion duration must be positive and finite");
  }
}

Eigen::Matrix<double, 4, 12> DesignMatrix::dense() const {
  Eigen::Matrix<double, 4, 12> x = Eigen::Matrix<double, 4, 12>::Zero();
  const Eigen::Vector3d pattern = row_pattern();
  for (int r = 0; r < 4; ++r) x.block<1, 3>(r, 3 * r) = pattern.transpose();
  return x;
}

ThetaVector DesignMatrix::apply(const Coefficients& beta) const {
  const double xa = x_het();
  const double xh = x_hom();
  ThetaVector psi;
  for (int r = 0; r < 4; ++r) psi[r] = beta[3 * r] + xa * beta[3 * r + 1] + xh * beta[3 * r + 2];
  return psi;
}

Coefficients DesignMatrix::pull_back(const ThetaVector& v) const {
  const Eigen::Vector3d pattern = row_pattern();
  Coefficients out;
  for (int r = 0; r < 4; ++r) out.segment<3>(3 * r) = v[r] * pattern;
  return out;
}

CoefficientMatrix DesignMatrix::pull_back(const Eigen::Matrix4d& g) const {
  const Eigen::Vector3d pattern = row_pattern();
  const Eigen::Matrix3d outer = pattern * pattern.transpose();
  CoefficientMatrix out;
  for (int r = 0; r < 4; ++r) {
    for (int s = 0; s < 4; ++s) out.block<3, 3>(3 * r, 3 * s) = g(r, s) * outer;
  }
  return out;
}

HybridRates hybrid_rate_constants(double kel, double k12, double k21) {
  if (!(kel > 0.0) || !(k12 >= 0.0) || !(k21 > 0.0) || !std::isfinite(kel) ||
      !std::isfinite(k12) || !std::isfinite(k21)) {
    throw Error(ErrorKind::InvalidArgument, "rate constants must be positive and finite");
  }
  const double sum = kel + k12 + k21;
  // sum^2 - 4 kel k21 rewritten without the cancelling subtraction.
  const double diff = kel + k12 - k21;
  const double disc = diff * diff + 4.0 * k12 * k21;
  const double root = std::sqrt(disc);
  const double a = 0.5 * (sum + root);
  const double b = (kel * k21) / a;
  if (!(root > kDegenerateRootGap * (a + b))) {
    std::ostringstream msg;
    msg << "hybrid rate constants coincide (kel=" << kel << ", k12=" << k12 << ", k21=" << k21
        << ")";
    throw Error(ErrorKind::DegenerateRoots, msg.str());
  }
  return {a, b};
}

namespace {

void require_time(double t, bool strictly_positive) {
  if (!std::isfinite(t) || t < 0.0 || (strictly_positive && t == 0.0)) {
    std::ostringstream msg;
    msg << "time " << t << " h is outside the model domain";
    throw Error(strictly_positive ? ErrorKind::NonPositiveConcentration
                                  : ErrorKind::InvalidArgument,
                msg.str());
  }
}

void require_positive(double g, double t) {
  if (!(g > 0.0) || !std::isfinite(g)) {
    std::ostringstream msg;
    msg << "concentration at t=" << t << " h evaluates to " << g;
    throw Error(ErrorKind::NonPositiveConcentration, msg.str());
  }
}

}  // namespace

double concentration(const PkParams& p, const InfusionSpec& inf, double t) {
  p.validate();
  inf.validate();
  require_time(t, false);
  const auto c = simd::make_profile_coeffs(p, inf);
  const auto v = simd::detail::eval_point(c, t);
  if (t == 0.0) return 0.0;
  const double value = std::exp(c.log_scale) * v.g;
  require_positive(value, t);
  return value;
}

double log_concentration(const PkParams& p, const InfusionSpec& inf, double t) {
  p.validate();
  inf.validate();
  require_time(t, true);
  const auto c = simd::make_profile_coeffs(p, inf);
  const auto v = simd::detail::eval_point(c, t);
  require_positive(v.g, t);
  return c.log_scale + std::log(v.g);
}

ThetaVector log_concentration_gradient(const PkParams& p, const InfusionSpec& inf, double t) {
  p.validate();
  inf.validate();
  require_time(t, true);
  const auto c = simd::make_profile_coeffs(p, inf);
  const auto v = simd::detail::eval_point(c, t);
  require_positive(v.g, t);
  return {-1.0, v.grad[0] / v.g, v.grad[1] / v.g, v.grad[2] / v.g};
}

Coefficients jacobian_row(const PkParams& p, const InfusionSpec& inf, double t,
                          const DesignMatrix& design) {
  return design.pull_back(log_concentration_gradient(p, inf, t));
}

PkParams individual_params(const DesignMatrix& design, const Coefficients& beta) {
  return PkParams::from_vector(design.apply(beta));
}

namespace detail {

namespace {
struct Branches {
  double scale, a, b, k21;
};

Branches branch_setup(const PkParams& p, const InfusionSpec& inf) {
  p.validate();
  inf.validate();
  const double kel = std::exp(p.log_kel);
  const double k12 = std::exp(p.log_k12);
  const double k21 = std::exp(p.log_k21);
  const auto [a, b] = hybrid_rate_constants(kel, k12, k21);
  return {inf.rate() / std::exp(p.log_vd), a, b, k21};
}
}  // namespace

double infusion_phase(const PkParams& p, const InfusionSpec& inf, double t) {
  const auto [scale, a, b, k21] = branch_setup(p, inf);
  return scale * (k21 - a) / (a * (a - b)) * (std::exp(-a * t) - 1.0) +
         scale * (b - k21) / (b * (a - b)) * (std::exp(-b * t) - 1.0);
}

double post_infusion_phase(const PkParams& p, const InfusionSpec& inf, double t) {
  const auto [scale, a, b, k21] = branch_setup(p, inf);
  const double tin = inf.t_in_h;
  return scale * (k21 - a) * (std::exp(-a * tin) - 1.0) / (a * (a - b)) *
             std::exp(-a * (t - tin)) +
         scale * (b - k21) * (std::exp(-b * tin) - 1.0) / (b * (a - b)) *
             std::exp(-b * (t - tin));
}

}  // namespace detail

}  // namespace pkgee

#pragma once

// Robust inference for a GEE fit: plain and bias-corrected sandwich
// covariances, moment degrees of freedom, Wald-type t tests and asymptotic
// F tests on linear contrasts of the coefficient vector.
//
// Covariances are stored unnormalized, I0^{-1} I1 I0^{-1} with no K factors,
// and the statistics use them directly. That is the same quantity the
// sqrt(K)-normalized formulation produces once the factors cancel.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pkgee/gee.hpp"

namespace pkgee {

enum class CovarianceKind { plain, bias_corrected };
const char* to_string(CovarianceKind kind);

struct CovarianceEstimate {
  Eigen::MatrixXd matrix;  // p x p over GeeFit::retained
  CovarianceKind kind = CovarianceKind::plain;
};

/// One or more linear contrasts of beta, one per column of a 12 x L matrix.
class Contrast {
 public:
  explicit Contrast(Eigen::MatrixXd columns, std::string name = {});

  static Contrast single(const Coefficients& c, std::string name = {});
  /// Unit contrast picking one coefficient.
  static Contrast coefficient(int index);

  int num_columns() const { return static_cast<int>(columns_.cols()); }
  const Eigen::MatrixXd& columns() const { return columns_; }
  Eigen::VectorXd column(int l) const { return columns_.col(l); }
  const std::string& name() const { return name_; }
  /// True when some column has a nonzero entry on a dropped coefficient.
  bool touches(const std::vector<int>& dropped) const;

 private:
  Eigen::MatrixXd columns_;
  std::string name_;
};

namespace contrasts {
/// Joint test of the Aa and AA effects on one PK parameter (L = 2).
Contrast pk_parameter(int r);
inline Contrast C_Vd() { return pk_parameter(0); }
inline Contrast C_Kel() { return pk_parameter(1); }
inline Contrast C_K12() { return pk_parameter(2); }
inline Contrast C_K21() { return pk_parameter(3); }
}  // namespace contrasts

struct TestResult {
  double statistic = 0.0;       // W for a Wald test, F for an F test
  double df_numerator = 1.0;    // 1 for Wald, L for F
  double df_denominator = 0.0;  // d or nu
  double p_value = 1.0;
  double estimate = 0.0;        // c^T beta (Wald only)
  double std_error = 0.0;       // sqrt(c^T V c) (Wald only)
  bool estimable = true;
  bool low_df = false;  // denominator d.f. <= 2
  CovarianceKind variance_kind = CovarianceKind::plain;
  std::string note;     // why the test is not estimable, if it is not
};

/// Precomputed per-subject quantities shared by every test on one fit.
/// Construction never throws for the corrected kind; if some (I - H_i) is
/// singular, corrected() is unavailable and corrected_error() says why.
class RobustInference {
 public:
  explicit RobustInference(const GeeFit& fit);
  /// Uses the given leverage matrices instead of D_i I0^{-1} D_i^T / phi.
  RobustInference(const GeeFit& fit, std::span<const Eigen::MatrixXd> leverages);

  const GeeFit& fit() const { return *fit_; }
  const Eigen::MatrixXd& info_inverse() const { return info_inv_; }

  bool has_corrected() const { return corrected_ok_; }
  const std::string& corrected_error() const { return corrected_error_; }

  /// Throws LeverageSingular for the corrected kind when unavailable.
  const CovarianceEstimate& covariance(CovarianceKind kind) const;

  /// Fay-Graubard d.f. for one 12-vector contrast; throws NotEstimable if it
  /// touches a dropped column and ZeroTrace if trace(Psi M) = 0.
  double df(const Eigen::VectorXd& c, CovarianceKind kind) const;

  TestResult wald(const Contrast& c, CovarianceKind kind) const;
  TestResult f(const Contrast& c, CovarianceKind kind) const;

 private:
  void build(std::span<const Eigen::MatrixXd> leverages, bool default_leverage);
  Eigen::VectorXd reduce(const Eigen::VectorXd& c) const;
  const std::vector<Eigen::VectorXd>& scores(CovarianceKind kind) const;

  const GeeFit* fit_;
  Eigen::MatrixXd info_inv_;
  std::vector<Eigen::VectorXd> plain_scores_;      // D_i^T S_i / phi
  std::vector<Eigen::VectorXd> corrected_scores_;  // D_i^T (I - H_i)^{-1} S_i / phi
  CovarianceEstimate plain_;
  CovarianceEstimate corrected_;
  bool corrected_ok_ = false;
  std::string corrected_error_;
};

/// I0^{-1} (sum D_i^T S_i S_i^T D_i) I0^{-1} over the retained columns.
CovarianceEstimate sandwich(const GeeFit& fit);

/// H_i = D_i I0^{-1} D_i^T V_i^{-1}.
Eigen::MatrixXd leverage(const GeeFit& fit, std::size_t i);

/// Sandwich with residuals (I - H_i)^{-1} S_i. Throws LeverageSingular.
CovarianceEstimate bias_corrected_sandwich(const GeeFit& fit);
/// Same with caller-supplied leverage blocks (zero blocks reproduce sandwich()).
CovarianceEstimate bias_corrected_sandwich(const GeeFit& fit,
                                           std::span<const Eigen::MatrixXd> leverages);

double fay_graubard_df(const GeeFit& fit, const Contrast& c, CovarianceKind kind);

/// Denominator d.f. from per-column d.f., each clamped below at 2.001.
double fai_cornelius_denominator_df(std::span<const double> d);

/// W = c^T beta / sqrt(c^T V c), two-sided p from t(d). Non-estimable
/// contrasts (dropped column or zero trace) come back with estimable = false.
TestResult wald_test(const GeeFit& fit, const CovarianceEstimate& cov, const Contrast& c);

/// F = (C^T beta)^T (C^T V C)^{-1} (C^T beta) / L with (L, nu) d.f.
/// Throws SingularContrastCovariance when C^T V C is singular.
TestResult f_test(const GeeFit& fit, const CovarianceEstimate& cov, const Contrast& c);

/// One subject of the weighted-average target: design, dosing and times.
struct SubjectDesign {
  Genotype genotype = Genotype::aa;
  InfusionSpec infusion;
  std::vector<double> times;
};

/// beta* = (sum I0_i(beta_i))^{-1} sum I0_i(beta_i) beta_i. Coefficients whose
/// information is identically zero (empty genotype group) come back as 0.
Coefficients weighted_average_target(std::span<const SubjectDesign> designs,
                                     std::span<const Coefficients> beta_i);

}  // namespace pkgee

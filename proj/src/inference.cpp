#include "pkgee/inference.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <cmath>

#include "pkgee/distributions.hpp"
#include "pkgee/errors.hpp"

namespace pkgee {

const char* to_string(CovarianceKind kind) {
  return kind == CovarianceKind::plain ? "plain" : "bias_corrected";
}

Contrast::Contrast(Eigen::MatrixXd columns, std::string name)
    : columns_(std::move(columns)), name_(std::move(name)) {
  if (columns_.rows() != static_cast<Eigen::Index>(kNumCoefficients) || columns_.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "contrast must be a 12 x L matrix with L >= 1");
  }
  if (!columns_.allFinite()) throw Error(ErrorKind::InvalidArgument, "contrast is not finite");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(columns_);
  if (qr.rank() < columns_.cols()) {
    throw Error(ErrorKind::InvalidArgument, "contrast columns must be nonzero and linearly independent");
  }
}

Contrast Contrast::single(const Coefficients& c, std::string name) {
  return Contrast(Eigen::MatrixXd(c), std::move(name));
}

Contrast Contrast::coefficient(int index) {
  Coefficients c = Coefficients::Zero();
  c[index] = 1.0;
  return single(c, std::string(coef::name(index)));
}

bool Contrast::touches(const std::vector<int>& dropped) const {
  for (int k : dropped) {
    if ((columns_.row(k).array() != 0.0).any()) return true;
  }
  return false;
}

namespace contrasts {
Contrast pk_parameter(int r) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(kNumCoefficients, 2);
  c(3 * r + 1, 0) = 1.0;
  c(3 * r + 2, 1) = 1.0;
  return Contrast(std::move(c), "C_" + std::string(pk_param_name(r)));
}
}  // namespace contrasts

namespace {

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info) {
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (info.rows() == 0 || llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw Error(ErrorKind::SingularInformation, "working information matrix is not positive definite");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  return 0.5 * (inv + inv.transpose());
}

Eigen::MatrixXd sandwich_from_scores(const Eigen::MatrixXd& info_inv,
                                     const std::vector<Eigen::VectorXd>& scores) {
  const Eigen::Index p = info_inv.rows();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (const auto& u : scores) meat.noalias() += u * u.transpose();
  Eigen::MatrixXd v = info_inv * meat * info_inv;
  return 0.5 * (v + v.transpose());
}

}  // namespace

RobustInference::RobustInference(const GeeFit& fit) : fit_(&fit) { build({}, true); }

RobustInference::RobustInference(const GeeFit& fit, std::span<const Eigen::MatrixXd> leverages)
    : fit_(&fit) {
  if (leverages.size() != fit.num_subjects()) {
    throw Error(ErrorKind::InvalidArgument, "one leverage block per subject is required");
  }
  build(leverages, false);
}

void RobustInference::build(std::span<const Eigen::MatrixXd> leverages, bool default_leverage) {
  const GeeFit& fit = *fit_;
  info_inv_ = invert_information(fit.info0);
  const double phi = fit.scale_phi;
  const std::size_t k = fit.num_subjects();

  plain_scores_.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    plain_scores_[i] = fit.jacobians[i].transpose() * fit.residuals[i] / phi;
  }
  plain_ = {sandwich_from_scores(info_inv_, plain_scores_), CovarianceKind::plain};

  corrected_scores_.resize(k);
  corrected_ok_ = true;
  for (std::size_t i = 0; i < k && corrected_ok_; ++i) {
    const Eigen::MatrixXd& d = fit.jacobians[i];
    const Eigen::Index n = d.rows();
    Eigen::MatrixXd h = default_leverage ? Eigen::MatrixXd(d * info_inv_ * d.transpose() / phi)
                                         : leverages[i];
    if (h.rows() != n || h.cols() != n) {
      throw Error(ErrorKind::InvalidArgument, "leverage block has the wrong size");
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(n, n) - h);
    if (!(lu.rcond() >= 1e-12)) {
      corrected_ok_ = false;
      corrected_error_ = "subject '" + fit.subject_ids[i] + "': I - H_i is numerically singular";
      break;
    }
    corrected_scores_[i] = d.transpose() * lu.solve(fit.residuals[i]) / phi;
  }
  if (corrected_ok_) {
    corrected_ = {sandwich_from_scores(info_inv_, corrected_scores_),
                  CovarianceKind::bias_corrected};
  } else {
    corrected_scores_.clear();
  }
}

const CovarianceEstimate& RobustInference::covariance(CovarianceKind kind) const {
  if (kind == CovarianceKind::plain) return plain_;
  if (!corrected_ok_) throw Error(ErrorKind::LeverageSingular, corrected_error_);
  return corrected_;
}

const std::vector<Eigen::VectorXd>& RobustInference::scores(CovarianceKind kind) const {
  if (kind == CovarianceKind::plain) return plain_scores_;
  if (!corrected_ok_) throw Error(ErrorKind::LeverageSingular, corrected_error_);
  return corrected_scores_;
}

Eigen::VectorXd RobustInference::reduce(const Eigen::VectorXd& c) const {
  const GeeFit& fit = *fit_;
  for (int k : fit.dropped_columns) {
    if (c[k] != 0.0) {
      throw Error(ErrorKind::NotEstimable,
                  "contrast involves " + std::string(coef::name(k)) + ", whose genotype group is empty");
    }
  }
  Eigen::VectorXd out(fit.retained.size());
  for (std::size_t j = 0; j < fit.retained.size(); ++j) out[j] = c[fit.retained[j]];
  return out;
}

double RobustInference::df(const Eigen::VectorXd& c, CovarianceKind kind) const {
  // With M_i = I0^{-1} c c^T I0^{-1} and Psi_i = U_i U_i^T every block product
  // is rank one, so trace(Psi_i M_i) = q_i = (c^T I0^{-1} U_i)^2 and
  // trace((Psi_i M_i)^2) = q_i^2.
  const Eigen::VectorXd a = info_inv_ * reduce(c);
  double sum_q = 0.0;
  double sum_q2 = 0.0;
  for (const auto& u : scores(kind)) {
    const double s = a.dot(u);
    const double q = s * s;
    sum_q += q;
    sum_q2 += q * q;
  }
  if (!(sum_q > 0.0)) {
    throw Error(ErrorKind::ZeroTrace, "all residuals are orthogonal to the contrast direction");
  }
  return sum_q * sum_q / sum_q2;
}

TestResult RobustInference::wald(const Contrast& c, CovarianceKind kind) const {
  if (c.num_columns() != 1) {
    throw Error(ErrorKind::InvalidArgument, "a Wald test takes a single contrast vector");
  }
  TestResult r;
  r.variance_kind = kind;
  r.df_numerator = 1.0;
  try {
    const Eigen::VectorXd cr = reduce(c.column(0));
    const Eigen::MatrixXd& v = covariance(kind).matrix;
    r.estimate = cr.dot(fit_->reduced_beta());
    const double var = cr.dot(v * cr);
    r.df_denominator = df(c.column(0), kind);
    if (!(var > 0.0)) throw Error(ErrorKind::ZeroTrace, "contrast variance is zero");
    r.std_error = std::sqrt(var);
    r.statistic = r.estimate / r.std_error;
    r.p_value = dist::student_t_two_sided(r.statistic, r.df_denominator);
    r.low_df = r.df_denominator <= 2.0;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotEstimable && e.kind() != ErrorKind::ZeroTrace) throw;
    r.estimable = false;
    r.p_value = std::nan("");
    r.statistic = std::nan("");
    r.note = e.what();
  }
  return r;
}

TestResult RobustInference::f(const Contrast& c, CovarianceKind kind) const {
  const int L = c.num_columns();
  TestResult r;
  r.variance_kind = kind;
  r.df_numerator = L;
  std::vector<double> d(L);
  Eigen::MatrixXd cr(fit_->num_params(), L);
  try {
    for (int l = 0; l < L; ++l) {
      cr.col(l) = reduce(c.column(l));
      d[l] = df(c.column(l), kind);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotEstimable && e.kind() != ErrorKind::ZeroTrace) throw;
    r.estimable = false;
    r.p_value = std::nan("");
    r.statistic = std::nan("");
    r.note = e.what();
    return r;
  }
  const Eigen::MatrixXd& v = covariance(kind).matrix;
  const Eigen::VectorXd b = cr.transpose() * fit_->reduced_beta();
  const Eigen::MatrixXd vc = cr.transpose() * v * cr;
  Eigen::LLT<Eigen::MatrixXd> llt(vc);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw Error(ErrorKind::SingularContrastCovariance,
                "covariance of the contrast " + c.name() + " is singular");
  }
  r.statistic = b.dot(llt.solve(b)) / L;
  // A single contrast inherits the Wald d.f. exactly, without the clamp.
  r.df_denominator = L == 1 ? d[0] : fai_cornelius_denominator_df(d);
  r.p_value = dist::f_upper_tail(r.statistic, L, r.df_denominator);
  r.low_df = r.df_denominator <= 2.0;
  return r;
}

CovarianceEstimate sandwich(const GeeFit& fit) {
  return RobustInference(fit).covariance(CovarianceKind::plain);
}

Eigen::MatrixXd leverage(const GeeFit& fit, std::size_t i) {
  if (i >= fit.num_subjects()) throw Error(ErrorKind::InvalidArgument, "subject index out of range");
  const Eigen::MatrixXd& d = fit.jacobians[i];
  return d * invert_information(fit.info0) * d.transpose() / fit.scale_phi;
}

CovarianceEstimate bias_corrected_sandwich(const GeeFit& fit) {
  return RobustInference(fit).covariance(CovarianceKind::bias_corrected);
}

CovarianceEstimate bias_corrected_sandwich(const GeeFit& fit,
                                           std::span<const Eigen::MatrixXd> leverages) {
  return RobustInference(fit, leverages).covariance(CovarianceKind::bias_corrected);
}

double fay_graubard_df(const GeeFit& fit, const Contrast& c, CovarianceKind kind) {
  if (c.num_columns() != 1) throw Error(ErrorKind::InvalidArgument, "d.f. take a single contrast");
  return RobustInference(fit).df(c.column(0), kind);
}

double fai_cornelius_denominator_df(std::span<const double> d) {
  if (d.empty()) throw Error(ErrorKind::InvalidArgument, "at least one d.f. is required");
  double e = 0.0;
  for (double x : d) {
    const double dl = std::max(x, 2.001);
    e += dl / (dl - 2.0);
  }
  return 2.0 * e / (e - static_cast<double>(d.size()));
}

TestResult wald_test(const GeeFit& fit, const CovarianceEstimate& cov, const Contrast& c) {
  RobustInference ri(fit);
  TestResult r = ri.wald(c, cov.kind);
  if (!r.estimable) return r;
  // The statistic comes from the covariance handed in.
  const Eigen::VectorXd cr = c.column(0)(fit.retained);
  const double var = cr.dot(cov.matrix * cr);
  if (!(var > 0.0)) {
    r.estimable = false;
    r.note = "contrast variance is zero";
    r.p_value = r.statistic = std::nan("");
    return r;
  }
  r.std_error = std::sqrt(var);
  r.statistic = r.estimate / r.std_error;
  r.p_value = dist::student_t_two_sided(r.statistic, r.df_denominator);
  return r;
}

TestResult f_test(const GeeFit& fit, const CovarianceEstimate& cov, const Contrast& c) {
  RobustInference ri(fit);
  TestResult r = ri.f(c, cov.kind);
  if (!r.estimable) return r;
  const Eigen::MatrixXd cr = c.columns()(fit.retained, Eigen::all);
  const Eigen::VectorXd b = cr.transpose() * fit.reduced_beta();
  Eigen::LLT<Eigen::MatrixXd> llt(cr.transpose() * cov.matrix * cr);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw Error(ErrorKind::SingularContrastCovariance,
                "covariance of the contrast " + c.name() + " is singular");
  }
  r.statistic = b.dot(llt.solve(b)) / c.num_columns();
  r.p_value = dist::f_upper_tail(r.statistic, r.df_numerator, r.df_denominator);
  return r;
}

Coefficients weighted_average_target(std::span<const SubjectDesign> designs,
                                     std::span<const Coefficients> beta_i) {
  if (designs.size() != beta_i.size() || designs.empty()) {
    throw Error(ErrorKind::InvalidArgument, "one coefficient vector per subject design is required");
  }
  CoefficientMatrix info = CoefficientMatrix::Zero();
  Coefficients weighted = Coefficients::Zero();
  for (std::size_t i = 0; i < designs.size(); ++i) {
    const DesignMatrix x(designs[i].genotype);
    const PkParams p = individual_params(x, beta_i[i]);
    Eigen::Matrix4d gram = Eigen::Matrix4d::Zero();
    for (double t : designs[i].times) {
      const ThetaVector g = log_concentration_gradient(p, designs[i].infusion, t);
      gram.noalias() += g * g.transpose();
    }
    const CoefficientMatrix info_i = x.pull_back(gram);
    info += info_i;
    weighted += info_i * beta_i[i];
  }
  std::vector<int> live;
  for (int k = 0; k < static_cast<int>(kNumCoefficients); ++k) {
    if (info(k, k) != 0.0) live.push_back(k);
  }
  const Eigen::MatrixXd sub = info(live, live);
  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (live.empty() || llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw Error(ErrorKind::SingularInformation, "summed subject information is singular");
  }
  const Eigen::VectorXd solved = llt.solve(Eigen::VectorXd(weighted(live)));
  Coefficients out = Coefficients::Zero();
  for (std::size_t j = 0; j < live.size(); ++j) out[live[j]] = solved[j];
  return out;
}

}  // namespace pkgee

#pragma once

// Estimating equations of the intentionally misspecified fixed-effects
// working model: one shared coefficient vector for every subject, log-scale
// responses, unit variance function and identity working correlation.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pkgee/pk_model.hpp"

namespace pkgee {

struct SubjectRecord {
  std::string subject_id;
  InfusionSpec infusion;
  std::vector<double> times;     // hours, strictly increasing, all > 0
  std::vector<double> log_conc;  // natural log of mg/L
  Genotype genotype = Genotype::aa;

  /// Throws InvalidArgument describing the first violated invariant.
  void validate() const;
};

enum class VarianceFunction { unit };
enum class WorkingCorrelation { identity };

/// V_i = phi * A_i^{1/2} R_i A_i^{1/2} with A_i = I and R_i = I. The scale
/// phi cancels from the solution and from both covariance estimators; it is
/// kept only so that cancellation can be checked.
struct WorkingModel {
  VarianceFunction variance = VarianceFunction::unit;
  WorkingCorrelation correlation = WorkingCorrelation::identity;
  double scale_phi = 1.0;

  void validate() const;
};

/// Starting point of the iteration. Effects start at zero unless a full warm
/// start is given.
struct InitStrategy {
  std::optional<std::array<double, 4>> intercepts;
  std::optional<Coefficients> warm_start;

  static InitStrategy defaults() { return {}; }
  static InitStrategy from_intercepts(const std::array<double, 4>& v) { return {v, std::nullopt}; }
  static InitStrategy from_coefficients(const Coefficients& beta) { return {std::nullopt, beta}; }
};

/// Population intercepts used when no starting values are supplied.
inline constexpr std::array<double, 4> kDefaultIntercepts = {3.72, 1.38, -1.89, -0.35};

struct SolverConfig {
  int max_iterations = 100;
  double rel_step_tol = 1e-8;
  double score_tol = 1e-8;
  int max_halvings = 20;
  InitStrategy init;

  void validate() const;
};

struct ScoreInfo {
  Coefficients score;      // U(beta)
  CoefficientMatrix info;  // I0(beta)
};

struct GeeFit {
  Coefficients beta_hat = Coefficients::Zero();  // dropped entries are 0
  std::vector<int> retained;                     // coefficient index of each reduced column
  std::vector<int> dropped_columns;
  Eigen::MatrixXd info0;                   // p x p over retained columns
  std::vector<Eigen::MatrixXd> jacobians;  // n_i x p per subject, D_i at beta_hat
  std::vector<Eigen::VectorXd> residuals;  // S_i = y_i - mu_i at beta_hat
  std::vector<std::string> subject_ids;
  double scale_phi = 1.0;
  bool converged = false;
  int iterations = 0;
  double final_score_norm = 0.0;  // max-norm of U over retained columns

  std::size_t num_subjects() const { return jacobians.size(); }
  std::size_t num_params() const { return retained.size(); }
  /// Position of coefficient `index` among the retained columns, or -1.
  int reduced_index(int index) const;
  /// beta_hat restricted to the retained columns.
  Eigen::VectorXd reduced_beta() const;
};

/// U = sum D_i^T V_i^{-1} S_i and I0 = sum D_i^T V_i^{-1} D_i over all 12
/// columns. Evaluation failures are rethrown as EvalFailure naming the subject.
ScoreInfo score_and_info(std::span<const SubjectRecord> data, const Coefficients& beta,
                         const WorkingModel& wm = {});

/// Starting coefficients: intercepts from the strategy, effects zero.
Coefficients initialize(std::span<const SubjectRecord> data, const InitStrategy& strategy);

/// Coefficient columns whose genotype group has no subject.
std::vector<int> empty_group_columns(std::span<const SubjectRecord> data);

/// Gauss-Newton (Fisher scoring) iteration beta <- beta + I0^{-1} U with
/// step halving on the Euclidean norm of U. Returns the fit with
/// `converged == false` when the iteration budget or the halving budget
/// runs out; throws SingularInformation or EvalFailure (at the start point).
GeeFit fit_gee(std::span<const SubjectRecord> data, const WorkingModel& wm = {},
               const SolverConfig& cfg = {});

/// As fit_gee, but throws NotConverged instead of returning an unconverged fit.
GeeFit solve(std::span<const SubjectRecord> data, const WorkingModel& wm = {},
             const SolverConfig& cfg = {});

}  // namespace pkgee

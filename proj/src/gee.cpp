#include "pkgee/gee.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "pkgee/errors.hpp"
#include "pkgee/simd/kernels.hpp"

namespace pkgee {

void SubjectRecord::validate() const {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::InvalidArgument, "subject '" + subject_id + "': " + what);
  };
  infusion.validate();
  if (times.empty()) fail("no observations");
  if (times.size() != log_conc.size()) fail("times and log concentrations differ in length");
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!(times[j] > 0.0) || !std::isfinite(times[j])) {
      fail("sampling times must be finite and > 0 (the log-concentration is undefined at t = 0)");
    }
    if (j > 0 && !(times[j] > times[j - 1])) fail("sampling times must be strictly increasing");
    if (!std::isfinite(log_conc[j])) fail("log concentrations must be finite");
  }
}

void WorkingModel::validate() const {
  if (!(scale_phi > 0.0) || !std::isfinite(scale_phi)) {
    throw Error(ErrorKind::InvalidArgument, "working scale parameter must be > 0");
  }
}

void SolverConfig::validate() const {
  if (max_iterations < 1 || max_halvings < 0 || !(rel_step_tol > 0.0) || !(score_tol > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "solver tolerances and budgets must be positive");
  }
}

int GeeFit::reduced_index(int index) const {
  const auto it = std::find(retained.begin(), retained.end(), index);
  return it == retained.end() ? -1 : static_cast<int>(it - retained.begin());
}

Eigen::VectorXd GeeFit::reduced_beta() const {
  Eigen::VectorXd out(retained.size());
  for (std::size_t k = 0; k < retained.size(); ++k) out[k] = beta_hat[retained[k]];
  return out;
}

namespace {

// Per-call scratch buffers for the kernels.
struct Workspace {
  std::vector<double> log_conc;
  std::vector<double> grad;
  std::vector<double> resid;

  void resize(std::size_t n) {
    log_conc.resize(n);
    grad.resize(4 * n);
    resid.resize(n);
  }
};

// Fills ws for one subject at beta; throws EvalFailure naming the subject.
void evaluate_subject(const SubjectRecord& s, const Coefficients& beta,
                      const simd::KernelTable& kernels, Workspace& ws) {
  const std::size_t n = s.times.size();
  ws.resize(n);
  try {
    const DesignMatrix design(s.genotype);
    const auto coeffs = simd::make_profile_coeffs(individual_params(design, beta), s.infusion);
    const std::size_t bad =
        kernels.eval_profile(coeffs, s.times.data(), n, ws.log_conc.data(), ws.grad.data());
    if (bad != 0) {
      throw Error(ErrorKind::NonPositiveConcentration,
                  std::to_string(bad) + " predicted concentrations are not positive");
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EvalFailure) throw;
    throw Error(ErrorKind::EvalFailure, "subject '" + s.subject_id + "': " + e.what());
  }
  for (std::size_t j = 0; j < n; ++j) ws.resid[j] = s.log_conc[j] - ws.log_conc[j];
}

// Per-genotype sums of the 4x4 theta-space Gram matrices and scores.
struct GroupSums {
  Eigen::Matrix4d gram[3];
  Eigen::Vector4d score[3];
};

GroupSums accumulate(std::span<const SubjectRecord> data, const Coefficients& beta,
                     const simd::KernelTable& kernels, Workspace& ws) {
  GroupSums sums;
  // Row-major scratch, the kernel writes into plain arrays.
  double gram[3][16] = {};
  double score[3][4] = {};
  for (const auto& s : data) {
    evaluate_subject(s, beta, kernels, ws);
    const int g = static_cast<int>(s.genotype);
    kernels.accumulate_gram(ws.grad.data(), ws.resid.data(), s.times.size(), gram[g], score[g]);
  }
  for (int g = 0; g < 3; ++g) {
    for (int k = 0; k < 4; ++k) {
      for (int l = 0; l < 4; ++l) sums.gram[g](k, l) = gram[g][4 * k + l];
      sums.score[g][k] = score[g][k];
    }
  }
  return sums;
}

ScoreInfo pull_back(const GroupSums& sums, double phi) {
  ScoreInfo out{Coefficients::Zero(), CoefficientMatrix::Zero()};
  for (int g = 0; g < 3; ++g) {
    const DesignMatrix design(static_cast<Genotype>(g));
    out.score += design.pull_back(ThetaVector(sums.score[g]));
    out.info += design.pull_back(sums.gram[g]);
  }
  out.score /= phi;
  out.info /= phi;
  return out;
}

Eigen::VectorXd restrict(const Coefficients& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
  return out;
}

Eigen::MatrixXd restrict(const CoefficientMatrix& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < idx.size(); ++c) out(r, c) = m(idx[r], idx[c]);
  }
  return out;
}

Eigen::VectorXd newton_step(const Eigen::MatrixXd& info, const Eigen::VectorXd& score) {
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw Error(ErrorKind::SingularInformation,
                "working information matrix is not positive definite");
  }
  return llt.solve(score);
}

bool score_converged(const Eigen::VectorXd& score, const Coefficients& beta, double tol) {
  return score.lpNorm<Eigen::Infinity>() <= tol * (1.0 + beta.lpNorm<Eigen::Infinity>());
}

}  // namespace

ScoreInfo score_and_info(std::span<const SubjectRecord> data, const Coefficients& beta,
                         const WorkingModel& wm) {
  wm.validate();
  Workspace ws;
  return pull_back(accumulate(data, beta, simd::active_kernels(), ws), wm.scale_phi);
}

Coefficients initialize(std::span<const SubjectRecord> data, const InitStrategy& strategy) {
  if (data.empty()) throw Error(ErrorKind::InvalidArgument, "no subjects to initialize from");
  if (strategy.warm_start) return *strategy.warm_start;
  const auto& intercepts = strategy.intercepts.value_or(kDefaultIntercepts);
  Coefficients beta = Coefficients::Zero();
  for (int r = 0; r < 4; ++r) beta[coef::kIntercepts[r]] = intercepts[r];
  return beta;
}

std::vector<int> empty_group_columns(std::span<const SubjectRecord> data) {
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& s : data) ++counts[static_cast<int>(s.genotype)];
  std::vector<int> dropped;
  for (int g = 1; g <= 2; ++g) {
    if (counts[g] == 0) {
      for (int r = 0; r < 4; ++r) dropped.push_back(3 * r + g);
    }
  }
  std::sort(dropped.begin(), dropped.end());
  return dropped;
}

GeeFit fit_gee(std::span<const SubjectRecord> data, const WorkingModel& wm,
               const SolverConfig& cfg) {
  wm.validate();
  cfg.validate();
  if (data.empty()) throw Error(ErrorKind::InvalidArgument, "no subjects to fit");
  for (const auto& s : data) s.validate();
  if (std::none_of(data.begin(), data.end(),
                   [](const SubjectRecord& s) { return s.genotype == Genotype::aa; })) {
    throw Error(ErrorKind::SingularInformation,
                "no subject carries the reference genotype aa; effects are not identifiable");
  }

  const auto& kernels = simd::active_kernels();
  Workspace ws;

  GeeFit fit;
  fit.scale_phi = wm.scale_phi;
  fit.dropped_columns = empty_group_columns(data);
  for (int k = 0; k < static_cast<int>(kNumCoefficients); ++k) {
    if (!std::binary_search(fit.dropped_columns.begin(), fit.dropped_columns.end(), k)) {
      fit.retained.push_back(k);
    }
  }

  Coefficients beta = initialize(data, cfg.init);
  for (int k : fit.dropped_columns) beta[k] = 0.0;

  auto eval = [&](const Coefficients& b) {
    return pull_back(accumulate(data, b, kernels, ws), wm.scale_phi);
  };

  ScoreInfo current = eval(beta);  // EvalFailure at the start point propagates
  Eigen::VectorXd score = restrict(current.score, fit.retained);
  double norm = score.norm();
  bool converged = score_converged(score, beta, cfg.score_tol);

  while (!converged && fit.iterations < cfg.max_iterations) {
    const Eigen::VectorXd step = newton_step(restrict(current.info, fit.retained), score);
    double lambda = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_halvings; ++h, lambda *= 0.5) {
      Coefficients candidate = beta;
      for (std::size_t k = 0; k < fit.retained.size(); ++k) {
        candidate[fit.retained[k]] += lambda * step[k];
      }
      try {
        ScoreInfo next = eval(candidate);
        Eigen::VectorXd next_score = restrict(next.score, fit.retained);
        const double next_norm = next_score.norm();
        if (next_norm < norm) {
          beta = candidate;
          current = std::move(next);
          score = std::move(next_score);
          norm = next_norm;
          accepted = true;
          break;
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EvalFailure) throw;
      }
    }
    if (!accepted) break;  // halving budget exhausted
    ++fit.iterations;
    converged = score_converged(score, beta, cfg.score_tol);
  }

  fit.beta_hat = beta;
  fit.converged = converged;
  fit.final_score_norm = score.lpNorm<Eigen::Infinity>();
  fit.info0 = restrict(current.info, fit.retained);

  // Per-subject byproducts at beta_hat.
  const std::size_t p = fit.retained.size();
  fit.jacobians.reserve(data.size());
  fit.residuals.reserve(data.size());
  fit.subject_ids.reserve(data.size());
  for (const auto& s : data) {
    evaluate_subject(s, beta, kernels, ws);
    const std::size_t n = s.times.size();
    const DesignMatrix design(s.genotype);
    const Eigen::Vector3d pattern = design.row_pattern();
    Eigen::MatrixXd d(n, p);
    for (std::size_t c = 0; c < p; ++c) {
      const int col = fit.retained[c];
      const double x = pattern[col % 3];
      const double* g = ws.grad.data() + (col / 3) * n;
      for (std::size_t j = 0; j < n; ++j) d(j, c) = x * g[j];
    }
    fit.jacobians.push_back(std::move(d));
    fit.residuals.push_back(Eigen::Map<const Eigen::VectorXd>(ws.resid.data(), n));
    fit.subject_ids.push_back(s.subject_id);
  }
  return fit;
}

GeeFit solve(std::span<const SubjectRecord> data, const WorkingModel& wm,
             const SolverConfig& cfg) {
  GeeFit fit = fit_gee(data, wm, cfg);
  if (!fit.converged) {
    std::ostringstream msg;
    msg << "no convergence after " << fit.iterations << " iterations (|U|inf = "
        << fit.final_score_norm << ")";
    throw Error(ErrorKind::NotConverged, msg.str());
  }
  return fit;
}

}  // namespace pkgee

#include "pkgee/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pkgee/errors.hpp"
#include "pkgee/parallel.hpp"

namespace pkgee::sim {

const char* to_string(RandomEffectFamily f) {
  switch (f) {
    case RandomEffectFamily::normal: return "normal";
    case RandomEffectFamily::uniform: return "uniform";
    case RandomEffectFamily::gamma: return "gamma";
  }
  return "?";
}

ScenarioConfig ScenarioConfig::preset(int scenario, double maf) {
  if (scenario < 1 || scenario > 7) {
    throw Error(ErrorKind::InvalidArgument, "scenario must be 1..7");
  }
  ScenarioConfig cfg;
  cfg.scenario_id = scenario;
  cfg.maf = maf;
  if (scenario == 2) cfg.family = RandomEffectFamily::uniform;
  if (scenario == 3) cfg.family = RandomEffectFamily::gamma;
  // Scenarios 4-7 put the same multiple of one intercept on both Aa and AA.
  static constexpr double kMultiplier[4] = {0.05, 0.05, 0.30, 0.50};
  if (scenario >= 4) {
    const int r = scenario - 4;
    cfg.effect_sizes.het[r] = kMultiplier[r];
    cfg.effect_sizes.hom[r] = kMultiplier[r];
  }
  return cfg;
}

Coefficients ScenarioConfig::true_beta() const {
  Coefficients beta = Coefficients::Zero();
  for (int r = 0; r < 4; ++r) {
    beta[3 * r] = intercepts[r];
    beta[3 * r + 1] = effect_sizes.het[r] * intercepts[r];
    beta[3 * r + 2] = effect_sizes.hom[r] * intercepts[r];
  }
  return beta;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); };
  if (!(sigma > 0.0)) fail("sigma must be > 0");
  for (double t : tau) {
    if (!(t >= 0.0)) fail("random-effect scales must be >= 0");
  }
  if (n < 1) fail("n must be >= 1");
  if (n_replicates < 1) fail("replicate count must be >= 1");
  if (times.empty()) fail("sampling grid is empty");
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!(times[j] > 0.0) || (j > 0 && !(times[j] > times[j - 1]))) {
      fail("sampling times must be positive and strictly increasing");
    }
  }
  InfusionSpec{dose_mg, t_in_h}.validate();
  genotype_counts(maf, n, hwe_rounding);
}

GenotypeCounts genotype_counts(double maf, int n, bool hwe_rounding) {
  if (!(maf >= 0.0) || !(maf <= 0.5) || n < 1) {
    throw Error(ErrorKind::InvalidArgument, "MAF must lie in [0, 0.5] and n must be >= 1");
  }
  if (n == 100 && maf == 0.25) return {56, 37, 7};
  if (n == 100 && maf == 0.50) return {25, 50, 25};
  if (!hwe_rounding) {
    throw Error(ErrorKind::UnsupportedGrid,
                "only n = 100 with MAF 0.25 or 0.5 is tabulated; enable HWE rounding for other grids");
  }
  const double q = maf;
  const double expected[3] = {n * (1 - q) * (1 - q), 2.0 * n * q * (1 - q), n * q * q};
  int counts[3];
  int total = 0;
  for (int g = 0; g < 3; ++g) {
    counts[g] = static_cast<int>(std::floor(expected[g]));
    total += counts[g];
  }
  // Hand the leftover subjects to the largest remainders, ties to the lower genotype.
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int x, int y) {
    return expected[x] - counts[x] > expected[y] - counts[y];
  });
  for (int k = 0; total < n; ++k, ++total) ++counts[order[k % 3]];
  return {counts[0], counts[1], counts[2]};
}

RandomEffects draw_random_effects(const ScenarioConfig& cfg, std::mt19937_64& rng) {
  RandomEffects g{};
  for (int k = 0; k < 3; ++k) {
    const double tau = cfg.tau[k];
    if (tau == 0.0) continue;
    switch (cfg.family) {
      case RandomEffectFamily::normal:
        g[k] = std::normal_distribution<double>(0.0, tau)(rng);
        break;
      case RandomEffectFamily::uniform: {
        const double half = 0.5 * std::sqrt(12.0 * tau * tau);
        g[k] = std::uniform_real_distribution<double>(-half, half)(rng);
        break;
      }
      case RandomEffectFamily::gamma:
        // Printed as Gamma(tau^2, 1): shape tau^2, unit scale, not centred.
        g[k] = std::gamma_distribution<double>(tau * tau, 1.0)(rng);
        break;
    }
  }
  return g;
}

std::mt19937_64 subject_stream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t subject) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate),
                    static_cast<std::uint32_t>(replicate >> 32),
                    static_cast<std::uint32_t>(subject), static_cast<std::uint32_t>(subject >> 32)};
  return std::mt19937_64(seq);
}

Dataset generate_dataset(const ScenarioConfig& cfg, int replicate) {
  cfg.validate();
  const GenotypeCounts counts = genotype_counts(cfg.maf, cfg.n, cfg.hwe_rounding);
  const Coefficients beta = cfg.true_beta();
  const InfusionSpec inf{cfg.dose_mg, cfg.t_in_h};
  constexpr int kMaxResamples = 1000;

  Dataset out;
  out.subjects.reserve(cfg.n);
  out.theta.reserve(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    const Genotype g = i < counts.aa ? Genotype::aa
                       : i < counts.aa + counts.Aa ? Genotype::Aa
                                                   : Genotype::AA;
    const ThetaVector fixed = DesignMatrix(g).apply(beta);
    auto rng = subject_stream(cfg.seed, static_cast<std::uint64_t>(replicate),
                              static_cast<std::uint64_t>(i));
    ThetaVector theta;
    for (int attempt = 0;; ++attempt) {
      const RandomEffects re = draw_random_effects(cfg, rng);
      theta = fixed;
      theta[0] += re[0];
      theta[2] += re[1];
      theta[3] += re[2];
      try {
        const PkParams p = PkParams::from_vector(theta);
        hybrid_rate_constants(std::exp(p.log_kel), std::exp(p.log_k12), std::exp(p.log_k21));
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateRoots || attempt >= kMaxResamples) {
          throw Error(ErrorKind::EvalFailure, "generator subject " + std::to_string(i) + ": " + e.what());
        }
        ++out.resamples;
      }
    }

    SubjectRecord s;
    std::ostringstream id;
    id << "S" << std::setw(4) << std::setfill('0') << (i + 1);
    s.subject_id = id.str();
    s.infusion = inf;
    s.genotype = g;
    s.times = cfg.times;
    s.log_conc.resize(cfg.times.size());
    const PkParams p = PkParams::from_vector(theta);
    std::normal_distribution<double> noise(0.0, cfg.sigma);
    for (std::size_t j = 0; j < cfg.times.size(); ++j) {
      s.log_conc[j] = log_concentration(p, inf, cfg.times[j]) + noise(rng);
    }
    out.subjects.push_back(std::move(s));
    out.theta.push_back(theta);
  }
  return out;
}

ReplicateResult run_replicate(const ScenarioConfig& cfg, int replicate, double alpha) {
  ReplicateResult r;
  for (auto& k : r.wald) k.fill(-1);
  for (auto& k : r.f) k.fill(-1);
  const Dataset data = generate_dataset(cfg, replicate);
  r.resamples = data.resamples;

  const auto start = std::chrono::steady_clock::now();
  try {
    const GeeFit fit = fit_gee(data.subjects);
    r.converged = fit.converged;
    r.beta_hat = fit.beta_hat;
    if (fit.converged) {
      const RobustInference ri(fit);
      for (int kind = 0; kind < 2; ++kind) {
        const auto ck = static_cast<CovarianceKind>(kind);
        if (ck == CovarianceKind::bias_corrected && !ri.has_corrected()) continue;
        for (int e = 0; e < 8; ++e) {
          const TestResult t = ri.wald(Contrast::coefficient(coef::kEffects[e]), ck);
          if (t.estimable) r.wald[kind][e] = t.p_value < alpha ? 1 : 0;
        }
        for (int q = 0; q < 4; ++q) {
          try {
            const TestResult t = ri.f(contrasts::pk_parameter(q), ck);
            if (t.estimable) r.f[kind][q] = t.p_value < alpha ? 1 : 0;
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::SingularContrastCovariance) throw;
          }
        }
      }
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EvalFailure && e.kind() != ErrorKind::SingularInformation) throw;
    r.converged = false;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

MonteCarloSummary summarize(const ScenarioConfig& cfg, const std::vector<ReplicateResult>& reps) {
  MonteCarloSummary s;
  s.cfg = cfg;
  s.replicates = static_cast<int>(reps.size());
  double seconds = 0.0;
  for (const auto& r : reps) {
    seconds += r.seconds;
    s.resamples += r.resamples;
    if (r.converged) ++s.converged;
  }
  s.convergence = s.replicates ? static_cast<double>(s.converged) / s.replicates : 0.0;
  s.seconds_per_1000 = s.replicates ? 1000.0 * seconds / s.replicates : 0.0;

  const Coefficients truth = cfg.true_beta();
  for (int kind = 0; kind < 2; ++kind) {
    const auto ck = static_cast<CovarianceKind>(kind);
    for (int e = 0; e < 8; ++e) {
      const int k = coef::kEffects[e];
      HypothesisRow row{std::string(coef::name(k)), "wald", ck};
      double sum = 0.0;
      double sum_sq = 0.0;
      int fitted = 0;
      for (const auto& r : reps) {
        if (!r.converged) continue;
        const double err = r.beta_hat[k] - truth[k];
        sum += err;
        sum_sq += err * err;
        ++fitted;
        if (r.wald[kind][e] >= 0) {
          ++row.tested;
          row.rejections += r.wald[kind][e];
        }
      }
      row.rate = row.tested ? static_cast<double>(row.rejections) / row.tested : 0.0;
      row.bias = fitted ? sum / fitted : 0.0;
      row.mse = fitted ? sum_sq / fitted : 0.0;
      s.rows.push_back(row);
    }
    for (int q = 0; q < 4; ++q) {
      HypothesisRow row{"C_" + std::string(pk_param_name(q)), "f", ck};
      row.bias = row.mse = std::nan("");
      for (const auto& r : reps) {
        if (r.converged && r.f[kind][q] >= 0) {
          ++row.tested;
          row.rejections += r.f[kind][q];
        }
      }
      row.rate = row.tested ? static_cast<double>(row.rejections) / row.tested : 0.0;
      s.rows.push_back(row);
    }
  }
  return s;
}

MonteCarloSummary run_study(const ScenarioConfig& cfg, unsigned threads, double alpha) {
  cfg.validate();
  std::vector<ReplicateResult> reps(cfg.n_replicates);
  parallel_for(reps.size(), threads,
               [&](std::size_t i) { reps[i] = run_replicate(cfg, static_cast<int>(i), alpha); });
  return summarize(cfg, reps);
}

const HypothesisRow& MonteCarloSummary::row(const std::string& hypothesis, const std::string& method,
                                            CovarianceKind kind) const {
  for (const auto& r : rows) {
    if (r.hypothesis == hypothesis && r.method == method && r.kind == kind) return r;
  }
  throw Error(ErrorKind::InvalidArgument, "no summary row for " + hypothesis + "/" + method);
}

double MonteCarloSummary::wald_rate(int coefficient, CovarianceKind kind) const {
  return row(std::string(coef::name(coefficient)), "wald", kind).rate;
}

double MonteCarloSummary::f_rate(int pk_param, CovarianceKind kind) const {
  return row("C_" + std::string(pk_param_name(pk_param)), "f", kind).rate;
}

namespace {
std::string method_label(const HypothesisRow& r) {
  return r.method + (r.kind == CovarianceKind::plain ? "_plain" : "_corrected");
}
}  // namespace

void write_summary_csv(std::ostream& os, const std::vector<MonteCarloSummary>& summaries) {
  os << "scenario,hypothesis,method,rate,bias,mse,convergence,seconds_per_1000\n";
  os << std::setprecision(17);
  for (const auto& s : summaries) {
    for (const auto& r : s.rows) {
      os << s.cfg.scenario_id << ',' << r.hypothesis << ',' << method_label(r) << ',' << r.rate << ',';
      if (!std::isnan(r.bias)) os << r.bias;
      os << ',';
      if (!std::isnan(r.mse)) os << r.mse;
      os << ',' << s.convergence << ',' << s.seconds_per_1000 << '\n';
    }
  }
}

void print_summary_table(std::ostream& os, const MonteCarloSummary& s) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << "Scenario " << s.cfg.scenario_id << " (" << to_string(s.cfg.family) << " random effects), MAF "
     << s.cfg.maf << ", " << s.replicates << " replicates\n";
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(16) << "" << std::right;
  for (int e = 0; e < 8; ++e) os << std::setw(13) << coef::name(coef::kEffects[e]).substr(5);
  os << '\n';
  for (int kind = 0; kind < 2; ++kind) {
    const auto ck = static_cast<CovarianceKind>(kind);
    os << std::left << std::setw(16) << (kind == 0 ? "Wald GEE(Vhat)" : "Wald GEE(Vtil)") << std::right;
    for (int e = 0; e < 8; ++e) os << std::setw(13) << s.wald_rate(coef::kEffects[e], ck);
    os << '\n';
  }
  for (int kind = 0; kind < 2; ++kind) {
    const auto ck = static_cast<CovarianceKind>(kind);
    os << std::left << std::setw(16) << (kind == 0 ? "F GEE(Vhat)" : "F GEE(Vtil)") << std::right;
    for (int q = 0; q < 4; ++q) os << std::setw(26) << s.f_rate(q, ck);
    os << '\n';
  }
  os << std::left << std::setw(16) << "Bias" << std::right;
  for (int e = 0; e < 8; ++e) os << std::setw(13) << s.rows[e].bias;
  os << '\n' << std::left << std::setw(16) << "MSE" << std::right;
  for (int e = 0; e < 8; ++e) os << std::setw(13) << s.rows[e].mse;
  os << '\n' << "convergence " << 100.0 * s.convergence << "%, " << s.seconds_per_1000
     << " s per 1000 fits";
  if (s.resamples > 0) os << ", " << s.resamples << " degenerate-root redraws";
  os << '\n';
  os.flags(flags);
  os.precision(prec);
}

}  // namespace pkgee::sim

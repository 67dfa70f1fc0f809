#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "pkgee/errors.hpp"
#include "pkgee/parallel.hpp"
#include "pkgee/scan.hpp"

namespace pkgee::scan {

double ScanPolicy::threshold(std::size_t num_snps) const {
  if (alpha) return *alpha;
  if (num_snps == 0) return family_alpha;
  return family_alpha / (static_cast<double>(num_snps) * 4.0);
}

namespace {

ScanTest to_scan_test(const TestResult& t) {
  ScanTest s;
  s.estimable = t.estimable;
  s.estimate = t.estimable ? t.estimate : std::nan("");
  s.std_error = t.estimable ? t.std_error : std::nan("");
  s.df = t.estimable ? t.df_denominator : std::nan("");
  s.statistic = t.statistic;
  s.p_value = t.p_value;
  return s;
}

ScanTest not_estimable() {
  ScanTest s;
  s.estimate = s.std_error = s.df = s.statistic = s.p_value = std::nan("");
  return s;
}

void append_error(ScanRow& row, const std::string& what) {
  if (!row.error.empty()) row.error += "; ";
  row.error += what;
}

}  // namespace

ScanRow scan_one(const std::vector<SubjectRecord>& subjects, const std::vector<std::int8_t>& genotype,
                 const std::string& snp_id, const ScanPolicy& policy, double threshold) {
  ScanRow row;
  row.snp_id = snp_id;
  for (auto& kind : row.wald) kind.fill(not_estimable());
  for (auto& kind : row.f) kind.fill(not_estimable());
  row.beta_hat.setConstant(std::nan(""));

  std::vector<SubjectRecord> data;
  data.reserve(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (genotype[i] == scan::GenotypeMatrix::kMissing) {
      ++row.excluded;
      continue;
    }
    data.push_back(subjects[i]);
    data.back().genotype = static_cast<Genotype>(genotype[i]);
    ++row.genotype_counts[genotype[i]];
  }
  row.n_subjects = static_cast<int>(data.size());

  try {
    if (data.empty()) throw Error(ErrorKind::InvalidArgument, "no subject has a genotype at this SNP");
    const GeeFit fit = fit_gee(data, {}, policy.solver);
    row.converged = fit.converged;
    row.iterations = fit.iterations;
    row.beta_hat = fit.beta_hat;
    for (int k : fit.dropped_columns) row.beta_hat[k] = std::nan("");
    if (!fit.converged) {
      append_error(row, "no convergence after " + std::to_string(fit.iterations) + " iterations");
      return row;
    }
    const RobustInference ri(fit);
    row.corrected_available = ri.has_corrected();
    if (!ri.has_corrected()) append_error(row, "corrected variance unavailable: " + ri.corrected_error());
    for (int kind = 0; kind < 2; ++kind) {
      const auto ck = static_cast<CovarianceKind>(kind);
      if (ck == CovarianceKind::bias_corrected && !ri.has_corrected()) continue;
      for (int e = 0; e < 8; ++e) {
        row.wald[kind][e] = to_scan_test(ri.wald(Contrast::coefficient(coef::kEffects[e]), ck));
      }
      for (int q = 0; q < 4; ++q) {
        try {
          row.f[kind][q] = to_scan_test(ri.f(contrasts::pk_parameter(q), ck));
        } catch (const Error& err) {
          if (err.kind() != ErrorKind::SingularContrastCovariance) throw;
          append_error(row, err.what());
        }
        const auto& t = row.f[kind][q];
        if (t.estimable && t.p_value < threshold) {
          (kind == 0 ? row.significant : row.significant_corrected) = true;
        }
      }
    }
  } catch (const Error& err) {
    append_error(row, err.what());
  }
  return row;
}

std::vector<ScanRow> scan(const std::vector<SubjectRecord>& subjects, const GenotypeMatrix& genotypes,
                          const ScanPolicy& policy) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < genotypes.num_subjects(); ++i) row_of.emplace(genotypes.subject_ids[i], i);
  std::vector<std::size_t> geno_row(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto it = row_of.find(subjects[i].subject_id);
    if (it == row_of.end()) {
      throw Error(ErrorKind::JoinError, "subject '" + subjects[i].subject_id + "' has no genotype row");
    }
    geno_row[i] = it->second;
  }

  const std::size_t m = genotypes.num_snps();
  const double threshold = policy.threshold(m);
  std::vector<ScanRow> rows(m);
  parallel_for(m, policy.threads, [&](std::size_t j) {
    std::vector<std::int8_t> column(subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i) column[i] = genotypes.at(geno_row[i], j);
    rows[j] = scan_one(subjects, column, genotypes.snp_ids[j], policy, threshold);
  });
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ScanRow& a, const ScanRow& b) { return a.snp_id < b.snp_id; });
  return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ScanRow>& rows) {
  static constexpr const char* kKind[2] = {"plain", "corrected"};
  out << "snp_id,n_subjects,excluded,n_aa,n_Aa,n_AA,converged,iterations,corrected_available";
  for (int kind = 0; kind < 2; ++kind) {
    for (int q = 0; q < 4; ++q) {
      const std::string name = "F_" + std::string(pk_param_name(q)) + "_" + kKind[kind];
      out << ',' << name << "_stat," << name << "_df," << name << "_p";
    }
  }
  for (int e = 0; e < 8; ++e) out << ',' << coef::name(coef::kEffects[e]) << "_estimate";
  for (int kind = 0; kind < 2; ++kind) {
    for (int e = 0; e < 8; ++e) {
      const std::string name = std::string(coef::name(coef::kEffects[e])) + "_" + kKind[kind];
      out << ',' << name << "_se," << name << "_df," << name << "_p";
    }
  }
  out << ",significant,significant_corrected,error\n";

  for (const auto& r : rows) {
    out << r.snp_id << ',' << r.n_subjects << ',' << r.excluded << ',' << r.genotype_counts[0] << ','
        << r.genotype_counts[1] << ',' << r.genotype_counts[2] << ',' << (r.converged ? 1 : 0) << ','
        << r.iterations << ',' << (r.corrected_available ? 1 : 0);
    for (int kind = 0; kind < 2; ++kind) {
      for (int q = 0; q < 4; ++q) {
        const auto& t = r.f[kind][q];
        out << ',' << format_double(t.statistic) << ',' << format_double(t.df) << ',' << format_double(t.p_value);
      }
    }
    for (int e = 0; e < 8; ++e) out << ',' << format_double(r.beta_hat[coef::kEffects[e]]);
    for (int kind = 0; kind < 2; ++kind) {
      for (int e = 0; e < 8; ++e) {
        const auto& t = r.wald[kind][e];
        out << ',' << format_double(t.std_error) << ',' << format_double(t.df) << ',' << format_double(t.p_value);
      }
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << (r.significant ? 1 : 0) << ',' << (r.significant_corrected ? 1 : 0) << ',' << err << '\n';
  }
}

void print_fit_block(std::ostream& out, const ScanRow& row) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << "SNP " << row.snp_id << ": " << row.n_subjects << " subjects (aa " << row.genotype_counts[0]
      << ", Aa " << row.genotype_counts[1] << ", AA " << row.genotype_counts[2] << "), " << row.excluded
      << " excluded, " << (row.converged ? "converged" : "NOT converged") << " in " << row.iterations
      << " iterations\n";
  if (!row.error.empty()) out << "note: " << row.error << '\n';
  static constexpr const char* kTitle[2] = {"GEE (Vhat_s)", "GEE (Vtilde_s)"};
  for (int kind = 0; kind < 2; ++kind) {
    out << '\n' << kTitle[kind] << '\n';
    out << std::left << std::setw(16) << "Parameter" << std::right << std::setw(12) << "Estimate"
        << std::setw(12) << "S.E." << std::setw(10) << "d.f." << std::setw(14) << "P-value" << '\n';
    for (int e = 0; e < 8; ++e) {
      const auto& t = row.wald[kind][e];
      out << std::left << std::setw(16) << coef::name(coef::kEffects[e]) << std::right;
      if (!t.estimable) {
        out << std::setw(12) << "NA" << std::setw(12) << "NA" << std::setw(10) << "NA" << std::setw(14)
            << "NA" << '\n';
        continue;
      }
      out << std::fixed << std::setprecision(3) << std::setw(12) << t.estimate << std::setw(12)
          << t.std_error << std::setprecision(1) << std::setw(10) << t.df;
      out << std::scientific << std::setprecision(2) << std::setw(14) << t.p_value << '\n';
      out.flags(flags);
    }
    for (int q = 0; q < 4; ++q) {
      const auto& t = row.f[kind][q];
      out << std::left << std::setw(16) << ("F C_" + std::string(pk_param_name(q))) << std::right;
      if (!t.estimable) {
        out << std::setw(12) << "NA" << std::setw(12) << "" << std::setw(10) << "NA" << std::setw(14) << "NA"
            << '\n';
        continue;
      }
      out << std::fixed << std::setprecision(3) << std::setw(12) << t.statistic << std::setw(12) << ""
          << std::setprecision(1) << std::setw(10) << t.df << std::scientific << std::setprecision(2)
          << std::setw(14) << t.p_value << '\n';
      out.flags(flags);
    }
  }
  out.flags(flags);
  out.precision(prec);
}

void write_fit_json(std::ostream& out, const ScanRow& row) {
  using nlohmann::json;
  // Non-estimable tests become null rather than carrying placeholder numbers.
  auto test = [](const ScanTest& t, bool wald) {
    if (!t.estimable) return json(nullptr);
    json j = {{"df", t.df}, {"p_value", t.p_value}};
    if (wald) {
      j["estimate"] = t.estimate;
      j["std_error"] = t.std_error;
    } else {
      j["statistic"] = t.statistic;
    }
    return j;
  };
  json j = {{"snp_id", row.snp_id},
            {"n_subjects", row.n_subjects},
            {"excluded", row.excluded},
            {"genotype_counts", {{"aa", row.genotype_counts[0]}, {"Aa", row.genotype_counts[1]},
                                 {"AA", row.genotype_counts[2]}}},
            {"converged", row.converged},
            {"iterations", row.iterations},
            {"corrected_available", row.corrected_available},
            {"significant", row.significant},
            {"significant_corrected", row.significant_corrected}};
  if (!row.error.empty()) j["error"] = row.error;
  for (int k = 0; k < static_cast<int>(kNumCoefficients); ++k) j["beta_hat"][coef::name(k)] = row.beta_hat[k];
  static constexpr const char* kKind[2] = {"plain", "corrected"};
  for (int kind = 0; kind < 2; ++kind) {
    json& block = j[kKind[kind]];
    for (int e = 0; e < 8; ++e) block["wald"][coef::name(coef::kEffects[e])] = test(row.wald[kind][e], true);
    for (int q = 0; q < 4; ++q) {
      block["f"]["C_" + std::string(pk_param_name(q))] = test(row.f[kind][q], false);
    }
  }
  out << j.dump(2) << '\n';
}

}  // namespace pkgee::scan

namespace pkgee::scan {

Panel synthetic_panel(const sim::ScenarioConfig& cfg, std::size_t num_snps, double missing_rate) {
  if (!(missing_rate >= 0.0) || !(missing_rate < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "missing rate must lie in [0, 1)");
  }
  Panel p;
  p.subjects = sim::generate_dataset(cfg, 0).subjects;
  const std::size_t n = p.subjects.size();
  p.genotypes.subject_ids.reserve(n);
  for (const auto& s : p.subjects) p.genotypes.subject_ids.push_back(s.subject_id);
  p.genotypes.entries.assign(n * num_snps, 0);
  const double q = cfg.maf;
  const double cut_aa = (1 - q) * (1 - q);
  const double cut_Aa = cut_aa + 2 * q * (1 - q);
  for (std::size_t j = 0; j < num_snps; ++j) {
    std::ostringstream id;
    id << "rs" << std::setw(6) << std::setfill('0') << (j + 1);
    p.genotypes.snp_ids.push_back(id.str());
  }
  for (std::size_t j = 0; j < num_snps; ++j) {
    // Genotype streams sit past the replicate index range used for concentrations.
    auto rng = sim::subject_stream(cfg.seed, (std::uint64_t{1} << 40) + j, 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = u(rng);
      const double m = u(rng);
      std::int8_t g = x < cut_aa ? 0 : x < cut_Aa ? 1 : 2;
      if (m < missing_rate) g = GenotypeMatrix::kMissing;
      p.genotypes.at(i, j) = g;
    }
  }
  return p;
}

}  // namespace pkgee::scan

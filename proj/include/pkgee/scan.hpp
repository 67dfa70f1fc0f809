#pragma once

// Table ingestion and the per-SNP association scan.
//
// Concentrations: CSV with header subject_id,time_h,conc_mg_per_l,dose_mg,t_in_h
// (any column order), one row per observation, natural-scale concentrations.
// Genotypes: wide CSV, subject_id then one column per SNP holding 0/1/2 for
// aa/Aa/AA and NA (or empty) for missing.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pkgee/gee.hpp"
#include "pkgee/inference.hpp"
#include "pkgee/sim.hpp"

namespace pkgee::scan {

struct GenotypeMatrix {
  static constexpr std::int8_t kMissing = -1;

  std::vector<std::string> subject_ids;
  std::vector<std::string> snp_ids;
  std::vector<std::int8_t> entries;  // subject-major, 0/1/2 or kMissing

  std::size_t num_subjects() const { return subject_ids.size(); }
  std::size_t num_snps() const { return snp_ids.size(); }
  std::int8_t at(std::size_t subject, std::size_t snp) const {
    return entries[subject * snp_ids.size() + snp];
  }
  std::int8_t& at(std::size_t subject, std::size_t snp) {
    return entries[subject * snp_ids.size() + snp];
  }
};

/// Subjects in order of first appearance, times sorted, concentrations
/// log-transformed. Genotypes are left at aa. `source` names the input in errors.
std::vector<SubjectRecord> read_concentrations(std::istream& in, const std::string& source = "concentrations");
GenotypeMatrix read_genotypes(std::istream& in, const std::string& source = "genotypes");

void write_concentrations(std::ostream& out, const std::vector<SubjectRecord>& subjects);
void write_genotypes(std::ostream& out, const GenotypeMatrix& g);

struct LoadOptions {
  bool allow_unmatched = false;  // drop, rather than reject, subjects found in one table only
};

struct LoadedTables {
  std::vector<SubjectRecord> subjects;  // only subjects present in both tables
  GenotypeMatrix genotypes;
  std::vector<std::string> unmatched;   // ids dropped under allow_unmatched
};

/// Throws ParseError, SchemaError or JoinError.
LoadedTables load_tables(const std::filesystem::path& conc_path,
                         const std::filesystem::path& geno_path, const LoadOptions& opts = {});

struct ScanPolicy {
  double family_alpha = 0.05;
  std::optional<double> alpha;  // per-test cutoff; default family_alpha / (M * 4)
  unsigned threads = 0;         // 0: PKGEE_THREADS or hardware concurrency
  SolverConfig solver;

  double threshold(std::size_t num_snps) const;
};

struct ScanTest {
  double estimate = 0.0;
  double std_error = 0.0;
  double df = 0.0;
  double statistic = 0.0;
  double p_value = 0.0;
  bool estimable = false;
};

struct ScanRow {
  std::string snp_id;
  int n_subjects = 0;
  int excluded = 0;  // subjects with a missing genotype at this SNP
  std::array<int, 3> genotype_counts{};
  bool converged = false;
  int iterations = 0;
  bool corrected_available = false;
  std::string error;  // why the fit or a variance estimate failed, if it did
  Coefficients beta_hat = Coefficients::Zero();
  std::array<std::array<ScanTest, 8>, 2> wald{};  // [kind][effect]
  std::array<std::array<ScanTest, 4>, 2> f{};     // [kind][pk parameter]
  bool significant = false;  // some plain F test below the cutoff
  bool significant_corrected = false;
};

/// Fits every SNP of `genotypes` independently. Subjects are matched by id;
/// a subject with a missing genotype is excluded for that SNP only. Rows come
/// back ordered by snp_id. Per-SNP failures are recorded, never thrown.
std::vector<ScanRow> scan(const std::vector<SubjectRecord>& subjects, const GenotypeMatrix& genotypes,
                          const ScanPolicy& policy = {});

/// Fits one SNP (no thread pool).
ScanRow scan_one(const std::vector<SubjectRecord>& subjects, const std::vector<std::int8_t>& genotype,
                 const std::string& snp_id, const ScanPolicy& policy, double threshold);

void write_results_csv(std::ostream& out, const std::vector<ScanRow>& rows);

/// Estimate / S.E. / d.f. / P-value block for one SNP.
void print_fit_block(std::ostream& out, const ScanRow& row);
// Same content as one JSON object; NaN and non-estimable tests are null.
void write_fit_json(std::ostream& out, const ScanRow& row);

struct Panel {
  std::vector<SubjectRecord> subjects;
  GenotypeMatrix genotypes;
};

/// Null panel: concentrations from one replicate of `cfg` (its genotype
/// layout is discarded) and `num_snps` SNPs whose genotypes are drawn
/// independently from Hardy-Weinberg proportions at cfg.maf, each entry
/// missing with probability `missing_rate`.
Panel synthetic_panel(const sim::ScenarioConfig& cfg, std::size_t num_snps, double missing_rate = 0.0);

/// Formats with 17 significant digits ("NA" for NaN).
std::string format_double(double v);

}  // namespace pkgee::scan

// pkgee: fit, scan and simulate from the command line.
//
// Every flag can also come from a key=value config file (--config), with
// subcommand keys under a [fit], [scan], [simulate] or [synth] section.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "pkgee/errors.hpp"
#include "pkgee/scan.hpp"
#include "pkgee/sim.hpp"

namespace {

using namespace pkgee;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  return out;
}

struct SolverFlags {
  int max_iterations = SolverConfig{}.max_iterations;
  double score_tol = SolverConfig{}.score_tol;

  void add(CLI::App* app) {
    app->add_option("--max-iterations", max_iterations, "Gauss-Newton iteration budget")->check(CLI::PositiveNumber);
    app->add_option("--score-tol", score_tol, "convergence tolerance on max|U| / (1 + max|beta|)")
        ->check(CLI::PositiveNumber);
  }
  SolverConfig config() const {
    SolverConfig c;
    c.max_iterations = max_iterations;
    c.score_tol = score_tol;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GEE fitting and genotype scans for two-compartment infusion PK data"};
  app.set_config("--config", "", "key=value config file mirroring the flags");
  app.require_subcommand(1);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit one SNP and print estimate / S.E. / d.f. / P-value");
  std::string fit_conc, fit_geno, fit_snp;
  bool fit_unmatched = false, fit_json = false;
  SolverFlags fit_solver;
  fit_cmd->add_option("--conc", fit_conc, "concentration CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--geno", fit_geno, "genotype CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--snp", fit_snp, "SNP column to fit (default: the only one)");
  fit_cmd->add_flag("--allow-unmatched", fit_unmatched, "drop subjects present in one table only");
  fit_cmd->add_flag("--json", fit_json, "print the result as JSON instead of a table");
  fit_solver.add(fit_cmd);

  // scan
  auto* scan_cmd = app.add_subcommand("scan", "fit every SNP column and write one result row per SNP");
  std::string scan_conc, scan_geno, scan_out;
  std::optional<double> scan_alpha;
  double scan_family_alpha = 0.05;
  unsigned scan_threads = 0;
  bool scan_unmatched = false;
  SolverFlags scan_solver;
  scan_cmd->add_option("--conc", scan_conc, "concentration CSV")->required()->check(CLI::ExistingFile);
  scan_cmd->add_option("--geno", scan_geno, "genotype CSV")->required()->check(CLI::ExistingFile);
  scan_cmd->add_option("--out", scan_out, "results CSV")->required();
  scan_cmd->add_option("--alpha", scan_alpha, "per-test cutoff (default family-alpha / (4 M))");
  scan_cmd->add_option("--family-alpha", scan_family_alpha, "genome-wide level for the Bonferroni cutoff");
  scan_cmd->add_option("--threads", scan_threads, "worker threads (default PKGEE_THREADS or all cores)");
  scan_cmd->add_flag("--allow-unmatched", scan_unmatched, "drop subjects present in one table only");
  scan_solver.add(scan_cmd);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "run a Monte-Carlo scenario and write its summary CSV");
  int sim_scenario = 1;
  double sim_maf = 0.25;
  int sim_reps = 1000;
  std::uint64_t sim_seed = sim::ScenarioConfig{}.seed;
  unsigned sim_threads = 0;
  std::string sim_out;
  sim_cmd->add_option("--scenario", sim_scenario, "scenario 1-7")->check(CLI::Range(1, 7));
  sim_cmd->add_option("--maf", sim_maf, "minor-allele frequency (0.25 or 0.5)");
  sim_cmd->add_option("--replicates", sim_reps, "number of simulated datasets")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_seed, "base seed");
  sim_cmd->add_option("--threads", sim_threads, "worker threads (default PKGEE_THREADS or all cores)");
  sim_cmd->add_option("--out", sim_out, "summary CSV (default: stdout table only)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic null panel (concentrations + genotypes)");
  std::size_t synth_snps = 100;
  double synth_maf = 0.25;
  double synth_missing = 0.0;
  std::uint64_t synth_seed = sim::ScenarioConfig{}.seed;
  std::string synth_conc, synth_geno;
  synth_cmd->add_option("--snps", synth_snps, "number of SNP columns");
  synth_cmd->add_option("--maf", synth_maf, "minor-allele frequency of every SNP");
  synth_cmd->add_option("--missing-rate", synth_missing, "probability that a genotype is NA");
  synth_cmd->add_option("--seed", synth_seed, "seed");
  synth_cmd->add_option("--conc", synth_conc, "concentration CSV to write")->required();
  synth_cmd->add_option("--geno", synth_geno, "genotype CSV to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit_cmd) {
      auto tables = scan::load_tables(fit_conc, fit_geno, {fit_unmatched});
      const auto& g = tables.genotypes;
      std::size_t j = 0;
      if (fit_snp.empty()) {
        if (g.num_snps() != 1) throw Error(ErrorKind::InvalidArgument, "--snp is required when the genotype table has several SNPs");
      } else {
        const auto it = std::find(g.snp_ids.begin(), g.snp_ids.end(), fit_snp);
        if (it == g.snp_ids.end()) throw Error(ErrorKind::SchemaError, "no SNP column '" + fit_snp + "'");
        j = static_cast<std::size_t>(it - g.snp_ids.begin());
      }
      // load_tables keeps subjects and genotype rows aligned by id, not position.
      std::vector<std::int8_t> column(tables.subjects.size());
      for (std::size_t i = 0; i < tables.subjects.size(); ++i) {
        const auto it = std::find(g.subject_ids.begin(), g.subject_ids.end(), tables.subjects[i].subject_id);
        column[i] = g.at(static_cast<std::size_t>(it - g.subject_ids.begin()), j);
      }
      scan::ScanPolicy policy;
      policy.solver = fit_solver.config();
      const auto row = scan::scan_one(tables.subjects, column, g.snp_ids[j], policy, policy.threshold(1));
      if (fit_json) {
        scan::write_fit_json(std::cout, row);
      } else {
        scan::print_fit_block(std::cout, row);
      }
      return row.converged ? 0 : 3;
    }

    if (*scan_cmd) {
      auto tables = scan::load_tables(scan_conc, scan_geno, {scan_unmatched});
      for (const auto& id : tables.unmatched) std::cerr << "unmatched subject dropped: " << id << '\n';
      scan::ScanPolicy policy;
      policy.alpha = scan_alpha;
      policy.family_alpha = scan_family_alpha;
      policy.threads = scan_threads;
      policy.solver = scan_solver.config();
      const auto rows = scan::scan(tables.subjects, tables.genotypes, policy);
      auto out = open_out(scan_out);
      scan::write_results_csv(out, rows);
      std::size_t hits = 0, failed = 0;
      for (const auto& r : rows) {
        hits += r.significant;
        failed += !r.converged;
      }
      std::cerr << rows.size() << " SNPs, cutoff " << scan::format_double(policy.threshold(rows.size()))
                << ", " << hits << " significant, " << failed << " without a converged fit\n";
      return 0;
    }

    if (*sim_cmd) {
      auto cfg = sim::ScenarioConfig::preset(sim_scenario, sim_maf);
      cfg.n_replicates = sim_reps;
      cfg.seed = sim_seed;
      const auto summary = sim::run_study(cfg, sim_threads);
      sim::print_summary_table(std::cout, summary);
      if (!sim_out.empty()) {
        auto out = open_out(sim_out);
        sim::write_summary_csv(out, {summary});
      }
      return 0;
    }

    if (*synth_cmd) {
      auto cfg = sim::ScenarioConfig::preset(1, synth_maf);
      cfg.seed = synth_seed;
      const auto panel = scan::synthetic_panel(cfg, synth_snps, synth_missing);
      auto conc = open_out(synth_conc);
      scan::write_concentrations(conc, panel.subjects);
      auto geno = open_out(synth_geno);
      scan::write_genotypes(geno, panel.genotypes);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "pkgee: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pkgee: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

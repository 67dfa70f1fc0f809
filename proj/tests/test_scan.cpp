#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pkgee/errors.hpp"
#include "pkgee/scan.hpp"

using namespace pkgee;
using namespace pkgee::scan;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::InvalidArgument;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pkgee_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kConc =
    "subject_id,time_h,conc_mg_per_l,dose_mg,t_in_h\n"
    "P1,0.5,12.5,1400,0.5\n"
    "P1,0.1,4.25,1400,0.5\n"
    "P1,2.0,1.5,1400,0.5\n"
    "P2,0.1,3.0,1200,0.5\n"
    "P2,1.0,2.0,1200,0.5\n";

}  // namespace

TEST_CASE("concentration table parsing") {
  std::istringstream in(kConc);
  const auto s = read_concentrations(in);
  REQUIRE(s.size() == 2);
  CHECK(s[0].subject_id == "P1");
  CHECK(s[0].times == std::vector<double>{0.1, 0.5, 2.0});
  CHECK(s[0].log_conc[0] == doctest::Approx(std::log(4.25)).epsilon(1e-15));
  CHECK(s[0].log_conc[1] == doctest::Approx(std::log(12.5)).epsilon(1e-15));
  CHECK(s[1].infusion.dose_mg == 1200.0);
  CHECK(s[1].genotype == Genotype::aa);
}

TEST_CASE("columns may come in any order") {
  std::istringstream in(
      "dose_mg,t_in_h,subject_id,conc_mg_per_l,time_h\n"
      "1400,0.5,Q,4.0,0.25\n");
  const auto s = read_concentrations(in);
  REQUIRE(s.size() == 1);
  CHECK(s[0].times[0] == 0.25);
  CHECK(s[0].log_conc[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("malformed concentration rows are parse errors with a location") {
  auto parse = [](const std::string& body) {
    return [body] {
      std::istringstream in("subject_id,time_h,conc_mg_per_l,dose_mg,t_in_h\n" + body);
      read_concentrations(in, "conc.csv");
    };
  };
  CHECK(kind_of(parse("P1,0,4.0,1400,0.5\n")) == ErrorKind::ParseError);
  CHECK(message_of(parse("P1,0.1,1,1400,0.5\nP1,0,4.0,1400,0.5\n")).find("conc.csv:3:") != std::string::npos);
  CHECK(message_of(parse("P1,0,4.0,1400,0.5\n")).find("time_h = 0") != std::string::npos);
  CHECK(kind_of(parse("P1,0.1,0,1400,0.5\n")) == ErrorKind::ParseError);
  CHECK(kind_of(parse("P1,0.1,-2,1400,0.5\n")) == ErrorKind::ParseError);
  CHECK(kind_of(parse("P1,0.1,abc,1400,0.5\n")) == ErrorKind::ParseError);
  CHECK(kind_of(parse("P1,0.1,4.0,1400\n")) == ErrorKind::ParseError);
  CHECK(kind_of(parse("P1,0.1,4.0,1400,0.5\nP1,0.2,4.0,1500,0.5\n")) == ErrorKind::ParseError);
  CHECK(kind_of(parse("P1,0.1,4.0,1400,0.5\nP1,0.1,3.0,1400,0.5\n")) == ErrorKind::ParseError);
}

TEST_CASE("schema errors") {
  auto conc = [](const std::string& text) {
    return [text] {
      std::istringstream in(text);
      read_concentrations(in);
    };
  };
  CHECK(kind_of(conc("")) == ErrorKind::SchemaError);
  CHECK(kind_of(conc("subject_id,time_h,conc_mg_per_l,dose_mg\nP,1,1,1\n")) == ErrorKind::SchemaError);
  auto geno = [](const std::string& text) {
    return [text] {
      std::istringstream in(text);
      read_genotypes(in);
    };
  };
  CHECK(kind_of(geno("id,rs1\nP1,0\n")) == ErrorKind::SchemaError);
  CHECK(kind_of(geno("subject_id,rs1,rs1\nP1,0,1\n")) == ErrorKind::SchemaError);
  CHECK(kind_of(geno("subject_id,rs1\nP1,3\n")) == ErrorKind::ParseError);
}

TEST_CASE("genotype table parsing") {
  std::istringstream in("subject_id,rs2,rs1\nP1,0,NA\nP2,2,\nP3,1,1\n");
  const auto g = read_genotypes(in);
  CHECK(g.snp_ids == std::vector<std::string>{"rs2", "rs1"});
  CHECK(g.num_subjects() == 3);
  CHECK(g.at(0, 1) == GenotypeMatrix::kMissing);
  CHECK(g.at(1, 1) == GenotypeMatrix::kMissing);
  CHECK(g.at(1, 0) == 2);
  CHECK(g.at(2, 1) == 1);
}

TEST_CASE("joining the two tables") {
  const auto dir = temp_dir("join");
  write_file(dir / "conc.csv", kConc);
  write_file(dir / "geno_ok.csv", "subject_id,rs1\nP2,1\nP1,0\n");
  write_file(dir / "geno_extra.csv", "subject_id,rs1\nP2,1\nP1,0\nP9,2\n");
  write_file(dir / "geno_short.csv", "subject_id,rs1\nP1,0\n");

  const auto ok = load_tables(dir / "conc.csv", dir / "geno_ok.csv");
  CHECK(ok.subjects.size() == 2);
  CHECK(ok.unmatched.empty());

  CHECK(kind_of([&] { load_tables(dir / "conc.csv", dir / "geno_extra.csv"); }) == ErrorKind::JoinError);
  CHECK(kind_of([&] { load_tables(dir / "conc.csv", dir / "geno_short.csv"); }) == ErrorKind::JoinError);

  const auto extra = load_tables(dir / "conc.csv", dir / "geno_extra.csv", {true});
  CHECK(extra.unmatched == std::vector<std::string>{"P9"});
  CHECK(extra.subjects.size() == 2);
  const auto shorter = load_tables(dir / "conc.csv", dir / "geno_short.csv", {true});
  CHECK(shorter.subjects.size() == 1);
  CHECK(shorter.unmatched == std::vector<std::string>{"P2"});

  CHECK(kind_of([&] { load_tables(dir / "missing.csv", dir / "geno_ok.csv"); }) == ErrorKind::ParseError);
}

TEST_CASE("write and read back a synthetic panel") {
  const auto panel = synthetic_panel(sim::ScenarioConfig::preset(1, 0.25), 5, 0.1);
  std::stringstream conc, geno;
  write_concentrations(conc, panel.subjects);
  write_genotypes(geno, panel.genotypes);
  const auto subjects = read_concentrations(conc);
  const auto g = read_genotypes(geno);
  REQUIRE(subjects.size() == panel.subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    CHECK(subjects[i].subject_id == panel.subjects[i].subject_id);
    CHECK(subjects[i].times == panel.subjects[i].times);
    for (std::size_t j = 0; j < subjects[i].times.size(); ++j) {
      CHECK(std::abs(subjects[i].log_conc[j] - panel.subjects[i].log_conc[j]) <= 1e-15);
    }
  }
  CHECK(g.snp_ids == panel.genotypes.snp_ids);
  CHECK(g.entries == panel.genotypes.entries);
  int missing = 0;
  for (auto v : g.entries) missing += v == GenotypeMatrix::kMissing;
  CHECK(missing > 0);
}

TEST_CASE("Bonferroni cutoff") {
  ScanPolicy p;
  CHECK(p.threshold(109365) == doctest::Approx(1.143e-7).epsilon(1e-3));
  CHECK(p.threshold(1) == 0.0125);
  p.alpha = 1e-3;
  CHECK(p.threshold(109365) == 1e-3);
}

TEST_CASE("missing genotypes exclude the subject for that SNP only") {
  auto cfg = sim::ScenarioConfig::preset(1, 0.5);
  auto panel = synthetic_panel(cfg, 2, 0.0);
  for (std::size_t i = 0; i < 10; ++i) panel.genotypes.at(i, 0) = GenotypeMatrix::kMissing;
  const auto rows = scan::scan(panel.subjects, panel.genotypes);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].excluded == 10);
  CHECK(rows[0].n_subjects == 90);
  CHECK(rows[1].excluded == 0);
  CHECK(rows[1].n_subjects == 100);
  CHECK(rows[0].genotype_counts[0] + rows[0].genotype_counts[1] + rows[0].genotype_counts[2] == 90);

  // Same fit as handing scan_one the reduced subject list.
  std::vector<SubjectRecord> kept;
  std::vector<std::int8_t> column;
  for (std::size_t i = 10; i < panel.subjects.size(); ++i) {
    kept.push_back(panel.subjects[i]);
    column.push_back(panel.genotypes.at(i, 0));
  }
  const auto direct = scan_one(kept, column, "x", {}, 1e-9);
  CHECK((direct.beta_hat - rows[0].beta_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a SNP without homozygous carriers reports AA effects as not estimable") {
  auto panel = synthetic_panel(sim::ScenarioConfig::preset(1, 0.25), 1, 0.0);
  for (std::size_t i = 0; i < panel.subjects.size(); ++i) {
    if (panel.genotypes.at(i, 0) == 2) panel.genotypes.at(i, 0) = 1;
  }
  const auto rows = scan::scan(panel.subjects, panel.genotypes);
  const auto& r = rows[0];
  CHECK(r.converged);
  CHECK(r.genotype_counts[2] == 0);
  CHECK(std::isnan(r.beta_hat[coef::kVdAA]));
  CHECK_FALSE(r.wald[0][1].estimable);
  CHECK(r.wald[0][0].estimable);
  CHECK_FALSE(r.f[0][0].estimable);
  CHECK_FALSE(r.significant);
}

TEST_CASE("a SNP without reference-genotype subjects is recorded, not thrown") {
  auto panel = synthetic_panel(sim::ScenarioConfig::preset(1, 0.25), 1, 0.0);
  for (std::size_t i = 0; i < panel.subjects.size(); ++i) panel.genotypes.at(i, 0) = 1 + (i % 2);
  const auto rows = scan::scan(panel.subjects, panel.genotypes);
  CHECK_FALSE(rows[0].converged);
  CHECK(rows[0].error.find("reference genotype") != std::string::npos);
  std::ostringstream out;
  write_results_csv(out, rows);
  CHECK(out.str().find(",NA,") != std::string::npos);
}

TEST_CASE("scan output does not depend on the thread count") {
  const auto panel = synthetic_panel(sim::ScenarioConfig::preset(1, 0.25), 40, 0.02);
  std::string first;
  for (unsigned threads : {1u, 3u, 8u}) {
    ScanPolicy p;
    p.threads = threads;
    std::ostringstream out;
    write_results_csv(out, scan::scan(panel.subjects, panel.genotypes, p));
    if (first.empty()) first = out.str();
    CHECK(out.str() == first);
  }
}

TEST_CASE("results CSV and fit block") {
  const auto panel = synthetic_panel(sim::ScenarioConfig::preset(1, 0.5), 3, 0.0);
  const auto rows = scan::scan(panel.subjects, panel.genotypes);
  std::ostringstream out;
  write_results_csv(out, rows);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("snp_id,n_subjects,excluded,n_aa,n_Aa,n_AA,converged", 0) == 0);
  const auto cols = std::count(header.begin(), header.end(), ',');
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    CHECK(std::count(line.begin(), line.end(), ',') == cols);
  }
  CHECK(n == 3);
  CHECK(rows[0].snp_id < rows[1].snp_id);

  std::ostringstream block;
  print_fit_block(block, rows[0]);
  const auto text = block.str();
  const auto est = text.find("Estimate"), se = text.find("S.E."), df = text.find("d.f."), p = text.find("P-value");
  REQUIRE(est != std::string::npos);
  CHECK(est < se);
  CHECK(se < df);
  CHECK(df < p);
  CHECK(text.find("beta_K21_AA") != std::string::npos);
}

TEST_CASE("fit JSON carries the same numbers") {
  auto panel = synthetic_panel(sim::ScenarioConfig::preset(1, 0.25), 1, 0.0);
  for (std::size_t i = 0; i < panel.subjects.size(); ++i) {
    if (panel.genotypes.at(i, 0) == 2) panel.genotypes.at(i, 0) = 1;
  }
  const auto row = scan::scan(panel.subjects, panel.genotypes)[0];
  std::ostringstream out;
  write_fit_json(out, row);
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j["snp_id"] == row.snp_id);
  CHECK(j["genotype_counts"]["AA"] == 0);
  CHECK(j["converged"] == row.converged);
  CHECK(j["beta_hat"]["beta_Kel"].get<double>() == row.beta_hat[coef::kKel]);
  CHECK(j["beta_hat"]["beta_Vd_AA"].is_null());
  const auto& w = j["corrected"]["wald"]["beta_Vd_Aa"];
  CHECK(w["estimate"].get<double>() == row.wald[1][0].estimate);
  CHECK(w["p_value"].get<double>() == row.wald[1][0].p_value);
  CHECK(j["plain"]["wald"]["beta_Vd_AA"].is_null());
  CHECK(j["plain"]["f"]["C_Vd"].is_null());
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(std::nan("")) == "NA");
}

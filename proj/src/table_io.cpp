#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "pkgee/errors.hpp"
#include "pkgee/scan.hpp"

namespace pkgee::scan {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool blank(std::string_view line) { return trim(line).empty(); }

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& why) {
  throw Error(ErrorKind::ParseError, source + ":" + std::to_string(line) + ": " + why);
}

double parse_number(std::string_view field, const std::string& source, std::size_t line,
                    const char* column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    parse_error(source, line, std::string(column) + " '" + std::string(field) + "' is not a finite number");
  }
  return v;
}

struct Observation {
  double time;
  double log_conc;
  std::size_t line;
};

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::vector<SubjectRecord> read_concentrations(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!blank(line)) break;
  }
  if (line_no == 0 || blank(line)) throw Error(ErrorKind::SchemaError, source + ": missing header row");

  static constexpr const char* kColumns[5] = {"subject_id", "time_h", "conc_mg_per_l", "dose_mg", "t_in_h"};
  const auto header = split(line);
  int pos[5];
  for (int c = 0; c < 5; ++c) {
    const auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end()) {
      throw Error(ErrorKind::SchemaError, source + ": required column '" + kColumns[c] + "' is missing");
    }
    pos[c] = static_cast<int>(it - header.begin());
  }

  std::vector<SubjectRecord> subjects;
  std::vector<std::vector<Observation>> obs;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      parse_error(source, line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                       std::to_string(fields.size()));
    }
    const std::string id(fields[pos[0]]);
    if (id.empty()) parse_error(source, line_no, "empty subject_id");
    const double t = parse_number(fields[pos[1]], source, line_no, "time_h");
    const double conc = parse_number(fields[pos[2]], source, line_no, "conc_mg_per_l");
    const double dose = parse_number(fields[pos[3]], source, line_no, "dose_mg");
    const double t_in = parse_number(fields[pos[4]], source, line_no, "t_in_h");
    if (t == 0.0) {
      parse_error(source, line_no,
                  "time_h = 0 is not allowed: the model is fitted to log concentrations, which are undefined at t = 0");
    }
    if (t < 0.0) parse_error(source, line_no, "time_h must be > 0");
    if (!(conc > 0.0)) {
      parse_error(source, line_no, "conc_mg_per_l must be > 0 (log-transformed at load; filter values below quantification first)");
    }
    if (!(dose > 0.0) || !(t_in > 0.0)) parse_error(source, line_no, "dose_mg and t_in_h must be > 0");

    auto [it, inserted] = index.emplace(id, subjects.size());
    if (inserted) {
      SubjectRecord s;
      s.subject_id = id;
      s.infusion = {dose, t_in};
      subjects.push_back(std::move(s));
      obs.emplace_back();
    } else {
      const auto& inf = subjects[it->second].infusion;
      if (inf.dose_mg != dose || inf.t_in_h != t_in) {
        parse_error(source, line_no, "dose_mg / t_in_h differ from earlier rows of subject '" + id + "'");
      }
    }
    obs[it->second].push_back({t, std::log(conc), line_no});
  }

  for (std::size_t i = 0; i < subjects.size(); ++i) {
    auto& o = obs[i];
    std::stable_sort(o.begin(), o.end(), [](const Observation& a, const Observation& b) { return a.time < b.time; });
    for (std::size_t j = 1; j < o.size(); ++j) {
      if (o[j].time == o[j - 1].time) {
        parse_error(source, o[j].line, "duplicate time_h for subject '" + subjects[i].subject_id + "'");
      }
    }
    for (const auto& x : o) {
      subjects[i].times.push_back(x.time);
      subjects[i].log_conc.push_back(x.log_conc);
    }
  }
  return subjects;
}

GenotypeMatrix read_genotypes(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!blank(line)) break;
  }
  if (line_no == 0 || blank(line)) throw Error(ErrorKind::SchemaError, source + ": missing header row");
  const auto header = split(line);
  if (header.empty() || header[0] != "subject_id") {
    throw Error(ErrorKind::SchemaError, source + ": first column must be 'subject_id'");
  }
  GenotypeMatrix g;
  std::unordered_set<std::string> seen_snps;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw Error(ErrorKind::SchemaError, source + ": empty SNP column name at position " + std::to_string(c + 1));
    if (!seen_snps.emplace(header[c]).second) {
      throw Error(ErrorKind::SchemaError, source + ": duplicate SNP column '" + std::string(header[c]) + "'");
    }
    g.snp_ids.emplace_back(header[c]);
  }
  std::unordered_set<std::string> seen_subjects;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      parse_error(source, line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                       std::to_string(fields.size()));
    }
    const std::string id(fields[0]);
    if (id.empty()) parse_error(source, line_no, "empty subject_id");
    if (!seen_subjects.insert(id).second) parse_error(source, line_no, "duplicate subject '" + id + "'");
    g.subject_ids.push_back(id);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const auto f = fields[c];
      std::int8_t v;
      if (f == "0") v = 0;
      else if (f == "1") v = 1;
      else if (f == "2") v = 2;
      else if (f.empty() || f == "NA") v = GenotypeMatrix::kMissing;
      else parse_error(source, line_no, "genotype '" + std::string(f) + "' for " + g.snp_ids[c - 1] + " is not 0, 1, 2 or NA");
      g.entries.push_back(v);
    }
  }
  return g;
}

void write_concentrations(std::ostream& out, const std::vector<SubjectRecord>& subjects) {
  out << "subject_id,time_h,conc_mg_per_l,dose_mg,t_in_h\n";
  for (const auto& s : subjects) {
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      out << s.subject_id << ',' << format_double(s.times[j]) << ',' << format_double(std::exp(s.log_conc[j]))
          << ',' << format_double(s.infusion.dose_mg) << ',' << format_double(s.infusion.t_in_h) << '\n';
    }
  }
}

void write_genotypes(std::ostream& out, const GenotypeMatrix& g) {
  out << "subject_id";
  for (const auto& s : g.snp_ids) out << ',' << s;
  out << '\n';
  for (std::size_t i = 0; i < g.num_subjects(); ++i) {
    out << g.subject_ids[i];
    for (std::size_t j = 0; j < g.num_snps(); ++j) {
      const auto v = g.at(i, j);
      out << ',';
      if (v == GenotypeMatrix::kMissing) out << "NA";
      else out << static_cast<int>(v);
    }
    out << '\n';
  }
}

LoadedTables load_tables(const std::filesystem::path& conc_path, const std::filesystem::path& geno_path,
                         const LoadOptions& opts) {
  std::ifstream conc_in(conc_path);
  if (!conc_in) throw Error(ErrorKind::ParseError, conc_path.string() + ": cannot open");
  std::ifstream geno_in(geno_path);
  if (!geno_in) throw Error(ErrorKind::ParseError, geno_path.string() + ": cannot open");

  LoadedTables t;
  auto subjects = read_concentrations(conc_in, conc_path.string());
  GenotypeMatrix geno = read_genotypes(geno_in, geno_path.string());

  std::unordered_set<std::string> in_geno(geno.subject_ids.begin(), geno.subject_ids.end());
  std::unordered_set<std::string> in_conc;
  for (const auto& s : subjects) in_conc.insert(s.subject_id);

  for (auto& s : subjects) {
    if (in_geno.count(s.subject_id)) {
      t.subjects.push_back(std::move(s));
    } else if (opts.allow_unmatched) {
      t.unmatched.push_back(s.subject_id);
    } else {
      throw Error(ErrorKind::JoinError, "subject '" + s.subject_id + "' has concentrations but no genotype row");
    }
  }
  // Keep only genotype rows with concentration data, in their file order.
  GenotypeMatrix kept;
  kept.snp_ids = geno.snp_ids;
  for (std::size_t i = 0; i < geno.num_subjects(); ++i) {
    if (!in_conc.count(geno.subject_ids[i])) {
      if (!opts.allow_unmatched) {
        throw Error(ErrorKind::JoinError, "subject '" + geno.subject_ids[i] + "' has genotypes but no concentrations");
      }
      t.unmatched.push_back(geno.subject_ids[i]);
      continue;
    }
    kept.subject_ids.push_back(geno.subject_ids[i]);
    for (std::size_t j = 0; j < geno.num_snps(); ++j) kept.entries.push_back(geno.at(i, j));
  }
  t.genotypes = std::move(kept);
  for (const auto& s : t.subjects) s.validate();
  return t;
}

}  // namespace pkgee::scan

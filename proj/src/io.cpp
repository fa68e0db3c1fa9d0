#include "dah/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "dah/errors.hpp"

namespace dah {

namespace fs = std::filesystem;

const char* location_name(Location l) {
  switch (l) {
    case Location::Home: return "home";
    case Location::Hospital: return "hospital";
    case Location::RespiteOrNursing: return "respite_or_nursing";
    case Location::Dead: return "dead";
  }
  return "?";
}

Location parse_location(const std::string& s) {
  for (Location l : {Location::Home, Location::Hospital, Location::RespiteOrNursing, Location::Dead})
    if (s == location_name(l)) return l;
  if (s == "respite" || s == "nursing") return Location::RespiteOrNursing;
  throw DataError("unknown location '" + s + "'");
}

const char* residence_name(Residence r) { return r == Residence::Home ? "home" : "nursing"; }

Residence parse_residence(const std::string& s) {
  if (s == "home") return Residence::Home;
  if (s == "nursing") return Residence::Nursing;
  throw DataError("unknown baseline residence '" + s + "'");
}

PatientComponents derive_patient(std::span<const TrajectoryRecord> days, Residence residence, int u, int ptilde,
                                 DahDefinition definition) {
  const std::string id = days.empty() ? std::string("?") : days.front().patient_id;
  if (static_cast<int>(days.size()) != u)
    throw DataError("patient " + id + ": " + std::to_string(days.size()) + " days recorded, expected " +
                    std::to_string(u));
  bool dead = false;
  for (int d = 0; d < u; ++d) {
    const auto& r = days[static_cast<std::size_t>(d)];
    if (r.day != d + 1) {
      const bool duplicate = d > 0 && r.day == days[static_cast<std::size_t>(d - 1)].day;
      throw DataError("patient " + id + ": " + (duplicate ? "duplicate day " : "missing day ") +
                      std::to_string(duplicate ? r.day : d + 1));
    }
    if (dead && r.location != Location::Dead)
      throw DataError("patient " + id + ": alive on day " + std::to_string(r.day) + " after death");
    dead = r.location == Location::Dead;
  }

  int y_I = 0;
  while (y_I < u && days[static_cast<std::size_t>(y_I)].location == Location::Hospital) ++y_I;
  int y_S = 0;
  for (int d = y_I; d < u; ++d) {
    switch (days[static_cast<std::size_t>(d)].location) {
      case Location::Hospital: ++y_S; break;
      case Location::RespiteOrNursing:
        y_S += definition == DahDefinition::DaysAtHome && residence == Residence::Home;
        break;
      default: break;
    }
  }
  return components_from_observed(u, ptilde, dead, y_I, y_S);
}

PatientTable derive_components(const TrajectoryData& trajectories, int u, int ptilde, DahDefinition definition) {
  if (u < 1 || ptilde < 0 || ptilde >= u) throw ConfigError("need 0 <= p~ < u");
  std::map<std::string, std::vector<TrajectoryRecord>> by_patient;
  for (const auto& r : trajectories.records) {
    if (r.day < 1 || r.day > u)
      throw DataError("patient " + r.patient_id + ": day " + std::to_string(r.day) + " outside 1.." + std::to_string(u));
    by_patient[r.patient_id].push_back(r);
  }
  PatientTable out;
  std::map<std::string, bool> seen;
  for (const auto& b : trajectories.patients) {
    if (seen[b.patient_id]) throw DataError("patient " + b.patient_id + " has more than one baseline row");
    seen[b.patient_id] = true;
    auto it = by_patient.find(b.patient_id);
    if (it == by_patient.end()) throw DataError("patient " + b.patient_id + " has no trajectory records");
    auto& days = it->second;
    std::stable_sort(days.begin(), days.end(), [](const auto& a, const auto& c) { return a.day < c.day; });
    const auto p = derive_patient(days, b.residence, u, ptilde, definition);
    out.ids.push_back(b.patient_id);
    out.dah.push_back(p.dah);
    out.data.patients.push_back(p);
    if (!p.dead && p.y_I < ptilde) ++out.protocol_observations;
  }
  for (const auto& [id, days] : by_patient)
    if (!seen.count(id)) throw DataError("patient " + id + " has trajectory records but no baseline row");
  out.data.covariates = covariate_frame(trajectories.patients);
  if (out.protocol_observations > 0)
    out.warnings.push_back(std::to_string(out.protocol_observations) + " survivors discharged before p~ = " +
                           std::to_string(ptilde) + " days (protocol-stay observations)");
  return out;
}

namespace {

double binary(const std::string& s, const std::string& what, const std::string& id) {
  if (s == "0") return 0.0;
  if (s == "1") return 1.0;
  throw DataError("patient " + id + ": " + what + " must be 0 or 1, got '" + s + "'");
}

int integer(const std::string& s, const std::string& what, const std::string& id) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("patient " + id + ": " + what + " must be an integer, got '" + s + "'");
  return v;
}

void check_country(const std::string& c, const std::string& id) {
  if (c != "UK" && c != "AU" && c != "NZ") throw DataError("patient " + id + ": unknown country '" + c + "'");
}

PatientBaseline baseline_from_row(const CsvTable& t, const std::vector<std::string>& row, const std::string& source,
                                  bool with_residence) {
  PatientBaseline b;
  b.patient_id = row[t.column("patient_id", source)];
  b.sex = binary(row[t.column("sex", source)], "sex", b.patient_id);
  b.treatment = binary(row[t.column("treatment", source)], "treatment", b.patient_id);
  b.bmi = binary(row[t.column("bmi", source)], "bmi", b.patient_id);
  b.age = binary(row[t.column("age", source)], "age", b.patient_id);
  b.country = row[t.column("country", source)];
  check_country(b.country, b.patient_id);
  if (with_residence) {
    const int c = t.find("baseline_residence");
    if (c >= 0) b.residence = parse_residence(row[static_cast<std::size_t>(c)]);
  }
  return b;
}

bool same_baseline(const PatientBaseline& a, const PatientBaseline& b) {
  return a.sex == b.sex && a.treatment == b.treatment && a.bmi == b.bmi && a.age == b.age && a.country == b.country &&
         a.residence == b.residence;
}

std::string binary_text(double v) { return v != 0.0 ? "1" : "0"; }

}  // namespace

Frame covariate_frame(std::span<const PatientBaseline> patients) {
  const auto n = static_cast<Eigen::Index>(patients.size());
  Eigen::VectorXd sex(n), trt(n), bmi(n), age(n), au(n), nz(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = patients[static_cast<std::size_t>(i)];
    check_country(p.country, p.patient_id);
    sex[i] = p.sex;
    trt[i] = p.treatment;
    bmi[i] = p.bmi;
    age[i] = p.age;
    au[i] = p.country == "AU";
    nz[i] = p.country == "NZ";
  }
  Frame f(patients.size());
  f.set("sex", sex);
  f.set("bmi", bmi);
  f.set("age", age);
  f.set("treatment", trt);
  f.set("country_AU", au);
  f.set("country_NZ", nz);
  f.declare_factor("country", {"country_AU", "country_NZ"});
  return f;
}

std::vector<PatientBaseline> baselines_from_frame(const Frame& frame, std::span<const std::string> ids) {
  if (ids.size() != frame.rows()) throw DataError("patient ids and covariate rows differ in number");
  std::vector<PatientBaseline> out(frame.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    auto& b = out[i];
    b.patient_id = ids[i];
    b.sex = frame.column("sex")[r];
    b.treatment = frame.column("treatment")[r];
    b.bmi = frame.column("bmi")[r];
    b.age = frame.column("age")[r];
    b.country = frame.column("country_AU")[r] != 0.0 ? "AU" : frame.column("country_NZ")[r] != 0.0 ? "NZ" : "UK";
  }
  return out;
}

// ---------------------------------------------------------------------------

TrajectoryData read_trajectories_csv(const fs::path& path) {
  const std::string source = path.string();
  const CsvTable t = parse_csv(read_file(path), source);
  const std::size_t id = t.column("patient_id", source), day = t.column("day", source),
                    loc = t.column("location", source);
  TrajectoryData out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    const auto b = baseline_from_row(t, row, source, true);
    auto [it, added] = index.emplace(b.patient_id, out.patients.size());
    if (added) {
      out.patients.push_back(b);
    } else if (!same_baseline(out.patients[it->second], b)) {
      throw DataError("patient " + b.patient_id + ": baseline columns change between days");
    }
    out.records.push_back({row[id], integer(row[day], "day", row[id]), parse_location(row[loc])});
  }
  return out;
}

std::string trajectories_csv(const TrajectoryData& data) {
  std::map<std::string, const PatientBaseline*> base;
  for (const auto& b : data.patients) base[b.patient_id] = &b;
  std::string out = "patient_id,day,location,sex,treatment,bmi,age,country,baseline_residence\n";
  for (const auto& r : data.records) {
    const auto it = base.find(r.patient_id);
    if (it == base.end()) throw DataError("patient " + r.patient_id + " has no baseline row");
    const auto& b = *it->second;
    const std::vector<std::string> f{r.patient_id,       std::to_string(r.day), location_name(r.location),
                                     binary_text(b.sex), binary_text(b.treatment), binary_text(b.bmi),
                                     binary_text(b.age), b.country,             residence_name(b.residence)};
    out += csv_line(f);
  }
  return out;
}

PatientTable read_components_csv(const fs::path& path, int u, int ptilde) {
  const std::string source = path.string();
  const CsvTable t = parse_csv(read_file(path), source);
  const std::size_t dead = t.column("dead", source), yi = t.column("y_I", source), ys = t.column("y_S", source);
  const int dah = t.find("dah");
  PatientTable out;
  std::vector<PatientBaseline> patients;
  std::map<std::string, bool> seen;
  for (const auto& row : t.rows) {
    const auto b = baseline_from_row(t, row, source, false);
    if (seen[b.patient_id]) throw DataError("patient " + b.patient_id + " appears twice");
    seen[b.patient_id] = true;
    PatientComponents p;
    try {
      p = components_from_observed(u, ptilde, binary(row[dead], "dead", b.patient_id) != 0.0,
                                   integer(row[yi], "y_I", b.patient_id), integer(row[ys], "y_S", b.patient_id));
    } catch (const DataError& e) {
      throw DataError("patient " + b.patient_id + ": " + e.what());
    }
    if (p.y_E > u - ptilde || (p.y_I == u && p.y_S > 0))
      throw DataError("patient " + b.patient_id + ": components inconsistent with u = " + std::to_string(u));
    if (dah >= 0 && integer(row[static_cast<std::size_t>(dah)], "dah", b.patient_id) != p.dah)
      throw DataError("patient " + b.patient_id + ": dah column disagrees with its components");
    out.ids.push_back(b.patient_id);
    out.dah.push_back(p.dah);
    out.data.patients.push_back(p);
    if (!p.dead && p.y_I < ptilde) ++out.protocol_observations;
    patients.push_back(b);
  }
  out.data.covariates = covariate_frame(patients);
  if (out.protocol_observations > 0)
    out.warnings.push_back(std::to_string(out.protocol_observations) + " survivors discharged before p~ = " +
                           std::to_string(ptilde) + " days (protocol-stay observations)");
  return out;
}

std::string components_csv(const PatientTable& table, int u) {
  const auto base = baselines_from_frame(table.data.covariates, table.ids);
  std::string out = "patient_id,dead,y_I,y_S,dah,sex,treatment,bmi,age,country\n";
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    const auto& p = table.data.patients[i];
    const auto& b = base[i];
    const std::vector<std::string> f{table.ids[i],       p.dead ? "1" : "0",
                                     std::to_string(p.y_I), std::to_string(p.y_S),
                                     std::to_string(dah_from_components(u, p.dead, p.y_I, p.y_S)),
                                     binary_text(b.sex), binary_text(b.treatment),
                                     binary_text(b.bmi), binary_text(b.age),
                                     b.country};
    out += csv_line(f);
  }
  return out;
}

PatientTable read_patient_data(const fs::path& path, int u, int ptilde, DahDefinition definition) {
  const std::string text = read_file(path);
  const std::string first = text.substr(0, text.find('\n'));
  const CsvTable head = parse_csv(first, path.string());
  if (head.find("day") >= 0) return derive_components(read_trajectories_csv(path), u, ptilde, definition);
  return read_components_csv(path, u, ptilde);
}

TrajectoryData synthetic_trajectories(const PatientTable& table, int u) {
  TrajectoryData out;
  out.patients = baselines_from_frame(table.data.covariates, table.ids);
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    const auto& p = table.data.patients[i];
    const int death_day = p.dead ? std::min(u, p.y_I + 1) : u + 1;
    for (int d = 1; d <= u; ++d) {
      Location l = Location::Home;
      if (d >= death_day) {
        l = Location::Dead;
      } else if (d <= p.y_I || d > u - p.y_S) {
        l = Location::Hospital;
      }
      out.records.push_back({table.ids[i], d, l});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------

int CsvTable::find(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

std::size_t CsvTable::column(std::string_view name, const std::string& source) const {
  const int i = find(name);
  if (i < 0) throw DataError(source + ": missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(i);
}

namespace {

std::vector<std::string> split_line(std::string_view line, const std::string& source, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError(source + ":" + std::to_string(lineno) + ": unterminated quote");
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t"), e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable t;
  std::size_t pos = 0, lineno = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto fields = split_line(line, source, lineno);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw DataError(source + ": empty CSV");
  return t;
}

std::string csv_line(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    const auto& f = fields[i];
    if (f.find_first_of(",\"") != std::string::npos) {
      out += '"';
      for (char c : f) out += c == '"' ? std::string("\"\"") : std::string(1, c);
      out += '"';
    } else {
      out += f;
    }
  }
  out += '\n';
  return out;
}

}  // namespace dah

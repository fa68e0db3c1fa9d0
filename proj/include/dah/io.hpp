#pragma once

// Patient data ingestion and flat-file persistence: daily location
// trajectories, component-level tables, and atomic file writes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dah/composite.hpp"

namespace dah {

enum class Location { Home, Hospital, RespiteOrNursing, Dead };
enum class Residence { Home, Nursing };

const char* location_name(Location l);
Location parse_location(const std::string& s);
const char* residence_name(Residence r);
Residence parse_residence(const std::string& s);

struct TrajectoryRecord {
  std::string patient_id;
  int day = 0;  // 1..u
  Location location = Location::Home;
};

/// Baseline covariates of one patient. Binary covariates are 0/1; country is
/// one of UK (reference), AU, NZ.
struct PatientBaseline {
  std::string patient_id;
  double sex = 0.0;
  double treatment = 0.0;
  double bmi = 0.0;
  double age = 0.0;
  std::string country = "UK";
  Residence residence = Residence::Home;
};

struct TrajectoryData {
  std::vector<PatientBaseline> patients;
  std::vector<TrajectoryRecord> records;  // any order
};

/// Patient-level data ready for fitting, with the row order of `patients`.
struct PatientTable {
  std::vector<std::string> ids;
  std::vector<int> dah;
  CompositeData data;
  std::size_t protocol_observations = 0;  // survivors discharged within p~ days
  std::vector<std::string> warnings;
};

/// Components of one patient from the days 1..u of their trajectory (sorted by
/// day, complete). Throws DataError naming the patient on gaps, duplicates or
/// a return from death.
PatientComponents derive_patient(std::span<const TrajectoryRecord> days, Residence residence, int u, int ptilde,
                                 DahDefinition definition);

/// Applies derive_patient to every patient; records of unknown patients and
/// patients without records are data errors.
PatientTable derive_components(const TrajectoryData& trajectories, int u, int ptilde, DahDefinition definition);

/// Covariate frame (sex, treatment, bmi, age, country factor) of the patients.
Frame covariate_frame(std::span<const PatientBaseline> patients);

/// Long format: patient_id, day, location, sex, treatment, bmi, age, country,
/// baseline_residence. Baseline columns must be constant within a patient.
TrajectoryData read_trajectories_csv(const std::filesystem::path& path);
std::string trajectories_csv(const TrajectoryData& data);

/// One row per patient: patient_id, dead, y_I, y_S, sex, treatment, bmi, age,
/// country. A dah column is allowed and checked against the components.
PatientTable read_components_csv(const std::filesystem::path& path, int u, int ptilde);
std::string components_csv(const PatientTable& table, int u);

/// Reads either format, telling them apart by the presence of a day column.
PatientTable read_patient_data(const std::filesystem::path& path, int u, int ptilde, DahDefinition definition);

/// A trajectory consistent with each patient's components: the initial stay
/// from day 1, care days as one hospital block at the end of the window, and
/// death (for patients who died) on the day after discharge.
TrajectoryData synthetic_trajectories(const PatientTable& table, int u);

/// Baseline rows for a covariate frame of the canonical layout.
std::vector<PatientBaseline> baselines_from_frame(const Frame& frame, std::span<const std::string> ids);

/// Writes via a temporary file in the same directory and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Minimal CSV: comma separated, optional double quotes, no embedded newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column, or -1.
  int find(std::string_view name) const;
  /// Index of a required column; throws DataError naming the file.
  std::size_t column(std::string_view name, const std::string& source) const;
};
CsvTable parse_csv(std::string_view text, const std::string& source);
std::string csv_line(std::span<const std::string> fields);

}  // namespace dah

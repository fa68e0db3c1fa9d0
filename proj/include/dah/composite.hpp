#pragma once

// The composite DAH model: death, protocol stay, extended initial stay and
// subsequent care, combined as
//   dah = [u - y_I - y_S] * 1(D = 0),
//   y_I = P if E = 0, p~ + y_E otherwise,   y_S = y_C * 1(C = 1).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dah/design.hpp"
#include "dah/distributions.hpp"
#include "dah/regression.hpp"
#include "dah/rng.hpp"

namespace dah {

/// Whether post-discharge nursing/respite days count as home (for residents
/// who lived there before surgery) or every non-hospital day counts as home.
enum class DahDefinition { DaysAtHome, DaysOutOfHospital };

const char* definition_name(DahDefinition d);
DahDefinition parse_definition(const std::string& s);

// Extra design variables of the care component, filled per patient.
inline constexpr const char* kExtendedStayVar = "y_E";
inline constexpr const char* kNoExtensionVar = "y_E_zero";

/// Distribution of the protocol stay P on 0..p~ for patients without an extension.
struct ProtocolStay {
  // probs[k] = P(P = k). Empty means a point mass at p~.
  std::vector<double> probs;

  bool degenerate() const { return probs.empty(); }
  DiscreteLaw law(int ptilde) const;
};

struct CompositeModel {
  int u = 90;
  int ptilde = 4;
  DahDefinition definition = DahDefinition::DaysOutOfHospital;
  ComponentSpec death;     // Bernoulli, mu = P(D = 1)
  ProtocolStay protocol;
  ComponentSpec extended;  // zero-inflated or -adjusted count law, censored at u - p~
  ComponentSpec care;      // zero-adjusted beta-binomial with denominator u - y_I

  /// Throws ConfigError when the structure is inconsistent.
  void validate() const;
  int extended_bound() const { return u - ptilde; }
};

struct PatientComponents {
  bool dead = false;
  int protocol_stay = 0;  // P, meaningful when !extended
  bool extended = false;  // E
  int y_E = 0;
  int y_I = 0;
  bool care = false;  // C
  int y_C = 0;
  int y_S = 0;
  int dah = 0;
};

/// dah = (u - y_I - y_S) * 1(not dead). Throws DataError if y_I + y_S > u or a count is negative.
int dah_from_components(int u, bool dead, int y_I, int y_S);

/// Splits observed (dead, y_I, y_S) into the model's components.
PatientComponents components_from_observed(int u, int ptilde, bool dead, int y_I, int y_S);

/// Marginal covariate profile used to synthesise patients.
struct CovariateProfile {
  double sex = 0.5;
  double bmi = 0.5;
  double age = 0.85;  // share of the older age group
  double country_AU = 0.25;
  double country_NZ = 0.15;
  double treatment = 0.5;
};

/// Frame with sex, treatment, bmi, age, country_AU, country_NZ (country factor,
/// reference UK). Treatment alternates 0/1 when profile.treatment == 0.5.
Frame sample_covariates(std::size_t n, const CovariateProfile& profile, Rng& rng);

/// Frame of n identical rows with every covariate at its reference level.
Frame reference_covariates(std::size_t n, double treatment = 0.0);

/// One reference row holding every covariate and care variable a model may
/// reference; binding a spec to it fixes the coefficient layout.
Frame prototype_frame();

/// Cardiac-surgery reference fit used as the canonical scenario.
CompositeModel canonical_model(ZeroOrientation care_orientation = ZeroOrientation::ProbabilityOfZero);

/// Intercept-only reduction of a model at reference covariate levels. Terms
/// built only from y_E / y_E_zero are kept, and so are their coefficients.
CompositeModel reference_reduction(const CompositeModel& model);

/// Simulates patients and evaluates exact DAH pmfs for the rows of a frame.
class CompositeSimulator {
 public:
  CompositeSimulator(CompositeModel model, Frame covariates);

  const CompositeModel& model() const noexcept { return model_; }
  const Frame& covariates() const noexcept { return frame_; }
  std::size_t rows() const noexcept { return frame_.rows(); }

  PatientComponents simulate(std::size_t row, Rng& rng) const;

  /// P(dah = d) for d = 0..u given the row's covariates.
  std::vector<double> dah_pmf(std::size_t row) const;

  /// Zero-DAH decomposition for one row.
  struct ZeroSources {
    double death = 0.0;     // P(D = 1)
    double censored = 0.0;  // P(D = 0, y_E = u - p~)
    double care = 0.0;      // P(D = 0, not censored, y_I + y_S = u)
    double total() const { return death + censored + care; }
  };
  ZeroSources zero_sources(std::size_t row) const;

  double death_probability(std::size_t row) const;
  DiscreteLaw extended_law(std::size_t row) const;
  /// Care law for a patient whose initial stay is y_I with extended stay y_E.
  DiscreteLaw care_law(std::size_t row, int y_I, int y_E) const;

 private:
  std::vector<double> values(const ComponentSpec& spec, const std::vector<CompiledDesign>& d, std::size_t row,
                             std::span<const double> extras) const;

  CompositeModel model_;
  Frame frame_;
  std::vector<CompiledDesign> death_, extended_, care_;
  DiscreteLaw protocol_;
};

/// One patient's observed components plus the derived care covariates.
struct CompositeData {
  std::vector<PatientComponents> patients;
  Frame covariates;  // one row per patient
};

/// Per-component response data in the factorised likelihood: death for all
/// patients, extended stay for survivors, care for survivors with an
/// uncensored initial stay (with y_E and y_E_zero added to the frame).
struct ComponentDataSet {
  ComponentData death;
  ComponentData extended;
  ComponentData care;
  std::vector<int> protocol_stays;  // P for survivors without an extension
};
ComponentDataSet split_components(const CompositeModel& model, const CompositeData& data);

struct CompositeLogLikelihood {
  double death = 0.0;
  double protocol = 0.0;
  double extended = 0.0;
  double care = 0.0;
  double total() const { return death + protocol + extended + care; }
};

CompositeLogLikelihood composite_log_likelihood(const CompositeModel& model, const CompositeData& data);

/// Log-likelihood contribution of a single patient.
double patient_log_likelihood(const CompositeModel& model, const CompositeData& data, std::size_t i);

struct CompositeFitOptions {
  FitOptions fit;
  bool stepwise = false;
  // component name ("extended", "care") -> parameter -> candidate terms
  std::map<std::string, std::map<std::string, std::vector<Term>>> candidates;
};

struct CompositeFit {
  CompositeModel model;
  FitResult death;
  FitResult extended;
  FitResult care;
  bool protocol_degenerate = true;
  bool care_degenerate = false;
  std::vector<std::string> warnings;
};

/// Fits every component independently. `structure` supplies u, p~, families
/// and the predictor lists (coefficients are ignored).
CompositeFit fit_composite(const CompositeModel& structure, const CompositeData& data,
                           const CompositeFitOptions& options = {});

}  // namespace dah

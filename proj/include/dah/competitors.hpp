#pragma once

// Existing single-distribution DAH models. Each has a logistic zero component
// for 1(dah = 0) and a positive part on the window W = u - shift, either on
// DAH itself (beta-binomial, beta) or on the non-home days W - dah ("flipped").

#include <span>
#include <string>
#include <vector>

#include "dah/design.hpp"
#include "dah/regression.hpp"
#include "dah/rng.hpp"

namespace dah {

enum class CompetitorKind {
  ZeroAdjustedBetaBinomial,
  ZeroAdjustedBeta,
  FlippedLogNormal,
  ZeroInflatedFlippedPoisson,
  FlippedNegativeBinomial,
};

const char* competitor_name(CompetitorKind k);
CompetitorKind parse_competitor(const std::string& s);
std::vector<CompetitorKind> all_competitors();

struct CompetitorSpec {
  CompetitorKind kind = CompetitorKind::ZeroAdjustedBetaBinomial;
  int u = 90;
  int shift = 0;  // minimum stay subtracted from the window
  ComponentSpec zero;      // Bernoulli, mu = P(dah = 0)
  ComponentSpec positive;  // positive part on its working scale

  int window() const { return u - shift; }
  bool flipped() const;
  void validate() const;
};

/// Intercept-only zero component and a positive part with `location_terms` on mu.
CompetitorSpec make_competitor(CompetitorKind kind, int u, int shift, std::vector<Term> location_terms = {},
                               std::vector<Term> zero_terms = {});

/// Adds delta to the location linear predictor of the positive part.
void shift_location(CompetitorSpec& spec, double delta);

struct CompetitorFit {
  CompetitorSpec spec;
  FitResult zero;
  FitResult positive;
  bool zero_degenerate = false;  // no zero DAH values in the data
  std::vector<std::string> warnings;
};

/// Response of the positive part on its working scale for a positive DAH value.
/// `n` is the number of positive observations (used by the beta shrinkage).
double working_response(const CompetitorSpec& spec, int dah, std::size_t n);

CompetitorFit fit_competitor(const CompetitorSpec& structure, std::span<const int> dah, const Frame& covariates,
                             const FitOptions& options = {});

class CompetitorSimulator {
 public:
  CompetitorSimulator(CompetitorSpec spec, Frame covariates);

  const CompetitorSpec& spec() const noexcept { return spec_; }
  std::size_t rows() const noexcept { return frame_.rows(); }

  int simulate(std::size_t row, Rng& rng) const;
  /// P(dah = d) for d = 0..u.
  std::vector<double> dah_pmf(std::size_t row) const;
  double zero_probability(std::size_t row) const;
  RowLaw positive_law(std::size_t row) const;

  /// Non-home days W - dah for a positive DAH value of a flipped model.
  int non_home_days(int dah) const { return spec_.window() - dah; }

 private:
  CompetitorSpec spec_;
  Frame frame_;
  std::vector<Eigen::VectorXd> zero_values_;
  std::vector<Eigen::VectorXd> positive_values_;
};

}  // namespace dah

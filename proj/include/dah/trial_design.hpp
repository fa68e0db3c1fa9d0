#pragma once

// Two-arm trial design on DAH: Mann-Whitney-Wilcoxon test, calibration of a
// treatment effect to a target median difference, and Monte Carlo power.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dah/competitors.hpp"
#include "dah/composite.hpp"

namespace dah {

struct MwwResult {
  double u = 0.0;  // Mann-Whitney U of the first sample (midranks)
  double z = 0.0;
  double p_value = 1.0;  // two-sided
  bool exact = false;
};

/// Exact null distribution when n_x + n_y <= 20 and there are no ties;
/// otherwise normal approximation with tie-corrected variance and a 0.5
/// continuity correction. A zero variance (all values tied) gives p = 1.
MwwResult mww_test(std::span<const int> x, std::span<const int> y);

/// Same test from value counts: cx[v], cy[v] = number of observations equal to v.
MwwResult mww_test_counts(std::span<const long> cx, std::span<const long> cy);

/// Median of an integer sample given by counts; half-integer for an even
/// sample whose middle values differ.
double median_from_counts(std::span<const long> counts);

/// DAH law of each arm as a function of the treatment coefficient. The
/// coefficient is added to the location linear predictor of treated patients.
struct EffectModel {
  std::string name;
  std::vector<double> control;
  std::function<std::vector<double>(double)> treated;
};

/// Mean of the rows' exact DAH pmfs.
std::vector<double> marginal_pmf(const CompositeSimulator& sim);
std::vector<double> marginal_pmf(const CompetitorSimulator& sim);

/// Effect on mu of the extended stay (log-fold change of its mean).
EffectModel composite_effect_model(const CompositeModel& control, const Frame& covariates, std::string name = "D&C");
/// Effect on the location of the competitor's positive part.
EffectModel competitor_effect_model(const CompetitorSpec& control, const Frame& covariates);

/// Trial generator of a competitor: the competitor is fitted without
/// covariates to n draws from the composite `control` model at reference
/// covariate levels, and the effect moves its location.
EffectModel fitted_competitor_effect_model(CompetitorKind kind, const CompositeModel& control, std::size_t n,
                                           std::uint64_t seed, int shift = 0);

struct CalibrationOptions {
  double target = 2.0;  // median(treated) - median(control), days
  std::vector<double> grid;  // empty = -3..3 in steps of 0.05
  std::size_t sim_n = 200000;
  int refine_steps = 20;  // bisection steps on each band edge
  std::uint64_t seed = 0;
};

struct CalibrationPoint {
  double coefficient = 0.0;
  double median_control = 0.0;
  double median_treated = 0.0;
  double difference = 0.0;
};

struct CalibrationResult {
  double target = 0.0;
  double lo = 0.0;  // band of coefficients giving exactly the target difference
  double hi = 0.0;
  double midpoint = 0.0;
  int direction = 0;  // sign of d(difference)/d(coefficient)
  std::vector<CalibrationPoint> ladder;
  std::vector<std::string> notes;
};

/// Simulated median difference at one coefficient, with common random numbers
/// for every coefficient of a calibration run.
CalibrationPoint median_difference(const EffectModel& model, double coefficient, std::size_t sim_n, std::uint64_t seed);

/// Finds the coefficients whose simulated median difference equals the
/// target exactly and returns the band and its midpoint. Throws ConfigError
/// with the observed step ladder if the grid never attains the target.
CalibrationResult calibrate_effect(const EffectModel& model, const CalibrationOptions& options = {});

/// Tries +|target| first and falls back to -|target| when the positive
/// difference is unattainable (e.g. the control median already sits at the
/// top of the support).
CalibrationResult calibrate_effect_magnitude(const EffectModel& model, const CalibrationOptions& options = {});

struct PowerPoint {
  int n = 0;  // total over both arms
  long rejections = 0;
  int reps = 0;
  double rate = 0.0;
  double mc_se = 0.0;
};

struct DesignStudyResult {
  std::string model;
  std::string scenario;  // "null" or "alternative"
  double alpha = 0.05;
  int reps = 0;
  std::uint64_t seed = 0;
  double coefficient = 0.0;
  std::vector<PowerPoint> points;
};

struct PowerOptions {
  std::vector<int> n_grid;  // empty = default_n_grid()
  int reps = 10000;
  double alpha = 0.05;
  double allocation = 1.0;  // treated : control
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// 100..500 in steps of 50, then 600..2000 in steps of 100.
std::vector<int> default_n_grid();

/// Rejection rates of the two-sided MWW test for trials with arm laws
/// `control` and `treated`. Replicate r at size n uses its own stream keyed by
/// (seed, scenario, n, r), so results do not depend on the thread count.
DesignStudyResult power_curve(const std::vector<double>& control, const std::vector<double>& treated,
                              const PowerOptions& options, std::string scenario = "alternative");

/// Null and alternative curves for a calibrated coefficient.
std::pair<DesignStudyResult, DesignStudyResult> power_curves(const EffectModel& model, double coefficient,
                                                             const PowerOptions& options);

struct SampleSizeResult {
  int n = 0;
  double power = 0.0;
  double mc_se = 0.0;
  int below_n = 0;  // largest grid n with power under target (0 if none)
  double below_power = 0.0;
  double below_mc_se = 0.0;
};

/// Smallest grid n with power >= target. Throws NumericalError when the target
/// is never reached, reporting the largest power achieved.
SampleSizeResult min_sample_size(const DesignStudyResult& result, double target_power = 0.9);

}  // namespace dah

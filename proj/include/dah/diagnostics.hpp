#pragma once

// Residual and predictive checks for fitted DAH models.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dah/regression.hpp"
#include "dah/rng.hpp"

namespace dah {

/// Normalised randomised quantile residuals, in the order of the input data.
struct ResidualSet {
  std::string component;
  std::vector<double> residuals;
  std::vector<std::size_t> index;  // data row of each residual
};

/// Discrete y: r = Phi^-1(U) with U uniform on (F(y-1), F(y)); continuous y:
/// r = Phi^-1(F(y)). Throws NumericalError if an observation has zero probability.
ResidualSet randomized_quantile_residuals(std::span<const RowLaw> laws, std::span<const double> y, Rng& rng,
                                          std::string component = {});

/// Residuals of a fitted component on its own data.
ResidualSet component_residuals(const ComponentSpec& spec, const ComponentData& data, Rng& rng);

struct WormPoint {
  double z;          // theoretical normal quantile
  double deviation;  // ordered residual minus z
  double lo;         // approximate pointwise 95% band
  double hi;
};

/// Detrended normal Q-Q table. The band is the usual order-statistic
/// approximation +-1.96 sqrt(p(1-p)/n) / phi(z). Needs n >= 10.
std::vector<WormPoint> worm_plot_data(const ResidualSet& residuals);

/// Share of worm points inside their band.
double worm_coverage(std::span<const WormPoint> worm);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against the standard normal with the
/// asymptotic Kolmogorov p-value (Stephens' small-sample scaling).
KsResult ks_test_normal(std::span<const double> sample);

/// P(K > x) for the Kolmogorov distribution.
double kolmogorov_survival(double x);

struct QQCheckResult {
  std::vector<double> p;       // grid k / (grid + 1)
  std::vector<double> x_mean;  // bootstrap mean of empirical quantiles
  std::vector<double> y_mean;  // mean of model quantiles
  std::vector<double> y_lo;    // 2.5% and 97.5% mid-quantiles of model quantiles
  std::vector<double> y_hi;
  int B = 0;
  std::vector<std::string> warnings;

  /// Share of grid points whose identity-line value x_mean lies in [y_lo, y_hi].
  double identity_coverage() const;
  /// Longest run of consecutive grid points with x_mean outside the envelope.
  std::size_t longest_exit() const;
};

struct QQCheckOptions {
  int B = 5000;
  int grid = 250;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// Resampling Q-Q check. Each replicate resamples n (dah, row) pairs with
/// replacement and draws one model DAH per resampled row from row_pmfs[row].
/// Quantiles are type-1 (smallest value with empirical cdf >= p). The envelope
/// spreads each integer replicate quantile v over [v - 1/2, v + 1/2].
QQCheckResult resampling_qq_check(std::span<const int> dah, const std::vector<std::vector<double>>& row_pmfs,
                                  const QQCheckOptions& options = {});

/// Trapezoidal area between the mean Q-Q curve and the identity line, in days.
double integrated_discrepancy(const QQCheckResult& qq);

}  // namespace dah

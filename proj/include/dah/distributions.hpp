#pragma once

// Univariate count laws and the censoring / truncation / zero-mass wrappers the
// model components are assembled from. Laws are immutable values that share
// their internal node tree, so copying one is cheap and thread-safe.

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dah/rng.hpp"

namespace dah {

inline constexpr int kUnbounded = std::numeric_limits<int>::max();

struct Support {
  int lo = 0;
  int hi = kUnbounded;
  bool bounded() const noexcept { return hi != kUnbounded; }
  bool contains(int y) const noexcept { return y >= lo && y <= hi; }
};

struct LogLikelihood {
  double value = 0.0;
  // indices of data points outside the support of the law
  std::vector<std::size_t> out_of_support;
  bool finite() const noexcept;
};

namespace detail {
class LawNode;
}

class DiscreteLaw {
 public:
  static DiscreteLaw bernoulli(double p);
  static DiscreteLaw poisson(double mu);
  /// NBI parameterisation: mean mu, Var = mu + sigma * mu^2 (shape k = 1/sigma).
  static DiscreteLaw negative_binomial(double mu, double sigma);
  /// Poisson mixed over an inverse-Gaussian with mean 1 and variance sigma;
  /// Var = mu + sigma * mu^2.
  static DiscreteLaw poisson_inverse_gaussian(double mu, double sigma);
  /// Mean n*mu; beta shapes a = mu/sigma, b = (1-mu)/sigma. sigma = 0 is the binomial.
  static DiscreteLaw beta_binomial(int n, double mu, double sigma);
  /// probs[k] is P(Y = offset + k).
  static DiscreteLaw categorical(std::vector<double> probs, int offset = 0);
  static DiscreteLaw point_mass(int y);

  DiscreteLaw right_censored(int c) const;
  DiscreteLaw zero_truncated() const;
  DiscreteLaw zero_adjusted(double pi0) const;
  DiscreteLaw zero_inflated(double pi0) const;

  Support support() const;
  double log_pmf(int y) const;
  double pmf(int y) const;
  double cdf(int y) const;
  /// P(Y >= y), computed without 1 - cdf cancellation where possible.
  double upper_tail(int y) const;
  int quantile(double p) const;
  int sample(Rng& rng) const;
  LogLikelihood log_likelihood(std::span<const int> data) const;

  /// log P(Y = y) for y = 0..hi; entries below the support are -inf.
  std::vector<double> log_pmf_table(int hi) const;
  /// Probabilities for y = 0..hi.
  std::vector<double> pmf_table(int hi) const;

  double mean() const;
  double variance() const;
  std::string describe() const;

  /// Largest y examined when walking an unbounded support (mean + 50 sd).
  int search_cap() const;

 private:
  explicit DiscreteLaw(std::shared_ptr<const detail::LawNode> node) : node_(std::move(node)) {}
  std::shared_ptr<const detail::LawNode> node_;
};

enum class ContinuousFamily { LogNormal, Beta };

/// Continuous laws used only by the competitor models.
class ContinuousLaw {
 public:
  /// log Y ~ Normal(meanlog, sdlog).
  static ContinuousLaw log_normal(double meanlog, double sdlog);
  /// Mean mu in (0,1) and precision phi: a = mu*phi, b = (1-mu)*phi.
  static ContinuousLaw beta(double mu, double phi);

  ContinuousFamily family() const noexcept { return family_; }
  double log_density(double y) const;
  double density(double y) const;
  double cdf(double y) const;
  double quantile(double p) const;
  double sample(Rng& rng) const;
  double lower() const;
  double upper() const;

 private:
  ContinuousLaw(ContinuousFamily f, double a, double b) : family_(f), a_(a), b_(b) {}
  ContinuousFamily family_;
  // LogNormal: meanlog, sdlog. Beta: shape a, shape b.
  double a_;
  double b_;
};

/// Standard normal cdf and quantile.
double normal_cdf(double z);
double normal_quantile(double p);

}  // namespace dah

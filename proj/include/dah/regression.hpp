#pragma once

// Distributional regression: every parameter of a component law gets its own
// link and linear predictor. Fitting is by direct maximum likelihood.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dah/design.hpp"
#include "dah/distributions.hpp"
#include "dah/errors.hpp"
#include "dah/links.hpp"
#include "dah/optimize.hpp"

namespace dah {

enum class Family { Bernoulli, Poisson, NegativeBinomial, PoissonInverseGaussian, BetaBinomial, LogNormal, Beta };

/// How the clump-at-zero parameter (nu) enters the law.
enum class ZeroModel { None, Adjusted, Inflated };

/// Whether nu is the probability of a zero (the gamlss convention) or of a positive value.
enum class ZeroOrientation { ProbabilityOfZero, ProbabilityOfPositive };

const char* family_name(Family f);
Family parse_family(const std::string& s);
bool is_discrete(Family f);
/// Distribution parameters of a family in fitting order, excluding nu.
std::vector<std::string> family_parameters(Family f);
Link default_link(Family f, const std::string& parameter);

struct ParameterSpec {
  std::string name;  // "mu", "sigma" or "nu"
  Link link = Link::Identity;
  std::vector<Term> terms;
  // Filled once bound to a frame: intercept first, then expanded term columns.
  std::vector<std::string> column_names;
  Eigen::VectorXd beta;
  double offset = 0.0;

  double coefficient(const std::string& column) const;
};

struct ComponentSpec {
  std::string name;
  Family family = Family::Poisson;
  ZeroModel zero = ZeroModel::None;
  ZeroOrientation zero_orientation = ZeroOrientation::ProbabilityOfZero;
  bool zero_truncated = false;
  // Right-censor the count law at the per-row bound.
  bool censored = false;
  std::vector<ParameterSpec> parameters;

  const ParameterSpec& parameter(const std::string& name) const;
  ParameterSpec& parameter(const std::string& name);
  bool has_parameter(const std::string& name) const;
  std::size_t coefficient_count() const;
  /// Whether the family reads the per-row bound (censoring point or binomial denominator).
  bool uses_bound() const { return censored || family == Family::BetaBinomial; }
};

/// Skeleton spec with intercept-only parameters in the family's default links.
ComponentSpec make_component(std::string name, Family family, ZeroModel zero = ZeroModel::None);

/// Resolves term columns against a frame and resizes beta, keeping coefficients
/// already present for columns with matching names.
void bind_columns(ComponentSpec& spec, const Frame& frame);

using RowLaw = std::variant<DiscreteLaw, ContinuousLaw>;

/// Law of one observation given its parameter values (in spec.parameters order).
RowLaw make_row_law(const ComponentSpec& spec, std::span<const double> parameter_values, int bound);

struct ComponentData {
  Eigen::VectorXd y;
  std::vector<int> bound;
  Frame frame;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
};

/// Linear predictors per parameter for a bound spec over a frame.
std::vector<Eigen::VectorXd> parameter_values(const ComponentSpec& spec, const Frame& frame);

/// Laws of every row of `data` under `spec`.
std::vector<RowLaw> row_laws(const ComponentSpec& spec, const Frame& frame, std::span<const int> bound);

double component_log_likelihood(const ComponentSpec& spec, const ComponentData& data);

/// Log-likelihood of a component as a function of its stacked coefficient vector.
/// Observations sharing the same design rows and bound are evaluated together.
class ComponentLikelihood {
 public:
  ComponentLikelihood(ComponentSpec spec, const ComponentData& data);

  std::size_t dimension() const noexcept { return dimension_; }
  double operator()(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd pack() const;
  ComponentSpec unpack(const Eigen::VectorXd& theta) const;
  const ComponentSpec& spec() const noexcept { return spec_; }
  std::size_t observations() const noexcept { return n_; }
  std::size_t patterns() const noexcept { return groups_.size(); }

 private:
  struct Group {
    std::vector<Eigen::RowVectorXd> rows;  // one design row per parameter
    int bound = 0;
    std::vector<double> y;
    int y_max = 0;
  };
  ComponentSpec spec_;
  std::size_t dimension_ = 0;
  std::size_t n_ = 0;
  std::vector<Group> groups_;
};

struct CoefficientEstimate {
  std::string parameter;
  std::string column;
  double estimate = 0.0;
  double std_error = std::numeric_limits<double>::quiet_NaN();
  double z = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  bool boundary = false;
};

struct FitOptions {
  double gaic_k = 2.0;
  int restarts = 2;
  double jitter_sd = 0.3;
  std::uint64_t seed = 0;
  bool compute_hessian = true;
  // Start from the coefficients already in the spec instead of the null model.
  bool warm_start = false;
  OptimOptions optim;
};

struct FitResult {
  ComponentSpec spec;
  double log_likelihood = 0.0;
  int df = 0;
  double gaic_k = 2.0;
  double gaic = 0.0;
  std::size_t observations = 0;
  std::vector<CoefficientEstimate> coefficients;
  Eigen::MatrixXd hessian;  // of the negative log-likelihood
  bool hessian_positive_definite = false;
  int iterations = 0;
  double gradient_max = 0.0;
  bool converged = false;
  bool used_simplex = false;
  int starts = 0;
  bool degenerate = false;  // fitted without optimisation (e.g. no positive responses)
  std::vector<std::string> warnings;

  const CoefficientEstimate& coefficient(const std::string& parameter, const std::string& column) const;
  bool any_boundary() const;
};

/// Fit failure carrying the best parameters found.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, FitResult best) : NumericalError(what), best_(std::move(best)) {}
  const FitResult& best() const noexcept { return best_; }

 private:
  FitResult best_;
};

double gaic(double log_likelihood, int df, double k);

FitResult fit_component(const ComponentSpec& spec, const ComponentData& data, const FitOptions& options = {});

struct StepwiseOptions {
  FitOptions fit;
  double improvement_tolerance = 1e-6;
  std::vector<std::string> parameter_order = {"mu", "sigma", "nu"};
};

struct StepwiseResult {
  FitResult fit;
  std::vector<std::string> trace;
  std::vector<std::string> warnings;
};

/// Forward selection per parameter (mu, then sigma, then nu), followed by one
/// backward-elimination pass over all parameters. Interactions become eligible
/// once all their main effects are in the parameter's predictor list.
StepwiseResult stepwise_select(const ComponentSpec& start, const ComponentData& data,
                               const std::map<std::string, std::vector<Term>>& candidates,
                               const StepwiseOptions& options = {});

}  // namespace dah

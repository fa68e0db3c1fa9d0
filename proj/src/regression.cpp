#include "dah/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dah/log.hpp"
#include "dah/rng.hpp"

namespace dah {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Coefficients this large sit on the clamped part of the link.
constexpr double kBoundaryCoefficient = 30.0;
// Relative curvature below which a direction counts as flat.
constexpr double kFlatCurvature = 1e-8;
// Standard errors above this (link scale) mark an unidentified coefficient.
constexpr double kMaxStdError = 10.0;
// Eigenvector loading that ties a coefficient to a flat direction.
constexpr double kNullLoading = 0.3;
// A restart stalling this far (log-likelihood units) above a converged fit is dropped.
constexpr double kRestartMargin = 1.0;

double clamp_probability(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace

const char* family_name(Family f) {
  switch (f) {
    case Family::Bernoulli: return "Bernoulli";
    case Family::Poisson: return "Poisson";
    case Family::NegativeBinomial: return "NBI";
    case Family::PoissonInverseGaussian: return "PIG";
    case Family::BetaBinomial: return "BB";
    case Family::LogNormal: return "LogNormal";
    case Family::Beta: return "Beta";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  for (Family f : {Family::Bernoulli, Family::Poisson, Family::NegativeBinomial, Family::PoissonInverseGaussian,
                   Family::BetaBinomial, Family::LogNormal, Family::Beta})
    if (s == family_name(f)) return f;
  throw ConfigError("unknown distribution family '" + s + "'");
}

bool is_discrete(Family f) { return f != Family::LogNormal && f != Family::Beta; }

std::vector<std::string> family_parameters(Family f) {
  switch (f) {
    case Family::Bernoulli:
    case Family::Poisson: return {"mu"};
    default: return {"mu", "sigma"};
  }
}

Link default_link(Family f, const std::string& parameter) {
  if (parameter == "nu") return Link::Logit;
  if (parameter == "sigma") return Link::Log;
  switch (f) {
    case Family::Bernoulli:
    case Family::BetaBinomial:
    case Family::Beta: return Link::Logit;
    case Family::LogNormal: return Link::Identity;
    default: return Link::Log;
  }
}

double ParameterSpec::coefficient(const std::string& column) const {
  for (std::size_t j = 0; j < column_names.size(); ++j)
    if (column_names[j] == column) return beta[static_cast<Eigen::Index>(j)];
  throw ConfigError("parameter '" + name + "' has no coefficient '" + column + "'");
}

const ParameterSpec& ComponentSpec::parameter(const std::string& pname) const {
  for (const auto& p : parameters)
    if (p.name == pname) return p;
  throw ConfigError("component '" + name + "' has no parameter '" + pname + "'");
}

ParameterSpec& ComponentSpec::parameter(const std::string& pname) {
  return const_cast<ParameterSpec&>(std::as_const(*this).parameter(pname));
}

bool ComponentSpec::has_parameter(const std::string& pname) const {
  return std::any_of(parameters.begin(), parameters.end(), [&](const auto& p) { return p.name == pname; });
}

std::size_t ComponentSpec::coefficient_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters) n += static_cast<std::size_t>(p.beta.size());
  return n;
}

ComponentSpec make_component(std::string name, Family family, ZeroModel zero) {
  ComponentSpec spec;
  spec.name = std::move(name);
  spec.family = family;
  spec.zero = zero;
  auto names = family_parameters(family);
  if (zero != ZeroModel::None) names.push_back("nu");
  for (const auto& n : names) {
    ParameterSpec p;
    p.name = n;
    p.link = default_link(family, n);
    p.column_names = {kInterceptName};
    p.beta = Eigen::VectorXd::Zero(1);
    spec.parameters.push_back(std::move(p));
  }
  return spec;
}

void bind_columns(ComponentSpec& spec, const Frame& frame) {
  for (auto& p : spec.parameters) {
    std::vector<std::string> cols{kInterceptName};
    for (const auto& t : p.terms)
      for (auto& c : term_columns(t, frame)) cols.push_back(std::move(c));
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t k = 0; k < p.column_names.size() && k < static_cast<std::size_t>(p.beta.size()); ++k)
        if (p.column_names[k] == cols[j]) beta[static_cast<Eigen::Index>(j)] = p.beta[static_cast<Eigen::Index>(k)];
    p.column_names = std::move(cols);
    p.beta = std::move(beta);
  }
}

RowLaw make_row_law(const ComponentSpec& spec, std::span<const double> values, int bound) {
  double mu = 0.0, sigma = 0.0, nu = 0.0;
  for (std::size_t k = 0; k < spec.parameters.size(); ++k) {
    const auto& n = spec.parameters[k].name;
    if (n == "mu") {
      mu = values[k];
    } else if (n == "sigma") {
      sigma = values[k];
    } else if (n == "nu") {
      nu = values[k];
    }
  }
  if (spec.family == Family::LogNormal) return ContinuousLaw::log_normal(mu, sigma);
  if (spec.family == Family::Beta) return ContinuousLaw::beta(mu, sigma);

  DiscreteLaw law = [&] {
    switch (spec.family) {
      case Family::Bernoulli: return DiscreteLaw::bernoulli(mu);
      case Family::Poisson: return DiscreteLaw::poisson(mu);
      case Family::NegativeBinomial: return DiscreteLaw::negative_binomial(mu, sigma);
      case Family::PoissonInverseGaussian: return DiscreteLaw::poisson_inverse_gaussian(mu, sigma);
      case Family::BetaBinomial: return DiscreteLaw::beta_binomial(bound, mu, sigma);
      default: break;
    }
    throw ConfigError("unsupported discrete family");
  }();
  if (spec.censored) law = law.right_censored(bound);
  if (spec.zero_truncated) law = law.zero_truncated();
  if (spec.zero != ZeroModel::None) {
    const double pi0 = spec.zero_orientation == ZeroOrientation::ProbabilityOfZero ? nu : 1.0 - nu;
    law = spec.zero == ZeroModel::Adjusted ? law.zero_adjusted(pi0) : law.zero_inflated(pi0);
  }
  return law;
}

std::vector<Eigen::VectorXd> parameter_values(const ComponentSpec& spec, const Frame& frame) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& p : spec.parameters) {
    const DesignMatrix d = build_design(frame, p.terms);
    if (d.column_names != p.column_names) throw ConfigError("parameter '" + p.name + "' is not bound to this frame");
    out.push_back(link_inverse(p.link, linear_predictor(d.values, p.beta, p.offset)));
  }
  return out;
}

std::vector<RowLaw> row_laws(const ComponentSpec& spec, const Frame& frame, std::span<const int> bound) {
  const auto values = parameter_values(spec, frame);
  std::vector<RowLaw> laws;
  laws.reserve(frame.rows());
  std::vector<double> v(values.size());
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    for (std::size_t k = 0; k < values.size(); ++k) v[k] = values[k][static_cast<Eigen::Index>(i)];
    laws.push_back(make_row_law(spec, v, bound.empty() ? 0 : bound[i]));
  }
  return laws;
}

// ---------------------------------------------------------------------------

ComponentLikelihood::ComponentLikelihood(ComponentSpec spec, const ComponentData& data) : spec_(std::move(spec)) {
  bind_columns(spec_, data.frame);
  n_ = data.size();
  if (data.frame.rows() != n_)
    throw DataError("component '" + spec_.name + "': response has " + std::to_string(n_) + " rows but covariates have " +
                    std::to_string(data.frame.rows()));
  if (spec_.uses_bound() && data.bound.size() != n_)
    throw DataError("component '" + spec_.name + "' needs a per-row bound for every observation");
  const bool discrete = is_discrete(spec_.family);
  for (std::size_t i = 0; i < n_; ++i) {
    const double y = data.y[static_cast<Eigen::Index>(i)];
    if (!std::isfinite(y) || (discrete && (y < 0 || y != std::floor(y))))
      throw DataError("component '" + spec_.name + "': invalid response " + std::to_string(y) + " at row " + std::to_string(i));
  }

  std::vector<DesignMatrix> designs;
  for (const auto& p : spec_.parameters) {
    designs.push_back(build_design(data.frame, p.terms));
    dimension_ += p.column_names.size();
  }

  std::map<std::vector<double>, std::size_t> index;
  std::vector<double> key;
  for (std::size_t i = 0; i < n_; ++i) {
    key.clear();
    const auto ii = static_cast<Eigen::Index>(i);
    for (const auto& d : designs)
      for (Eigen::Index j = 0; j < d.cols(); ++j) key.push_back(d.values(ii, j));
    const int b = spec_.uses_bound() ? data.bound[i] : 0;
    key.push_back(b);
    auto [it, inserted] = index.try_emplace(key, groups_.size());
    if (inserted) {
      Group g;
      for (const auto& d : designs) g.rows.push_back(d.values.row(ii));
      g.bound = b;
      groups_.push_back(std::move(g));
    }
    Group& g = groups_[it->second];
    g.y.push_back(data.y[ii]);
    g.y_max = std::max(g.y_max, static_cast<int>(std::min<double>(data.y[ii], std::numeric_limits<int>::max() / 2)));
  }
}

Eigen::VectorXd ComponentLikelihood::pack() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(dimension_));
  Eigen::Index at = 0;
  for (const auto& p : spec_.parameters) {
    theta.segment(at, p.beta.size()) = p.beta;
    at += p.beta.size();
  }
  return theta;
}

ComponentSpec ComponentLikelihood::unpack(const Eigen::VectorXd& theta) const {
  ComponentSpec s = spec_;
  Eigen::Index at = 0;
  for (auto& p : s.parameters) {
    p.beta = theta.segment(at, p.beta.size());
    at += p.beta.size();
  }
  return s;
}

double ComponentLikelihood::operator()(const Eigen::VectorXd& theta) const {
  const bool discrete = is_discrete(spec_.family);
  const std::size_t np = spec_.parameters.size();
  std::vector<double> values(np);
  double ll = 0.0;
  std::vector<double> table;
  for (const auto& g : groups_) {
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < np; ++k) {
      const auto& p = spec_.parameters[k];
      const auto len = p.beta.size();
      const double eta = g.rows[k].dot(theta.segment(at, len)) + p.offset;
      values[k] = link_inverse(p.link, eta);
      at += len;
    }
    try {
      const RowLaw law = make_row_law(spec_, values, g.bound);
      if (discrete) {
        table = std::get<DiscreteLaw>(law).log_pmf_table(g.y_max);
        for (double y : g.y) ll += table[static_cast<std::size_t>(y)];
      } else {
        const auto& c = std::get<ContinuousLaw>(law);
        for (double y : g.y) ll += c.log_density(y);
      }
    } catch (const DomainError&) {
      return kNegInf;
    }
    if (!(ll > kNegInf)) return kNegInf;
  }
  return ll;
}

double component_log_likelihood(const ComponentSpec& spec, const ComponentData& data) {
  ComponentLikelihood lik(spec, data);
  return lik(lik.pack());
}

// ---------------------------------------------------------------------------

const CoefficientEstimate& FitResult::coefficient(const std::string& parameter, const std::string& column) const {
  for (const auto& c : coefficients)
    if (c.parameter == parameter && c.column == column) return c;
  throw ConfigError("fit has no coefficient " + parameter + "/" + column);
}

bool FitResult::any_boundary() const {
  return std::any_of(coefficients.begin(), coefficients.end(), [](const auto& c) { return c.boundary; });
}

double gaic(double log_likelihood, int df, double k) { return -2.0 * log_likelihood + k * df; }

namespace {

struct DataSummary {
  double zero_fraction = 0.0;
  double mean = 0.0;
  double var = 0.0;
  double proportion = 0.5;  // for binomial-type families
  double log_mean = 0.0;
  double log_sd = 1.0;
};

DataSummary summarize(const ComponentSpec& spec, const ComponentData& data) {
  DataSummary s;
  const std::size_t n = data.size();
  if (n == 0) return s;
  std::vector<std::size_t> use;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = data.y[static_cast<Eigen::Index>(i)];
    if (y == 0) ++zeros;
    const bool positive_part = spec.zero == ZeroModel::Adjusted || spec.zero_truncated;
    if (!positive_part || y > 0) use.push_back(i);
  }
  s.zero_fraction = static_cast<double>(zeros) / static_cast<double>(n);
  if (use.empty()) return s;
  double sum = 0.0, sum2 = 0.0, trials = 0.0, lsum = 0.0, lsum2 = 0.0;
  for (auto i : use) {
    const double y = data.y[static_cast<Eigen::Index>(i)];
    sum += y;
    sum2 += y * y;
    if (!data.bound.empty()) trials += data.bound[i];
    const double ly = std::log(std::max(y, 1e-3));
    lsum += ly;
    lsum2 += ly * ly;
  }
  const double m = static_cast<double>(use.size());
  s.mean = sum / m;
  s.var = std::max(0.0, sum2 / m - s.mean * s.mean);
  s.proportion = trials > 0 ? sum / trials : s.mean;
  s.log_mean = lsum / m;
  s.log_sd = std::sqrt(std::max(0.0, lsum2 / m - s.log_mean * s.log_mean));
  return s;
}

double start_intercept(const ComponentSpec& spec, const std::string& parameter, const DataSummary& s) {
  if (parameter == "nu") {
    double pz = spec.zero == ZeroModel::Adjusted ? clamp_probability(s.zero_fraction, 1e-4)
                                                 : std::clamp(0.5 * s.zero_fraction, 1e-3, 0.999);
    if (spec.zero_orientation == ZeroOrientation::ProbabilityOfPositive) pz = 1.0 - pz;
    return logit(pz);
  }
  const double m = std::max(s.mean, 1e-3);
  if (parameter == "mu") {
    switch (spec.family) {
      case Family::Bernoulli: return logit(clamp_probability(s.mean, 1e-6));
      case Family::BetaBinomial: return logit(clamp_probability(s.proportion, 1e-4));
      case Family::Beta: return logit(clamp_probability(s.mean, 1e-4));
      case Family::LogNormal: return s.log_mean;
      default: return std::log(std::max(m, 0.1));
    }
  }
  switch (spec.family) {
    case Family::NegativeBinomial:
    case Family::PoissonInverseGaussian: return std::log(std::clamp((s.var - m) / (m * m), 0.05, 20.0));
    case Family::BetaBinomial: return std::log(0.1);
    case Family::LogNormal: return std::log(std::max(s.log_sd, 0.05));
    case Family::Beta: {
      const double mm = clamp_probability(s.mean, 1e-4);
      return std::log(std::clamp(mm * (1.0 - mm) / std::max(s.var, 1e-8) - 1.0, 0.5, 1e4));
    }
    default: return 0.0;
  }
}

struct Run {
  OptimResult opt;
  bool ok = false;
};

Run run_minimizer(const Objective& f, const Eigen::VectorXd& start, const OptimOptions& o) {
  Run r;
  try {
    r.opt = minimize(f, start, o);
    r.ok = std::isfinite(r.opt.value);
  } catch (const NumericalError&) {
    r.ok = false;
  }
  return r;
}

std::uint64_t name_key(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

// Flags boundary coefficients and fills Wald statistics for the rest. A
// coefficient is on the boundary when it reached the clamp, when the
// likelihood is flat along it, when it loads on a flat direction of the
// Hessian (e.g. an intercept pushed to the clamp while a dummy compensates,
// leaving only their sum identified), or when its standard error exceeds kMaxStdError on the link scale.
bool standard_errors(const Eigen::MatrixXd& raw, const Eigen::VectorXd& theta, std::vector<CoefficientEstimate>& coef) {
  const Eigen::MatrixXd h = 0.5 * (raw + raw.transpose());
  const Eigen::Index p = theta.size();
  const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
  std::vector<bool> boundary(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j)
    boundary[static_cast<std::size_t>(j)] = std::abs(theta[j]) >= kBoundaryCoefficient || h(j, j) <= kFlatCurvature * scale;

  for (Eigen::Index round = 0; round <= p; ++round) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < p; ++j)
      if (!boundary[static_cast<std::size_t>(j)]) free.push_back(j);
    const auto m = static_cast<Eigen::Index>(free.size());
    for (Eigen::Index j = 0; j < p; ++j) coef[static_cast<std::size_t>(j)].boundary = boundary[static_cast<std::size_t>(j)];
    if (m == 0) return true;
    Eigen::MatrixXd hf(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b) hf(a, b) = h(free[a], free[b]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hf);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    if (ev[0] <= kFlatCurvature * std::max(1.0, ev[m - 1])) {
      const Eigen::VectorXd v = eig.eigenvectors().col(0);
      // Every coefficient loading on the flat direction is only identified
      // jointly with the others, so none of them is reported on its own.
      bool flagged = false;
      for (Eigen::Index a = 0; a < m; ++a)
        if (std::abs(v[a]) >= kNullLoading) {
          boundary[static_cast<std::size_t>(free[a])] = true;
          flagged = true;
        }
      if (!flagged) return false;
      continue;
    }
    const Eigen::MatrixXd cov = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    bool changed = false;
    for (Eigen::Index a = 0; a < m; ++a)
      if (std::sqrt(cov(a, a)) > kMaxStdError) {
        boundary[static_cast<std::size_t>(free[a])] = true;
        changed = true;
      }
    if (changed) continue;
    // Marginal covariance: pseudo-inverse of the full Hessian without its flat
    // directions, so identified combinations of boundary coefficients (e.g.
    // an intercept plus a compensating dummy) still carry their uncertainty.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(h);
    const Eigen::VectorXd& fe = full.eigenvalues();
    const double cut = kFlatCurvature * std::max(1.0, fe.cwiseAbs().maxCoeff());
    Eigen::MatrixXd marginal = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
      // The free block is positive definite; negative or flat curvature lives
      // in the boundary directions and is dropped with them.
      if (fe[k] > cut) marginal += full.eigenvectors().col(k) * full.eigenvectors().col(k).transpose() / fe[k];
    }
    for (Eigen::Index a = 0; a < m; ++a) {
      auto& c = coef[static_cast<std::size_t>(free[a])];
      // never below the conditional variance given the boundary coefficients
      c.std_error = std::sqrt(std::max(cov(a, a), marginal(free[a], free[a])));
      c.z = c.estimate / c.std_error;
      c.p_value = 2.0 * normal_cdf(-std::abs(c.z));
    }
    return true;
  }
  return false;
}

}  // namespace

FitResult fit_component(const ComponentSpec& spec_in, const ComponentData& data, const FitOptions& options) {
  ComponentSpec spec = spec_in;
  bind_columns(spec, data.frame);
  const std::size_t k = spec.coefficient_count();
  if (data.size() <= k)
    throw DataError("component '" + spec.name + "': " + std::to_string(data.size()) + " observations for " +
                    std::to_string(k) + " coefficients");
  // Restart jitter per coefficient: jitter_sd on the linear predictor scale,
  // so slopes of wide-ranging columns (e.g. y_E) move proportionally less.
  std::vector<double> jitter_scale;
  for (const auto& p : spec.parameters) {
    const DesignMatrix d = build_design(data.frame, p.terms);
    if (!d.full_rank())
      throw DataError("component '" + spec.name + "', parameter '" + p.name + "': design matrix is rank deficient (rank " +
                      std::to_string(d.rank()) + " of " + std::to_string(d.cols()) + ")");
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const auto col = d.values.col(j).array();
      const double sd = std::sqrt((col - col.mean()).square().mean());
      jitter_scale.push_back(j == 0 ? 1.0 : 1.0 / std::max(1.0, sd));
    }
  }

  ComponentLikelihood lik(spec, data);
  const Objective f = [&lik](const Eigen::VectorXd& th) {
    const double ll = lik(th);
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
  };

  Eigen::VectorXd theta0;
  if (options.warm_start) {
    theta0 = lik.pack();
  } else {
    // null model: intercepts only, started from moment estimates
    const DataSummary s = summarize(spec, data);
    ComponentSpec null_spec = spec;
    for (auto& p : null_spec.parameters) {
      p.terms.clear();
      p.column_names = {kInterceptName};
      p.beta = Eigen::VectorXd::Constant(1, start_intercept(spec, p.name, s));
    }
    ComponentLikelihood null_lik(null_spec, data);
    const Objective fn = [&null_lik](const Eigen::VectorXd& th) {
      const double ll = null_lik(th);
      return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
    };
    Eigen::VectorXd null_start = null_lik.pack();
    if (!std::isfinite(fn(null_start))) {
      // moment start outside the support of some observation; fall back to zeros
      null_start.setZero();
    }
    Run null_run = run_minimizer(fn, null_start, options.optim);
    const ComponentSpec null_fit = null_lik.unpack(null_run.ok ? null_run.opt.x : null_start);
    ComponentSpec start = spec;
    for (auto& p : start.parameters) {
      p.beta.setZero();
      p.beta[0] = null_fit.parameter(p.name).beta[0];
    }
    ComponentLikelihood tmp(start, data);
    theta0 = tmp.pack();
  }
  if (!std::isfinite(f(theta0))) {
    theta0.setZero();
    if (!std::isfinite(f(theta0)))
      throw NumericalError("component '" + spec.name + "': log-likelihood is not finite at the starting values");
  }

  Rng rng = make_stream(options.seed, Stream::FitJitter, {name_key(spec.name)});
  std::normal_distribution<double> jitter(0.0, options.jitter_sd);
  Run best;
  int starts = 0;
  for (int r = 0; r <= options.restarts; ++r) {
    Eigen::VectorXd start = theta0;
    if (r > 0)
      for (Eigen::Index j = 0; j < start.size(); ++j) start[j] += jitter(rng) * jitter_scale[static_cast<std::size_t>(j)];
    if (!std::isfinite(f(start))) continue;
    ++starts;
    OptimOptions o = options.optim;
    if (best.ok && best.opt.converged) o.abandon_above = best.opt.value + kRestartMargin;
    Run run = run_minimizer(f, start, o);
    if (!run.ok) continue;
    const bool better = !best.ok || (run.opt.converged && !best.opt.converged) ||
                        (run.opt.converged == best.opt.converged && run.opt.value < best.opt.value - 1e-9);
    if (better) best = std::move(run);
  }

  FitResult fit;
  fit.gaic_k = options.gaic_k;
  fit.observations = data.size();
  fit.starts = starts;
  if (!best.ok) {
    fit.spec = lik.unpack(theta0);
    throw FitError("component '" + spec.name + "': optimisation failed from every start", fit);
  }
  const Eigen::VectorXd& theta = best.opt.x;
  fit.spec = lik.unpack(theta);
  fit.log_likelihood = -best.opt.value;
  fit.df = static_cast<int>(k);
  fit.gaic = gaic(fit.log_likelihood, fit.df, options.gaic_k);
  fit.iterations = best.opt.iterations;
  fit.gradient_max = best.opt.gradient.size() ? best.opt.gradient.cwiseAbs().maxCoeff() : 0.0;
  fit.converged = best.opt.converged;
  fit.used_simplex = best.opt.used_simplex;

  for (const auto& p : fit.spec.parameters)
    for (std::size_t j = 0; j < p.column_names.size(); ++j) {
      CoefficientEstimate c;
      c.parameter = p.name;
      c.column = p.column_names[j];
      c.estimate = p.beta[static_cast<Eigen::Index>(j)];
      fit.coefficients.push_back(c);
    }

  if (!fit.converged) {
    throw FitError("component '" + spec.name + "' did not converge (" + best.opt.message + ", max|gradient| " +
                       std::to_string(fit.gradient_max) + ")",
                   fit);
  }

  if (options.compute_hessian && k > 0) {
    fit.hessian = numerical_hessian(f, theta);
    fit.hessian_positive_definite = standard_errors(fit.hessian, theta, fit.coefficients);
    if (!fit.hessian_positive_definite)
      fit.warnings.push_back("Hessian is not positive definite; standard errors unavailable");
    if (fit.any_boundary())
      fit.warnings.push_back("boundary solution: some coefficients are unidentified at the clamped link range");
  }
  return fit;
}

// ---------------------------------------------------------------------------

namespace {

bool has_term(const ParameterSpec& p, const std::string& label) {
  return std::any_of(p.terms.begin(), p.terms.end(), [&](const Term& t) { return t.label == label; });
}

bool eligible(const ParameterSpec& p, const Term& t) {
  if (has_term(p, t.label)) return false;
  if (!t.interaction()) return true;
  return std::all_of(t.variables.begin(), t.variables.end(), [&](const std::string& v) { return has_term(p, v); });
}

bool removable(const ParameterSpec& p, const Term& t) {
  if (t.interaction()) return true;
  for (const auto& other : p.terms)
    if (other.interaction() &&
        std::find(other.variables.begin(), other.variables.end(), t.label) != other.variables.end())
      return false;
  return true;
}

std::optional<FitResult> try_fit(const ComponentSpec& spec, const ComponentData& data, const FitOptions& o,
                                 const std::string& what, std::vector<std::string>& warnings) {
  try {
    return fit_component(spec, data, o);
  } catch (const Error& e) {
    const std::string msg = "stepwise: skipped candidate " + what + ": " + e.what();
    log_warning(msg);
    warnings.push_back(msg);
    return std::nullopt;
  }
}

}  // namespace

StepwiseResult stepwise_select(const ComponentSpec& start, const ComponentData& data,
                               const std::map<std::string, std::vector<Term>>& candidates,
                               const StepwiseOptions& options) {
  StepwiseResult out;
  FitOptions cand = options.fit;
  cand.restarts = 0;
  cand.compute_hessian = false;

  auto initial = try_fit(start, data, options.fit, "initial model", out.warnings);
  if (!initial) throw NumericalError("stepwise: the starting model could not be fitted");
  FitResult current = *initial;
  out.trace.push_back("start: GAIC " + std::to_string(current.gaic));
  const double tol = options.improvement_tolerance;

  FitOptions warm = cand;
  warm.warm_start = true;

  for (const auto& pname : options.parameter_order) {
    if (!current.spec.has_parameter(pname)) continue;
    auto it = candidates.find(pname);
    if (it == candidates.end()) continue;
    while (true) {
      std::optional<FitResult> best;
      std::string best_label;
      for (const auto& term : it->second) {
        if (!eligible(current.spec.parameter(pname), term)) continue;
        ComponentSpec trial = current.spec;
        trial.parameter(pname).terms.push_back(term);
        auto f = try_fit(trial, data, warm, pname + " + " + term.label, out.warnings);
        if (f && (!best || f->gaic < best->gaic)) {
          best = std::move(f);
          best_label = term.label;
        }
      }
      if (!best || !(best->gaic < current.gaic - tol)) break;
      out.trace.push_back("forward " + pname + " + " + best_label + ": GAIC " + std::to_string(best->gaic));
      current = std::move(*best);
    }
  }

  for (const auto& pname : options.parameter_order) {
    if (!current.spec.has_parameter(pname)) continue;
    while (true) {
      std::optional<FitResult> best;
      std::string best_label;
      const auto terms = current.spec.parameter(pname).terms;
      for (std::size_t j = 0; j < terms.size(); ++j) {
        if (!removable(current.spec.parameter(pname), terms[j])) continue;
        ComponentSpec trial = current.spec;
        auto& tt = trial.parameter(pname).terms;
        tt.erase(tt.begin() + static_cast<std::ptrdiff_t>(j));
        auto f = try_fit(trial, data, warm, pname + " - " + terms[j].label, out.warnings);
        if (f && (!best || f->gaic < best->gaic)) {
          best = std::move(f);
          best_label = terms[j].label;
        }
      }
      if (!best || !(best->gaic < current.gaic - tol)) break;
      out.trace.push_back("backward " + pname + " - " + best_label + ": GAIC " + std::to_string(best->gaic));
      current = std::move(*best);
    }
  }

  // final fit with restarts and standard errors
  FitOptions final_opts = options.fit;
  final_opts.warm_start = true;
  auto final_fit = try_fit(current.spec, data, final_opts, "final model", out.warnings);
  out.fit = final_fit ? std::move(*final_fit) : std::move(current);
  out.fit.warnings.insert(out.fit.warnings.end(), out.warnings.begin(), out.warnings.end());
  return out;
}

}  // namespace dah

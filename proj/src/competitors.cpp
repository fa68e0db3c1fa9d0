#include "dah/competitors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dah/errors.hpp"
#include "dah/log.hpp"

namespace dah {

namespace {

struct KindInfo {
  CompetitorKind kind;
  const char* name;
  Family family;
};

constexpr KindInfo kKinds[] = {
    {CompetitorKind::ZeroAdjustedBetaBinomial, "ZABB", Family::BetaBinomial},
    {CompetitorKind::ZeroAdjustedBeta, "ZABeta", Family::Beta},
    {CompetitorKind::FlippedLogNormal, "FlippedLogNormal", Family::LogNormal},
    {CompetitorKind::ZeroInflatedFlippedPoisson, "ZIFlippedPoisson", Family::Poisson},
    {CompetitorKind::FlippedNegativeBinomial, "FlippedNB", Family::NegativeBinomial},
};

const KindInfo& info(CompetitorKind k) {
  for (const auto& i : kKinds)
    if (i.kind == k) return i;
  throw ConfigError("unknown competitor kind");
}

FitResult degenerate_fit(const ComponentSpec& spec, const ComponentData& data, const FitOptions& options) {
  FitResult fit;
  fit.spec = spec;
  fit.degenerate = true;
  fit.converged = true;
  fit.observations = data.size();
  fit.log_likelihood = component_log_likelihood(spec, data);
  fit.df = static_cast<int>(spec.coefficient_count());
  fit.gaic_k = options.gaic_k;
  fit.gaic = gaic(fit.log_likelihood, fit.df, options.gaic_k);
  for (const auto& p : spec.parameters)
    for (std::size_t j = 0; j < p.column_names.size(); ++j) {
      CoefficientEstimate c;
      c.parameter = p.name;
      c.column = p.column_names[j];
      c.estimate = p.beta[static_cast<Eigen::Index>(j)];
      c.boundary = true;
      fit.coefficients.push_back(c);
    }
  return fit;
}

}  // namespace

const char* competitor_name(CompetitorKind k) { return info(k).name; }

CompetitorKind parse_competitor(const std::string& s) {
  for (const auto& i : kKinds)
    if (s == i.name) return i.kind;
  throw ConfigError("unknown competitor model '" + s + "'");
}

std::vector<CompetitorKind> all_competitors() {
  std::vector<CompetitorKind> out;
  for (const auto& i : kKinds) out.push_back(i.kind);
  return out;
}

bool CompetitorSpec::flipped() const {
  return kind == CompetitorKind::FlippedLogNormal || kind == CompetitorKind::ZeroInflatedFlippedPoisson ||
         kind == CompetitorKind::FlippedNegativeBinomial;
}

void CompetitorSpec::validate() const {
  if (u <= 0) throw ConfigError("follow-up length u must be positive");
  if (shift < 0 || shift >= u) throw ConfigError("competitor shift must lie in [0, u)");
  if (zero.family != Family::Bernoulli) throw ConfigError("competitor zero component must be Bernoulli");
  if (positive.family != info(kind).family)
    throw ConfigError(std::string("competitor ") + competitor_name(kind) + " needs a " + family_name(info(kind).family) +
                      " positive part");
}

CompetitorSpec make_competitor(CompetitorKind kind, int u, int shift, std::vector<Term> location_terms,
                               std::vector<Term> zero_terms) {
  CompetitorSpec spec;
  spec.kind = kind;
  spec.u = u;
  spec.shift = shift;
  spec.zero = make_component("zero", Family::Bernoulli);
  spec.zero.parameter("mu").terms = std::move(zero_terms);
  spec.positive = make_component("positive", info(kind).family);
  spec.positive.parameter("mu").terms = std::move(location_terms);
  if (kind == CompetitorKind::ZeroAdjustedBetaBinomial) spec.positive.zero_truncated = true;
  // Mean non-home days scale with the days available to spend away.
  if (kind == CompetitorKind::FlippedNegativeBinomial) spec.positive.parameter("mu").offset = std::log(double(u - shift));
  spec.validate();
  return spec;
}

void shift_location(CompetitorSpec& spec, double delta) { spec.positive.parameter("mu").offset += delta; }

double working_response(const CompetitorSpec& spec, int dah, std::size_t n) {
  const int w = spec.window();
  const int d = std::min(dah, w);
  switch (spec.kind) {
    case CompetitorKind::ZeroAdjustedBetaBinomial: return d;
    case CompetitorKind::ZeroAdjustedBeta: {
      // Shrinks exact ones into (0,1).
      const double p = double(d) / w;
      const double m = static_cast<double>(std::max<std::size_t>(n, 1));
      return (p * (m - 1.0) + 0.5) / m;
    }
    // Non-home day h is represented by the midpoint of [h, h+1).
    case CompetitorKind::FlippedLogNormal: return (w - d) + 0.5;
    case CompetitorKind::ZeroInflatedFlippedPoisson:
    case CompetitorKind::FlippedNegativeBinomial: return w - d;
  }
  return 0.0;
}

CompetitorFit fit_competitor(const CompetitorSpec& structure, std::span<const int> dah, const Frame& covariates,
                             const FitOptions& options) {
  structure.validate();
  const std::size_t n = dah.size();
  if (covariates.rows() != n)
    throw DataError(std::to_string(n) + " DAH values but " + std::to_string(covariates.rows()) + " covariate rows");
  std::vector<std::size_t> pos;
  int clipped = 0;
  Eigen::VectorXd zero_y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (dah[i] < 0 || dah[i] > structure.u)
      throw DataError("DAH value " + std::to_string(dah[i]) + " at row " + std::to_string(i) + " outside [0, u]");
    zero_y[static_cast<Eigen::Index>(i)] = dah[i] == 0;
    if (dah[i] > 0) pos.push_back(i);
    if (dah[i] > structure.window()) ++clipped;
  }
  if (pos.empty()) throw DataError(std::string(competitor_name(structure.kind)) + ": every DAH value is zero");

  CompetitorFit out;
  out.spec = structure;
  if (clipped > 0)
    out.warnings.push_back(std::to_string(clipped) + " DAH values above u - shift = " +
                           std::to_string(structure.window()) + " were clipped to it");

  ComponentData zd{zero_y, {}, covariates};
  if (pos.size() == n) {
    ComponentSpec z = structure.zero;
    bind_columns(z, covariates);
    z.parameters[0].beta.setZero();
    z.parameters[0].beta[0] = -kEtaBound;
    out.zero = degenerate_fit(z, zd, options);
    out.zero_degenerate = true;
    out.warnings.push_back("no zero DAH values; zero component set to probability zero");
  } else {
    ComponentSpec z = structure.zero;
    for (auto& p : z.parameters) p.beta.setZero();
    out.zero = fit_component(z, zd, options);
  }

  ComponentData pd;
  pd.frame = covariates.subset(pos);
  pd.y.resize(static_cast<Eigen::Index>(pos.size()));
  pd.bound.assign(pos.size(), structure.window());
  for (std::size_t k = 0; k < pos.size(); ++k)
    pd.y[static_cast<Eigen::Index>(k)] = working_response(structure, dah[pos[k]], pos.size());
  ComponentSpec p = structure.positive;
  for (auto& q : p.parameters) q.beta.setZero();
  out.positive = fit_component(p, pd, options);

  out.spec.zero = out.zero.spec;
  out.spec.positive = out.positive.spec;
  for (const auto& w : out.zero.warnings) out.warnings.push_back("zero: " + w);
  for (const auto& w : out.positive.warnings) out.warnings.push_back("positive: " + w);
  for (const auto& w : out.warnings) log_warning(std::string(competitor_name(structure.kind)) + ": " + w);
  return out;
}

// ---------------------------------------------------------------------------

CompetitorSimulator::CompetitorSimulator(CompetitorSpec spec, Frame covariates)
    : spec_((spec.validate(), std::move(spec))), frame_(std::move(covariates)) {
  bind_columns(spec_.zero, frame_);
  bind_columns(spec_.positive, frame_);
  zero_values_ = parameter_values(spec_.zero, frame_);
  positive_values_ = parameter_values(spec_.positive, frame_);
}

double CompetitorSimulator::zero_probability(std::size_t row) const {
  return zero_values_.front()[static_cast<Eigen::Index>(row)];
}

RowLaw CompetitorSimulator::positive_law(std::size_t row) const {
  std::vector<double> v(positive_values_.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = positive_values_[k][static_cast<Eigen::Index>(row)];
  return make_row_law(spec_.positive, v, spec_.window());
}

int CompetitorSimulator::simulate(std::size_t row, Rng& rng) const {
  if (row >= frame_.rows()) throw DataError("covariate row " + std::to_string(row) + " out of range");
  if (uniform_open(rng) < zero_probability(row)) return 0;
  const int w = spec_.window();
  const RowLaw law = positive_law(row);
  switch (spec_.kind) {
    case CompetitorKind::ZeroAdjustedBetaBinomial: return std::get<DiscreteLaw>(law).sample(rng);
    case CompetitorKind::ZeroAdjustedBeta: {
      const double x = std::get<ContinuousLaw>(law).sample(rng);
      return static_cast<int>(std::clamp<long>(std::lround(w * x), 1, w));
    }
    case CompetitorKind::FlippedLogNormal: {
      const double x = std::get<ContinuousLaw>(law).sample(rng);
      const int h = x >= w - 1 ? w - 1 : static_cast<int>(std::floor(x));
      return w - h;
    }
    case CompetitorKind::ZeroInflatedFlippedPoisson:
    case CompetitorKind::FlippedNegativeBinomial: return w - std::min(std::get<DiscreteLaw>(law).sample(rng), w - 1);
  }
  return 0;
}

std::vector<double> CompetitorSimulator::dah_pmf(std::size_t row) const {
  const int w = spec_.window();
  std::vector<double> pmf(static_cast<std::size_t>(spec_.u) + 1, 0.0);
  const double pi = zero_probability(row);
  pmf[0] = pi;
  const RowLaw law = positive_law(row);
  auto put = [&](int d, double q) { pmf[static_cast<std::size_t>(d)] += (1.0 - pi) * q; };
  switch (spec_.kind) {
    case CompetitorKind::ZeroAdjustedBetaBinomial: {
      const auto t = std::get<DiscreteLaw>(law).pmf_table(w);
      for (int d = 1; d <= w; ++d) put(d, t[static_cast<std::size_t>(d)]);
      break;
    }
    case CompetitorKind::ZeroAdjustedBeta: {
      const auto& b = std::get<ContinuousLaw>(law);
      for (int d = 1; d <= w; ++d) {
        const double lo = d == 1 ? 0.0 : b.cdf((d - 0.5) / w);
        const double hi = d == w ? 1.0 : b.cdf((d + 0.5) / w);
        put(d, std::max(0.0, hi - lo));
      }
      break;
    }
    case CompetitorKind::FlippedLogNormal: {
      const auto& ln = std::get<ContinuousLaw>(law);
      for (int h = 0; h < w; ++h) {
        const double lo = h == 0 ? 0.0 : ln.cdf(h);
        const double hi = h == w - 1 ? 1.0 : ln.cdf(h + 1.0);
        put(w - h, std::max(0.0, hi - lo));
      }
      break;
    }
    case CompetitorKind::ZeroInflatedFlippedPoisson:
    case CompetitorKind::FlippedNegativeBinomial: {
      const auto& c = std::get<DiscreteLaw>(law);
      const auto t = c.pmf_table(w - 1);
      for (int h = 0; h < w - 1; ++h) put(w - h, t[static_cast<std::size_t>(h)]);
      put(1, c.upper_tail(w - 1));
      break;
    }
  }
  return pmf;
}

}  // namespace dah

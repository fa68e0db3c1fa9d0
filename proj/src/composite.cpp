#include "dah/composite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dah/errors.hpp"
#include "dah/log.hpp"

namespace dah {

const char* definition_name(DahDefinition d) { return d == DahDefinition::DaysAtHome ? "dah" : "dooh"; }

DahDefinition parse_definition(const std::string& s) {
  if (s == "dah") return DahDefinition::DaysAtHome;
  if (s == "dooh") return DahDefinition::DaysOutOfHospital;
  throw ConfigError("dah definition must be 'dah' or 'dooh', got '" + s + "'");
}

DiscreteLaw ProtocolStay::law(int ptilde) const {
  if (degenerate()) return DiscreteLaw::point_mass(ptilde);
  if (static_cast<int>(probs.size()) != ptilde + 1)
    throw ConfigError("protocol stay needs " + std::to_string(ptilde + 1) + " probabilities, got " +
                      std::to_string(probs.size()));
  return DiscreteLaw::categorical(probs, 0);
}

void CompositeModel::validate() const {
  if (u <= 0) throw ConfigError("follow-up length u must be positive");
  if (ptilde < 0 || ptilde > u) throw ConfigError("p~ must lie in [0, u]");
  if (death.family != Family::Bernoulli) throw ConfigError("death component must be Bernoulli");
  if (!is_discrete(extended.family) || extended.family == Family::Bernoulli || extended.family == Family::BetaBinomial)
    throw ConfigError("extended stay must be a Poisson, NBI or PIG count law");
  if (!extended.censored) throw ConfigError("extended stay must be right-censored at u - p~");
  if (care.family != Family::BetaBinomial) throw ConfigError("subsequent care must be beta-binomial");
  for (const auto* spec : {&death, &extended, &care})
    for (const auto& p : spec->parameters)
      if (static_cast<std::size_t>(p.beta.size()) != p.column_names.size())
        throw ConfigError("component '" + spec->name + "', parameter '" + p.name +
                          "': coefficient count does not match its predictor columns");
  protocol.law(ptilde);
}

int dah_from_components(int u, bool dead, int y_I, int y_S) {
  if (y_I < 0 || y_S < 0) throw DataError("negative stay length (y_I=" + std::to_string(y_I) + ", y_S=" + std::to_string(y_S) + ")");
  if (y_I + y_S > u)
    throw DataError("y_I + y_S = " + std::to_string(y_I + y_S) + " exceeds the follow-up window u = " + std::to_string(u));
  return dead ? 0 : u - y_I - y_S;
}

PatientComponents components_from_observed(int u, int ptilde, bool dead, int y_I, int y_S) {
  PatientComponents p;
  p.dead = dead;
  p.dah = dah_from_components(u, dead, y_I, y_S);
  p.y_I = y_I;
  p.y_S = y_S;
  p.extended = y_I > ptilde;
  if (p.extended) {
    p.y_E = y_I - ptilde;
  } else {
    p.protocol_stay = y_I;
  }
  p.care = y_S > 0;
  p.y_C = y_S;
  return p;
}

// ---------------------------------------------------------------------------

Frame sample_covariates(std::size_t n, const CovariateProfile& profile, Rng& rng) {
  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::VectorXd sex(rows), bmi(rows), age(rows), au(rows), nz(rows), trt(rows);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool alternate = profile.treatment == 0.5;
  for (Eigen::Index i = 0; i < rows; ++i) {
    sex[i] = unit(rng) < profile.sex;
    bmi[i] = unit(rng) < profile.bmi;
    age[i] = unit(rng) < profile.age;
    const double c = unit(rng);
    au[i] = c < profile.country_AU;
    nz[i] = !au[i] && c < profile.country_AU + profile.country_NZ;
    trt[i] = alternate ? static_cast<double>(i % 2) : static_cast<double>(unit(rng) < profile.treatment);
  }
  Frame f(n);
  f.set("sex", sex);
  f.set("bmi", bmi);
  f.set("age", age);
  f.set("treatment", trt);
  f.set("country_AU", au);
  f.set("country_NZ", nz);
  f.declare_factor("country", {"country_AU", "country_NZ"});
  return f;
}

Frame reference_covariates(std::size_t n, double treatment) {
  Frame f(n);
  const auto rows = static_cast<Eigen::Index>(n);
  for (const char* c : {"sex", "bmi", "age", "country_AU", "country_NZ"}) f.set(c, Eigen::VectorXd::Zero(rows));
  f.set("treatment", Eigen::VectorXd::Constant(rows, treatment));
  f.declare_factor("country", {"country_AU", "country_NZ"});
  return f;
}

Frame prototype_frame() {
  Frame f = reference_covariates(1);
  f.set(kExtendedStayVar, Eigen::VectorXd::Zero(1));
  f.set(kNoExtensionVar, Eigen::VectorXd::Zero(1));
  return f;
}

namespace {

void set_parameter(ComponentSpec& spec, const std::string& name, const std::vector<std::string>& terms,
                   const std::vector<double>& beta) {
  ParameterSpec& p = spec.parameter(name);
  p.terms = parse_terms(terms);
  p.column_names.clear();
  p.beta.resize(0);
  ComponentSpec tmp;
  tmp.parameters = {p};
  bind_columns(tmp, prototype_frame());
  p = tmp.parameters.front();
  if (static_cast<std::size_t>(p.beta.size()) != beta.size())
    throw ConfigError("parameter '" + name + "' expects " + std::to_string(p.beta.size()) + " coefficients");
  for (std::size_t j = 0; j < beta.size(); ++j) p.beta[static_cast<Eigen::Index>(j)] = beta[j];
}

bool only_stay_terms(const Term& t) {
  return std::all_of(t.variables.begin(), t.variables.end(),
                     [](const std::string& v) { return v == kExtendedStayVar || v == kNoExtensionVar; });
}

}  // namespace

CompositeModel canonical_model(ZeroOrientation care_orientation) {
  CompositeModel m;
  m.u = 90;
  m.ptilde = 4;
  m.definition = DahDefinition::DaysOutOfHospital;

  m.death = make_component("death", Family::Bernoulli);
  set_parameter(m.death, "mu", {}, {-4.595});

  m.extended = make_component("extended", Family::PoissonInverseGaussian, ZeroModel::Inflated);
  m.extended.censored = true;
  set_parameter(m.extended, "mu", {"age", "treatment", "bmi", "sex", "country", "bmi:treatment"},
                {0.935, 0.939, -1.236, -0.629, 1.166, 1.136, 0.192, 1.733});
  set_parameter(m.extended, "sigma", {"treatment", "bmi", "sex", "country", "bmi:treatment"},
                {1.475, -1.417, -1.088, 1.134, 0.225, -1.530, 2.311});
  set_parameter(m.extended, "nu", {}, {-36.040});

  m.care = make_component("care", Family::BetaBinomial, ZeroModel::Adjusted);
  m.care.zero_orientation = care_orientation;
  set_parameter(m.care, "mu", {kExtendedStayVar}, {-2.917, 0.070});
  set_parameter(m.care, "sigma", {"treatment", kNoExtensionVar}, {-36.075, -1.831, 34.785});
  set_parameter(m.care, "nu", {kNoExtensionVar, "country"}, {2.762, -1.427, -0.412, -1.120});
  m.validate();
  return m;
}

CompositeModel reference_reduction(const CompositeModel& model) {
  CompositeModel r = model;
  for (auto* spec : {&r.death, &r.extended, &r.care})
    for (auto& p : spec->parameters) {
      std::vector<Term> kept;
      for (const auto& t : p.terms)
        if (only_stay_terms(t)) kept.push_back(t);
      p.terms = kept;
    }
  for (auto* spec : {&r.death, &r.extended, &r.care}) bind_columns(*spec, prototype_frame());
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<CompiledDesign> compile(const ComponentSpec& spec, const Frame& frame) {
  std::vector<CompiledDesign> out;
  for (const auto& p : spec.parameters) out.emplace_back(frame, p.column_names, std::vector<std::string>{kExtendedStayVar, kNoExtensionVar});
  return out;
}

}  // namespace

CompositeSimulator::CompositeSimulator(CompositeModel model, Frame covariates)
    : model_((model.validate(), std::move(model))),
      frame_(std::move(covariates)),
      protocol_(model_.protocol.law(model_.ptilde)) {
  death_ = compile(model_.death, frame_);
  extended_ = compile(model_.extended, frame_);
  care_ = compile(model_.care, frame_);
}

std::vector<double> CompositeSimulator::values(const ComponentSpec& spec, const std::vector<CompiledDesign>& d,
                                               std::size_t row, std::span<const double> extras) const {
  std::vector<double> v(spec.parameters.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const auto& p = spec.parameters[k];
    v[k] = link_inverse(p.link, d[k].eta(row, extras, p.beta, p.offset));
  }
  return v;
}

double CompositeSimulator::death_probability(std::size_t row) const {
  return values(model_.death, death_, row, {}).front();
}

DiscreteLaw CompositeSimulator::extended_law(std::size_t row) const {
  const auto v = values(model_.extended, extended_, row, {});
  return std::get<DiscreteLaw>(make_row_law(model_.extended, v, model_.extended_bound()));
}

DiscreteLaw CompositeSimulator::care_law(std::size_t row, int y_I, int y_E) const {
  const double extras[] = {static_cast<double>(y_E), y_E == 0 ? 1.0 : 0.0};
  const auto v = values(model_.care, care_, row, extras);
  return std::get<DiscreteLaw>(make_row_law(model_.care, v, model_.u - y_I));
}

PatientComponents CompositeSimulator::simulate(std::size_t row, Rng& rng) const {
  if (row >= frame_.rows()) throw DataError("covariate row " + std::to_string(row) + " out of range");
  PatientComponents p;
  p.dead = uniform_open(rng) < death_probability(row);
  p.y_E = extended_law(row).sample(rng);
  p.extended = p.y_E > 0;
  if (p.extended) {
    p.y_I = model_.ptilde + p.y_E;
  } else {
    p.protocol_stay = protocol_.sample(rng);
    p.y_I = p.protocol_stay;
  }
  if (p.y_I < model_.u) {
    p.y_C = care_law(row, p.y_I, p.y_E).sample(rng);
    p.care = p.y_C > 0;
  }
  p.y_S = p.care ? p.y_C : 0;
  p.dah = dah_from_components(model_.u, p.dead, p.y_I, p.y_S);
  return p;
}

namespace {

// Calls visit(y_I, y_E, weight) over the initial-stay distribution of a survivor.
template <typename Visit>
void for_each_initial_stay(const DiscreteLaw& ext, const DiscreteLaw& protocol, int ptilde, int bound, Visit&& visit) {
  const auto table = ext.pmf_table(bound);
  const auto ptable = protocol.pmf_table(ptilde);
  for (int e = 0; e <= bound; ++e) {
    const double pe = table[static_cast<std::size_t>(e)];
    if (pe <= 0.0) continue;
    if (e == 0) {
      for (int k = 0; k <= ptilde; ++k)
        if (ptable[static_cast<std::size_t>(k)] > 0.0) visit(k, 0, pe * ptable[static_cast<std::size_t>(k)]);
    } else {
      visit(ptilde + e, e, pe);
    }
  }
}

}  // namespace

std::vector<double> CompositeSimulator::dah_pmf(std::size_t row) const {
  const int u = model_.u;
  std::vector<double> pmf(static_cast<std::size_t>(u) + 1, 0.0);
  const double pd = death_probability(row);
  pmf[0] += pd;
  for_each_initial_stay(extended_law(row), protocol_, model_.ptilde, model_.extended_bound(),
                        [&](int y_I, int y_E, double w) {
                          w *= 1.0 - pd;
                          if (y_I >= u) {
                            pmf[0] += w;
                            return;
                          }
                          const int window = u - y_I;
                          const auto t = care_law(row, y_I, y_E).pmf_table(window);
                          for (int s = 0; s <= window; ++s) pmf[static_cast<std::size_t>(window - s)] += w * t[static_cast<std::size_t>(s)];
                        });
  return pmf;
}

CompositeSimulator::ZeroSources CompositeSimulator::zero_sources(std::size_t row) const {
  ZeroSources z;
  z.death = death_probability(row);
  const int u = model_.u;
  for_each_initial_stay(extended_law(row), protocol_, model_.ptilde, model_.extended_bound(),
                        [&](int y_I, int y_E, double w) {
                          w *= 1.0 - z.death;
                          if (y_I >= u) {
                            z.censored += w;
                          } else {
                            z.care += w * care_law(row, y_I, y_E).pmf(u - y_I);
                          }
                        });
  return z;
}

// ---------------------------------------------------------------------------

ComponentDataSet split_components(const CompositeModel& model, const CompositeData& data) {
  const std::size_t n = data.patients.size();
  if (data.covariates.rows() != n)
    throw DataError("composite data has " + std::to_string(n) + " patients but " +
                    std::to_string(data.covariates.rows()) + " covariate rows");
  ComponentDataSet out;
  std::vector<std::size_t> alive, uncensored;
  Eigen::VectorXd dead(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = data.patients[i];
    if (p.y_E < 0 || p.y_E > model.extended_bound())
      throw DataError("patient " + std::to_string(i) + ": y_E = " + std::to_string(p.y_E) + " outside [0, u - p~]");
    dah_from_components(model.u, p.dead, p.y_I, p.y_S);
    dead[static_cast<Eigen::Index>(i)] = p.dead;
    if (p.dead) continue;
    alive.push_back(i);
    if (!p.extended) {
      if (p.protocol_stay > model.ptilde)
        throw DataError("patient " + std::to_string(i) + ": protocol stay exceeds p~ without an extension");
      out.protocol_stays.push_back(p.protocol_stay);
    }
    if (p.y_I < model.u) {
      uncensored.push_back(i);
    } else if (p.y_S > 0) {
      throw DataError("patient " + std::to_string(i) + ": subsequent care recorded after a censored initial stay");
    }
  }
  out.death.y = dead;
  out.death.frame = data.covariates;

  out.extended.frame = data.covariates.subset(alive);
  out.extended.y.resize(static_cast<Eigen::Index>(alive.size()));
  out.extended.bound.assign(alive.size(), model.extended_bound());
  for (std::size_t k = 0; k < alive.size(); ++k) out.extended.y[static_cast<Eigen::Index>(k)] = data.patients[alive[k]].y_E;

  const auto m = static_cast<Eigen::Index>(uncensored.size());
  out.care.frame = data.covariates.subset(uncensored);
  out.care.y.resize(m);
  Eigen::VectorXd ye(m), yz(m);
  for (std::size_t k = 0; k < uncensored.size(); ++k) {
    const auto& p = data.patients[uncensored[k]];
    const auto kk = static_cast<Eigen::Index>(k);
    out.care.y[kk] = p.care ? p.y_C : 0;
    out.care.bound.push_back(model.u - p.y_I);
    ye[kk] = p.y_E;
    yz[kk] = p.y_E == 0;
  }
  out.care.frame.set(kExtendedStayVar, ye);
  out.care.frame.set(kNoExtensionVar, yz);
  return out;
}

CompositeLogLikelihood composite_log_likelihood(const CompositeModel& model, const CompositeData& data) {
  model.validate();
  const auto set = split_components(model, data);
  CompositeLogLikelihood ll;
  ll.death = component_log_likelihood(model.death, set.death);
  if (set.extended.size() > 0) ll.extended = component_log_likelihood(model.extended, set.extended);
  if (set.care.size() > 0) ll.care = component_log_likelihood(model.care, set.care);
  const auto protocol = model.protocol.law(model.ptilde);
  for (int p : set.protocol_stays) ll.protocol += protocol.log_pmf(p);
  return ll;
}

double patient_log_likelihood(const CompositeModel& model, const CompositeData& data, std::size_t i) {
  CompositeData one;
  one.patients = {data.patients.at(i)};
  const std::size_t idx[] = {i};
  one.covariates = data.covariates.subset(idx);
  return composite_log_likelihood(model, one).total();
}

// ---------------------------------------------------------------------------

namespace {

FitResult fit_one(const ComponentSpec& spec, const ComponentData& data, const CompositeFitOptions& o,
                  std::vector<std::string>& warnings) {
  auto it = o.candidates.find(spec.name);
  FitResult fit;
  if (o.stepwise && it != o.candidates.end()) {
    StepwiseOptions so;
    so.fit = o.fit;
    auto res = stepwise_select(spec, data, it->second, so);
    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
    fit = std::move(res.fit);
  } else {
    ComponentSpec fresh = spec;
    for (auto& p : fresh.parameters) p.beta.setZero();
    fit = fit_component(fresh, data, o.fit);
  }
  for (const auto& w : fit.warnings) warnings.push_back(spec.name + ": " + w);
  return fit;
}

}  // namespace

CompositeFit fit_composite(const CompositeModel& structure, const CompositeData& data, const CompositeFitOptions& options) {
  structure.validate();
  const auto set = split_components(structure, data);
  CompositeFit out;
  out.model = structure;

  out.death = fit_one(structure.death, set.death, options, out.warnings);
  out.model.death = out.death.spec;

  if (set.extended.size() == 0) throw DataError("component 'extended': no surviving patients to fit");
  out.extended = fit_one(structure.extended, set.extended, options, out.warnings);
  out.model.extended = out.extended.spec;

  // Protocol stay: categorical MLE, or a point mass at p~ when nobody left early.
  const bool early = std::any_of(set.protocol_stays.begin(), set.protocol_stays.end(),
                                 [&](int p) { return p < structure.ptilde; });
  out.protocol_degenerate = !early;
  out.model.protocol.probs.clear();
  if (early) {
    std::vector<double> probs(static_cast<std::size_t>(structure.ptilde) + 1, 0.0);
    for (int p : set.protocol_stays) probs[static_cast<std::size_t>(p)] += 1.0;
    for (double& q : probs) q /= static_cast<double>(set.protocol_stays.size());
    out.model.protocol.probs = probs;
  }

  const bool any_care = (set.care.y.array() > 0).any();
  if (!any_care) {
    // Nobody needed subsequent care: the hurdle sits at "no care" with certainty.
    ComponentSpec spec = structure.care;
    bind_columns(spec, set.care.size() > 0 ? set.care.frame : [&] {
      Frame f = data.covariates.subset(std::vector<std::size_t>{});
      f.set(kExtendedStayVar, Eigen::VectorXd(0));
      f.set(kNoExtensionVar, Eigen::VectorXd(0));
      return f;
    }());
    for (auto& p : spec.parameters) p.beta.setZero();
    auto& nu = spec.parameter("nu");
    nu.beta[0] = spec.zero_orientation == ZeroOrientation::ProbabilityOfZero ? kEtaBound : -kEtaBound;
    out.care.spec = spec;
    out.care.degenerate = true;
    out.care.converged = true;
    out.care.observations = set.care.size();
    out.care.log_likelihood = set.care.size() > 0 ? component_log_likelihood(spec, set.care) : 0.0;
    out.care.df = 1;
    out.care.gaic_k = options.fit.gaic_k;
    out.care.gaic = gaic(out.care.log_likelihood, out.care.df, options.fit.gaic_k);
    for (const auto& p : spec.parameters)
      for (std::size_t j = 0; j < p.column_names.size(); ++j)
        out.care.coefficients.push_back({p.name, p.column_names[j], p.beta[static_cast<Eigen::Index>(j)],
                                         std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                                         std::numeric_limits<double>::quiet_NaN(), true});
    out.care_degenerate = true;
    out.warnings.push_back("care: no patient received subsequent care; component set to a point mass at zero");
    log_warning(out.warnings.back());
  } else {
    out.care = fit_one(structure.care, set.care, options, out.warnings);
  }
  out.model.care = out.care.spec;
  return out;
}

}  // namespace dah

#include "dah/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dah/errors.hpp"
#include "dah/io.hpp"

namespace dah {

using nlohmann::json;

const char* model_key_name(ModelKey k) {
  switch (k) {
    case ModelKey::DnC: return "dnc";
    case ModelKey::ZABB: return "zabb";
    case ModelKey::ZABeta: return "zab";
    case ModelKey::FlippedLogNormal: return "flognormal";
    case ModelKey::ZIFlippedPoisson: return "zifpoisson";
    case ModelKey::FlippedNB: return "fnb";
  }
  return "?";
}

std::vector<ModelKey> all_model_keys() {
  return {ModelKey::DnC, ModelKey::ZABB, ModelKey::ZABeta, ModelKey::FlippedLogNormal, ModelKey::ZIFlippedPoisson,
          ModelKey::FlippedNB};
}

ModelKey parse_model_key(const std::string& s) {
  for (ModelKey k : all_model_keys())
    if (s == model_key_name(k)) return k;
  throw ConfigError("unknown model '" + s + "' (expected dnc, zabb, zab, flognormal, zifpoisson or fnb)");
}

CompetitorKind competitor_kind(ModelKey k) {
  switch (k) {
    case ModelKey::ZABB: return CompetitorKind::ZeroAdjustedBetaBinomial;
    case ModelKey::ZABeta: return CompetitorKind::ZeroAdjustedBeta;
    case ModelKey::FlippedLogNormal: return CompetitorKind::FlippedLogNormal;
    case ModelKey::ZIFlippedPoisson: return CompetitorKind::ZeroInflatedFlippedPoisson;
    case ModelKey::FlippedNB: return CompetitorKind::FlippedNegativeBinomial;
    case ModelKey::DnC: break;
  }
  throw ConfigError("the D&C model is not a competitor");
}

namespace {

// Typed access to one JSON object, rejecting keys outside the schema.
class Node {
 public:
  Node(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object");
    for (const auto& [key, value] : j_.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
        throw ConfigError("unknown key '" + child(key) + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) const { return j_.at(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  void read(const char* key, T& out) const {
    if (!has(key)) return;
    out = get<T>(j_.at(key), child(key));
  }

  template <class T>
  static T get(const json& v, const std::string& path) {
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path + " must be true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
            throw ConfigError(path + " must be non-negative");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(path + " must be a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(path + " must be a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config " : path_ + " "; }
  const json& j_;
  std::string path_;
};

std::vector<std::string> string_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + " must be a list of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Node::get<std::string>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<double> number_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + " must be a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Node::get<double>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

const char* zero_model_name(ZeroModel z) {
  switch (z) {
    case ZeroModel::None: return "none";
    case ZeroModel::Adjusted: return "adjusted";
    case ZeroModel::Inflated: return "inflated";
  }
  return "?";
}

ZeroModel parse_zero_model(const std::string& s, const std::string& path) {
  for (ZeroModel z : {ZeroModel::None, ZeroModel::Adjusted, ZeroModel::Inflated})
    if (s == zero_model_name(z)) return z;
  throw ConfigError(path + " must be none, adjusted or inflated");
}

// Returns true when any parameter of the component is marked for fitting.
bool parse_component(const json& j, const std::string& path, const std::string& name, ComponentSpec& out) {
  const Node n(j, path, {"family", "zero", "zero_orientation", "censored", "zero_truncated", "parameters"});
  if (!n.has("family")) throw ConfigError(path + ".family is required");
  if (!n.has("parameters")) throw ConfigError(path + ".parameters is required");
  const Family family = parse_family(Node::get<std::string>(n.raw("family"), n.child("family")));
  ZeroModel zero = ZeroModel::None;
  if (n.has("zero")) zero = parse_zero_model(Node::get<std::string>(n.raw("zero"), n.child("zero")), n.child("zero"));
  ComponentSpec spec = make_component(name, family, zero);
  if (n.has("zero_orientation")) {
    const auto o = Node::get<std::string>(n.raw("zero_orientation"), n.child("zero_orientation"));
    if (o == "zero") {
      spec.zero_orientation = ZeroOrientation::ProbabilityOfZero;
    } else if (o == "positive") {
      spec.zero_orientation = ZeroOrientation::ProbabilityOfPositive;
    } else {
      throw ConfigError(n.child("zero_orientation") + " must be 'zero' or 'positive'");
    }
  }
  n.read("censored", spec.censored);
  n.read("zero_truncated", spec.zero_truncated);

  const json& params = n.raw("parameters");
  const std::string ppath = n.child("parameters");
  if (!params.is_object()) throw ConfigError(ppath + " must be an object");
  for (const auto& [key, value] : params.items())
    if (!spec.has_parameter(key)) throw ConfigError("unknown key '" + ppath + "." + key + "' for family " + family_name(family));
  bool fit = false;
  const Frame proto = prototype_frame();
  for (auto& p : spec.parameters) {
    const std::string where = ppath + "." + p.name;
    if (!params.contains(p.name)) throw ConfigError(where + " is required");
    const Node pn(params.at(p.name), where, {"link", "terms", "coefficients"});
    if (pn.has("link")) {
      try {
        p.link = parse_link(Node::get<std::string>(pn.raw("link"), pn.child("link")));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(pn.child("link") + ": " + e.what());
      }
    }
    if (pn.has("terms")) {
      try {
        p.terms = parse_terms(string_list(pn.raw("terms"), pn.child("terms")));
        for (const auto& t : p.terms)
          for (const auto& v : t.variables)
            if (!proto.has(v) && !proto.factor_columns(v))
              throw ConfigError(pn.child("terms") + ": unknown variable '" + v + "'");
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(pn.child("terms") + ": " + e.what());
      }
    }
    if (!pn.has("coefficients")) throw ConfigError(pn.child("coefficients") + " is required (values or \"fit\")");
    ComponentSpec one;
    one.parameters = {p};
    bind_columns(one, proto);
    p = one.parameters.front();
    const json& c = pn.raw("coefficients");
    if (c.is_string()) {
      if (c.get<std::string>() != "fit") throw ConfigError(pn.child("coefficients") + " must be an object or \"fit\"");
      fit = true;
      continue;
    }
    if (!c.is_object()) throw ConfigError(pn.child("coefficients") + " must be an object or \"fit\"");
    for (const auto& [col, value] : c.items())
      if (std::find(p.column_names.begin(), p.column_names.end(), col) == p.column_names.end())
        throw ConfigError("unknown key '" + pn.child("coefficients") + "." + col + "'");
    for (std::size_t k = 0; k < p.column_names.size(); ++k) {
      const auto& col = p.column_names[k];
      if (!c.contains(col)) throw ConfigError(pn.child("coefficients") + " is missing '" + col + "'");
      p.beta[static_cast<Eigen::Index>(k)] = Node::get<double>(c.at(col), pn.child("coefficients") + "." + col);
    }
  }
  out = spec;
  return fit;
}

// Returns true for "fit".
bool parse_protocol(const json& j, const std::string& path, ProtocolStay& out) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "fit") return true;
    if (s == "point_mass") {
      out.probs.clear();
      return false;
    }
    throw ConfigError(path + " must be \"point_mass\", \"fit\" or a list of probabilities");
  }
  out.probs = number_list(j, path);
  return false;
}

CompositeModel parse_model(const json& j, int u, int ptilde, DahDefinition def, std::set<std::string>& to_fit) {
  to_fit.clear();
  CompositeModel m;
  if (j.is_string()) {
    if (j.get<std::string>() != "canonical") throw ConfigError("model must be \"canonical\" or an object");
    m = canonical_model();
  } else {
    const Node n(j, "model", {"death", "protocol", "extended", "care"});
    for (const char* k : {"death", "protocol", "extended", "care"})
      if (!n.has(k)) throw ConfigError(n.child(k) + " is required");
    if (parse_component(n.raw("death"), n.child("death"), "death", m.death)) to_fit.insert("death");
    if (parse_protocol(n.raw("protocol"), n.child("protocol"), m.protocol)) to_fit.insert("protocol");
    if (parse_component(n.raw("extended"), n.child("extended"), "extended", m.extended)) to_fit.insert("extended");
    if (parse_component(n.raw("care"), n.child("care"), "care", m.care)) to_fit.insert("care");
  }
  m.u = u;
  m.ptilde = ptilde;
  m.definition = def;
  m.validate();
  return m;
}

}  // namespace

json component_to_json(const ComponentSpec& spec, bool fit) {
  json j;
  j["family"] = family_name(spec.family);
  j["zero"] = zero_model_name(spec.zero);
  j["zero_orientation"] = spec.zero_orientation == ZeroOrientation::ProbabilityOfZero ? "zero" : "positive";
  j["censored"] = spec.censored;
  j["zero_truncated"] = spec.zero_truncated;
  json params = json::object();
  for (const auto& p : spec.parameters) {
    json pj;
    pj["link"] = link_name(p.link);
    json terms = json::array();
    for (const auto& t : p.terms) terms.push_back(t.label);
    pj["terms"] = terms;
    if (fit) {
      pj["coefficients"] = "fit";
    } else {
      json c = json::object();
      for (std::size_t k = 0; k < p.column_names.size(); ++k) c[p.column_names[k]] = p.beta[static_cast<Eigen::Index>(k)];
      pj["coefficients"] = c;
    }
    params[p.name] = pj;
  }
  j["parameters"] = params;
  return j;
}

json model_to_json(const CompositeModel& m, const std::set<std::string>& to_fit) {
  json j;
  j["death"] = component_to_json(m.death, to_fit.count("death") > 0);
  if (to_fit.count("protocol")) {
    j["protocol"] = "fit";
  } else if (m.protocol.degenerate()) {
    j["protocol"] = "point_mass";
  } else {
    j["protocol"] = m.protocol.probs;
  }
  j["extended"] = component_to_json(m.extended, to_fit.count("extended") > 0);
  j["care"] = component_to_json(m.care, to_fit.count("care") > 0);
  return j;
}

void ScenarioConfig::validate() const {
  if (u < 1) throw ConfigError("u must be positive");
  if (ptilde < 0 || ptilde >= u) throw ConfigError("ptilde must lie in [0, u)");
  if (simulate_n < 1) throw ConfigError("simulate.n must be positive");
  if (simulate_format != "components" && simulate_format != "trajectories")
    throw ConfigError("simulate.format must be components or trajectories");
  for (double p : {covariates.sex, covariates.bmi, covariates.age, covariates.country_AU, covariates.country_NZ,
                   covariates.treatment})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("simulate.covariates shares must lie in [0, 1]");
  if (covariates.country_AU + covariates.country_NZ > 1.0) throw ConfigError("country shares exceed 1");
  if (!(gaic_k > 0.0)) throw ConfigError("fit.gaic_k must be positive");
  if (restarts < 0) throw ConfigError("fit.restarts must be non-negative");
  for (const auto& [component, params] : candidates)
    if (component != "extended" && component != "care")
      throw ConfigError("fit.candidates keys must be extended or care, got '" + component + "'");
  if (qq_B < 1 || qq_grid < 1) throw ConfigError("diagnostics.B and diagnostics.grid must be positive");
  if (control_fit_n < 10) throw ConfigError("competitors.control_fit_n must be at least 10");
  if (!(grid_step > 0.0) || !(grid_to > grid_from)) throw ConfigError("calibration.grid needs from < to and step > 0");
  if (calibration_sim_n < 1 || refine_steps < 0) throw ConfigError("calibration.sim_n and refine_steps out of range");
  for (int n : n_grid)
    if (n < 2) throw ConfigError("power.n_grid entries must be at least 2");
  if (reps < 1) throw ConfigError("power.reps must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("power.alpha must lie in (0, 1)");
  if (!(allocation > 0.0)) throw ConfigError("power.allocation must be positive");
  if (!(target_power > 0.0 && target_power < 1.0)) throw ConfigError("power.target_power must lie in (0, 1)");
  if (models.empty()) throw ConfigError("models must not be empty");
}

ScenarioConfig parse_config(const json& j) {
  ScenarioConfig c;
  const Node n(j, "", {"u", "ptilde", "dah_definition", "seed", "threads", "data", "out_dir", "model", "simulate",
                       "fit", "diagnostics", "competitors", "calibration", "power", "models"});
  n.read("u", c.u);
  n.read("ptilde", c.ptilde);
  if (n.has("dah_definition")) c.definition = parse_definition(Node::get<std::string>(n.raw("dah_definition"), "dah_definition"));
  n.read("seed", c.seed);
  n.read("threads", c.threads);
  n.read("data", c.data);
  n.read("out_dir", c.out_dir);
  if (c.u < 1 || c.ptilde < 0 || c.ptilde >= c.u) throw ConfigError("need u >= 1 and 0 <= ptilde < u");
  c.model = parse_model(n.has("model") ? n.raw("model") : json("canonical"), c.u, c.ptilde, c.definition, c.to_fit);

  if (n.has("simulate")) {
    const Node s(n.raw("simulate"), "simulate", {"n", "format", "covariates"});
    s.read("n", c.simulate_n);
    s.read("format", c.simulate_format);
    if (s.has("covariates")) {
      const Node v(s.raw("covariates"), "simulate.covariates",
                   {"sex", "bmi", "age", "country_AU", "country_NZ", "treatment"});
      v.read("sex", c.covariates.sex);
      v.read("bmi", c.covariates.bmi);
      v.read("age", c.covariates.age);
      v.read("country_AU", c.covariates.country_AU);
      v.read("country_NZ", c.covariates.country_NZ);
      v.read("treatment", c.covariates.treatment);
    }
  }
  if (n.has("fit")) {
    const Node f(n.raw("fit"), "fit", {"gaic_k", "restarts", "stepwise", "candidates"});
    f.read("gaic_k", c.gaic_k);
    f.read("restarts", c.restarts);
    f.read("stepwise", c.stepwise);
    if (f.has("candidates")) {
      const json& cj = f.raw("candidates");
      if (!cj.is_object()) throw ConfigError("fit.candidates must be an object");
      for (const auto& [component, params] : cj.items()) {
        const Node pn(params, "fit.candidates." + component, {"mu", "sigma", "nu"});
        for (const auto& [param, list] : params.items())
          c.candidates[component][param] = string_list(list, pn.child(param));
      }
    }
  }
  if (n.has("diagnostics")) {
    const Node d(n.raw("diagnostics"), "diagnostics", {"B", "grid"});
    d.read("B", c.qq_B);
    d.read("grid", c.qq_grid);
  }
  if (n.has("competitors")) {
    const Node d(n.raw("competitors"), "competitors", {"location_terms", "zero_terms", "control_fit_n"});
    if (d.has("location_terms")) c.competitor_location_terms = string_list(d.raw("location_terms"), "competitors.location_terms");
    if (d.has("zero_terms")) c.competitor_zero_terms = string_list(d.raw("zero_terms"), "competitors.zero_terms");
    d.read("control_fit_n", c.control_fit_n);
  }
  if (n.has("calibration")) {
    const Node d(n.raw("calibration"), "calibration", {"target", "grid", "sim_n", "refine_steps"});
    d.read("target", c.calibration_target);
    d.read("sim_n", c.calibration_sim_n);
    d.read("refine_steps", c.refine_steps);
    if (d.has("grid")) {
      const Node g(d.raw("grid"), "calibration.grid", {"from", "to", "step"});
      g.read("from", c.grid_from);
      g.read("to", c.grid_to);
      g.read("step", c.grid_step);
    }
  }
  if (n.has("power")) {
    const Node d(n.raw("power"), "power", {"n_grid", "reps", "alpha", "allocation", "target_power"});
    if (d.has("n_grid")) {
      c.n_grid.clear();
      for (double v : number_list(d.raw("n_grid"), "power.n_grid")) {
        if (v != std::floor(v)) throw ConfigError("power.n_grid entries must be integers");
        c.n_grid.push_back(static_cast<int>(v));
      }
    }
    d.read("reps", c.reps);
    d.read("alpha", c.alpha);
    d.read("allocation", c.allocation);
    d.read("target_power", c.target_power);
  }
  if (n.has("models")) {
    c.models.clear();
    for (const auto& s : string_list(n.raw("models"), "models")) c.models.push_back(parse_model_key(s));
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ScenarioConfig& c) {
  json j;
  j["u"] = c.u;
  j["ptilde"] = c.ptilde;
  j["dah_definition"] = definition_name(c.definition);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["data"] = c.data;
  j["out_dir"] = c.out_dir;
  j["model"] = model_to_json(c.model, c.to_fit);
  j["simulate"] = {{"n", c.simulate_n},
                   {"format", c.simulate_format},
                   {"covariates",
                    {{"sex", c.covariates.sex},
                     {"bmi", c.covariates.bmi},
                     {"age", c.covariates.age},
                     {"country_AU", c.covariates.country_AU},
                     {"country_NZ", c.covariates.country_NZ},
                     {"treatment", c.covariates.treatment}}}};
  json cand = json::object();
  for (const auto& [component, params] : c.candidates)
    for (const auto& [param, list] : params) cand[component][param] = list;
  j["fit"] = {{"gaic_k", c.gaic_k}, {"restarts", c.restarts}, {"stepwise", c.stepwise}, {"candidates", cand}};
  j["diagnostics"] = {{"B", c.qq_B}, {"grid", c.qq_grid}};
  j["competitors"] = {{"location_terms", c.competitor_location_terms},
                      {"zero_terms", c.competitor_zero_terms},
                      {"control_fit_n", c.control_fit_n}};
  j["calibration"] = {{"target", c.calibration_target},
                      {"grid", {{"from", c.grid_from}, {"to", c.grid_to}, {"step", c.grid_step}}},
                      {"sim_n", c.calibration_sim_n},
                      {"refine_steps", c.refine_steps}};
  j["power"] = {{"n_grid", c.n_grid},
                {"reps", c.reps},
                {"alpha", c.alpha},
                {"allocation", c.allocation},
                {"target_power", c.target_power}};
  json models = json::array();
  for (ModelKey k : c.models) models.push_back(model_key_name(k));
  j["models"] = models;
  return j;
}

std::string canonical_text(const json& j) { return j.dump(); }

std::string config_hash(const ScenarioConfig& c) { return hex64(fnv1a64(canonical_text(to_json(c)))); }

}  // namespace dah

#include "dah/trial_design.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "dah/errors.hpp"
#include "dah/log.hpp"
#include "dah/parallel.hpp"
#include "dah/pmf_sampler.hpp"

namespace dah {

namespace {

constexpr int kExactLimit = 20;

// Two-sided exact p-value of U for untied samples of sizes m and n.
double exact_mww_p(int m, int n, double u) {
  // f[j][k]: arrangements of j first-sample and (current) second-sample values with U = k.
  const int max_u = m * n;
  std::vector<std::vector<double>> f(static_cast<std::size_t>(m) + 1, std::vector<double>(max_u + 1, 0.0));
  std::vector<std::vector<double>> g = f;
  for (int j = 0; j <= m; ++j) f[static_cast<std::size_t>(j)][0] = 1.0;  // second sample empty
  for (int i = 1; i <= n; ++i) {
    for (auto& row : g) std::fill(row.begin(), row.end(), 0.0);
    g[0][0] = 1.0;
    for (int j = 1; j <= m; ++j)
      for (int k = 0; k <= j * i; ++k) {
        // Largest value belongs to the first sample (beats all i) or to the second.
        double v = f[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
        if (k >= i) v += g[static_cast<std::size_t>(j) - 1][static_cast<std::size_t>(k - i)];
        g[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = v;
      }
    std::swap(f, g);
  }
  const auto& dist = f[static_cast<std::size_t>(m)];
  double total = 0.0, lower = 0.0, upper = 0.0;
  for (int k = 0; k <= max_u; ++k) {
    const double c = dist[static_cast<std::size_t>(k)];
    total += c;
    if (k <= u + 1e-9) lower += c;
    if (k >= u - 1e-9) upper += c;
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

}  // namespace

MwwResult mww_test_counts(std::span<const long> cx, std::span<const long> cy) {
  const std::size_t values = std::max(cx.size(), cy.size());
  double nx = 0.0, ny = 0.0;
  for (long c : cx) nx += static_cast<double>(c);
  for (long c : cy) ny += static_cast<double>(c);
  if (nx == 0.0 || ny == 0.0) throw DataError("MWW test needs two nonempty samples");
  const double n = nx + ny;
  double rank_sum = 0.0, ties = 0.0, before = 0.0;
  bool tied = false;
  for (std::size_t v = 0; v < values; ++v) {
    const double a = v < cx.size() ? static_cast<double>(cx[v]) : 0.0;
    const double b = v < cy.size() ? static_cast<double>(cy[v]) : 0.0;
    const double t = a + b;
    if (t == 0.0) continue;
    rank_sum += a * (before + (t + 1.0) / 2.0);
    ties += t * t * t - t;
    tied = tied || t > 1.0;
    before += t;
  }
  MwwResult r;
  r.u = rank_sum - nx * (nx + 1.0) / 2.0;
  const double mean = nx * ny / 2.0;
  if (!tied && n <= kExactLimit) {
    r.exact = true;
    r.p_value = exact_mww_p(static_cast<int>(nx), static_cast<int>(ny), r.u);
    return r;
  }
  const double var = nx * ny / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (!(var > 0.0)) return r;  // every value tied: no evidence either way
  const double d = r.u - mean;
  const double corr = d > 0 ? 0.5 : d < 0 ? -0.5 : 0.0;
  r.z = (d - corr) / std::sqrt(var);
  r.p_value = std::min(1.0, 2.0 * normal_cdf(-std::abs(r.z)));
  return r;
}

MwwResult mww_test(std::span<const int> x, std::span<const int> y) {
  if (x.empty() || y.empty()) throw DataError("MWW test needs two nonempty samples");
  const int lo = std::min(*std::min_element(x.begin(), x.end()), *std::min_element(y.begin(), y.end()));
  const int hi = std::max(*std::max_element(x.begin(), x.end()), *std::max_element(y.begin(), y.end()));
  std::vector<long> cx(static_cast<std::size_t>(hi - lo) + 1, 0), cy(cx.size(), 0);
  for (int v : x) ++cx[static_cast<std::size_t>(v - lo)];
  for (int v : y) ++cy[static_cast<std::size_t>(v - lo)];
  return mww_test_counts(cx, cy);
}

double median_from_counts(std::span<const long> counts) {
  long n = 0;
  for (long c : counts) n += c;
  if (n == 0) throw DataError("median of an empty sample");
  auto value_at = [&](long pos) {  // 1-based order statistic
    long cum = 0;
    for (std::size_t v = 0; v < counts.size(); ++v) {
      cum += counts[v];
      if (cum >= pos) return static_cast<double>(v);
    }
    return static_cast<double>(counts.size() - 1);
  };
  if (n % 2 == 1) return value_at((n + 1) / 2);
  return 0.5 * (value_at(n / 2) + value_at(n / 2 + 1));
}

// ---------------------------------------------------------------------------

std::vector<double> marginal_pmf(const CompositeSimulator& sim) {
  std::vector<double> out(static_cast<std::size_t>(sim.model().u) + 1, 0.0);
  for (std::size_t r = 0; r < sim.rows(); ++r) {
    const auto p = sim.dah_pmf(r);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += p[d];
  }
  for (double& v : out) v /= static_cast<double>(sim.rows());
  return out;
}

std::vector<double> marginal_pmf(const CompetitorSimulator& sim) {
  std::vector<double> out(static_cast<std::size_t>(sim.spec().u) + 1, 0.0);
  for (std::size_t r = 0; r < sim.rows(); ++r) {
    const auto p = sim.dah_pmf(r);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += p[d];
  }
  for (double& v : out) v /= static_cast<double>(sim.rows());
  return out;
}

EffectModel composite_effect_model(const CompositeModel& control, const Frame& covariates, std::string name) {
  EffectModel m;
  m.name = std::move(name);
  m.treated = [control, covariates](double coef) {
    CompositeModel t = control;
    t.extended.parameter("mu").offset += coef;
    return marginal_pmf(CompositeSimulator(std::move(t), covariates));
  };
  m.control = m.treated(0.0);
  return m;
}

EffectModel competitor_effect_model(const CompetitorSpec& control, const Frame& covariates) {
  EffectModel m;
  m.name = competitor_name(control.kind);
  if (control.shift > 0) m.name += "-shift" + std::to_string(control.shift);
  m.treated = [control, covariates](double coef) {
    CompetitorSpec t = control;
    shift_location(t, coef);
    return marginal_pmf(CompetitorSimulator(std::move(t), covariates));
  };
  m.control = m.treated(0.0);
  return m;
}

EffectModel fitted_competitor_effect_model(CompetitorKind kind, const CompositeModel& control, std::size_t n,
                                           std::uint64_t seed, int shift) {
  const auto key = static_cast<std::uint64_t>(kind);
  CompositeSimulator sim(control, reference_covariates(n));
  Rng rng = make_stream(seed, Stream::Simulation, {key});
  std::vector<int> dah(n);
  for (std::size_t i = 0; i < n; ++i) dah[i] = sim.simulate(i, rng).dah;
  FitOptions fo;
  fo.seed = seed;
  fo.compute_hessian = false;
  const auto fit = fit_competitor(make_competitor(kind, control.u, shift), dah, Frame(n), fo);
  return competitor_effect_model(fit.spec, Frame(1));
}

// ---------------------------------------------------------------------------

namespace {

std::vector<long> sample_counts(const std::vector<double>& pmf, std::size_t n, Rng& rng) {
  const PmfSampler s(pmf);
  std::vector<long> c(pmf.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++c[static_cast<std::size_t>(s(rng))];
  return c;
}

std::string describe_ladder(const std::vector<CalibrationPoint>& ladder) {
  std::ostringstream os;
  std::size_t i = 0;
  while (i < ladder.size()) {
    std::size_t j = i;
    while (j + 1 < ladder.size() && ladder[j + 1].difference == ladder[i].difference) ++j;
    os << (i ? "; " : "") << "[" << ladder[i].coefficient << ", " << ladder[j].coefficient
       << "] -> " << ladder[i].difference;
    i = j + 1;
  }
  return os.str();
}

}  // namespace

CalibrationPoint median_difference(const EffectModel& model, double coefficient, std::size_t sim_n, std::uint64_t seed) {
  Rng rc = make_stream(seed, Stream::Calibration, {0});
  Rng rt = make_stream(seed, Stream::Calibration, {1});
  CalibrationPoint p;
  p.coefficient = coefficient;
  p.median_control = median_from_counts(sample_counts(model.control, sim_n, rc));
  p.median_treated = median_from_counts(sample_counts(model.treated(coefficient), sim_n, rt));
  p.difference = p.median_treated - p.median_control;
  return p;
}

CalibrationResult calibrate_effect(const EffectModel& model, const CalibrationOptions& options) {
  std::vector<double> grid = options.grid;
  if (grid.empty())
    for (int k = -60; k <= 60; ++k) grid.push_back(0.05 * k);
  std::sort(grid.begin(), grid.end());
  if (options.sim_n < 1) throw ConfigError("calibration needs sim_n >= 1");

  CalibrationResult out;
  out.target = options.target;
  for (double c : grid) out.ladder.push_back(median_difference(model, c, options.sim_n, options.seed));
  const auto& L = out.ladder;
  out.direction = L.back().difference > L.front().difference ? 1 : L.back().difference < L.front().difference ? -1 : 0;

  // Longest run of consecutive grid points hitting the target exactly.
  std::size_t best_i = 0, best_len = 0;
  for (std::size_t i = 0; i < L.size();) {
    if (L[i].difference != options.target) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < L.size() && L[j + 1].difference == options.target) ++j;
    if (j - i + 1 > best_len) {
      best_len = j - i + 1;
      best_i = i;
    }
    i = j + 1;
  }
  if (best_len == 0)
    throw ConfigError("median difference " + std::to_string(options.target) +
                      " is never attained on the coefficient grid; extend the range. Observed steps: " +
                      describe_ladder(L));

  const std::size_t i0 = best_i, i1 = best_i + best_len - 1;
  auto hits = [&](double c) { return median_difference(model, c, options.sim_n, options.seed).difference == options.target; };
  // Bisection between the last miss and the first hit on each side.
  out.lo = L[i0].coefficient;
  if (i0 > 0) {
    double miss = L[i0 - 1].coefficient, hit = out.lo;
    for (int s = 0; s < options.refine_steps; ++s) {
      const double mid = 0.5 * (miss + hit);
      (hits(mid) ? hit : miss) = mid;
    }
    out.lo = hit;
  } else {
    out.notes.push_back("band reaches the lower end of the grid");
  }
  out.hi = L[i1].coefficient;
  if (i1 + 1 < L.size()) {
    double hit = out.hi, miss = L[i1 + 1].coefficient;
    for (int s = 0; s < options.refine_steps; ++s) {
      const double mid = 0.5 * (hit + miss);
      (hits(mid) ? hit : miss) = mid;
    }
    out.hi = hit;
  } else {
    out.notes.push_back("band reaches the upper end of the grid");
  }
  out.midpoint = 0.5 * (out.lo + out.hi);
  for (const auto& n : out.notes) log_warning(model.name + " calibration: " + n);
  return out;
}

CalibrationResult calibrate_effect_magnitude(const EffectModel& model, const CalibrationOptions& options) {
  CalibrationOptions o = options;
  o.target = std::abs(options.target);
  try {
    return calibrate_effect(model, o);
  } catch (const ConfigError& first) {
    o.target = -o.target;
    auto r = calibrate_effect(model, o);
    r.notes.push_back("a median difference of +" + std::to_string(std::abs(options.target)) +
                      " is unattainable (" + first.what() + "); calibrated to " + std::to_string(o.target) + " instead");
    log_warning(model.name + " calibration: " + r.notes.back());
    return r;
  }
}

// ---------------------------------------------------------------------------

std::vector<int> default_n_grid() {
  std::vector<int> g;
  for (int n = 100; n <= 500; n += 50) g.push_back(n);
  for (int n = 600; n <= 2000; n += 100) g.push_back(n);
  return g;
}

DesignStudyResult power_curve(const std::vector<double>& control, const std::vector<double>& treated,
                              const PowerOptions& options, std::string scenario) {
  if (options.reps < 1) throw ConfigError("power study needs reps >= 1");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(options.allocation > 0.0)) throw ConfigError("allocation ratio must be positive");
  DesignStudyResult out;
  out.scenario = std::move(scenario);
  out.alpha = options.alpha;
  out.reps = options.reps;
  out.seed = options.seed;
  const PmfSampler sc(control), st(treated);
  const std::size_t values = std::max(control.size(), treated.size());
  std::uint64_t tag = 0xcbf29ce484222325ull;  // FNV-1a of the scenario name
  for (unsigned char ch : out.scenario) tag = (tag ^ ch) * 0x100000001b3ull;

  const auto grid = options.n_grid.empty() ? default_n_grid() : options.n_grid;
  for (int n : grid) {
    const int nt = static_cast<int>(std::lround(n * options.allocation / (1.0 + options.allocation)));
    const int nc = n - nt;
    if (nt < 1 || nc < 1) throw ConfigError("sample size " + std::to_string(n) + " leaves an arm empty");
    std::atomic<long> rejections{0};
    parallel_for(static_cast<std::size_t>(options.reps), options.threads, [&](std::size_t r, unsigned) {
      Rng rng = make_stream(options.seed, Stream::PowerReplicates, {tag, static_cast<std::uint64_t>(n), r});
      std::vector<long> cc(values, 0), ct(values, 0);
      for (int i = 0; i < nc; ++i) ++cc[static_cast<std::size_t>(sc(rng))];
      for (int i = 0; i < nt; ++i) ++ct[static_cast<std::size_t>(st(rng))];
      if (mww_test_counts(ct, cc).p_value < options.alpha) rejections.fetch_add(1, std::memory_order_relaxed);
    });
    PowerPoint p;
    p.n = n;
    p.reps = options.reps;
    p.rejections = rejections.load();
    p.rate = static_cast<double>(p.rejections) / options.reps;
    p.mc_se = std::sqrt(p.rate * (1.0 - p.rate) / options.reps);
    out.points.push_back(p);
  }
  return out;
}

std::pair<DesignStudyResult, DesignStudyResult> power_curves(const EffectModel& model, double coefficient,
                                                             const PowerOptions& options) {
  auto null = power_curve(model.control, model.control, options, "null");
  auto alt = power_curve(model.control, model.treated(coefficient), options, "alternative");
  null.model = alt.model = model.name;
  null.coefficient = 0.0;
  alt.coefficient = coefficient;
  return {std::move(null), std::move(alt)};
}

SampleSizeResult min_sample_size(const DesignStudyResult& result, double target_power) {
  auto pts = result.points;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
  SampleSizeResult out;
  for (const auto& p : pts) {
    if (p.rate >= target_power) {
      out.n = p.n;
      out.power = p.rate;
      out.mc_se = p.mc_se;
      return out;
    }
    out.below_n = p.n;
    out.below_power = p.rate;
    out.below_mc_se = p.mc_se;
  }
  const auto best = std::max_element(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.rate < b.rate; });
  throw NumericalError("target power " + std::to_string(target_power) + " is not reached on the grid; largest power " +
                       (best == pts.end() ? std::string("n/a") :
                                            std::to_string(best->rate) + " at n = " + std::to_string(best->n)));
}

}  // namespace dah

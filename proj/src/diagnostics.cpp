#include "dah/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dah/errors.hpp"
#include "dah/log.hpp"
#include "dah/parallel.hpp"
#include "dah/pmf_sampler.hpp"

namespace dah {

namespace {

// Residual for a discrete observation with P(Y < y) = below, P(Y = y) = mass
// and P(Y > y) = above.
double discrete_residual(double below, double mass, double above, double v) {
  if (below <= 0.5) return normal_quantile(below + v * mass);
  // Work with the upper tail so probabilities near one keep their precision.
  return -normal_quantile(above + (1.0 - v) * mass);
}

}  // namespace

ResidualSet randomized_quantile_residuals(std::span<const RowLaw> laws, std::span<const double> y, Rng& rng,
                                          std::string component) {
  if (laws.size() != y.size())
    throw DataError(std::to_string(y.size()) + " observations but " + std::to_string(laws.size()) + " laws");
  ResidualSet out;
  out.component = std::move(component);
  out.residuals.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.index.push_back(i);
    if (const auto* d = std::get_if<DiscreteLaw>(&laws[i])) {
      const int yi = static_cast<int>(std::lround(y[i]));
      const double below = yi > 0 ? d->cdf(yi - 1) : 0.0;
      const double above = d->upper_tail(yi + 1);
      const double mass = d->pmf(yi);
      if (!(mass > 0.0))
        throw NumericalError("observation " + std::to_string(i) + " (y = " + std::to_string(yi) +
                             ") has zero probability under its law; residual undefined");
      out.residuals.push_back(discrete_residual(below, mass, above, uniform_open(rng)));
    } else {
      const auto& c = std::get<ContinuousLaw>(laws[i]);
      const double u = c.cdf(y[i]);
      if (!(u > 0.0 && u < 1.0))
        throw NumericalError("observation " + std::to_string(i) + " sits at cdf " + std::to_string(u) +
                             "; residual is infinite");
      out.residuals.push_back(normal_quantile(u));
    }
  }
  return out;
}

ResidualSet component_residuals(const ComponentSpec& spec, const ComponentData& data, Rng& rng) {
  const auto laws = row_laws(spec, data.frame, data.bound);
  return randomized_quantile_residuals(laws, std::span<const double>(data.y.data(), data.size()), rng, spec.name);
}

std::vector<WormPoint> worm_plot_data(const ResidualSet& residuals) {
  const std::size_t n = residuals.residuals.size();
  if (n < 10) throw DataError("worm plot needs at least 10 residuals, got " + std::to_string(n));
  std::vector<double> r = residuals.residuals;
  std::sort(r.begin(), r.end());
  std::vector<WormPoint> out(n);
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / dn;
    const double z = normal_quantile(p);
    const double dens = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double half = 1.96 * std::sqrt(p * (1.0 - p) / dn) / dens;
    out[i] = {z, r[i] - z, -half, half};
  }
  return out;
}

double worm_coverage(std::span<const WormPoint> worm) {
  if (worm.empty()) return 0.0;
  std::size_t in = 0;
  for (const auto& w : worm) in += w.deviation >= w.lo && w.deviation <= w.hi;
  return static_cast<double>(in) / static_cast<double>(worm.size());
}

double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  constexpr double pi2 = std::numbers::pi * std::numbers::pi;
  if (x < 1.18) {
    // Jacobi theta form converges fast for small x.
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double j = 2.0 * k - 1.0;
      s += std::exp(-j * j * pi2 / (8.0 * x * x));
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double t = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? t : -t);
    if (t < 1e-300) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_test_normal(std::span<const double> sample) {
  if (sample.empty()) throw DataError("KS test needs a nonempty sample");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf(x[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

// ---------------------------------------------------------------------------

double QQCheckResult::identity_coverage() const {
  if (p.empty()) return 0.0;
  std::size_t in = 0;
  for (std::size_t k = 0; k < p.size(); ++k) in += x_mean[k] >= y_lo[k] && x_mean[k] <= y_hi[k];
  return static_cast<double>(in) / static_cast<double>(p.size());
}

std::size_t QQCheckResult::longest_exit() const {
  std::size_t best = 0, run = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    run = (x_mean[k] < y_lo[k] || x_mean[k] > y_hi[k]) ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

namespace {

// Smallest value whose cumulative count reaches each threshold (ascending).
void quantiles_from_counts(const std::vector<int>& counts, std::span<const long> thresholds, std::span<int> out) {
  long cum = 0;
  std::size_t v = 0;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    while (v < counts.size() && cum + counts[v] < thresholds[k]) cum += counts[v++];
    out[k] = static_cast<int>(std::min(v, counts.size() - 1));
  }
}

// Quantile of an integer distribution after spreading each value v uniformly
// over [v - 1/2, v + 1/2]. Type-1 percentiles of replicate quantiles collapse to
// a single integer where the data are dense, which would put a bootstrap mean
// of 85.02 "outside" an envelope [85, 85].
double mid_quantile(const std::vector<double>& pmf, double q) {
  double cum = 0.0;
  for (std::size_t v = 0; v < pmf.size(); ++v) {
    if (pmf[v] > 0.0 && cum + pmf[v] >= q) return static_cast<double>(v) - 0.5 + (q - cum) / pmf[v];
    cum += pmf[v];
  }
  return static_cast<double>(pmf.size()) - 0.5;
}

struct QQAccumulator {
  std::vector<double> xsum, ysum;
  std::vector<std::vector<long>> hist;  // per grid point, counts of model quantile values
};

}  // namespace

QQCheckResult resampling_qq_check(std::span<const int> dah, const std::vector<std::vector<double>>& row_pmfs,
                                  const QQCheckOptions& options) {
  const std::size_t n = dah.size();
  if (n == 0) throw DataError("Q-Q check needs data");
  if (row_pmfs.size() != n)
    throw DataError(std::to_string(n) + " DAH values but " + std::to_string(row_pmfs.size()) + " model rows");
  if (options.B < 1 || options.grid < 1) throw ConfigError("Q-Q check needs B >= 1 and grid >= 1");
  QQCheckResult out;
  out.B = options.B;
  if (options.B < 100) {
    out.warnings.push_back("B = " + std::to_string(options.B) + " < 100; the envelope is unstable");
    log_warning(out.warnings.back());
  }

  std::size_t values = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (dah[i] < 0) throw DataError("negative DAH value at row " + std::to_string(i));
    values = std::max({values, row_pmfs[i].size(), static_cast<std::size_t>(dah[i]) + 1});
  }
  std::vector<PmfSampler> samplers;
  samplers.reserve(n);
  for (const auto& pmf : row_pmfs) samplers.emplace_back(pmf);

  const auto grid = static_cast<std::size_t>(options.grid);
  out.p.resize(grid);
  std::vector<long> thresholds(grid);
  for (std::size_t k = 0; k < grid; ++k) {
    out.p[k] = static_cast<double>(k + 1) / static_cast<double>(grid + 1);
    thresholds[k] = std::max(1L, static_cast<long>(std::ceil(static_cast<double>(n) * out.p[k] - 1e-9)));
  }

  const unsigned threads = options.threads == 0 ? default_threads() : options.threads;
  std::vector<QQAccumulator> acc(threads);
  for (auto& a : acc) {
    a.xsum.assign(grid, 0.0);
    a.ysum.assign(grid, 0.0);
    a.hist.assign(grid, std::vector<long>(values, 0));
  }
  parallel_for(static_cast<std::size_t>(options.B), threads, [&](std::size_t b, unsigned w) {
    Rng rng = make_stream(options.seed, Stream::Bootstrap, {b});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<int> cx(values, 0), cy(values, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = pick(rng);
      ++cx[static_cast<std::size_t>(dah[r])];
      ++cy[static_cast<std::size_t>(samplers[r](rng))];
    }
    std::vector<int> qx(grid), qy(grid);
    quantiles_from_counts(cx, thresholds, qx);
    quantiles_from_counts(cy, thresholds, qy);
    auto& a = acc[w];
    for (std::size_t k = 0; k < grid; ++k) {
      a.xsum[k] += qx[k];
      a.ysum[k] += qy[k];
      ++a.hist[k][static_cast<std::size_t>(qy[k])];
    }
  });

  const double bd = static_cast<double>(options.B);
  out.x_mean.assign(grid, 0.0);
  out.y_mean.assign(grid, 0.0);
  out.y_lo.resize(grid);
  out.y_hi.resize(grid);
  for (std::size_t k = 0; k < grid; ++k) {
    std::vector<double> h(values, 0.0);
    for (const auto& a : acc) {
      out.x_mean[k] += a.xsum[k];
      out.y_mean[k] += a.ysum[k];
      for (std::size_t v = 0; v < values; ++v) h[v] += static_cast<double>(a.hist[k][v]);
    }
    out.x_mean[k] /= bd;
    out.y_mean[k] /= bd;
    for (double& m : h) m /= bd;
    // The mean always lies in the convex hull of the replicate values, but an
    // extreme-tail mean can fall past a mid-quantile by a hair.
    out.y_lo[k] = std::min(mid_quantile(h, 0.025), out.y_mean[k]);
    out.y_hi[k] = std::max(mid_quantile(h, 0.975), out.y_mean[k]);
  }
  return out;
}

double integrated_discrepancy(const QQCheckResult& qq) {
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < qq.p.size(); ++k) {
    const double d0 = std::abs(qq.y_mean[k] - qq.x_mean[k]);
    const double d1 = std::abs(qq.y_mean[k + 1] - qq.x_mean[k + 1]);
    area += 0.5 * (d0 + d1) * (qq.x_mean[k + 1] - qq.x_mean[k]);
  }
  return area;
}

}  // namespace dah

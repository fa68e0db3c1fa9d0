#include <cmath>
#include <numeric>

#include "dah/competitors.hpp"
#include "dah/composite.hpp"
#include "dah/diagnostics.hpp"
#include "dah/errors.hpp"
#include "doctest.h"

using namespace dah;

namespace {

std::vector<RowLaw> same_law(const RowLaw& law, std::size_t n) { return std::vector<RowLaw>(n, law); }

std::vector<double> draws(const DiscreteLaw& law, std::size_t n, Rng& rng) {
  std::vector<double> y(n);
  for (auto& v : y) v = law.sample(rng);
  return y;
}

struct CanonicalSample {
  std::vector<int> dah;
  std::vector<std::vector<double>> pmfs;
};

CanonicalSample canonical_sample(std::size_t n, std::uint64_t seed) {
  Rng cov = make_stream(seed, Stream::Covariates);
  const Frame x = sample_covariates(n, CovariateProfile{}, cov);
  CompositeSimulator sim(canonical_model(), x);
  Rng rng = make_stream(seed, Stream::Simulation);
  CanonicalSample out;
  for (std::size_t i = 0; i < n; ++i) {
    out.dah.push_back(sim.simulate(i, rng).dah);
    out.pmfs.push_back(sim.dah_pmf(i));
  }
  return out;
}

}  // namespace

TEST_CASE("continuous residual at the median is zero") {
  const auto law = ContinuousLaw::log_normal(0.0, 1.0);
  Rng rng = make_stream(1, Stream::ResidualUniforms);
  const std::vector<RowLaw> laws{law};
  const std::vector<double> y{1.0};
  const auto r = randomized_quantile_residuals(laws, y, rng);
  CHECK(std::abs(r.residuals[0]) < 1e-12);
  const std::vector<double> bad{0.0};
  CHECK_THROWS_AS(randomized_quantile_residuals(laws, bad, rng), NumericalError);
}

TEST_CASE("discrete residual lies in its cdf interval") {
  const auto law = DiscreteLaw::poisson(3.0);
  Rng rng = make_stream(2, Stream::ResidualUniforms);
  for (int y = 0; y < 25; ++y) {
    const std::vector<RowLaw> laws{law};
    const std::vector<double> yy{double(y)};
    const double u = normal_cdf(randomized_quantile_residuals(laws, yy, rng).residuals[0]);
    CHECK(u >= (y > 0 ? law.cdf(y - 1) : 0.0) - 1e-12);
    CHECK(u <= law.cdf(y) + 1e-12);
  }
  // Far in the upper tail the residual stays finite and large.
  const std::vector<RowLaw> laws{law};
  const std::vector<double> far{30.0};
  const double r = randomized_quantile_residuals(laws, far, rng).residuals[0];
  CHECK(std::isfinite(r));
  CHECK(r > 6.0);
  const auto bern = DiscreteLaw::point_mass(0);
  const std::vector<RowLaw> pm{bern};
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(randomized_quantile_residuals(pm, one, rng), NumericalError);
}

TEST_CASE("kolmogorov distribution") {
  // Reference values of the limiting distribution.
  CHECK(kolmogorov_survival(1.0) == doctest::Approx(0.2699996716735).epsilon(1e-9));
  CHECK(kolmogorov_survival(0.5) == doctest::Approx(0.9639452436648).epsilon(1e-9));
  CHECK(kolmogorov_survival(1.3580986393225505) == doctest::Approx(0.05).epsilon(1e-8));
  // Both series agree where they switch.
  CHECK(kolmogorov_survival(1.18 - 1e-12) == doctest::Approx(kolmogorov_survival(1.18)).epsilon(1e-10));
  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(10.0) < 1e-80);
}

TEST_CASE("ks statistic") {
  const std::vector<double> zero{0.0};
  CHECK(ks_test_normal(zero).statistic == doctest::Approx(0.5));
  std::vector<double> q;
  for (int i = 1; i <= 99; ++i) q.push_back(normal_quantile(i / 100.0));
  const auto r = ks_test_normal(q);
  CHECK(r.statistic == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(r.p_value > 0.99);
  CHECK_THROWS_AS(ks_test_normal(std::vector<double>{}), DataError);
}

TEST_CASE("residuals are calibrated under the true law") {
  int pass_true = 0, fail_pois = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_stream(seed, Stream::Simulation);
    Rng ur = make_stream(seed, Stream::ResidualUniforms);
    const auto zic = DiscreteLaw::poisson_inverse_gaussian(2.55, 4.37).right_censored(86).zero_inflated(0.3);
    const auto y = draws(zic, 2000, rng);
    pass_true += ks_test_normal(randomized_quantile_residuals(same_law(zic, y.size()), y, ur).residuals).p_value > 0.01;

    const auto pig = DiscreteLaw::poisson_inverse_gaussian(2.0, 2.0);
    const auto yp = draws(pig, 2000, rng);
    const double mean = std::accumulate(yp.begin(), yp.end(), 0.0) / yp.size();
    const auto pois = DiscreteLaw::poisson(mean);
    fail_pois += ks_test_normal(randomized_quantile_residuals(same_law(pois, yp.size()), yp, ur).residuals).p_value < 0.001;
  }
  CHECK(pass_true >= 18);
  CHECK(fail_pois == 20);
}

TEST_CASE("worm plot") {
  ResidualSet exact;
  for (int i = 0; i < 200; ++i) exact.residuals.push_back(normal_quantile((i + 0.5) / 200.0));
  for (const auto& w : worm_plot_data(exact)) CHECK(std::abs(w.deviation) < 1e-12);
  CHECK(worm_coverage(worm_plot_data(exact)) == 1.0);

  ResidualSet shifted = exact;
  for (double& r : shifted.residuals) r += 1.0;
  const auto ws = worm_plot_data(shifted);
  std::size_t above = 0;
  for (const auto& w : ws) above += w.deviation > w.hi;
  CHECK(above > 190);

  double cov = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = make_stream(seed, Stream::ResidualUniforms);
    std::normal_distribution<double> z;
    ResidualSet r;
    for (int i = 0; i < 200; ++i) r.residuals.push_back(z(rng));
    cov += worm_coverage(worm_plot_data(r));
  }
  CHECK(cov / 100 >= 0.95);

  ResidualSet few;
  few.residuals.assign(9, 0.0);
  CHECK_THROWS_AS(worm_plot_data(few), DataError);
}

TEST_CASE("integrated discrepancy") {
  QQCheckResult qq;
  for (int k = 0; k <= 86; ++k) {
    qq.p.push_back(k / 87.0);
    qq.x_mean.push_back(k);
    qq.y_mean.push_back(k);
  }
  CHECK(integrated_discrepancy(qq) == 0.0);
  for (double& y : qq.y_mean) y += 1.0;
  CHECK(integrated_discrepancy(qq) == doctest::Approx(86.0));
}

TEST_CASE("resampling qq check") {
  const auto s = canonical_sample(200, 3);

  // The data's own empirical resampler reproduces the data exactly.
  std::vector<std::vector<double>> self(s.dah.size());
  for (std::size_t i = 0; i < self.size(); ++i) {
    self[i].assign(91, 0.0);
    self[i][static_cast<std::size_t>(s.dah[i])] = 1.0;
  }
  const auto qs = resampling_qq_check(s.dah, self, {.B = 200, .grid = 250, .seed = 1});
  CHECK(integrated_discrepancy(qs) == 0.0);
  CHECK(qs.identity_coverage() == 1.0);

  const auto qq = resampling_qq_check(s.dah, s.pmfs, {.B = 500, .grid = 250, .seed = 2});
  REQUIRE(qq.p.size() == 250);
  CHECK(qq.p.front() == doctest::Approx(1.0 / 251));
  for (std::size_t k = 0; k < 250; ++k) {
    CHECK(qq.y_lo[k] <= qq.y_mean[k]);
    CHECK(qq.y_mean[k] <= qq.y_hi[k]);
    if (k > 0) {
      CHECK(qq.x_mean[k] >= qq.x_mean[k - 1]);
      CHECK(qq.y_mean[k] >= qq.y_mean[k - 1]);
    }
  }
  CHECK(qq.identity_coverage() >= 0.95);
  // Mass piles up at high DAH, so upper quantiles are tight.
  CHECK(qq.y_hi[225] - qq.y_lo[225] < qq.y_hi[50] - qq.y_lo[50]);

  // Same result regardless of the number of workers.
  const auto q1 = resampling_qq_check(s.dah, s.pmfs, {.B = 300, .grid = 50, .seed = 4, .threads = 1});
  const auto q3 = resampling_qq_check(s.dah, s.pmfs, {.B = 300, .grid = 50, .seed = 4, .threads = 3});
  CHECK(q1.x_mean == q3.x_mean);
  CHECK(q1.y_mean == q3.y_mean);
  CHECK(q1.y_lo == q3.y_lo);
  CHECK(q1.y_hi == q3.y_hi);

  const auto small = resampling_qq_check(s.dah, s.pmfs, {.B = 50, .grid = 10, .seed = 5});
  CHECK(small.warnings.size() == 1);
  CHECK_THROWS_AS(resampling_qq_check(s.dah, {}, {}), DataError);
}

TEST_CASE("a flipped Poisson misfits D&C data") {
  const auto s = canonical_sample(200, 7);
  const auto fit = fit_competitor(make_competitor(CompetitorKind::ZeroInflatedFlippedPoisson, 90, 0), s.dah, Frame(200));
  CompetitorSimulator sim(fit.spec, Frame(1));
  const std::vector<std::vector<double>> pmfs(200, sim.dah_pmf(0));
  const auto qq = resampling_qq_check(s.dah, pmfs, {.B = 500, .grid = 250, .seed = 8});
  CHECK(qq.longest_exit() >= 10);
  const auto own = resampling_qq_check(s.dah, s.pmfs, {.B = 500, .grid = 250, .seed = 8});
  CHECK(integrated_discrepancy(own) < integrated_discrepancy(qq));
}

#include <cmath>
#include <numeric>

#include "dah/errors.hpp"
#include "dah/pmf_sampler.hpp"
#include "dah/trial_design.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dah;

namespace {

// Permutation p-value of |U - mean| for tied data.
double permutation_p(const std::vector<int>& x, const std::vector<int>& y, int perms, Rng& rng) {
  std::vector<int> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  const double obs = std::abs(mww_test(x, y).u - 0.5 * x.size() * y.size());
  int extreme = 0;
  for (int b = 0; b < perms; ++b) {
    std::shuffle(pooled.begin(), pooled.end(), rng);
    const std::span<const int> a(pooled.data(), x.size()), c(pooled.data() + x.size(), y.size());
    extreme += std::abs(mww_test(a, c).u - 0.5 * x.size() * y.size()) >= obs - 1e-9;
  }
  return double(extreme) / perms;
}

std::vector<double> shifted_pmf(double shift) {
  // Discretised normal on 0..40 centred at 20 + shift.
  std::vector<double> p(41);
  for (int k = 0; k <= 40; ++k) p[static_cast<std::size_t>(k)] = std::exp(-0.5 * std::pow((k - 20 - shift) / 4.0, 2));
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

TEST_CASE("exact MWW examples") {
  const std::vector<int> x{1, 2}, y{3, 4};
  const auto r = mww_test(x, y);
  CHECK(r.exact);
  CHECK(r.u == 0.0);
  CHECK(r.p_value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(mww_test(y, x).u == 4.0);
  CHECK(mww_test(y, x).p_value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(mww_test(std::vector<int>{}, y), DataError);
}

TEST_CASE("exact MWW matches enumeration for every small untied layout") {
  int checked = 0;
  for (int n = 2; n <= 10; ++n)
    for (int m = 1; m < n; ++m)
      for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
        if (__builtin_popcount(mask) != m) continue;
        std::vector<int> x, y;
        std::vector<double> xd, yd;
        for (int i = 0; i < n; ++i) {
          if (mask >> i & 1U) {
            x.push_back(i);
            xd.push_back(i);
          } else {
            y.push_back(i);
            yd.push_back(i);
          }
        }
        const auto r = mww_test(x, y);
        REQUIRE(r.exact);
        REQUIRE(std::abs(r.p_value - oracle::mww_exact_enumeration(xd, yd)) < 1e-12);
        ++checked;
      }
  CHECK(checked == 2026);
}

TEST_CASE("MWW with ties") {
  std::vector<int> x(300), y(300);
  for (int i = 0; i < 300; ++i) x[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] = i % 7;
  auto r = mww_test(x, y);
  CHECK_FALSE(r.exact);
  CHECK(r.u == 300.0 * 300.0 / 2.0);
  CHECK(r.p_value == 1.0);

  const std::vector<int> z(5, 0), w(4, 0);
  r = mww_test(z, w);
  CHECK(r.u == 10.0);
  CHECK(r.p_value == 1.0);

  // Counts and raw samples agree, and the test is symmetric in the arms.
  Rng rng = make_stream(1, Stream::Simulation);
  const PmfSampler s(shifted_pmf(0.0)), t(shifted_pmf(1.0));
  std::vector<int> a(120), b(90);
  for (int& v : a) v = s(rng);
  for (int& v : b) v = t(rng);
  std::vector<long> ca(41, 0), cb(41, 0);
  for (int v : a) ++ca[static_cast<std::size_t>(v)];
  for (int v : b) ++cb[static_cast<std::size_t>(v)];
  const auto raw = mww_test(a, b), counts = mww_test_counts(ca, cb);
  CHECK(raw.u == counts.u);
  CHECK(raw.p_value == counts.p_value);
  CHECK(mww_test(b, a).p_value == doctest::Approx(raw.p_value).epsilon(1e-12));
  CHECK(mww_test(b, a).u == doctest::Approx(120.0 * 90.0 - raw.u));

  // Tie-corrected normal approximation against a permutation oracle.
  Rng perm = make_stream(2, Stream::Bootstrap);
  const double p_perm = permutation_p(a, b, 100000, perm);
  CHECK(std::abs(raw.p_value - p_perm) < 0.01);
}

TEST_CASE("median from counts") {
  const std::vector<long> odd{0, 1, 1, 1};
  CHECK(median_from_counts(odd) == 2.0);
  const std::vector<long> even{0, 1, 1};
  CHECK(median_from_counts(even) == 1.5);
  const std::vector<long> heavy{0, 0, 5, 1};
  CHECK(median_from_counts(heavy) == 2.0);
  CHECK_THROWS_AS(median_from_counts(std::vector<long>{0, 0}), DataError);
}

TEST_CASE("calibration on a shift family") {
  EffectModel m;
  m.name = "shift";
  m.treated = [](double c) { return shifted_pmf(4.0 * c); };
  m.control = m.treated(0.0);
  CHECK(median_difference(m, 0.0, 100000, 3).difference == 0.0);
  CalibrationOptions o;
  o.sim_n = 100000;
  o.seed = 3;
  const auto r = calibrate_effect(m, o);
  CHECK(r.direction == 1);
  // A shift of 4c moves the median by 2 days for c in about [0.375, 0.625].
  CHECK(r.lo == doctest::Approx(0.375).epsilon(0.05));
  CHECK(r.hi == doctest::Approx(0.625).epsilon(0.05));
  CHECK(median_difference(m, r.midpoint, 1000000, 99).difference == 2.0);
  for (const auto& p : r.ladder) CHECK(std::fmod(2.0 * p.difference, 1.0) == 0.0);

  o.target = 50.0;
  CHECK_THROWS_AS(calibrate_effect(m, o), ConfigError);
}

TEST_CASE("calibration falls back to the attainable sign") {
  // Control median sits one day below the top of the support.
  const std::vector<double> ctrl{0.1, 0.1, 0.1, 0.15, 0.45, 0.1};
  EffectModel m;
  m.name = "capped";
  m.control = ctrl;
  m.treated = [ctrl](double c) {
    // Tilts mass toward low values for c > 0.
    std::vector<double> p(ctrl.size());
    double s = 0;
    for (std::size_t k = 0; k < p.size(); ++k) s += p[k] = ctrl[k] * std::exp(-c * static_cast<double>(k));
    for (double& v : p) v /= s;
    return p;
  };
  CalibrationOptions o;
  o.sim_n = 50000;
  o.target = 2.0;
  CHECK_THROWS_AS(calibrate_effect(m, o), ConfigError);
  const auto r = calibrate_effect_magnitude(m, o);
  CHECK(r.target == -2.0);
  CHECK(r.notes.size() == 1);
  CHECK(median_difference(m, r.midpoint, 200000, 5).difference == -2.0);
}

TEST_CASE("D&C reference scenario calibrates to two days") {
  const auto model = composite_effect_model(reference_reduction(canonical_model()), reference_covariates(1));
  CHECK(std::accumulate(model.control.begin(), model.control.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-10));
  CalibrationOptions o;
  o.sim_n = 50000;
  o.seed = 6;
  const auto r = calibrate_effect_magnitude(model, o);
  CHECK(std::abs(r.target) == 2.0);
  CHECK(r.lo < r.hi);
  CHECK(median_difference(model, r.midpoint, 200000, 7).difference == r.target);
  CHECK(median_difference(model, 0.0, 200000, 7).difference == 0.0);
}

TEST_CASE("power curves") {
  const auto ctrl = shifted_pmf(0.0), trt = shifted_pmf(2.0);
  PowerOptions o;
  o.n_grid = {40, 100, 200, 400};
  o.reps = 2000;
  o.seed = 8;
  const auto alt = power_curve(ctrl, trt, o);
  const auto null = power_curve(ctrl, ctrl, o, "null");
  for (std::size_t i = 0; i < alt.points.size(); ++i) {
    const auto& p = null.points[i];
    CHECK(p.rate >= 0.0);
    CHECK(p.mc_se == doctest::Approx(std::sqrt(p.rate * (1 - p.rate) / 2000)));
    CHECK(std::abs(p.rate - 0.05) < 4 * std::sqrt(0.05 * 0.95 / 2000));
    if (i > 0) CHECK(alt.points[i].rate >= alt.points[i - 1].rate - 3 * alt.points[i].mc_se);
  }
  CHECK(alt.points.back().rate > 0.95);

  o.threads = 1;
  const auto a1 = power_curve(ctrl, trt, o);
  o.threads = 3;
  const auto a3 = power_curve(ctrl, trt, o);
  for (std::size_t i = 0; i < a1.points.size(); ++i) CHECK(a1.points[i].rejections == a3.points[i].rejections);

  // A zero coefficient reproduces the null curve up to Monte Carlo noise.
  EffectModel m;
  m.name = "shift";
  m.treated = [](double c) { return shifted_pmf(c); };
  m.control = m.treated(0.0);
  const auto [n0, a0] = power_curves(m, 0.0, o);
  for (std::size_t i = 0; i < n0.points.size(); ++i)
    CHECK(std::abs(n0.points[i].rate - a0.points[i].rate) < 4 * std::sqrt(2 * 0.05 * 0.95 / 2000));
}

TEST_CASE("minimum sample size") {
  DesignStudyResult r;
  for (auto [n, p] : std::vector<std::pair<int, double>>{{150, 0.8}, {200, 0.88}, {250, 0.91}, {300, 0.95}})
    r.points.push_back({n, 0, 10000, p, std::sqrt(p * (1 - p) / 10000)});
  const auto s = min_sample_size(r, 0.9);
  CHECK(s.n == 250);
  CHECK(s.below_n == 200);
  CHECK(s.below_power == 0.88);
  CHECK_THROWS_AS(min_sample_size(r, 0.99), NumericalError);
  for (auto& p : r.points) p.rate = 1.0;
  CHECK(min_sample_size(r, 0.9).n == 150);
}

TEST_CASE("default grid") {
  const auto g = default_n_grid();
  CHECK(g.front() == 100);
  CHECK(g.back() == 2000);
  CHECK(g.size() == 24);
  CHECK(std::find(g.begin(), g.end(), 250) != g.end());
}

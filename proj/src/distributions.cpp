#include "dah/distributions.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>

#include "dah/errors.hpp"

namespace dah {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Hard limit on table length when walking an unbounded support.
constexpr int kMaxWalk = 10'000'000;
constexpr int kTailWindow = 200'000;
constexpr double kTailMass = 1e-13;

double log_sum_exp_range(const std::vector<double>& v, int from, int to) {
  double m = kNegInf;
  for (int i = from; i <= to; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int i = from; i <= to; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void require_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " must lie in [0,1], got " + fmt(p));
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive and finite, got " + fmt(v));
}

}  // namespace

bool LogLikelihood::finite() const noexcept { return out_of_support.empty() && std::isfinite(value); }

namespace detail {

class LawNode {
 public:
  virtual ~LawNode() = default;
  virtual Support support() const = 0;
  // out has size hi+1 on return; out[y] = log P(Y=y).
  virtual void fill_log_pmf(int hi, std::vector<double>& out) const = 0;
  virtual double mean() const = 0;
  virtual double second_moment() const = 0;
  virtual std::string describe() const = 0;

  virtual double log_pmf(int y) const {
    if (!support().contains(y)) return kNegInf;
    std::vector<double> t;
    fill_log_pmf(y, t);
    return t[y];
  }

  // Starts at mean + 50 sd and doubles while the geometric bound on the
  // remaining tail mass exceeds kTailMass. Cached; nodes are immutable so a
  // racing recomputation writes the same value.
  int search_cap() const {
    const Support s = support();
    if (s.bounded()) return s.hi;
    const int cached = cap_.load(std::memory_order_relaxed);
    if (cached >= 0) return cached;
    const int limit = s.lo + kMaxWalk;
    const double m = mean();
    const double sd = std::sqrt(std::max(0.0, second_moment() - m * m));
    const double start = std::ceil(m + 50.0 * sd);
    int cap = !std::isfinite(start) || start > limit ? limit : std::max(s.lo + 1, static_cast<int>(start));
    std::vector<double> t;
    while (cap < limit) {
      fill_log_pmf(cap, t);
      const double last = std::exp(t[cap]);
      const double r = std::exp(t[cap] - t[cap - 1]);
      if (last == 0.0 || (r < 1.0 && last * r / (1.0 - r) < kTailMass)) break;
      cap = cap > limit / 2 ? limit : 2 * cap;
    }
    cap_.store(cap, std::memory_order_relaxed);
    return cap;
  }

 private:
  mutable std::atomic<int> cap_{-1};

 public:
  // P(Y >= c)
  virtual double upper_tail(int c) const {
    const Support s = support();
    if (c <= s.lo) return 1.0;
    if (c > s.hi) return 0.0;
    std::vector<double> t;
    if (s.bounded() && s.hi - s.lo <= kMaxWalk) {
      fill_log_pmf(s.hi, t);
      return std::min(1.0, std::exp(log_sum_exp_range(t, c, s.hi)));
    }
    fill_log_pmf(c - 1, t);
    double below = 0.0;
    for (int y = std::max(0, s.lo); y < c; ++y) below += std::exp(t[y]);
    // The complement loses about 1e-16 / tail in relative terms; fine above 1e-4.
    if (1.0 - below >= 1e-4) return std::max(0.0, 1.0 - below);
    // Sum the tail directly; the complement would cancel. Very heavy tails fall
    // back to the complement rather than walking millions of terms.
    const int limit = s.lo + kMaxWalk - c < kTailWindow ? s.lo + kMaxWalk : c + kTailWindow;
    const double m = mean();
    int hi = std::max(c + 32, 2 * c);
    double tail = 0.0;
    int y = c;
    while (true) {
      hi = std::min(hi, limit);
      fill_log_pmf(hi, t);
      for (; y <= hi; ++y) {
        const double term = std::exp(t[y]);
        tail += term;
        if (y > m && term < 1e-17 * tail) return std::min(tail, 1.0);
      }
      if (hi == limit) return std::min(1.0, std::max(tail, 1.0 - below));
      hi = hi > limit / 2 ? limit : 2 * hi;
    }
  }
};

using NodePtr = std::shared_ptr<const LawNode>;

class BernoulliNode final : public LawNode {
 public:
  explicit BernoulliNode(double p) : p_(p) { require_probability(p, "Bernoulli probability"); }
  Support support() const override { return {0, 1}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    out.assign(hi + 1, kNegInf);
    out[0] = std::log1p(-p_);
    if (hi >= 1) out[1] = std::log(p_);
  }
  double mean() const override { return p_; }
  double second_moment() const override { return p_; }
  std::string describe() const override { return "Bernoulli(" + fmt(p_) + ")"; }

 private:
  double p_;
};

class PoissonNode final : public LawNode {
 public:
  explicit PoissonNode(double mu) : mu_(mu) { require_positive(mu, "Poisson mean"); }
  Support support() const override { return {0, kUnbounded}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    out.resize(hi + 1);
    const double lm = std::log(mu_);
    for (int y = 0; y <= hi; ++y) out[y] = y * lm - mu_ - std::lgamma(y + 1.0);
  }
  double log_pmf(int y) const override {
    if (y < 0) return kNegInf;
    return y * std::log(mu_) - mu_ - std::lgamma(y + 1.0);
  }
  double mean() const override { return mu_; }
  double second_moment() const override { return mu_ + mu_ * mu_; }
  std::string describe() const override { return "Poisson(mu=" + fmt(mu_) + ")"; }

 private:
  double mu_;
};

class NegativeBinomialNode final : public LawNode {
 public:
  NegativeBinomialNode(double mu, double sigma) : mu_(mu), sigma_(sigma) {
    require_positive(mu, "negative binomial mean");
    require_positive(sigma, "negative binomial dispersion");
  }
  Support support() const override { return {0, kUnbounded}; }
  // p(0) = (1 + sigma mu)^(-1/sigma);  p(y)/p(y-1) = mu (1 + (y-1) sigma) / (y (1 + sigma mu))
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    out.resize(hi + 1);
    const double l1 = std::log1p(sigma_ * mu_);
    out[0] = -l1 / sigma_;
    const double lm = std::log(mu_) - l1;
    for (int y = 1; y <= hi; ++y) out[y] = out[y - 1] + lm + std::log1p((y - 1) * sigma_) - std::log(static_cast<double>(y));
  }
  double mean() const override { return mu_; }
  double second_moment() const override { return mu_ + sigma_ * mu_ * mu_ + mu_ * mu_; }
  std::string describe() const override { return "NBI(mu=" + fmt(mu_) + ", sigma=" + fmt(sigma_) + ")"; }

 private:
  double mu_, sigma_;
};

// Poisson-inverse Gaussian, mean mu and dispersion sigma (Var = mu + sigma mu^2).
//
// With s = sqrt(1 + 2 sigma mu) the pmf satisfies
//   p(0) = exp((1 - s) / sigma)
//   p(1) = mu / s * p(0)
//   p(y) = (2 sigma mu / s^2) (1 - 3/(2y)) p(y-1) + mu^2 / (s^2 y (y-1)) p(y-2),  y >= 2.
// Both terms are positive, so the recursion is run on the ratios
// r(y) = p(y)/p(y-1) and accumulated in log space; nothing overflows for large y.
class PigNode final : public LawNode {
 public:
  PigNode(double mu, double sigma) : mu_(mu), sigma_(sigma) {
    require_positive(mu, "PIG mean");
    require_positive(sigma, "PIG dispersion");
  }
  Support support() const override { return {0, kUnbounded}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    out.resize(hi + 1);
    const double s2 = 1.0 + 2.0 * sigma_ * mu_;
    const double s = std::sqrt(s2);
    // (1 - s)/sigma written without cancellation
    out[0] = -2.0 * mu_ / (1.0 + s);
    if (hi == 0) return;
    double r = mu_ / s;
    out[1] = out[0] + std::log(r);
    const double a = 2.0 * sigma_ * mu_ / s2;
    const double b = mu_ * mu_ / s2;
    for (int y = 2; y <= hi; ++y) {
      const double yd = static_cast<double>(y);
      r = a * (1.0 - 1.5 / yd) + b / (yd * (yd - 1.0) * r);
      out[y] = out[y - 1] + std::log(r);
    }
  }
  double mean() const override { return mu_; }
  double second_moment() const override { return mu_ + sigma_ * mu_ * mu_ + mu_ * mu_; }
  std::string describe() const override { return "PIG(mu=" + fmt(mu_) + ", sigma=" + fmt(sigma_) + ")"; }

 private:
  double mu_, sigma_;
};

// Beta-binomial with mean n*mu. Written as products over the rising factorials
//   p(y) = C(n,y) prod_{j<y}(mu + j s) prod_{j<n-y}(1 - mu + j s) / prod_{j<n}(1 + j s)
// which stays exact as s -> 0 (the binomial), where the Gamma-function form loses
// all precision because the beta shapes blow up.
class BetaBinomialNode final : public LawNode {
 public:
  BetaBinomialNode(int n, double mu, double sigma) : n_(n), mu_(mu), sigma_(sigma) {
    if (n < 0) throw DomainError("beta-binomial denominator must be nonnegative, got " + std::to_string(n));
    if (!(mu > 0.0 && mu < 1.0)) throw DomainError("beta-binomial mean must lie in (0,1), got " + fmt(mu));
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("beta-binomial dispersion must be >= 0, got " + fmt(sigma));
  }
  Support support() const override { return {0, n_}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    out.assign(hi + 1, kNegInf);
    double lp = 0.0;
    for (int j = 0; j < n_; ++j) lp += std::log1p(-mu_ + j * sigma_) - std::log1p(j * sigma_);
    const int top = std::min(hi, n_);
    out[0] = lp;
    for (int y = 0; y < top; ++y) {
      lp += std::log(static_cast<double>(n_ - y)) - std::log(y + 1.0) + std::log(mu_ + y * sigma_) -
            std::log1p(-mu_ + (n_ - y - 1) * sigma_);
      out[y + 1] = lp;
    }
  }
  double mean() const override { return n_ * mu_; }
  double second_moment() const override {
    const double var = n_ * mu_ * (1.0 - mu_) * (1.0 + (n_ - 1) * sigma_ / (1.0 + sigma_));
    return var + mean() * mean();
  }
  std::string describe() const override {
    return "BB(n=" + std::to_string(n_) + ", mu=" + fmt(mu_) + ", sigma=" + fmt(sigma_) + ")";
  }

  int n() const { return n_; }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

 private:
  int n_;
  double mu_, sigma_;
};

class CategoricalNode final : public LawNode {
 public:
  CategoricalNode(std::vector<double> probs, int offset) : probs_(std::move(probs)), offset_(offset) {
    if (probs_.empty()) throw DomainError("categorical law needs at least one category");
    if (offset < 0) throw DomainError("categorical support must be nonnegative");
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw DomainError("categorical probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-8) throw DomainError("categorical probabilities sum to " + fmt(total) + ", not 1");
    for (double& p : probs_) p /= total;
  }
  Support support() const override { return {offset_, offset_ + static_cast<int>(probs_.size()) - 1}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    out.assign(hi + 1, kNegInf);
    for (int k = 0; k < static_cast<int>(probs_.size()) && offset_ + k <= hi; ++k) out[offset_ + k] = std::log(probs_[k]);
  }
  double mean() const override {
    double m = 0.0;
    for (std::size_t k = 0; k < probs_.size(); ++k) m += probs_[k] * (offset_ + static_cast<double>(k));
    return m;
  }
  double second_moment() const override {
    double m = 0.0;
    for (std::size_t k = 0; k < probs_.size(); ++k) m += probs_[k] * std::pow(offset_ + static_cast<double>(k), 2);
    return m;
  }
  std::string describe() const override {
    std::string s = "Categorical(offset=" + std::to_string(offset_) + "; ";
    for (std::size_t k = 0; k < probs_.size(); ++k) s += (k ? "," : "") + fmt(probs_[k]);
    return s + ")";
  }

 private:
  std::vector<double> probs_;
  int offset_;
};

double bounded_moment(const LawNode& node, int power) {
  const Support s = node.support();
  std::vector<double> t;
  node.fill_log_pmf(s.hi, t);
  double m = 0.0;
  for (int y = std::max(0, s.lo); y <= s.hi; ++y) m += std::exp(t[y]) * std::pow(static_cast<double>(y), power);
  return m;
}

class RightCensoredNode final : public LawNode {
 public:
  RightCensoredNode(NodePtr base, int c) : base_(std::move(base)), c_(c) {}
  Support support() const override { return {base_->support().lo, c_}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    const int below = std::min(hi, c_ - 1);
    if (below >= 0) {
      base_->fill_log_pmf(below, out);
    } else {
      out.clear();
    }
    out.resize(hi + 1, kNegInf);
    if (hi >= c_) out[c_] = std::log(base_->upper_tail(c_));
  }
  double upper_tail(int c) const override {
    if (c > c_) return 0.0;
    return base_->upper_tail(c);
  }
  double mean() const override { return bounded_moment(*this, 1); }
  double second_moment() const override { return bounded_moment(*this, 2); }
  std::string describe() const override { return "RightCensored(" + base_->describe() + ", c=" + std::to_string(c_) + ")"; }

 private:
  NodePtr base_;
  int c_;
};

// log(1 - p0) from log p0 without cancellation.
double log_positive_mass(double log_p0) {
  if (log_p0 == kNegInf) return 0.0;
  return std::log(-std::expm1(log_p0));
}

class ZeroTruncatedNode final : public LawNode {
 public:
  explicit ZeroTruncatedNode(NodePtr base) : base_(std::move(base)) {
    log_q_ = log_positive_mass(base_->log_pmf(0));
    if (log_q_ == kNegInf) throw DomainError("zero truncation of a law with no positive mass: " + base_->describe());
  }
  Support support() const override { return {std::max(1, base_->support().lo), base_->support().hi}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    base_->fill_log_pmf(hi, out);
    out[0] = kNegInf;
    for (int y = 1; y <= hi; ++y) out[y] -= log_q_;
  }
  double upper_tail(int c) const override {
    if (c <= 1) return 1.0;
    return std::min(1.0, base_->upper_tail(c) / std::exp(log_q_));
  }
  double mean() const override { return base_->mean() / std::exp(log_q_); }
  double second_moment() const override { return base_->second_moment() / std::exp(log_q_); }
  std::string describe() const override { return "ZeroTruncated(" + base_->describe() + ")"; }

 private:
  NodePtr base_;
  double log_q_;
};

class ZeroAdjustedNode final : public LawNode {
 public:
  ZeroAdjustedNode(NodePtr base, double pi0) : base_(std::move(base)), pi0_(pi0) {
    require_probability(pi0, "zero-adjustment probability");
    log_q_ = log_positive_mass(base_->log_pmf(0));
    if (log_q_ == kNegInf && pi0 < 1.0)
      throw DomainError("zero adjustment of a law with no positive mass: " + base_->describe());
  }
  Support support() const override { return {0, base_->support().hi}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    base_->fill_log_pmf(hi, out);
    out[0] = std::log(pi0_);
    const double lw = std::log1p(-pi0_) - log_q_;
    for (int y = 1; y <= hi; ++y) out[y] += lw;
  }
  double upper_tail(int c) const override {
    if (c <= 0) return 1.0;
    if (pi0_ == 1.0) return 0.0;
    return std::min(1.0, (1.0 - pi0_) * base_->upper_tail(std::max(c, 1)) / std::exp(log_q_));
  }
  double mean() const override { return pi0_ == 1.0 ? 0.0 : (1.0 - pi0_) * base_->mean() / std::exp(log_q_); }
  double second_moment() const override {
    return pi0_ == 1.0 ? 0.0 : (1.0 - pi0_) * base_->second_moment() / std::exp(log_q_);
  }
  std::string describe() const override { return "ZeroAdjusted(" + base_->describe() + ", pi0=" + fmt(pi0_) + ")"; }

 private:
  NodePtr base_;
  double pi0_;
  double log_q_;
};

class ZeroInflatedNode final : public LawNode {
 public:
  ZeroInflatedNode(NodePtr base, double pi0) : base_(std::move(base)), pi0_(pi0) {
    require_probability(pi0, "zero-inflation probability");
  }
  Support support() const override { return {0, base_->support().hi}; }
  void fill_log_pmf(int hi, std::vector<double>& out) const override {
    base_->fill_log_pmf(hi, out);
    const double p0 = std::exp(out[0]);
    out[0] = std::log(pi0_ + (1.0 - pi0_) * p0);
    const double lw = std::log1p(-pi0_);
    for (int y = 1; y <= hi; ++y) out[y] += lw;
  }
  double upper_tail(int c) const override {
    if (c <= 0) return 1.0;
    return (1.0 - pi0_) * base_->upper_tail(c);
  }
  double mean() const override { return (1.0 - pi0_) * base_->mean(); }
  double second_moment() const override { return (1.0 - pi0_) * base_->second_moment(); }
  std::string describe() const override { return "ZeroInflated(" + base_->describe() + ", pi0=" + fmt(pi0_) + ")"; }

 private:
  NodePtr base_;
  double pi0_;
};

}  // namespace detail

// ---------------------------------------------------------------------------

DiscreteLaw DiscreteLaw::bernoulli(double p) { return DiscreteLaw(std::make_shared<detail::BernoulliNode>(p)); }
DiscreteLaw DiscreteLaw::poisson(double mu) { return DiscreteLaw(std::make_shared<detail::PoissonNode>(mu)); }
DiscreteLaw DiscreteLaw::negative_binomial(double mu, double sigma) {
  return DiscreteLaw(std::make_shared<detail::NegativeBinomialNode>(mu, sigma));
}
DiscreteLaw DiscreteLaw::poisson_inverse_gaussian(double mu, double sigma) {
  return DiscreteLaw(std::make_shared<detail::PigNode>(mu, sigma));
}
DiscreteLaw DiscreteLaw::beta_binomial(int n, double mu, double sigma) {
  return DiscreteLaw(std::make_shared<detail::BetaBinomialNode>(n, mu, sigma));
}
DiscreteLaw DiscreteLaw::categorical(std::vector<double> probs, int offset) {
  return DiscreteLaw(std::make_shared<detail::CategoricalNode>(std::move(probs), offset));
}
DiscreteLaw DiscreteLaw::point_mass(int y) { return categorical({1.0}, y); }

DiscreteLaw DiscreteLaw::right_censored(int c) const {
  const Support s = support();
  if (c < s.lo) throw DomainError("censoring point " + std::to_string(c) + " lies below the support of " + describe());
  if (c >= s.hi) return *this;
  return DiscreteLaw(std::make_shared<detail::RightCensoredNode>(node_, c));
}

DiscreteLaw DiscreteLaw::zero_truncated() const {
  if (support().lo > 0) return *this;
  return DiscreteLaw(std::make_shared<detail::ZeroTruncatedNode>(node_));
}

DiscreteLaw DiscreteLaw::zero_adjusted(double pi0) const {
  return DiscreteLaw(std::make_shared<detail::ZeroAdjustedNode>(node_, pi0));
}

DiscreteLaw DiscreteLaw::zero_inflated(double pi0) const {
  return DiscreteLaw(std::make_shared<detail::ZeroInflatedNode>(node_, pi0));
}

Support DiscreteLaw::support() const { return node_->support(); }
double DiscreteLaw::log_pmf(int y) const { return node_->log_pmf(y); }
double DiscreteLaw::pmf(int y) const { return std::exp(log_pmf(y)); }
double DiscreteLaw::mean() const { return node_->mean(); }
double DiscreteLaw::variance() const {
  const double m = node_->mean();
  return std::max(0.0, node_->second_moment() - m * m);
}
std::string DiscreteLaw::describe() const { return node_->describe(); }
int DiscreteLaw::search_cap() const { return node_->search_cap(); }

double DiscreteLaw::upper_tail(int y) const { return node_->upper_tail(y); }

double DiscreteLaw::cdf(int y) const {
  const Support s = support();
  if (y < s.lo) return 0.0;
  if (y >= s.hi) return 1.0;
  std::vector<double> t;
  node_->fill_log_pmf(y, t);
  double c = 0.0;
  for (int k = std::max(0, s.lo); k <= y; ++k) c += std::exp(t[k]);
  return std::min(c, 1.0);
}

int DiscreteLaw::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile probability must lie in (0,1), got " + fmt(p));
  const Support s = support();
  const int cap = search_cap();
  std::vector<double> t;
  double cum = 0.0;
  int y = std::max(0, s.lo);
  int hi = std::min(cap, std::max(32, 2 * y + 32));
  while (true) {
    node_->fill_log_pmf(hi, t);
    for (; y <= hi; ++y) {
      cum += std::exp(t[y]);
      if (cum >= p) return y;
    }
    if (hi >= cap) return cap;
    hi = static_cast<int>(std::min<long long>(cap, 2LL * hi));
  }
}

int DiscreteLaw::sample(Rng& rng) const {
  if (auto* bb = dynamic_cast<const detail::BetaBinomialNode*>(node_.get())) {
    // binomial limit below the dispersion threshold, beta mixture otherwise
    if (bb->n() == 0) return 0;
    if (bb->sigma() < 1e-8) return std::binomial_distribution<int>(bb->n(), bb->mu())(rng);
    std::gamma_distribution<double> ga(bb->mu() / bb->sigma(), 1.0);
    std::gamma_distribution<double> gb((1.0 - bb->mu()) / bb->sigma(), 1.0);
    const double x = ga(rng);
    const double z = gb(rng);
    const double p = (x + z) > 0.0 ? x / (x + z) : bb->mu();
    return std::binomial_distribution<int>(bb->n(), std::clamp(p, 0.0, 1.0))(rng);
  }
  return quantile(uniform_open(rng));
}

LogLikelihood DiscreteLaw::log_likelihood(std::span<const int> data) const {
  LogLikelihood ll;
  const Support s = support();
  int top = -1;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!s.contains(data[i])) {
      ll.out_of_support.push_back(i);
    } else {
      top = std::max(top, data[i]);
    }
  }
  if (!ll.out_of_support.empty()) {
    ll.value = kNegInf;
    return ll;
  }
  if (top < 0) return ll;
  std::vector<double> t;
  node_->fill_log_pmf(top, t);
  for (int y : data) ll.value += t[y];
  return ll;
}

std::vector<double> DiscreteLaw::log_pmf_table(int hi) const {
  std::vector<double> t;
  if (hi < 0) return t;
  node_->fill_log_pmf(hi, t);
  const Support s = support();
  for (int y = 0; y <= hi; ++y)
    if (!s.contains(y)) t[y] = kNegInf;
  return t;
}

std::vector<double> DiscreteLaw::pmf_table(int hi) const {
  auto t = log_pmf_table(hi);
  for (double& v : t) v = std::exp(v);
  return t;
}

// ---------------------------------------------------------------------------

ContinuousLaw ContinuousLaw::log_normal(double meanlog, double sdlog) {
  if (!std::isfinite(meanlog)) throw DomainError("log-normal meanlog must be finite");
  require_positive(sdlog, "log-normal sdlog");
  return ContinuousLaw(ContinuousFamily::LogNormal, meanlog, sdlog);
}

ContinuousLaw ContinuousLaw::beta(double mu, double phi) {
  if (!(mu > 0.0 && mu < 1.0)) throw DomainError("beta mean must lie in (0,1), got " + fmt(mu));
  require_positive(phi, "beta precision");
  return ContinuousLaw(ContinuousFamily::Beta, mu * phi, (1.0 - mu) * phi);
}

double ContinuousLaw::lower() const { return 0.0; }
double ContinuousLaw::upper() const {
  return family_ == ContinuousFamily::Beta ? 1.0 : std::numeric_limits<double>::infinity();
}

double ContinuousLaw::log_density(double y) const {
  if (family_ == ContinuousFamily::LogNormal) {
    if (!(y > 0.0)) return kNegInf;
    const double z = (std::log(y) - a_) / b_;
    return -0.5 * z * z - std::log(b_ * y) - 0.5 * std::log(2.0 * M_PI);
  }
  if (!(y > 0.0 && y < 1.0)) return kNegInf;
  return (a_ - 1.0) * std::log(y) + (b_ - 1.0) * std::log1p(-y) - (std::lgamma(a_) + std::lgamma(b_) - std::lgamma(a_ + b_));
}

double ContinuousLaw::density(double y) const { return std::exp(log_density(y)); }

double ContinuousLaw::cdf(double y) const {
  if (family_ == ContinuousFamily::LogNormal) {
    if (!(y > 0.0)) return 0.0;
    if (!std::isfinite(y)) return 1.0;
    return normal_cdf((std::log(y) - a_) / b_);
  }
  if (y <= 0.0) return 0.0;
  if (y >= 1.0) return 1.0;
  return boost::math::cdf(boost::math::beta_distribution<double>(a_, b_), y);
}

double ContinuousLaw::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile probability must lie in (0,1), got " + fmt(p));
  if (family_ == ContinuousFamily::LogNormal) return std::exp(a_ + b_ * normal_quantile(p));
  return boost::math::quantile(boost::math::beta_distribution<double>(a_, b_), p);
}

double ContinuousLaw::sample(Rng& rng) const {
  if (family_ == ContinuousFamily::LogNormal) return std::lognormal_distribution<double>(a_, b_)(rng);
  const double x = std::gamma_distribution<double>(a_, 1.0)(rng);
  const double z = std::gamma_distribution<double>(b_, 1.0)(rng);
  if (x + z <= 0.0) return a_ / (a_ + b_);
  return x / (x + z);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile probability must lie in (0,1), got " + fmt(p));
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace dah

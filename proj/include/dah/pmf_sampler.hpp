#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "dah/errors.hpp"
#include "dah/rng.hpp"

namespace dah {

/// Inverse-cdf sampler for a pmf on 0..size-1. Const and thread-safe.
class PmfSampler {
 public:
  PmfSampler() = default;
  explicit PmfSampler(std::span<const double> pmf) : cum_(pmf.size()) {
    double s = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k) {
      if (!(pmf[k] >= 0.0)) throw DomainError("pmf entries must be non-negative");
      s += pmf[k];
      cum_[k] = s;
    }
    if (!(s > 0.0)) throw DomainError("pmf has no mass");
    // Normalise so rounding in the sum can never leave a gap at the top.
    for (double& c : cum_) c /= s;
    cum_.back() = 1.0;
  }

  int operator()(Rng& rng) const {
    const double u = uniform_open(rng);
    return static_cast<int>(std::upper_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
  }

  std::size_t size() const noexcept { return cum_.size(); }

 private:
  std::vector<double> cum_;
};

}  // namespace dah

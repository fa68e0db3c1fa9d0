#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dah {

enum class Link { Identity, Log, Logit };

// Linear predictors are clamped to this range before the inverse link; logits or
// logs beyond it are numerically degenerate (probabilities below 1e-15).
inline constexpr double kEtaBound = 35.0;

inline const char* link_name(Link link) {
  switch (link) {
    case Link::Identity: return "identity";
    case Link::Log: return "log";
    case Link::Logit: return "logit";
  }
  return "?";
}

inline Link parse_link(const std::string& s) {
  if (s == "identity") return Link::Identity;
  if (s == "log") return Link::Log;
  if (s == "logit") return Link::Logit;
  throw std::invalid_argument("unknown link function '" + s + "'");
}

/// Maps a parameter value onto the linear-predictor scale.
template <std::floating_point Scalar>
Scalar link_apply(Link link, Scalar value) {
  using std::log;
  switch (link) {
    case Link::Identity: return value;
    case Link::Log: return log(value);
    case Link::Logit: return log(value) - log1p(-value);
  }
  return value;
}

/// Inverse link with the linear predictor clamped to [-kEtaBound, kEtaBound]
/// for the log and logit links.
template <std::floating_point Scalar>
Scalar link_inverse(Link link, Scalar eta) {
  using std::exp;
  switch (link) {
    case Link::Identity: return eta;
    case Link::Log: return exp(std::clamp<Scalar>(eta, -kEtaBound, kEtaBound));
    case Link::Logit: {
      const Scalar e = std::clamp<Scalar>(eta, -kEtaBound, kEtaBound);
      return e >= 0 ? Scalar(1) / (Scalar(1) + exp(-e)) : exp(e) / (Scalar(1) + exp(e));
    }
  }
  return eta;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> link_inverse(Link link, const Eigen::MatrixBase<Derived>& eta) {
  return eta.unaryExpr([link](typename Derived::Scalar e) { return link_inverse(link, e); });
}

/// eta = X beta (+ offset).
template <typename DerivedX, typename DerivedB>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> linear_predictor(const Eigen::MatrixBase<DerivedX>& X,
                                                                              const Eigen::MatrixBase<DerivedB>& beta,
                                                                              typename DerivedX::Scalar offset = 0) {
  if (X.cols() != beta.size())
    throw std::invalid_argument("design has " + std::to_string(X.cols()) + " columns but " + std::to_string(beta.size()) +
                                " coefficients were given");
  Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> eta = X * beta;
  if (offset != 0) eta.array() += offset;
  return eta;
}

}  // namespace dah

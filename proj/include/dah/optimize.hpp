#pragma once

// Quasi-Newton minimisation with finite-difference gradients and a
// Nelder-Mead fallback, plus numerical Hessians for Wald inference.

#include <functional>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace dah {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-10;  // on the objective
  // max |gradient| must fall below gradient_tolerance * max(1, |f|)
  double gradient_tolerance = 1e-6;
  double gradient_step = 1e-6;  // relative central-difference step
  double max_step = 5.0;        // cap on the infinity norm of a BFGS step
  int simplex_max_evaluations = 20000;
  // Hessian eigenvalues below this share of the largest count as flat.
  double flat_curvature = 1e-8;
  int newton_iterations = 30;
  // Skip the fallbacks when BFGS stalls above this value (a worse restart).
  double abandon_above = std::numeric_limits<double>::infinity();
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool used_simplex = false;
  std::string message;
};

Eigen::VectorXd numerical_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step = 1e-6);

/// Central second differences of f: four-point mixed differences off the
/// diagonal, so the result is symmetric by construction.
Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x, double rel_step = 1e-4);

/// Newton iterations restricted to the curved eigen-directions of a numerical
/// Hessian. Converged when the gradient vanishes on that subspace, which is
/// the criterion for objectives with unidentified ridges (flat directions
/// whose optimum lies at infinity).
OptimResult subspace_newton(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& options = {});

/// BFGS; on failure a subspace Newton polish, then a simplex restart followed
/// by BFGS and a final subspace Newton attempt.
OptimResult minimize(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& options = {});

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, int max_evaluations, double tolerance = 1e-12);

}  // namespace dah

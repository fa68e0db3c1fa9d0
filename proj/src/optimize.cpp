#include "dah/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dah/errors.hpp"

namespace dah {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& x, int& evals) {
  ++evals;
  const double v = f(x);
  return std::isnan(v) ? kInf : v;
}

bool gradient_small(const Eigen::VectorXd& g, double fx, double tol) {
  if (g.size() == 0) return true;
  return g.cwiseAbs().maxCoeff() <= tol * std::max(1.0, std::abs(fx));
}

}  // namespace

Eigen::VectorXd numerical_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const double fp = f(xp);
    xp[j] = x[j] - h;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
    if (!std::isfinite(g[j])) g[j] = 0.0;
  }
  return g;
}

Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x, double rel_step) {
  const Eigen::Index p = x.size();
  Eigen::VectorXd h(p);
  for (Eigen::Index j = 0; j < p; ++j) h[j] = rel_step * std::max(1.0, std::abs(x[j]));
  const double f0 = f(x);
  Eigen::MatrixXd out(p, p);
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < p; ++i) {
    xp[i] = x[i] + h[i];
    const double fp = f(xp);
    xp[i] = x[i] - h[i];
    const double fm = f(xp);
    xp[i] = x[i];
    out(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      auto at = [&](double si, double sj) {
        xp[i] = x[i] + si * h[i];
        xp[j] = x[j] + sj * h[j];
        const double v = f(xp);
        xp[i] = x[i];
        xp[j] = x[j];
        return v;
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, int max_evaluations, double tolerance) {
  const Eigen::Index p = x0.size();
  OptimResult r;
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(p + 1), x0);
  std::vector<double> values(static_cast<std::size_t>(p + 1));
  for (Eigen::Index j = 0; j < p; ++j) simplex[static_cast<std::size_t>(j + 1)][j] += 0.1 * std::max(1.0, std::abs(x0[j]));
  for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = safe_eval(f, simplex[i], r.evaluations);

  std::vector<std::size_t> order(simplex.size());
  while (r.evaluations < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(values[worst] - values[best]) <= tolerance * (std::abs(values[best]) + 1e-10)) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
    for (std::size_t i : order)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(p);

    const Eigen::VectorXd xr = centroid + (centroid - simplex[worst]);
    const double fr = safe_eval(f, xr, r.evaluations);
    if (fr < values[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = safe_eval(f, xe, r.evaluations);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
    } else if (fr < values[second]) {
      simplex[worst] = xr;
      values[worst] = fr;
    } else {
      const bool outside = fr < values[worst];
      const Eigen::VectorXd xc =
          outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid)) : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
      const double fc = safe_eval(f, xc, r.evaluations);
      if (fc < std::min(fr, values[worst])) {
        simplex[worst] = xc;
        values[worst] = fc;
      } else {
        for (std::size_t i = 0; i < simplex.size(); ++i) {
          if (i == best) continue;
          simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
          values[i] = safe_eval(f, simplex[i], r.evaluations);
        }
      }
    }
    ++r.iterations;
  }
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  r.x = simplex[best];
  r.value = values[best];
  r.used_simplex = true;
  r.message = r.converged ? "simplex converged" : "simplex evaluation limit reached";
  return r;
}

namespace {

// BFGS on the inverse Hessian with Armijo backtracking.
OptimResult bfgs(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& o, bool& line_search_failed) {
  OptimResult r;
  line_search_failed = false;
  const Eigen::Index p = x0.size();
  Eigen::VectorXd x = x0;
  double fx = safe_eval(f, x, r.evaluations);
  if (!std::isfinite(fx)) throw NumericalError("objective is not finite at the starting point");
  Eigen::VectorXd g = numerical_gradient(f, x, o.gradient_step);
  r.evaluations += static_cast<int>(2 * p);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(p, p);
  bool fresh = true;
  bool reset_tried = false;

  for (r.iterations = 0; r.iterations < o.max_iterations; ++r.iterations) {
    if (p == 0) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd d = -hinv * g;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      d = -g;
      slope = g.dot(d);
      fresh = true;
    }
    if (slope == 0.0) {
      r.converged = gradient_small(g, fx, o.gradient_tolerance);
      break;
    }
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax > o.max_step) {
      d *= o.max_step / dmax;
      slope = g.dot(d);
    }

    double t = 1.0;
    double fnew = kInf;
    Eigen::VectorXd xnew;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      xnew = x + t * d;
      fnew = safe_eval(f, xnew, r.evaluations);
      if (fnew <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (gradient_small(g, fx, o.gradient_tolerance)) {
        r.converged = true;
        break;
      }
      if (!reset_tried) {
        reset_tried = true;
        hinv.setIdentity();
        fresh = true;
        continue;
      }
      line_search_failed = true;
      r.message = "line search failed";
      break;
    }
    reset_tried = false;

    const Eigen::VectorXd gnew = numerical_gradient(f, xnew, o.gradient_step);
    r.evaluations += static_cast<int>(2 * p);
    const Eigen::VectorXd s = xnew - x;
    const Eigen::VectorXd y = gnew - g;
    const double rel = std::abs(fx - fnew) / (std::abs(fx) + 1e-10);
    x = xnew;
    fx = fnew;
    g = gnew;

    const double ys = y.dot(s);
    if (ys > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        hinv *= ys / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / ys;
      const Eigen::VectorXd hy = hinv * y;
      hinv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
    if (rel < o.relative_tolerance && gradient_small(g, fx, o.gradient_tolerance)) {
      r.converged = true;
      break;
    }
  }
  r.x = x;
  r.value = fx;
  r.gradient = g;
  if (r.message.empty()) r.message = r.converged ? "converged" : "iteration limit reached";
  return r;
}

}  // namespace

OptimResult subspace_newton(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& o) {
  OptimResult r;
  r.x = x0;
  r.value = safe_eval(f, r.x, r.evaluations);
  const Eigen::Index p = x0.size();
  if (p == 0 || !std::isfinite(r.value)) {
    r.converged = p == 0;
    r.message = r.converged ? "converged" : "objective is not finite";
    return r;
  }
  for (r.iterations = 0; r.iterations < o.newton_iterations; ++r.iterations) {
    r.gradient = numerical_gradient(f, r.x, o.gradient_step);
    const Eigen::MatrixXd raw = numerical_hessian(f, r.x);
    r.evaluations += static_cast<int>(2 * p + 2 * p * p + 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (raw + raw.transpose()));
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double cut = o.flat_curvature * std::max(1.0, ev.cwiseAbs().maxCoeff());
    // Newton step on curved directions; negative curvature uses |lambda|.
    Eigen::VectorXd projected = Eigen::VectorXd::Zero(p), d = Eigen::VectorXd::Zero(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      if (std::abs(ev[k]) <= cut) continue;
      const Eigen::VectorXd v = eig.eigenvectors().col(k);
      const double gv = v.dot(r.gradient);
      projected += gv * v;
      d -= gv / std::abs(ev[k]) * v;
    }
    if (gradient_small(projected, r.value, o.gradient_tolerance)) {
      r.converged = true;
      r.message = "converged on the identified subspace";
      return r;
    }
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax > o.max_step) d *= o.max_step / dmax;
    const double slope = r.gradient.dot(d);
    bool accepted = false;
    for (double t = 1.0; t > 1e-10 && slope < 0.0; t *= 0.5) {
      const Eigen::VectorXd xn = r.x + t * d;
      const double fn = safe_eval(f, xn, r.evaluations);
      if (fn <= r.value + 1e-4 * t * slope) {
        r.x = xn;
        r.value = fn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  r.message = "subspace Newton did not converge";
  return r;
}

OptimResult minimize(const Objective& f, const Eigen::VectorXd& x0, const OptimOptions& options) {
  bool ls_failed = false;
  OptimResult r = bfgs(f, x0, options, ls_failed);
  if (r.converged || r.value > options.abandon_above) return r;

  OptimResult newton = subspace_newton(f, r.x, options);
  newton.evaluations += r.evaluations;
  newton.iterations += r.iterations;
  if (newton.converged) return newton;

  // Simplex fallback from the best point so far, then a final quasi-Newton polish.
  const Eigen::VectorXd from = newton.value < r.value ? newton.x : r.x;
  OptimResult nm = nelder_mead(f, from, options.simplex_max_evaluations);
  const int evals = newton.evaluations + nm.evaluations;
  const Eigen::VectorXd start = nm.value < std::min(r.value, newton.value) ? nm.x : from;
  OptimResult polished = bfgs(f, start, options, ls_failed);
  polished.used_simplex = true;
  polished.evaluations += evals;
  polished.iterations += newton.iterations + nm.iterations;
  if (!polished.converged) {
    polished.gradient = numerical_gradient(f, polished.x, options.gradient_step);
    if (gradient_small(polished.gradient, polished.value, options.gradient_tolerance)) {
      polished.converged = true;
      polished.message = "converged after simplex fallback";
    }
  }
  if (polished.converged) return polished;
  OptimResult last = subspace_newton(f, polished.x, options);
  last.used_simplex = true;
  last.evaluations += polished.evaluations;
  last.iterations += polished.iterations;
  return last.converged || last.value < polished.value ? last : polished;
}

}  // namespace dah

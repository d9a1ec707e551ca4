#include "longit/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace longit {

namespace {

double step_for(double h, double x) { return h * std::max(1.0, std::abs(x)); }

// Counts evaluations and maps non-finite values to +inf so line searches back off.
struct Counted {
  const Objective& f;
  int count = 0;
  double operator()(const Eigen::VectorXd& x) {
    ++count;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }
};

}  // namespace

Eigen::VectorXd numerical_gradient(const Objective& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double s = step_for(h, x(k));
    auto at = [&](double t) {
      xp(k) = x(k) + t;
      return f(xp);
    };
    const double f2 = at(2 * s), f1 = at(s), m1 = at(-s), m2 = at(-2 * s);
    xp(k) = x(k);
    g(k) = (-f2 + 8 * f1 - 8 * m1 + m2) / (12 * s);
  }
  return g;
}

Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x, double h) {
  const auto p = x.size();
  Eigen::MatrixXd H(p, p);
  Eigen::VectorXd s(p);
  for (Eigen::Index k = 0; k < p; ++k) s(k) = step_for(h, x(k));
  const double f0 = f(x);
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < p; ++i) {
    auto at = [&](double t) {
      xp(i) = x(i) + t;
      const double v = f(xp);
      xp(i) = x(i);
      return v;
    };
    H(i, i) = (-at(2 * s(i)) + 16 * at(s(i)) - 30 * f0 + 16 * at(-s(i)) - at(-2 * s(i))) / (12 * s(i) * s(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      auto at2 = [&](double a, double b) {
        xp(i) = x(i) + a;
        xp(j) = x(j) + b;
        const double v = f(xp);
        xp(i) = x(i);
        xp(j) = x(j);
        return v;
      };
      const double v = (at2(s(i), s(j)) - at2(s(i), -s(j)) - at2(-s(i), s(j)) + at2(-s(i), -s(j))) / (4 * s(i) * s(j));
      H(i, j) = H(j, i) = v;
    }
  }
  return H;
}

OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& options) {
  Counted fc{f};
  const auto p = x0.size();
  OptimResult res;
  Eigen::VectorXd x = std::move(x0);
  double fx = fc(x);
  if (!std::isfinite(fx)) {
    res.x = x;
    res.value = fx;
    res.message = "objective is not finite at the starting point";
    return res;
  }
  Eigen::VectorXd g = numerical_gradient(std::ref(fc), x, options.gradient_step);
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(p, p);
  bool scaled = false;
  int restarts = 0;

  for (int it = 1; it <= options.max_iterations; ++it) {
    res.iterations = it;
    if (g.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd d = -Hinv * g;
    double slope = g.dot(d);
    if (!(slope < 0)) {
      Hinv.setIdentity();
      d = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0;
    Eigen::VectorXd xn = x + d;
    double fn = fc(xn);
    int backtracks = 0;
    while (!(fn <= fx + 1e-4 * t * slope) && backtracks < 60) {
      t *= 0.5;
      xn = x + t * d;
      fn = fc(xn);
      ++backtracks;
    }
    if (!(fn <= fx)) {
      // Line search failed: restart from steepest descent once or twice.
      if (restarts++ < 3) {
        Hinv.setIdentity();
        scaled = false;
        continue;
      }
      res.message = "line search failed";
      break;
    }
    const Eigen::VectorXd gn = numerical_gradient(std::ref(fc), xn, options.gradient_step);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        Hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    x = xn;
    fx = fn;
    g = gn;
    if (s.cwiseAbs().maxCoeff() == 0.0) {
      res.message = "no progress";
      break;
    }
  }
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.x = x;
  res.value = fx;
  res.gradient = g;
  res.evaluations = fc.count;
  return res;
}

OptimResult minimize_newton(const Objective& f, Eigen::VectorXd x0, const OptimOptions& options) {
  Counted fc{f};
  const auto p = x0.size();
  OptimResult res;
  Eigen::VectorXd x = std::move(x0);
  double fx = fc(x);
  if (!std::isfinite(fx)) {
    res.x = x;
    res.value = fx;
    res.message = "objective is not finite at the starting point";
    return res;
  }
  Eigen::VectorXd g = numerical_gradient(std::ref(fc), x, options.gradient_step);
  for (int it = 1; it <= options.max_iterations; ++it) {
    res.iterations = it;
    if (g.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd H = numerical_hessian(std::ref(fc), x, options.hessian_step);
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::VectorXd d;
    double lambda = 0.0;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::LLT<Eigen::MatrixXd> llt(H + lambda * Eigen::MatrixXd::Identity(p, p));
      if (llt.info() == Eigen::Success) {
        d = -llt.solve(g);
        break;
      }
      lambda = lambda == 0.0 ? 1e-6 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff()) : lambda * 10;
    }
    if (d.size() == 0) d = -g;
    double t = 1.0;
    Eigen::VectorXd xn = x + d;
    double fn = fc(xn);
    for (int h = 0; h < 60 && !(fn <= fx); ++h) {
      t *= 0.5;
      xn = x + t * d;
      fn = fc(xn);
    }
    if (!(fn <= fx)) {
      res.message = "step halving failed";
      break;
    }
    x = xn;
    fx = fn;
    g = numerical_gradient(std::ref(fc), x, options.gradient_step);
  }
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.x = x;
  res.value = fx;
  res.gradient = g;
  res.evaluations = fc.count;
  return res;
}

}  // namespace longit

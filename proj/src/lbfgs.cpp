#include "flipbound/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace flipbound {

namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;
constexpr int kMaxLineEvals = 40;

struct Trial {
  double alpha;
  double value;
  double slope;  // directional derivative at alpha
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), clamped into
// the interior of [lo, hi]; falls back to bisection when the fit is unusable.
double cubic_step(const Trial& a, const Trial& b) {
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  double t = 0.5 * (lo + hi);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
    const double denom = b.slope - a.slope + 2.0 * d2;
    if (denom != 0.0) {
      const double c = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
      if (std::isfinite(c)) t = c;
    }
  }
  const double margin = 0.1 * (hi - lo);
  return std::clamp(t, lo + margin, hi - margin);
}

class LineSearch {
 public:
  LineSearch(const Objective& f, const Vector& x, const Vector& dir, double f0, double slope0, int& evals)
      : f_(f), x_(x), dir_(dir), f0_(f0), slope0_(slope0), evals_(evals) {
    grad_.resize(x.size());
  }

  // Returns true and fills (alpha, value, point, grad) on success.
  bool run(double alpha0, double& alpha, double& value, Vector& point, Vector& grad) {
    Trial prev{0.0, f0_, slope0_};
    double a = alpha0;
    for (int i = 0; i < kMaxLineEvals; ++i) {
      Trial cur = eval(a);
      if (!std::isfinite(cur.value) || cur.value > f0_ + kC1 * a * slope0_ || (i > 0 && cur.value >= prev.value)) {
        if (!std::isfinite(cur.value)) {
          a = 0.5 * (prev.alpha + a);
          continue;
        }
        return zoom(prev, cur, alpha, value, point, grad);
      }
      if (std::abs(cur.slope) <= -kC2 * slope0_) return accept(cur, alpha, value, point, grad);
      if (cur.slope >= 0.0) return zoom(cur, prev, alpha, value, point, grad);
      prev = cur;
      a *= 2.0;
    }
    return false;
  }

 private:
  Trial eval(double a) {
    point_ = x_ + a * dir_;
    const double v = f_(point_, grad_);
    last_alpha_ = a;
    ++evals_;
    return {a, v, grad_.dot(dir_)};
  }

  bool accept(const Trial& t, double& alpha, double& value, Vector& point, Vector& grad) {
    alpha = t.alpha;
    value = t.value;
    if (last_alpha_ != t.alpha) eval(t.alpha);
    point = point_;
    grad = grad_;
    return true;
  }

  bool zoom(Trial lo, Trial hi, double& alpha, double& value, Vector& point, Vector& grad) {
    for (int i = 0; i < kMaxLineEvals; ++i) {
      if (std::abs(hi.alpha - lo.alpha) <= std::numeric_limits<double>::epsilon() * std::abs(lo.alpha)) break;
      const Trial cur = eval(cubic_step(lo, hi));
      if (!std::isfinite(cur.value) || cur.value > f0_ + kC1 * cur.alpha * slope0_ || cur.value >= lo.value) {
        hi = cur;
      } else {
        if (std::abs(cur.slope) <= -kC2 * slope0_) return accept(cur, alpha, value, point, grad);
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = cur;
      }
    }
    // Sufficient decrease without curvature still makes progress.
    if (lo.alpha > 0.0 && lo.value < f0_) return accept(lo, alpha, value, point, grad);
    return false;
  }

  const Objective& f_;
  const Vector& x_;
  const Vector& dir_;
  double f0_;
  double slope0_;
  int& evals_;
  Vector point_;
  Vector grad_;
  double last_alpha_ = -1.0;
};

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, const LbfgsOptions& opts) {
  LbfgsResult res;
  res.x = std::move(x0);
  res.gradient.resize(res.x.size());
  res.value = f(res.x, res.gradient);
  res.evaluations = 1;

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;
  int small_steps = 0;

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    if (res.gradient.size() == 0 || res.gradient.cwiseAbs().maxCoeff() <= opts.gradient_tol) {
      res.stop = LbfgsStop::gradient;
      return res;
    }

    // Two-loop recursion.
    Vector q = res.gradient;
    std::vector<double> alphas(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alphas[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alphas[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alphas[k] - beta) * s_hist[k];
    }
    Vector dir = -q;
    double slope = res.gradient.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -res.gradient;
      slope = -res.gradient.squaredNorm();
    }

    const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / res.gradient.norm()) : 1.0;
    LineSearch search(f, res.x, dir, res.value, slope, res.evaluations);
    double alpha = 0.0;
    double value = 0.0;
    Vector point;
    Vector grad;
    if (!search.run(alpha0, alpha, value, point, grad)) {
      if (s_hist.empty()) {
        res.stop = LbfgsStop::line_search;
        return res;
      }
      // Retry from steepest descent with a fresh memory.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }

    Vector s = point - res.x;
    Vector y = grad - res.gradient;
    const double sy = s.dot(y);
    const double decrease = res.value - value;
    res.x = std::move(point);
    res.gradient = std::move(grad);
    res.value = value;

    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    if (decrease <= opts.function_tol * std::max(1.0, std::abs(res.value))) {
      if (++small_steps >= 2) {
        res.stop = LbfgsStop::function;
        ++res.iterations;
        return res;
      }
    } else {
      small_steps = 0;
    }
  }
  res.stop = LbfgsStop::max_iterations;
  return res;
}

}  // namespace flipbound

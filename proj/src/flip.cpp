#include "flipbound/flip.hpp"

#include "flipbound/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace flipbound {

std::string_view to_string(FlipStatus status) {
  switch (status) {
    case FlipStatus::converged:
      return "converged";
    case FlipStatus::local_stationary:
      return "local-stationary";
    case FlipStatus::bracket_failed:
      return "bracket-failed";
    case FlipStatus::box_exit:
      return "box-exit";
  }
  return "unknown";
}

namespace {

constexpr double kResidualTol = 1e-6;
constexpr double kDominanceTol = -1e-8;

void check_pair(const Network& net, ClassPair pair) {
  const Index k = net.class_count();
  if (pair.i == pair.j || pair.i < 0 || pair.j < 0 || pair.i >= k || pair.j >= k) {
    throw InvalidParameter("class pair (" + std::to_string(pair.i) + ", " + std::to_string(pair.j) +
                           ") is not a valid pair of distinct classes");
  }
}

double logit_gap(const Network& net, const Vector& p, ClassPair pair) {
  const Vector z = logits(net, p);
  return z[pair.i] - z[pair.j];
}

int sign_of(double v) { return (v > 0) - (v < 0); }

bool meets_flip_tolerances(const FlipResult& r) {
  return r.equality_residual <= kResidualTol && r.dominance_margin >= kDominanceTol;
}

// Penalty state of the augmented Lagrangian.
struct Multipliers {
  double equality = 0.0;
  Vector dominance;  // one per class outside the pair
  Vector box_upper;
  Vector box_lower;
  double penalty = 10.0;
};

class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const Network& net, const Vector& x, ClassPair pair, const std::optional<PixelBox>& box)
      : net_(net), x_(x), pair_(pair), box_(box) {
    for (Index k = 0; k < net.class_count(); ++k) {
      if (k != pair.i && k != pair.j) others_.push_back(k);
    }
  }

  Multipliers initial(double penalty) const {
    Multipliers m;
    m.penalty = penalty;
    m.dominance = Vector::Zero(static_cast<Index>(others_.size()));
    if (box_) {
      m.box_upper = Vector::Zero(box_->map.rows());
      m.box_lower = Vector::Zero(box_->map.rows());
    }
    return m;
  }

  double value(const Vector& p, Vector& grad, const Multipliers& m) const {
    const Evaluation eval = forward(net_, p);
    const Vector& z = eval.logits;
    const double mu = m.penalty;
    Vector coeffs = Vector::Zero(z.size());

    grad = p - x_;
    double v = 0.5 * grad.squaredNorm();

    const double h = z[pair_.i] - z[pair_.j];
    const double eq = m.equality + mu * h;
    v += m.equality * h + 0.5 * mu * h * h;
    coeffs[pair_.i] += eq;
    coeffs[pair_.j] -= eq;

    for (std::size_t n = 0; n < others_.size(); ++n) {
      const Index k = others_[n];
      const double nu = m.dominance[static_cast<Index>(n)];
      const double s = std::max(0.0, nu + mu * (z[k] - z[pair_.i]));
      v += (s * s - nu * nu) / (2.0 * mu);
      coeffs[k] += s;
      coeffs[pair_.i] -= s;
    }
    grad += grad_scalar_wrt_input(net_, p, eval, coeffs);

    if (box_) {
      const Vector pixels = box_->offset + box_->map * p;
      Vector weight(pixels.size());
      for (Index r = 0; r < pixels.size(); ++r) {
        const double nu_hi = m.box_upper[r];
        const double nu_lo = m.box_lower[r];
        const double s_hi = std::max(0.0, nu_hi + mu * (pixels[r] - box_->upper));
        const double s_lo = std::max(0.0, nu_lo + mu * (box_->lower - pixels[r]));
        v += (s_hi * s_hi - nu_hi * nu_hi + s_lo * s_lo - nu_lo * nu_lo) / (2.0 * mu);
        weight[r] = s_hi - s_lo;
      }
      grad.noalias() += box_->map.transpose() * weight;
    }
    return v;
  }

  // Constraint violation (with complementarity for inequalities) and the
  // first-order multiplier update, evaluated at p.
  double update(const Vector& p, Multipliers& m) const {
    const Vector z = logits(net_, p);
    const double mu = m.penalty;
    const double h = z[pair_.i] - z[pair_.j];
    double viol = std::abs(h);
    m.equality += mu * h;
    for (std::size_t n = 0; n < others_.size(); ++n) {
      const Index idx = static_cast<Index>(n);
      const double g = z[others_[n]] - z[pair_.i];
      viol = std::max(viol, std::abs(std::min(-g, m.dominance[idx] / mu)));
      m.dominance[idx] = std::max(0.0, m.dominance[idx] + mu * g);
    }
    if (box_) {
      const Vector pixels = box_->offset + box_->map * p;
      for (Index r = 0; r < pixels.size(); ++r) {
        const double g_hi = pixels[r] - box_->upper;
        const double g_lo = box_->lower - pixels[r];
        viol = std::max(viol, std::abs(std::min(-g_hi, m.box_upper[r] / mu)));
        viol = std::max(viol, std::abs(std::min(-g_lo, m.box_lower[r] / mu)));
        m.box_upper[r] = std::max(0.0, m.box_upper[r] + mu * g_hi);
        m.box_lower[r] = std::max(0.0, m.box_lower[r] + mu * g_lo);
      }
    }
    return viol;
  }

  // Plain feasibility: equality residual and inequality violations only.
  double infeasibility(const Vector& p) const {
    const Vector z = logits(net_, p);
    double viol = std::abs(z[pair_.i] - z[pair_.j]);
    for (Index k : others_) viol = std::max(viol, z[k] - z[pair_.i]);
    if (box_) {
      const Vector pixels = box_->offset + box_->map * p;
      viol = std::max(viol, pixels.maxCoeff() - box_->upper);
      viol = std::max(viol, box_->lower - pixels.minCoeff());
    }
    return viol;
  }

 private:
  const Network& net_;
  const Vector& x_;
  ClassPair pair_;
  const std::optional<PixelBox>& box_;
  std::vector<Index> others_;
};

struct SolveOutcome {
  Vector point;
  double violation = std::numeric_limits<double>::infinity();
  bool converged = false;
  int outer = 0;
};

SolveOutcome solve_from(const Network& net, const Vector& x, ClassPair pair, const Vector& start,
                        const FlipOptions& opts) {
  const AugmentedLagrangian al(net, x, pair, opts.box);
  Multipliers m = al.initial(opts.initial_penalty);
  SolveOutcome best;
  best.point = start;
  best.violation = al.infeasibility(start);

  Vector p = start;
  double previous = best.violation;
  double gtol = 1e-3;
  for (int outer = 1; outer <= opts.max_outer; ++outer) {
    LbfgsOptions inner;
    inner.gradient_tol = gtol;
    const auto objective = [&](const Vector& q, Vector& g) { return al.value(q, g, m); };
    const LbfgsResult res = minimize_lbfgs(objective, p, inner);
    if (!res.x.allFinite()) break;
    p = res.x;
    const double stationarity = res.gradient.cwiseAbs().maxCoeff();
    const double viol = al.update(p, m);

    const double feasibility = al.infeasibility(p);
    if (feasibility <= best.violation || best.converged) {
      best.point = p;
      best.violation = feasibility;
    }
    best.outer = outer;
    const double scale = std::max(1.0, (p - x).norm());
    if (viol <= opts.equality_tol && stationarity <= 1e-6 * scale) {
      best.point = p;
      best.violation = feasibility;
      best.converged = true;
      break;
    }
    if (viol > opts.sufficient_decrease * previous) m.penalty = std::min(m.penalty * opts.penalty_growth, 1e12);
    previous = viol;
    gtol = std::max(1e-11 * scale, std::min(0.1 * gtol, 0.1 * viol));
  }
  return best;
}

// Moves p onto the exact root of z_i - z_j along the ray from x through p.
Vector polish_on_ray(const Network& net, const Vector& x, const Vector& p, ClassPair pair) {
  const Vector d = p - x;
  if (d.norm() == 0.0) return p;
  const auto gap = [&](double t) { return logit_gap(net, x + t * d, pair); };
  const double g1 = gap(1.0);
  const int s0 = sign_of(gap(0.0));
  if (g1 == 0.0 || s0 == 0) return p;

  const bool beyond = sign_of(g1) == s0;
  double inner = 1.0;
  double outer = 1.0;
  bool bracketed = false;
  for (double delta = 1e-12; delta <= 1e-2; delta *= 10.0) {
    const double t = beyond ? 1.0 + delta : 1.0 - delta;
    if (sign_of(gap(t)) != sign_of(g1)) {
      outer = t;
      bracketed = true;
      break;
    }
    inner = t;
  }
  if (!bracketed) return p;

  // inner keeps g1's sign, outer the opposite one.
  const int s_inner = sign_of(g1);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (inner + outer);
    if (mid == inner || mid == outer) break;
    const double gm = gap(mid);
    if (gm == 0.0) return x + mid * d;
    if (sign_of(gm) == s_inner) {
      inner = mid;
    } else {
      outer = mid;
    }
  }
  const double t = std::abs(gap(inner)) <= std::abs(gap(outer)) ? inner : outer;
  return x + t * d;
}

// Newton-type refinement of a converged point when only the pair equality
// is active: repeatedly projects x onto the linearized boundary at p. Exact
// in one step for linear nets; returns p unchanged if it fails to settle.
Vector refine_kkt(const Network& net, const Vector& x, const Vector& p, ClassPair pair) {
  const Index k = net.class_count();
  const Vector c = Vector::Unit(k, pair.i) - Vector::Unit(k, pair.j);
  const double d0 = (p - x).norm();
  Vector q = p;
  for (int it = 0; it < 8; ++it) {
    const Vector grad = grad_scalar_wrt_input(net, q, c);
    const double gg = grad.squaredNorm();
    if (!(gg > 0.0)) return p;
    const Vector next = x - ((logit_gap(net, q, pair) + grad.dot(x - q)) / gg) * grad;
    const double step = (next - q).norm();
    q = next;
    if (!q.allFinite() || (q - p).norm() > 1e-3 * std::max(d0, 1e-12)) return p;
    if (step <= 1e-15 * std::max(1.0, d0)) break;
  }
  return q;
}

FlipResult make_result(const Network& net, const Vector& x, ClassPair pair, Vector point) {
  FlipResult r;
  r.pair = pair;
  r.point = std::move(point);
  r.distance = (r.point - x).norm();
  measure_flip(net, r);
  return r;
}

}  // namespace

void measure_flip(const Network& net, FlipResult& result) {
  const Evaluation eval = forward(net, result.point);
  const Vector& s = eval.softmax;
  result.equality_residual = std::abs(s[result.pair.i] - s[result.pair.j]);
  double other = 0.0;
  for (Index k = 0; k < s.size(); ++k) {
    if (k != result.pair.i && k != result.pair.j) other = std::max(other, s[k]);
  }
  result.dominance_margin = s[result.pair.i] - other;
}

FlipResult closest_flip(const Network& net, const Vector& x, ClassPair pair, const FlipOptions& opts) {
  check_pair(net, pair);
  if (x.size() != net.input_dim()) throw ShapeError("query dimension does not match the network input");
  if (!x.allFinite()) throw InvalidInput("query contains non-finite values");
  if (opts.box && (opts.box->map.cols() != x.size() || opts.box->offset.size() != opts.box->map.rows())) {
    throw ShapeError("pixel box does not match the feature dimension");
  }

  const Vector base = opts.initial_point.value_or(x);
  if (base.size() != x.size()) throw ShapeError("initial point dimension does not match the query");

  std::optional<FlipResult> best_converged;
  std::optional<FlipResult> best_other;
  double best_other_violation = std::numeric_limits<double>::infinity();
  const auto solve = [&](const Vector& start) {
    SolveOutcome out = solve_from(net, x, pair, start, opts);
    FlipResult candidate = make_result(net, x, pair, out.point);
    candidate.outer_iterations = out.outer;
    if (out.converged) {
      FlipResult polished = make_result(net, x, pair, polish_on_ray(net, x, out.point, pair));
      if (!opts.box) {
        FlipResult refined = make_result(net, x, pair, polish_on_ray(net, x, refine_kkt(net, x, out.point, pair), pair));
        if (refined.equality_residual <= std::max(polished.equality_residual, 1e-12) &&
            refined.dominance_margin >= kDominanceTol &&
            refined.distance <= polished.distance + 1e-12 * std::max(1.0, polished.distance)) {
          polished = std::move(refined);
        }
      }
      bool box_ok = true;
      if (opts.box) {
        const Vector pixels = opts.box->offset + opts.box->map * polished.point;
        box_ok = pixels.minCoeff() >= opts.box->lower - opts.equality_tol &&
                 pixels.maxCoeff() <= opts.box->upper + opts.equality_tol;
      }
      if (box_ok && polished.equality_residual <= candidate.equality_residual &&
          polished.dominance_margin >= kDominanceTol) {
        polished.outer_iterations = out.outer;
        candidate = std::move(polished);
      }
    }
    if (out.converged && meets_flip_tolerances(candidate)) {
      candidate.status = FlipStatus::converged;
      if (!best_converged || candidate.distance < best_converged->distance) best_converged = std::move(candidate);
    } else {
      candidate.status = FlipStatus::local_stationary;
      if (out.violation < best_other_violation) {
        best_other_violation = out.violation;
        best_other = std::move(candidate);
      }
    }
  };
  solve(base);

  // Restarts sit at distances comparable to the first answer, where any
  // competing local minimum must lie.
  double reference = best_converged ? best_converged->distance : 0.0;
  if (!(reference > 0.0)) reference = 0.1 * (x.norm() > 0.0 ? x.norm() : 1.0);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss;
  static constexpr double kRadii[] = {1.0, 0.5, 1.0, 2.0};
  for (int r = 0; r < opts.restarts; ++r) {
    Vector delta(x.size());
    for (Index i = 0; i < delta.size(); ++i) delta[i] = gauss(rng);
    const double len = delta.norm();
    if (len > 0.0) delta *= kRadii[r % 4] * reference / len;
    solve(base + delta);
  }
  return best_converged ? *best_converged : *best_other;
}

FlipResult flip_along_direction(const Network& net, const Vector& x, const Vector& dir, ClassPair pair,
                                const RayOptions& opts) {
  check_pair(net, pair);
  if (dir.size() != x.size()) throw ShapeError("direction dimension does not match the query");
  const double len = dir.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw InvalidParameter("search direction must be nonzero and finite");
  const Vector unit = dir / len;
  const auto at = [&](double t) -> Vector { return x + t * unit; };
  const auto gap = [&](double t) { return logit_gap(net, at(t), pair); };

  const auto finish = [&](double t, FlipStatus status) {
    FlipResult r = make_result(net, x, pair, at(t));
    r.status = status;
    if (status == FlipStatus::converged) {
      if (opts.feasible && !opts.feasible(r.point)) {
        r.status = FlipStatus::box_exit;
      } else if (!meets_flip_tolerances(r)) {
        r.status = FlipStatus::bracket_failed;
      }
    }
    return r;
  };

  const int s0 = sign_of(gap(0.0));
  if (s0 == 0) return finish(0.0, FlipStatus::converged);

  double lo = 0.0;
  double hi = 0.0;
  bool bracketed = false;
  for (double t = opts.t_initial;; t *= 2.0) {
    const double tt = std::min(t, opts.t_max);
    // The crossing may lie inside the box even if this probe overshot it;
    // finish() judges feasibility at the refined point.
    const double g = gap(tt);
    if (sign_of(g) != s0) {
      if (g == 0.0) return finish(tt, FlipStatus::converged);
      hi = tt;
      bracketed = true;
      break;
    }
    if (opts.feasible && !opts.feasible(at(tt))) return finish(lo, FlipStatus::box_exit);
    lo = tt;
    if (tt >= opts.t_max) break;
  }
  if (!bracketed) return finish(lo, FlipStatus::box_exit);

  while (hi - lo > opts.width_tol * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double g = gap(mid);
    if (g == 0.0) return finish(mid, FlipStatus::converged);
    if (sign_of(g) == s0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return finish(0.5 * (lo + hi), FlipStatus::converged);
}

TaylorEstimate taylor_estimate(const Network& net, const Vector& x, ClassPair pair) {
  check_pair(net, pair);
  const Evaluation eval = forward(net, x);
  Vector coeffs = Vector::Zero(net.class_count());
  coeffs[pair.i] = 1.0;
  coeffs[pair.j] = -1.0;
  const Vector grad = grad_scalar_wrt_input(net, x, eval, coeffs);
  const double norm = grad.norm();
  if (!(norm >= 1e-14)) throw DegenerateGradient("logit-gap gradient vanishes at the query");
  TaylorEstimate est;
  est.gap = eval.logits[pair.i] - eval.logits[pair.j];
  est.distance = std::abs(est.gap) / norm;
  est.direction = (est.gap > 0 ? -1.0 : 1.0) * grad / norm;
  return est;
}

double angle_between_deg(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  const Vector ua = a / na;
  const Vector ub = b / nb;
  // 2 atan2(|ua - ub|, |ua + ub|) stays accurate near 0 and 180 degrees.
  return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm()) * 180.0 / std::numbers::pi;
}

Comparison compare(const Network& net, const Vector& x, ClassPair pair, const FlipOptions& opts,
                   const RayOptions& ray) {
  Comparison out;
  try {
    out.taylor = taylor_estimate(net, x, pair);
  } catch (const DegenerateGradient&) {
    out.taylor.reset();
  }

  out.closest = closest_flip(net, x, pair, opts);
  if (out.taylor) {
    out.directional = flip_along_direction(net, x, out.taylor->direction, pair, ray);
  } else {
    out.directional.pair = pair;
    out.directional.point = x;
    out.directional.status = FlipStatus::bracket_failed;
  }

  const FlipResult& dir = out.directional;
  if (dir.converged() && (!out.closest.converged() || dir.distance < out.closest.distance)) {
    out.reseeded = true;
    FlipOptions reseed = opts;
    reseed.initial_point = dir.point;
    FlipResult again = closest_flip(net, x, pair, reseed);
    if (again.converged() && (!out.closest.converged() || again.distance < out.closest.distance)) {
      out.closest = std::move(again);
    }
    if (!out.closest.converged() || dir.distance < out.closest.distance) {
      out.closest = dir;
    }
  }

  const FlipResult& closest = out.closest;
  if (out.taylor && closest.converged() && out.taylor->distance > 0.0) {
    out.metrics.beta = closest.distance / out.taylor->distance;
  }
  if (dir.converged() && closest.converged() && closest.distance > 0.0) {
    out.metrics.directional_ratio = dir.distance / closest.distance;
  }
  if (out.taylor && closest.converged() && closest.distance > 0.0) {
    out.metrics.angle_deg = angle_between_deg(out.taylor->direction, closest.point - x);
  }
  return out;
}

PixelBox pixel_box(const CoefficientSelector& sel, const WaveletCoeffs& base_coeffs) {
  sel.validate(kCoeffCount);
  PixelBox box;
  const Vector zeros = Vector::Zero(static_cast<Index>(sel.size()));
  box.offset = haar3d_inverse(WaveletCoeffs{scatter_selector(zeros, sel, base_coeffs.coeffs)}).pixels;
  box.map.resize(kPixelCount, static_cast<Index>(sel.size()));
  for (std::size_t c = 0; c < sel.size(); ++c) {
    WaveletCoeffs unit;
    unit.coeffs[sel.indices[c]] = 1.0;
    box.map.col(static_cast<Index>(c)) = haar3d_inverse(unit).pixels;
  }
  return box;
}

Legitimacy check_legitimate_image(const Vector& point, const CoefficientSelector& sel,
                                  const WaveletCoeffs& base_coeffs, double tol) {
  if (point.size() != static_cast<Index>(sel.size())) {
    throw ShapeError("point has " + std::to_string(point.size()) + " features but the selector has " +
                     std::to_string(sel.size()));
  }
  const ImageTensor image = haar3d_inverse(WaveletCoeffs{scatter_selector(point, sel, base_coeffs.coeffs)});
  Legitimacy out;
  if (!image.pixels.allFinite()) {
    out.max_violation = std::numeric_limits<double>::infinity();
    return out;
  }
  out.max_violation = std::max({0.0, -image.pixels.minCoeff(), image.pixels.maxCoeff() - 1.0});
  out.legitimate = out.max_violation <= tol;
  return out;
}

}  // namespace flipbound

#pragma once

#include "flipbound/net.hpp"
#include "flipbound/qr.hpp"
#include "flipbound/wavelet.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

namespace flipbound {

enum class FlipStatus { converged, local_stationary, bracket_failed, box_exit };

std::string_view to_string(FlipStatus status);

/// Ordered class pair (i, j): the boundary z_i = z_j on which class i is
/// required to dominate every other class.
struct ClassPair {
  Index i = 0;
  Index j = 1;
};

/// Only the Euclidean norm is implemented; the tag keeps the interface open.
enum class DistanceNorm { l2 };

/// A point on (or the best attempt at) the decision boundary between a pair.
struct FlipResult {
  Vector point;
  double distance = 0.0;  // ||point - query||_2
  ClassPair pair;
  double equality_residual = 0.0;  // |softmax_i - softmax_j| at point
  double dominance_margin = 0.0;   // softmax_i - max over other classes (softmax_i when there are none)
  FlipStatus status = FlipStatus::local_stationary;
  std::optional<bool> legitimate_image;  // empty when not checked
  int outer_iterations = 0;

  bool converged() const { return status == FlipStatus::converged; }
};

/// Affine map from feature vector to pixels, pixels = offset + map * p, with
/// per-pixel bounds. Used by the optional bound-enforcing fallback.
struct PixelBox {
  Matrix map;
  Vector offset;
  double lower = 0.0;
  double upper = 1.0;
};

struct FlipOptions {
  /// Perturbed extra starts around the query; radii cycle through {1, 0.5, 1, 2}
  /// times the first solve's distance (0.1 ||x|| when it failed).
  int restarts = 4;
  int max_outer = 100;
  /// Logit-space residual required on every constraint.
  double equality_tol = 1e-8;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  /// Penalty grows when the residual falls by less than this factor.
  double sufficient_decrease = 0.25;
  std::uint64_t seed = 0;
  /// Primary start; defaults to the query itself.
  std::optional<Vector> initial_point;
  /// When set, pixel bounds become extra inequality constraints.
  std::optional<PixelBox> box;
  DistanceNorm norm = DistanceNorm::l2;
};

/// Closest point p to x with z_i(p) = z_j(p) and z_k(p) <= z_i(p) for all
/// other k. Augmented Lagrangian on the constraints with L-BFGS inner solves,
/// started at x plus perturbed restarts; the converged candidate of least
/// distance wins and is polished by bisection along the ray from x.
FlipResult closest_flip(const Network& net, const Vector& x, ClassPair pair, const FlipOptions& opts = {});

struct RayOptions {
  double t_initial = 1e-4;
  double t_max = 1e3;
  /// Bisection stops when |t_hi - t_lo| <= width_tol * max(1, t_hi).
  double width_tol = 1e-10;
  /// Points for which this returns false are outside the admissible box.
  std::function<bool(const Vector&)> feasible;
};

/// First sign change of z_i - z_j along x + t * dir / ||dir||, bracketed by
/// doubling t from t_initial and refined by bisection.
FlipResult flip_along_direction(const Network& net, const Vector& x, const Vector& dir, ClassPair pair,
                                const RayOptions& opts = {});

/// First-order estimate of the boundary distance.
struct TaylorEstimate {
  double distance = 0.0;  // |g| / ||grad g||
  Vector direction;       // -sign(g) grad g / ||grad g||
  double gap = 0.0;       // g = z_i(x) - z_j(x)
};

TaylorEstimate taylor_estimate(const Network& net, const Vector& x, ClassPair pair);

struct ComparisonMetrics {
  std::optional<double> beta;               // closest distance / Taylor distance
  std::optional<double> directional_ratio;  // distance along Taylor direction / closest distance
  std::optional<double> angle_deg;          // Taylor direction vs direction to the closest flip point
};

struct Comparison {
  std::optional<TaylorEstimate> taylor;
  FlipResult closest;
  FlipResult directional;
  ComparisonMetrics metrics;
  /// The directional probe beat the solver and the closest point was re-seeded from it.
  bool reseeded = false;
};

/// Runs the Taylor estimate, the directional probe along the Taylor
/// direction and the closest-flip solve, and assembles the metrics. The
/// reported closest distance never exceeds a converged directional find.
Comparison compare(const Network& net, const Vector& x, ClassPair pair, const FlipOptions& opts = {},
                   const RayOptions& ray = {});

/// Angle in degrees, in [0, 180]; zero vectors give 0.
double angle_between_deg(const Vector& a, const Vector& b);

struct Legitimacy {
  bool legitimate = false;
  double max_violation = 0.0;  // largest distance of a pixel outside [0, 1]
};

/// Scatters `point` into the query's coefficients at the selector positions,
/// inverts the Haar transform and checks every pixel against [-tol, 1 + tol].
Legitimacy check_legitimate_image(const Vector& point, const CoefficientSelector& sel,
                                  const WaveletCoeffs& base_coeffs, double tol = 1e-6);

/// The affine feature-to-pixel map behind check_legitimate_image.
PixelBox pixel_box(const CoefficientSelector& sel, const WaveletCoeffs& base_coeffs);

/// Softmax equality residual and dominance margin of `point` for `pair`.
void measure_flip(const Network& net, FlipResult& result);

}  // namespace flipbound

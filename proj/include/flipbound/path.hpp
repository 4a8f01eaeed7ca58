#pragma once

#include "flipbound/flip.hpp"
#include "flipbound/net.hpp"

#include <filesystem>
#include <vector>

namespace flipbound {

/// Points (1 - alpha) x1 + alpha x2 for alpha in [alpha_min, alpha_max].
struct LineSegment {
  Vector x1;
  Vector x2;
  double alpha_min = 0.0;
  double alpha_max = 1.0;

  void validate() const;
  Vector at(double alpha) const;
};

inline constexpr Index kMaxPathSamples = 1'000'000;

struct PathProfile {
  std::vector<double> alphas;  // strictly increasing
  Matrix softmax_scores;       // samples x classes
  Matrix logits;               // samples x classes
  std::vector<double> crossings;
  double step_tol = 0.0;
  bool capped = false;  // the Lipschitz step asked for more than kMaxPathSamples
};

/// Samples the segment finely enough that the logits move by at most
/// score_tol between neighbours (by the Lipschitz bound), then refines every
/// change of the winning class by bisection. alpha = 0 and alpha = 1 are
/// always sampled exactly when inside the range.
PathProfile sample_line(const Network& net, const LineSegment& seg, double score_tol = 0.01,
                        Index max_samples = kMaxPathSamples);

/// True when the segment stays classified as class_id. Walks from alpha_min
/// with steps certified by the Lipschitz bound (a step never exceeds the
/// distance at which the class margin could reach zero), but never shorter
/// than the sample_line spacing; stops at the first sample outside the class.
bool segment_stays_in_class(const Network& net, const LineSegment& seg, Index class_id, double score_tol = 0.01,
                            Index max_samples = kMaxPathSamples);

/// Refined crossing locations (alpha values) along the segment.
std::vector<double> count_crossings(const Network& net, const LineSegment& seg, double score_tol = 0.01);

/// Profile from x (alpha = 0) through the flip point (alpha = 1) to alpha = overshoot.
PathProfile profile_to_flip(const Network& net, const Vector& x, const FlipResult& flip, double overshoot = 2.0,
                            double score_tol = 0.01);

/// alpha, score_class0, score_class1, ... with a trailing comment line per crossing.
void save_profile_csv(const PathProfile& profile, const std::filesystem::path& path);

}  // namespace flipbound

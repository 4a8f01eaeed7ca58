#include "flipbound/path.hpp"

#include "flipbound/csv.hpp"
#include "flipbound/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace flipbound {

namespace {

constexpr double kCrossingWidth = 1e-10;

// Bisect the gap z_a - z_b (positive at lo, non-positive at hi), then take a
// secant step inside the final bracket.
double refine_crossing(const Network& net, const LineSegment& seg, Index a, Index b, double lo, double hi) {
  const auto gap = [&](double alpha) {
    const Vector z = logits(net, seg.at(alpha));
    return z[a] - z[b];
  };
  double g_lo = gap(lo);
  double g_hi = gap(hi);
  while (hi - lo > kCrossingWidth) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = gap(mid);
    if (g > 0.0) {
      lo = mid;
      g_lo = g;
    } else {
      hi = mid;
      g_hi = g;
    }
  }
  if (g_hi == 0.0) return hi;
  const double denom = g_lo - g_hi;
  if (!(denom > 0.0)) return 0.5 * (lo + hi);
  return std::clamp(lo + g_lo / denom * (hi - lo), lo, hi);
}

}  // namespace

void LineSegment::validate() const {
  if (x1.size() != x2.size()) throw ShapeError("segment endpoints differ in dimension");
  if (!x1.allFinite() || !x2.allFinite()) throw InvalidInput("segment endpoints must be finite");
  if (x1 == x2) throw InvalidInput("degenerate segment: x1 equals x2");
  if (!(alpha_min < alpha_max) || !std::isfinite(alpha_min) || !std::isfinite(alpha_max)) {
    throw InvalidParameter("segment needs finite alpha_min < alpha_max");
  }
}

Vector LineSegment::at(double alpha) const { return (1.0 - alpha) * x1 + alpha * x2; }

namespace {

constexpr Index kBlock = 2048;

void check_sampling(const Network& net, const LineSegment& seg, double score_tol, Index max_samples) {
  seg.validate();
  if (seg.x1.size() != net.input_dim()) throw ShapeError("segment dimension does not match the network input");
  if (!(score_tol > 0.0)) throw InvalidParameter("score_tol must be positive");
  if (max_samples < 2) throw InvalidParameter("need at least two samples");
}

// Uniform grid fine enough for the Lipschitz bound, plus alpha = 0 and 1.
std::vector<double> sample_alphas(const Network& net, const LineSegment& seg, double score_tol, Index max_samples,
                                  bool& capped) {
  const double range = seg.alpha_max - seg.alpha_min;
  const double per_alpha = lipschitz_bound(net) * (seg.x2 - seg.x1).norm();
  // Leave room for the two exact interior samples at alpha = 0 and 1.
  const double cap = static_cast<double>(max_samples - 3);
  double intervals = std::ceil(per_alpha * range / score_tol);
  if (!(intervals >= 1.0)) intervals = 1.0;
  capped = intervals > cap;
  if (capped) intervals = cap;
  const auto n = static_cast<Index>(intervals);
  std::vector<double> alphas;
  alphas.reserve(static_cast<std::size_t>(n + 3));
  for (Index k = 0; k < n; ++k) alphas.push_back(seg.alpha_min + range * static_cast<double>(k) / static_cast<double>(n));
  alphas.push_back(seg.alpha_max);
  for (double exact : {0.0, 1.0}) {
    if (exact >= seg.alpha_min && exact <= seg.alpha_max) alphas.push_back(exact);
  }
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  return alphas;
}

// Logits (classes x count) at alphas[first, first + count).
Matrix block_logits(const Network& net, const LineSegment& seg, const std::vector<double>& alphas, std::size_t first,
                    Index count) {
  Matrix points(seg.x1.size(), count);
  for (Index c = 0; c < count; ++c) points.col(c) = seg.at(alphas[first + static_cast<std::size_t>(c)]);
  return logits_batch(net, points);
}

}  // namespace

PathProfile sample_line(const Network& net, const LineSegment& seg, double score_tol, Index max_samples) {
  check_sampling(net, seg, score_tol, max_samples);
  PathProfile prof;
  prof.step_tol = score_tol;
  prof.alphas = sample_alphas(net, seg, score_tol, max_samples, prof.capped);

  const auto rows = static_cast<Index>(prof.alphas.size());
  prof.logits.resize(rows, net.class_count());
  prof.softmax_scores.resize(rows, net.class_count());
  const auto blocks = static_cast<std::size_t>((rows + kBlock - 1) / kBlock);
  parallel_for(blocks, [&](std::size_t b) {
    const Index first = static_cast<Index>(b) * kBlock;
    const Index count = std::min(kBlock, rows - first);
    const Matrix z = block_logits(net, seg, prof.alphas, static_cast<std::size_t>(first), count);
    for (Index c = 0; c < count; ++c) {
      prof.logits.row(first + c) = z.col(c).transpose();
      prof.softmax_scores.row(first + c) = softmax(z.col(c)).transpose();
    }
  });
  // The endpoints are reported exactly as a direct forward pass gives them.
  for (std::size_t r = 0; r < prof.alphas.size(); ++r) {
    if (prof.alphas[r] != 0.0 && prof.alphas[r] != 1.0) continue;
    const Evaluation e = forward(net, seg.at(prof.alphas[r]));
    prof.logits.row(static_cast<Index>(r)) = e.logits.transpose();
    prof.softmax_scores.row(static_cast<Index>(r)) = e.softmax.transpose();
  }

  Index prev = argmax(prof.logits.row(0).transpose());
  for (Index r = 1; r < rows; ++r) {
    const Index cur = argmax(prof.logits.row(r).transpose());
    if (cur != prev) {
      prof.crossings.push_back(refine_crossing(net, seg, prev, cur, prof.alphas[static_cast<std::size_t>(r - 1)],
                                               prof.alphas[static_cast<std::size_t>(r)]));
    }
    prev = cur;
  }
  return prof;
}

bool segment_stays_in_class(const Network& net, const LineSegment& seg, Index class_id, double score_tol,
                            Index max_samples) {
  check_sampling(net, seg, score_tol, max_samples);
  if (class_id < 0 || class_id >= net.class_count()) throw InvalidParameter("class id out of range");
  // The margin z_c - max_k z_k moves by at most sqrt(2) L |dp| (L bounds the
  // logit map in l2), so it cannot reach zero within margin / (sqrt(2) L) of
  // a sample. Steps never drop below the uniform sample_line spacing.
  const double range = seg.alpha_max - seg.alpha_min;
  const double per_alpha = std::sqrt(2.0) * lipschitz_bound(net) * (seg.x2 - seg.x1).norm();
  bool capped = false;
  const double floor_step = range / static_cast<double>(sample_alphas(net, seg, score_tol, max_samples, capped).size() - 1);
  double alpha = seg.alpha_min;
  while (true) {
    const Vector z = logits(net, seg.at(alpha));
    if (argmax(z) != class_id) return false;
    if (alpha >= seg.alpha_max) return true;
    double rival = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < z.size(); ++k) {
      if (k != class_id) rival = std::max(rival, z[k]);
    }
    const double margin = z[class_id] - rival;
    const double step = per_alpha > 0.0 ? std::max(floor_step, margin / per_alpha) : range;
    alpha = std::min(alpha + step, seg.alpha_max);
  }
}

std::vector<double> count_crossings(const Network& net, const LineSegment& seg, double score_tol) {
  return sample_line(net, seg, score_tol).crossings;
}

PathProfile profile_to_flip(const Network& net, const Vector& x, const FlipResult& flip, double overshoot,
                            double score_tol) {
  if (!flip.converged()) throw InvalidInput("profile_to_flip needs a converged flip point");
  if (!(overshoot >= 1.0)) throw InvalidParameter("overshoot must be at least 1");
  LineSegment seg{x, flip.point, 0.0, overshoot};
  return sample_line(net, seg, score_tol);
}

void save_profile_csv(const PathProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "alpha";
  for (Index c = 0; c < profile.softmax_scores.cols(); ++c) out << ",score_class" << c;
  out << '\n';
  for (std::size_t r = 0; r < profile.alphas.size(); ++r) {
    out << format_double(profile.alphas[r]);
    for (Index c = 0; c < profile.softmax_scores.cols(); ++c) {
      out << ',' << format_double(profile.softmax_scores(static_cast<Index>(r), c));
    }
    out << '\n';
  }
  for (double a : profile.crossings) out << "# crossing=" << format_double(a) << '\n';
  if (profile.capped) out << "# warning=sample cap reached; step exceeds the Lipschitz tolerance\n";
}

}  // namespace flipbound

#include "flipbound/adversarial.hpp"

#include "flipbound/csv.hpp"
#include "flipbound/path.hpp"
#include "flipbound/trainer.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

namespace flipbound {

namespace {

struct LossAndGrad {
  double loss;
  Vector grad;
  Index predicted;
};

LossAndGrad target_loss(const Network& net, const Vector& p, Index target) {
  const Evaluation e = forward(net, p);
  // d CE / d x = J^T (softmax - one_hot).
  const Vector coeffs = cross_entropy_logit_gradient(e.softmax, target);
  return {cross_entropy(e.softmax, target), grad_scalar_wrt_input(net, p, e, coeffs), argmax(e.softmax)};
}

void project_to_ball(Vector& p, const Vector& x, double eps) {
  const double r = (p - x).norm();
  if (r > eps) p = x + (p - x) * (eps / r);
}

}  // namespace

void AttackConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("epsilon must be positive");
  if (steps < 1) throw InvalidParameter("steps must be >= 1");
  if (!(effective_step() > 0.0)) throw InvalidParameter("step_size must be positive");
}

AttackResult constrained_loss_attack(const Network& net, const Vector& x, Index target, const AttackConfig& cfg) {
  cfg.validate();
  if (target < 0 || target >= net.class_count()) throw InvalidParameter("target class outside the network's classes");

  LossAndGrad cur = target_loss(net, x, target);
  AttackResult best;
  best.point = x;
  best.start_loss = cur.loss;
  best.final_loss = cur.loss;
  best.predicted_class = cur.predicted;
  if (cur.predicted == target) {
    best.succeeded = true;
    return best;
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  const double step = cfg.effective_step();
  Vector p = x;
  for (int it = 0; it < cfg.steps; ++it) {
    Vector dir = cur.grad;
    double norm = dir.norm();
    if (!(norm > 1e-14)) {
      // Flat spot: random direction from the seeded stream.
      for (Index k = 0; k < dir.size(); ++k) dir[k] = normal(rng);
      norm = dir.norm();
    }
    p -= (step / norm) * dir;
    project_to_ball(p, x, cfg.epsilon);
    if (cfg.on_iterate) cfg.on_iterate(p);
    cur = target_loss(net, p, target);
    if (cur.loss < best.final_loss) {
      best.point = p;
      best.final_loss = cur.loss;
      best.predicted_class = cur.predicted;
    }
  }
  best.distance = (best.point - x).norm();
  best.succeeded = best.predicted_class == target;
  return best;
}

AdversarialComparison compare_attack_vs_flip(const Network& net, const Vector& x, const AttackResult& attack,
                                             const FlipResult& flip) {
  if (!flip.converged()) throw InvalidInput("comparison needs a converged flip point");
  AdversarialComparison out;
  out.flip_distance = flip.distance;
  out.attack_distance = attack.distance;
  const Vector da = attack.point - x;
  const Vector df = flip.point - x;
  if (da.norm() > 0.0 && df.norm() > 0.0) out.angle_deg = angle_between_deg(df, da);
  if (attack.succeeded && da.norm() > 0.0) {
    const auto crossings = count_crossings(net, LineSegment{x, attack.point});
    if (!crossings.empty()) out.first_crossing_distance = crossings.front() * da.norm();
  }
  return out;
}

std::vector<HistogramBin> flip_distance_histogram(const std::vector<FlipResult>& results, double bin_width) {
  if (!(bin_width > 0.0)) throw InvalidParameter("bin width must be positive");
  std::map<long long, Index> counts;
  for (const FlipResult& r : results) {
    if (!r.converged()) throw InvalidInput("histogram needs converged flip results");
    ++counts[static_cast<long long>(std::floor(r.distance / bin_width))];
  }
  std::vector<HistogramBin> bins;
  for (const auto& [k, n] : counts) {
    bins.push_back({static_cast<double>(k) * bin_width, static_cast<double>(k + 1) * bin_width, n});
  }
  return bins;
}

void save_attack_csv(const std::vector<AttackRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "id,epsilon,succeeded,attack_distance,flip_distance,first_crossing_distance,angle_deg\n";
  for (const AttackRow& r : rows) {
    out << r.id << ',' << format_double(r.epsilon) << ',' << (r.attack.succeeded ? 1 : 0) << ','
        << format_double(r.comparison.attack_distance) << ',' << format_double(r.comparison.flip_distance) << ','
        << format_optional(r.comparison.first_crossing_distance) << ',' << format_optional(r.comparison.angle_deg)
        << '\n';
  }
}

void save_histogram_csv(const std::vector<HistogramBin>& bins, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "bin_low,bin_high,count\n";
  for (const HistogramBin& b : bins) out << format_double(b.low) << ',' << format_double(b.high) << ',' << b.count << '\n';
}

}  // namespace flipbound

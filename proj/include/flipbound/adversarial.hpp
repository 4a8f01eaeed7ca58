#pragma once

#include "flipbound/flip.hpp"
#include "flipbound/net.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flipbound {

struct AttackConfig {
  double epsilon = 0.5;
  int steps = 500;
  std::optional<double> step_size;  // defaults to epsilon / 50
  std::uint64_t seed = 0;
  std::function<void(const Vector&)> on_iterate;  // sees every projected iterate

  void validate() const;
  double effective_step() const { return step_size.value_or(epsilon / 50.0); }
};

struct AttackResult {
  Vector point;
  double distance = 0.0;
  Index predicted_class = 0;
  bool succeeded = false;
  double final_loss = 0.0;
  double start_loss = 0.0;
};

/// Projected gradient descent on cross_entropy(softmax(p), target) over the
/// ball ||p - x||_2 <= epsilon. Steps move a fixed length along the
/// normalized negative gradient; the best iterate by loss is returned.
AttackResult constrained_loss_attack(const Network& net, const Vector& x, Index target, const AttackConfig& cfg);

struct AdversarialComparison {
  double flip_distance = 0.0;
  double attack_distance = 0.0;
  std::optional<double> first_crossing_distance;  // only for successful attacks
  std::optional<double> angle_deg;                // needs both displacements nonzero
};

AdversarialComparison compare_attack_vs_flip(const Network& net, const Vector& x, const AttackResult& attack,
                                             const FlipResult& flip);

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  Index count = 0;
};

/// Fixed-width bins from 0; only non-empty bins are emitted, in order.
std::vector<HistogramBin> flip_distance_histogram(const std::vector<FlipResult>& results, double bin_width);

struct AttackRow {
  std::string id;
  double epsilon = 0.0;
  AttackResult attack;
  AdversarialComparison comparison;
};

/// id, epsilon, succeeded, attack_distance, flip_distance, first_crossing_distance, angle_deg
void save_attack_csv(const std::vector<AttackRow>& rows, const std::filesystem::path& path);
void save_histogram_csv(const std::vector<HistogramBin>& bins, const std::filesystem::path& path);

}  // namespace flipbound

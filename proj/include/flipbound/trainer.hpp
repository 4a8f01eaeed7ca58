#pragma once

#include "flipbound/features.hpp"
#include "flipbound/net.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace flipbound {

struct TrainConfig {
  double learning_rate = 0.001;
  double dropout_rate = 0.5;
  int epochs = 100;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool train_sigma = true;

  void validate() const;
};

inline constexpr double kSigmaFloor = 1e-3;

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

// Loss went non-finite; `epoch` is zero-based.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, const std::string& what) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

double cross_entropy(const Vector& softmax, Index label);
// d loss / d logits = softmax - one_hot(label).
Vector cross_entropy_logit_gradient(const Vector& softmax, Index label);

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam(Index size, const TrainConfig& cfg);
  void step(Vector& params, const Vector& grad);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

// Scaled-uniform (Glorot) weights, zero biases, every sigma = `sigma`.
Network init_network(const std::vector<Index>& widths, double sigma, std::uint64_t seed);

// Flat parameter layout: per layer weights (column-major), bias, then sigma
// for hidden layers. The output layer's sigma is not a parameter.
Vector flatten_parameters(const Network& net);
void unflatten_parameters(const Vector& params, Network& net);

// Mean cross-entropy over rows of `features` and its gradient in the flat
// layout. With `dropout_rate` > 0 the given rng draws inverted-dropout masks.
double batch_loss_gradient(const Network& net, const Matrix& features, const std::vector<int>& labels,
                           Vector& grad, double dropout_rate = 0.0, std::mt19937_64* rng = nullptr);

struct TrainResult {
  Network net;
  TrainReport report;
};

TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg, const Dataset* test = nullptr);

// Ties go to the lower class id.
double evaluate_accuracy(const Network& net, const Dataset& data);

void save_train_report_csv(const TrainReport& report, const std::filesystem::path& path);

}  // namespace flipbound

#include "flipbound/trainer.hpp"

#include "flipbound/csv.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace flipbound {

namespace {

constexpr double kTwoOverSqrtPi = 2.0 * std::numbers::inv_sqrtpi;

void check_label(Index label, Index classes) {
  if (label < 0 || label >= classes) {
    throw InvalidParameter("label " + std::to_string(label) + " outside 0.." + std::to_string(classes - 1));
  }
}

Index parameter_count(const Network& net) {
  Index n = 0;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Layer& layer = net.layer(l);
    n += layer.weights.size() + layer.bias.size() + (l + 1 < net.layer_count() ? 1 : 0);
  }
  return n;
}

// Uniform in [0, 1) from the top 53 bits; libstdc++-independent.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidParameter("learning_rate must be > 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidParameter("dropout_rate must lie in [0, 1)");
  if (epochs < 0) throw InvalidParameter("epochs must be >= 0");
  if (batch_size < 1) throw InvalidParameter("batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidParameter("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidParameter("adam_eps must be > 0");
}

double cross_entropy(const Vector& softmax, Index label) {
  check_label(label, softmax.size());
  return -std::log(std::max(softmax[label], 1e-300));
}

Vector cross_entropy_logit_gradient(const Vector& softmax, Index label) {
  check_label(label, softmax.size());
  Vector g = softmax;
  g[label] -= 1.0;
  return g;
}

Adam::Adam(Index size, const TrainConfig& cfg)
    : lr_(cfg.learning_rate),
      b1_(cfg.adam_beta1),
      b2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      m_(Vector::Zero(size)),
      v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("Adam parameter size mismatch");
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (Index k = 0; k < params.size(); ++k) {
    params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

Network init_network(const std::vector<Index>& widths, double sigma, std::uint64_t seed) {
  Network net = Network::zeros(widths, sigma);
  std::mt19937_64 rng(seed);
  for (Layer& layer : net.mutable_layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (Index c = 0; c < layer.weights.cols(); ++c) {
      for (Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = limit * (2.0 * unit_uniform(rng) - 1.0);
    }
  }
  return net;
}

Vector flatten_parameters(const Network& net) {
  Vector p(parameter_count(net));
  Index at = 0;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Layer& layer = net.layer(l);
    p.segment(at, layer.weights.size()) = layer.weights.reshaped();
    at += layer.weights.size();
    p.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
    if (l + 1 < net.layer_count()) p[at++] = layer.sigma;
  }
  return p;
}

void unflatten_parameters(const Vector& params, Network& net) {
  if (params.size() != parameter_count(net)) throw ShapeError("parameter vector does not match the network");
  Index at = 0;
  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Layer& layer = layers[l];
    layer.weights.reshaped() = params.segment(at, layer.weights.size());
    at += layer.weights.size();
    layer.bias = params.segment(at, layer.bias.size());
    at += layer.bias.size();
    if (l + 1 < layers.size()) layer.sigma = params[at++];
  }
}

double batch_loss_gradient(const Network& net, const Matrix& features, const std::vector<int>& labels,
                           Vector& grad, double dropout_rate, std::mt19937_64* rng) {
  const Index batch = features.rows();
  if (static_cast<std::size_t>(batch) != labels.size()) throw ShapeError("features and labels disagree in length");
  if (features.cols() != net.input_dim()) throw ShapeError("feature width does not match the network input");
  if (dropout_rate > 0.0 && rng == nullptr) throw InvalidParameter("dropout needs a random stream");
  const std::size_t count = net.layer_count();
  const double keep = 1.0 - dropout_rate;

  // Columns are samples.
  std::vector<Matrix> inputs(count);  // input to each layer (after dropout)
  std::vector<Matrix> pre(count);     // preactivations
  std::vector<Matrix> masks(count);   // scaled dropout masks on hidden outputs
  Matrix a = features.transpose();
  for (std::size_t l = 0; l < count; ++l) {
    const Layer& layer = net.layer(l);
    inputs[l] = a;
    pre[l] = (layer.weights * a).colwise() + layer.bias;
    if (l + 1 == count) break;
    a = (pre[l] / layer.sigma).unaryExpr([](double u) { return std::erf(u); });
    if (dropout_rate > 0.0) {
      masks[l].resize(a.rows(), a.cols());
      for (Index c = 0; c < a.cols(); ++c) {
        for (Index r = 0; r < a.rows(); ++r) masks[l](r, c) = unit_uniform(*rng) < keep ? 1.0 / keep : 0.0;
      }
      a = a.cwiseProduct(masks[l]);
    }
  }

  // Softmax and loss per column.
  Matrix delta = pre.back();
  double loss = 0.0;
  for (Index c = 0; c < batch; ++c) {
    const Vector s = softmax(delta.col(c));
    const Index label = labels[static_cast<std::size_t>(c)];
    loss += cross_entropy(s, label);
    delta.col(c) = cross_entropy_logit_gradient(s, label);
  }
  const double inv = 1.0 / static_cast<double>(batch);
  loss *= inv;
  delta *= inv;

  grad.resize(parameter_count(net));
  // Offsets of each layer's block in the flat layout.
  std::vector<Index> offset(count);
  for (std::size_t l = 0, at = 0; l < count; ++l) {
    offset[l] = static_cast<Index>(at);
    const Layer& layer = net.layer(l);
    at += static_cast<std::size_t>(layer.weights.size() + layer.bias.size()) + (l + 1 < count ? 1 : 0);
  }
  for (std::size_t l = count; l-- > 0;) {
    const Layer& layer = net.layer(l);
    const Matrix dw = delta * inputs[l].transpose();
    Index at = offset[l];
    grad.segment(at, dw.size()) = dw.reshaped();
    at += dw.size();
    grad.segment(at, layer.bias.size()) = delta.rowwise().sum();
    if (l == 0) break;
    const Layer& prev = net.layer(l - 1);
    Matrix dh = layer.weights.transpose() * delta;
    if (dropout_rate > 0.0) dh = dh.cwiseProduct(masks[l - 1]);
    const Matrix u = pre[l - 1] / prev.sigma;
    const Matrix shape = (kTwoOverSqrtPi * (-u.array().square()).exp()).matrix();  // d erf(u)/du
    const Matrix du = dh.cwiseProduct(shape);
    // dsigma: du/dsigma = -u / sigma.
    grad[offset[l] - 1] = -(du.cwiseProduct(u)).sum() / prev.sigma;
    delta = du / prev.sigma;
  }
  return loss;
}

TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg, const Dataset* test) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw InvalidInput("training dataset is empty");
  if (data.feature_dim() != net.input_dim()) {
    throw ShapeError("dataset has " + std::to_string(data.feature_dim()) + " features, network expects " +
                     std::to_string(net.input_dim()));
  }

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 mask_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainResult out{std::move(net), {}};
  Vector params = flatten_parameters(out.net);
  Adam adam(params.size(), cfg);

  // Sigma entries in the flat layout.
  std::vector<Index> sigma_slots;
  for (std::size_t l = 0, at = 0; l < out.net.layer_count(); ++l) {
    const Layer& layer = out.net.layer(l);
    at += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    if (l + 1 < out.net.layer_count()) sigma_slots.push_back(static_cast<Index>(at++));
  }

  const Index n = data.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  Matrix batch_x;
  std::vector<int> batch_y;
  Vector grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(shuffle_rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    double total = 0.0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index size = std::min<Index>(cfg.batch_size, n - start);
      batch_x.resize(size, data.feature_dim());
      batch_y.resize(static_cast<std::size_t>(size));
      for (Index k = 0; k < size; ++k) {
        const Index row = order[static_cast<std::size_t>(start + k)];
        batch_x.row(k) = data.features.row(row);
        batch_y[static_cast<std::size_t>(k)] = data.labels[static_cast<std::size_t>(row)];
      }
      const double loss = batch_loss_gradient(out.net, batch_x, batch_y, grad, cfg.dropout_rate, &mask_rng);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingDiverged(epoch, "training diverged (non-finite loss) in epoch " + std::to_string(epoch));
      }
      total += loss * static_cast<double>(size);
      if (!cfg.train_sigma) {
        for (Index s : sigma_slots) grad[s] = 0.0;
      }
      adam.step(params, grad);
      for (Index s : sigma_slots) params[s] = std::max(params[s], kSigmaFloor);
      unflatten_parameters(params, out.net);
    }
    out.report.epoch_loss.push_back(total / static_cast<double>(n));
  }

  out.report.train_accuracy = evaluate_accuracy(out.net, data);
  if (test != nullptr) out.report.test_accuracy = evaluate_accuracy(out.net, *test);
  return out;
}

double evaluate_accuracy(const Network& net, const Dataset& data) {
  data.validate();
  if (data.size() == 0) return 0.0;
  if (data.feature_dim() != net.input_dim()) throw ShapeError("dataset width does not match the network input");
  Index correct = 0;
  for (Index i = 0; i < data.size(); ++i) {
    if (argmax(forward(net, data.features.row(i).transpose()).softmax) == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_train_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    out << e << ',' << format_double(report.epoch_loss[e]) << '\n';
  }
  out << "# train_accuracy=" << format_double(report.train_accuracy) << '\n';
  if (report.test_accuracy) out << "# test_accuracy=" << format_double(*report.test_accuracy) << '\n';
}

}  // namespace flipbound

#include "flipbound/net.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace flipbound {

namespace {

constexpr double kTwoOverSqrtPi = 2.0 * std::numbers::inv_sqrtpi;

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    std::ostringstream msg;
    msg << "activation sigma must be positive and finite, got " << sigma;
    throw InvalidParameter(msg.str());
  }
}

void check_input(const Network& net, const Vector& x) {
  if (net.empty()) throw ShapeError("network has no layers");
  if (x.size() != net.input_dim()) {
    std::ostringstream msg;
    msg << "input has dimension " << x.size() << ", network expects " << net.input_dim();
    throw ShapeError(msg.str());
  }
  if (!x.allFinite()) throw InvalidInput("input contains non-finite values");
}

}  // namespace

double activation_erf(double y, double sigma) {
  check_sigma(sigma);
  return std::erf(y / sigma);
}

double activation_erf_derivative(double y, double sigma) {
  check_sigma(sigma);
  const double u = y / sigma;
  return kTwoOverSqrtPi / sigma * std::exp(-u * u);
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

Network Network::zeros(const std::vector<Index>& widths, double sigma) {
  if (widths.size() < 2) throw ShapeError("need at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    layer.weights = Matrix::Zero(widths[l + 1], widths[l]);
    layer.bias = Vector::Zero(widths[l + 1]);
    layer.sigma = l + 2 == widths.size() ? 1.0 : sigma;
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

void Network::validate() const {
  if (layers_.empty()) throw ShapeError("network has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.weights.rows() < 1 || layer.weights.cols() < 1) {
      throw ShapeError("layer " + std::to_string(l) + " has an empty weight matrix");
    }
    if (layer.bias.size() != layer.weights.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " bias does not match weight rows");
    }
    if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim()) {
      throw ShapeError("layer " + std::to_string(l) + " input width does not chain");
    }
    check_sigma(layer.sigma);
  }
}

std::vector<Index> Network::widths() const {
  std::vector<Index> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const Layer& layer : layers_) w.push_back(layer.out_dim());
  return w;
}

bool operator==(const Network& a, const Network& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    const Layer& x = a.layers_[l];
    const Layer& y = b.layers_[l];
    if (x.weights.rows() != y.weights.rows() || x.weights.cols() != y.weights.cols()) return false;
    if (x.weights != y.weights || x.bias != y.bias || x.sigma != y.sigma) return false;
  }
  return true;
}

Vector softmax(const Vector& z) {
  const double top = z.maxCoeff();
  Vector e = (z.array() - top).exp().matrix();
  return e / e.sum();
}

Evaluation forward(const Network& net, const Vector& x) {
  check_input(net, x);
  Evaluation eval;
  eval.preactivations.reserve(net.layer_count());
  Vector a = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Vector y = layers[l].weights * a + layers[l].bias;
    if (l + 1 < layers.size()) {
      const double inv_sigma = 1.0 / layers[l].sigma;
      a = y.unaryExpr([inv_sigma](double v) { return std::erf(v * inv_sigma); });
    }
    eval.preactivations.push_back(std::move(y));
  }
  eval.logits = eval.preactivations.back();
  eval.softmax = softmax(eval.logits);
  return eval;
}

Matrix logits_batch(const Network& net, const Matrix& inputs) {
  if (net.empty()) throw ShapeError("empty network");
  if (inputs.rows() != net.input_dim()) throw ShapeError("batch rows do not match the network input");
  Matrix a = inputs;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const double inv_sigma = 1.0 / layers[l].sigma;
    Matrix y = layers[l].weights * a;
    y.colwise() += layers[l].bias;
    a = y.unaryExpr([inv_sigma](double v) { return std::erf(v * inv_sigma); });
  }
  Matrix z = layers.back().weights * a;
  z.colwise() += layers.back().bias;
  return z;
}

Vector logits(const Network& net, const Vector& x) {
  check_input(net, x);
  Vector a = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const double inv_sigma = 1.0 / layers[l].sigma;
    a = (layers[l].weights * a + layers[l].bias).unaryExpr([inv_sigma](double v) {
      return std::erf(v * inv_sigma);
    });
  }
  return layers.back().weights * a + layers.back().bias;
}

Vector grad_scalar_wrt_input(const Network& net, const Vector& x, const Vector& coeffs) {
  return grad_scalar_wrt_input(net, x, forward(net, x), coeffs);
}

Vector grad_scalar_wrt_input(const Network& net, const Vector& x, const Evaluation& eval,
                             const Vector& coeffs) {
  check_input(net, x);
  if (coeffs.size() != net.class_count()) {
    throw ShapeError("coefficient vector length " + std::to_string(coeffs.size()) +
                     " does not match class count " + std::to_string(net.class_count()));
  }
  const auto& layers = net.layers();
  // Adjoint of the output layer's input activation.
  Vector adj = layers.back().weights.transpose() * coeffs;
  for (std::size_t l = layers.size() - 1; l-- > 0;) {
    const double sigma = layers[l].sigma;
    const double scale = kTwoOverSqrtPi / sigma;
    const Vector& y = eval.preactivations[l];
    Vector dy = adj.binaryExpr(y, [sigma, scale](double g, double v) {
      const double u = v / sigma;
      return g * scale * std::exp(-u * u);
    });
    adj = layers[l].weights.transpose() * dy;
  }
  return adj;
}

double spectral_norm(const Matrix& w) {
  if (w.size() == 0) return 0.0;
  // Fixed pseudo-random start so the result is reproducible and a start
  // orthogonal to the dominant singular vector is vanishingly unlikely.
  std::mt19937_64 rng(0x5eed5eedULL);
  std::normal_distribution<double> gauss;
  Vector v(w.cols());
  for (Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
  v.normalize();

  double estimate = 0.0;
  for (int iter = 0; iter < 10'000; ++iter) {
    Vector u = w.transpose() * (w * v);
    const double norm = u.norm();
    if (norm == 0.0) return 0.0;
    // Rayleigh quotient of W^T W at unit v equals ||W v||^2.
    const double next = std::sqrt(v.dot(u));
    v = u / norm;
    if (iter > 0 && std::abs(next - estimate) <= 1e-10 * next) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return (w * v).norm();
}

double lipschitz_bound(const Network& net) {
  double bound = 1.0;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    bound *= spectral_norm(layers[l].weights);
    if (l + 1 < layers.size()) bound *= kTwoOverSqrtPi / layers[l].sigma;
  }
  return bound;
}

Index argmax(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace flipbound

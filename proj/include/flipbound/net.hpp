#pragma once

#include "flipbound/types.hpp"

#include <vector>

namespace flipbound {

/// Tunable error-function activation erf(y / sigma).
double activation_erf(double y, double sigma);

/// d/dy erf(y / sigma) = 2 / (sigma sqrt(pi)) exp(-(y / sigma)^2).
double activation_erf_derivative(double y, double sigma);

/// One fully connected layer. Hidden layers apply erf(y / sigma) to the
/// preactivation y = W a + b; the output layer ignores sigma and emits logits.
struct Layer {
  Matrix weights;  // n_out x n_in
  Vector bias;     // n_out
  double sigma = 1.0;

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }
};

/// Feedforward erf network with a linear output layer feeding softmax.
///
/// The layer list is validated on construction: dimensions must chain,
/// every sigma must be positive and finite, and there must be at least one
/// (output) layer. Evaluation is const and safe to share across threads.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  /// Zero-initialized network with the given widths: {input, hidden..., classes}.
  static Network zeros(const std::vector<Index>& widths, double sigma = 1.0);

  Index input_dim() const { return layers_.front().in_dim(); }
  Index class_count() const { return layers_.back().out_dim(); }
  std::size_t layer_count() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t l) const { return layers_[l]; }

  /// Mutable access for the trainer. Callers must keep shapes intact and
  /// sigma positive; validate() re-checks.
  std::vector<Layer>& mutable_layers() { return layers_; }
  void validate() const;

  /// Widths {input, layer 1 out, ..., classes}.
  std::vector<Index> widths() const;

  friend bool operator==(const Network& a, const Network& b);

 private:
  std::vector<Layer> layers_;
};

struct Evaluation {
  Vector logits;
  Vector softmax;
  /// Preactivation y of every layer, output layer last (equal to logits).
  std::vector<Vector> preactivations;
};

/// Numerically stable softmax.
Vector softmax(const Vector& logits);

Evaluation forward(const Network& net, const Vector& x);

/// Logits of many inputs at once: column c of the result belongs to column c
/// of `inputs`. Matrix products make this much faster than repeated calls;
/// results agree with logits() to rounding, not bit for bit.
Matrix logits_batch(const Network& net, const Matrix& inputs);

/// Logits only; same arithmetic as forward().
Vector logits(const Network& net, const Vector& x);

/// Gradient of coeffs . z(x) with respect to x, by reverse-mode
/// differentiation. coeffs = e_i - e_j yields the logit-gap gradient.
Vector grad_scalar_wrt_input(const Network& net, const Vector& x, const Vector& coeffs);

/// Same as above, reusing an evaluation already computed at x.
Vector grad_scalar_wrt_input(const Network& net, const Vector& x, const Evaluation& eval,
                             const Vector& coeffs);

/// Largest singular value by power iteration on W^T W.
double spectral_norm(const Matrix& w);

/// Upper bound on the Lipschitz constant of the logit map x -> z(x):
/// prod over hidden layers of ||W_l||_2 * 2 / (sigma_l sqrt(pi)), times ||W_out||_2.
double lipschitz_bound(const Network& net);

/// Index of the largest entry; ties go to the lower index.
Index argmax(const Vector& v);

}  // namespace flipbound

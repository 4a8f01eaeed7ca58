#pragma once

#include "flipbound/types.hpp"

#include <vector>

namespace flipbound {

/// Householder QR with greedy column pivoting, A P = Q R.
///
/// Q is kept implicitly as the reflectors (v_i, tau_i) with
/// H_i = I - tau_i v_i v_i^T acting on rows i.. of the working matrix.
struct PivotedQr {
  std::vector<Index> pivots;  // full permutation of the n columns; first `steps` are chosen
  Matrix r;                   // steps x n, upper trapezoidal, columns in pivot order
  Matrix reflectors;          // m x steps, column i holds v_i in rows i..m-1
  Vector tau;                 // steps

  Index steps() const { return tau.size(); }
  Vector diagonal() const { return r.diagonal(); }

  /// Thin Q (m x steps), formed from the reflectors.
  Matrix thin_q() const;
};

/// Runs at most `max_steps` Householder steps (default: min(m, n)). At each
/// step the remaining column with the largest trailing 2-norm is pivoted in;
/// norms equal within a relative 1e-14 resolve to the lower original index.
PivotedQr qr_pivoted(Matrix a, Index max_steps = -1);

/// Ordered positions into the 4096 wavelet coefficients, most significant first.
struct CoefficientSelector {
  std::vector<Index> indices;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  /// Distinct and within [0, limit).
  void validate(Index limit) const;

  friend bool operator==(const CoefficientSelector&, const CoefficientSelector&) = default;
};

/// First k pivot columns of the pivoted QR of the n_train x 4096 coefficient matrix.
CoefficientSelector select_coefficients(Matrix coeff_matrix, Index k);

/// Gathers the selected entries in selector order.
Vector apply_selector(const Vector& coeffs, const CoefficientSelector& sel);

/// Writes `values` into a copy of `base` at the selector positions.
Vector scatter_selector(const Vector& values, const CoefficientSelector& sel, const Vector& base);

/// One index per line, pivot order.
void save_selector(const CoefficientSelector& sel, const std::string& path);
CoefficientSelector load_selector(const std::string& path);

}  // namespace flipbound

#include "flipbound/qr.hpp"

#include "flipbound/wavelet.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace flipbound {

Matrix PivotedQr::thin_q() const {
  const Index m = reflectors.rows();
  const Index s = steps();
  Matrix q = Matrix::Identity(m, s);
  for (Index i = s; i-- > 0;) {
    const auto v = reflectors.col(i).tail(m - i);
    auto block = q.bottomRows(m - i);
    const Eigen::RowVectorXd w = v.transpose() * block;
    block.noalias() -= tau[i] * v * w;
  }
  return q;
}

PivotedQr qr_pivoted(Matrix a, Index max_steps) {
  const Index m = a.rows();
  const Index n = a.cols();
  if (m < 1 || n < 1) throw ShapeError("pivoted QR needs a non-empty matrix");
  if (!a.allFinite()) throw InvalidInput("pivoted QR input contains non-finite entries");
  const Index full = std::min(m, n);
  const Index steps = max_steps < 0 ? full : std::min(max_steps, full);

  PivotedQr out;
  out.pivots.resize(static_cast<std::size_t>(n));
  std::iota(out.pivots.begin(), out.pivots.end(), Index{0});
  out.reflectors = Matrix::Zero(m, steps);
  out.tau = Vector::Zero(steps);

  Vector norms(n);
  for (Index i = 0; i < steps; ++i) {
    // Trailing column norms of the deflated matrix.
    norms.tail(n - i) = a.bottomRightCorner(m - i, n - i).colwise().norm().transpose();

    const double cutoff = norms.tail(n - i).maxCoeff() * (1.0 - 1e-14);
    Index best = -1;
    for (Index j = i; j < n; ++j) {
      if (norms[j] >= cutoff && (best < 0 || out.pivots[j] < out.pivots[best])) best = j;
    }
    if (best != i) {
      a.col(i).swap(a.col(best));
      std::swap(out.pivots[i], out.pivots[best]);
      std::swap(norms[i], norms[best]);
    }

    auto x = a.col(i).tail(m - i);
    const double xnorm = x.norm();
    if (xnorm == 0.0) {
      out.tau[i] = 0.0;
      continue;
    }
    const double alpha = x[0] > 0 ? -xnorm : xnorm;
    Vector v = x;
    v[0] -= alpha;
    const double vv = v.squaredNorm();
    const double tau = 2.0 / vv;
    out.reflectors.col(i).tail(m - i) = v;
    out.tau[i] = tau;

    x.setZero();
    x[0] = alpha;
    if (i + 1 < n) {
      auto trailing = a.bottomRightCorner(m - i, n - i - 1);
      const Eigen::RowVectorXd w = v.transpose() * trailing;
      trailing.noalias() -= tau * v * w;
    }
  }

  out.r = a.topRows(steps).triangularView<Eigen::Upper>();
  return out;
}

void CoefficientSelector::validate(Index limit) const {
  std::unordered_set<Index> seen;
  for (Index idx : indices) {
    if (idx < 0 || idx >= limit) {
      throw InvalidParameter("selector index " + std::to_string(idx) + " out of range");
    }
    if (!seen.insert(idx).second) {
      throw InvalidParameter("selector index " + std::to_string(idx) + " repeated");
    }
  }
}

CoefficientSelector select_coefficients(Matrix coeff_matrix, Index k) {
  const Index limit = std::min(coeff_matrix.rows(), coeff_matrix.cols());
  if (k < 0 || k > limit) {
    std::ostringstream msg;
    msg << "cannot select " << k << " coefficients from a " << coeff_matrix.rows() << " x "
        << coeff_matrix.cols() << " matrix";
    throw InvalidParameter(msg.str());
  }
  CoefficientSelector sel;
  if (k == 0) return sel;
  const PivotedQr qr = qr_pivoted(std::move(coeff_matrix), k);
  sel.indices.assign(qr.pivots.begin(), qr.pivots.begin() + k);
  return sel;
}

Vector apply_selector(const Vector& coeffs, const CoefficientSelector& sel) {
  Vector out(static_cast<Index>(sel.size()));
  for (std::size_t i = 0; i < sel.size(); ++i) {
    const Index idx = sel.indices[i];
    if (idx < 0 || idx >= coeffs.size()) throw ShapeError("selector index outside coefficient vector");
    out[static_cast<Index>(i)] = coeffs[idx];
  }
  return out;
}

Vector scatter_selector(const Vector& values, const CoefficientSelector& sel, const Vector& base) {
  if (values.size() != static_cast<Index>(sel.size())) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match selector size " +
                     std::to_string(sel.size()));
  }
  Vector out = base;
  for (std::size_t i = 0; i < sel.size(); ++i) {
    const Index idx = sel.indices[i];
    if (idx < 0 || idx >= out.size()) throw ShapeError("selector index outside coefficient vector");
    out[idx] = values[static_cast<Index>(i)];
  }
  return out;
}

void save_selector(const CoefficientSelector& sel, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (Index idx : sel.indices) out << idx << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

CoefficientSelector load_selector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open selector file " + path);
  CoefficientSelector sel;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    long long idx = 0;
    std::string rest;
    if (!(fields >> idx) || (fields >> rest)) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected one integer index");
    }
    sel.indices.push_back(static_cast<Index>(idx));
  }
  try {
    sel.validate(kCoeffCount);
  } catch (const InvalidParameter& e) {
    throw FormatError(path + ": " + e.what());
  }
  return sel;
}

}  // namespace flipbound

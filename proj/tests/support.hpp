#pragma once

#include "flipbound/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace flipbound::testing {

/// Random erf network with the given widths, weights N(0, scale^2 / n_in).
inline Network random_net(const std::vector<Index>& widths, std::mt19937_64& rng, double sigma_lo = 0.5,
                          double sigma_hi = 2.0, double scale = 1.0) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> sig(sigma_lo, sigma_hi);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    layer.weights.resize(widths[l + 1], widths[l]);
    for (Index i = 0; i < layer.weights.size(); ++i) {
      layer.weights.data()[i] = gauss(rng) * scale / std::sqrt(static_cast<double>(widths[l]));
    }
    layer.bias.resize(widths[l + 1]);
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.3 * gauss(rng);
    layer.sigma = l + 2 == widths.size() ? 1.0 : sig(rng);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

/// Single linear layer: logits = W x + b.
inline Network linear_net(const Matrix& w, const Vector& b) {
  Layer layer;
  layer.weights = w;
  layer.bias = b;
  return Network({layer});
}

inline Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * gauss(rng);
  return v;
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  return m;
}

/// Central finite-difference gradient of f at x.
template <class F>
Vector central_difference(F&& f, const Vector& x, double step) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector hi = x;
    Vector lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

/// erf by its Maclaurin series; accurate to ~1e-15 for |x| <= 3.
inline double erf_series(double x) {
  double term = x;
  double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const double add = term / (2 * n + 1);
    sum += add;
    if (std::abs(add) < 1e-18) break;
  }
  return sum * 2.0 / std::sqrt(std::acos(-1.0));
}

}  // namespace flipbound::testing

namespace flipbound::testing {

/// Logit gap z0 - z1 of a {2, H, 2} erf network by plain scalar loops.
inline double toy_gap(const Network& net, double u, double v) {
  const Layer& h = net.layer(0);
  const Layer& o = net.layer(1);
  double z0 = o.bias[0];
  double z1 = o.bias[1];
  for (Index k = 0; k < h.out_dim(); ++k) {
    const double a = std::erf((h.weights(k, 0) * u + h.weights(k, 1) * v + h.bias[k]) / h.sigma);
    z0 += o.weights(0, k) * a;
    z1 += o.weights(1, k) * a;
  }
  return z0 - z1;
}

/// Distance from (x0, x1) to the zero set of toy_gap inside [lo, hi]^2,
/// found by scanning every grid edge for a sign change and bisecting the
/// closest few crossings to full precision. Returns +inf if none exist.
inline double grid_boundary_distance(const Network& net, double x0, double x1, double lo, double hi, double step) {
  const long n = std::lround((hi - lo) / step) + 1;
  std::vector<double> gap(static_cast<std::size_t>(n * n));
  auto coord = [&](long i) { return lo + step * static_cast<double>(i); };
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) gap[static_cast<std::size_t>(i * n + j)] = toy_gap(net, coord(i), coord(j));
  }
  struct Edge {
    double d;
    double ua, va, ub, vb;
  };
  std::vector<Edge> edges;
  auto consider = [&](double ua, double va, double ga, double ub, double vb, double gb) {
    if ((ga > 0) == (gb > 0) && ga != 0 && gb != 0) return;
    const double t = ga / (ga - gb);
    const double u = ua + t * (ub - ua);
    const double v = va + t * (vb - va);
    edges.push_back({std::hypot(u - x0, v - x1), ua, va, ub, vb});
  };
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      const double g = gap[static_cast<std::size_t>(i * n + j)];
      if (i + 1 < n) consider(coord(i), coord(j), g, coord(i + 1), coord(j), gap[static_cast<std::size_t>((i + 1) * n + j)]);
      if (j + 1 < n) consider(coord(i), coord(j), g, coord(i), coord(j + 1), gap[static_cast<std::size_t>(i * n + j + 1)]);
    }
  }
  if (edges.empty()) return std::numeric_limits<double>::infinity();
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.d < b.d; });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < std::min<std::size_t>(edges.size(), 16); ++e) {
    double a = 0.0;
    double b = 1.0;
    const Edge& ed = edges[e];
    auto g_at = [&](double t) { return toy_gap(net, ed.ua + t * (ed.ub - ed.ua), ed.va + t * (ed.vb - ed.va)); };
    const double ga = g_at(0.0);
    for (int it = 0; it < 60; ++it) {
      const double m = 0.5 * (a + b);
      if ((g_at(m) > 0) == (ga > 0)) {
        a = m;
      } else {
        b = m;
      }
    }
    const double t = 0.5 * (a + b);
    best = std::min(best, std::hypot(ed.ua + t * (ed.ub - ed.ua) - x0, ed.va + t * (ed.vb - ed.va) - x1));
  }
  return best;
}

}  // namespace flipbound::testing

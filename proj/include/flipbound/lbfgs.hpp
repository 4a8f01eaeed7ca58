#pragma once

#include "flipbound/types.hpp"

#include <functional>

namespace flipbound {

/// Returns f(x) and writes the gradient into `grad` (already sized).
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 5000;
  /// Stop when ||grad||_inf <= gradient_tol.
  double gradient_tol = 1e-10;
  /// Stop after two consecutive steps with relative decrease below this.
  double function_tol = 1e-15;
};

enum class LbfgsStop { gradient, function, max_iterations, line_search };

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStop stop = LbfgsStop::max_iterations;
};

/// Limited-memory BFGS with a strong-Wolfe line search (c1 = 1e-4, c2 = 0.9).
LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, const LbfgsOptions& opts = {});

}  // namespace flipbound

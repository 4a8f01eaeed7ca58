#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace flipbound {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Dimension mismatch between a network, a vector, or a matrix.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that is well-shaped but unusable (non-finite, wrong class, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file or byte stream.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flipbound

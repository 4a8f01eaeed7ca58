#include "flipbound/net.hpp"

#include "support.hpp"

#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>

using namespace flipbound;
using flipbound::testing::central_difference;
using flipbound::testing::random_net;
using flipbound::testing::random_vector;

TEST_CASE("activation_erf basic values") {
  CHECK(activation_erf(0.0, 1.0) == 0.0);
  // Series oracle with far more than 10 terms.
  const double oracle = flipbound::testing::erf_series(1.0);
  CHECK(oracle == doctest::Approx(0.8427007929).epsilon(1e-10));
  CHECK(std::abs(activation_erf(1.0, 1.0) - oracle) < 1e-15);
  for (double y : {0.1, 0.7, 2.5, -1.3}) {
    CHECK(activation_erf(-y, 0.8) == -activation_erf(y, 0.8));
    CHECK(std::abs(activation_erf(y, 0.8)) < 1.0);
  }
  CHECK_THROWS_AS(activation_erf(1.0, 0.0), InvalidParameter);
  CHECK_THROWS_AS(activation_erf(1.0, -2.0), InvalidParameter);
}

TEST_CASE("activation derivative matches finite differences") {
  for (double sigma : {0.5, 1.0, 1.7}) {
    for (double y : {-1.2, 0.0, 0.4, 2.0}) {
      const double h = 1e-6;
      const double fd = (activation_erf(y + h, sigma) - activation_erf(y - h, sigma)) / (2 * h);
      CHECK(activation_erf_derivative(y, sigma) == doctest::Approx(fd).epsilon(1e-8));
    }
  }
}

TEST_CASE("network construction validates shapes and sigma") {
  Layer a{Matrix::Ones(3, 2), Vector::Zero(3), 1.0};
  Layer b{Matrix::Ones(2, 4), Vector::Zero(2), 1.0};
  CHECK_THROWS_AS(Network({a, b}), ShapeError);
  Layer bad_bias{Matrix::Ones(3, 2), Vector::Zero(2), 1.0};
  CHECK_THROWS_AS(Network({bad_bias}), ShapeError);
  Layer bad_sigma{Matrix::Ones(3, 2), Vector::Zero(3), 0.0};
  CHECK_THROWS_AS(Network({bad_sigma, Layer{Matrix::Ones(2, 3), Vector::Zero(2), 1.0}}), InvalidParameter);
  CHECK_THROWS_AS(Network(std::vector<Layer>{}), ShapeError);
}

TEST_CASE("forward: zero network gives uniform softmax") {
  const Network net = Network::zeros({5, 4, 3});
  const Evaluation e = forward(net, Vector::Constant(5, 0.7));
  for (Index k = 0; k < 3; ++k) CHECK(e.softmax[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("forward: single linear layer is Wx + b exactly") {
  Matrix w(2, 3);
  w << 1, -2, 0.5, 0.25, 3, -1;
  Vector b(2);
  b << 0.1, -0.3;
  const Network net = flipbound::testing::linear_net(w, b);
  Vector x(3);
  x << 0.2, -0.4, 1.5;
  const Evaluation e = forward(net, x);
  const Vector expected = w * x + b;
  CHECK(e.logits == expected);
}

TEST_CASE("forward: 2-2-2 network matches scalar hand computation") {
  Layer hidden;
  hidden.weights.resize(2, 2);
  hidden.weights << 0.5, -1.0, 2.0, 0.25;
  hidden.bias.resize(2);
  hidden.bias << 0.1, -0.2;
  hidden.sigma = 1.5;
  Layer out;
  out.weights.resize(2, 2);
  out.weights << 1.0, -0.5, 0.3, 0.8;
  out.bias.resize(2);
  out.bias << 0.05, -0.1;
  const Network net({hidden, out});

  const double x0 = 0.4;
  const double x1 = -0.7;
  const double a0 = std::erf((0.5 * x0 - 1.0 * x1 + 0.1) / 1.5);
  const double a1 = std::erf((2.0 * x0 + 0.25 * x1 - 0.2) / 1.5);
  const double z0 = 1.0 * a0 - 0.5 * a1 + 0.05;
  const double z1 = 0.3 * a0 + 0.8 * a1 - 0.1;
  const double s0 = 1.0 / (1.0 + std::exp(z1 - z0));

  Vector x(2);
  x << x0, x1;
  const Evaluation e = forward(net, x);
  CHECK(e.logits[0] == doctest::Approx(z0).epsilon(1e-14));
  CHECK(e.logits[1] == doctest::Approx(z1).epsilon(1e-14));
  CHECK(e.softmax[0] == doctest::Approx(s0).epsilon(1e-14));
  CHECK(e.softmax[1] == doctest::Approx(1.0 - s0).epsilon(1e-14));
}

TEST_CASE("forward rejects bad inputs") {
  const Network net = Network::zeros({3, 2});
  CHECK_THROWS_AS(forward(net, Vector::Zero(4)), ShapeError);
  Vector x = Vector::Zero(3);
  x[1] = std::nan("");
  CHECK_THROWS_AS(forward(net, x), InvalidInput);
  CHECK_THROWS_AS(grad_scalar_wrt_input(net, Vector::Zero(3), Vector::Zero(3)), ShapeError);
}

TEST_CASE("softmax is normalized and deterministic") {
  std::mt19937_64 rng(7);
  const Network net = random_net({6, 8, 8, 4}, rng);
  for (int t = 0; t < 200; ++t) {
    const Vector x = random_vector(6, rng, 3.0);
    const Evaluation e = forward(net, x);
    CHECK(std::abs(e.softmax.sum() - 1.0) <= 1e-12);
    CHECK(e.softmax.minCoeff() > 0.0);
    CHECK(e.softmax.maxCoeff() < 1.0);
    const Evaluation again = forward(net, x);
    CHECK(again.logits == e.logits);
    CHECK(again.softmax == e.softmax);
  }
}

TEST_CASE("input gradient: linear net gives row difference") {
  Matrix w(3, 4);
  w << 1, 2, 3, 4, -1, 0.5, 0, 2, 0.3, 0.3, -0.7, 1;
  const Network net = flipbound::testing::linear_net(w, Vector::Zero(3));
  Vector c = Vector::Zero(3);
  c[0] = 1;
  c[2] = -1;
  const Vector g = grad_scalar_wrt_input(net, Vector::Constant(4, 0.3), c);
  const Vector expected = (w.row(0) - w.row(2)).transpose();
  CHECK((g - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK(grad_scalar_wrt_input(net, Vector::Constant(4, 0.3), Vector::Zero(3)).isZero(0.0));
}

TEST_CASE("input gradient matches central finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = random_net({2, 5, 3}, rng);
    const Vector x = random_vector(2, rng);
    const Vector c = random_vector(3, rng);
    const Vector g = grad_scalar_wrt_input(net, x, c);
    const Vector fd = central_difference([&](const Vector& p) { return c.dot(logits(net, p)); }, x, 1e-5);
    CHECK((g - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("spectral norm: simple cases and SVD oracle") {
  CHECK(spectral_norm(Matrix::Identity(3, 3)) == doctest::Approx(1.0).epsilon(1e-12));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  CHECK(spectral_norm(d) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(spectral_norm(Matrix::Zero(4, 3)) == 0.0);

  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const Matrix w = flipbound::testing::random_matrix(5, 4, rng);
    const Eigen::JacobiSVD<Matrix> svd(w);
    const double oracle = svd.singularValues()[0];
    CHECK(std::abs(spectral_norm(w) - oracle) <= 1e-8 * oracle);
  }
}

TEST_CASE("lipschitz bound: worked examples") {
  Layer hidden{Matrix::Identity(2, 2), Vector::Zero(2), 2.0 / std::sqrt(std::acos(-1.0))};
  Layer out{Matrix::Identity(2, 2), Vector::Zero(2), 1.0};
  CHECK(lipschitz_bound(Network({hidden, out})) == doctest::Approx(1.0).epsilon(1e-12));

  Layer zero{Matrix::Zero(2, 2), Vector::Zero(2), 1.0};
  CHECK(lipschitz_bound(Network({zero, out})) == 0.0);

  std::mt19937_64 rng(5);
  const Network a = random_net({3, 4, 2}, rng);
  const Network b = random_net({3, 4, 4, 2}, rng);
  // Stacking: hidden factors multiply.
  const Network stacked({a.layer(0), b.layer(1), b.layer(2)});
  const double hidden0 = spectral_norm(a.layer(0).weights) * 2.0 / (a.layer(0).sigma * std::sqrt(std::acos(-1.0)));
  CHECK(lipschitz_bound(stacked) == doctest::Approx(hidden0 * lipschitz_bound(Network({b.layer(1), b.layer(2)}))));
}

TEST_CASE("lipschitz bound holds on random pairs") {
  std::mt19937_64 rng(13);
  for (int n = 0; n < 5; ++n) {
    const Network net = random_net({3, 6, 5, 2}, rng);
    const double bound = lipschitz_bound(net);
    std::uniform_real_distribution<double> box(-2.0, 2.0);
    for (int t = 0; t < 1000; ++t) {
      Vector a(3);
      Vector b(3);
      for (Index i = 0; i < 3; ++i) {
        a[i] = box(rng);
        b[i] = box(rng);
      }
      CHECK((logits(net, a) - logits(net, b)).norm() <= bound * (a - b).norm() * (1 + 1e-12));
    }
  }
}

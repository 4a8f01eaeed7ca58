#include "flipbound/path.hpp"

#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace flipbound;
using flipbound::testing::linear_net;
using flipbound::testing::random_matrix;
using flipbound::testing::random_net;
using flipbound::testing::random_vector;

namespace {

// 1-D net: class 0 exactly on the bump erf((x+1)/0.3) - erf((x-1)/0.3) > 1.
Network bump_net() {
  Layer hidden{Matrix::Ones(2, 1), Vector(2), 0.3};
  hidden.bias << 1.0, -1.0;
  Layer out{Matrix::Zero(2, 2), Vector::Zero(2), 1.0};
  out.weights(0, 0) = 1.0;
  out.weights(0, 1) = -1.0;
  out.bias[0] = -1.0;
  return Network({hidden, out});
}

// Sign changes of a scalar gap on a uniform grid of the given step.
template <class Gap>
int dense_sign_changes(Gap&& gap, double a0, double a1, double step) {
  const auto n = static_cast<long>(std::ceil((a1 - a0) / step));
  int changes = 0;
  bool prev = gap(a0) > 0.0;
  for (long k = 1; k <= n; ++k) {
    const bool cur = gap(std::min(a1, a0 + step * static_cast<double>(k))) > 0.0;
    changes += cur != prev;
    prev = cur;
  }
  return changes;
}

}  // namespace

TEST_CASE("sample_line rejects degenerate segments") {
  const Network net = Network::zeros({2, 2});
  const Vector x = Vector::Ones(2);
  CHECK_THROWS_AS(sample_line(net, {x, x}), InvalidInput);
  CHECK_THROWS_AS(sample_line(net, {x, Vector::Zero(2), 1.0, 0.0}), InvalidParameter);
  CHECK_THROWS_AS(sample_line(net, {Vector::Zero(3), Vector::Ones(3)}), ShapeError);
}

TEST_CASE("sample_line on a zero net") {
  const PathProfile p = sample_line(Network::zeros({3, 4, 2}), {Vector::Zero(3), Vector::Ones(3)});
  CHECK(p.crossings.empty());
  for (Index r = 0; r < p.softmax_scores.rows(); ++r) {
    CHECK(p.softmax_scores(r, 0) == 0.5);
    CHECK(p.softmax_scores(r, 1) == 0.5);
  }
  CHECK(p.alphas.front() == 0.0);
  CHECK(p.alphas.back() == 1.0);
}

TEST_CASE("sample_line on linear nets: monotone scores, one analytic crossing") {
  std::mt19937_64 rng(41);
  int opposite = 0;
  for (int t = 0; t < 50; ++t) {
    const Matrix w = random_matrix(2, 3, rng);
    const Vector b = random_vector(2, rng);
    const Network net = linear_net(w, b);
    const LineSegment seg{random_vector(3, rng, 2.0), random_vector(3, rng, 2.0)};
    const PathProfile p = sample_line(net, seg);
    const Vector wd = (w.row(0) - w.row(1)).transpose();
    const double c = b[0] - b[1];
    const double g1 = wd.dot(seg.x1) + c;
    const double g2 = wd.dot(seg.x2) + c;
    const double sign = g2 > g1 ? 1.0 : -1.0;
    for (std::size_t r = 1; r < p.alphas.size(); ++r) {
      const auto i = static_cast<Index>(r);
      CHECK(sign * ((p.softmax_scores(i, 0) - p.softmax_scores(i, 1)) -
                    (p.softmax_scores(i - 1, 0) - p.softmax_scores(i - 1, 1))) >= -1e-15);
    }
    if ((g1 > 0) != (g2 > 0)) {
      ++opposite;
      REQUIRE(p.crossings.size() == 1);
      const double analytic = -g1 / (wd.dot(seg.x2 - seg.x1));
      CHECK(std::abs(p.crossings[0] - analytic) <= 1e-8);
    } else {
      CHECK(p.crossings.empty());
    }
  }
  CHECK(opposite > 5);
}

TEST_CASE("sampling soundness and endpoint fidelity") {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 10; ++t) {
    const Network net = random_net({3, 5, 4, 2}, rng);
    const LineSegment seg{random_vector(3, rng), random_vector(3, rng), -0.5, 1.5};
    const double tol = 0.05;
    const PathProfile p = sample_line(net, seg, tol);
    REQUIRE_FALSE(p.capped);
    for (std::size_t r = 1; r < p.alphas.size(); ++r) {
      const auto i = static_cast<Index>(r);
      CHECK(p.alphas[r] > p.alphas[r - 1]);
      CHECK((p.logits.row(i) - p.logits.row(i - 1)).norm() <= tol);
      CHECK(std::abs(p.softmax_scores.row(i).sum() - 1.0) <= 1e-12);
    }
    const auto row_of = [&](double a) {
      return static_cast<Index>(std::find(p.alphas.begin(), p.alphas.end(), a) - p.alphas.begin());
    };
    REQUIRE(row_of(0.0) < static_cast<Index>(p.alphas.size()));
    REQUIRE(row_of(1.0) < static_cast<Index>(p.alphas.size()));
    CHECK(p.softmax_scores.row(row_of(0.0)).transpose() == forward(net, seg.x1).softmax);
    CHECK(p.softmax_scores.row(row_of(1.0)).transpose() == forward(net, seg.x2).softmax);
    for (double a : p.crossings) {
      CHECK(a >= seg.alpha_min);
      CHECK(a <= seg.alpha_max);
    }
  }
}

TEST_CASE("sample cap sets the warning flag") {
  std::mt19937_64 rng(43);
  const Network net = random_net({2, 4, 2}, rng);
  const PathProfile p = sample_line(net, {Vector::Zero(2), Vector::Constant(2, 100.0)}, 1e-6, 50);
  CHECK(p.capped);
  CHECK(p.alphas.size() <= 50);
}

TEST_CASE("bump net crosses twice") {
  const Network net = bump_net();
  const LineSegment seg{Vector::Constant(1, -3.0), Vector::Constant(1, 3.0)};
  const auto crossings = count_crossings(net, seg);
  const auto gap = [&](double a) {
    const Vector z = logits(net, seg.at(a));
    return z[0] - z[1];
  };
  CHECK(dense_sign_changes(gap, 0.0, 1.0, 1e-5) == 2);
  REQUIRE(crossings.size() == 2);
  // Symmetric bump around x = 0, i.e. alpha = 0.5.
  CHECK(crossings[0] + crossings[1] == doctest::Approx(1.0).epsilon(1e-9));
  for (double a : crossings) CHECK(std::abs(gap(a)) <= 1e-8);
}

TEST_CASE("crossing counts match a dense-sampling oracle on toy nets") {
  std::mt19937_64 rng(44);
  for (int t = 0; t < 20; ++t) {
    const Network net = random_net({2, 8, 2}, rng, 0.5, 1.5, 2.0);
    const LineSegment seg{random_vector(2, rng, 1.5), random_vector(2, rng, 1.5)};
    const PathProfile p = sample_line(net, seg);
    const auto gap = [&](double a) {
      const Vector x = seg.at(a);
      return flipbound::testing::toy_gap(net, x[0], x[1]);
    };
    CHECK(static_cast<int>(p.crossings.size()) == dense_sign_changes(gap, 0.0, 1.0, 1e-5));
    for (double a : p.crossings) {
      const Vector z = logits(net, seg.at(a));
      CHECK(std::abs(z[0] - z[1]) <= 1e-8 * std::max(1.0, z.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("segment_stays_in_class agrees with a dense-sampling oracle") {
  const Network bump = bump_net();
  const Index own = argmax(logits(bump, Vector::Constant(1, -3.0)));
  CHECK_FALSE(segment_stays_in_class(bump, {Vector::Constant(1, -3.0), Vector::Constant(1, 3.0)}, own));
  CHECK(segment_stays_in_class(bump, {Vector::Constant(1, -3.0), Vector::Constant(1, -2.5)}, own));

  std::mt19937_64 rng(45);
  int inside = 0;
  for (int t = 0; t < 40; ++t) {
    const Network net = random_net({2, 8, 2}, rng, 0.5, 1.5, 2.0);
    const LineSegment seg{random_vector(2, rng, 1.5), random_vector(2, rng, 1.5)};
    const Index c = argmax(logits(net, seg.x1));
    bool oracle = true;
    for (int k = 0; k <= 100000 && oracle; ++k) oracle = argmax(logits(net, seg.at(k / 100000.0))) == c;
    CHECK(segment_stays_in_class(net, seg, c) == oracle);
    inside += oracle ? 1 : 0;
  }
  CHECK(inside > 0);
  CHECK(inside < 40);
  CHECK_THROWS_AS(segment_stays_in_class(bump, {Vector::Zero(1), Vector::Ones(1)}, 5), InvalidParameter);
}

TEST_CASE("profile_to_flip") {
  std::mt19937_64 rng(45);
  for (int t = 0; t < 5; ++t) {
    const Network net = random_net({2, 6, 2}, rng, 0.5, 1.5, 2.0);
    const Vector x = random_vector(2, rng, 0.5);
    const Index c = argmax(forward(net, x).softmax);
    const FlipResult flip = closest_flip(net, x, {c, 1 - c});
    if (!flip.converged() || flip.distance == 0.0) continue;
    const PathProfile p = profile_to_flip(net, x, flip);
    CHECK(p.alphas.front() == 0.0);
    CHECK(p.alphas.back() == 2.0);
    CHECK(p.softmax_scores.row(0).transpose() == forward(net, x).softmax);
    const auto one = static_cast<Index>(std::find(p.alphas.begin(), p.alphas.end(), 1.0) - p.alphas.begin());
    REQUIRE(one < static_cast<Index>(p.alphas.size()));
    CHECK(std::abs(p.softmax_scores(one, 0) - p.softmax_scores(one, 1)) <= 2e-6);
  }

  // Linear net: logit gap is affine in alpha.
  const Matrix w = random_matrix(2, 3, rng);
  const Network lin = linear_net(w, random_vector(2, rng));
  const Vector x = random_vector(3, rng);
  const FlipResult flip = closest_flip(lin, x, {argmax(forward(lin, x).softmax), 1 - argmax(forward(lin, x).softmax)});
  REQUIRE(flip.converged());
  const PathProfile p = profile_to_flip(lin, x, flip);
  const auto g = [&](std::size_t r) { return p.logits(static_cast<Index>(r), 0) - p.logits(static_cast<Index>(r), 1); };
  const double slope = (g(p.alphas.size() - 1) - g(0)) / (p.alphas.back() - p.alphas.front());
  for (std::size_t r = 0; r < p.alphas.size(); ++r) {
    CHECK(std::abs(g(r) - (g(0) + slope * p.alphas[r])) <= 1e-12 * std::max(1.0, std::abs(g(0))));
  }

  FlipResult failed = flip;
  failed.status = FlipStatus::bracket_failed;
  CHECK_THROWS_AS(profile_to_flip(lin, x, failed), InvalidInput);
}

TEST_CASE("profile CSV layout") {
  const PathProfile p = sample_line(bump_net(), {Vector::Constant(1, -3.0), Vector::Constant(1, 3.0)});
  const auto path = std::filesystem::temp_directory_path() / "flipbound_profile.csv";
  save_profile_csv(p, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "alpha,score_class0,score_class1");
  std::size_t rows = 0;
  std::size_t comments = 0;
  while (std::getline(in, line)) (line.rfind("# crossing=", 0) == 0 ? comments : rows)++;
  CHECK(rows == p.alphas.size());
  CHECK(comments == 2);
  std::filesystem::remove(path);
}

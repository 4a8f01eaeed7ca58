#include "flipbound/adversarial.hpp"

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

struct Case {
  Network net;
  Vector x;
  Index own;
  FlipResult flip;
};

// Toy nets with a converged, nonzero closest flip.
std::vector<Case> toy_cases(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Case> out;
  while (static_cast<int>(out.size()) < count) {
    Network net = random_net({2, 8, 2}, rng, 0.5, 1.5, 2.0);
    const Vector x = random_vector(2, rng, 0.7);
    const Index own = argmax(forward(net, x).softmax);
    FlipResult flip = closest_flip(net, x, {own, 1 - own});
    if (!flip.converged() || flip.distance < 1e-3) continue;
    out.push_back({std::move(net), x, own, std::move(flip)});
  }
  return out;
}

}  // namespace

TEST_CASE("attack config validation and trivial target") {
  const Network net = Network::zeros({2, 2});
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(constrained_loss_attack(net, Vector::Zero(2), 1, cfg), InvalidParameter);
  cfg.epsilon = 1.0;
  cfg.steps = 0;
  CHECK_THROWS_AS(constrained_loss_attack(net, Vector::Zero(2), 1, cfg), InvalidParameter);
  cfg.steps = 10;
  CHECK_THROWS_AS(constrained_loss_attack(net, Vector::Zero(2), 2, cfg), InvalidParameter);
  const AttackResult same = constrained_loss_attack(net, Vector::Zero(2), 0, cfg);
  CHECK(same.succeeded);
  CHECK(same.distance == 0.0);
  CHECK(cfg.effective_step() == 1.0 / 50.0);
}

TEST_CASE("attack stays in the ball, never worsens the loss, and crosses when it succeeds") {
  for (const Case& c : toy_cases(10, 61)) {
    for (double factor : {0.5, 2.0}) {
      AttackConfig cfg;
      cfg.epsilon = factor * c.flip.distance;
      double worst = 0.0;
      cfg.on_iterate = [&](const Vector& p) { worst = std::max(worst, (p - c.x).norm()); };
      const AttackResult r = constrained_loss_attack(c.net, c.x, 1 - c.own, cfg);
      CHECK(worst <= cfg.epsilon + 1e-9);
      CHECK(r.distance <= cfg.epsilon + 1e-9);
      CHECK(r.final_loss <= r.start_loss);
      if (factor < 1.0) CHECK_FALSE(r.succeeded);
      if (r.succeeded) CHECK_FALSE(count_crossings(c.net, {c.x, r.point}).empty());
    }
  }
}

TEST_CASE("attack on linear nets versus the analytic flip distance") {
  std::mt19937_64 rng(62);
  for (int t = 0; t < 10; ++t) {
    const Matrix w = random_matrix(2, 4, rng);
    const Vector b = random_vector(2, rng);
    const Network net = linear_net(w, b);
    const Vector x = random_vector(4, rng);
    const Index own = argmax(forward(net, x).softmax);
    const Vector wd = (w.row(0) - w.row(1)).transpose();
    const double d = std::abs(wd.dot(x) + b[0] - b[1]) / wd.norm();

    double previous_excess = std::numeric_limits<double>::infinity();
    for (double grow : {4.0, 2.0, 1.25, 1.05}) {
      AttackConfig cfg;
      cfg.epsilon = grow * d;
      const AttackResult r = constrained_loss_attack(net, x, 1 - own, cfg);
      CHECK(r.succeeded);
      CHECK(r.distance >= d * (1 - 1e-9));
      // As epsilon approaches the projection distance from above the
      // attack distance approaches it too.
      const double excess = r.distance - d;
      CHECK(excess <= previous_excess);
      previous_excess = excess;

      const FlipResult flip = closest_flip(net, x, {own, 1 - own});
      REQUIRE(flip.converged());
      const AdversarialComparison cmp = compare_attack_vs_flip(net, x, r, flip);
      REQUIRE(cmp.first_crossing_distance);
      CHECK(std::abs(*cmp.first_crossing_distance - d) <= 1e-8 * std::max(1.0, d));
      CHECK(*cmp.first_crossing_distance <= cmp.attack_distance + 1e-9);
      REQUIRE(cmp.angle_deg);
      CHECK(*cmp.angle_deg <= 1e-4);
    }
  }
}

TEST_CASE("compare_attack_vs_flip: attack at the flip point") {
  const Case c = toy_cases(1, 63).front();
  AttackResult fake;
  fake.point = c.flip.point;
  fake.distance = c.flip.distance;
  fake.succeeded = false;
  const AdversarialComparison cmp = compare_attack_vs_flip(c.net, c.x, fake, c.flip);
  CHECK(cmp.angle_deg.value() <= 1e-12);
  CHECK(cmp.attack_distance == cmp.flip_distance);
  CHECK_FALSE(cmp.first_crossing_distance);

  FlipResult failed = c.flip;
  failed.status = FlipStatus::box_exit;
  CHECK_THROWS_AS(compare_attack_vs_flip(c.net, c.x, fake, failed), InvalidInput);
}

TEST_CASE("flip_distance_histogram") {
  CHECK(flip_distance_histogram({}, 0.1).empty());
  FlipResult one;
  one.distance = 0.234;
  one.status = FlipStatus::converged;
  const auto single = flip_distance_histogram({one}, 0.1);
  REQUIRE(single.size() == 1);
  CHECK(single[0].count == 1);
  CHECK(single[0].low <= 0.234);
  CHECK(single[0].high > 0.234);

  std::mt19937_64 rng(64);
  std::vector<FlipResult> many(500);
  std::vector<int> recount(40, 0);
  for (FlipResult& r : many) {
    r.status = FlipStatus::converged;
    r.distance = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    // Independent binning: repeated subtraction.
    double rest = r.distance;
    int k = 0;
    while (rest >= 0.05 * (k + 1)) ++k;
    ++recount[static_cast<std::size_t>(k)];
  }
  const auto bins = flip_distance_histogram(many, 0.05);
  Index total = 0;
  for (const HistogramBin& b : bins) {
    total += b.count;
    const auto k = static_cast<std::size_t>(std::lround(b.low / 0.05));
    CHECK(b.count == recount[k]);
  }
  CHECK(total == 500);

  FlipResult bad;
  bad.status = FlipStatus::bracket_failed;
  CHECK_THROWS_AS(flip_distance_histogram({bad}, 0.1), InvalidInput);
  CHECK_THROWS_AS(flip_distance_histogram({one}, 0.0), InvalidParameter);
}

TEST_CASE("attack CSV layout") {
  AttackRow row;
  row.id = "7";
  row.epsilon = 0.5;
  row.comparison.attack_distance = 0.4;
  row.comparison.flip_distance = 0.2;
  const auto path = std::filesystem::temp_directory_path() / "flipbound_attack.csv";
  save_attack_csv({row}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,epsilon,succeeded,attack_distance,flip_distance,first_crossing_distance,angle_deg");
  std::getline(in, line);
  CHECK(line == "7,0.5,0,0.40000000000000002,0.20000000000000001,,");
  std::filesystem::remove(path);
}

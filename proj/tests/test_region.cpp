#include "flipbound/region.hpp"

#include "flipbound/path.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace flipbound;
using flipbound::testing::linear_net;
using flipbound::testing::random_net;
using flipbound::testing::random_vector;

namespace {

AdjacencyGraph graph_of(Index n, std::vector<std::pair<Index, Index>> edges) {
  AdjacencyGraph g;
  for (Index i = 0; i < n; ++i) g.nodes.push_back(i);
  std::sort(edges.begin(), edges.end());
  g.edges = std::move(edges);
  return g;
}

// Component count by boolean matrix powering of (I + A).
Index closure_components(Index n, const std::vector<std::pair<Index, Index>>& edges) {
  using B = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
  B reach = B::Identity(n, n);
  for (const auto& [u, v] : edges) reach(u, v) = reach(v, u) = 1;
  for (Index step = 1; step < n; step *= 2) reach = (reach * reach).unaryExpr([](int x) { return x > 0 ? 1 : 0; });
  std::set<std::vector<int>> classes;
  for (Index r = 0; r < n; ++r) {
    std::vector<int> row;
    for (Index c = 0; c < n; ++c) row.push_back(reach(r, c));
    classes.insert(row);
  }
  return static_cast<Index>(classes.size());
}

// 1-D net: class 0 on the bump |x| < ~1, class 1 on both sides of it.
Network bump_net() {
  Layer hidden{Matrix::Ones(2, 1), Vector(2), 0.3};
  hidden.bias << 1.0, -1.0;
  Layer out{Matrix::Zero(2, 2), Vector::Zero(2), 1.0};
  out.weights(0, 0) = 1.0;
  out.weights(0, 1) = -1.0;
  out.bias[0] = -1.0;
  return Network({hidden, out});
}

}  // namespace

TEST_CASE("build_adjacency basics") {
  Matrix w(2, 2);
  w << 1, 0, -1, 0;
  const Network net = linear_net(w, Vector::Zero(2));
  Vector a(2);
  a << 1.0, 0.0;
  Vector b(2);
  b << 2.0, 5.0;
  const AdjacencyGraph one = build_adjacency(net, {a}, 0);
  CHECK(one.nodes.size() == 1);
  CHECK(one.edges.empty());
  const AdjacencyGraph two = build_adjacency(net, {a, b}, 0);
  REQUIRE(two.edges.size() == 1);
  CHECK(two.edges[0] == std::pair<Index, Index>{0, 1});

  try {
    build_adjacency(net, {a, -b}, 0, 0.01, {10, 17});
    CHECK(false);
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("concave region: the known non-edge appears") {
  const Network net = bump_net();
  // Two points left of the bump, one right of it, all class 1.
  const std::vector<Vector> pts{Vector::Constant(1, -3.0), Vector::Constant(1, -2.5), Vector::Constant(1, 3.0)};
  const AdjacencyGraph g = build_adjacency(net, pts, 1);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == std::pair<Index, Index>{0, 1});

  // Dense-sampling oracle on the same pairs.
  for (auto [u, v] : std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}}) {
    bool stays = true;
    for (int k = 0; k <= 100000; ++k) {
      const double a = k * 1e-5;
      stays = stays && argmax(logits(net, (1 - a) * pts[u] + a * pts[v])) == 1;
    }
    const bool edge = std::find(g.edges.begin(), g.edges.end(), std::pair<Index, Index>{u, v}) != g.edges.end();
    CHECK(edge == stays);
  }
  const RegionReport rep = connected_components(g);
  CHECK(rep.component_count == 2);
  CHECK(rep.min_degree == 0);
  CHECK(rep.min_degree_node == 2);
}

TEST_CASE("connected_components on fixed graphs") {
  std::vector<std::pair<Index, Index>> k5;
  for (Index u = 0; u < 5; ++u) {
    for (Index v = u + 1; v < 5; ++v) k5.emplace_back(u, v);
  }
  const RegionReport full = connected_components(graph_of(5, k5));
  CHECK(full.component_count == 1);
  CHECK(full.min_degree == 4);
  CHECK(full.fraction_direct == 1.0);
  CHECK(full.all_pairs_connected);

  const RegionReport tri = connected_components(graph_of(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}}));
  CHECK(tri.component_count == 2);
  CHECK(tri.component_sizes == std::vector<Index>{3, 3});
  CHECK_FALSE(tri.all_pairs_connected);

  CHECK_THROWS_AS(connected_components(graph_of(3, {{1, 1}})), InvalidInput);
  CHECK_THROWS_AS(connected_components(graph_of(3, {{0, 5}})), InvalidInput);
}

TEST_CASE("connected_components matches the transitive-closure oracle") {
  std::mt19937_64 rng(51);
  for (int t = 0; t < 40; ++t) {
    const Index n = 1 + static_cast<Index>(rng() % 50);
    const double p = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
    std::vector<std::pair<Index, Index>> edges;
    for (Index u = 0; u < n; ++u) {
      for (Index v = u + 1; v < n; ++v) {
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p) edges.emplace_back(u, v);
      }
    }
    const RegionReport rep = connected_components(graph_of(n, edges));
    CHECK(rep.component_count == closure_components(n, edges));
    Index total = 0;
    for (Index s : rep.component_sizes) total += s;
    CHECK(total == n);

    // Adding an edge never increases the component count.
    if (n >= 2) {
      const Index u = static_cast<Index>(rng() % static_cast<std::uint64_t>(n - 1));
      const Index v = u + 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(n - u - 1));
      auto more = edges;
      if (std::find(more.begin(), more.end(), std::pair<Index, Index>{u, v}) == more.end()) more.emplace_back(u, v);
      CHECK(connected_components(graph_of(n, more)).component_count <= rep.component_count);
    }
  }
}

TEST_CASE("edge test is symmetric under segment reversal") {
  std::mt19937_64 rng(52);
  int checked = 0;
  while (checked < 200) {
    const Network net = random_net({2, 6, 2}, rng, 0.5, 1.5, 2.0);
    for (int k = 0; k < 20; ++k, ++checked) {
      const Vector a = random_vector(2, rng, 1.5);
      const Vector b = random_vector(2, rng, 1.5);
      CHECK(count_crossings(net, {a, b}).size() == count_crossings(net, {b, a}).size());
    }
  }
}

TEST_CASE("region_report") {
  Matrix w(2, 2);
  w << 1, 0, -1, 0;
  const Network net = linear_net(w, Vector::Zero(2));
  std::mt19937_64 rng(53);
  Dataset d;
  d.features.resize(30, 2);
  for (Index i = 0; i < 30; ++i) {
    d.features(i, 0) = (i % 2 == 0 ? 1.0 : -1.0) * (0.1 + std::abs(random_vector(1, rng)[0]));
    d.features(i, 1) = random_vector(1, rng)[0];
    d.labels.push_back(static_cast<int>(i % 2));
  }
  AdjacencyGraph g;
  const RegionReport rep = region_report(net, d, 0, 0, 0, 0.01, &g);
  CHECK(rep.node_count == 15);
  CHECK(rep.fraction_direct == 1.0);
  CHECK(rep.all_pairs_connected);

  // Capped subsample is seed-deterministic.
  AdjacencyGraph g1;
  AdjacencyGraph g2;
  region_report(net, d, 1, 5, 9, 0.01, &g1);
  region_report(net, d, 1, 5, 9, 0.01, &g2);
  CHECK(g1.nodes.size() == 5);
  CHECK(g1.nodes == g2.nodes);

  Dataset tiny = d;
  tiny.features.conservativeResize(2, 2);
  tiny.labels.resize(2);
  CHECK_THROWS_AS(region_report(net, tiny, 0), InvalidInput);
}

TEST_CASE("region_report on a toy clustered set agrees with its edge list") {
  std::mt19937_64 rng(54);
  const Network net = random_net({2, 8, 2}, rng, 0.5, 1.5, 2.0);
  Dataset d;
  d.features.resize(40, 2);
  for (Index i = 0; i < 40; ++i) {
    const Vector p = random_vector(2, rng, 1.5);
    d.features.row(i) = p.transpose();
    d.labels.push_back(static_cast<int>(argmax(forward(net, p).softmax)));
  }
  const Index cls = d.labels[0];
  AdjacencyGraph g;
  const RegionReport rep = region_report(net, d, cls, 0, 0, 0.01, &g);

  const auto path = std::filesystem::temp_directory_path() / "flipbound_edges.txt";
  save_edge_list(g, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# class=", 0) == 0);
  std::size_t edges = 0;
  Index u = 0;
  Index v = 0;
  while (in >> u >> v) {
    CHECK(u < v);
    ++edges;
  }
  const double n = static_cast<double>(rep.node_count);
  CHECK(rep.fraction_direct == static_cast<double>(edges) / (n * (n - 1) / 2));
  std::filesystem::remove(path);

  const auto summary = std::filesystem::temp_directory_path() / "flipbound_region.csv";
  save_region_summary_csv(rep, summary);
  std::ifstream sin(summary);
  std::getline(sin, line);
  CHECK(line.rfind("node_count,edge_count,fraction_direct", 0) == 0);
  std::filesystem::remove(summary);
}

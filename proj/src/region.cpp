#include "flipbound/region.hpp"

#include "flipbound/csv.hpp"
#include "flipbound/parallel.hpp"
#include "flipbound/path.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

namespace flipbound {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

std::size_t position_of(const std::vector<Index>& nodes, Index id) {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
  if (it == nodes.end() || *it != id) throw InvalidInput("edge endpoint " + std::to_string(id) + " is not a node");
  return static_cast<std::size_t>(it - nodes.begin());
}

}  // namespace

void AdjacencyGraph::validate() const {
  if (!std::is_sorted(nodes.begin(), nodes.end()) ||
      std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end()) {
    throw InvalidInput("graph node ids must be strictly increasing");
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [u, v] = edges[e];
    if (!(u < v)) throw InvalidInput("graph edge must satisfy u < v (self-loops are not allowed)");
    if (e > 0 && !(edges[e - 1] < edges[e])) throw InvalidInput("graph edges must be sorted and unique");
    position_of(nodes, u);
    position_of(nodes, v);
  }
}

std::vector<Index> AdjacencyGraph::degrees() const {
  std::vector<Index> deg(nodes.size(), 0);
  for (const auto& [u, v] : edges) {
    ++deg[position_of(nodes, u)];
    ++deg[position_of(nodes, v)];
  }
  return deg;
}

AdjacencyGraph build_adjacency(const Network& net, const std::vector<Vector>& points, Index class_id,
                               double score_tol, std::vector<Index> ids) {
  if (ids.empty()) {
    ids.resize(points.size());
    std::iota(ids.begin(), ids.end(), Index{0});
  }
  if (ids.size() != points.size()) throw ShapeError("node ids do not match the point count");
  if (class_id < 0 || class_id >= net.class_count()) throw InvalidParameter("class id outside the network's classes");
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (argmax(forward(net, points[k]).softmax) != class_id) {
      throw InvalidInput("point " + std::to_string(ids[k]) + " is not classified as class " +
                         std::to_string(class_id));
    }
  }

  AdjacencyGraph g;
  g.nodes = ids;
  g.class_id = class_id;
  g.score_tol = score_tol;
  g.validate();

  const std::size_t n = points.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - (n > 0)) / 2);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  }
  std::vector<char> direct(pairs.size(), 0);
  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [a, b] = pairs[k];
    // Identical points are trivially connected.
    if (points[a] == points[b]) {
      direct[k] = 1;
      return;
    }
    direct[k] = segment_stays_in_class(net, LineSegment{points[a], points[b]}, class_id, score_tol) ? 1 : 0;
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (direct[k]) g.edges.emplace_back(ids[pairs[k].first], ids[pairs[k].second]);
  }
  return g;
}

RegionReport connected_components(const AdjacencyGraph& graph) {
  graph.validate();
  RegionReport rep;
  const std::size_t n = graph.nodes.size();
  rep.node_count = static_cast<Index>(n);
  rep.edge_count = static_cast<Index>(graph.edges.size());
  const double pairs = static_cast<double>(n) * static_cast<double>(n > 0 ? n - 1 : 0) / 2.0;
  rep.fraction_direct = pairs > 0 ? static_cast<double>(graph.edges.size()) / pairs : 0.0;

  DisjointSets sets(n);
  for (const auto& [u, v] : graph.edges) sets.unite(position_of(graph.nodes, u), position_of(graph.nodes, v));
  std::vector<Index> count(n, 0);
  for (std::size_t v = 0; v < n; ++v) ++count[sets.find(v)];
  for (Index c : count) {
    if (c > 0) rep.component_sizes.push_back(c);
  }
  std::sort(rep.component_sizes.begin(), rep.component_sizes.end(), std::greater<>());
  rep.component_count = static_cast<Index>(rep.component_sizes.size());
  rep.all_pairs_connected = rep.component_count == 1;

  const std::vector<Index> deg = graph.degrees();
  if (!deg.empty()) {
    const auto it = std::min_element(deg.begin(), deg.end());
    rep.min_degree = *it;
    rep.min_degree_node = graph.nodes[static_cast<std::size_t>(it - deg.begin())];
  }
  return rep;
}

RegionReport region_report(const Network& net, const Dataset& data, Index class_id, Index max_points,
                           std::uint64_t seed, double score_tol, AdjacencyGraph* graph_out) {
  data.validate();
  std::vector<Index> keep;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.labels[static_cast<std::size_t>(i)] != class_id) continue;
    if (argmax(forward(net, data.features.row(i).transpose()).softmax) == class_id) keep.push_back(i);
  }
  if (max_points > 0 && static_cast<Index>(keep.size()) > max_points) {
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates, then restore id order.
    for (std::size_t k = 0; k < static_cast<std::size_t>(max_points); ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng() % (keep.size() - k));
      std::swap(keep[k], keep[pick]);
    }
    keep.resize(static_cast<std::size_t>(max_points));
    std::sort(keep.begin(), keep.end());
  }
  if (keep.size() < 2) {
    throw InvalidInput("region analysis needs at least 2 correctly classified points of class " +
                       std::to_string(class_id) + ", found " + std::to_string(keep.size()));
  }
  std::vector<Vector> points;
  points.reserve(keep.size());
  for (Index i : keep) points.emplace_back(data.features.row(i).transpose());
  AdjacencyGraph g = build_adjacency(net, points, class_id, score_tol, keep);
  RegionReport rep = connected_components(g);
  if (graph_out != nullptr) *graph_out = std::move(g);
  return rep;
}

void save_edge_list(const AdjacencyGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "# class=" << graph.class_id << " score_tol=" << format_double(graph.score_tol)
      << " nodes=" << graph.nodes.size() << '\n';
  for (const auto& [u, v] : graph.edges) out << u << ' ' << v << '\n';
}

void save_region_summary_csv(const RegionReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "node_count,edge_count,fraction_direct,component_count,component_sizes,min_degree_node,min_degree,"
         "all_pairs_connected\n";
  out << report.node_count << ',' << report.edge_count << ',' << format_double(report.fraction_direct) << ','
      << report.component_count << ',';
  for (std::size_t k = 0; k < report.component_sizes.size(); ++k) out << (k ? ";" : "") << report.component_sizes[k];
  out << ',' << report.min_degree_node << ',' << report.min_degree << ',' << (report.all_pairs_connected ? 1 : 0)
      << '\n';
}

}  // namespace flipbound

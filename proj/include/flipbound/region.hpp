#pragma once

#include "flipbound/features.hpp"
#include "flipbound/net.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace flipbound {

/// Within-class adjacency: an edge joins two points whose connecting
/// segment never leaves the class.
struct AdjacencyGraph {
  std::vector<Index> nodes;                   // ids, strictly increasing
  std::vector<std::pair<Index, Index>> edges;  // ids, u < v, sorted, unique
  Index class_id = 0;
  double score_tol = 0.01;

  void validate() const;
  std::vector<Index> degrees() const;  // aligned with nodes
};

struct RegionReport {
  Index node_count = 0;
  Index edge_count = 0;
  double fraction_direct = 0.0;
  Index component_count = 0;
  std::vector<Index> component_sizes;  // descending
  Index min_degree_node = -1;          // id; ties go to the lower id
  Index min_degree = 0;
  bool all_pairs_connected = false;
};

/// Points must all be classified as class_id. ids defaults to 0..n-1.
AdjacencyGraph build_adjacency(const Network& net, const std::vector<Vector>& points, Index class_id,
                               double score_tol = 0.01, std::vector<Index> ids = {});

/// Components by disjoint-set union, plus degree and fraction statistics.
RegionReport connected_components(const AdjacencyGraph& graph);

/// Keeps points of class_id that the net classifies correctly, optionally
/// subsamples them (seeded) to max_points, and analyses their adjacency.
RegionReport region_report(const Network& net, const Dataset& data, Index class_id, Index max_points = 0,
                           std::uint64_t seed = 0, double score_tol = 0.01, AdjacencyGraph* graph_out = nullptr);

void save_edge_list(const AdjacencyGraph& graph, const std::filesystem::path& path);
void save_region_summary_csv(const RegionReport& report, const std::filesystem::path& path);

}  // namespace flipbound

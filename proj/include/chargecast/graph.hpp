#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <utility>
#include <vector>

#include "chargecast/structure.hpp"

namespace chargecast::graph {

using Edge = std::pair<int, int>;  // always (low, high)

/// Undirected spatial adjacency graph over planar node coordinates (meters).
struct AdjacencyGraph {
  int n_nodes = 0;
  std::vector<Edge> edges;         ///< sorted, unique, no self-loops
  Eigen::MatrixX2d node_coords;    ///< n_nodes x 2
  std::vector<Edge> bridge_edges;  ///< edges added by bridge_components, in insertion order

  std::vector<std::vector<int>> neighbours() const;
  std::vector<int> degrees() const;
  /// Component label per node; labels are numbered by smallest member index.
  std::vector<int> components() const;
  int component_count() const;
  bool has_edge(int a, int b) const;
};

/// Symmetrized k-nearest-neighbour graph (edge when either endpoint picks the other).
/// Distance ties are broken by the lower node index.
AdjacencyGraph knn_graph(const Eigen::MatrixX2d& coords, int k = 4);

/// Joins components by repeatedly adding the globally shortest inter-component edge.
AdjacencyGraph bridge_components(AdjacencyGraph graph);

/// ICAR structure D - W with binary weights; requires a connected graph.
StructureMatrix icar_structure(const AdjacencyGraph& graph);

/// RW2 structure R = D2' D2 for n_t >= 3 time points.
StructureMatrix rw2_structure(int n_t);

/// Log density of theta = log(tau) when tau ~ Gamma(shape a, rate b).
double log_gamma_prior_logdensity(double theta, double a = 1.0, double b = 5e-5);

/// CSV with header i,j,distance_m.
void write_edge_list(const std::filesystem::path& path, const AdjacencyGraph& graph);
/// One "node: n1 n2 ..." line per node.
void write_adjacency(const std::filesystem::path& path, const AdjacencyGraph& graph);

}  // namespace chargecast::graph

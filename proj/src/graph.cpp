#include "chargecast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "chargecast/common.hpp"
#include "chargecast/csv.hpp"

namespace chargecast::graph {

namespace {

double dist(const Eigen::MatrixX2d& c, int i, int j) { return (c.row(i) - c.row(j)).norm(); }

Edge ordered(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

}  // namespace

std::vector<std::vector<int>> AdjacencyGraph::neighbours() const {
  std::vector<std::vector<int>> nb(static_cast<std::size_t>(n_nodes));
  for (const auto& [a, b] : edges) {
    nb[static_cast<std::size_t>(a)].push_back(b);
    nb[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& v : nb) std::sort(v.begin(), v.end());
  return nb;
}

std::vector<int> AdjacencyGraph::degrees() const {
  std::vector<int> d(static_cast<std::size_t>(n_nodes), 0);
  for (const auto& [a, b] : edges) {
    ++d[static_cast<std::size_t>(a)];
    ++d[static_cast<std::size_t>(b)];
  }
  return d;
}

std::vector<int> AdjacencyGraph::components() const {
  const auto nb = neighbours();
  std::vector<int> label(static_cast<std::size_t>(n_nodes), -1);
  int next = 0;
  for (int s = 0; s < n_nodes; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<int> stack{s};
    label[static_cast<std::size_t>(s)] = next;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : nb[static_cast<std::size_t>(u)])
        if (label[static_cast<std::size_t>(v)] < 0) {
          label[static_cast<std::size_t>(v)] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  return label;
}

int AdjacencyGraph::component_count() const {
  const auto c = components();
  return c.empty() ? 0 : *std::max_element(c.begin(), c.end()) + 1;
}

bool AdjacencyGraph::has_edge(int a, int b) const {
  return std::binary_search(edges.begin(), edges.end(), ordered(a, b));
}

AdjacencyGraph knn_graph(const Eigen::MatrixX2d& coords, int k) {
  const int n = static_cast<int>(coords.rows());
  if (k < 1) throw InputError("knn_graph: k must be >= 1");
  if (n <= k) throw InputError("knn_graph: need more than k = " + std::to_string(k) + " nodes, got " +
                               std::to_string(n));
  if (!coords.allFinite()) throw InputError("knn_graph: non-finite coordinates");
  std::set<Edge> edges;
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> d(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) d[static_cast<std::size_t>(j)] = dist(coords, i, j);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return d[static_cast<std::size_t>(a)] < d[static_cast<std::size_t>(b)];
    });
    int taken = 0;
    for (int j : order) {
      if (j == i) continue;
      edges.insert(ordered(i, j));
      if (++taken == k) break;
    }
  }
  AdjacencyGraph g;
  g.n_nodes = n;
  g.edges.assign(edges.begin(), edges.end());
  g.node_coords = coords;
  return g;
}

AdjacencyGraph bridge_components(AdjacencyGraph graph) {
  while (true) {
    const auto label = graph.components();
    const int count = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
    if (count <= 1) break;
    double best = std::numeric_limits<double>::infinity();
    Edge best_edge{-1, -1};
    for (int i = 0; i < graph.n_nodes; ++i)
      for (int j = i + 1; j < graph.n_nodes; ++j) {
        if (label[static_cast<std::size_t>(i)] == label[static_cast<std::size_t>(j)]) continue;
        const double d = dist(graph.node_coords, i, j);
        if (d < best) {
          best = d;
          best_edge = {i, j};
        }
      }
    graph.edges.insert(std::upper_bound(graph.edges.begin(), graph.edges.end(), best_edge), best_edge);
    graph.bridge_edges.push_back(best_edge);
  }
  return graph;
}

StructureMatrix icar_structure(const AdjacencyGraph& graph) {
  if (graph.n_nodes < 1) throw InputError("icar_structure: empty graph");
  if (graph.component_count() != 1) throw InputError("icar_structure: graph is disconnected, bridge first");
  const auto deg = graph.degrees();
  std::vector<Triplet> trips;
  for (int i = 0; i < graph.n_nodes; ++i) trips.emplace_back(i, i, deg[static_cast<std::size_t>(i)]);
  for (const auto& [a, b] : graph.edges) {
    trips.emplace_back(a, b, -1.0);
    trips.emplace_back(b, a, -1.0);
  }
  StructureMatrix s;
  s.matrix.resize(graph.n_nodes, graph.n_nodes);
  s.matrix.setFromTriplets(trips.begin(), trips.end());
  s.matrix.makeCompressed();
  s.rank_deficiency = 1;
  s.null_basis = Eigen::VectorXd::Ones(graph.n_nodes);
  return s;
}

StructureMatrix rw2_structure(int n_t) {
  if (n_t < 3) throw InputError("rw2_structure: need at least 3 time points, got " + std::to_string(n_t));
  // accumulate D2' D2 one second-difference row at a time
  std::vector<Triplet> trips;
  constexpr double w[3] = {1.0, -2.0, 1.0};
  for (int t = 0; t + 2 < n_t; ++t)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trips.emplace_back(t + a, t + b, w[a] * w[b]);
  StructureMatrix s;
  s.matrix.resize(n_t, n_t);
  s.matrix.setFromTriplets(trips.begin(), trips.end());
  s.matrix.makeCompressed();
  s.rank_deficiency = 2;
  s.null_basis.resize(n_t, 2);
  for (int t = 0; t < n_t; ++t) {
    s.null_basis(t, 0) = 1.0;
    s.null_basis(t, 1) = t + 1.0;
  }
  return s;
}

double log_gamma_prior_logdensity(double theta, double a, double b) {
  if (!(a > 0) || !(b > 0)) throw InputError("log-gamma prior needs a, b > 0");
  return a * theta - b * std::exp(theta) - std::lgamma(a) + a * std::log(b);
}

void write_edge_list(const std::filesystem::path& path, const AdjacencyGraph& graph) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "i,j,distance_m\n";
  for (const auto& [a, b] : graph.edges)
    out << a << ',' << b << ',' << csv::format_double(dist(graph.node_coords, a, b)) << '\n';
}

void write_adjacency(const std::filesystem::path& path, const AdjacencyGraph& graph) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  const auto nb = graph.neighbours();
  for (int i = 0; i < graph.n_nodes; ++i) {
    out << i << ':';
    for (int j : nb[static_cast<std::size_t>(i)]) out << ' ' << j;
    out << '\n';
  }
}

}  // namespace chargecast::graph

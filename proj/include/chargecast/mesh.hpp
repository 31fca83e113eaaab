#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <filesystem>
#include <vector>

#include "chargecast/structure.hpp"

namespace chargecast::mesh {

inline constexpr double kEarthRadiusM = 6371000.0;

/// Local equirectangular projection about a reference point.
struct Projection {
  double lon0 = 0.0;
  double lat0 = 0.0;
  double radius = kEarthRadiusM;
};

struct PlanarPoints {
  Eigen::MatrixX2d xy;  ///< meters
  Projection projection;
};

/// Projects lon/lat degrees about their centroid.
PlanarPoints project_coords(const Eigen::MatrixX2d& lonlat);
/// Projects with a fixed reference, e.g. new points into an existing mesh frame.
PlanarPoints project_coords(const Eigen::MatrixX2d& lonlat, const Projection& projection);
Eigen::MatrixX2d unproject(const Eigen::MatrixX2d& xy, const Projection& projection);

struct MeshOptions {
  double inner_edge = 200.0;
  double outer_edge = 2000.0;
  double cutoff = 100.0;
  int max_vertices = 200000;
};

struct Mesh {
  Eigen::MatrixX2d vertices;                  ///< meters
  std::vector<std::array<int, 3>> triangles;  ///< counterclockwise
  std::vector<bool> inner;                    ///< triangle centroid inside the inner domain
  int n_sites = 0;                            ///< vertices [0, n_sites) are the merged input sites
  std::vector<int> site_of_input;             ///< input point -> site vertex
  Eigen::MatrixX2d inner_hull;                ///< counterclockwise convex hull of the sites
  Projection projection;

  Eigen::Index vertex_count() const { return vertices.rows(); }
  double area(std::size_t t) const;
  double max_edge(std::size_t t) const;
};

/// Delaunay mesh over the merged sites with a refined inner domain and a coarse
/// extension zone reaching at least outer_edge beyond the convex hull.
Mesh build_mesh(const PlanarPoints& points, const MeshOptions& options = {});

/// Structured triangulation of [x0, x0 + width] x [y0, y0 + height] with nx x ny cells.
Mesh regular_grid_mesh(double x0, double y0, double width, double height, int nx, int ny);

struct MeshAudit {
  double max_inner_edge = 0.0;
  double max_outer_edge = 0.0;
  double min_area = 0.0;
  double min_site_distance = 0.0;
  std::size_t delaunay_violations = 0;
};

/// Brute-force checks of the mesh postconditions (empty circumcircles, edge bounds, ...).
MeshAudit audit_mesh(const Mesh& mesh, double delaunay_tol = 1e-9);

struct FemMatrices {
  Eigen::VectorXd c_lumped;  ///< diagonal of the lumped mass matrix
  SparseMatrix G;            ///< stiffness
  double total_area = 0.0;
};

FemMatrices assemble_fem(const Mesh& mesh);

/// log tau and log kappa of the alpha = 2 SPDE (nu = 1 in two dimensions).
struct SpdeParams {
  double log_tau = 0.0;
  double log_kappa = 0.0;
};

/// Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G) with the lumped mass C.
StructureMatrix spde_precision(const FemMatrices& fem, const SpdeParams& params);

/// Matern correlation (2^(1-nu) / Gamma(nu)) (kappa d)^nu K_nu(kappa d), 1 at d = 0.
double matern_correlation(double d, double kappa, double nu = 1.0);

struct RangeVariance {
  double range = 0.0;     ///< sqrt(8) / kappa, meters
  double variance = 0.0;  ///< 1 / (4 pi tau^2 kappa^2)
};

RangeVariance range_variance(const SpdeParams& params);

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Barycentric interpolation weights, one row per location, each row summing to 1.
RowSparse projection_matrix(const Mesh& mesh, const Eigen::MatrixX2d& locations);

void write_mesh_csv(const std::filesystem::path& vertices_csv, const std::filesystem::path& triangles_csv,
                    const Mesh& mesh);
/// Triangles as WGS84 lon/lat polygons.
void write_mesh_geojson(const std::filesystem::path& path, const Mesh& mesh);

}  // namespace chargecast::mesh

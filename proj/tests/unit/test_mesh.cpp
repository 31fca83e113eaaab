#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "chargecast/common.hpp"
#include "chargecast/mesh.hpp"

using namespace chargecast;
using namespace chargecast::mesh;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Mesh unit_triangle() {
  Mesh m;
  m.vertices.resize(3, 2);
  m.vertices << 0, 0, 1, 0, 0, 1;
  m.triangles = {{0, 1, 2}};
  m.inner = {true};
  m.n_sites = 3;
  m.inner_hull = m.vertices;
  return m;
}

// K_1(x) = int_0^inf exp(-x cosh t) cosh t dt, midpoint rule
double bessel_k1_quadrature(double x) {
  double s = 0.0;
  const double h = 1e-4;
  for (double t = h / 2; t < 12.0; t += h) s += std::exp(-x * std::cosh(t)) * std::cosh(t) * h;
  return s;
}

Eigen::MatrixX2d glasgow_stations(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lon(-4.313, -4.210), lat(55.843, 55.883);
  Eigen::MatrixX2d ll(n, 2);
  for (int i = 0; i < n; ++i) ll.row(i) << lon(rng), lat(rng);
  return ll;
}

}  // namespace

TEST_CASE("equirectangular projection") {
  Eigen::MatrixX2d ll(2, 2);
  ll << -4.25, 55.86, -4.25, 55.861;
  const auto p = project_coords(ll);
  CHECK(p.xy.colwise().mean().norm() < 1e-9);
  CHECK(p.xy(1, 1) - p.xy(0, 1) == doctest::Approx(111.19).epsilon(1e-4));
  CHECK(p.xy(1, 1) - p.xy(0, 1) == doctest::Approx(kEarthRadiusM * (55.861 - 55.86) * kDeg).epsilon(1e-12));

  Eigen::MatrixX2d corners(4, 2);
  corners << -4.313, 55.843, -4.210, 55.843, -4.210, 55.883, -4.313, 55.883;
  const auto c = project_coords(corners);
  const double width = c.xy.col(0).maxCoeff() - c.xy.col(0).minCoeff();
  const double height = c.xy.col(1).maxCoeff() - c.xy.col(1).minCoeff();
  const double lat0 = 55.863;
  CHECK(width == doctest::Approx(kEarthRadiusM * std::cos(lat0 * kDeg) * 0.103 * kDeg).epsilon(1e-9));
  CHECK(height == doctest::Approx(kEarthRadiusM * 0.040 * kDeg).epsilon(1e-9));
  CHECK(std::abs(width / 1000.0 - 6.45) < 0.05);
  CHECK(std::abs(height / 1000.0 - 4.45) < 0.05);

  const Eigen::MatrixX2d back = unproject(c.xy, c.projection);
  CHECK((back - corners).cwiseAbs().maxCoeff() < 1e-9);

  Eigen::MatrixX2d polar(1, 2);
  polar << 0.0, 89.5;
  CHECK_THROWS_AS(project_coords(polar), InputError);
}

TEST_CASE("small meshes") {
  SUBCASE("150 m triangle keeps its three sites and no inner refinement") {
    PlanarPoints p{Eigen::MatrixX2d(3, 2), {}};
    p.xy << 0, 0, 150, 0, 75, 150 * std::sqrt(3.0) / 2;
    const Mesh m = build_mesh(p);
    CHECK(m.n_sites == 3);
    const MeshAudit a = audit_mesh(m);
    CHECK(a.max_inner_edge <= 200.0);
    CHECK(a.max_outer_edge <= 2000.0);
    CHECK(a.delaunay_violations == 0);
    // no vertex strictly inside the site triangle
    for (Eigen::Index v = 3; v < m.vertex_count(); ++v) {
      const Eigen::RowVector2d x = m.vertices.row(v);
      bool inside = true;
      for (int e = 0; e < 3; ++e) {
        const Eigen::RowVector2d a0 = p.xy.row(e), a1 = p.xy.row((e + 1) % 3);
        inside = inside && ((a1 - a0)(0) * (x - a0)(1) - (a1 - a0)(1) * (x - a0)(0)) > 1e-9;
      }
      CHECK_FALSE(inside);
    }
  }
  SUBCASE("two close points merge and fail") {
    PlanarPoints p{Eigen::MatrixX2d(2, 2), {}};
    p.xy << 0, 0, 50, 0;
    CHECK_THROWS_AS(build_mesh(p), InputError);
  }
  SUBCASE("cutoff merging is greedy by index") {
    PlanarPoints p{Eigen::MatrixX2d(4, 2), {}};
    p.xy << 0, 0, 60, 0, 1000, 0, 500, 800;
    const Mesh m = build_mesh(p);
    CHECK(m.n_sites == 3);
    CHECK(m.site_of_input == std::vector<int>{0, 0, 1, 2});
  }
  SUBCASE("collinear sites are rejected") {
    PlanarPoints p{Eigen::MatrixX2d(3, 2), {}};
    p.xy << 0, 0, 500, 0, 1000, 0;
    CHECK_THROWS_AS(build_mesh(p), InputError);
  }
}

TEST_CASE("96-station mesh audit") {
  const Eigen::MatrixX2d ll = glasgow_stations(96, 42);
  const PlanarPoints p = project_coords(ll);
  const Mesh m = build_mesh(p);
  const MeshAudit a = audit_mesh(m);
  CHECK(a.max_inner_edge <= 200.0);
  CHECK(a.max_outer_edge <= 2000.0);
  CHECK(a.min_area > 1e-6);
  CHECK(a.delaunay_violations == 0);
  CHECK(a.min_site_distance >= 100.0);
  for (const auto& t : m.triangles) {
    const Eigen::RowVector2d a0 = m.vertices.row(t[0]), a1 = m.vertices.row(t[1]), a2 = m.vertices.row(t[2]);
    CHECK(((a1 - a0)(0) * (a2 - a0)(1) - (a1 - a0)(1) * (a2 - a0)(0)) > 0.0);
  }
  // every station sits inside the mesh, away from the outer boundary
  const RowSparse A = projection_matrix(m, p.xy);
  CHECK(A.rows() == 96);
  const Eigen::RowVector2d centre = 0.5 * (p.xy.colwise().minCoeff() + p.xy.colwise().maxCoeff());
  double outer = 0.0;
  for (Eigen::Index v = 0; v < m.vertex_count(); ++v) outer = std::max(outer, (m.vertices.row(v) - centre).norm());
  for (Eigen::Index i = 0; i < 96; ++i) CHECK((p.xy.row(i) - centre).norm() < outer - 1000.0);

  const auto fem = assemble_fem(m);
  const StructureMatrix Q = spde_precision(fem, {5.16, -5.44});
  CHECK(Q.is_exactly_symmetric());
  Eigen::SimplicialLLT<SparseMatrix> llt(Q.matrix);
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("finite element matrices") {
  const Mesh tri = unit_triangle();
  const auto fem = assemble_fem(tri);
  Eigen::Matrix3d expect;
  expect << 2, -1, -1, -1, 1, 0, -1, 0, 1;
  expect *= 0.5;
  CHECK((Eigen::MatrixXd(fem.G) - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((fem.c_lumped.array() - 1.0 / 6.0).abs().maxCoeff() < 1e-15);
  CHECK(fem.total_area == doctest::Approx(0.5));

  Mesh bad = tri;
  bad.vertices.row(2) << 2, 0;
  CHECK_THROWS_WITH_AS(assemble_fem(bad), doctest::Contains("triangle 0"), InputError);

  const Mesh grid = regular_grid_mesh(0, 0, 30, 20, 6, 4);
  const auto g = assemble_fem(grid);
  CHECK(g.c_lumped.sum() == doctest::Approx(600.0).epsilon(1e-12));
  CHECK(g.total_area == doctest::Approx(600.0).epsilon(1e-12));
  CHECK((g.G * Eigen::VectorXd::Ones(g.G.cols())).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::MatrixXd Gd(g.G);
  CHECK((Gd - Gd.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Gd);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("spde precision") {
  const Mesh grid = regular_grid_mesh(0, 0, 1000, 800, 10, 8);
  const auto fem = assemble_fem(grid);
  const SpdeParams p{0.3, std::log(0.004)};
  const StructureMatrix Q = spde_precision(fem, p);
  CHECK(Q.is_exactly_symmetric());

  // direct assembly from the formula
  const double tau = std::exp(p.log_tau), kappa = std::exp(p.log_kappa);
  const Eigen::MatrixXd C = fem.c_lumped.asDiagonal();
  const Eigen::MatrixXd G(fem.G);
  const Eigen::MatrixXd direct = tau * tau * (std::pow(kappa, 4) * C + 2 * kappa * kappa * G + G * C.inverse() * G);
  CHECK((Eigen::MatrixXd(Q.matrix) - direct).cwiseAbs().maxCoeff() < 1e-12 * direct.cwiseAbs().maxCoeff());

  // tau scaling
  const StructureMatrix Q2 = spde_precision(fem, {p.log_tau + std::log(3.0), p.log_kappa});
  CHECK((Eigen::MatrixXd(Q2.matrix) - 9.0 * Eigen::MatrixXd(Q.matrix)).cwiseAbs().maxCoeff() <
        1e-12 * direct.cwiseAbs().maxCoeff() * 9.0);

  // sparsity: nonzero only within two mesh edges
  const Eigen::Index V = grid.vertex_count();
  Eigen::MatrixXi hop = Eigen::MatrixXi::Constant(V, V, 99);
  for (Eigen::Index i = 0; i < V; ++i) hop(i, i) = 0;
  for (const auto& t : grid.triangles)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) hop(t[static_cast<std::size_t>(a)], t[static_cast<std::size_t>(b)]) = 1;
  Eigen::MatrixXi two = hop;
  for (Eigen::Index i = 0; i < V; ++i)
    for (Eigen::Index k = 0; k < V; ++k)
      if (hop(i, k) == 1)
        for (Eigen::Index j = 0; j < V; ++j)
          if (hop(k, j) == 1) two(i, j) = std::min(two(i, j), 2);
  for (int k = 0; k < Q.matrix.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(Q.matrix, k); it; ++it)
      if (it.value() != 0.0) CHECK(two(it.row(), it.col()) <= 2);

  CHECK_THROWS_AS(spde_precision(fem, {0.0, -INFINITY}), InputError);
}

TEST_CASE("matern correlation") {
  CHECK(matern_correlation(0.0, 0.01) == 1.0);
  const double kappa = 0.004;
  const double rho = std::sqrt(8.0) / kappa;
  const double x = std::sqrt(8.0);
  const double oracle = x * bessel_k1_quadrature(x);
  CHECK(matern_correlation(rho, kappa) == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(oracle == doctest::Approx(0.139).epsilon(5e-3));
  double prev = 1.0;
  for (double d = 1.0; d < 3000.0; d += 7.0) {
    const double r = matern_correlation(d, kappa);
    CHECK(r < prev);
    CHECK(r > 0.0);
    prev = r;
  }
  CHECK_THROWS_AS(matern_correlation(-1.0, kappa), InputError);
}

TEST_CASE("range and variance transforms") {
  const auto rv = range_variance({5.16, -5.44});
  CHECK(rv.range == doctest::Approx(std::sqrt(8.0) * std::exp(5.44)).epsilon(1e-14));
  CHECK(std::abs(rv.range - 651.8) < 0.1);
  CHECK(rv.range > 338.9);
  CHECK(rv.range < 1175.1);
  CHECK(std::abs(rv.variance - 0.1393) < 1e-3);
  CHECK(std::sqrt(rv.variance) == doctest::Approx(0.373).epsilon(2e-3));
  const auto doubled = range_variance({5.16, -5.44 + std::log(2.0)});
  CHECK(doubled.range == doctest::Approx(rv.range / 2).epsilon(1e-14));
}

TEST_CASE("barycentric projection") {
  const Mesh tri = unit_triangle();
  Eigen::MatrixX2d loc(4, 2);
  loc << 0.25, 0.25, 1.0 / 3, 1.0 / 3, 1, 0, 0, 0;
  const RowSparse A = projection_matrix(tri, loc);
  const Eigen::MatrixXd Ad(A);
  CHECK((Ad.row(0) - Eigen::RowVector3d(0.5, 0.25, 0.25)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((Ad.row(1).array() - 1.0 / 3).abs().maxCoeff() < 1e-15);
  CHECK(Ad(2, 1) == 1.0);
  CHECK(A.row(2).nonZeros() == 1);
  CHECK(Ad(3, 0) == 1.0);

  Eigen::MatrixX2d outside(1, 2);
  outside << 2, 2;
  CHECK_THROWS_WITH_AS(projection_matrix(tri, outside), doctest::Contains("location 0"), InputError);

  // rows sum to one and linear fields are reproduced
  const Mesh m = build_mesh(project_coords(glasgow_stations(30, 7)));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(m.inner_hull.col(0).minCoeff(), m.inner_hull.col(0).maxCoeff());
  std::uniform_real_distribution<double> uy(m.inner_hull.col(1).minCoeff(), m.inner_hull.col(1).maxCoeff());
  Eigen::MatrixX2d pts(500, 2);
  for (int i = 0; i < 500; ++i) pts.row(i) << ux(rng), uy(rng);
  const RowSparse P = projection_matrix(m, pts);
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    CHECK(P.row(r).nonZeros() <= 3);
    double s = 0.0;
    for (RowSparse::InnerIterator it(P, r); it; ++it) {
      CHECK(it.value() >= 0.0);
      CHECK(it.value() <= 1.0);
      s += it.value();
    }
    CHECK(s == 1.0);
  }
  const Eigen::VectorXd f =
      (2.5 + 0.01 * m.vertices.col(0).array() - 0.003 * m.vertices.col(1).array()).matrix();
  const Eigen::VectorXd interp = P * f;
  for (Eigen::Index r = 0; r < pts.rows(); ++r)
    CHECK(std::abs(interp(r) - (2.5 + 0.01 * pts(r, 0) - 0.003 * pts(r, 1))) < 1e-9);
}

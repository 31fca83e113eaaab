#include "chargecast/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "chargecast/common.hpp"
#include "chargecast/csv.hpp"

namespace chargecast::mesh {

namespace {

using Vec2 = Eigen::Vector2d;
using Real = long double;

Real orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Real abx = static_cast<Real>(b.x()) - a.x(), aby = static_cast<Real>(b.y()) - a.y();
  const Real acx = static_cast<Real>(c.x()) - a.x(), acy = static_cast<Real>(c.y()) - a.y();
  return abx * acy - aby * acx;
}

/// Positive when d lies strictly inside the circumcircle of counterclockwise (a, b, c).
Real incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const Real adx = static_cast<Real>(a.x()) - d.x(), ady = static_cast<Real>(a.y()) - d.y();
  const Real bdx = static_cast<Real>(b.x()) - d.x(), bdy = static_cast<Real>(b.y()) - d.y();
  const Real cdx = static_cast<Real>(c.x()) - d.x(), cdy = static_cast<Real>(c.y()) - d.y();
  const Real ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

Vec2 circumcenter(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double bx = b.x() - a.x(), by = b.y() - a.y();
  const double cx = c.x() - a.x(), cy = c.y() - a.y();
  const double d = 2.0 * (bx * cy - by * cx);
  const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  return {a.x() + (cy * b2 - by * c2) / d, a.y() + (bx * c2 - cx * b2) / d};
}

/// Incremental Bowyer-Watson triangulation inside a large enclosing triangle.
class Delaunay {
 public:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nb;  // nb[i] is across the edge opposite v[i]
    bool alive = true;
  };

  Delaunay(const Vec2& lo, const Vec2& hi) {
    const Vec2 c = 0.5 * (lo + hi);
    const double m = 100.0 * std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1.0});
    pts_.push_back(c + m * Vec2(-std::sqrt(3.0), -1.0));
    pts_.push_back(c + m * Vec2(std::sqrt(3.0), -1.0));
    pts_.push_back(c + m * Vec2(0.0, 2.0));
    tris_.push_back(Tri{{0, 1, 2}, {-1, -1, -1}, true});
    scale_ = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  }

  const std::vector<Vec2>& points() const { return pts_; }
  const std::vector<Tri>& triangles() const { return tris_; }
  int point_count() const { return static_cast<int>(pts_.size()); }

  /// Inserts p; returns its vertex index, or -1 when p duplicates a vertex.
  int insert(const Vec2& p, int hint = -1) {
    const int t0 = locate(p, hint);
    if (t0 < 0) return -1;
    for (int k : tris_[static_cast<std::size_t>(t0)].v)
      if ((pts_[static_cast<std::size_t>(k)] - p).norm() <= 1e-9 * scale_) return -1;

    ++stamp_;
    mark_.resize(tris_.size(), 0);
    std::vector<int> cavity{t0};
    mark_[static_cast<std::size_t>(t0)] = stamp_;
    for (std::size_t q = 0; q < cavity.size(); ++q) {
      for (int n : tris_[static_cast<std::size_t>(cavity[q])].nb) {
        if (n < 0 || mark_[static_cast<std::size_t>(n)] == stamp_) continue;
        const auto& tv = tris_[static_cast<std::size_t>(n)].v;
        if (incircle(at(tv[0]), at(tv[1]), at(tv[2]), p) > 0) {
          mark_[static_cast<std::size_t>(n)] = stamp_;
          cavity.push_back(n);
        }
      }
    }

    struct BoundaryEdge {
      int a, b, outside;
    };
    std::vector<BoundaryEdge> boundary;
    // grow the cavity until every boundary edge sees p strictly on its left
    for (bool grown = true; grown;) {
      grown = false;
      boundary.clear();
      for (int c : cavity) {
        const Tri& t = tris_[static_cast<std::size_t>(c)];
        for (int i = 0; i < 3 && !grown; ++i) {
          const int n = t.nb[static_cast<std::size_t>(i)];
          if (n >= 0 && mark_[static_cast<std::size_t>(n)] == stamp_) continue;
          const int a = t.v[static_cast<std::size_t>((i + 1) % 3)];
          const int b = t.v[static_cast<std::size_t>((i + 2) % 3)];
          const Real tol = 1e-12L * static_cast<Real>((at(b) - at(a)).norm()) * static_cast<Real>((p - at(a)).norm());
          if (orient(at(a), at(b), p) <= tol) {
            if (n < 0) return -1;
            mark_[static_cast<std::size_t>(n)] = stamp_;
            cavity.push_back(n);
            grown = true;
          } else {
            boundary.push_back({a, b, n});
          }
        }
        if (grown) break;
      }
    }

    const int pi = static_cast<int>(pts_.size());
    pts_.push_back(p);
    std::unordered_map<int, int> starts_at, ends_at;
    std::vector<int> created;
    for (const auto& e : boundary) {
      const int id = static_cast<int>(tris_.size());
      tris_.push_back(Tri{{e.a, e.b, pi}, {-1, -1, e.outside}, true});
      if (e.outside >= 0) {
        Tri& o = tris_[static_cast<std::size_t>(e.outside)];
        for (int j = 0; j < 3; ++j) {
          const int oa = o.v[static_cast<std::size_t>((j + 1) % 3)];
          const int ob = o.v[static_cast<std::size_t>((j + 2) % 3)];
          if (oa == e.b && ob == e.a) o.nb[static_cast<std::size_t>(j)] = id;
        }
      }
      starts_at[e.a] = id;
      ends_at[e.b] = id;
      created.push_back(id);
    }
    for (int id : created) {
      Tri& t = tris_[static_cast<std::size_t>(id)];
      t.nb[0] = starts_at.at(t.v[1]);  // edge (b, p)
      t.nb[1] = ends_at.at(t.v[0]);    // edge (p, a)
    }
    for (int c : cavity) tris_[static_cast<std::size_t>(c)].alive = false;
    last_ = created.front();
    return pi;
  }

 private:
  const Vec2& at(int k) const { return pts_[static_cast<std::size_t>(k)]; }

  int locate(const Vec2& p, int hint) const {
    int t = (hint >= 0 && tris_[static_cast<std::size_t>(hint)].alive) ? hint : last_;
    if (!tris_[static_cast<std::size_t>(t)].alive) t = first_alive();
    const std::size_t max_steps = 4 * tris_.size() + 64;
    for (std::size_t step = 0; step < max_steps; ++step) {
      const Tri& tr = tris_[static_cast<std::size_t>(t)];
      int next = -2;
      for (int k = 0; k < 3; ++k) {
        const int i = static_cast<int>((static_cast<std::size_t>(k) + step) % 3);
        const int a = tr.v[static_cast<std::size_t>((i + 1) % 3)];
        const int b = tr.v[static_cast<std::size_t>((i + 2) % 3)];
        if (orient(at(a), at(b), p) < 0) {
          next = tr.nb[static_cast<std::size_t>(i)];
          break;
        }
      }
      if (next == -2) return t;
      if (next < 0) return -1;
      t = next;
    }
    // walking can cycle on degenerate input; fall back to a scan
    for (std::size_t k = 0; k < tris_.size(); ++k) {
      const Tri& tr = tris_[k];
      if (!tr.alive) continue;
      if (orient(at(tr.v[0]), at(tr.v[1]), p) >= 0 && orient(at(tr.v[1]), at(tr.v[2]), p) >= 0 &&
          orient(at(tr.v[2]), at(tr.v[0]), p) >= 0)
        return static_cast<int>(k);
    }
    return -1;
  }

  int first_alive() const {
    for (std::size_t k = tris_.size(); k-- > 0;)
      if (tris_[k].alive) return static_cast<int>(k);
    return 0;
  }

  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  std::vector<int> mark_;
  int stamp_ = 0;
  int last_ = 0;
  double scale_ = 1.0;
};

/// Counterclockwise convex hull (monotone chain), collinear points dropped.
std::vector<Vec2> convex_hull(std::vector<Vec2> p) {
  std::sort(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (p.size() < 3) return p;
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && orient(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && orient(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

bool inside_convex(const Eigen::MatrixX2d& hull, const Vec2& p) {
  const auto n = hull.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2 a = hull.row(i), b = hull.row((i + 1) % n);
    if (orient(a, b, p) < 0) return false;
  }
  return true;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

double tri_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * static_cast<double>(orient(a, b, c));
}

}  // namespace

// --- projection -------------------------------------------------------------------------

PlanarPoints project_coords(const Eigen::MatrixX2d& lonlat) {
  if (lonlat.rows() == 0) return PlanarPoints{Eigen::MatrixX2d(0, 2), Projection{}};
  Projection proj;
  proj.lon0 = lonlat.col(0).mean();
  proj.lat0 = lonlat.col(1).mean();
  return project_coords(lonlat, proj);
}

PlanarPoints project_coords(const Eigen::MatrixX2d& lonlat, const Projection& projection) {
  constexpr double deg = std::numbers::pi / 180.0;
  PlanarPoints out{Eigen::MatrixX2d(lonlat.rows(), 2), projection};
  const double coslat = std::cos(projection.lat0 * deg);
  for (Eigen::Index i = 0; i < lonlat.rows(); ++i) {
    if (std::abs(lonlat(i, 1)) > 89.0) throw InputError("project_coords: latitude outside +-89 degrees");
    out.xy(i, 0) = projection.radius * coslat * (lonlat(i, 0) - projection.lon0) * deg;
    out.xy(i, 1) = projection.radius * (lonlat(i, 1) - projection.lat0) * deg;
  }
  return out;
}

Eigen::MatrixX2d unproject(const Eigen::MatrixX2d& xy, const Projection& projection) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double coslat = std::cos(projection.lat0 * deg);
  Eigen::MatrixX2d out(xy.rows(), 2);
  for (Eigen::Index i = 0; i < xy.rows(); ++i) {
    out(i, 0) = projection.lon0 + xy(i, 0) / (projection.radius * coslat * deg);
    out(i, 1) = projection.lat0 + xy(i, 1) / (projection.radius * deg);
  }
  return out;
}

// --- mesh -------------------------------------------------------------------------------

double Mesh::area(std::size_t t) const {
  const auto& tr = triangles[t];
  return tri_area(vertices.row(tr[0]), vertices.row(tr[1]), vertices.row(tr[2]));
}

double Mesh::max_edge(std::size_t t) const {
  const auto& tr = triangles[t];
  double m = 0.0;
  for (int i = 0; i < 3; ++i)
    m = std::max(m, (vertices.row(tr[static_cast<std::size_t>(i)]) -
                     vertices.row(tr[static_cast<std::size_t>((i + 1) % 3)]))
                        .norm());
  return m;
}

Mesh build_mesh(const PlanarPoints& points, const MeshOptions& options) {
  if (!(options.inner_edge > 0) || !(options.outer_edge > 0) || !(options.cutoff >= 0))
    throw InputError("build_mesh: edge lengths must be positive");
  if (!points.xy.allFinite()) throw InputError("build_mesh: non-finite coordinates");

  // greedy cutoff merge in input order
  std::vector<Vec2> sites;
  std::vector<int> site_of_input;
  for (Eigen::Index i = 0; i < points.xy.rows(); ++i) {
    const Vec2 p = points.xy.row(i);
    int found = -1;
    for (std::size_t s = 0; s < sites.size(); ++s)
      if ((sites[s] - p).norm() < options.cutoff) {
        found = static_cast<int>(s);
        break;
      }
    if (found < 0) {
      found = static_cast<int>(sites.size());
      sites.push_back(p);
    }
    site_of_input.push_back(found);
  }
  if (sites.size() < 3)
    throw InputError("build_mesh: only " + std::to_string(sites.size()) + " site(s) remain after cutoff merging");
  const auto hull = convex_hull(sites);
  if (hull.size() < 3 || polygon_area(hull) <= 1e-6)
    throw InputError("build_mesh: sites are collinear");

  // circular outer boundary, at least outer_edge away from the hull
  Vec2 lo = sites.front(), hi = sites.front();
  for (const auto& s : sites) {
    lo = lo.cwiseMin(s);
    hi = hi.cwiseMax(s);
  }
  const Vec2 center = 0.5 * (lo + hi);
  double reach = 0.0;
  for (const auto& s : sites) reach = std::max(reach, (s - center).norm());
  const double radius = reach + options.outer_edge;
  const double max_chord = 0.9 * options.outer_edge;
  const int n_boundary =
      std::max(12, static_cast<int>(std::ceil(std::numbers::pi / std::asin(std::min(1.0, 0.5 * max_chord / radius)))));
  const double apothem = radius * std::cos(std::numbers::pi / n_boundary);

  Delaunay dt(center - Vec2::Constant(radius), center + Vec2::Constant(radius));
  for (const auto& s : sites)
    if (dt.insert(s) < 0) throw NumericalError("build_mesh: failed to insert a site");
  for (int k = 0; k < n_boundary; ++k) {
    const double a = 2.0 * std::numbers::pi * k / n_boundary;
    dt.insert(center + radius * Vec2(std::cos(a), std::sin(a)));
  }
  const int first_boundary = 3 + static_cast<int>(sites.size());
  const int last_boundary = first_boundary + n_boundary;  // exclusive

  Eigen::MatrixX2d hull_m(static_cast<Eigen::Index>(hull.size()), 2);
  for (std::size_t i = 0; i < hull.size(); ++i) hull_m.row(static_cast<Eigen::Index>(i)) = hull[i];

  const auto is_boundary = [&](int v) { return v >= first_boundary && v < last_boundary; };
  const auto& P = dt.points();
  const auto limit_of = [&](const std::array<int, 3>& v) {
    const Vec2 c = (P[static_cast<std::size_t>(v[0])] + P[static_cast<std::size_t>(v[1])] +
                    P[static_cast<std::size_t>(v[2])]) / 3.0;
    return inside_convex(hull_m, c) ? options.inner_edge : options.outer_edge;
  };

  while (true) {
    std::vector<int> bad;
    const auto& T = dt.triangles();
    for (std::size_t t = 0; t < T.size(); ++t) {
      if (!T[t].alive || T[t].v[0] < 3 || T[t].v[1] < 3 || T[t].v[2] < 3) continue;
      const auto& v = T[t].v;
      double longest = 0.0;
      for (int i = 0; i < 3; ++i)
        longest = std::max(longest, (P[static_cast<std::size_t>(v[static_cast<std::size_t>(i)])] -
                                     P[static_cast<std::size_t>(v[static_cast<std::size_t>((i + 1) % 3)])])
                                        .norm());
      if (longest > limit_of(v)) bad.push_back(static_cast<int>(t));
    }
    if (bad.empty()) break;
    int inserted = 0;
    for (int t : bad) {
      const auto tri = dt.triangles()[static_cast<std::size_t>(t)];
      if (!tri.alive) continue;
      const Vec2 a = dt.points()[static_cast<std::size_t>(tri.v[0])];
      const Vec2 b = dt.points()[static_cast<std::size_t>(tri.v[1])];
      const Vec2 c = dt.points()[static_cast<std::size_t>(tri.v[2])];
      Vec2 target = circumcenter(a, b, c);
      if (!target.allFinite() || (target - center).norm() > apothem - 1e-3 * options.outer_edge) {
        // circumcenter outside the domain: split the longest non-boundary edge instead
        int best = -1;
        double best_len = -1.0;
        for (int i = 0; i < 3; ++i) {
          const int u = tri.v[static_cast<std::size_t>(i)], w = tri.v[static_cast<std::size_t>((i + 1) % 3)];
          if (is_boundary(u) && is_boundary(w)) continue;
          const double len = (dt.points()[static_cast<std::size_t>(u)] - dt.points()[static_cast<std::size_t>(w)]).norm();
          if (len > best_len) {
            best_len = len;
            best = i;
          }
        }
        if (best < 0) continue;
        target = 0.5 * (dt.points()[static_cast<std::size_t>(tri.v[static_cast<std::size_t>(best)])] +
                        dt.points()[static_cast<std::size_t>(tri.v[static_cast<std::size_t>((best + 1) % 3)])]);
      }
      if (dt.insert(target, t) >= 0) ++inserted;
      if (dt.point_count() - 3 > options.max_vertices)
        throw NumericalError("build_mesh: vertex budget exceeded during refinement");
    }
    if (inserted == 0) throw NumericalError("build_mesh: refinement stalled");
  }

  Mesh mesh;
  mesh.projection = points.projection;
  mesh.n_sites = static_cast<int>(sites.size());
  mesh.site_of_input = std::move(site_of_input);
  mesh.inner_hull = hull_m;
  const auto& pts = dt.points();
  mesh.vertices.resize(static_cast<Eigen::Index>(pts.size() - 3), 2);
  for (std::size_t i = 3; i < pts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i - 3)) = pts[i];
  for (const auto& t : dt.triangles()) {
    if (!t.alive || t.v[0] < 3 || t.v[1] < 3 || t.v[2] < 3) continue;
    mesh.triangles.push_back({t.v[0] - 3, t.v[1] - 3, t.v[2] - 3});
    mesh.inner.push_back(limit_of(t.v) == options.inner_edge && options.inner_edge != options.outer_edge
                             ? true
                             : inside_convex(hull_m, (pts[static_cast<std::size_t>(t.v[0])] +
                                                      pts[static_cast<std::size_t>(t.v[1])] +
                                                      pts[static_cast<std::size_t>(t.v[2])]) / 3.0));
  }
  return mesh;
}

Mesh regular_grid_mesh(double x0, double y0, double width, double height, int nx, int ny) {
  if (nx < 1 || ny < 1 || !(width > 0) || !(height > 0)) throw InputError("regular_grid_mesh: bad dimensions");
  Mesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>((nx + 1) * (ny + 1)), 2);
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      mesh.vertices(id(i, j), 0) = x0 + width * i / nx;
      mesh.vertices(id(i, j), 1) = y0 + height * j / ny;
    }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  mesh.inner.assign(mesh.triangles.size(), true);
  mesh.inner_hull.resize(4, 2);
  mesh.inner_hull << x0, y0, x0 + width, y0, x0 + width, y0 + height, x0, y0 + height;
  return mesh;
}

MeshAudit audit_mesh(const Mesh& mesh, double delaunay_tol) {
  MeshAudit a;
  a.min_area = std::numeric_limits<double>::infinity();
  a.min_site_distance = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const double e = mesh.max_edge(t);
    (mesh.inner[t] ? a.max_inner_edge : a.max_outer_edge) =
        std::max(mesh.inner[t] ? a.max_inner_edge : a.max_outer_edge, e);
    a.min_area = std::min(a.min_area, mesh.area(t));
    const auto& tr = mesh.triangles[t];
    const Vec2 p0 = mesh.vertices.row(tr[0]), p1 = mesh.vertices.row(tr[1]), p2 = mesh.vertices.row(tr[2]);
    const Vec2 cc = circumcenter(p0, p1, p2);
    const double r = (cc - p0).norm();
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
      if (v == tr[0] || v == tr[1] || v == tr[2]) continue;
      if ((Vec2(mesh.vertices.row(v)) - cc).norm() < r * (1.0 - delaunay_tol)) ++a.delaunay_violations;
    }
  }
  for (int i = 0; i < mesh.n_sites; ++i)
    for (int j = i + 1; j < mesh.n_sites; ++j)
      a.min_site_distance = std::min(a.min_site_distance, (mesh.vertices.row(i) - mesh.vertices.row(j)).norm());
  return a;
}

// --- finite elements --------------------------------------------------------------------

FemMatrices assemble_fem(const Mesh& mesh) {
  const auto nv = mesh.vertex_count();
  FemMatrices fem;
  fem.c_lumped = Eigen::VectorXd::Zero(nv);
  std::vector<Triplet> trips;
  trips.reserve(mesh.triangles.size() * 9);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tr = mesh.triangles[t];
    const Vec2 p[3] = {mesh.vertices.row(tr[0]), mesh.vertices.row(tr[1]), mesh.vertices.row(tr[2])};
    const double area = tri_area(p[0], p[1], p[2]);
    if (!(area > 1e-6)) throw InputError("assemble_fem: degenerate triangle " + std::to_string(t));
    fem.total_area += area;
    Vec2 grad[3];
    for (int i = 0; i < 3; ++i) {
      const Vec2& pj = p[(i + 1) % 3];
      const Vec2& pk = p[(i + 2) % 3];
      grad[i] = Vec2(pj.y() - pk.y(), pk.x() - pj.x()) / (2.0 * area);
    }
    for (int i = 0; i < 3; ++i) {
      fem.c_lumped(tr[static_cast<std::size_t>(i)]) += area / 3.0;
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(tr[static_cast<std::size_t>(i)], tr[static_cast<std::size_t>(j)],
                           area * grad[i].dot(grad[j]));
    }
  }
  fem.G.resize(nv, nv);
  fem.G.setFromTriplets(trips.begin(), trips.end());
  fem.G.makeCompressed();
  return fem;
}

StructureMatrix spde_precision(const FemMatrices& fem, const SpdeParams& params) {
  if (!std::isfinite(params.log_kappa) || !std::isfinite(params.log_tau))
    throw InputError("spde_precision: kappa and tau must be positive and finite");
  const double tau2 = std::exp(2.0 * params.log_tau);
  const double k2 = std::exp(2.0 * params.log_kappa);
  const auto n = fem.c_lumped.size();
  SparseMatrix C(n, n), Cinv(n, n);
  C.reserve(Eigen::VectorXi::Constant(n, 1));
  Cinv.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    C.insert(i, i) = fem.c_lumped(i);
    Cinv.insert(i, i) = 1.0 / fem.c_lumped(i);
  }
  const SparseMatrix GCG = fem.G * Cinv * fem.G;
  SparseMatrix Q = tau2 * (k2 * k2 * C + 2.0 * k2 * fem.G + GCG);
  const SparseMatrix Qt = Q.transpose();
  Q = 0.5 * (Q + Qt);
  Q.prune(0.0);
  Q.makeCompressed();
  StructureMatrix out;
  out.matrix = std::move(Q);
  return out;
}

double matern_correlation(double d, double kappa, double nu) {
  if (d < 0) throw InputError("matern_correlation: negative distance");
  const double x = kappa * d;
  if (x == 0.0) return 1.0;
  if (x > 700.0) return 0.0;
  return std::exp((1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x)) * std::cyl_bessel_k(nu, x);
}

RangeVariance range_variance(const SpdeParams& params) {
  return {std::sqrt(8.0) / std::exp(params.log_kappa),
          1.0 / (4.0 * std::numbers::pi * std::exp(2.0 * params.log_tau) * std::exp(2.0 * params.log_kappa))};
}

RowSparse projection_matrix(const Mesh& mesh, const Eigen::MatrixX2d& locations) {
  // edge -> triangle adjacency for the walk
  const std::size_t nt = mesh.triangles.size();
  std::vector<std::array<int, 3>> nb(nt, {-1, -1, -1});
  {
    std::unordered_map<long long, int> edge_owner;
    const long long nv = mesh.vertex_count();
    for (std::size_t t = 0; t < nt; ++t)
      for (int i = 0; i < 3; ++i) {
        const int a = mesh.triangles[t][static_cast<std::size_t>((i + 1) % 3)];
        const int b = mesh.triangles[t][static_cast<std::size_t>((i + 2) % 3)];
        const auto rev = edge_owner.find(static_cast<long long>(b) * nv + a);
        if (rev != edge_owner.end()) {
          const int o = rev->second;
          nb[t][static_cast<std::size_t>(i)] = o;
          for (int j = 0; j < 3; ++j)
            if (mesh.triangles[static_cast<std::size_t>(o)][static_cast<std::size_t>((j + 1) % 3)] == b &&
                mesh.triangles[static_cast<std::size_t>(o)][static_cast<std::size_t>((j + 2) % 3)] == a)
              nb[static_cast<std::size_t>(o)][static_cast<std::size_t>(j)] = static_cast<int>(t);
        } else {
          edge_owner[static_cast<long long>(a) * nv + b] = static_cast<int>(t);
        }
      }
  }
  constexpr double tol = 1e-9;
  auto barycentric = [&](std::size_t t, const Vec2& p) {
    const auto& tr = mesh.triangles[t];
    const Vec2 a = mesh.vertices.row(tr[0]), b = mesh.vertices.row(tr[1]), c = mesh.vertices.row(tr[2]);
    const double area2 = static_cast<double>(orient(a, b, c));
    return Eigen::Vector3d(static_cast<double>(orient(b, c, p)) / area2,
                           static_cast<double>(orient(c, a, p)) / area2,
                           static_cast<double>(orient(a, b, p)) / area2);
  };

  std::vector<Eigen::Triplet<double>> trips;
  int hint = 0;
  for (Eigen::Index r = 0; r < locations.rows(); ++r) {
    const Vec2 p = locations.row(r);
    int found = -1;
    int t = hint;
    for (std::size_t step = 0; step < 4 * nt + 16 && t >= 0; ++step) {
      const Eigen::Vector3d w = barycentric(static_cast<std::size_t>(t), p);
      Eigen::Index worst = 0;
      const double mn = w.minCoeff(&worst);
      if (mn >= -tol) {
        found = t;
        break;
      }
      t = nb[static_cast<std::size_t>(t)][static_cast<std::size_t>(worst)];
    }
    if (found < 0)
      for (std::size_t k = 0; k < nt; ++k)
        if (barycentric(k, p).minCoeff() >= -tol) {
          found = static_cast<int>(k);
          break;
        }
    if (found < 0)
      throw InputError("projection_matrix: location " + std::to_string(r) + " lies outside the mesh");
    hint = found;
    Eigen::Vector3d w = barycentric(static_cast<std::size_t>(found), p);
    for (int i = 0; i < 3; ++i)
      if (w(i) < 1e-12) w(i) = 0.0;
    w /= w.sum();
    // order by vertex so the complement lands on the last stored entry
    std::array<std::pair<int, double>, 3> e;
    for (int i = 0; i < 3; ++i) e[static_cast<std::size_t>(i)] = {mesh.triangles[static_cast<std::size_t>(found)][static_cast<std::size_t>(i)], w(i)};
    std::sort(e.begin(), e.end());
    double used = 0.0;
    int last = -1;
    for (int i = 0; i < 3; ++i)
      if (e[static_cast<std::size_t>(i)].second > 0) last = i;
    for (int i = 0; i < 3; ++i) {
      const auto& [v, wv] = e[static_cast<std::size_t>(i)];
      if (wv <= 0) continue;
      const double val = (i == last) ? 1.0 - used : wv;
      trips.emplace_back(static_cast<int>(r), v, val);
      used += wv;
    }
  }
  RowSparse A(locations.rows(), mesh.vertex_count());
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  return A;
}

void write_mesh_csv(const std::filesystem::path& vertices_csv, const std::filesystem::path& triangles_csv,
                    const Mesh& mesh) {
  std::ofstream v(vertices_csv);
  if (!v) throw InputError("cannot write " + vertices_csv.string());
  const Eigen::MatrixX2d ll = unproject(mesh.vertices, mesh.projection);
  v << "vertex,x_m,y_m,lon,lat,is_site\n";
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i)
    v << i << ',' << csv::format_double(mesh.vertices(i, 0)) << ',' << csv::format_double(mesh.vertices(i, 1)) << ','
      << csv::format_double(ll(i, 0)) << ',' << csv::format_double(ll(i, 1)) << ',' << (i < mesh.n_sites ? 1 : 0)
      << '\n';
  std::ofstream t(triangles_csv);
  if (!t) throw InputError("cannot write " + triangles_csv.string());
  t << "triangle,v0,v1,v2,zone\n";
  for (std::size_t k = 0; k < mesh.triangles.size(); ++k)
    t << k << ',' << mesh.triangles[k][0] << ',' << mesh.triangles[k][1] << ',' << mesh.triangles[k][2] << ','
      << (mesh.inner[k] ? "inner" : "extension") << '\n';
}

void write_mesh_geojson(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  const Eigen::MatrixX2d ll = unproject(mesh.vertices, mesh.projection);
  out << "{\"type\":\"FeatureCollection\",\"features\":[";
  for (std::size_t k = 0; k < mesh.triangles.size(); ++k) {
    if (k) out << ',';
    out << "{\"type\":\"Feature\",\"properties\":{\"triangle\":" << k << ",\"zone\":\""
        << (mesh.inner[k] ? "inner" : "extension") << "\"},\"geometry\":{\"type\":\"Polygon\",\"coordinates\":[[";
    for (int i = 0; i <= 3; ++i) {
      const int v = mesh.triangles[k][static_cast<std::size_t>(i % 3)];
      if (i) out << ',';
      out << '[' << csv::format_double(ll(v, 0)) << ',' << csv::format_double(ll(v, 1)) << ']';
    }
    out << "]]}}";
  }
  out << "]}\n";
}

}  // namespace chargecast::mesh

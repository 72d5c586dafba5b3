#include "dualfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "dualfem/errors.hpp"

namespace dualfem {

namespace {

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

double signed_double_area(const Point& a, const Point& b, const Point& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Rotate (cyclically, keeping orientation) so the longest edge is opposite
// local vertex 0.
std::array<int, 3> longest_edge_first(const std::vector<Point>& v, std::array<int, 3> t) {
  int best = 0;
  double best_len = -1.0;
  for (int k = 0; k < 3; ++k) {
    const double len = (v[t[(k + 1) % 3]] - v[t[(k + 2) % 3]]).squaredNorm();
    if (len > best_len) {
      best_len = len;
      best = k;
    }
  }
  return {t[best], t[(best + 1) % 3], t[(best + 2) % 3]};
}

// Unit squares with the given lower-left corners, each cut into 2 * 4^levels
// triangles along the south-west/north-east diagonal.
Mesh structured_mesh(const std::vector<std::array<int, 2>>& cells, int levels,
                     std::size_t budget) {
  if (levels < 0) throw DomainError("mesh levels must be non-negative");
  if (levels > 15) throw ResourceError("mesh levels exceed the triangle budget");
  const long n = 1L << levels;
  const std::size_t count = cells.size() * 2 * static_cast<std::size_t>(n * n);
  if (count > budget) {
    std::ostringstream os;
    os << "structured mesh with " << count << " triangles exceeds budget " << budget;
    throw ResourceError(os.str());
  }
  const double h = 1.0 / static_cast<double>(n);
  std::map<std::pair<long, long>, int> index;
  std::vector<Point> vertices;
  auto vertex = [&](long i, long j) {
    auto [it, inserted] = index.try_emplace({i, j}, static_cast<int>(vertices.size()));
    if (inserted) vertices.emplace_back(static_cast<double>(i) * h, static_cast<double>(j) * h);
    return it->second;
  };
  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(count);
  for (const auto& cell : cells) {
    for (long j = 0; j < n; ++j) {
      for (long i = 0; i < n; ++i) {
        const long gi = cell[0] * n + i;
        const long gj = cell[1] * n + j;
        const int a = vertex(gi, gj);
        const int b = vertex(gi + 1, gj);
        const int c = vertex(gi + 1, gj + 1);
        const int d = vertex(gi, gj + 1);
        triangles.push_back(longest_edge_first(vertices, {a, b, c}));
        triangles.push_back(longest_edge_first(vertices, {a, c, d}));
      }
    }
  }
  return Mesh(std::move(vertices), std::move(triangles));
}

}  // namespace

Mesh::Mesh(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const auto nt = triangles_.size();
  triangle_edges_.resize(nt);
  areas_.resize(nt);
  gradients_.resize(nt);
  edge_lookup_.reserve(nt * 2);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = triangles_[t];
    for (int v : tri) {
      if (v < 0 || static_cast<std::size_t>(v) >= vertices_.size())
        throw DomainError("triangle references a missing vertex");
    }
    const Point& p0 = vertices_[tri[0]];
    const Point& p1 = vertices_[tri[1]];
    const Point& p2 = vertices_[tri[2]];
    const double twice_area = signed_double_area(p0, p1, p2);
    if (!(twice_area > 0.0)) {
      std::ostringstream os;
      os << "triangle " << t << " has non-positive signed area";
      throw DomainError(os.str());
    }
    areas_[t] = 0.5 * twice_area;
    const std::array<const Point*, 3> p{&p0, &p1, &p2};
    for (int k = 0; k < 3; ++k) {
      const Point& a = *p[(k + 1) % 3];
      const Point& b = *p[(k + 2) % 3];
      gradients_[t][k] = Point(a.y() - b.y(), b.x() - a.x()) / twice_area;

      const int va = tri[(k + 1) % 3];
      const int vb = tri[(k + 2) % 3];
      auto [it, inserted] = edge_lookup_.try_emplace(edge_key(va, vb), static_cast<int>(edges_.size()));
      if (inserted) {
        Edge e;
        e.vertices = {std::min(va, vb), std::max(va, vb)};
        e.midpoint = 0.5 * (vertices_[e.vertices[0]] + vertices_[e.vertices[1]]);
        e.triangles = {static_cast<int>(t), -1};
        edges_.push_back(e);
      } else {
        Edge& e = edges_[it->second];
        if (e.triangles[1] >= 0) throw DomainError("edge shared by more than two triangles");
        e.triangles[1] = static_cast<int>(t);
      }
      triangle_edges_[t][k] = it->second;
    }
  }
  boundary_vertex_.assign(vertices_.size(), 0);
  for (const auto& e : edges_) {
    if (e.boundary()) {
      boundary_vertex_[e.vertices[0]] = 1;
      boundary_vertex_[e.vertices[1]] = 1;
    }
  }
}

Point Mesh::barycenter(int t) const {
  const auto& tri = triangles_[t];
  return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
}

double Mesh::diameter(int t) const {
  const auto& tri = triangles_[t];
  double d = 0.0;
  for (int k = 0; k < 3; ++k)
    d = std::max(d, (vertices_[tri[(k + 1) % 3]] - vertices_[tri[(k + 2) % 3]]).norm());
  return d;
}

int Mesh::find_edge(int a, int b) const {
  const auto it = edge_lookup_.find(edge_key(a, b));
  return it == edge_lookup_.end() ? -1 : it->second;
}

double Mesh::total_area() const {
  double sum = 0.0;
  for (double a : areas_) sum += a;
  return sum;
}

double Mesh::bounding_diameter() const {
  if (vertices_.empty()) return 0.0;
  Point lo = vertices_.front();
  Point hi = vertices_.front();
  for (const auto& v : vertices_) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).norm();
}

Mesh lshape_mesh(int levels, std::size_t budget) {
  return structured_mesh({{-1, -1}, {0, -1}, {-1, 0}}, levels, budget);
}

Mesh channel_mesh(int levels, std::size_t budget) {
  std::vector<std::array<int, 2>> cells;
  for (int x = -2; x < 8; ++x) cells.push_back({x, 0});
  for (int x = 0; x < 8; ++x) cells.push_back({x, -1});
  return structured_mesh(cells, levels, budget);
}

Mesh refine(const Mesh& mesh, std::span<const int> marked, std::size_t budget) {
  const auto nt = static_cast<int>(mesh.triangle_count());
  std::vector<char> edge_marked(mesh.edge_count(), 0);
  std::vector<int> work;
  auto mark_edge = [&](int e) {
    if (edge_marked[e]) return;
    edge_marked[e] = 1;
    for (int t : mesh.edge(e).triangles)
      if (t >= 0) work.push_back(t);
  };
  for (int t : marked) {
    if (t < 0 || t >= nt) throw DomainError("refine: marked triangle index out of range");
    mark_edge(mesh.triangle_edges(t)[0]);
  }
  // Closure: a triangle with any marked edge must bisect its refinement edge.
  while (!work.empty()) {
    const int t = work.back();
    work.pop_back();
    mark_edge(mesh.triangle_edges(t)[0]);
  }

  std::vector<Point> vertices = mesh.vertices();
  std::vector<int> midpoint(mesh.edge_count(), -1);
  for (std::size_t e = 0; e < mesh.edge_count(); ++e) {
    if (!edge_marked[e]) continue;
    midpoint[e] = static_cast<int>(vertices.size());
    vertices.push_back(mesh.edge(e).midpoint);
  }

  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(mesh.triangle_count() * 2);
  // Children's refinement edges are edges of the parent, so the marks on the
  // old mesh decide every level of the recursion.
  auto bisect = [&](auto&& self, const std::array<int, 3>& tri) -> void {
    const int e = mesh.find_edge(tri[1], tri[2]);
    if (e < 0 || !edge_marked[e]) {
      triangles.push_back(tri);
      return;
    }
    const int m = midpoint[e];
    self(self, {m, tri[0], tri[1]});
    self(self, {m, tri[2], tri[0]});
  };
  for (const auto& tri : mesh.triangles()) bisect(bisect, tri);
  if (triangles.size() > budget) {
    std::ostringstream os;
    os << "refinement produced " << triangles.size() << " triangles, budget " << budget;
    throw ResourceError(os.str());
  }
  return Mesh(std::move(vertices), std::move(triangles));
}

Mesh grade_toward(const Mesh& mesh, const Point& point, int depth, std::size_t budget) {
  if (depth < 0) throw DomainError("grade_toward: depth must be non-negative");
  Mesh current = mesh;
  const double diam = mesh.bounding_diameter();
  for (int k = 1; k <= depth; ++k) {
    const double radius = std::ldexp(diam, -k);
    // Two bisection sweeps halve the local mesh size, matching the radius.
    for (int sweep = 0; sweep < 2; ++sweep) {
      std::vector<int> marked;
      for (int t = 0; t < static_cast<int>(current.triangle_count()); ++t)
        if ((current.barycenter(t) - point).norm() <= radius) marked.push_back(t);
      if (marked.empty()) break;
      current = refine(current, marked, budget);
    }
  }
  return current;
}

ConformityReport check_conformity(const Mesh& mesh) {
  ConformityReport report;
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    const auto& tri = mesh.triangle(t);
    if (!(signed_double_area(mesh.vertex(tri[0]), mesh.vertex(tri[1]), mesh.vertex(tri[2])) > 0.0))
      report.positive_orientation = false;
  }
  // An interior edge must be traversed a->b by one triangle and b->a by the other.
  auto traverses_forward = [&](int t, const Edge& e) {
    const auto& tri = mesh.triangle(t);
    for (int k = 0; k < 3; ++k)
      if (tri[k] == e.vertices[0] && tri[(k + 1) % 3] == e.vertices[1]) return true;
    return false;
  };
  for (const auto& e : mesh.edges()) {
    if (e.triangles[0] < 0) report.edge_incidence = false;
    if (!e.boundary() &&
        traverses_forward(e.triangles[0], e) == traverses_forward(e.triangles[1], e))
      report.opposite_traversal = false;
  }
  // Hanging nodes show up as vertices in the relative interior of a
  // boundary-flagged edge. Bucket the vertices to keep this near linear.
  const double diam = mesh.bounding_diameter();
  if (diam <= 0.0) return report;
  Point lo = mesh.vertex(0);
  for (const auto& v : mesh.vertices()) lo = lo.cwiseMin(v);
  const int buckets = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.vertex_count()))));
  const double cell = diam / buckets;
  std::map<std::pair<int, int>, std::vector<int>> grid;
  auto bucket_of = [&](const Point& p) {
    return std::pair<int, int>(static_cast<int>(std::floor((p.x() - lo.x()) / cell)),
                               static_cast<int>(std::floor((p.y() - lo.y()) / cell)));
  };
  for (int v = 0; v < static_cast<int>(mesh.vertex_count()); ++v)
    grid[bucket_of(mesh.vertex(v))].push_back(v);
  for (const auto& e : mesh.edges()) {
    if (!e.boundary()) continue;
    const Point& a = mesh.vertex(e.vertices[0]);
    const Point& b = mesh.vertex(e.vertices[1]);
    const auto [ia, ja] = bucket_of(a.cwiseMin(b));
    const auto [ib, jb] = bucket_of(a.cwiseMax(b));
    const double len2 = (b - a).squaredNorm();
    for (int i = ia; i <= ib; ++i) {
      for (int j = ja; j <= jb; ++j) {
        const auto it = grid.find({i, j});
        if (it == grid.end()) continue;
        for (int v : it->second) {
          if (v == e.vertices[0] || v == e.vertices[1]) continue;
          const Point& p = mesh.vertex(v);
          const double cross = (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x();
          const double along = (p - a).dot(b - a);
          if (std::abs(cross) <= 1e-12 * len2 && along > 0.0 && along < len2)
            report.no_hanging_nodes = false;
        }
      }
    }
  }
  return report;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << "vertices " << mesh.vertex_count() << " triangles " << mesh.triangle_count() << '\n';
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices()) os << v.x() << ' ' << v.y() << '\n';
  for (const auto& t : mesh.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

}  // namespace dualfem

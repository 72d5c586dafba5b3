#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

namespace dualfem {

using Point = Eigen::Vector2d;

inline constexpr std::size_t kDefaultTriangleBudget = 200'000;

struct Edge {
  std::array<int, 2> vertices;
  Point midpoint;
  /// Incident triangles; the second entry is -1 on the boundary.
  std::array<int, 2> triangles;
  bool boundary() const { return triangles[1] < 0; }
};

/// Conforming, counter-clockwise oriented 2D triangulation.
///
/// The vertex order of a triangle carries the newest-vertex-bisection label:
/// local vertex 0 is the newest vertex and the opposite edge (local vertices
/// 1 and 2) is the refinement edge. Edge k of a triangle is the edge opposite
/// local vertex k.
class Mesh {
 public:
  Mesh(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles);

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t triangle_count() const { return triangles_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const Point& vertex(int v) const { return vertices_[v]; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_[e]; }
  const std::array<int, 3>& triangle_edges(int t) const { return triangle_edges_[t]; }

  double area(int t) const { return areas_[t]; }
  /// Gradients of the three barycentric coordinates on triangle t.
  const std::array<Point, 3>& barycentric_gradients(int t) const { return gradients_[t]; }
  Point barycenter(int t) const;
  /// Longest edge length of triangle t.
  double diameter(int t) const;

  bool is_boundary_vertex(int v) const { return boundary_vertex_[v] != 0; }
  /// Edge index for the vertex pair, or -1.
  int find_edge(int a, int b) const;

  double total_area() const;
  /// Diagonal of the bounding box (the domain diameter for the domains used
  /// here).
  double bounding_diameter() const;

 private:
  std::vector<Point> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::array<int, 3>> triangle_edges_;
  std::vector<double> areas_;
  std::vector<std::array<Point, 3>> gradients_;
  std::vector<char> boundary_vertex_;
  std::unordered_map<std::uint64_t, int> edge_lookup_;
};

/// L-shaped domain (-1,1)^2 \ [0,1)^2 from three unit squares, each split
/// into 2 * 4^levels triangles.
Mesh lshape_mesh(int levels, std::size_t budget = kDefaultTriangleBudget);

/// Channel ((-2,8) x (-1,1)) \ ([-2,0] x [-1,0]) from 18 unit squares. The
/// re-entrant corner is at the origin.
Mesh channel_mesh(int levels, std::size_t budget = kDefaultTriangleBudget);

/// Newest-vertex bisection of the marked triangles plus conforming closure.
Mesh refine(const Mesh& mesh, std::span<const int> marked,
            std::size_t budget = kDefaultTriangleBudget);

/// `depth` rounds of refinement; round k marks every triangle whose barycenter
/// lies within 2^-k times the domain diameter of `point` and bisects it twice.
Mesh grade_toward(const Mesh& mesh, const Point& point, int depth,
                  std::size_t budget = kDefaultTriangleBudget);

/// Conformity report used by tests and the CLI sanity check.
struct ConformityReport {
  bool positive_orientation = true;
  bool edge_incidence = true;    // every edge has one or two triangles
  bool opposite_traversal = true;  // neighbours traverse shared edges oppositely
  bool no_hanging_nodes = true;
  bool ok() const {
    return positive_orientation && edge_incidence && opposite_traversal && no_hanging_nodes;
  }
};
ConformityReport check_conformity(const Mesh& mesh);

/// Plain-text dump: "vertices N triangles M", N lines "x y", M lines "i j k".
void write_mesh(std::ostream& os, const Mesh& mesh);

}  // namespace dualfem

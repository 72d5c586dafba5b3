#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dualfem/mesh.hpp"

namespace dualfem {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

enum class SpaceKind {
  p1_lagrange_zero,       // continuous P1, zero on the boundary
  crouzeix_raviart_zero,  // nonconforming P1, zero at boundary edge midpoints
  kouhia_stenberg,        // velocity (P1 x CR), both zero on the boundary
};

/// Piecewise constant field, one column per triangle. Scalar problems store
/// gradients (2 components); Stokes stores 2x2 matrices as (xx, xy, yx, yy).
class P0Field {
 public:
  P0Field() = default;
  P0Field(std::size_t triangles, int components);

  std::size_t size() const { return static_cast<std::size_t>(data_.cols()); }
  int components() const { return static_cast<int>(data_.rows()); }

  auto value(std::size_t t) { return data_.col(static_cast<Eigen::Index>(t)); }
  auto value(std::size_t t) const { return data_.col(static_cast<Eigen::Index>(t)); }
  /// Euclidean (vector) or Frobenius (matrix) norm on triangle t.
  double norm(std::size_t t) const { return value(t).norm(); }

  Eigen::MatrixXd& data() { return data_; }
  const Eigen::MatrixXd& data() const { return data_; }

 private:
  Eigen::MatrixXd data_;
};

/// Lowest-order finite element space on a shared mesh.
///
/// Nodes are vertices (P1), edges (CR) or vertices followed by edges (KS,
/// first velocity component on vertices, second on edge midpoints). Interior
/// nodes carry the degrees of freedom; boundary nodes carry lift values only.
class Space {
 public:
  Space(std::shared_ptr<const Mesh> mesh, SpaceKind kind);

  SpaceKind kind() const { return kind_; }
  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }

  std::size_t dof_count() const { return dof_count_; }
  std::size_t node_count() const { return node_dof_.size(); }
  /// Components of the discrete (symmetric) gradient: 2 or 4.
  int components() const { return kind_ == SpaceKind::kouhia_stenberg ? 4 : 2; }
  /// Local nodes per triangle: 3 or 6.
  int local_size() const { return kind_ == SpaceKind::kouhia_stenberg ? 6 : 3; }

  std::span<const int> local_nodes(int t) const {
    return {local_nodes_[t].data(), static_cast<std::size_t>(local_size())};
  }
  /// Dof index of a node, -1 on the boundary.
  int node_dof(int node) const { return node_dof_[node]; }
  Point node_position(int node) const;
  /// Velocity component a KS node belongs to (0 for scalar spaces).
  int node_component(int node) const;

  /// Column j is the constant (symmetric) gradient of local basis function j
  /// on triangle t; only the top-left components() x local_size() block is used.
  using LocalGradient = Eigen::Matrix<double, 4, 6>;
  const LocalGradient& local_gradient(int t) const { return local_gradient_[t]; }

  /// sqrt of the unit-weight stiffness diagonal, one per dof.
  const Vector& basis_seminorms() const { return basis_seminorms_; }
  /// Integral of each basis function.
  const Vector& basis_integrals() const { return basis_integrals_; }

 private:
  std::shared_ptr<const Mesh> mesh_;
  SpaceKind kind_;
  std::vector<std::array<int, 6>> local_nodes_;
  std::vector<int> node_dof_;
  std::size_t dof_count_ = 0;
  std::vector<LocalGradient> local_gradient_;
  Vector basis_seminorms_;
  Vector basis_integrals_;
};

/// Coefficient vector over the dofs of a space, plus an optional boundary
/// payload (values at every node, only boundary entries are meaningful).
struct FeFunction {
  std::shared_ptr<const Space> space;
  Vector coefficients;
  std::optional<Vector> boundary;

  static FeFunction zero(std::shared_ptr<const Space> space);
};

/// Per-triangle gradient of a P1 or CR function.
P0Field broken_gradient(const FeFunction& u);

/// Per-triangle symmetric gradient of u + lift on the Kouhia-Stenberg space.
P0Field broken_symmetric_gradient(const FeFunction& u, const FeFunction& lift);

/// The field entering the energy: broken gradient (P1, CR) or broken
/// symmetric gradient (KS), including the function's own boundary payload.
P0Field discrete_gradient(const FeFunction& u);

/// Evaluates `field(t, x)` on triangle t; returns a column of components.
using FieldClosure = std::function<Eigen::VectorXd(int triangle, const Point& x)>;

/// Triangle averages computed with the edge-midpoint rule (exact for
/// quadratic integrands).
P0Field p0_project(const Mesh& mesh, int components, const FieldClosure& field);

/// A[i][j] = sum_T w_T |T| G_T e_i . G_T e_j.
SparseMatrix assemble_weighted_stiffness(const Space& space, std::span<const double> weights);

/// Anisotropic variant sum_T |T| (G e_i)^T (w_T I + c_T n_T n_T^T) (G e_j),
/// with unit directions n_T taken from `directions` (zero columns drop the
/// rank-one term).
SparseMatrix assemble_linearized_stiffness(const Space& space, std::span<const double> weights,
                                           std::span<const double> rank_one,
                                           const P0Field& directions);

/// b[i] = f * integral of basis function i. Kouhia-Stenberg only accepts f = 0.
Vector assemble_load(const Space& space, double f);

/// r[i] = sum_T |T| tau_T . G_T e_i  (the functional v -> int tau : grad_h v).
Vector assemble_field_functional(const Space& space, const P0Field& tau);

/// B[T][j] = int_T div phi_j (Kouhia-Stenberg only).
SparseMatrix assemble_divergence_constraint(const Space& space);

/// int_T div(u) per triangle, payload included (Kouhia-Stenberg only).
Vector triangle_divergence(const FeFunction& u);

/// Zero interior coefficients and boundary payload sampled from g: the first
/// component at boundary vertices, the second at boundary edge midpoints.
using BoundaryClosure = std::function<Eigen::Vector2d(const Point&)>;
FeFunction interpolate_boundary(std::shared_ptr<const Space> space, const BoundaryClosure& g);

/// Distance of tau from the discrete constraint -div_h tau = f, tested with
/// the (constrained) discrete space and scaled by the basis seminorms. For
/// Kouhia-Stenberg the test space is the discretely divergence-free subspace.
class FeasibilityChecker {
 public:
  explicit FeasibilityChecker(std::shared_ptr<const Space> space);
  double residual(const P0Field& tau, double f) const;

 private:
  std::shared_ptr<const Space> space_;
  SparseMatrix constraint_;  // pinned rows, KS only
  Eigen::SimplicialLDLT<SparseMatrix> projector_;
};

double feasibility_residual(const P0Field& tau, double f, std::shared_ptr<const Space> space);

/// Space + constant load + optional boundary lift, with cached assembly data.
class DiscreteProblem {
 public:
  DiscreteProblem(std::shared_ptr<const Space> space, double f,
                  std::optional<FeFunction> lift = std::nullopt);

  const Space& space() const { return *space_; }
  const std::shared_ptr<const Space>& space_ptr() const { return space_; }
  double load() const { return f_; }
  const FeFunction* lift() const { return lift_ ? &*lift_ : nullptr; }
  /// Discrete gradient of the lift (zero without one).
  const P0Field& lift_field() const { return lift_field_; }
  const Vector& load_vector() const { return load_vector_; }
  /// Divergence constraint (KS), empty otherwise.
  const SparseMatrix& constraint() const { return constraint_; }
  bool constrained() const { return constraint_.rows() > 0; }
  const FeasibilityChecker& feasibility() const { return *checker_; }

  /// G u + lift field.
  P0Field field(const Vector& coefficients) const;
  /// G u, without the lift.
  P0Field increment_field(const Vector& coefficients) const;
  /// int f v for the homogeneous part v.
  double load_integral(const Vector& coefficients) const;
  FeFunction function(Vector coefficients) const;

 private:
  std::shared_ptr<const Space> space_;
  double f_;
  std::optional<FeFunction> lift_;
  P0Field lift_field_;
  Vector load_vector_;
  SparseMatrix constraint_;
  std::shared_ptr<const FeasibilityChecker> checker_;
};

}  // namespace dualfem

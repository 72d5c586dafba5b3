#include "dualfem/fem.hpp"

#include <cmath>
#include <sstream>

#include "dualfem/errors.hpp"

namespace dualfem {

namespace {

using Triplet = Eigen::Triplet<double>;

void require_space(const FeFunction& u) {
  if (!u.space) throw DomainError("FeFunction without a space");
  if (static_cast<std::size_t>(u.coefficients.size()) != u.space->dof_count())
    throw DomainError("FeFunction coefficient count does not match the space");
}

// Local coefficient j of u on triangle t, payload for boundary nodes.
double local_value(const Space& space, int node, const Vector& coefficients,
                   const Vector* payload) {
  const int dof = space.node_dof(node);
  if (dof >= 0) return coefficients[dof];
  return payload ? (*payload)[node] : 0.0;
}

P0Field field_of(const Space& space, const Vector& coefficients, const Vector* payload) {
  const Mesh& mesh = space.mesh();
  const int nc = space.components();
  const int nl = space.local_size();
  P0Field out(mesh.triangle_count(), nc);
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    const auto nodes = space.local_nodes(t);
    const auto& g = space.local_gradient(t);
    auto col = out.value(t);
    for (int j = 0; j < nl; ++j) {
      const double c = local_value(space, nodes[j], coefficients, payload);
      if (c != 0.0) col += c * g.col(j).head(nc);
    }
  }
  return out;
}

SparseMatrix divergence_matrix(const Space& space, bool skip_first_row) {
  if (space.kind() != SpaceKind::kouhia_stenberg)
    throw DomainError("divergence constraint requires the Kouhia-Stenberg space");
  const Mesh& mesh = space.mesh();
  const auto nt = static_cast<int>(mesh.triangle_count());
  const int offset = skip_first_row ? 1 : 0;
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(nt) * 6);
  for (int t = offset; t < nt; ++t) {
    const auto nodes = space.local_nodes(t);
    const auto& g = space.local_gradient(t);
    for (int j = 0; j < 6; ++j) {
      const int dof = space.node_dof(nodes[j]);
      if (dof < 0) continue;
      const double div = g(0, j) + g(3, j);
      if (div != 0.0) entries.emplace_back(t - offset, dof, mesh.area(t) * div);
    }
  }
  SparseMatrix b(nt - offset, static_cast<Eigen::Index>(space.dof_count()));
  b.setFromTriplets(entries.begin(), entries.end());
  return b;
}

}  // namespace

P0Field::P0Field(std::size_t triangles, int components)
    : data_(Eigen::MatrixXd::Zero(components, static_cast<Eigen::Index>(triangles))) {}

Space::Space(std::shared_ptr<const Mesh> mesh, SpaceKind kind)
    : mesh_(std::move(mesh)), kind_(kind) {
  if (!mesh_) throw DomainError("Space requires a mesh");
  const Mesh& m = *mesh_;
  const auto nt = static_cast<int>(m.triangle_count());
  const auto nv = static_cast<int>(m.vertex_count());
  const auto ne = static_cast<int>(m.edge_count());

  std::vector<char> boundary;
  switch (kind_) {
    case SpaceKind::p1_lagrange_zero:
      for (int v = 0; v < nv; ++v) boundary.push_back(m.is_boundary_vertex(v));
      break;
    case SpaceKind::crouzeix_raviart_zero:
      for (int e = 0; e < ne; ++e) boundary.push_back(m.edge(e).boundary());
      break;
    case SpaceKind::kouhia_stenberg:
      for (int v = 0; v < nv; ++v) boundary.push_back(m.is_boundary_vertex(v));
      for (int e = 0; e < ne; ++e) boundary.push_back(m.edge(e).boundary());
      break;
  }
  node_dof_.assign(boundary.size(), -1);
  for (std::size_t n = 0; n < boundary.size(); ++n)
    if (!boundary[n]) node_dof_[n] = static_cast<int>(dof_count_++);

  local_nodes_.resize(nt);
  local_gradient_.assign(nt, LocalGradient::Zero());
  for (int t = 0; t < nt; ++t) {
    const auto& tri = m.triangle(t);
    const auto& edges = m.triangle_edges(t);
    const auto& grad = m.barycentric_gradients(t);
    auto& nodes = local_nodes_[t];
    auto& g = local_gradient_[t];
    nodes.fill(-1);
    switch (kind_) {
      case SpaceKind::p1_lagrange_zero:
        for (int k = 0; k < 3; ++k) {
          nodes[k] = tri[k];
          g.col(k).head<2>() = grad[k];
        }
        break;
      case SpaceKind::crouzeix_raviart_zero:
        // The CR function of the edge opposite vertex k is 1 - 2 lambda_k.
        for (int k = 0; k < 3; ++k) {
          nodes[k] = edges[k];
          g.col(k).head<2>() = -2.0 * grad[k];
        }
        break;
      case SpaceKind::kouhia_stenberg:
        for (int k = 0; k < 3; ++k) {
          nodes[k] = tri[k];
          nodes[k + 3] = nv + edges[k];
          // (lambda_k, 0): eps = [[gx, gy/2], [gy/2, 0]]
          g(0, k) = grad[k].x();
          g(1, k) = 0.5 * grad[k].y();
          g(2, k) = 0.5 * grad[k].y();
          // (0, 1 - 2 lambda_k): eps = [[0, -gx], [-gx, -2 gy]]
          g(1, k + 3) = -grad[k].x();
          g(2, k + 3) = -grad[k].x();
          g(3, k + 3) = -2.0 * grad[k].y();
        }
        break;
    }
  }

  basis_seminorms_ = Vector::Zero(static_cast<Eigen::Index>(dof_count_));
  basis_integrals_ = Vector::Zero(static_cast<Eigen::Index>(dof_count_));
  const int nc = components();
  for (int t = 0; t < nt; ++t) {
    const double area = m.area(t);
    for (int j = 0; j < local_size(); ++j) {
      const int dof = node_dof_[local_nodes_[t][j]];
      if (dof < 0) continue;
      basis_seminorms_[dof] += area * local_gradient_[t].col(j).head(nc).squaredNorm();
      basis_integrals_[dof] += area / 3.0;
    }
  }
  basis_seminorms_ = basis_seminorms_.cwiseSqrt();
}

Point Space::node_position(int node) const {
  const Mesh& m = *mesh_;
  switch (kind_) {
    case SpaceKind::p1_lagrange_zero:
      return m.vertex(node);
    case SpaceKind::crouzeix_raviart_zero:
      return m.edge(node).midpoint;
    case SpaceKind::kouhia_stenberg:
      break;
  }
  const auto nv = static_cast<int>(m.vertex_count());
  return node < nv ? m.vertex(node) : m.edge(node - nv).midpoint;
}

int Space::node_component(int node) const {
  if (kind_ != SpaceKind::kouhia_stenberg) return 0;
  return node < static_cast<int>(mesh_->vertex_count()) ? 0 : 1;
}

FeFunction FeFunction::zero(std::shared_ptr<const Space> space) {
  const auto n = static_cast<Eigen::Index>(space->dof_count());
  return FeFunction{std::move(space), Vector::Zero(n), std::nullopt};
}

P0Field broken_gradient(const FeFunction& u) {
  require_space(u);
  if (u.space->kind() == SpaceKind::kouhia_stenberg)
    throw DomainError("broken_gradient requires a scalar (P1 or CR) space");
  return field_of(*u.space, u.coefficients, u.boundary ? &*u.boundary : nullptr);
}

P0Field broken_symmetric_gradient(const FeFunction& u, const FeFunction& lift) {
  require_space(u);
  require_space(lift);
  if (u.space->kind() != SpaceKind::kouhia_stenberg || lift.space->kind() != SpaceKind::kouhia_stenberg)
    throw DomainError("broken_symmetric_gradient requires the Kouhia-Stenberg space");
  Vector payload = Vector::Zero(static_cast<Eigen::Index>(u.space->node_count()));
  if (u.boundary) payload += *u.boundary;
  if (lift.boundary) payload += *lift.boundary;
  return field_of(*u.space, u.coefficients + lift.coefficients, &payload);
}

P0Field discrete_gradient(const FeFunction& u) {
  require_space(u);
  return field_of(*u.space, u.coefficients, u.boundary ? &*u.boundary : nullptr);
}

P0Field p0_project(const Mesh& mesh, int components, const FieldClosure& field) {
  P0Field out(mesh.triangle_count(), components);
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    const auto& tri = mesh.triangle(t);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(components);
    for (int k = 0; k < 3; ++k) {
      const Point mid = 0.5 * (mesh.vertex(tri[(k + 1) % 3]) + mesh.vertex(tri[(k + 2) % 3]));
      const Eigen::VectorXd v = field(t, mid);
      if (v.size() != components) throw DomainError("p0_project: closure returned wrong size");
      sum += v;
    }
    out.value(t) = sum / 3.0;
  }
  return out;
}

SparseMatrix assemble_weighted_stiffness(const Space& space, std::span<const double> weights) {
  const Mesh& mesh = space.mesh();
  if (weights.size() != mesh.triangle_count())
    throw AssemblyError("weight count does not match the triangle count");
  const int nc = space.components();
  const int nl = space.local_size();
  std::vector<Triplet> entries;
  entries.reserve(mesh.triangle_count() * static_cast<std::size_t>(nl * nl));
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    const double w = weights[t];
    if (!std::isfinite(w) || w <= 0.0) {
      std::ostringstream os;
      os << "weight on triangle " << t << " must be positive and finite, got " << w;
      throw AssemblyError(os.str());
    }
    const auto nodes = space.local_nodes(t);
    const auto g = space.local_gradient(t).topLeftCorner(nc, nl);
    const Eigen::MatrixXd local = (w * mesh.area(t)) * (g.transpose() * g);
    for (int i = 0; i < nl; ++i) {
      const int di = space.node_dof(nodes[i]);
      if (di < 0) continue;
      for (int j = 0; j < nl; ++j) {
        const int dj = space.node_dof(nodes[j]);
        if (dj < 0) continue;
        entries.emplace_back(di, dj, local(i, j));
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(space.dof_count());
  SparseMatrix a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());
  return a;
}

SparseMatrix assemble_linearized_stiffness(const Space& space, std::span<const double> weights,
                                           std::span<const double> rank_one,
                                           const P0Field& directions) {
  const Mesh& mesh = space.mesh();
  const int nc = space.components();
  const int nl = space.local_size();
  if (weights.size() != mesh.triangle_count() || rank_one.size() != mesh.triangle_count() ||
      directions.size() != mesh.triangle_count() || directions.components() != nc)
    throw AssemblyError("linearized stiffness: inconsistent coefficient sizes");
  std::vector<Triplet> entries;
  entries.reserve(mesh.triangle_count() * static_cast<std::size_t>(nl * nl));
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    const double w = weights[t];
    if (!std::isfinite(w) || w <= 0.0 || !std::isfinite(rank_one[t]))
      throw AssemblyError("linearized stiffness: invalid coefficient");
    const auto g = space.local_gradient(t).topLeftCorner(nc, nl);
    Eigen::MatrixXd coeff = w * Eigen::MatrixXd::Identity(nc, nc);
    const double len = directions.norm(t);
    if (len > 0.0) {
      const Eigen::VectorXd n = directions.value(t) / len;
      coeff += rank_one[t] * n * n.transpose();
    }
    const Eigen::MatrixXd local = mesh.area(t) * (g.transpose() * coeff * g);
    const auto nodes = space.local_nodes(t);
    for (int i = 0; i < nl; ++i) {
      const int di = space.node_dof(nodes[i]);
      if (di < 0) continue;
      for (int j = 0; j < nl; ++j) {
        const int dj = space.node_dof(nodes[j]);
        if (dj < 0) continue;
        entries.emplace_back(di, dj, local(i, j));
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(space.dof_count());
  SparseMatrix a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());
  return a;
}

Vector assemble_load(const Space& space, double f) {
  if (!std::isfinite(f)) throw DomainError("load must be finite");
  if (space.kind() == SpaceKind::kouhia_stenberg) {
    if (f != 0.0) throw DomainError("Kouhia-Stenberg problems take a zero right-hand side");
    return Vector::Zero(static_cast<Eigen::Index>(space.dof_count()));
  }
  return f * space.basis_integrals();
}

Vector assemble_field_functional(const Space& space, const P0Field& tau) {
  const Mesh& mesh = space.mesh();
  const int nc = space.components();
  if (tau.size() != mesh.triangle_count() || tau.components() != nc)
    throw DomainError("field dimensions do not match the space");
  Vector r = Vector::Zero(static_cast<Eigen::Index>(space.dof_count()));
  for (int t = 0; t < static_cast<int>(mesh.triangle_count()); ++t) {
    const auto nodes = space.local_nodes(t);
    const auto& g = space.local_gradient(t);
    const double area = mesh.area(t);
    for (int j = 0; j < space.local_size(); ++j) {
      const int dof = space.node_dof(nodes[j]);
      if (dof < 0) continue;
      r[dof] += area * tau.value(t).dot(g.col(j).head(nc));
    }
  }
  return r;
}

SparseMatrix assemble_divergence_constraint(const Space& space) {
  return divergence_matrix(space, false);
}

Vector triangle_divergence(const FeFunction& u) {
  require_space(u);
  const Space& space = *u.space;
  if (space.kind() != SpaceKind::kouhia_stenberg)
    throw DomainError("triangle_divergence requires the Kouhia-Stenberg space");
  const P0Field eps = discrete_gradient(u);
  Vector div(static_cast<Eigen::Index>(eps.size()));
  for (std::size_t t = 0; t < eps.size(); ++t)
    div[static_cast<Eigen::Index>(t)] =
        space.mesh().area(static_cast<int>(t)) * (eps.value(t)[0] + eps.value(t)[3]);
  return div;
}

FeFunction interpolate_boundary(std::shared_ptr<const Space> space, const BoundaryClosure& g) {
  FeFunction out = FeFunction::zero(space);
  Vector payload = Vector::Zero(static_cast<Eigen::Index>(space->node_count()));
  for (int node = 0; node < static_cast<int>(space->node_count()); ++node) {
    if (space->node_dof(node) >= 0) continue;
    payload[node] = g(space->node_position(node))[space->node_component(node)];
  }
  out.boundary = std::move(payload);
  return out;
}

FeasibilityChecker::FeasibilityChecker(std::shared_ptr<const Space> space)
    : space_(std::move(space)) {
  if (space_->kind() != SpaceKind::kouhia_stenberg) return;
  constraint_ = divergence_matrix(*space_, true);
  const Vector inv_d = space_->basis_seminorms().cwiseAbs2().cwiseInverse();
  const SparseMatrix gram = constraint_ * inv_d.asDiagonal() * constraint_.transpose();
  projector_.compute(gram);
  if (projector_.info() != Eigen::Success)
    throw SolverError("feasibility projector: constraint Gram matrix is singular");
}

double FeasibilityChecker::residual(const P0Field& tau, double f) const {
  const Space& space = *space_;
  Vector r = assemble_field_functional(space, tau) - assemble_load(space, f);
  const Vector& scale = space.basis_seminorms();
  if (constraint_.rows() > 0) {
    // Remove the component of r that the multipliers of the divergence
    // constraint can absorb (least squares in the scaled norm).
    const Vector inv_d = scale.cwiseAbs2().cwiseInverse();
    const Vector q = projector_.solve(constraint_ * inv_d.cwiseProduct(r));
    r -= constraint_.transpose() * q;
  }
  if (r.size() == 0) return 0.0;
  return r.cwiseQuotient(scale).cwiseAbs().maxCoeff();
}

double feasibility_residual(const P0Field& tau, double f, std::shared_ptr<const Space> space) {
  return FeasibilityChecker(std::move(space)).residual(tau, f);
}

DiscreteProblem::DiscreteProblem(std::shared_ptr<const Space> space, double f,
                                 std::optional<FeFunction> lift)
    : space_(std::move(space)), f_(f), lift_(std::move(lift)) {
  if (!space_) throw DomainError("DiscreteProblem requires a space");
  load_vector_ = assemble_load(*space_, f_);
  if (lift_) {
    if (lift_->space.get() != space_.get()) throw DomainError("lift lives on a different space");
    lift_field_ = discrete_gradient(*lift_);
  } else {
    lift_field_ = P0Field(space_->mesh().triangle_count(), space_->components());
  }
  if (space_->kind() == SpaceKind::kouhia_stenberg)
    constraint_ = divergence_matrix(*space_, false);
  checker_ = std::make_shared<FeasibilityChecker>(space_);
}

P0Field DiscreteProblem::field(const Vector& coefficients) const {
  P0Field out = field_of(*space_, coefficients, nullptr);
  out.data() += lift_field_.data();
  return out;
}

P0Field DiscreteProblem::increment_field(const Vector& coefficients) const {
  return field_of(*space_, coefficients, nullptr);
}

double DiscreteProblem::load_integral(const Vector& coefficients) const {
  return load_vector_.dot(coefficients);
}

FeFunction DiscreteProblem::function(Vector coefficients) const {
  FeFunction u{space_, std::move(coefficients), std::nullopt};
  if (lift_) u.boundary = lift_->boundary;
  return u;
}

}  // namespace dualfem

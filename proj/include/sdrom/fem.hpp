#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "sdrom/phasefield.hpp"
#include "sdrom/quadrature.hpp"
#include "sdrom/trimesh.hpp"

namespace sdrom {

using SpMat = Eigen::SparseMatrix<double>;

struct Material {
  double mu = 0.5;      // dynamic viscosity
  double kappa = 5e-5;  // permeability
  std::map<std::string, double> boundary_pressures;  // physical pressure per tag
};

enum class WallCondition { slip, noslip };

// Mixed MINI space: per-vertex linear velocities enriched with one vector
// bubble per triangle, linear pressures. Dof layout: vertex velocity pairs
// (2v, 2v+1), then bubble pairs, then pressures.
//
// Wall constraints are enforced by rotating the velocity pair of every wall
// vertex into (tangent, normal) coordinates and eliminating the fixed
// components. All coefficient vectors produced by this module live in that
// rotated frame with eliminated entries pinned to zero.
struct MixedSpace {
  const TriMesh* mesh = nullptr;
  int nv = 0;
  int nt = 0;

  struct VertexFrame {
    Eigen::Matrix2d R;  // rows: tangent, normal (identity if both fixed)
    bool fix_normal = false;
    bool fix_both = false;
  };
  std::vector<int> frame_of_vertex;  // -1 when unconstrained
  std::vector<VertexFrame> frames;
  std::vector<char> fixed;  // per velocity dof

  int n_vel() const { return 2 * (nv + nt); }
  int n_pres() const { return nv; }
  int n_dofs() const { return n_vel() + n_pres(); }
  int pres_offset() const { return n_vel(); }

  bool is_fixed(int dof) const { return fixed[dof] != 0; }

  // Rotated -> physical velocity at a vertex.
  Vec2 global_velocity(const Eigen::VectorXd& coeffs, int v) const {
    Vec2 u(coeffs[2 * v], coeffs[2 * v + 1]);
    const int f = frame_of_vertex[v];
    if (f < 0) return u;
    return frames[f].R.transpose() * u;
  }
};

inline MixedSpace make_space(
    const TriMesh& mesh,
    const std::map<std::string, WallCondition>& walls = {}) {
  MixedSpace sp;
  sp.mesh = &mesh;
  sp.nv = mesh.n_vertices();
  sp.nt = mesh.n_triangles();
  sp.frame_of_vertex.assign(sp.nv, -1);
  sp.fixed.assign(sp.n_vel(), 0);

  std::map<int, WallCondition> wall_tags;
  for (const auto& [name, cond] : walls) {
    const int id = mesh.tag_id(name);
    if (id < 0) throw ParameterError("wall tag not present in mesh: " + name);
    wall_tags[id] = cond;
  }
  std::vector<std::vector<Vec2>> normals(sp.nv);
  std::vector<char> noslip(sp.nv, 0);
  for (const auto& e : mesh.boundary) {
    auto it = wall_tags.find(e.tag);
    if (it == wall_tags.end()) continue;
    if (it->second == WallCondition::noslip) {
      noslip[e.a] = noslip[e.b] = 1;
      continue;
    }
    const Vec2 n = mesh.edge_outward_normal(e);
    normals[e.a].push_back(n);
    normals[e.b].push_back(n);
  }
  for (int v = 0; v < sp.nv; ++v) {
    if (!noslip[v] && normals[v].empty()) continue;
    MixedSpace::VertexFrame fr;
    fr.R.setIdentity();
    if (noslip[v]) {
      fr.fix_both = true;
    } else {
      bool corner = false;
      const Vec2 n0 = normals[v][0];
      Vec2 avg = Vec2::Zero();
      for (const Vec2& n : normals[v]) {
        if (n.dot(n0) < std::cos(5.0 * std::numbers::pi / 180.0)) corner = true;
        avg += n;
      }
      if (corner) {
        fr.fix_both = true;
      } else {
        const Vec2 n = avg.normalized();
        fr.fix_normal = true;
        fr.R.row(0) << -n.y(), n.x();  // tangent
        fr.R.row(1) << n.x(), n.y();   // normal
      }
    }
    sp.frame_of_vertex[v] = static_cast<int>(sp.frames.size());
    sp.frames.push_back(fr);
    if (fr.fix_both) {
      sp.fixed[2 * v] = sp.fixed[2 * v + 1] = 1;
    } else {
      sp.fixed[2 * v + 1] = 1;  // normal component in rotated coordinates
    }
  }
  return sp;
}

namespace detail {

// Per-triangle basis data at the quadrature points. Velocity basis order:
// three vertex functions then the bubble 27 l0 l1 l2.
struct TriBasis {
  std::array<int, 3> verts{};
  double area = 0.0;
  std::array<Vec2, 3> g{};  // gradients of the barycentric functions
  struct QP {
    std::array<double, 3> l;
    double b;
    Vec2 gb;
    double w;  // physical weight
    std::array<double, 4> N;
    std::array<Vec2, 4> gN;
  };
  std::array<QP, 6> qp{};
};

inline TriBasis tri_basis(const TriMesh& mesh, int t) {
  TriBasis tb;
  tb.verts = mesh.triangles[t];
  const Vec2& p0 = mesh.vertices[tb.verts[0]];
  const Vec2& p1 = mesh.vertices[tb.verts[1]];
  const Vec2& p2 = mesh.vertices[tb.verts[2]];
  tb.area = mesh.triangle_area(t);
  const double inv2A = 1.0 / (2.0 * tb.area);
  auto rot_cw = [](const Vec2& v) { return Vec2(v.y(), -v.x()); };
  tb.g[0] = rot_cw(p1 - p2) * inv2A;
  tb.g[1] = rot_cw(p2 - p0) * inv2A;
  tb.g[2] = rot_cw(p0 - p1) * inv2A;
  const auto& rule = tri_quadrature();
  for (int q = 0; q < 6; ++q) {
    auto& qp = tb.qp[q];
    qp.l = {rule[q].l1, rule[q].l2, rule[q].l3};
    qp.b = 27.0 * qp.l[0] * qp.l[1] * qp.l[2];
    qp.gb = 27.0 * (qp.l[1] * qp.l[2] * tb.g[0] + qp.l[0] * qp.l[2] * tb.g[1] +
                    qp.l[0] * qp.l[1] * tb.g[2]);
    qp.w = rule[q].w * 2.0 * tb.area;
    qp.N = {qp.l[0], qp.l[1], qp.l[2], qp.b};
    qp.gN = {tb.g[0], tb.g[1], tb.g[2], qp.gb};
  }
  return tb;
}

inline Vec2 quad_point(const TriMesh& mesh, const TriBasis& tb, int q) {
  const auto& l = tb.qp[q].l;
  return l[0] * mesh.vertices[tb.verts[0]] + l[1] * mesh.vertices[tb.verts[1]] +
         l[2] * mesh.vertices[tb.verts[2]];
}

// Applies the wall rotation to the velocity rows/columns of an element
// matrix (8 velocity dofs) and to element load vectors.
inline void rotate_element(const MixedSpace& sp, const TriBasis& tb,
                           Eigen::Matrix<double, 8, 8>* K,
                           Eigen::Matrix<double, 3, 8>* D,
                           Eigen::Matrix<double, 8, 1>* f) {
  for (int a = 0; a < 3; ++a) {
    const int fr = sp.frame_of_vertex[tb.verts[a]];
    if (fr < 0) continue;
    const Eigen::Matrix2d& R = sp.frames[fr].R;
    if (K) {
      K->middleRows<2>(2 * a) = R * K->middleRows<2>(2 * a);
      K->middleCols<2>(2 * a) = K->middleCols<2>(2 * a) * R.transpose();
    }
    if (D) D->middleCols<2>(2 * a) = D->middleCols<2>(2 * a) * R.transpose();
    if (f) f->segment<2>(2 * a) = R * f->segment<2>(2 * a);
  }
}

// TriBasis plus the triangle index for bubble dof addressing.
struct TriBasisIndexed : TriBasis {
  int tri_index = 0;
};

inline TriBasisIndexed tri_basis_indexed(const TriMesh& mesh, int t) {
  TriBasisIndexed tb;
  static_cast<TriBasis&>(tb) = tri_basis(mesh, t);
  tb.tri_index = t;
  return tb;
}

inline int velocity_dof(const MixedSpace& sp, const TriBasisIndexed& tb, int a,
                        int i) {
  return a < 3 ? 2 * tb.verts[a] + i : 2 * (sp.nv + tb.tri_index) + i;
}

template <class ElementKernel>
SpMat assemble_velocity_block(const MixedSpace& sp, ElementKernel&& kernel) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(sp.nt) * 64);
  for (int t = 0; t < sp.nt; ++t) {
    auto tb = tri_basis_indexed(*sp.mesh, t);
    Eigen::Matrix<double, 8, 8> K = Eigen::Matrix<double, 8, 8>::Zero();
    kernel(tb, K);
    rotate_element(sp, tb, &K, nullptr, nullptr);
    for (int a = 0; a < 4; ++a) {
      for (int i = 0; i < 2; ++i) {
        const int row = velocity_dof(sp, tb, a, i);
        if (sp.is_fixed(row)) continue;
        for (int b = 0; b < 4; ++b) {
          for (int j = 0; j < 2; ++j) {
            const int col = velocity_dof(sp, tb, b, j);
            if (sp.is_fixed(col)) continue;
            const double v = K(2 * a + i, 2 * b + j);
            if (v != 0.0) trips.emplace_back(row, col, v);
          }
        }
      }
    }
  }
  SpMat M(sp.n_dofs(), sp.n_dofs());
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}
}  // namespace detail

// Viscous block: 2 mu int w(x) sym grad u : sym grad v, with the nodal weight
// field w interpolated linearly.
inline SpMat assemble_viscous(const MixedSpace& sp, double mu,
                              const Eigen::VectorXd& w_nodal) {
  if (w_nodal.size() != sp.nv)
    throw ParameterError("viscous weight field has wrong size");
  return detail::assemble_velocity_block(
      sp, [&](const detail::TriBasisIndexed& tb,
              Eigen::Matrix<double, 8, 8>& K) {
        for (const auto& qp : tb.qp) {
          double w = 0.0;
          for (int c = 0; c < 3; ++c) w += qp.l[c] * w_nodal[tb.verts[c]];
          // sym grad u : sym grad v = 1/2 (d_ij grad.grad + cross term)
          const double f = 0.5 * mu * w * qp.w;
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
              const double gg = qp.gN[a].dot(qp.gN[b]);
              for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                  K(2 * a + i, 2 * b + j) +=
                      f * ((i == j ? gg : 0.0) + qp.gN[a][j] * qp.gN[b][i]);
            }
        }
      });
}

// Darcy drag block: mu/kappa int w(x) u . v.
inline SpMat assemble_darcy(const MixedSpace& sp, double mu_over_kappa,
                            const Eigen::VectorXd& w_nodal) {
  if (w_nodal.size() != sp.nv)
    throw ParameterError("darcy weight field has wrong size");
  return detail::assemble_velocity_block(
      sp, [&](const detail::TriBasisIndexed& tb,
              Eigen::Matrix<double, 8, 8>& K) {
        for (const auto& qp : tb.qp) {
          double w = 0.0;
          for (int c = 0; c < 3; ++c) w += qp.l[c] * w_nodal[tb.verts[c]];
          const double f = mu_over_kappa * w * qp.w;
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
              const double m = f * qp.N[a] * qp.N[b];
              K(2 * a, 2 * b) += m;
              K(2 * a + 1, 2 * b + 1) += m;
            }
        }
      });
}

// Interface resistance block: int (alpha u) . v for a nodal symmetric tensor
// field stored as [a_xx (nv), a_xy (nv), a_yy (nv)].
inline SpMat assemble_alpha(const MixedSpace& sp,
                            const Eigen::VectorXd& alpha_nodal) {
  if (alpha_nodal.size() != 3 * sp.nv)
    throw ParameterError("alpha tensor field has wrong size");
  return detail::assemble_velocity_block(
      sp, [&](const detail::TriBasisIndexed& tb,
              Eigen::Matrix<double, 8, 8>& K) {
        for (const auto& qp : tb.qp) {
          double axx = 0.0, axy = 0.0, ayy = 0.0;
          for (int c = 0; c < 3; ++c) {
            axx += qp.l[c] * alpha_nodal[tb.verts[c]];
            axy += qp.l[c] * alpha_nodal[sp.nv + tb.verts[c]];
            ayy += qp.l[c] * alpha_nodal[2 * sp.nv + tb.verts[c]];
          }
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
              const double m = qp.w * qp.N[a] * qp.N[b];
              K(2 * a, 2 * b) += m * axx;
              K(2 * a, 2 * b + 1) += m * axy;
              K(2 * a + 1, 2 * b) += m * axy;
              K(2 * a + 1, 2 * b + 1) += m * ayy;
            }
        }
      });
}

// Velocity mass matrix, used for L2 norms of velocity coefficient vectors.
inline SpMat assemble_velocity_mass(const MixedSpace& sp) {
  return detail::assemble_velocity_block(
      sp, [&](const detail::TriBasisIndexed& tb,
              Eigen::Matrix<double, 8, 8>& K) {
        for (const auto& qp : tb.qp)
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
              const double m = qp.w * qp.N[a] * qp.N[b];
              K(2 * a, 2 * b) += m;
              K(2 * a + 1, 2 * b + 1) += m;
            }
      });
}

// Field-independent saddle coupling, momentum row -D^T (from -int p div v)
// and continuity row +D (from int q div u = 0).
inline SpMat assemble_saddle(const MixedSpace& sp) {
  std::vector<Eigen::Triplet<double>> trips;
  const int off = sp.pres_offset();
  for (int t = 0; t < sp.nt; ++t) {
    auto tb = detail::tri_basis_indexed(*sp.mesh, t);
    Eigen::Matrix<double, 3, 8> D = Eigen::Matrix<double, 3, 8>::Zero();
    for (const auto& qp : tb.qp)
      for (int c = 0; c < 3; ++c)
        for (int a = 0; a < 4; ++a)
          for (int i = 0; i < 2; ++i)
            D(c, 2 * a + i) += qp.w * qp.l[c] * qp.gN[a][i];
    detail::rotate_element(sp, tb, nullptr, &D, nullptr);
    for (int c = 0; c < 3; ++c) {
      const int prow = off + tb.verts[c];
      for (int a = 0; a < 4; ++a) {
        for (int i = 0; i < 2; ++i) {
          const int vdof = detail::velocity_dof(sp, tb, a, i);
          if (sp.is_fixed(vdof)) continue;
          const double v = D(c, 2 * a + i);
          if (v == 0.0) continue;
          trips.emplace_back(prow, vdof, v);
          trips.emplace_back(vdof, prow, -v);
        }
      }
    }
  }
  SpMat M(sp.n_dofs(), sp.n_dofs());
  M.setFromTriplets(trips.begin(), trips.end());
  return M;
}

// Load vector of a unit physical pressure on a boundary tag: the natural
// condition sigma n = -p n contributes -int_tag n . v per unit pressure.
inline Eigen::VectorXd pressure_load(const MixedSpace& sp,
                                     const std::string& tag_name) {
  const int tag = sp.mesh->tag_id(tag_name);
  if (tag < 0) throw ParameterError("unknown boundary tag: " + tag_name);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(sp.n_dofs());
  for (const auto& e : sp.mesh->boundary) {
    if (e.tag != tag) continue;
    const Vec2 d = sp.mesh->vertices[e.b] - sp.mesh->vertices[e.a];
    const double len = d.norm();
    const Vec2 n(d.y() / len, -d.x() / len);
    for (int v : {e.a, e.b}) {
      Vec2 fv = -0.5 * len * n;
      const int fr = sp.frame_of_vertex[v];
      if (fr >= 0) fv = sp.frames[fr].R * fv;
      if (!sp.is_fixed(2 * v)) f[2 * v] += fv.x();
      if (!sp.is_fixed(2 * v + 1)) f[2 * v + 1] += fv.y();
    }
  }
  return f;
}

struct ParametricBlocks {
  SpMat viscous;
  SpMat darcy;
  SpMat alpha;
  SpMat saddle;
};

// Nodal weights derived from a field sample: phi = xi^2, psi = zeta^2,
// alpha tensor = t (x) t.
inline Eigen::VectorXd phi_weights(const FieldSample& s) {
  return s.xi.array().square();
}
inline Eigen::VectorXd psi_weights(const FieldSample& s) {
  return s.zeta.array().square();
}
inline Eigen::VectorXd alpha_weights(const FieldSample& s) {
  const int nv = static_cast<int>(s.xi.size());
  Eigen::VectorXd a(3 * nv);
  for (int i = 0; i < nv; ++i) {
    const double tx = s.t[i];
    const double ty = s.t[nv + i];
    a[i] = tx * tx;
    a[nv + i] = tx * ty;
    a[2 * nv + i] = ty * ty;
  }
  return a;
}

inline ParametricBlocks assemble_parametric_blocks(const MixedSpace& sp,
                                                   const Material& mat,
                                                   const FieldSample& s) {
  ParametricBlocks b;
  b.viscous = assemble_viscous(sp, 2.0 * mat.mu, phi_weights(s));
  b.darcy = assemble_darcy(sp, mat.mu / mat.kappa, psi_weights(s));
  b.alpha = assemble_alpha(sp, alpha_weights(s));
  b.saddle = assemble_saddle(sp);
  return b;
}

inline Eigen::VectorXd assemble_load(const MixedSpace& sp,
                                     const Material& mat) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(sp.n_dofs());
  bool any = false;
  for (const auto& [tag, value] : mat.boundary_pressures) {
    f += value * pressure_load(sp, tag);
    any = true;
  }
  if (!any)
    throw ConfigError("no pressure boundary configured for this solve");
  return f;
}

// Assembled mixed system with eliminated dofs pinned, ready to factorize.
inline SpMat assemble_system(const MixedSpace& sp, const Material& mat,
                             const FieldSample& s) {
  ParametricBlocks b = assemble_parametric_blocks(sp, mat, s);
  SpMat K = b.viscous;
  K += b.darcy;
  K += b.alpha;
  K += b.saddle;
  std::vector<Eigen::Triplet<double>> ones;
  for (int d = 0; d < sp.n_vel(); ++d)
    if (sp.is_fixed(d)) ones.emplace_back(d, d, 1.0);
  SpMat I(sp.n_dofs(), sp.n_dofs());
  I.setFromTriplets(ones.begin(), ones.end());
  K += I;
  K.makeCompressed();
  return K;
}

namespace detail {

inline Eigen::VectorXd checked_sparse_solve(const Eigen::SparseLU<SpMat>& lu,
                                            const SpMat& K,
                                            const Eigen::VectorXd& f) {
  Eigen::VectorXd x = lu.solve(f);
  // One refinement step; the viscous/Darcy scale contrast costs digits in
  // the continuity rows otherwise.
  x += lu.solve(f - K * x);
  const double fn = f.norm();
  const double rel = fn > 0.0 ? (K * x - f).norm() / fn : (K * x).norm();
  if (!(rel <= 1e-10))
    throw NumericsError("mixed solve residual " + std::to_string(rel) +
                        " exceeds 1e-10");
  return x;
}

}  // namespace detail

// Full high-fidelity solve. Returns the coefficient vector in the rotated
// frame (velocities then pressures).
inline Eigen::VectorXd solve_hifi(const MixedSpace& sp, const Material& mat,
                                  const FieldSample& s) {
  const SpMat K = assemble_system(sp, mat, s);
  const Eigen::VectorXd f = assemble_load(sp, mat);
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(K);
  lu.factorize(K);
  if (lu.info() != Eigen::Success)
    throw NumericsError("sparse factorization of the mixed system failed");
  return detail::checked_sparse_solve(lu, K, f);
}

inline double velocity_l2_norm(const SpMat& mass, const Eigen::VectorXd& x) {
  return std::sqrt(std::max(0.0, x.dot(mass * x)));
}

// Net outward flux int_tag u . n along a boundary tag.
inline double boundary_flux(const MixedSpace& sp, const Eigen::VectorXd& coeffs,
                            const std::string& tag_name) {
  const int tag = sp.mesh->tag_id(tag_name);
  if (tag < 0) throw ParameterError("unknown boundary tag: " + tag_name);
  double flux = 0.0;
  for (const auto& e : sp.mesh->boundary) {
    if (e.tag != tag) continue;
    const Vec2 d = sp.mesh->vertices[e.b] - sp.mesh->vertices[e.a];
    const double len = d.norm();
    const Vec2 n(d.y() / len, -d.x() / len);
    const Vec2 ua = sp.global_velocity(coeffs, e.a);
    const Vec2 ub = sp.global_velocity(coeffs, e.b);
    flux += 0.5 * len * n.dot(ua + ub);
  }
  return flux;
}

// Physical velocity at an arbitrary point (test and reporting helper).
inline Vec2 velocity_at(const MixedSpace& sp, const Eigen::VectorXd& coeffs,
                        const Vec2& x) {
  const TriMesh& mesh = *sp.mesh;
  for (int t = 0; t < sp.nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2& p0 = mesh.vertices[tri[0]];
    const Vec2& p1 = mesh.vertices[tri[1]];
    const Vec2& p2 = mesh.vertices[tri[2]];
    const double A = mesh.triangle_area(t);
    auto cross = [](const Vec2& a, const Vec2& b) {
      return a.x() * b.y() - a.y() * b.x();
    };
    const double l0 = cross(p1 - x, p2 - x) / (2.0 * A);
    const double l1 = cross(p2 - x, p0 - x) / (2.0 * A);
    const double l2 = cross(p0 - x, p1 - x) / (2.0 * A);
    const double tol = -1e-12;
    if (l0 < tol || l1 < tol || l2 < tol) continue;
    Vec2 u = l0 * sp.global_velocity(coeffs, tri[0]) +
             l1 * sp.global_velocity(coeffs, tri[1]) +
             l2 * sp.global_velocity(coeffs, tri[2]);
    const double b = 27.0 * l0 * l1 * l2;
    u.x() += b * coeffs[2 * (sp.nv + t)];
    u.y() += b * coeffs[2 * (sp.nv + t) + 1];
    return u;
  }
  throw ParameterError("point lies outside the mesh");
}

// Velocity interpolant (vertex values, zero bubbles) in the rotated frame.
template <class Fn>
Eigen::VectorXd interpolate_velocity(const MixedSpace& sp, Fn&& u_of_x) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(sp.n_dofs());
  for (int v = 0; v < sp.nv; ++v) {
    Vec2 u = u_of_x(sp.mesh->vertices[v]);
    const int fr = sp.frame_of_vertex[v];
    if (fr >= 0) u = sp.frames[fr].R * u;
    if (!sp.is_fixed(2 * v)) x[2 * v] = u.x();
    if (!sp.is_fixed(2 * v + 1)) x[2 * v + 1] = u.y();
  }
  return x;
}

}  // namespace sdrom

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdrom/common.hpp"
#include "sdrom/deim.hpp"
#include "sdrom/fem.hpp"
#include "sdrom/snapshots.hpp"

namespace sdrom {

// ---------------------------------------------------------------------------
// Guided selection of DEIM mode counts.
//
// The reduced solve is only as good as its weakest ingredient, so the field
// mode counts are grown from (1,1,1) until the average field epsilon
//   (eps_xi(n_xi) + eps_zeta(n_zeta) + eps_t(n_t)) / 3
// matches the solution-basis epsilon at the chosen reduced dimension r. Each
// step increments the count whose increment lowers the average most.

struct ModeCountPlan {
  int n_rb = 0;
  int n_xi = 1;
  int n_zeta = 1;
  int n_t = 1;
  int cap = 50;
  double target = 0.0;    // solution-basis epsilon at n_rb
  double achieved = 0.0;  // average field epsilon at the final counts
  bool reached = false;   // false when the target is unreachable under cap
};

// Epsilon values for truncation after 1..len modes, epsilon(basis, n) at
// index n-1.
inline Eigen::VectorXd epsilon_table(const ModeBasis& basis) {
  const int len = static_cast<int>(basis.sigma.size());
  Eigen::VectorXd tab(len);
  for (int n = 1; n <= len; ++n) tab[n - 1] = epsilon(basis, n);
  return tab;
}

namespace detail {

inline void check_nonincreasing(const Eigen::VectorXd& tab, const char* name) {
  if (tab.size() < 1)
    throw ParameterError(std::string("empty epsilon table for ") + name);
  for (Eigen::Index k = 0; k + 1 < tab.size(); ++k)
    if (tab[k + 1] > tab[k] + 1e-12)
      throw ParameterError(std::string("epsilon table for ") + name +
                           " is not non-increasing");
}

}  // namespace detail

inline ModeCountPlan plan_mode_counts(const Eigen::VectorXd& eps_rb,
                                      const Eigen::VectorXd& eps_xi,
                                      const Eigen::VectorXd& eps_zeta,
                                      const Eigen::VectorXd& eps_t, int r,
                                      int cap = 50) {
  detail::check_nonincreasing(eps_rb, "the solution basis");
  detail::check_nonincreasing(eps_xi, "xi");
  detail::check_nonincreasing(eps_zeta, "zeta");
  detail::check_nonincreasing(eps_t, "t");
  if (r < 1 || r > eps_rb.size())
    throw ParameterError("reduced dimension outside the solution table range");
  if (cap < 1) throw ParameterError("mode cap must be positive");

  ModeCountPlan p;
  p.n_rb = r;
  p.cap = cap;
  p.target = eps_rb[r - 1];

  const Eigen::VectorXd* tab[3] = {&eps_xi, &eps_zeta, &eps_t};
  int n[3] = {1, 1, 1};
  const auto value = [&](int f) { return (*tab[f])[n[f] - 1]; };
  const auto average = [&] {
    return (value(0) + value(1) + value(2)) / 3.0;
  };
  while (average() > p.target) {
    int best = -1;
    double best_drop = -1.0;
    for (int f = 0; f < 3; ++f) {
      if (n[f] >= std::min<Eigen::Index>(cap, tab[f]->size())) continue;
      const double drop = (*tab[f])[n[f] - 1] - (*tab[f])[n[f]];
      if (drop > best_drop) {
        best_drop = drop;
        best = f;
      }
    }
    if (best < 0) break;  // every count at its cap
    ++n[best];
  }
  p.n_xi = n[0];
  p.n_zeta = n[1];
  p.n_t = n[2];
  p.achieved = average();
  p.reached = p.achieved <= p.target;
  return p;
}

// ---------------------------------------------------------------------------
// Trained reduced-order model. Everything the online solve touches (reduced
// blocks, loads, interpolation data) is of reduced size; the training mesh,
// the solution basis V and the DEIM mode matrices ride along for lifting,
// error sweeps and provenance only.

struct RomProvenance {
  std::uint64_t seed = 0;
  SamplingPlan plan;
  ModeCountPlan counts;
  Eigen::VectorXd sigma_solution, sigma_xi, sigma_zeta, sigma_t;
  Eigen::VectorXd eps_solution, eps_xi, eps_zeta, eps_t;
};

struct RomBundle {
  GeometryFamily family;
  Material material;
  std::map<std::string, WallCondition> walls;
  TriMesh mesh;                 // training mesh, offline side only
  std::uint64_t mesh_hash = 0;
  Eigen::MatrixXd V;            // n_dofs x r, offline side only
  Eigen::MatrixXd K0;           // saddle coupling plus eliminated-dof pins
  std::vector<Eigen::MatrixXd> K_phi;    // n_xi (n_xi + 1) / 2 blocks
  std::vector<Eigen::MatrixXd> K_psi;    // n_zeta (n_zeta + 1) / 2
  std::vector<Eigen::MatrixXd> K_alpha;  // n_t (n_t + 1) / 2
  std::map<std::string, Eigen::VectorXd> F;  // unit-pressure loads per tag
  DeimModel deim_xi, deim_zeta, deim_t;
  RomProvenance provenance;

  int r() const { return static_cast<int>(K0.rows()); }
};

namespace detail {

// Projections of the parametric bilinear forms onto V, one column per nodal
// weight: column v of `visc` is vec(V^T A_visc(e_v) V) for the viscous form
// with the hat weight at vertex v, and likewise for the Darcy drag; `alpha`
// has three column groups (xx, xy, yy) matching the stacked tensor layout.
// Contracting these with DEIM mode products yields every reduced block from
// a single pass over the elements.
struct NodalProjections {
  Eigen::MatrixXd visc;   // r^2 x nv
  Eigen::MatrixXd darcy;  // r^2 x nv
  Eigen::MatrixXd alpha;  // r^2 x 3 nv
};

inline NodalProjections nodal_projections(const MixedSpace& sp,
                                          const Material& mat,
                                          const Eigen::MatrixXd& V) {
  const int r = static_cast<int>(V.cols());
  const int nv = sp.nv;
  NodalProjections P;
  P.visc = Eigen::MatrixXd::Zero(r * r, nv);
  P.darcy = Eigen::MatrixXd::Zero(r * r, nv);
  P.alpha = Eigen::MatrixXd::Zero(r * r, 3 * nv);

  Eigen::MatrixXd We(8, r), Wx(4, r), Wy(4, r), tmp(r, r);
  for (int t = 0; t < sp.nt; ++t) {
    const auto tb = tri_basis_indexed(*sp.mesh, t);

    // Element rows of V, taken back to the physical frame with eliminated
    // dofs zeroed; projecting the physical kernels through We reproduces
    // the rotate-then-scatter of the assemblers.
    for (int a = 0; a < 4; ++a)
      for (int i = 0; i < 2; ++i) {
        const int dof = velocity_dof(sp, tb, a, i);
        if (sp.is_fixed(dof))
          We.row(2 * a + i).setZero();
        else
          We.row(2 * a + i) = V.row(dof);
      }
    for (int a = 0; a < 3; ++a) {
      const int fr = sp.frame_of_vertex[tb.verts[a]];
      if (fr < 0) continue;
      We.middleRows<2>(2 * a) =
          sp.frames[fr].R.transpose() * We.middleRows<2>(2 * a);
    }
    for (int a = 0; a < 4; ++a) {
      Wx.row(a) = We.row(2 * a);
      Wy.row(a) = We.row(2 * a + 1);
    }

    // Per-corner kernels: the nodal weight enters the quadrature linearly,
    // so differentiating the assembler formulas in the weight at corner c
    // leaves the plain kernels scaled by l_c.
    std::array<Eigen::Matrix<double, 8, 8>, 3> Kv;
    std::array<Eigen::Matrix4d, 3> M;
    for (int c = 0; c < 3; ++c) {
      Kv[c].setZero();
      M[c].setZero();
    }
    for (const auto& qp : tb.qp)
      for (int c = 0; c < 3; ++c) {
        const double lw = qp.l[c] * qp.w;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            M[c](a, b) += lw * qp.N[a] * qp.N[b];
            const double gg = qp.gN[a].dot(qp.gN[b]);
            for (int i = 0; i < 2; ++i)
              for (int j = 0; j < 2; ++j)
                Kv[c](2 * a + i, 2 * b + j) +=
                    0.5 * lw * ((i == j ? gg : 0.0) + qp.gN[a][j] * qp.gN[b][i]);
          }
      }

    for (int c = 0; c < 3; ++c) {
      const int v = tb.verts[c];
      tmp.noalias() = We.transpose() * (Kv[c] * We);
      P.visc.col(v) += Eigen::Map<const Eigen::VectorXd>(tmp.data(), r * r);

      const Eigen::MatrixXd Px = M[c] * Wx;
      const Eigen::MatrixXd Py = M[c] * Wy;
      const Eigen::MatrixXd Gxx = Wx.transpose() * Px;
      const Eigen::MatrixXd Gyy = Wy.transpose() * Py;
      const Eigen::MatrixXd Gxyh = Wx.transpose() * Py;
      tmp = Gxx + Gyy;
      P.darcy.col(v) += Eigen::Map<const Eigen::VectorXd>(tmp.data(), r * r);
      P.alpha.col(v) += Eigen::Map<const Eigen::VectorXd>(Gxx.data(), r * r);
      tmp = Gxyh + Gxyh.transpose();
      P.alpha.col(nv + v) +=
          Eigen::Map<const Eigen::VectorXd>(tmp.data(), r * r);
      P.alpha.col(2 * nv + v) +=
          Eigen::Map<const Eigen::VectorXd>(Gyy.data(), r * r);
    }
  }
  P.visc *= 2.0 * mat.mu;
  P.darcy *= mat.mu / mat.kappa;
  return P;
}

// Contract nodal projections with DEIM mode products pair by pair, streaming
// the product columns in chunks so the full product matrix is never held.
template <class PairColumn>
std::vector<Eigen::MatrixXd> contract_blocks(const Eigen::MatrixXd& G, int r,
                                             Eigen::Index field_rows, int N,
                                             PairColumn&& pair_column) {
  const Eigen::Index n_pairs = static_cast<Eigen::Index>(N) * (N + 1) / 2;
  constexpr Eigen::Index kChunk = 64;
  Eigen::MatrixXd chunk(field_rows, std::min(kChunk, n_pairs));
  std::vector<Eigen::MatrixXd> blocks(n_pairs);
  Eigen::Index k0 = 0, fill = 0;
  const auto flush = [&] {
    if (!fill) return;
    const Eigen::MatrixXd flat = G * chunk.leftCols(fill);
    for (Eigen::Index c = 0; c < fill; ++c)
      blocks[k0 + c] =
          Eigen::Map<const Eigen::MatrixXd>(flat.col(c).data(), r, r);
    k0 += fill;
    fill = 0;
  };
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      pair_column(i, j, chunk.col(fill));
      if (++fill == chunk.cols()) flush();
    }
  flush();
  return blocks;
}

inline void check_deim_kind(const DeimModel& m, SnapshotKind want,
                            Eigen::Index rows) {
  if (m.kind != want)
    throw ParameterError("DEIM model order must be xi, zeta, t");
  if (m.modes.rows() != rows)
    throw ParameterError("DEIM modes for " + to_string(want) +
                         " do not match the space");
}

}  // namespace detail

// Projects the affine operator family onto the solution basis V. The blocks
// pair with the expanded interpolation weights: K_phi[k] with theta_phi[k]
// for the pair products of the xi modes, and so on.
inline RomBundle reduce_offline(const MixedSpace& sp, const Material& mat,
                                const Eigen::MatrixXd& V, const DeimModel& mx,
                                const DeimModel& mz, const DeimModel& mt) {
  if (V.rows() != sp.n_dofs() || V.cols() < 1)
    throw ParameterError("basis has " + std::to_string(V.rows()) +
                         " rows, the space has " +
                         std::to_string(sp.n_dofs()) + " dofs");
  detail::check_deim_kind(mx, SnapshotKind::xi, sp.nv);
  detail::check_deim_kind(mz, SnapshotKind::zeta, sp.nv);
  detail::check_deim_kind(mt, SnapshotKind::t, 2 * sp.nv);

  const int r = static_cast<int>(V.cols());
  const int nv = sp.nv;
  RomBundle b;
  b.material = mat;
  b.deim_xi = mx;
  b.deim_zeta = mz;
  b.deim_t = mt;

  const detail::NodalProjections P = detail::nodal_projections(sp, mat, V);
  b.K_phi = detail::contract_blocks(
      P.visc, r, nv, mx.n_modes(), [&](int i, int j, auto col) {
        col = mx.modes.col(i).cwiseProduct(mx.modes.col(j));
      });
  b.K_psi = detail::contract_blocks(
      P.darcy, r, nv, mz.n_modes(), [&](int i, int j, auto col) {
        col = mz.modes.col(i).cwiseProduct(mz.modes.col(j));
      });
  b.K_alpha = detail::contract_blocks(
      P.alpha, r, 3 * nv, mt.n_modes(), [&](int i, int j, auto col) {
        const auto xi_ = mt.modes.col(i).head(nv);
        const auto yi = mt.modes.col(i).tail(nv);
        const auto xj = mt.modes.col(j).head(nv);
        const auto yj = mt.modes.col(j).tail(nv);
        col.head(nv) = xi_.cwiseProduct(xj);
        col.segment(nv, nv) = 0.5 * (xi_.cwiseProduct(yj) + xj.cwiseProduct(yi));
        col.tail(nv) = yi.cwiseProduct(yj);
      });

  SpMat S = assemble_saddle(sp);
  std::vector<Eigen::Triplet<double>> ones;
  for (int d = 0; d < sp.n_vel(); ++d)
    if (sp.is_fixed(d)) ones.emplace_back(d, d, 1.0);
  SpMat I(sp.n_dofs(), sp.n_dofs());
  I.setFromTriplets(ones.begin(), ones.end());
  S += I;
  b.K0.noalias() = V.transpose() * (S * V);

  for (const auto& [tag, value] : mat.boundary_pressures) {
    (void)value;  // unit loads; pressures are applied online
    b.F[tag] = V.transpose() * pressure_load(sp, tag);
  }

  b.V = V;
  return b;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainOptions {
  int n_rb = 20;  // solution modes
  int cap = 50;   // per-field DEIM mode cap
  bool guided = true;
  // Explicit counts when guided is off; 0 means every available mode.
  int n_xi = 0, n_zeta = 0, n_t = 0;
  // Snapshot each boundary tag's response separately (multi-well coupling).
  bool per_tag_loads = false;
};

namespace detail {

inline int explicit_count(int requested, int avail, const char* name) {
  if (requested == 0) return avail;
  if (requested < 1 || requested > avail)
    throw ParameterError(std::string("requested ") + name + " mode count " +
                         std::to_string(requested) + " outside [1, " +
                         std::to_string(avail) + "]");
  return requested;
}

}  // namespace detail

// Training from prebuilt snapshot sets, e.g. read back from container
// files. The plan is recorded as provenance only; the snapshots decide the
// basis content.
inline RomBundle train_rom(const GeometryFamily& g, const Material& mat,
                           const std::map<std::string, WallCondition>& walls,
                           const SnapshotSet& snap_xi,
                           const SnapshotSet& snap_zeta,
                           const SnapshotSet& snap_t,
                           const SnapshotSet& snap_sol, const TriMesh& mesh,
                           const TrainOptions& opt = {},
                           const SamplingPlan& plan = {}) {
  if (snap_xi.kind != SnapshotKind::xi ||
      snap_zeta.kind != SnapshotKind::zeta ||
      snap_t.kind != SnapshotKind::t ||
      snap_sol.kind != SnapshotKind::solution)
    throw ParameterError("snapshot sets must come as xi, zeta, t, solution");
  const MixedSpace sp = make_space(mesh, walls);
  if (snap_sol.columns.rows() != sp.n_dofs())
    throw ParameterError("solution snapshots do not live on the training mesh");
  if (snap_xi.columns.rows() != mesh.n_vertices() ||
      snap_zeta.columns.rows() != mesh.n_vertices() ||
      snap_t.columns.rows() != 2 * mesh.n_vertices())
    throw ParameterError("field snapshots do not live on the training mesh");

  const int m = static_cast<int>(snap_sol.columns.cols());
  if (opt.n_rb < 1 || opt.n_rb > m)
    throw ParameterError("reduced dimension " + std::to_string(opt.n_rb) +
                         " outside [1, " + std::to_string(m) + "]");
  if (opt.cap < 1) throw ParameterError("mode cap must be positive");

  const ModeBasis basis_sol = svd_modes(snap_sol, opt.n_rb);
  // svd_modes drops numerically zero modes, so the effective dimension can
  // fall short of the request.
  const int n_rb = static_cast<int>(basis_sol.modes.cols());
  const auto field_basis = [&](const SnapshotSet& s) {
    const int avail = static_cast<int>(
        std::min(s.columns.rows(), s.columns.cols()));
    return svd_modes(s, std::min(avail, opt.cap));
  };
  const ModeBasis basis_xi = field_basis(snap_xi);
  const ModeBasis basis_zeta = field_basis(snap_zeta);
  const ModeBasis basis_t = field_basis(snap_t);

  RomProvenance prov;
  prov.seed = plan.seed != 0 ? plan.seed : snap_sol.seed;
  prov.plan = plan;
  prov.sigma_solution = basis_sol.sigma;
  prov.sigma_xi = basis_xi.sigma;
  prov.sigma_zeta = basis_zeta.sigma;
  prov.sigma_t = basis_t.sigma;
  prov.eps_solution = epsilon_table(basis_sol);
  prov.eps_xi = epsilon_table(basis_xi);
  prov.eps_zeta = epsilon_table(basis_zeta);
  prov.eps_t = epsilon_table(basis_t);

  const int avail_xi = static_cast<int>(basis_xi.modes.cols());
  const int avail_zeta = static_cast<int>(basis_zeta.modes.cols());
  const int avail_t = static_cast<int>(basis_t.modes.cols());

  ModeCountPlan counts;
  if (opt.guided) {
    // Plan on the realizable head of each table: numerically zero modes are
    // never selectable.
    counts = plan_mode_counts(prov.eps_solution, prov.eps_xi.head(avail_xi),
                              prov.eps_zeta.head(avail_zeta),
                              prov.eps_t.head(avail_t), n_rb, opt.cap);
  } else {
    counts.n_rb = n_rb;
    counts.cap = opt.cap;
    counts.n_xi = detail::explicit_count(opt.n_xi, avail_xi, "xi");
    counts.n_zeta = detail::explicit_count(opt.n_zeta, avail_zeta, "zeta");
    counts.n_t = detail::explicit_count(opt.n_t, avail_t, "t");
    counts.target = epsilon(basis_sol, n_rb);
    counts.achieved = (epsilon(basis_xi, counts.n_xi) +
                       epsilon(basis_zeta, counts.n_zeta) +
                       epsilon(basis_t, counts.n_t)) /
                      3.0;
    counts.reached = counts.achieved <= counts.target;
  }
  prov.counts = counts;

  DeimModel mx = select_points(basis_xi, counts.n_xi);
  DeimModel mz = select_points(basis_zeta, counts.n_zeta);
  DeimModel mt = select_points(basis_t, counts.n_t);
  localize_points(mx, mesh);
  localize_points(mz, mesh);
  localize_points(mt, mesh);

  RomBundle b = reduce_offline(sp, mat, basis_sol.modes, mx, mz, mt);
  b.family = g;
  b.walls = walls;
  b.mesh = mesh;
  b.mesh_hash = mesh.content_hash();
  b.provenance = std::move(prov);
  return b;
}

inline RomBundle train_rom(const GeometryFamily& g, const Material& mat,
                           const std::map<std::string, WallCondition>& walls,
                           const SamplingPlan& plan, const TriMesh& mesh,
                           const TrainOptions& opt = {}) {
  return train_rom(g, mat, walls,
                   build_snapshots(SnapshotKind::xi, g, plan, mesh),
                   build_snapshots(SnapshotKind::zeta, g, plan, mesh),
                   build_snapshots(SnapshotKind::t, g, plan, mesh),
                   build_snapshots(g, mat, walls, plan, mesh,
                                   opt.per_tag_loads),
                   mesh, opt, plan);
}

// ---------------------------------------------------------------------------
// Online stage. Nothing here may touch the mesh, the basis or the DEIM mode
// matrices: the cost of one solve depends on r and the mode counts only.

inline Eigen::MatrixXd online_matrix(const RomBundle& b,
                                     const AffineWeights& w) {
  if (w.theta_phi.size() != static_cast<Eigen::Index>(b.K_phi.size()) ||
      w.theta_psi.size() != static_cast<Eigen::Index>(b.K_psi.size()) ||
      w.theta_alpha.size() != static_cast<Eigen::Index>(b.K_alpha.size()))
    throw ParameterError("affine weights do not match the bundle blocks");
  Eigen::MatrixXd K = b.K0;
  for (Eigen::Index k = 0; k < w.theta_phi.size(); ++k)
    K.noalias() += w.theta_phi[k] * b.K_phi[static_cast<std::size_t>(k)];
  for (Eigen::Index k = 0; k < w.theta_psi.size(); ++k)
    K.noalias() += w.theta_psi[k] * b.K_psi[static_cast<std::size_t>(k)];
  for (Eigen::Index k = 0; k < w.theta_alpha.size(); ++k)
    K.noalias() += w.theta_alpha[k] * b.K_alpha[static_cast<std::size_t>(k)];
  return K;
}

inline Eigen::VectorXd solve_online(const RomBundle& b,
                                    const Eigen::VectorXd& beta,
                                    const std::map<std::string, double>& pressures,
                                    double* condition_out = nullptr) {
  const AffineWeights w =
      affine_weights(b.deim_xi, b.deim_zeta, b.deim_t, b.family, beta);
  const Eigen::MatrixXd K = online_matrix(b, w);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(b.r());
  for (const auto& [tag, p] : pressures) {
    const auto it = b.F.find(tag);
    if (it == b.F.end())
      throw ParameterError("no reduced load for boundary tag: " + tag);
    f += p * it->second;
  }
  if (f.norm() == 0.0) {
    if (condition_out) *condition_out = 0.0;
    return Eigen::VectorXd::Zero(b.r());
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  const double rcond = lu.rcond();
  const double condition =
      rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (condition_out) *condition_out = condition;
  const Eigen::VectorXd u = lu.solve(f);
  const double rel = (K * u - f).norm() / f.norm();
  if (!(rel <= 1e-10))
    throw NumericsError("reduced solve residual " + std::to_string(rel) +
                        " exceeds 1e-10 (condition estimate " +
                        std::to_string(condition) + ")");
  return u;
}

inline Eigen::VectorXd solve_online(const RomBundle& b,
                                    const Eigen::VectorXd& beta,
                                    double* condition_out = nullptr) {
  return solve_online(b, beta, b.material.boundary_pressures, condition_out);
}

inline Eigen::VectorXd lift(const RomBundle& b, const Eigen::VectorXd& u_rb) {
  if (b.V.cols() != b.r())
    throw ConfigError("bundle carries no solution basis to lift with");
  if (u_rb.size() != b.r())
    throw ParameterError("reduced coefficient vector has wrong length");
  return b.V * u_rb;
}

// Maximum relative velocity L2 error of the reduced model against a set of
// high-fidelity solution snapshots on the training mesh.
inline double sweep_max_error(const RomBundle& b, const SnapshotSet& hifi) {
  if (hifi.kind != SnapshotKind::solution)
    throw ParameterError("error sweep needs solution snapshots");
  const MixedSpace sp = make_space(b.mesh, b.walls);
  if (hifi.columns.rows() != sp.n_dofs() || b.V.rows() != sp.n_dofs())
    throw ParameterError("snapshots do not live on the bundle mesh");
  const SpMat mass = assemble_velocity_mass(sp);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < hifi.columns.cols(); ++c) {
    const Eigen::VectorXd u_rb = lift(b, solve_online(b, hifi.betas.col(c)));
    const Eigen::VectorXd diff = u_rb - hifi.columns.col(c);
    const double denom = velocity_l2_norm(mass, hifi.columns.col(c));
    const double err = velocity_l2_norm(mass, diff);
    worst = std::max(worst, denom > 0.0 ? err / denom : err);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Nested truncation. DEIM selection and the block layout are hierarchical,
// so a smaller model is a prefix slice of a larger one; sweeping over r or
// mode counts then needs a single training pass.

namespace detail {

inline DeimModel sub_model(const DeimModel& m, int n) {
  if (n < 1 || n > m.n_modes())
    throw ParameterError("sub-model mode count outside [1, " +
                         std::to_string(m.n_modes()) + "]");
  DeimModel s;
  s.kind = m.kind;
  s.modes = m.modes.leftCols(n);
  s.points.assign(m.points.begin(), m.points.begin() + n);
  s.interp = m.interp.topLeftCorner(n, n);
  s.lu.compute(s.interp);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.interp);
  const double smin = svd.singularValues().minCoeff();
  s.condition = smin > 0.0 ? svd.singularValues().maxCoeff() / smin
                           : std::numeric_limits<double>::infinity();
  if (m.localized()) {
    s.point_xy = m.point_xy.leftCols(n);
    s.point_comp.assign(m.point_comp.begin(), m.point_comp.begin() + n);
  }
  return s;
}

inline std::vector<Eigen::MatrixXd> sub_blocks(
    const std::vector<Eigen::MatrixXd>& blocks, int N, int n, int r) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * N -
                            static_cast<std::size_t>(i) * (i - 1) / 2 + (j - i);
      out.push_back(blocks[k].topLeftCorner(r, r));
    }
  return out;
}

}  // namespace detail

inline RomBundle sub_bundle(const RomBundle& b, int r, int n_xi, int n_zeta,
                            int n_t) {
  if (r < 1 || r > b.r())
    throw ParameterError("sub-bundle dimension outside [1, " +
                         std::to_string(b.r()) + "]");
  RomBundle s;
  s.family = b.family;
  s.material = b.material;
  s.walls = b.walls;
  s.mesh = b.mesh;
  s.mesh_hash = b.mesh_hash;
  if (b.V.size()) s.V = b.V.leftCols(r);
  s.K0 = b.K0.topLeftCorner(r, r);
  s.deim_xi = detail::sub_model(b.deim_xi, n_xi);
  s.deim_zeta = detail::sub_model(b.deim_zeta, n_zeta);
  s.deim_t = detail::sub_model(b.deim_t, n_t);
  s.K_phi = detail::sub_blocks(b.K_phi, b.deim_xi.n_modes(), n_xi, r);
  s.K_psi = detail::sub_blocks(b.K_psi, b.deim_zeta.n_modes(), n_zeta, r);
  s.K_alpha = detail::sub_blocks(b.K_alpha, b.deim_t.n_modes(), n_t, r);
  for (const auto& [tag, F] : b.F) s.F[tag] = F.head(r);
  s.provenance = b.provenance;
  s.provenance.counts.n_rb = r;
  s.provenance.counts.n_xi = n_xi;
  s.provenance.counts.n_zeta = n_zeta;
  s.provenance.counts.n_t = n_t;
  return s;
}

// ---------------------------------------------------------------------------
// SDROMBv1 container: a trained model as one portable, checksummed file.
// Little-endian, raw IEEE doubles; string payloads are u64 length + bytes;
// trailing u64 fnv1a64 over everything before it.

namespace detail {

inline constexpr char kBundleMagic[8] = {'S', 'D', 'R', 'O', 'M', 'B', 'v', '1'};

inline void put_str(std::string& buf, const std::string& s) {
  put_scalar<std::uint64_t>(buf, s.size());
  put_bytes(buf, s.data(), s.size());
}

inline void put_vec(std::string& buf, const Eigen::VectorXd& v) {
  put_scalar<std::uint64_t>(buf, static_cast<std::uint64_t>(v.size()));
  if (v.size()) put_bytes(buf, v.data(), sizeof(double) * v.size());
}

inline void put_mat(std::string& buf, const Eigen::MatrixXd& m) {
  put_scalar<std::uint64_t>(buf, static_cast<std::uint64_t>(m.rows()));
  put_scalar<std::uint64_t>(buf, static_cast<std::uint64_t>(m.cols()));
  put_matrix(buf, m);
}

inline void put_ints(std::string& buf, const std::vector<int>& v) {
  put_scalar<std::uint64_t>(buf, v.size());
  for (int x : v) put_scalar<std::int64_t>(buf, x);
}

inline std::string rd_str(ByteReader& rd) {
  const auto n = rd.scalar<std::uint64_t>();
  if (rd.pos + n > rd.buf.size()) throw FormatError("container truncated");
  std::string s(rd.buf.data() + rd.pos, n);
  rd.pos += n;
  return s;
}

inline Eigen::VectorXd rd_vec(ByteReader& rd) {
  const auto n = rd.scalar<std::uint64_t>();
  Eigen::VectorXd v(n);
  if (n) rd.take(v.data(), sizeof(double) * n);
  return v;
}

inline Eigen::MatrixXd rd_mat(ByteReader& rd) {
  const auto rows = rd.scalar<std::uint64_t>();
  const auto cols = rd.scalar<std::uint64_t>();
  return rd.matrix(rows, cols);
}

inline std::vector<int> rd_ints(ByteReader& rd) {
  const auto n = rd.scalar<std::uint64_t>();
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(rd.scalar<std::int64_t>());
  return v;
}

inline void put_family(std::string& buf, const GeometryFamily& g) {
  put_scalar<std::uint32_t>(buf, static_cast<std::uint32_t>(g.kind));
  for (double x : {g.delta, g.alpha_shear, g.r_inner, g.r_outer,
                   g.spiral_width, g.domain_width, g.channel_width,
                   g.hole_width, g.hole_height, g.hole_centers_x[0],
                   g.hole_centers_x[1], g.hole_centers_x[2], g.hole_center_y,
                   g.well_distance, g.well_radius, g.channel_halfwidth,
                   g.crack_halfwidth})
    put_scalar<double>(buf, x);
}

inline GeometryFamily rd_family(ByteReader& rd) {
  GeometryFamily g;
  const auto kind = rd.scalar<std::uint32_t>();
  if (kind > 3) throw FormatError("unknown geometry family in bundle");
  g.kind = static_cast<FamilyKind>(kind);
  for (double* x : {&g.delta, &g.alpha_shear, &g.r_inner, &g.r_outer,
                    &g.spiral_width, &g.domain_width, &g.channel_width,
                    &g.hole_width, &g.hole_height, &g.hole_centers_x[0],
                    &g.hole_centers_x[1], &g.hole_centers_x[2],
                    &g.hole_center_y, &g.well_distance, &g.well_radius,
                    &g.channel_halfwidth, &g.crack_halfwidth})
    *x = rd.scalar<double>();
  return g;
}

inline void put_deim(std::string& buf, const DeimModel& m) {
  put_scalar<std::uint32_t>(buf, static_cast<std::uint32_t>(m.kind));
  put_mat(buf, m.modes);
  put_ints(buf, m.points);
  put_mat(buf, m.interp);
  put_scalar<double>(buf, m.condition);
  put_mat(buf, m.point_xy);
  put_ints(buf, m.point_comp);
}

inline DeimModel rd_deim(ByteReader& rd) {
  DeimModel m;
  const auto kind = rd.scalar<std::uint32_t>();
  if (kind > 3) throw FormatError("unknown snapshot kind in bundle");
  m.kind = static_cast<SnapshotKind>(kind);
  m.modes = rd_mat(rd);
  m.points = rd_ints(rd);
  m.interp = rd_mat(rd);
  m.condition = rd.scalar<double>();
  m.point_xy = rd_mat(rd);
  m.point_comp = rd_ints(rd);
  if (m.interp.rows() != m.interp.cols() ||
      m.interp.rows() != static_cast<Eigen::Index>(m.points.size()))
    throw FormatError("inconsistent DEIM payload in bundle");
  if (m.n_modes()) m.lu.compute(m.interp);
  return m;
}

}  // namespace detail

inline std::string encode_bundle(const RomBundle& b) {
  using namespace detail;
  std::string buf;
  put_bytes(buf, kBundleMagic, 8);
  put_family(buf, b.family);
  put_scalar<double>(buf, b.material.mu);
  put_scalar<double>(buf, b.material.kappa);
  put_scalar<std::uint64_t>(buf, b.material.boundary_pressures.size());
  for (const auto& [tag, p] : b.material.boundary_pressures) {
    put_str(buf, tag);
    put_scalar<double>(buf, p);
  }
  put_scalar<std::uint64_t>(buf, b.walls.size());
  for (const auto& [tag, cond] : b.walls) {
    put_str(buf, tag);
    put_scalar<std::uint32_t>(buf, static_cast<std::uint32_t>(cond));
  }
  put_str(buf, b.mesh.n_vertices() ? serialize_trimesh(b.mesh) : "");
  put_scalar<std::uint64_t>(buf, b.mesh_hash);

  const RomProvenance& pv = b.provenance;
  put_scalar<std::uint64_t>(buf, pv.seed);
  put_scalar<std::uint64_t>(buf, pv.plan.points.size());
  for (const auto& pt : pv.plan.points) put_vec(buf, pt);
  put_ints(buf, pv.plan.grid);
  put_scalar<std::int64_t>(buf, pv.plan.n_random);
  put_scalar<std::uint64_t>(buf, pv.plan.seed);
  const ModeCountPlan& c = pv.counts;
  for (int x : {c.n_rb, c.n_xi, c.n_zeta, c.n_t, c.cap})
    put_scalar<std::int64_t>(buf, x);
  put_scalar<double>(buf, c.target);
  put_scalar<double>(buf, c.achieved);
  put_scalar<std::uint32_t>(buf, c.reached ? 1 : 0);
  for (const Eigen::VectorXd* v :
       {&pv.sigma_solution, &pv.sigma_xi, &pv.sigma_zeta, &pv.sigma_t,
        &pv.eps_solution, &pv.eps_xi, &pv.eps_zeta, &pv.eps_t})
    put_vec(buf, *v);

  put_mat(buf, b.V);
  put_mat(buf, b.K0);
  for (const std::vector<Eigen::MatrixXd>* blocks :
       {&b.K_phi, &b.K_psi, &b.K_alpha}) {
    put_scalar<std::uint64_t>(buf, blocks->size());
    for (const auto& K : *blocks) put_mat(buf, K);
  }
  put_scalar<std::uint64_t>(buf, b.F.size());
  for (const auto& [tag, F] : b.F) {
    put_str(buf, tag);
    put_vec(buf, F);
  }
  put_deim(buf, b.deim_xi);
  put_deim(buf, b.deim_zeta);
  put_deim(buf, b.deim_t);
  put_scalar<std::uint64_t>(buf, fnv1a64(buf.data(), buf.size()));
  return buf;
}

inline RomBundle decode_bundle(const std::string& buf) {
  using namespace detail;
  if (buf.size() < 8 + 8) throw FormatError("container truncated");
  if (std::memcmp(buf.data(), kBundleMagic, 8) != 0)
    throw FormatError("bad magic, not an SDROMBv1 container");
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (stored != fnv1a64(buf.data(), buf.size() - 8))
    throw FormatError("checksum mismatch, container is corrupt");
  ByteReader rd{buf, 8};
  RomBundle b;
  b.family = rd_family(rd);
  b.material.mu = rd.scalar<double>();
  b.material.kappa = rd.scalar<double>();
  const auto n_pres = rd.scalar<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_pres; ++i) {
    const std::string tag = rd_str(rd);
    b.material.boundary_pressures[tag] = rd.scalar<double>();
  }
  const auto n_walls = rd.scalar<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_walls; ++i) {
    const std::string tag = rd_str(rd);
    const auto cond = rd.scalar<std::uint32_t>();
    if (cond > 1) throw FormatError("unknown wall condition in bundle");
    b.walls[tag] = static_cast<WallCondition>(cond);
  }
  const std::string mesh_text = rd_str(rd);
  if (!mesh_text.empty()) b.mesh = parse_trimesh(mesh_text);
  b.mesh_hash = rd.scalar<std::uint64_t>();
  if (!mesh_text.empty() && b.mesh.content_hash() != b.mesh_hash)
    throw FormatError("bundle mesh does not match its recorded hash");

  RomProvenance& pv = b.provenance;
  pv.seed = rd.scalar<std::uint64_t>();
  const auto n_pts = rd.scalar<std::uint64_t>();
  pv.plan.points.resize(n_pts);
  for (auto& pt : pv.plan.points) pt = rd_vec(rd);
  pv.plan.grid = rd_ints(rd);
  pv.plan.n_random = static_cast<int>(rd.scalar<std::int64_t>());
  pv.plan.seed = rd.scalar<std::uint64_t>();
  ModeCountPlan& c = pv.counts;
  for (int* x : {&c.n_rb, &c.n_xi, &c.n_zeta, &c.n_t, &c.cap})
    *x = static_cast<int>(rd.scalar<std::int64_t>());
  c.target = rd.scalar<double>();
  c.achieved = rd.scalar<double>();
  c.reached = rd.scalar<std::uint32_t>() != 0;
  for (Eigen::VectorXd* v :
       {&pv.sigma_solution, &pv.sigma_xi, &pv.sigma_zeta, &pv.sigma_t,
        &pv.eps_solution, &pv.eps_xi, &pv.eps_zeta, &pv.eps_t})
    *v = rd_vec(rd);

  b.V = rd_mat(rd);
  b.K0 = rd_mat(rd);
  for (std::vector<Eigen::MatrixXd>* blocks :
       {&b.K_phi, &b.K_psi, &b.K_alpha}) {
    const auto n = rd.scalar<std::uint64_t>();
    blocks->resize(n);
    for (auto& K : *blocks) K = rd_mat(rd);
  }
  const auto n_loads = rd.scalar<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_loads; ++i) {
    const std::string tag = rd_str(rd);
    b.F[tag] = rd_vec(rd);
  }
  b.deim_xi = rd_deim(rd);
  b.deim_zeta = rd_deim(rd);
  b.deim_t = rd_deim(rd);
  if (rd.pos != buf.size() - 8)
    throw FormatError("container size does not match its payload");
  return b;
}

inline void write_bundle(const std::string& path, const RomBundle& b) {
  detail::write_file(path, encode_bundle(b));
}

inline RomBundle read_bundle(const std::string& path) {
  return decode_bundle(detail::read_file(path));
}

}  // namespace sdrom

#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdrom/common.hpp"
#include "sdrom/phasefield.hpp"
#include "sdrom/pod.hpp"
#include "sdrom/trimesh.hpp"

namespace sdrom {

// Discrete empirical interpolation of one field family. `modes` keeps the
// columns actually used (dofs x N), `points` the greedily selected dof
// indices, and `interp` the N x N matrix [mode_i(point_j)] whose
// factorization turns point samples into weights.
struct DeimModel {
  SnapshotKind kind = SnapshotKind::xi;
  Eigen::MatrixXd modes;
  std::vector<int> points;
  Eigen::MatrixXd interp;
  Eigen::FullPivLU<Eigen::MatrixXd> lu;
  double condition = 0.0;
  // Physical point locations (2 x N) and, for t, the sampled component;
  // filled by localize_points so online sampling needs no mesh.
  Eigen::MatrixXd point_xy;
  std::vector<int> point_comp;

  int n_modes() const { return static_cast<int>(points.size()); }
  bool localized() const { return point_xy.cols() == n_modes(); }
};

namespace detail {

// argmax of |v|, lowest index on ties.
inline int argmax_abs(const Eigen::VectorXd& v) {
  int best = 0;
  double mag = std::abs(v[0]);
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > mag) {
      mag = std::abs(v[i]);
      best = static_cast<int>(i);
    }
  return best;
}

}  // namespace detail

inline DeimModel select_points(const ModeBasis& basis, int N) {
  const Eigen::Index avail = basis.modes.cols();
  if (N < 1 || N > avail)
    throw ParameterError("DEIM mode count must lie in [1, " +
                         std::to_string(avail) + "]");
  DeimModel m;
  m.kind = basis.kind;
  m.modes = basis.modes.leftCols(N);
  m.points.reserve(N);
  m.points.push_back(detail::argmax_abs(m.modes.col(0)));
  for (int n = 1; n < N; ++n) {
    Eigen::MatrixXd P(n, n);
    Eigen::VectorXd rhs(n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) P(j, i) = m.modes(m.points[j], i);
      rhs[j] = m.modes(m.points[j], n);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(P);
    if (!lu.isInvertible())
      throw NumericsError("DEIM interpolation matrix singular at mode " +
                          std::to_string(n + 1));
    Eigen::VectorXd r = m.modes.col(n) - m.modes.leftCols(n) * lu.solve(rhs);
    // The residual vanishes at selected points by construction; pin it so
    // roundoff cannot re-select one.
    for (int p : m.points) r[p] = 0.0;
    const int pick = detail::argmax_abs(r);
    if (std::abs(r[pick]) <= 1e-14 * m.modes.col(n).norm())
      throw NumericsError("DEIM residual degenerate at mode " +
                          std::to_string(n + 1) +
                          "; mode is interpolated exactly by its predecessors");
    m.points.push_back(pick);
  }
  m.interp.resize(N, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) m.interp(j, i) = m.modes(m.points[j], i);
  m.lu.compute(m.interp);
  if (!m.lu.isInvertible())
    throw NumericsError("DEIM interpolation matrix singular at mode " +
                        std::to_string(N));
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.interp);
  const double smin = svd.singularValues()[N - 1];
  m.condition = smin > 0.0 ? svd.singularValues()[0] / smin
                           : std::numeric_limits<double>::infinity();
  if (m.condition >= 1e12)
    std::cerr << "warning: DEIM interpolation matrix for " << to_string(m.kind)
              << " has condition number " << m.condition << "\n";
  return m;
}

// Gathers a full nodal field at the model's interpolation points.
inline Eigen::VectorXd gather(const Eigen::VectorXd& field,
                              const std::vector<int>& points) {
  Eigen::VectorXd out(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (points[j] < 0 || points[j] >= field.size())
      throw ParameterError("interpolation point outside the field");
    out[j] = field[points[j]];
  }
  return out;
}

inline Eigen::VectorXd weights(const DeimModel& m,
                               const Eigen::VectorXd& f_at_points) {
  if (f_at_points.size() != m.n_modes())
    throw ParameterError("sample length " + std::to_string(f_at_points.size()) +
                         " does not match mode count " +
                         std::to_string(m.n_modes()));
  return m.lu.solve(f_at_points);
}

// Full nodal evaluation of one field family at beta. Going through
// sample_fields keeps the online samples identical to the training
// snapshots, gradient floor included.
inline Eigen::VectorXd field_values(SnapshotKind kind, const GeometryFamily& g,
                                    const Eigen::VectorXd& beta,
                                    const TriMesh& mesh) {
  const FieldSample s = sample_fields(g, beta, mesh);
  switch (kind) {
    case SnapshotKind::xi: return s.xi;
    case SnapshotKind::zeta: return s.zeta;
    case SnapshotKind::t: return s.t;
    default:
      throw ParameterError("field_values expects a field kind, not solution");
  }
}

inline Eigen::VectorXd weights_at(const DeimModel& m, const GeometryFamily& g,
                                  const Eigen::VectorXd& beta,
                                  const TriMesh& mesh) {
  return weights(m, gather(field_values(m.kind, g, beta, mesh), m.points));
}

// Standard DEIM reconstruction of an arbitrary nodal target through the
// model's modes and points. Used both for the model's own field and for the
// comparison studies that interpolate phi itself with the xi modes.
inline Eigen::VectorXd reconstruct_classical(const DeimModel& m,
                                             const Eigen::VectorXd& target) {
  return m.modes * weights(m, gather(target, m.points));
}

inline Eigen::VectorXd reconstruct_classical(const DeimModel& m,
                                             const GeometryFamily& g,
                                             const Eigen::VectorXd& beta,
                                             const TriMesh& mesh) {
  return m.modes * weights_at(m, g, beta, mesh);
}

// Expanded weights for the squared reconstruction: pairs (i, j) with i <= j,
// j running fastest, so k = i*N - i*(i-1)/2 + (j - i). theta_i^2 on the
// diagonal, 2 theta_i theta_j off it.
inline Eigen::VectorXd expand_squared(const Eigen::VectorXd& theta) {
  const Eigen::Index N = theta.size();
  Eigen::VectorXd out(N * (N + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i; j < N; ++j, ++k)
      out[k] = (i == j) ? theta[i] * theta[i] : 2.0 * theta[i] * theta[j];
  return out;
}

// Companion mode products, same pair order as expand_squared. Scalar modes
// (dofs x N) map to pointwise products; the reconstruction identity is
//   sum_k theta^phi_k prod_k = (sum_i theta_i mode_i)^2  at every node.
inline Eigen::MatrixXd expanded_products(const Eigen::MatrixXd& modes) {
  const Eigen::Index N = modes.cols();
  Eigen::MatrixXd out(modes.rows(), N * (N + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i; j < N; ++j, ++k)
      out.col(k) = modes.col(i).cwiseProduct(modes.col(j));
  return out;
}

// Tensor variant for t modes stacked as (x components; y components).
// Column k holds the symmetrized outer product 1/2 (t_i t_j^T + t_j t_i^T)
// per node, stacked as (xx; xy; yy), 3 n_vertices rows.
inline Eigen::MatrixXd expanded_products_tensor(const Eigen::MatrixXd& tmodes) {
  if (tmodes.rows() % 2 != 0)
    throw ParameterError("t modes must stack two components");
  const Eigen::Index nv = tmodes.rows() / 2;
  const Eigen::Index N = tmodes.cols();
  Eigen::MatrixXd out(3 * nv, N * (N + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i; j < N; ++j, ++k) {
      const auto xi_ = tmodes.col(i).head(nv);
      const auto yi = tmodes.col(i).tail(nv);
      const auto xj = tmodes.col(j).head(nv);
      const auto yj = tmodes.col(j).tail(nv);
      out.col(k).head(nv) = xi_.cwiseProduct(xj);
      out.col(k).segment(nv, nv) =
          0.5 * (xi_.cwiseProduct(yj) + xj.cwiseProduct(yi));
      out.col(k).tail(nv) = yi.cwiseProduct(yj);
    }
  return out;
}

// Non-negative reconstruction: phi and psi are squares of the xi and zeta
// interpolants, alpha is the rank-one tensor of the t interpolant, stacked
// (xx; xy; yy). Non-negativity and nodal positive semidefiniteness hold by
// construction for every beta and every mode count.
struct NonnegFields {
  Eigen::VectorXd phi;    // n_vertices
  Eigen::VectorXd psi;    // n_vertices
  Eigen::VectorXd alpha;  // 3 n_vertices
};

inline NonnegFields reconstruct_nonneg(const DeimModel& xi_model,
                                       const DeimModel& zeta_model,
                                       const DeimModel& t_model,
                                       const GeometryFamily& g,
                                       const Eigen::VectorXd& beta,
                                       const TriMesh& mesh) {
  const FieldSample s = sample_fields(g, beta, mesh);
  const Eigen::VectorXd xi_rec =
      xi_model.modes * weights(xi_model, gather(s.xi, xi_model.points));
  const Eigen::VectorXd zeta_rec =
      zeta_model.modes * weights(zeta_model, gather(s.zeta, zeta_model.points));
  const Eigen::VectorXd t_rec =
      t_model.modes * weights(t_model, gather(s.t, t_model.points));
  const Eigen::Index nv = mesh.n_vertices();
  NonnegFields out;
  out.phi = xi_rec.array().square();
  out.psi = zeta_rec.array().square();
  out.alpha.resize(3 * nv);
  out.alpha.head(nv) = t_rec.head(nv).array().square();
  out.alpha.segment(nv, nv) =
      t_rec.head(nv).cwiseProduct(t_rec.tail(nv));
  out.alpha.tail(nv) = t_rec.tail(nv).array().square();
  return out;
}

// Attach physical coordinates (and for t the component index) to the
// interpolation points of `m`, so weights can later be evaluated without
// the mesh. Must be called with the mesh the model was trained on.
inline void localize_points(DeimModel& m, const TriMesh& mesh) {
  const int nv = mesh.n_vertices();
  const int N = m.n_modes();
  m.point_xy.resize(2, N);
  m.point_comp.assign(N, 0);
  for (int j = 0; j < N; ++j) {
    int node = m.points[static_cast<std::size_t>(j)];
    if (m.kind == SnapshotKind::t) {
      m.point_comp[static_cast<std::size_t>(j)] = node / nv;
      node %= nv;
    }
    if (node < 0 || node >= nv)
      throw ParameterError("interpolation point outside mesh");
    m.point_xy.col(j) = mesh.vertices[static_cast<std::size_t>(node)];
  }
}

// Field values at the localized interpolation points, evaluated from the
// geometry alone. Matches the nodal definitions in sample_fields except
// that the t cutoff references the analytic profile slope 1.5 / delta
// instead of the maximal nodal gradient, which is unavailable without a
// mesh; the two floors differ only on gradients of order 1e-3 * 1.5 /
// delta, far below anything the greedy selection picks.
inline Eigen::VectorXd analytic_samples(const DeimModel& m,
                                        const GeometryFamily& g,
                                        const Eigen::VectorXd& beta) {
  if (!m.localized())
    throw ConfigError("interpolation points carry no coordinates; "
                      "call localize_points after training");
  detail::check_beta(g, beta);
  const int N = m.n_modes();
  const double floor = 1e-3 * 1.5 / g.delta;
  Eigen::VectorXd out(N);
  for (int j = 0; j < N; ++j) {
    const detail::PhiEval e = detail::phi_eval(g, beta, m.point_xy.col(j));
    const double phi = std::clamp(e.phi, 0.0, 1.0);
    switch (m.kind) {
      case SnapshotKind::xi:
        out[j] = std::sqrt(phi);
        break;
      case SnapshotKind::zeta:
        out[j] = std::sqrt(1.0 - phi);
        break;
      case SnapshotKind::t: {
        const double gn = e.grad.norm();
        if (gn <= floor || gn == 0.0) {
          out[j] = 0.0;
        } else {
          const double scale = std::sqrt(2.0 * g.alpha_shear / gn);
          out[j] = m.point_comp[static_cast<std::size_t>(j)] == 0
                       ? scale * (-e.grad.y())
                       : scale * e.grad.x();
        }
        break;
      }
      default:
        throw ParameterError("analytic sampling requires a field kind");
    }
  }
  return out;
}

// Interpolation weights for the three field families at one parameter
// value, plus their expansions to the quadratic products entering the
// affine operator: theta_phi pairs with xi_i * xi_j, theta_psi with
// zeta_i * zeta_j and theta_alpha with the t_i (x) t_j tensor blocks.
struct AffineWeights {
  Eigen::VectorXd theta_xi;
  Eigen::VectorXd theta_zeta;
  Eigen::VectorXd theta_t;
  Eigen::VectorXd theta_phi;
  Eigen::VectorXd theta_psi;
  Eigen::VectorXd theta_alpha;
};

inline AffineWeights affine_weights(const DeimModel& xi_model,
                                    const DeimModel& zeta_model,
                                    const DeimModel& t_model,
                                    const GeometryFamily& g,
                                    const Eigen::VectorXd& beta) {
  AffineWeights w;
  w.theta_xi = weights(xi_model, analytic_samples(xi_model, g, beta));
  w.theta_zeta = weights(zeta_model, analytic_samples(zeta_model, g, beta));
  w.theta_t = weights(t_model, analytic_samples(t_model, g, beta));
  w.theta_phi = expand_squared(w.theta_xi);
  w.theta_psi = expand_squared(w.theta_zeta);
  w.theta_alpha = expand_squared(w.theta_t);
  return w;
}

}  // namespace sdrom

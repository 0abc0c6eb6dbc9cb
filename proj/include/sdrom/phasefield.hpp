#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "sdrom/common.hpp"
#include "sdrom/trimesh.hpp"

namespace sdrom {

// Parametric phase-field geometry families. phi is 1 in the free-flow
// (Stokes) region and 0 in the porous (Darcy) region, with a
// tanh profile of width delta across the interface:
//   phi(x) = 1/2 (1 + tanh(3 s(x) / delta)),
// s being the signed distance into the free-flow region.
enum class FamilyKind { spiral, rotating_channel, three_holes, hex_damage };

struct GeometryFamily {
  FamilyKind kind = FamilyKind::spiral;
  double delta = 0.05;       // diffuse interface width
  double alpha_shear = 10.0; // tangential interface resistance

  // spiral (annulus)
  double r_inner = 0.25;
  double r_outer = 1.0;
  double spiral_width = 0.1;  // channel width, fraction 0.1 of r_outer

  // rotating channel (unit square)
  double domain_width = 1.0;
  double channel_width = 0.15;

  // three holes (unit square): vertical slots displaced horizontally by
  // beta_i hole-widths, beta_i in [-1/2, 1/2]
  double hole_width = 0.15;
  double hole_height = 0.5;
  std::array<double, 3> hole_centers_x{0.3, 0.5, 0.7};
  double hole_center_y = 0.5;

  // hexagon damage (regular hexagon, six sextant damage values in [0,1])
  double well_distance = 15.0;
  double well_radius = 0.25;
  double channel_halfwidth = 2.0;  // fully developed diffuse channel
  double crack_halfwidth = 0.8;    // straight crack forming for D >= 1/2

  int param_dim() const {
    switch (kind) {
      case FamilyKind::spiral: return 1;
      case FamilyKind::rotating_channel: return 1;
      case FamilyKind::three_holes: return 3;
      case FamilyKind::hex_damage: return 6;
    }
    return 0;
  }

  // Admissible parameter box (lo, hi). Angles are in degrees.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> param_box() const {
    Eigen::VectorXd lo(param_dim()), hi(param_dim());
    switch (kind) {
      case FamilyKind::spiral:
        lo << 180.0;
        hi << 540.0;
        break;
      case FamilyKind::rotating_channel:
        // The channel is a line through the center, so any angle is valid;
        // sampling plans restrict to [0, 180] where fields repeat.
        lo << 0.0;
        hi << 360.0;
        break;
      case FamilyKind::three_holes:
        lo << -0.5, -0.5, -0.5;
        hi << 0.5, 0.5, 0.5;
        break;
      case FamilyKind::hex_damage:
        lo = Eigen::VectorXd::Zero(6);
        hi = Eigen::VectorXd::Ones(6);
        break;
    }
    return {lo, hi};
  }
};

inline FamilyKind family_kind_from_name(const std::string& name) {
  if (name == "spiral") return FamilyKind::spiral;
  if (name == "rotating_channel") return FamilyKind::rotating_channel;
  if (name == "three_holes") return FamilyKind::three_holes;
  if (name == "hex_damage") return FamilyKind::hex_damage;
  throw ParameterError("unknown geometry family: " + name);
}

inline std::string family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::spiral: return "spiral";
    case FamilyKind::rotating_channel: return "rotating_channel";
    case FamilyKind::three_holes: return "three_holes";
    case FamilyKind::hex_damage: return "hex_damage";
  }
  return "?";
}

namespace detail {

struct PhiEval {
  double phi = 0.0;
  Vec2 grad = Vec2::Zero();
};

inline double sigmoid(double s, double delta) {
  return 0.5 * (1.0 + std::tanh(3.0 * s / delta));
}

inline double sigmoid_deriv(double s, double delta) {
  const double t = std::tanh(3.0 * s / delta);
  return 1.5 / delta * (1.0 - t * t);
}

// phi = sigmoid(s) for a signed distance s with analytic gradient.
inline PhiEval profile(double s, const Vec2& grad_s, double delta) {
  PhiEval e;
  e.phi = sigmoid(s, delta);
  e.grad = sigmoid_deriv(s, delta) * grad_s;
  return e;
}

// --- spiral ------------------------------------------------------------
// Archimedean channel r(t) = r_outer - (r_outer - r_inner) t, winding by the
// angle beta (degrees). The distance to the curve is measured radially along
// the point's own ray, branch by branch; beyond the spiral ends it falls back
// to the Euclidean distance to the end points.
inline PhiEval spiral_phi(const GeometryFamily& g, double beta_deg,
                          const Vec2& x) {
  const double beta = beta_deg * std::numbers::pi / 180.0;
  const double slope = (g.r_outer - g.r_inner) / beta;
  const double r = x.norm();
  if (r < 1e-14) return {};
  const double theta = std::atan2(x.y(), x.x());
  const Vec2 er = x / r;
  const Vec2 et(-er.y(), er.x());

  double best = std::numeric_limits<double>::infinity();
  Vec2 grad_dist = Vec2::Zero();
  const double two_pi = 2.0 * std::numbers::pi;
  const int k_lo = static_cast<int>(std::floor((0.0 - theta) / two_pi)) - 1;
  const int k_hi = static_cast<int>(std::ceil((beta - theta) / two_pi)) + 1;
  for (int k = k_lo; k <= k_hi; ++k) {
    const double th = theta + two_pi * k;
    if (th >= 0.0 && th <= beta) {
      const double rs = g.r_outer - slope * th;
      const double d = std::abs(r - rs);
      if (d < best) {
        best = d;
        const double sgn = (r >= rs) ? 1.0 : -1.0;
        grad_dist = sgn * (er + (slope / r) * et);
      }
    }
  }
  const Vec2 p_start(g.r_outer, 0.0);
  const double c = std::cos(beta), sn = std::sin(beta);
  const Vec2 p_end(g.r_inner * c, g.r_inner * sn);
  for (const Vec2& p : {p_start, p_end}) {
    const double d = (x - p).norm();
    if (d < best && d > 1e-14) {
      best = d;
      grad_dist = (x - p) / d;
    }
  }
  const double s = 0.5 * g.spiral_width - best;
  return profile(s, -grad_dist, g.delta);
}

// --- rotating channel ---------------------------------------------------
inline PhiEval channel_phi(const GeometryFamily& g, double beta_deg,
                           const Vec2& x) {
  const double beta = beta_deg * std::numbers::pi / 180.0;
  const Vec2 center(0.5 * g.domain_width, 0.5 * g.domain_width);
  const Vec2 n(-std::sin(beta), std::cos(beta));
  const double d = n.dot(x - center);
  const double s = 0.5 * g.channel_width - std::abs(d);
  const Vec2 grad_s = (d >= 0.0 ? -1.0 : 1.0) * n;
  return profile(s, grad_s, g.delta);
}

// --- three holes ----------------------------------------------------------
// Signed distance to an axis-aligned rectangle (negative inside).
inline double rect_sdf(const Vec2& p, const Vec2& c, const Vec2& half,
                       Vec2& grad) {
  const Vec2 q(std::abs(p.x() - c.x()) - half.x(),
               std::abs(p.y() - c.y()) - half.y());
  const double sx = (p.x() >= c.x()) ? 1.0 : -1.0;
  const double sy = (p.y() >= c.y()) ? 1.0 : -1.0;
  if (q.x() > 0.0 || q.y() > 0.0) {
    const Vec2 m(std::max(q.x(), 0.0), std::max(q.y(), 0.0));
    const double d = m.norm();
    grad = Vec2(sx * m.x() / d, sy * m.y() / d);
    return d;
  }
  if (q.x() > q.y()) {
    grad = Vec2(sx, 0.0);
    return q.x();
  }
  grad = Vec2(0.0, sy);
  return q.y();
}

inline PhiEval three_holes_phi(const GeometryFamily& g,
                               const Eigen::VectorXd& beta, const Vec2& x) {
  double s = -std::numeric_limits<double>::infinity();
  Vec2 grad_s = Vec2::Zero();
  const Vec2 half(0.5 * g.hole_width, 0.5 * g.hole_height);
  for (int i = 0; i < 3; ++i) {
    const Vec2 c(g.hole_centers_x[i] + beta[i] * g.hole_width,
                 g.hole_center_y);
    Vec2 grad_d;
    const double d = rect_sdf(x, c, half, grad_d);
    if (-d > s) {
      s = -d;
      grad_s = -grad_d;
    }
  }
  return profile(s, grad_s, g.delta);
}

// --- hexagon damage -------------------------------------------------------
// Distance to the segment [a, b] with gradient.
inline double segment_dist(const Vec2& x, const Vec2& a, const Vec2& b,
                           Vec2& grad) {
  const Vec2 ab = b - a;
  const double t =
      std::clamp((x - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  const Vec2 p = a + t * ab;
  const double d = (x - p).norm();
  if (d < 1e-14) {
    grad = Vec2::Zero();
    return 0.0;
  }
  grad = (x - p) / d;
  return d;
}

}  // namespace detail

// Damage contribution of one sextant: a diffuse channel along the axis from
// injection well k toward the production well whose peak value is min(1, 2D),
// plus, for D >= 1/2, a straight crack growing from the injection well and
// spanning the sextant at D = 1. Returns phi and its gradient.
inline detail::PhiEval hex_damage_phi(const GeometryFamily& g, double damage,
                                      int sextant, const Vec2& x) {
  if (damage < 0.0 || damage > 1.0)
    throw ParameterError("damage value outside [0, 1]");
  if (sextant < 0 || sextant > 5) throw ParameterError("sextant outside 0..5");
  detail::PhiEval out;
  if (damage <= 0.0) return out;
  const double th = std::numbers::pi / 3.0 * sextant;
  const Vec2 e(std::cos(th), std::sin(th));
  const Vec2 a0 = g.well_radius * e;                          // production end
  const Vec2 a1 = (g.well_distance - g.well_radius) * e;      // injection end
  const double delta = g.delta;

  // Base channel: peak min(1,2D), half-width growing with the same factor.
  const double lvl = std::min(1.0, 2.0 * damage);
  const double a = g.channel_halfwidth * lvl;
  Vec2 grad_d;
  const double d = detail::segment_dist(x, a0, a1, grad_d);
  const double norm0 = detail::sigmoid(a, delta);
  out.phi = lvl * detail::sigmoid(a - d, delta) / norm0;
  out.grad = -(lvl / norm0) * detail::sigmoid_deriv(a - d, delta) * grad_d;

  // Crack: grows from the injection well toward production for D > 1/2.
  if (damage > 0.5) {
    const double frac = std::clamp(2.0 * (damage - 0.5), 0.0, 1.0);
    const double s1 = (a1 - a0).norm();
    const double s_tip = s1 * (1.0 - frac);
    const double s_axis = (x - a0).dot(e);
    Vec2 grad_dc;
    const double dc = detail::segment_dist(
        x, a0 + std::min(std::max(s_tip, 0.0), s1) * e, a1, grad_dc);
    const double w = detail::sigmoid(g.crack_halfwidth - dc, delta) /
                     detail::sigmoid(g.crack_halfwidth, delta);
    const double cap = detail::sigmoid(s_axis - s_tip, delta);
    const double phic = w * cap;
    if (phic > out.phi) {
      out.phi = phic;
      const Vec2 grad_w = -detail::sigmoid_deriv(g.crack_halfwidth - dc, delta) /
                          detail::sigmoid(g.crack_halfwidth, delta) * grad_dc;
      const Vec2 grad_cap = detail::sigmoid_deriv(s_axis - s_tip, delta) * e;
      out.grad = grad_w * cap + w * grad_cap;
    }
  }
  return out;
}

namespace detail {

inline PhiEval hex_phi(const GeometryFamily& g, const Eigen::VectorXd& beta,
                       const Vec2& x) {
  PhiEval best;
  for (int s = 0; s < 6; ++s) {
    PhiEval e = hex_damage_phi(g, beta[s], s, x);
    if (e.phi > best.phi) best = e;
  }
  return best;
}

inline PhiEval phi_eval(const GeometryFamily& g, const Eigen::VectorXd& beta,
                        const Vec2& x) {
  switch (g.kind) {
    case FamilyKind::spiral: return spiral_phi(g, beta[0], x);
    case FamilyKind::rotating_channel: return channel_phi(g, beta[0], x);
    case FamilyKind::three_holes: return three_holes_phi(g, beta, x);
    case FamilyKind::hex_damage: return hex_phi(g, beta, x);
  }
  return {};
}

inline void check_beta(const GeometryFamily& g, const Eigen::VectorXd& beta) {
  if (beta.size() < g.param_dim())
    throw ParameterError("parameter vector shorter than the family dimension");
  auto [lo, hi] = g.param_box();
  for (int i = 0; i < g.param_dim(); ++i)
    if (!(beta[i] >= lo[i] && beta[i] <= hi[i]))
      throw ParameterError("parameter outside the family box");
}

}  // namespace detail

inline double phi_of_x(const GeometryFamily& g, const Eigen::VectorXd& beta,
                       const Vec2& x) {
  detail::check_beta(g, beta);
  return std::clamp(detail::phi_eval(g, beta, x).phi, 0.0, 1.0);
}

inline Vec2 grad_phi_of_x(const GeometryFamily& g,
                          const Eigen::VectorXd& beta, const Vec2& x) {
  detail::check_beta(g, beta);
  return detail::phi_eval(g, beta, x).grad;
}

// Nodal fields backing the non-negativity-preserving reconstruction:
//   xi   = sqrt(phi)
//   zeta = sqrt(1 - phi)
//   t    = sqrt(2 alpha_shear / |grad phi|) * rot90(grad phi)
// so that xi^2 + zeta^2 = 1 and t (x) t equals the interface resistance
// tensor 2 alpha_shear / |grad phi| (|grad phi|^2 I - grad phi (x) grad phi).
// t is zeroed where |grad phi| falls below 1e-3 of its nodal maximum.
struct FieldSample {
  Eigen::VectorXd beta;
  Eigen::VectorXd xi;    // n_vertices
  Eigen::VectorXd zeta;  // n_vertices
  Eigen::VectorXd t;     // 2 * n_vertices: x components then y components
};

inline FieldSample sample_fields(const GeometryFamily& g,
                                 const Eigen::VectorXd& beta,
                                 const TriMesh& mesh) {
  detail::check_beta(g, beta);
  const double h = mesh.resolution_h();
  if (h > 0.5 * g.delta)
    throw RefinementRequiredError(
        "mesh size " + std::to_string(h) + " exceeds delta/2 = " +
        std::to_string(0.5 * g.delta));
  const int nv = mesh.n_vertices();
  FieldSample out;
  out.beta = beta;
  out.xi.resize(nv);
  out.zeta.resize(nv);
  out.t = Eigen::VectorXd::Zero(2 * nv);
  std::vector<Vec2> grads(nv);
  double gmax = 0.0;
  for (int i = 0; i < nv; ++i) {
    const detail::PhiEval e = detail::phi_eval(g, beta, mesh.vertices[i]);
    const double phi = std::clamp(e.phi, 0.0, 1.0);
    out.xi[i] = std::sqrt(phi);
    out.zeta[i] = std::sqrt(1.0 - phi);
    grads[i] = e.grad;
    gmax = std::max(gmax, e.grad.norm());
  }
  const double floor = 1e-3 * gmax;
  for (int i = 0; i < nv; ++i) {
    const double gn = grads[i].norm();
    if (gn <= floor || gn == 0.0) continue;
    const double scale = std::sqrt(2.0 * g.alpha_shear / gn);
    out.t[i] = scale * (-grads[i].y());
    out.t[nv + i] = scale * grads[i].x();
  }
  return out;
}

}  // namespace sdrom

#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "sdrom/parallel.hpp"
#include "sdrom/rom.hpp"

namespace sdrom {

// Axial lattice coordinates of one hexagonal cell. The cell center sits at
// (1.5 L q, sqrt(3) L (r + q/2)) with L the production-to-injection distance.
struct HexCell {
  int q = 0;
  int r = 0;
  friend bool operator<(const HexCell& a, const HexCell& b) {
    return a.q != b.q ? a.q < b.q : a.r < b.r;
  }
  friend bool operator==(const HexCell& a, const HexCell& b) {
    return a.q == b.q && a.r == b.r;
  }
};

// Which hexagon corners carry an injection well. Sites drill the corners
// shared between neighbouring cells; an unshared perimeter corner stays a
// passive opening at ambient pressure.
enum class WellRule { all_corners, shared_corners };

struct SiteLayout {
  std::vector<HexCell> cells;
  WellRule well_rule = WellRule::shared_corners;
};

// n_cols x n_rows offset-rectangle patch.
inline SiteLayout grid_layout(int n_cols, int n_rows,
                              WellRule rule = WellRule::shared_corners) {
  if (n_cols < 1 || n_rows < 1)
    throw ParameterError("grid layout needs at least one cell");
  SiteLayout out;
  out.well_rule = rule;
  for (int col = 0; col < n_cols; ++col)
    for (int row = 0; row < n_rows; ++row)
      out.cells.push_back({col, row - col / 2});
  return out;
}

// The 225-hexagon honeymoon footprint: a 15x15 offset rectangle with two
// cells appended on the east edge and two interior cells left out. The
// shared corners of this patch host exactly 452 injection wells.
inline SiteLayout honeymoon_layout() {
  SiteLayout out = grid_layout(15, 15);
  const auto cell_at = [](int col, int row) {
    return HexCell{col, row - col / 2};
  };
  out.cells.push_back(cell_at(15, 4));
  out.cells.push_back(cell_at(15, 9));
  const HexCell h1 = cell_at(7, 4), h2 = cell_at(7, 9);
  std::erase_if(out.cells,
                [&](const HexCell& c) { return c == h1 || c == h2; });
  return out;
}

struct Hexagon {
  HexCell cell;
  Vec2 center = Vec2::Zero();
  Eigen::VectorXd damage = Eigen::VectorXd::Zero(6);
};

struct Well {
  Vec2 position = Vec2::Zero();
  double inflow = 0.0;  // prescribed total, m^3/s per meter of depth
  std::vector<std::pair<int, int>> adjacent;  // (hexagon index, corner 0..5)
};

struct SiteModel {
  RomBundle bundle;
  std::vector<Hexagon> hexagons;
  std::vector<Well> wells;
  double intake_height = 5.0;  // m
  Eigen::VectorXd g_prod;      // reduced production-arc flux functional
  SpMat system;
  Eigen::VectorXd rhs;
  int r() const { return bundle.r(); }
  Eigen::Index n_dofs() const {
    return static_cast<Eigen::Index>(hexagons.size()) * r() +
           static_cast<Eigen::Index>(wells.size());
  }
};

struct SiteSolution {
  Eigen::MatrixXd coeffs;         // r x n_hex reduced coefficients
  Eigen::VectorXd well_pressure;  // Lagrange multiplier = well pressure, Pa
  Eigen::VectorXd outflow;        // per-hexagon production outflow, l/s
};

namespace detail {

// Integer corner key on the half-step lattice: corner k of cell (q, r) sits
// at (ix L/2, iy sqrt(3) L/2). Equal keys identify shared corners exactly,
// with no floating point comparisons.
inline std::pair<int, int> corner_key(const HexCell& c, int k) {
  static constexpr int dx[6] = {2, 1, -1, -2, -1, 1};
  static constexpr int dy[6] = {0, 1, 1, 0, -1, -1};
  return {3 * c.q + dx[k], c.q + 2 * c.r + dy[k]};
}

inline const Eigen::VectorXd& corner_load(const RomBundle& b, int k) {
  const auto it = b.F.find("well_" + std::to_string(k + 1));
  if (it == b.F.end())
    throw ConfigError("bundle has no reduced load for corner tag well_" +
                      std::to_string(k + 1));
  return it->second;
}

inline Eigen::MatrixXd damage_block(const RomBundle& b,
                                    const Eigen::VectorXd& damage) {
  const AffineWeights w =
      affine_weights(b.deim_xi, b.deim_zeta, b.deim_t, b.family, damage);
  return online_matrix(b, w);
}

}  // namespace detail

// Rebuild the bordered block system and right-hand side from the current
// hexagon damage states and well inflows. Block rows enforce
// K(D_h) u_h - sum_w p_w F_k = 0, well rows sum_(h,k) F_k^T u_h = u_in.
inline void assemble_site(SiteModel& site) {
  const int r = site.r();
  const auto n_hex = static_cast<int>(site.hexagons.size());
  const auto n_wells = static_cast<int>(site.wells.size());
  const Eigen::Index n = static_cast<Eigen::Index>(n_hex) * r + n_wells;

  std::vector<Eigen::MatrixXd> blocks(static_cast<std::size_t>(n_hex));
  parallel_for(static_cast<std::size_t>(n_hex), [&](std::size_t h) {
    blocks[h] = detail::damage_block(site.bundle, site.hexagons[h].damage);
  });

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n_hex) * r * r +
               static_cast<std::size_t>(n_wells) * 6 * r);
  for (int h = 0; h < n_hex; ++h)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i)
        trip.emplace_back(h * r + i, h * r + j,
                          blocks[static_cast<std::size_t>(h)](i, j));
  for (int w = 0; w < n_wells; ++w) {
    const int col = n_hex * r + w;
    for (const auto& [h, k] : site.wells[static_cast<std::size_t>(w)].adjacent) {
      const Eigen::VectorXd& F = detail::corner_load(site.bundle, k);
      for (int i = 0; i < r; ++i) {
        trip.emplace_back(h * r + i, col, -F[i]);
        trip.emplace_back(col, h * r + i, F[i]);
      }
    }
  }
  site.system.resize(n, n);
  site.system.setFromTriplets(trip.begin(), trip.end());
  site.system.makeCompressed();
  site.rhs = Eigen::VectorXd::Zero(n);
  for (int w = 0; w < n_wells; ++w)
    site.rhs[static_cast<Eigen::Index>(n_hex) * r + w] =
        site.wells[static_cast<std::size_t>(w)].inflow;
}

// Assemble a site model over the given tiling. The damage init may be empty
// (all intact), one sextant vector shared by every cell, or 6 * n_hex values
// laid out hexagon by hexagon.
inline SiteModel build_site(const SiteLayout& layout, const RomBundle& bundle,
                            const Eigen::VectorXd& damage = Eigen::VectorXd(),
                            double uniform_inflow = 0.0) {
  if (layout.cells.empty()) throw ConfigError("site layout has no cells");
  if (bundle.family.kind != FamilyKind::hex_damage)
    throw ConfigError("site coupling needs a hexagon-family bundle");
  if (bundle.V.size() == 0 || bundle.mesh.n_vertices() == 0)
    throw ConfigError(
        "site assembly needs the bundle basis and mesh for the "
        "production-flux functional");
  {
    std::vector<HexCell> sorted = layout.cells;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("site layout lists a cell twice");
  }
  const auto n_hex = static_cast<int>(layout.cells.size());
  Eigen::MatrixXd D(6, n_hex);
  if (damage.size() == 0)
    D.setZero();
  else if (damage.size() == 6)
    D.colwise() = damage;
  else if (damage.size() == static_cast<Eigen::Index>(6) * n_hex)
    D = Eigen::Map<const Eigen::MatrixXd>(damage.data(), 6, n_hex);
  else
    throw ParameterError("damage init must have 0, 6 or 6*n_hex entries");
  if (D.minCoeff() < 0.0 || D.maxCoeff() > 1.0)
    throw ParameterError("damage entries must lie in [0,1]");

  SiteModel site;
  site.bundle = bundle;
  const double L = bundle.family.well_distance;
  site.hexagons.resize(static_cast<std::size_t>(n_hex));
  for (int h = 0; h < n_hex; ++h) {
    Hexagon& hex = site.hexagons[static_cast<std::size_t>(h)];
    hex.cell = layout.cells[static_cast<std::size_t>(h)];
    hex.center = Vec2(1.5 * L * hex.cell.q,
                      std::sqrt(3.0) * L * (hex.cell.r + 0.5 * hex.cell.q));
    hex.damage = D.col(h);
  }

  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> corners;
  for (int h = 0; h < n_hex; ++h)
    for (int k = 0; k < 6; ++k)
      corners[detail::corner_key(layout.cells[static_cast<std::size_t>(h)], k)]
          .emplace_back(h, k);
  for (const auto& [key, adj] : corners) {
    if (layout.well_rule == WellRule::shared_corners && adj.size() < 2)
      continue;
    Well w;
    w.position =
        Vec2(key.first * 0.5 * L, key.second * 0.5 * std::sqrt(3.0) * L);
    w.inflow = uniform_inflow;
    w.adjacent = adj;
    site.wells.push_back(std::move(w));
  }

  const MixedSpace sp = make_space(bundle.mesh, bundle.walls);
  site.g_prod.resize(bundle.r());
  for (int j = 0; j < bundle.r(); ++j)
    site.g_prod[j] = boundary_flux(sp, bundle.V.col(j), "production");

  assemble_site(site);
  return site;
}

// Overwrite one hexagon's damage state and its diagonal block in place. The
// coupling rows and columns are untouched.
inline void update_damage(SiteModel& site, int hexagon,
                          const Eigen::VectorXd& damage) {
  if (hexagon < 0 || hexagon >= static_cast<int>(site.hexagons.size()))
    throw ParameterError("hexagon index out of range");
  if (damage.size() != 6)
    throw ParameterError("damage vector must have six sextant entries");
  if (damage.minCoeff() < 0.0 || damage.maxCoeff() > 1.0)
    throw ParameterError("damage entries must lie in [0,1]");
  site.hexagons[static_cast<std::size_t>(hexagon)].damage = damage;
  const Eigen::MatrixXd block = detail::damage_block(site.bundle, damage);
  const int r = site.r();
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < r; ++i)
      site.system.coeffRef(hexagon * r + i, hexagon * r + j) = block(i, j);
}

inline SiteSolution solve_site(const SiteModel& site) {
  const int r = site.r();
  const auto n_hex = static_cast<Eigen::Index>(site.hexagons.size());
  const auto n_wells = static_cast<Eigen::Index>(site.wells.size());
  if (site.system.rows() != n_hex * r + n_wells)
    throw ConfigError("site system is not assembled");
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(site.system);
  lu.factorize(site.system);
  if (lu.info() != Eigen::Success)
    throw NumericsError("site system factorization failed");
  Eigen::VectorXd x = lu.solve(site.rhs);
  x += lu.solve(site.rhs - site.system * x);
  const double fn = site.rhs.norm();
  const double rel = fn > 0.0 ? (site.system * x - site.rhs).norm() / fn
                              : (site.system * x).norm();
  if (!(rel <= 1e-8))
    throw NumericsError("site solve residual " + std::to_string(rel) +
                        " exceeds 1e-8");
  SiteSolution sol;
  sol.coeffs = Eigen::Map<const Eigen::MatrixXd>(x.data(), r, n_hex);
  sol.well_pressure = x.tail(n_wells);
  sol.outflow.resize(n_hex);
  for (Eigen::Index h = 0; h < n_hex; ++h)
    sol.outflow[h] =
        site.g_prod.dot(sol.coeffs.col(h)) * site.intake_height * 1000.0;
  return sol;
}

// Production outflows in l/s for a given set of per-hexagon reduced
// coefficients.
inline Eigen::VectorXd outflows_from_coeffs(const SiteModel& site,
                                            const Eigen::MatrixXd& coeffs) {
  const auto n_hex = static_cast<Eigen::Index>(site.hexagons.size());
  if (coeffs.rows() != site.r() || coeffs.cols() != n_hex)
    throw ParameterError("coefficient matrix does not match the site");
  Eigen::VectorXd out(n_hex);
  for (Eigen::Index h = 0; h < n_hex; ++h)
    out[h] = site.g_prod.dot(coeffs.col(h)) * site.intake_height * 1000.0;
  return out;
}

// Decoupled pressure-driven state: prescribe a pressure for every well and
// solve each hexagon on its own. Undrilled corners stay at ambient zero, so
// no inflow constraints are involved.
inline Eigen::MatrixXd pressure_state(const SiteModel& site,
                                      const Eigen::VectorXd& well_pressure) {
  const auto n_hex = site.hexagons.size();
  if (well_pressure.size() != static_cast<Eigen::Index>(site.wells.size()))
    throw ParameterError("need one pressure per well");
  std::vector<std::map<std::string, double>> pr(n_hex);
  for (std::size_t h = 0; h < n_hex; ++h) {
    pr[h]["production"] = 0.0;
    for (int k = 0; k < 6; ++k) pr[h]["well_" + std::to_string(k + 1)] = 0.0;
  }
  for (std::size_t w = 0; w < site.wells.size(); ++w)
    for (const auto& [h, k] : site.wells[w].adjacent)
      pr[static_cast<std::size_t>(h)]["well_" + std::to_string(k + 1)] =
          well_pressure[static_cast<Eigen::Index>(w)];
  Eigen::MatrixXd coeffs(site.r(), static_cast<Eigen::Index>(n_hex));
  parallel_for(n_hex, [&](std::size_t h) {
    coeffs.col(static_cast<Eigen::Index>(h)) =
        solve_online(site.bundle, site.hexagons[h].damage, pr[h]);
  });
  return coeffs;
}

// Replace the prescribed well inflows. The assembled system is unaffected;
// only the right hand side changes.
inline void set_inflows(SiteModel& site, const Eigen::VectorXd& inflow) {
  const auto n_wells = static_cast<Eigen::Index>(site.wells.size());
  if (inflow.size() != n_wells)
    throw ParameterError("need one inflow per well");
  const Eigen::Index base =
      static_cast<Eigen::Index>(site.hexagons.size()) * site.r();
  for (Eigen::Index w = 0; w < n_wells; ++w) {
    site.wells[static_cast<std::size_t>(w)].inflow = inflow[w];
    site.rhs[base + w] = inflow[w];
  }
}

// Total flux into the subsurface realized at each well, for cross-checking
// the inflow constraints.
inline Eigen::VectorXd realized_inflows(const SiteModel& site,
                                        const Eigen::MatrixXd& coeffs) {
  if (coeffs.rows() != site.r() ||
      coeffs.cols() != static_cast<Eigen::Index>(site.hexagons.size()))
    throw ParameterError("coefficient matrix does not match the site");
  Eigen::VectorXd out =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(site.wells.size()));
  for (std::size_t w = 0; w < site.wells.size(); ++w)
    for (const auto& [h, k] : site.wells[w].adjacent)
      out[static_cast<Eigen::Index>(w)] +=
          detail::corner_load(site.bundle, k).dot(coeffs.col(h));
  return out;
}

inline Eigen::VectorXd realized_inflows(const SiteModel& site,
                                        const SiteSolution& sol) {
  return realized_inflows(site, sol.coeffs);
}

inline void write_well_csv(const SiteModel& site, const SiteSolution& sol,
                           std::ostream& os) {
  os << "well,x,y,inflow,multiplier\n" << std::setprecision(17);
  for (std::size_t w = 0; w < site.wells.size(); ++w)
    os << w << ',' << site.wells[w].position.x() << ','
       << site.wells[w].position.y() << ',' << site.wells[w].inflow << ','
       << sol.well_pressure[static_cast<Eigen::Index>(w)] << '\n';
}

inline void write_hexagon_csv(const SiteModel& site, const SiteSolution& sol,
                              std::ostream& os) {
  os << "hexagon,d_1,d_2,d_3,d_4,d_5,d_6,outflow_lps\n"
     << std::setprecision(17);
  for (std::size_t h = 0; h < site.hexagons.size(); ++h) {
    os << h;
    for (int s = 0; s < 6; ++s) os << ',' << site.hexagons[h].damage[s];
    os << ',' << sol.outflow[static_cast<Eigen::Index>(h)] << '\n';
  }
}

}  // namespace sdrom

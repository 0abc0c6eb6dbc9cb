#pragma once

// Inverse damage calibration: recover per-sextant damage parameters of a
// mining site from measured production outflows, by finite-difference
// gradient descent on the root-mean-square relative flow error.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sdrom/site.hpp"

namespace sdrom {

// Field data for one calibration run: measured production outflow per
// hexagon (l/s) and the prescribed inflow per injection well that drives the
// forward model. Synthetic sets carry their noise law for provenance.
struct MeasurementSet {
  Eigen::VectorXd outflow;
  Eigen::VectorXd inflow;
  std::uint64_t seed = 0;
  double amplitude = 0.0;
};

struct CalibrationOptions {
  double eta0 = 0.5;     // initial descent step, halved on rejection
  int max_halvings = 8;  // per iteration, before the step counts as collapsed
  double fd_step = 0.01; // damage units
  double tolerance = 0.015;
  int max_iter = 10;
};

// Damage iterate plus the accepted-error trail. history[0] is the error of
// the initial state; history[k] the error after accepted step k.
struct CalibrationState {
  Eigen::VectorXd damage;
  std::vector<double> history;
  std::vector<double> steps;
  int iterations = 0;
  bool converged = false;
};

// Root-mean-square relative outflow mismatch.
inline double flow_error(const Eigen::VectorXd& computed,
                         const Eigen::VectorXd& measured) {
  if (computed.size() != measured.size())
    throw ParameterError("computed and measured outflow counts differ");
  if (measured.size() == 0)
    throw ParameterError("no measurements to compare against");
  if (measured.minCoeff() <= 0.0)
    throw MeasurementError("measured outflows must be strictly positive");
  const Eigen::ArrayXd rel =
      (measured - computed).array() / measured.array();
  return std::sqrt(rel.square().mean());
}

// Central finite differences of a scalar objective over a box-constrained
// vector, falling back to one-sided stencils at the bounds.
template <typename F>
Eigen::VectorXd fd_gradient(const Eigen::VectorXd& x, F&& f, double h,
                            double lo = 0.0, double hi = 1.0) {
  if (!(h > 0.0)) throw ParameterError("finite-difference step must be positive");
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double up = std::min(x[i] + h, hi);
    const double down = std::max(x[i] - h, lo);
    y[i] = up;
    const double ep = f(y);
    y[i] = down;
    const double em = f(y);
    y[i] = x[i];
    g[i] = (ep - em) / (up - down);
  }
  return g;
}

namespace detail {

inline Eigen::VectorXd flat_damage(const SiteModel& site) {
  Eigen::VectorXd d(6 * static_cast<Eigen::Index>(site.hexagons.size()));
  for (std::size_t h = 0; h < site.hexagons.size(); ++h)
    d.segment(6 * static_cast<Eigen::Index>(h), 6) = site.hexagons[h].damage;
  return d;
}

inline void apply_damage(SiteModel& site, const Eigen::VectorXd& d) {
  const auto n_hex = static_cast<Eigen::Index>(site.hexagons.size());
  if (d.size() == 6) {
    for (Eigen::Index h = 0; h < n_hex; ++h)
      update_damage(site, static_cast<int>(h), d);
  } else if (d.size() == 6 * n_hex) {
    for (Eigen::Index h = 0; h < n_hex; ++h)
      update_damage(site, static_cast<int>(h), d.segment(6 * h, 6));
  } else {
    throw ParameterError("damage vector must have 6 or 6*n_hex entries");
  }
}

inline double symmetric_uniform(std::mt19937_64& rng) {
  return 2.0 * uniform01(rng) - 1.0;
}

}  // namespace detail

// Gradient of the flow error with respect to every sextant damage value,
// under the measurement's prescribed inflows. Two forward solves per sextant;
// each perturbation reassembles only the owning hexagon's block.
inline Eigen::VectorXd numeric_gradient(SiteModel& site,
                                        const MeasurementSet& m,
                                        double h = 0.01) {
  if (!(h > 0.0)) throw ParameterError("finite-difference step must be positive");
  if (m.outflow.size() != static_cast<Eigen::Index>(site.hexagons.size()))
    throw ParameterError("measurement set does not match the site");
  set_inflows(site, m.inflow);
  Eigen::VectorXd g(6 * static_cast<Eigen::Index>(site.hexagons.size()));
  for (std::size_t hx = 0; hx < site.hexagons.size(); ++hx) {
    Eigen::VectorXd d = site.hexagons[hx].damage;
    for (int s = 0; s < 6; ++s) {
      const double d0 = d[s];
      const double up = std::min(d0 + h, 1.0);
      const double down = std::max(d0 - h, 0.0);
      d[s] = up;
      update_damage(site, static_cast<int>(hx), d);
      const double ep = flow_error(solve_site(site).outflow, m.outflow);
      d[s] = down;
      update_damage(site, static_cast<int>(hx), d);
      const double em = flow_error(solve_site(site).outflow, m.outflow);
      d[s] = d0;
      g[6 * static_cast<Eigen::Index>(hx) + s] = (ep - em) / (up - down);
    }
    update_damage(site, static_cast<int>(hx), d);
  }
  return g;
}

// Projected gradient descent with backtracking. All sextants update
// simultaneously; a step is accepted only if it lowers the error, so the
// recorded history is monotone. Stops on tolerance, iteration budget, or
// step collapse. The site is left holding the final iterate.
inline CalibrationState calibrate(SiteModel& site, const MeasurementSet& m,
                                  const CalibrationOptions& opt = {}) {
  if (m.outflow.size() != static_cast<Eigen::Index>(site.hexagons.size()))
    throw ParameterError("measurement set does not match the site");
  set_inflows(site, m.inflow);

  const auto error_now = [&] {
    const double e = flow_error(solve_site(site).outflow, m.outflow);
    if (!std::isfinite(e))
      throw NumericsError("calibration error is not finite");
    return e;
  };

  CalibrationState state;
  double e = error_now();
  state.history.push_back(e);
  while (state.iterations < opt.max_iter && e > opt.tolerance) {
    const Eigen::VectorXd g = numeric_gradient(site, m, opt.fd_step);
    const Eigen::VectorXd base = detail::flat_damage(site);
    double eta = opt.eta0;
    bool accepted = false;
    for (int halving = 0; halving <= opt.max_halvings; ++halving) {
      const Eigen::VectorXd candidate =
          (base - eta * g).cwiseMax(0.0).cwiseMin(1.0);
      detail::apply_damage(site, candidate);
      const double e_try = error_now();
      if (e_try < e) {
        e = e_try;
        state.history.push_back(e);
        state.steps.push_back(eta);
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) {
      detail::apply_damage(site, base);
      break;
    }
    ++state.iterations;
  }
  state.converged = e <= opt.tolerance;
  state.damage = detail::flat_damage(site);
  return state;
}

// Forward-solve the site under a known damage field and prescribed inflows,
// then perturb the outflows multiplicatively with uniform noise in
// [-amplitude, amplitude]. The site keeps the true damage afterwards.
inline MeasurementSet synthesize_measurements(SiteModel& site,
                                              const Eigen::VectorXd& true_damage,
                                              const Eigen::VectorXd& inflow,
                                              double amplitude = 0.0,
                                              std::uint64_t seed = 0) {
  if (amplitude < 0.0) throw ParameterError("noise amplitude must be >= 0");
  detail::apply_damage(site, true_damage);
  set_inflows(site, inflow);
  MeasurementSet m;
  m.outflow = solve_site(site).outflow;
  m.inflow = inflow;
  m.seed = seed;
  m.amplitude = amplitude;
  std::mt19937_64 rng(seed);
  for (Eigen::Index h = 0; h < m.outflow.size(); ++h)
    m.outflow[h] *= 1.0 + amplitude * detail::symmetric_uniform(rng);
  return m;
}

// Same, but driven the way a field campaign is: prescribed well pressures,
// each hexagon solved on its own. The realized well fluxes become the
// prescribed inflows of the returned set, so a coupled model calibrated
// against it is driven consistently.
inline MeasurementSet synthesize_measurements_from_pressures(
    SiteModel& site, const Eigen::VectorXd& true_damage,
    const Eigen::VectorXd& well_pressure, double amplitude = 0.0,
    std::uint64_t seed = 0) {
  if (amplitude < 0.0) throw ParameterError("noise amplitude must be >= 0");
  detail::apply_damage(site, true_damage);
  const Eigen::MatrixXd coeffs = pressure_state(site, well_pressure);
  MeasurementSet m;
  m.outflow = outflows_from_coeffs(site, coeffs);
  m.inflow = realized_inflows(site, coeffs);
  m.seed = seed;
  m.amplitude = amplitude;
  std::mt19937_64 rng(seed);
  for (Eigen::Index h = 0; h < m.outflow.size(); ++h)
    m.outflow[h] *= 1.0 + amplitude * detail::symmetric_uniform(rng);
  return m;
}

inline void write_measurement_csv(const MeasurementSet& m, std::ostream& os) {
  os << "hexagon,outflow_lps\n" << std::setprecision(17);
  for (Eigen::Index h = 0; h < m.outflow.size(); ++h)
    os << h << ',' << m.outflow[h] << '\n';
}

inline void write_iteration_csv(const CalibrationState& state,
                                std::ostream& os) {
  os << "k,e_k,step\n" << std::setprecision(17);
  for (std::size_t k = 0; k < state.history.size(); ++k) {
    os << k << ',' << state.history[k] << ',';
    if (k > 0) os << state.steps[k - 1];
    os << '\n';
  }
}

}  // namespace sdrom

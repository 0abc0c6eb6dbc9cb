#pragma once

#include <functional>
#include <map>
#include <string>

#include "sdrom/fem.hpp"
#include "sdrom/meshgen.hpp"
#include "sdrom/phasefield.hpp"
#include "sdrom/snapshots.hpp"

namespace sdrom {

// Ready-made problem configurations shared by the command line tool, the
// test suites and the studies. The mesh factory takes the resolution knob of
// the underlying generator so callers can trade accuracy for runtime.
struct ProblemPreset {
  std::string name;
  GeometryFamily family;
  Material material;
  std::map<std::string, WallCondition> walls;
  std::function<TriMesh(int)> mesh;
  int default_resolution = 0;
  SamplingPlan plan;
};

// Archimedean spiral channel in an annulus, driven from the outer rim.
inline ProblemPreset benchmark1_preset() {
  ProblemPreset p;
  p.name = "benchmark1";
  p.family.kind = FamilyKind::spiral;
  p.family.delta = 0.1;
  p.material.mu = 0.5;
  p.material.kappa = 5e-5;
  p.material.boundary_pressures = {{"outer", 1000.0}, {"inner", 0.0}};
  const double ri = p.family.r_inner, ro = p.family.r_outer;
  p.mesh = [ri, ro](int res) { return make_annulus_mesh(ri, ro, res); };
  p.default_resolution = 32;
  p.plan.grid = {1001};
  return p;
}

// Straight channel through the unit square, rotating about the center.
inline ProblemPreset benchmark2_preset() {
  ProblemPreset p;
  p.name = "benchmark2";
  p.family.kind = FamilyKind::rotating_channel;
  p.family.delta = 0.1;
  p.material.mu = 0.5;
  p.material.kappa = 5e-4;
  p.material.boundary_pressures = {{"left", 1000.0}, {"right", 0.0}};
  p.walls = {{"slip", WallCondition::slip}};
  p.mesh = [](int res) {
    return make_rect_mesh(1.0, 1.0, res, res, "left_right");
  };
  p.default_resolution = 24;
  p.plan.grid = {1001};
  return p;
}

// Three vertical slots, each displaced horizontally by its own parameter.
inline ProblemPreset benchmark3_preset() {
  ProblemPreset p;
  p.name = "benchmark3";
  p.family.kind = FamilyKind::three_holes;
  p.family.delta = 0.1;
  p.family.alpha_shear = 0.01;
  p.material.mu = 0.5;
  p.material.kappa = 5e-4;
  p.material.boundary_pressures = {{"bottom", 1000.0}, {"top", 0.0}};
  p.walls = {{"slip", WallCondition::slip}};
  p.mesh = [](int res) {
    return make_rect_mesh(1.0, 1.0, res, res, "bottom_top");
  };
  p.default_resolution = 24;
  p.plan.grid = {21};
  return p;
}

// Single mining hexagon: production well at the center, injection wells at
// the corners, per-sextant damage parameters. Pressures are unit loads for
// training; the site solver replaces them by the well multipliers.
inline ProblemPreset hexagon_preset() {
  ProblemPreset p;
  p.name = "hexagon";
  p.family.kind = FamilyKind::hex_damage;
  p.family.delta = 1.0;
  p.material.mu = 1e-3;
  p.material.kappa = 1e-13;
  p.material.boundary_pressures = {{"production", 0.0}};
  for (int w = 1; w <= 6; ++w)
    p.material.boundary_pressures["well_" + std::to_string(w)] = 1e5;
  p.walls = {{"slip", WallCondition::slip}};
  const double d = p.family.well_distance, rho = p.family.well_radius;
  p.mesh = [d, rho](int res) { return make_hexagon_mesh(d, rho, res); };
  p.default_resolution = 24;
  p.plan.grid = {2, 2, 2, 2, 2, 2};
  p.plan.n_random = 100;
  p.plan.seed = 424242;
  return p;
}

inline ProblemPreset preset_by_name(const std::string& name) {
  if (name == "benchmark1") return benchmark1_preset();
  if (name == "benchmark2") return benchmark2_preset();
  if (name == "benchmark3") return benchmark3_preset();
  if (name == "hexagon") return hexagon_preset();
  throw ParameterError("unknown preset: " + name);
}

}  // namespace sdrom

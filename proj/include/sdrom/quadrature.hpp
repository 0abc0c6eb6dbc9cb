#pragma once

#include <array>

namespace sdrom {

// Six-point symmetric triangle rule, exact to polynomial degree 4, all
// weights positive. Points are barycentric (l1, l2, l3); weights sum to the
// reference-triangle area 1/2.
struct TriQuadPoint {
  double l1, l2, l3, w;
};

inline const std::array<TriQuadPoint, 6>& tri_quadrature() {
  static const std::array<TriQuadPoint, 6> rule = [] {
    const double a1 = 0.445948490915965;
    const double w1 = 0.223381589678011 * 0.5;
    const double a2 = 0.091576213509771;
    const double w2 = 0.109951743655322 * 0.5;
    std::array<TriQuadPoint, 6> r{};
    r[0] = {1.0 - 2.0 * a1, a1, a1, w1};
    r[1] = {a1, 1.0 - 2.0 * a1, a1, w1};
    r[2] = {a1, a1, 1.0 - 2.0 * a1, w1};
    r[3] = {1.0 - 2.0 * a2, a2, a2, w2};
    r[4] = {a2, 1.0 - 2.0 * a2, a2, w2};
    r[5] = {a2, a2, 1.0 - 2.0 * a2, w2};
    return r;
  }();
  return rule;
}

}  // namespace sdrom

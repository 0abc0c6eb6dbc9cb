#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <queue>
#include <random>

#include "sdrom/meshgen.hpp"
#include "sdrom/phasefield.hpp"

using namespace sdrom;

namespace {

GeometryFamily spiral_family() {
  GeometryFamily g;
  g.kind = FamilyKind::spiral;
  return g;
}
GeometryFamily channel_family() {
  GeometryFamily g;
  g.kind = FamilyKind::rotating_channel;
  return g;
}
GeometryFamily holes_family() {
  GeometryFamily g;
  g.kind = FamilyKind::three_holes;
  return g;
}
GeometryFamily hex_family() {
  GeometryFamily g;
  g.kind = FamilyKind::hex_damage;
  g.delta = 1.0;
  return g;
}

Eigen::VectorXd b1(double v) {
  Eigen::VectorXd b(1);
  b << v;
  return b;
}

double profile_ref(double s, double delta) {
  return 0.5 * (1.0 + std::tanh(3.0 * s / delta));
}

}  // namespace

TEST_CASE("family parameter boxes and validation", "[phasefield]") {
  CHECK(spiral_family().param_dim() == 1);
  CHECK(channel_family().param_dim() == 1);
  CHECK(holes_family().param_dim() == 3);
  CHECK(hex_family().param_dim() == 6);

  CHECK_THROWS_AS(phi_of_x(spiral_family(), b1(100.0), Vec2(0.5, 0.0)),
                  ParameterError);
  CHECK_THROWS_AS(phi_of_x(spiral_family(), Eigen::VectorXd(), Vec2(0.5, 0.0)),
                  ParameterError);
  Eigen::VectorXd bad(3);
  bad << 0.0, 0.7, 0.0;
  CHECK_THROWS_AS(phi_of_x(holes_family(), bad, Vec2(0.5, 0.5)),
                  ParameterError);
  Eigen::VectorXd d(6);
  d.setConstant(1.2);
  CHECK_THROWS_AS(phi_of_x(hex_family(), d, Vec2(5.0, 0.0)), ParameterError);

  CHECK(family_kind_from_name("three_holes") == FamilyKind::three_holes);
  CHECK(family_name(FamilyKind::rotating_channel) == "rotating_channel");
  CHECK_THROWS_AS(family_kind_from_name("torus"), ParameterError);
}

TEST_CASE("spiral: centerline and gap values", "[phasefield]") {
  GeometryFamily g = spiral_family();
  const double beta = 400.0;
  const double rad = beta * std::numbers::pi / 180.0;
  const double slope = (g.r_outer - g.r_inner) / rad;

  // On the centerline, half a channel width from the interface.
  const double th = rad / 2.0;
  const double r = g.r_outer - slope * th;
  const Vec2 on(r * std::cos(th), r * std::sin(th));
  CHECK(phi_of_x(g, b1(beta), on) ==
        Catch::Approx(profile_ref(0.05, g.delta)).epsilon(1e-6));

  // Mid-gap between windings 1 and 2 along the same ray.
  const double r_gap = g.r_outer - slope * (th + std::numbers::pi);
  const Vec2 off(0.5 * (r + r_gap) * std::cos(th),
                 0.5 * (r + r_gap) * std::sin(th));
  CHECK(phi_of_x(g, b1(beta), off) < 0.01);

  // The channel mouth touches the outer boundary.
  CHECK(phi_of_x(g, b1(beta), Vec2(g.r_outer, 0.0)) > 0.99);
  // The far end reaches the inner circle.
  const Vec2 pend(g.r_inner * std::cos(rad), g.r_inner * std::sin(rad));
  CHECK(phi_of_x(g, b1(beta), pend) > 0.99);
}

TEST_CASE("spiral: fields vary continuously in beta", "[phasefield]") {
  GeometryFamily g = spiral_family();
  TriMesh mesh = make_annulus_mesh(g.r_inner, g.r_outer, 32);
  REQUIRE(mesh.resolution_h() <= 0.5 * g.delta);
  const double beta = 360.0, db = 0.01;
  FieldSample s0 = sample_fields(g, b1(beta), mesh);
  FieldSample s1 = sample_fields(g, b1(beta + db), mesh);
  const double rms =
      (s1.xi - s0.xi).norm() / std::sqrt(double(mesh.n_vertices()));
  CHECK(rms < 1e-3);
}

TEST_CASE("rotating channel: values and 180-degree symmetry", "[phasefield]") {
  GeometryFamily g = channel_family();
  // beta = 0: horizontal channel through the center.
  CHECK(phi_of_x(g, b1(0.0), Vec2(0.2, 0.5)) ==
        Catch::Approx(profile_ref(0.5 * g.channel_width, g.delta))
            .epsilon(1e-12));
  CHECK(phi_of_x(g, b1(0.0), Vec2(0.2, 0.9)) < 1e-6);
  const double d = 0.03;
  CHECK(phi_of_x(g, b1(0.0), Vec2(0.7, 0.5 + d)) ==
        Catch::Approx(profile_ref(0.5 * g.channel_width - d, g.delta))
            .epsilon(1e-12));

  TriMesh mesh = make_rect_mesh(1.0, 1.0, 42, 42, "left_right");
  REQUIRE(mesh.resolution_h() <= 0.5 * g.delta);
  for (double beta : {30.0, 77.5, 140.0}) {
    FieldSample a = sample_fields(g, b1(beta), mesh);
    FieldSample b = sample_fields(g, b1(beta + 180.0), mesh);
    CHECK((a.xi - b.xi).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((a.zeta - b.zeta).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((a.t - b.t).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("three holes: centers, displacement, merge", "[phasefield]") {
  GeometryFamily g = holes_family();
  Eigen::VectorXd b0 = Eigen::VectorXd::Zero(3);
  for (double cx : {0.3, 0.5, 0.7})
    CHECK(phi_of_x(g, b0, Vec2(cx, 0.5)) > 0.999);
  // Between holes: 0.025 from the nearest edge, profile tail still visible.
  CHECK(phi_of_x(g, b0, Vec2(0.4, 0.5)) ==
        Catch::Approx(profile_ref(-0.025, g.delta)).epsilon(1e-9));
  CHECK(phi_of_x(g, b0, Vec2(0.4, 0.5)) < 0.05);

  // Displacement by beta_i hole-widths.
  Eigen::VectorXd bd(3);
  bd << 0.5, 0.0, -0.5;
  CHECK(phi_of_x(g, bd, Vec2(0.3 + 0.5 * g.hole_width, 0.5)) > 0.999);
  CHECK(phi_of_x(g, bd, Vec2(0.7 - 0.5 * g.hole_width, 0.5)) > 0.999);

  // The documented merging configuration: left two holes connect.
  Eigen::VectorXd bm(3);
  bm << 0.35, -0.25, 0.1;
  const Vec2 c1(0.3 + 0.35 * g.hole_width, 0.5);
  const Vec2 c2(0.5 - 0.25 * g.hole_width, 0.5);
  // Grid connectivity of the {phi > 0.5} set between the two hole centers.
  const int N = 120;
  std::vector<char> open(N * N, 0);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      const Vec2 x((i + 0.5) / N, (j + 0.5) / N);
      open[j * N + i] = phi_of_x(g, bm, x) > 0.5;
    }
  auto cell = [&](const Vec2& p) {
    return std::pair<int, int>(int(p.x() * N), int(p.y() * N));
  };
  auto [si, sj] = cell(c1);
  auto [ti, tj] = cell(c2);
  REQUIRE(open[sj * N + si]);
  REQUIRE(open[tj * N + ti]);
  std::vector<char> seen(N * N, 0);
  std::queue<std::pair<int, int>> q;
  q.push({si, sj});
  seen[sj * N + si] = 1;
  bool reached = false;
  while (!q.empty() && !reached) {
    auto [ci, cj] = q.front();
    q.pop();
    if (ci == ti && cj == tj) reached = true;
    const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int ni = ci + di[k], nj = cj + dj[k];
      if (ni < 0 || nj < 0 || ni >= N || nj >= N) continue;
      if (!open[nj * N + ni] || seen[nj * N + ni]) continue;
      seen[nj * N + ni] = 1;
      q.push({ni, nj});
    }
  }
  CHECK(reached);
  // The third hole stays separate: its center is open but unreached.
  auto [ui, uj] = cell(Vec2(0.7 + 0.1 * g.hole_width, 0.5));
  CHECK(open[uj * N + ui]);
  CHECK_FALSE(seen[uj * N + ui]);
}

TEST_CASE("analytic gradients match finite differences", "[phasefield]") {
  struct Case {
    GeometryFamily g;
    Eigen::VectorXd beta;
    Vec2 lo, hi;
  };
  std::vector<Case> cases;
  cases.push_back({spiral_family(), b1(400.0), Vec2(-0.9, -0.9), Vec2(0.9, 0.9)});
  cases.push_back({channel_family(), b1(25.0), Vec2(0.05, 0.05), Vec2(0.95, 0.95)});
  Eigen::VectorXd bh(3);
  bh << 0.2, -0.3, 0.45;
  cases.push_back({holes_family(), bh, Vec2(0.05, 0.05), Vec2(0.95, 0.95)});
  Eigen::VectorXd bd(6);
  bd << 0.2, 0.9, 0.0, 0.55, 1.0, 0.35;
  cases.push_back({hex_family(), bd, Vec2(-12.0, -12.0), Vec2(12.0, 12.0)});

  std::mt19937 rng(1234);
  for (const auto& c : cases) {
    std::uniform_real_distribution<double> ux(c.lo.x(), c.hi.x());
    std::uniform_real_distribution<double> uy(c.lo.y(), c.hi.y());
    const double h = 1e-6 * std::max(1.0, c.hi.x() - c.lo.x());
    int good = 0, total = 0;
    for (int k = 0; k < 250; ++k) {
      const Vec2 x(ux(rng), uy(rng));
      if (c.g.kind == FamilyKind::spiral && x.norm() < 0.3) continue;
      const double phi = phi_of_x(c.g, c.beta, x);
      if (phi < 1e-9 || phi > 1.0 - 1e-9) continue;  // clamped plateaus
      ++total;
      const Vec2 an = grad_phi_of_x(c.g, c.beta, x);
      const Vec2 fd(
          (phi_of_x(c.g, c.beta, x + Vec2(h, 0)) -
           phi_of_x(c.g, c.beta, x - Vec2(h, 0))) /
              (2 * h),
          (phi_of_x(c.g, c.beta, x + Vec2(0, h)) -
           phi_of_x(c.g, c.beta, x - Vec2(0, h))) /
              (2 * h));
      if ((fd - an).norm() <= 1e-4 * std::max(1.0, an.norm())) ++good;
    }
    INFO("family " << family_name(c.g.kind) << ": " << good << "/" << total);
    REQUIRE(total > 30);
    // Branch-switch points (max combination, nearest-winding change) break
    // differentiability on a measure-zero set; everywhere else FD must agree.
    CHECK(good >= total * 95 / 100);
  }
}

TEST_CASE("field samples satisfy the algebraic identities", "[phasefield]") {
  struct Case {
    GeometryFamily g;
    Eigen::VectorXd beta;
    TriMesh mesh;
  };
  std::vector<Case> cases;
  cases.push_back({spiral_family(), b1(270.0),
                   make_annulus_mesh(0.25, 1.0, 32)});
  cases.push_back({channel_family(), b1(65.0),
                   make_rect_mesh(1.0, 1.0, 42, 42, "left_right")});
  Eigen::VectorXd bh(3);
  bh << 0.35, -0.25, 0.1;
  cases.push_back({holes_family(), bh,
                   make_rect_mesh(1.0, 1.0, 42, 42, "bottom_top")});
  Eigen::VectorXd bd(6);
  bd << 0.3, 0.0, 0.8, 1.0, 0.1, 0.6;
  cases.push_back({hex_family(), bd, make_hexagon_mesh(15.0, 0.25, 26)});

  for (const auto& c : cases) {
    const FieldSample s = sample_fields(c.g, c.beta, c.mesh);
    const int nv = c.mesh.n_vertices();
    REQUIRE(s.xi.size() == nv);
    REQUIRE(s.t.size() == 2 * nv);

    double gmax = 0.0;
    std::vector<Vec2> grads(nv);
    for (int i = 0; i < nv; ++i) {
      grads[i] = grad_phi_of_x(c.g, c.beta, c.mesh.vertices[i]);
      gmax = std::max(gmax, grads[i].norm());
    }
    int in_band = 0;
    for (int i = 0; i < nv; ++i) {
      CHECK(s.xi[i] >= 0.0);
      CHECK(s.xi[i] <= 1.0);
      CHECK(s.zeta[i] >= 0.0);
      CHECK(s.zeta[i] <= 1.0);
      REQUIRE(std::abs(s.xi[i] * s.xi[i] + s.zeta[i] * s.zeta[i] - 1.0) <=
              1e-12);
      const Vec2 t(s.t[i], s.t[nv + i]);
      const double gn = grads[i].norm();
      if (gn <= 1e-3 * gmax) {
        REQUIRE(t.norm() == 0.0);
      } else {
        ++in_band;
        REQUIRE(std::abs(t.dot(grads[i])) <= 1e-10 * t.norm() * gn);
        REQUIRE(t.squaredNorm() ==
                Catch::Approx(2.0 * c.g.alpha_shear * gn).epsilon(1e-10));
      }
    }
    CHECK(in_band > 20);  // the interface band is populated
  }
}

TEST_CASE("field sampling rejects under-resolved meshes", "[phasefield]") {
  GeometryFamily g = channel_family();
  TriMesh coarse = make_rect_mesh(1.0, 1.0, 8, 8, "left_right");
  CHECK_THROWS_AS(sample_fields(g, b1(0.0), coarse), RefinementRequiredError);
}

TEST_CASE("hex damage: staged channel and crack evolution", "[phasefield]") {
  GeometryFamily g = hex_family();
  const int sext = 2;
  const double th = sext * std::numbers::pi / 3.0;
  const Vec2 e(std::cos(th), std::sin(th));

  SECTION("D = 0 vanishes") {
    for (double s = 0.5; s < 14.5; s += 0.25)
      CHECK(hex_damage_phi(g, 0.0, sext, (s * e).eval()).phi == 0.0);
  }
  SECTION("D = 0.25 peaks at one half") {
    double peak = 0.0;
    for (double s = 0.0; s <= 15.0; s += 0.05)
      for (double o = -4.0; o <= 4.0; o += 0.1) {
        const Vec2 x = s * e + o * Vec2(-e.y(), e.x());
        peak = std::max(peak, hex_damage_phi(g, 0.25, sext, x).phi);
      }
    CHECK(peak == Catch::Approx(0.5).margin(1e-9));
    CHECK(peak < 0.9);
  }
  SECTION("D = 1 spans both wells with phi > 0.5") {
    double lo = 1.0;
    for (double s = g.well_radius; s <= g.well_distance - g.well_radius;
         s += 0.05)
      lo = std::min(lo, hex_damage_phi(g, 1.0, sext, (s * e).eval()).phi);
    CHECK(lo > 0.99);
  }
  SECTION("peak value follows 2D below saturation") {
    for (double D : {0.1, 0.3, 0.45}) {
      const Vec2 mid = 7.0 * e;
      CHECK(hex_damage_phi(g, D, sext, mid).phi ==
            Catch::Approx(2.0 * D).epsilon(1e-9));
    }
  }
  SECTION("invalid inputs") {
    CHECK_THROWS_AS(hex_damage_phi(g, -0.1, 0, Vec2(1, 1)), ParameterError);
    CHECK_THROWS_AS(hex_damage_phi(g, 0.5, 6, Vec2(1, 1)), ParameterError);
  }
}

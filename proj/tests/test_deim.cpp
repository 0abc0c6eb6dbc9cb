#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sdrom/deim.hpp"
#include "sdrom/meshgen.hpp"
#include "sdrom/pod.hpp"
#include "sdrom/snapshots.hpp"

using namespace sdrom;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = 2.0 * uniform01(rng) - 1.0;
  return m;
}

ModeBasis basis_from(const Eigen::MatrixXd& modes) {
  ModeBasis b;
  b.kind = SnapshotKind::xi;
  b.modes = modes;
  b.sigma = Eigen::VectorXd::Ones(modes.cols());
  return b;
}

// Textbook greedy DEIM, written against the algorithm statement rather than
// the library code: dense SVD solves, std::max_element point search.
std::vector<int> oracle_points(const Eigen::MatrixXd& U, int N) {
  auto argmax = [](const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
      if (std::abs(v[i]) > std::abs(v[best])) best = i;
    return best;
  };
  std::vector<int> pts{argmax(U.col(0))};
  for (int n = 1; n < N; ++n) {
    Eigen::MatrixXd P(n, n);
    Eigen::VectorXd rhs(n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) P(j, i) = U(pts[j], i);
      rhs[j] = U(pts[j], n);
    }
    const Eigen::VectorXd c =
        Eigen::JacobiSVD<Eigen::MatrixXd>(P, Eigen::ComputeFullU |
                                                 Eigen::ComputeFullV)
            .solve(rhs);
    Eigen::VectorXd r = U.col(n) - U.leftCols(n) * c;
    for (int p : pts) r[p] = 0.0;
    pts.push_back(argmax(r));
  }
  return pts;
}

struct ChannelFixture {
  GeometryFamily g;
  TriMesh mesh;
  ChannelFixture()
      : mesh(make_rect_mesh(1.0, 1.0, 12, 12, "left_right")) {
    g.kind = FamilyKind::rotating_channel;
    g.delta = 0.1;
  }
  SamplingPlan sweep(int n) const {
    SamplingPlan plan;
    for (int i = 0; i < n; ++i)
      plan.points.push_back(
          Eigen::VectorXd::Constant(1, 180.0 * i / (n - 1)));
    return plan;
  }
};

}  // namespace

TEST_CASE("greedy selection picks argmax residual points") {
  SECTION("single mode selects its largest entry") {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(12);
    m[7] = -0.9;
    m[3] = 0.5;
    const DeimModel model = select_points(basis_from(m), 1);
    REQUIRE(model.points == std::vector<int>{7});
    REQUIRE(model.interp(0, 0) == -0.9);
  }

  SECTION("canonical basis vectors select their own dofs") {
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(10, 2);
    U(2, 0) = 1.0;
    U(5, 1) = 1.0;
    const DeimModel model = select_points(basis_from(U), 2);
    REQUIRE(model.points == std::vector<int>{2, 5});
    REQUIRE((model.interp - Eigen::Matrix2d::Identity()).norm() == 0.0);
  }

  SECTION("ties break toward the lowest dof index") {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(12);
    m[3] = 0.8;
    m[9] = -0.8;
    REQUIRE(select_points(basis_from(m), 1).points == std::vector<int>{3});
  }

  SECTION("selection is deterministic") {
    const Eigen::MatrixXd U = random_matrix(40, 6, 17);
    const DeimModel a = select_points(basis_from(U), 6);
    const DeimModel b = select_points(basis_from(U), 6);
    REQUIRE(a.points == b.points);
    REQUIRE((a.interp - b.interp).norm() == 0.0);
  }

  SECTION("preconditions") {
    const Eigen::MatrixXd U = random_matrix(20, 4, 18);
    REQUIRE_THROWS_AS(select_points(basis_from(U), 0), ParameterError);
    REQUIRE_THROWS_AS(select_points(basis_from(U), 5), ParameterError);
  }

  SECTION("redundant modes are reported with the offending index") {
    Eigen::MatrixXd U = random_matrix(20, 1, 19);
    Eigen::MatrixXd dup(20, 2);
    dup << U, U;
    REQUIRE_THROWS_WITH(select_points(basis_from(dup), 2),
                        Catch::Matchers::ContainsSubstring("mode 2"));
  }
}

TEST_CASE("greedy selection matches an independent dense oracle") {
  // Orthonormalize so the basis resembles a genuine POD output.
  const Eigen::MatrixXd raw = random_matrix(60, 8, 23);
  const Eigen::MatrixXd U =
      Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() *
      Eigen::MatrixXd::Identity(60, 8);
  const DeimModel model = select_points(basis_from(U), 8);
  REQUIRE(model.points == oracle_points(U, 8));
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i)
      REQUIRE(model.interp(j, i) == U(model.points[j], i));
}

TEST_CASE("weights solve the interpolation system") {
  const Eigen::MatrixXd raw = random_matrix(50, 6, 29);
  const Eigen::MatrixXd U =
      Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() *
      Eigen::MatrixXd::Identity(50, 6);
  const DeimModel model = select_points(basis_from(U), 6);

  SECTION("the first mode maps to the first unit weight") {
    const Eigen::VectorXd theta =
        weights(model, gather(U.col(0), model.points));
    REQUIRE(theta[0] == Approx(1.0).margin(1e-12));
    for (int i = 1; i < 6; ++i) REQUIRE(theta[i] == Approx(0.0).margin(1e-12));
  }

  SECTION("zero samples map to zero weights") {
    REQUIRE(weights(model, Eigen::VectorXd::Zero(6)).norm() == 0.0);
  }

  SECTION("in-span combinations are recovered exactly") {
    std::mt19937_64 rng(31);
    Eigen::VectorXd c(6);
    for (int i = 0; i < 6; ++i) c[i] = 2.0 * uniform01(rng) - 1.0;
    const Eigen::VectorXd f = U * c;
    const Eigen::VectorXd theta = weights(model, gather(f, model.points));
    REQUIRE((theta - c).norm() < 1e-10);
    // Classical reconstruction reproduces the field everywhere.
    REQUIRE((reconstruct_classical(model, f) - f).norm() < 1e-10 * f.norm());
  }

  SECTION("sample length must match the mode count") {
    REQUIRE_THROWS_AS(weights(model, Eigen::VectorXd::Zero(5)),
                      ParameterError);
  }
}

TEST_CASE("benchmark models interpolate exactly at their points") {
  const ChannelFixture fx;
  const SnapshotSet snaps =
      build_snapshots(SnapshotKind::xi, fx.g, fx.sweep(25), fx.mesh);
  const ModeBasis basis = svd_modes(snaps, 25);
  const DeimModel model = select_points(basis, 10);

  SECTION("point samples are matched for arbitrary beta") {
    SamplingPlan rnd;
    rnd.n_random = 5;
    rnd.seed = 5;
    for (const auto& beta : plan_points(rnd, fx.g)) {
      const Eigen::VectorXd f =
          field_values(SnapshotKind::xi, fx.g, beta, fx.mesh);
      const Eigen::VectorXd rec = reconstruct_classical(model, f);
      const double scale = f.cwiseAbs().maxCoeff();
      for (int p : model.points)
        REQUIRE(std::abs(rec[p] - f[p]) <= 1e-9 * scale);
    }
  }

  SECTION("training snapshots are reconstructed to machine accuracy") {
    const int full = static_cast<int>(basis.modes.cols());
    const DeimModel full_model = select_points(basis, full);
    const Eigen::VectorXd f = snaps.columns.col(7);
    const Eigen::VectorXd rec = reconstruct_classical(full_model, f);
    REQUIRE((rec - f).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("expanded weights reproduce the squared interpolant") {
  SECTION("single-mode expansion squares the weight") {
    Eigen::VectorXd theta(1);
    theta << -1.7;
    const Eigen::VectorXd ex = expand_squared(theta);
    REQUIRE(ex.size() == 1);
    REQUIRE(ex[0] == Approx(2.89).epsilon(1e-14));
  }

  SECTION("pair enumeration is upper-triangular with j fastest") {
    Eigen::VectorXd theta(3);
    theta << 1.0, 2.0, 3.0;
    const Eigen::VectorXd ex = expand_squared(theta);
    REQUIRE(ex.size() == 6);
    // (0,0) (0,1) (0,2) (1,1) (1,2) (2,2)
    REQUIRE(ex[0] == 1.0);
    REQUIRE(ex[1] == 4.0);
    REQUIRE(ex[2] == 6.0);
    REQUIRE(ex[3] == 4.0);
    REQUIRE(ex[4] == 12.0);
    REQUIRE(ex[5] == 9.0);
  }

  SECTION("four modes expand to ten weights") {
    REQUIRE(expand_squared(Eigen::VectorXd::Ones(4)).size() == 10);
  }

  SECTION("scalar expansion identity holds pointwise") {
    const Eigen::MatrixXd U = random_matrix(30, 6, 37);
    std::mt19937_64 rng(38);
    Eigen::VectorXd theta(6);
    for (int i = 0; i < 6; ++i) theta[i] = 2.0 * uniform01(rng) - 1.0;
    const Eigen::VectorXd lhs =
        expanded_products(U) * expand_squared(theta);
    const Eigen::VectorXd rhs = (U * theta).array().square();
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("tensor expansion identity holds per node") {
    const int nv = 15;
    const Eigen::MatrixXd T = random_matrix(2 * nv, 5, 41);
    std::mt19937_64 rng(42);
    Eigen::VectorXd theta(5);
    for (int i = 0; i < 5; ++i) theta[i] = 2.0 * uniform01(rng) - 1.0;
    const Eigen::VectorXd packed =
        expanded_products_tensor(T) * expand_squared(theta);
    const Eigen::VectorXd t = T * theta;
    for (int v = 0; v < nv; ++v) {
      REQUIRE(packed[v] == Approx(t[v] * t[v]).margin(1e-12));
      REQUIRE(packed[nv + v] == Approx(t[v] * t[nv + v]).margin(1e-12));
      REQUIRE(packed[2 * nv + v] ==
              Approx(t[nv + v] * t[nv + v]).margin(1e-12));
    }
  }

  SECTION("diagonal tensor products are the self outer products") {
    const int nv = 4;
    const Eigen::MatrixXd T = random_matrix(2 * nv, 2, 43);
    const Eigen::MatrixXd prods = expanded_products_tensor(T);
    for (int v = 0; v < nv; ++v) {
      REQUIRE(prods(v, 0) == Approx(T(v, 0) * T(v, 0)));
      REQUIRE(prods(nv + v, 0) == Approx(T(v, 0) * T(nv + v, 0)));
      REQUIRE(prods(2 * nv + v, 0) == Approx(T(nv + v, 0) * T(nv + v, 0)));
    }
  }
}

TEST_CASE("squared reconstruction is non-negative everywhere") {
  const ChannelFixture fx;
  const SamplingPlan train = fx.sweep(25);
  const DeimModel mx = select_points(
      svd_modes(build_snapshots(SnapshotKind::xi, fx.g, train, fx.mesh), 8),
      8);
  const DeimModel mz = select_points(
      svd_modes(build_snapshots(SnapshotKind::zeta, fx.g, train, fx.mesh), 8),
      8);
  const DeimModel mt = select_points(
      svd_modes(build_snapshots(SnapshotKind::t, fx.g, train, fx.mesh), 8), 8);

  SECTION("100 random parameter draws stay non-negative") {
    SamplingPlan rnd;
    rnd.n_random = 100;
    rnd.seed = 2026;
    const int nv = fx.mesh.n_vertices();
    for (const auto& beta : plan_points(rnd, fx.g)) {
      const NonnegFields f =
          reconstruct_nonneg(mx, mz, mt, fx.g, beta, fx.mesh);
      REQUIRE(f.phi.minCoeff() >= 0.0);
      REQUIRE(f.psi.minCoeff() >= 0.0);
      for (int v = 0; v < nv; ++v) {
        const double xx = f.alpha[v], xy = f.alpha[nv + v],
                     yy = f.alpha[2 * nv + v];
        REQUIRE(xx >= 0.0);
        REQUIRE(yy >= 0.0);
        // Rank-one tensors: the determinant vanishes up to roundoff.
        REQUIRE(xx * yy - xy * xy >= -1e-14 * (xx + yy) * (xx + yy));
      }
    }
  }

  SECTION("in-span parameters reproduce the true fields") {
    const ModeBasis bx =
        svd_modes(build_snapshots(SnapshotKind::xi, fx.g, train, fx.mesh), 25);
    const ModeBasis bz = svd_modes(
        build_snapshots(SnapshotKind::zeta, fx.g, train, fx.mesh), 25);
    const ModeBasis bt =
        svd_modes(build_snapshots(SnapshotKind::t, fx.g, train, fx.mesh), 25);
    const DeimModel fx_full =
        select_points(bx, static_cast<int>(bx.modes.cols()));
    const DeimModel fz_full =
        select_points(bz, static_cast<int>(bz.modes.cols()));
    const DeimModel ft_full =
        select_points(bt, static_cast<int>(bt.modes.cols()));
    const Eigen::VectorXd beta = train.points[11];
    const FieldSample ref = sample_fields(fx.g, beta, fx.mesh);
    const NonnegFields f =
        reconstruct_nonneg(fx_full, fz_full, ft_full, fx.g, beta, fx.mesh);
    REQUIRE((f.phi - ref.xi.array().square().matrix())
                .cwiseAbs()
                .maxCoeff() <= 1e-8);
    REQUIRE((f.psi - ref.zeta.array().square().matrix())
                .cwiseAbs()
                .maxCoeff() <= 1e-8);
  }
}

TEST_CASE("classical reconstruction dips negative where the squared one cannot") {
  SECTION("spiral phase-field with few modes") {
    GeometryFamily g;
    g.kind = FamilyKind::spiral;
    const TriMesh mesh = make_annulus_mesh(g.r_inner, g.r_outer, 32);
    SamplingPlan plan;
    plan.grid = {41};
    const ModeBasis bx =
        svd_modes(build_snapshots(SnapshotKind::xi, g, plan, mesh), 20);
    Eigen::VectorXd beta(1);
    beta << 360.0;
    const Eigen::VectorXd phi =
        sample_fields(g, beta, mesh).xi.array().square();
    for (const int N : {5, 10}) {
      const DeimModel m = select_points(bx, N);
      REQUIRE(reconstruct_classical(m, phi).minCoeff() < -0.01);
    }
    // The squared route with the same xi model stays non-negative.
    const DeimModel m5 = select_points(bx, 5);
    const Eigen::VectorXd xi_rec = reconstruct_classical(m5, g, beta, mesh);
    REQUIRE(xi_rec.array().square().minCoeff() >= 0.0);
  }

  SECTION("rotating channel phase-field with ten modes") {
    GeometryFamily g;
    g.kind = FamilyKind::rotating_channel;
    const TriMesh mesh = make_rect_mesh(1.0, 1.0, 42, 42, "left_right");
    SamplingPlan plan;
    for (int i = 0; i <= 50; ++i)
      plan.points.push_back(Eigen::VectorXd::Constant(1, 180.0 * i / 50.0));
    const ModeBasis bx =
        svd_modes(build_snapshots(SnapshotKind::xi, g, plan, mesh), 20);
    Eigen::VectorXd beta(1);
    beta << 30.0;
    const Eigen::VectorXd phi =
        sample_fields(g, beta, mesh).xi.array().square();
    const DeimModel m = select_points(bx, 10);
    REQUIRE(reconstruct_classical(m, phi).minCoeff() < -0.01);
  }
}

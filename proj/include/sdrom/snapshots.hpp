#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdrom/common.hpp"
#include "sdrom/fem.hpp"
#include "sdrom/parallel.hpp"
#include "sdrom/phasefield.hpp"
#include "sdrom/trimesh.hpp"

namespace sdrom {

enum class SnapshotKind { xi, zeta, t, solution };

inline std::string to_string(SnapshotKind k) {
  switch (k) {
    case SnapshotKind::xi: return "xi";
    case SnapshotKind::zeta: return "zeta";
    case SnapshotKind::t: return "t";
    case SnapshotKind::solution: return "solution";
  }
  return "?";
}

inline SnapshotKind snapshot_kind_from(const std::string& s) {
  if (s == "xi") return SnapshotKind::xi;
  if (s == "zeta") return SnapshotKind::zeta;
  if (s == "t") return SnapshotKind::t;
  if (s == "solution") return SnapshotKind::solution;
  throw ParameterError("unknown snapshot kind '" + s + "'");
}

// Parameter sampling: explicit points, then a tensor grid over the family's
// parameter box (one count per dimension, a single count broadcasts), then
// n_random uniform draws.
struct SamplingPlan {
  std::vector<Eigen::VectorXd> points;
  std::vector<int> grid;
  int n_random = 0;
  std::uint64_t seed = 0;
};

inline double uniform01(std::mt19937_64& rng) {
  // Top 53 bits, identical on every platform.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<Eigen::VectorXd> plan_points(const SamplingPlan& plan,
                                                const GeometryFamily& g) {
  const int dim = g.param_dim();
  std::vector<Eigen::VectorXd> pts;
  if (!plan.points.empty()) {
    for (const auto& p : plan.points)
      if (p.size() != dim)
        throw ParameterError("sampling point has dimension " +
                             std::to_string(p.size()) + ", family expects " +
                             std::to_string(dim));
    pts = plan.points;
  }
  if (!plan.grid.empty()) {
    std::vector<int> counts = plan.grid;
    if (counts.size() == 1) counts.assign(dim, counts[0]);
    if (static_cast<int>(counts.size()) != dim)
      throw ParameterError("grid has " + std::to_string(counts.size()) +
                           " counts, family expects " + std::to_string(dim));
    for (int c : counts)
      if (c < 1) throw ParameterError("grid counts must be positive");
    const auto [lo, hi] = g.param_box();
    std::size_t total = 1;
    for (int c : counts) total *= static_cast<std::size_t>(c);
    std::vector<int> idx(dim, 0);
    for (std::size_t n = 0; n < total; ++n) {
      Eigen::VectorXd b(dim);
      for (int d = 0; d < dim; ++d)
        b[d] = counts[d] == 1
                   ? 0.5 * (lo[d] + hi[d])
                   : lo[d] + (hi[d] - lo[d]) * idx[d] / (counts[d] - 1);
      pts.push_back(b);
      for (int d = dim - 1; d >= 0; --d) {
        if (++idx[d] < counts[d]) break;
        idx[d] = 0;
      }
    }
  }
  if (plan.n_random > 0) {
    const auto [lo, hi] = g.param_box();
    std::mt19937_64 rng(plan.seed);
    for (int n = 0; n < plan.n_random; ++n) {
      Eigen::VectorXd b(dim);
      for (int d = 0; d < dim; ++d) b[d] = lo[d] + (hi[d] - lo[d]) * uniform01(rng);
      pts.push_back(b);
    }
  }
  if (pts.empty()) throw ParameterError("sampling plan produces no points");
  return pts;
}

// A snapshot matrix: one column per parameter sample. Field kinds hold
// nodal interpolants (xi, zeta: n_vertices; t: both components stacked),
// the solution kind holds full high-fidelity coefficient vectors.
struct SnapshotSet {
  SnapshotKind kind = SnapshotKind::xi;
  Eigen::MatrixXd betas;    // param_dim x n_samples
  Eigen::MatrixXd columns;  // dofs x n_samples
  std::uint64_t seed = 0;   // seed of the random part of the plan, if any
};

namespace detail {

inline Eigen::MatrixXd pack_betas(const std::vector<Eigen::VectorXd>& pts) {
  Eigen::MatrixXd b(pts.front().size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) b.col(i) = pts[i];
  return b;
}

}  // namespace detail

inline SnapshotSet build_snapshots(SnapshotKind kind, const GeometryFamily& g,
                                   const SamplingPlan& plan,
                                   const TriMesh& mesh) {
  if (kind == SnapshotKind::solution)
    throw ParameterError(
        "solution snapshots need a material and wall conditions");
  const auto pts = plan_points(plan, g);
  const int nv = mesh.n_vertices();
  const int rows = kind == SnapshotKind::t ? 2 * nv : nv;
  SnapshotSet out;
  out.kind = kind;
  out.seed = plan.n_random > 0 ? plan.seed : 0;
  out.betas = detail::pack_betas(pts);
  out.columns.resize(rows, static_cast<Eigen::Index>(pts.size()));
  parallel_for(pts.size(), [&](std::size_t i) {
    const FieldSample s = sample_fields(g, pts[i], mesh);
    switch (kind) {
      case SnapshotKind::xi: out.columns.col(i) = s.xi; break;
      case SnapshotKind::zeta: out.columns.col(i) = s.zeta; break;
      default: out.columns.col(i) = s.t; break;
    }
  });
  return out;
}

inline SnapshotSet build_snapshots(
    const GeometryFamily& g, const Material& mat,
    const std::map<std::string, WallCondition>& walls,
    const SamplingPlan& plan, const TriMesh& mesh,
    bool per_tag_loads = false) {
  const auto pts = plan_points(plan, g);
  const MixedSpace sp = make_space(mesh, walls);
  SnapshotSet out;
  out.kind = SnapshotKind::solution;
  out.seed = plan.n_random > 0 ? plan.seed : 0;
  if (!per_tag_loads) {
    out.betas = detail::pack_betas(pts);
    out.columns.resize(sp.n_dofs(), static_cast<Eigen::Index>(pts.size()));
    parallel_for(pts.size(), [&](std::size_t i) {
      try {
        const FieldSample s = sample_fields(g, pts[i], mesh);
        out.columns.col(i) = solve_hifi(sp, mat, s);
      } catch (const NumericsError& e) {
        std::string msg = "high-fidelity solve failed at beta = (";
        for (int d = 0; d < pts[i].size(); ++d)
          msg += (d ? ", " : "") + std::to_string(pts[i][d]);
        throw NumericsError(msg + "): " + e.what());
      }
    });
    return out;
  }
  // One column per (sample, nonzero-pressure tag). The factorization is
  // shared across the tag loads of a sample, so spanning the individual
  // boundary responses costs little more than the combined solve.
  std::vector<Eigen::VectorXd> loads;
  for (const auto& [tag, value] : mat.boundary_pressures)
    if (value != 0.0) loads.push_back(value * pressure_load(sp, tag));
  if (loads.empty())
    throw ConfigError(
        "per-tag snapshots need at least one nonzero boundary pressure");
  const auto n_tags = static_cast<Eigen::Index>(loads.size());
  const Eigen::MatrixXd packed = detail::pack_betas(pts);
  out.betas.resize(packed.rows(), packed.cols() * n_tags);
  out.columns.resize(sp.n_dofs(), packed.cols() * n_tags);
  parallel_for(pts.size(), [&](std::size_t i) {
    try {
      const FieldSample s = sample_fields(g, pts[i], mesh);
      const SpMat K = assemble_system(sp, mat, s);
      Eigen::SparseLU<SpMat> lu;
      lu.analyzePattern(K);
      lu.factorize(K);
      if (lu.info() != Eigen::Success)
        throw NumericsError("sparse factorization of the mixed system failed");
      for (Eigen::Index j = 0; j < n_tags; ++j) {
        const auto c = static_cast<Eigen::Index>(i) * n_tags + j;
        out.betas.col(c) = packed.col(static_cast<Eigen::Index>(i));
        out.columns.col(c) = detail::checked_sparse_solve(lu, K, loads[j]);
      }
    } catch (const NumericsError& e) {
      std::string msg = "high-fidelity solve failed at beta = (";
      for (int d = 0; d < pts[i].size(); ++d)
        msg += (d ? ", " : "") + std::to_string(pts[i][d]);
      throw NumericsError(msg + "): " + e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// SDSNAPv1 container. Fixed little-endian layout:
//   char[8] magic, u32 kind, u32 payload (0 snapshots / 1 modes), u64 seed,
//   u64 rows, u64 cols, u64 beta_dim, u64 n_sigma,
//   f64 betas (beta_dim x cols, column-major), f64 sigma[n_sigma],
//   f64 matrix (rows x cols, column-major), u64 fnv1a64 of everything above.

namespace detail {

inline constexpr char kSnapMagic[8] = {'S', 'D', 'S', 'N', 'A', 'P', 'v', '1'};

inline void put_bytes(std::string& buf, const void* p, std::size_t n) {
  buf.append(static_cast<const char*>(p), n);
}
template <class T>
void put_scalar(std::string& buf, T v) {
  put_bytes(buf, &v, sizeof(T));
}
inline void put_matrix(std::string& buf, const Eigen::MatrixXd& m) {
  if (m.size()) put_bytes(buf, m.data(), sizeof(double) * m.size());
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  void take(void* out, std::size_t n) {
    if (pos + n > buf.size()) throw FormatError("container truncated");
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }
  template <class T>
  T scalar() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  Eigen::MatrixXd matrix(std::uint64_t rows, std::uint64_t cols) {
    Eigen::MatrixXd m(rows, cols);
    if (m.size()) take(m.data(), sizeof(double) * m.size());
    return m;
  }
};

struct SnapRecord {
  std::uint32_t kind = 0;
  std::uint32_t payload = 0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd betas;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd data;
};

inline std::string encode_record(const SnapRecord& r) {
  std::string buf;
  put_bytes(buf, kSnapMagic, 8);
  put_scalar<std::uint32_t>(buf, r.kind);
  put_scalar<std::uint32_t>(buf, r.payload);
  put_scalar<std::uint64_t>(buf, r.seed);
  put_scalar<std::uint64_t>(buf, static_cast<std::uint64_t>(r.data.rows()));
  put_scalar<std::uint64_t>(buf, static_cast<std::uint64_t>(r.data.cols()));
  put_scalar<std::uint64_t>(buf, static_cast<std::uint64_t>(r.betas.rows()));
  put_scalar<std::uint64_t>(buf, static_cast<std::uint64_t>(r.sigma.size()));
  put_matrix(buf, r.betas);
  if (r.sigma.size())
    put_bytes(buf, r.sigma.data(), sizeof(double) * r.sigma.size());
  put_matrix(buf, r.data);
  put_scalar<std::uint64_t>(buf, fnv1a64(buf.data(), buf.size()));
  return buf;
}

inline SnapRecord decode_record(const std::string& buf) {
  if (buf.size() < 8 + 8 + 5 * 8 + 8) throw FormatError("container truncated");
  if (std::memcmp(buf.data(), kSnapMagic, 8) != 0)
    throw FormatError("bad magic, not an SDSNAPv1 container");
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (stored != fnv1a64(buf.data(), buf.size() - 8))
    throw FormatError("checksum mismatch, container is corrupt");
  ByteReader rd{buf, 8};
  SnapRecord r;
  r.kind = rd.scalar<std::uint32_t>();
  r.payload = rd.scalar<std::uint32_t>();
  r.seed = rd.scalar<std::uint64_t>();
  const auto rows = rd.scalar<std::uint64_t>();
  const auto cols = rd.scalar<std::uint64_t>();
  const auto bdim = rd.scalar<std::uint64_t>();
  const auto nsig = rd.scalar<std::uint64_t>();
  const std::uint64_t doubles =
      bdim * cols + nsig + rows * cols;
  if (buf.size() != 8 + 8 + 5 * 8 + 8 * doubles + 8)
    throw FormatError("container size does not match its header");
  r.betas = rd.matrix(bdim, cols);
  Eigen::MatrixXd sig = rd.matrix(nsig, nsig ? 1 : 0);
  r.sigma = nsig ? Eigen::VectorXd(sig.col(0)) : Eigen::VectorXd();
  r.data = rd.matrix(rows, cols);
  return r;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("short write to '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

inline void write_snapshots(const std::string& path, const SnapshotSet& s) {
  detail::SnapRecord r;
  r.kind = static_cast<std::uint32_t>(s.kind);
  r.payload = 0;
  r.seed = s.seed;
  r.betas = s.betas;
  r.data = s.columns;
  detail::write_file(path, detail::encode_record(r));
}

inline SnapshotSet read_snapshots(const std::string& path) {
  const detail::SnapRecord r = detail::decode_record(detail::read_file(path));
  if (r.payload != 0)
    throw FormatError("container holds a mode basis, not snapshots");
  if (r.kind > 3) throw FormatError("unknown snapshot kind in container");
  SnapshotSet s;
  s.kind = static_cast<SnapshotKind>(r.kind);
  s.seed = r.seed;
  s.betas = r.betas;
  s.columns = r.data;
  return s;
}

}  // namespace sdrom

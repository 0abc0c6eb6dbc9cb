#pragma once

#include <algorithm>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "sdrom/common.hpp"
#include "sdrom/snapshots.hpp"

namespace sdrom {

// Left singular vectors and the full singular spectrum of a snapshot
// matrix. sigma always has min(rows, cols) entries so the epsilon measure
// sees the whole spectrum; modes keeps at most max_modes columns (fewer if
// the matrix ranks lower).
struct ModeBasis {
  SnapshotKind kind = SnapshotKind::xi;
  Eigen::MatrixXd modes;   // dofs x n_modes, orthonormal columns
  Eigen::VectorXd sigma;   // min(dofs, n_samples), descending
};

inline ModeBasis svd_modes(const SnapshotSet& snaps, int max_modes) {
  const Eigen::MatrixXd& X = snaps.columns;
  const Eigen::Index n = X.rows(), m = X.cols();
  if (n == 0 || m == 0) throw ParameterError("empty snapshot matrix");
  if (max_modes < 1 || max_modes > std::min(n, m))
    throw ParameterError("max_modes must lie in [1, min(dofs, n_samples)]");
  ModeBasis out;
  out.kind = snaps.kind;
  if (n >= 4 * m) {
    // Method of snapshots: eigendecomposition of the m x m Gram matrix.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X.transpose() * X);
    if (eig.info() != Eigen::Success)
      throw NumericsError("Gram matrix eigendecomposition failed");
    out.sigma.resize(m);
    for (Eigen::Index i = 0; i < m; ++i)
      out.sigma[i] = std::sqrt(std::max(0.0, eig.eigenvalues()[m - 1 - i]));
    const double tol = 1e-12 * out.sigma[0];
    Eigen::Index k = 0;
    while (k < max_modes && out.sigma[k] > tol) ++k;
    out.modes.resize(n, k);
    for (Eigen::Index i = 0; i < k; ++i)
      out.modes.col(i) = X * eig.eigenvectors().col(m - 1 - i) / out.sigma[i];
    // Squared singular values lose half the digits; re-orthonormalize.
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < i; ++j)
        out.modes.col(i) -=
            out.modes.col(j).dot(out.modes.col(i)) * out.modes.col(j);
      out.modes.col(i).normalize();
    }
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU);
    out.sigma = svd.singularValues();
    const double tol = 1e-12 * out.sigma[0];
    Eigen::Index k = 0;
    while (k < max_modes && out.sigma[k] > tol) ++k;
    out.modes = svd.matrixU().leftCols(k);
  }
  return out;
}

// Quality measure over the singular spectrum,
//   epsilon(n) = sqrt( sum_{i=n}^{dim} sigma_i^2 / sum_{i=1}^{dim} sigma_i^2 )
// with 1-based n, so epsilon(1) = 1 and the residual sum starts at mode n
// itself (not n+1).
inline double epsilon(const ModeBasis& basis, int n) {
  const Eigen::Index len = basis.sigma.size();
  if (n < 1 || n > len)
    throw ParameterError("epsilon index " + std::to_string(n) +
                         " outside [1, " + std::to_string(len) + "]");
  if (n == 1) return 1.0;
  const double total = basis.sigma.squaredNorm();
  if (total == 0.0) return 0.0;
  const double tail = basis.sigma.tail(len - (n - 1)).squaredNorm();
  return std::sqrt(tail / total);
}

inline void write_modes(const std::string& path, const ModeBasis& b) {
  detail::SnapRecord r;
  r.kind = static_cast<std::uint32_t>(b.kind);
  r.payload = 1;
  r.sigma = b.sigma;
  r.data = b.modes;
  detail::write_file(path, detail::encode_record(r));
}

inline ModeBasis read_modes(const std::string& path) {
  const detail::SnapRecord r = detail::decode_record(detail::read_file(path));
  if (r.payload != 1)
    throw FormatError("container holds snapshots, not a mode basis");
  if (r.kind > 3) throw FormatError("unknown snapshot kind in container");
  ModeBasis b;
  b.kind = static_cast<SnapshotKind>(r.kind);
  b.sigma = r.sigma;
  b.modes = r.data;
  return b;
}

}  // namespace sdrom

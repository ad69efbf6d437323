#ifndef FORMATION_BASIS_HPP
#define FORMATION_BASIS_HPP

#include <Eigen/Dense>

#include "formation/core_model.hpp"

namespace formation {

/// Per agent (x, y, z) -> (-y, x, z).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> rotate90_about_z(
    const Eigen::MatrixBase<Derived>& q) {
  if (q.size() % 3 != 0) throw StructuralError("aggregate vector length is not a multiple of 3");
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out(q.size());
  for (Eigen::Index k = 0; k < q.size(); k += 3) {
    out(k) = -q(k + 1);
    out(k + 1) = q(k);
    out(k + 2) = q(k + 2);
  }
  return out;
}

/// Per agent (x, y, z) -> (x, y, 0).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project_xy(
    const Eigen::MatrixBase<Derived>& q) {
  if (q.size() % 3 != 0) throw StructuralError("aggregate vector length is not a multiple of 3");
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out = q;
  for (Eigen::Index k = 2; k < q.size(); k += 3) out(k) = typename Derived::Scalar(0);
  return out;
}

/// Columns [q, rot90(q), proj_xy(q), 1_x, 1_y, 1_z].
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 6> invariance_matrix(
    const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  if (q.size() % 3 != 0) throw StructuralError("aggregate vector length is not a multiple of 3");
  const Eigen::Index n = q.size() / 3;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 6> m(q.size(), 6);
  m.col(0) = q;
  m.col(1) = rotate90_about_z(q);
  m.col(2) = project_xy(q);
  m.template rightCols<3>().setZero();
  for (Eigen::Index i = 0; i < n; ++i) m.template block<3, 3>(3 * i, 3).setIdentity();
  return m;
}

struct InvarianceBasis {
  Eigen::MatrixXd N;  // 3n x 6
  Eigen::MatrixXd Q;  // 3n x (3n - rank), orthonormal complement of span(N)
  int rank = 0;
};

inline constexpr double kBasisRankTolerance = 1e-10;

/// Rank of N uses sigma_i > 1e-10 sigma_max. Each column of Q is signed so
/// its first entry of magnitude > 1e-12 is positive. Requires n >= 3 and
/// rank(N) >= 4.
InvarianceBasis build_basis(const FormationSpec& spec);

/// Flip signs so the first non-negligible entry of every column is positive.
void canonicalize_column_signs(Eigen::MatrixXd& m, double eps = 1e-12);

}  // namespace formation

#endif  // FORMATION_BASIS_HPP

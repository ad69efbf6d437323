#include "formation/basis.hpp"

#include <string>

namespace formation {

void canonicalize_column_signs(Eigen::MatrixXd& m, double eps) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (std::abs(m(r, c)) > eps) {
        if (m(r, c) < 0) m.col(c) *= -1.0;
        break;
      }
    }
  }
}

InvarianceBasis build_basis(const FormationSpec& spec) {
  const int n = spec.size();
  if (n < 3) {
    throw StructuralError("invariance basis needs n >= 3 agents, got " + std::to_string(n));
  }
  InvarianceBasis basis;
  basis.N = invariance_matrix(spec.aggregate());

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis.N, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  const double cutoff = kBasisRankTolerance * sv(0);
  int rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > cutoff) ++rank;
  if (rank < 4) {
    throw DegenerateFormationError("invariance matrix has rank " + std::to_string(rank) +
                                   " < 4; formation is degenerate");
  }
  basis.rank = rank;
  basis.Q = svd.matrixU().rightCols(3 * n - rank);
  canonicalize_column_signs(basis.Q);
  return basis;
}

}  // namespace formation

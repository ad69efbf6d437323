#ifndef FORMATION_SPECTRAL_SDP_HPP
#define FORMATION_SPECTRAL_SDP_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "formation/basis.hpp"
#include "formation/core_model.hpp"

namespace formation {

inline constexpr double kFeasibilityTolerance = 1e-8;
inline constexpr double kKernelTolerance = 1e-9;

/// Gain synthesis problem: maximize lambda_min(-sym(Q^T A(g) Q)) subject to
/// A(g) N = 0 and |g| <= rho. Variables follow the gain vector layout of
/// core_model.hpp (6 per undirected edge).
class SdpProblem {
 public:
  /// rho <= 0 selects the default sqrt(|edges|).
  SdpProblem(FormationSpec spec, InvarianceBasis basis, double rho = 0.0);

  const FormationSpec& spec() const noexcept { return spec_; }
  const InvarianceBasis& basis() const noexcept { return basis_; }
  const SensingGraph& graph() const noexcept { return spec_.graph(); }
  double rho() const noexcept { return rho_; }
  Eigen::Index variable_count() const { return gain_variable_count(spec_.graph()); }

 private:
  FormationSpec spec_;
  InvarianceBasis basis_;
  double rho_;
};

/// Linear map g -> vec(A(g) [q*, rot90(q*), proj_xy(q*)]), 9n x 6|E|.
Eigen::MatrixXd constraint_matrix(const FormationSpec& spec);

struct FeasibleSet {
  Eigen::VectorXd particular;   // always zero: the constraint is homogeneous
  Eigen::MatrixXd homogeneous;  // orthonormal columns spanning {g : A(g) N = 0}
};

/// Throws InfeasibleStructureError when only g = 0 is feasible.
FeasibleSet affine_feasible_basis(const SdpProblem& p);

struct MinEigen {
  double value;
  Eigen::MatrixXd supergradient;  // v v^T for a unit eigenvector of `value`
  Eigen::VectorXd vector;
};

/// Smallest eigenvalue of a symmetric matrix with a supergradient of the
/// concave map M -> lambda_min(M). Throws ContractViolation when M is not
/// symmetric to 1e-12 (relative to its largest entry, floored at 1).
MinEigen min_eig_and_subgradient(const Eigen::Ref<const Eigen::MatrixXd>& m);

/// -sym(Q^T A Q).
Eigen::MatrixXd reduced_operator(const InvarianceBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& a);

/// lambda_min(-sym(Q^T A Q)).
double stability_margin(const InvarianceBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& a);

struct ObjectiveValue {
  double value;
  Eigen::VectorXd supergradient;  // in gain-vector space
};

/// Objective and a supergradient (chain rule through g -> -sym(Q^T A(g) Q)).
ObjectiveValue objective_and_supergradient(const SdpProblem& p, const Eigen::Ref<const Eigen::VectorXd>& g);

struct SdpOptions {
  int restarts = 5;
  int max_iter = 20000;  // Newton steps per restart
  double gap = 1e-4;     // relative
  std::uint64_t seed = 1;

  friend bool operator==(const SdpOptions&, const SdpOptions&) = default;
};

struct SdpSolution {
  GainSet gains;
  Eigen::VectorXd gain_vector;
  double objective = 0.0;      // lambda_min(-sym(Q^T A Q)) of `gains`
  double upper_bound = 0.0;    // certified bound on the optimum
  int iterations = 0;          // total Newton steps over all restarts
  double residual = 0.0;       // max |(A N)_{rc}|
  bool hit_iteration_cap = false;
  bool restarts_agree = true;  // every restart within `gap` of the best
  std::vector<double> restart_objectives;
};

/// Log-barrier interior-point solve in the reduced coordinates of the
/// feasible subspace, restarted from `restarts` random interior points.
/// Throws InfeasibleStructureError or NotStabilizableError.
SdpSolution solve(const SdpProblem& p, const SdpOptions& opts = {});

struct VerificationReport {
  double residual = 0.0;
  double margin = 0.0;
  int kernel_dim = 0;
  int rank_n = 0;
  bool residual_ok = false;
  bool margin_ok = false;
  bool kernel_ok = false;
  bool passed() const noexcept { return residual_ok && margin_ok && kernel_ok; }
  std::string summary() const;
};

/// Solver-independent check: A N = 0 (<= 1e-8), margin > 0 and
/// dim ker(A) = rank(N) with relative singular-value threshold 1e-9.
VerificationReport verify_gains(const FormationSpec& spec, const InvarianceBasis& basis, const GainSet& gains);

}  // namespace formation

#endif  // FORMATION_SPECTRAL_SDP_HPP

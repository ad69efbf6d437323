#include "formation/spectral_sdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace formation {

namespace {

// Unit gain pattern for coefficient `coef` (0 = a, 1 = b, 2 = c).
Mat3 coefficient_pattern(int coef) {
  Gain g;
  if (coef == 0) g.a = 1.0;
  if (coef == 1) g.b = 1.0;
  if (coef == 2) g.c = 1.0;
  return materialize_block(g);
}

// (row agent, column agent, coefficient) addressed by variable v.
struct VariableSlot {
  int row;
  int col;
  int coef;
};

VariableSlot slot_of(const SensingGraph& graph, Eigen::Index v) {
  const auto& e = graph.edges()[static_cast<std::size_t>(v / 6)];
  const int dir = static_cast<int>((v % 6) / 3);
  const int coef = static_cast<int>(v % 3);
  return dir == 0 ? VariableSlot{e.i, e.j, coef} : VariableSlot{e.j, e.i, coef};
}

double max_abs_AN(const Eigen::MatrixXd& a, const Eigen::MatrixXd& n) {
  return (a * n).cwiseAbs().maxCoeff();
}

// lambda_min(sum_i y_i M_i) with the M_i stored as columns vec(M_i).
class ReducedObjective {
 public:
  ReducedObjective(Eigen::MatrixXd terms, int k) : terms_(std::move(terms)), k_(k) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(terms_);
    scale_ = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  }

  int k() const noexcept { return k_; }
  Eigen::Index m() const noexcept { return terms_.cols(); }
  double scale() const noexcept { return scale_; }
  const Eigen::MatrixXd& terms() const noexcept { return terms_; }

  Eigen::MatrixXd eval(const Eigen::VectorXd& y) const {
    Eigen::VectorXd v = terms_ * y;
    Eigen::MatrixXd s = Eigen::Map<Eigen::MatrixXd>(v.data(), k_, k_);
    return 0.5 * (s + s.transpose());
  }

  double min_eigenvalue(const Eigen::VectorXd& y) const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(eval(y), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }

 private:
  Eigen::MatrixXd terms_;
  int k_;
  double scale_ = 0.0;
};

struct RestartResult {
  Eigen::VectorXd best_y;  // unit norm (or zero)
  double best_value = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool hit_cap = false;
};

// Maximizes t subject to M(y) - t I > 0 and |y| < 1 by following the central
// path of  tau * t + log det(M(y) - t I) + log(1 - |y|^2).
class BarrierPath {
 public:
  BarrierPath(const ReducedObjective& obj, int max_iter, double gap)
      : obj_(obj), max_iter_(max_iter), gap_(gap) {}

  RestartResult run(Eigen::VectorXd y, double t) {
    RestartResult out;
    const int k = obj_.k();
    const Eigen::Index m = obj_.m();
    const double nu = k + 2.0;
    double tau = nu / std::max(obj_.scale(), 1e-300);

    Eigen::LLT<Eigen::MatrixXd> llt;
    if (!factor(y, t, llt)) return out;

    for (;;) {
      // centering
      for (int inner = 0; inner < 200; ++inner) {
        if (out.iterations >= max_iter_) {
          out.hit_cap = true;
          return out;
        }
        ++out.iterations;
        const Eigen::MatrixXd linv = llt.matrixL().solve(Eigen::MatrixXd::Identity(k, k));
        Eigen::MatrixXd g(k * k, m + 1);
        Eigen::VectorXd grad(m + 1);
        for (Eigen::Index i = 0; i < m; ++i) {
          Eigen::Map<const Eigen::MatrixXd> mi(obj_.terms().col(i).data(), k, k);
          Eigen::Map<Eigen::MatrixXd> wi(g.col(i).data(), k, k);
          wi.noalias() = linv * (0.5 * (mi + mi.transpose())) * linv.transpose();
          grad(i) = wi.trace();
        }
        {
          Eigen::Map<Eigen::MatrixXd> wt(g.col(m).data(), k, k);
          wt.noalias() = -linv * linv.transpose();
          grad(m) = tau + wt.trace();
        }
        const double trace_sinv = linv.squaredNorm();
        track_bound(out, grad.head(m), trace_sinv);

        const double slack = 1.0 - y.squaredNorm();
        grad.head(m) -= (2.0 / slack) * y;
        Eigen::MatrixXd neg_hess = g.transpose() * g;
        neg_hess.topLeftCorner(m, m).diagonal().array() += 2.0 / slack;
        neg_hess.topLeftCorner(m, m).noalias() += (4.0 / (slack * slack)) * y * y.transpose();

        Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hess);
        const Eigen::VectorXd dir = ldlt.solve(grad);
        const double decrement = grad.dot(dir);
        if (!std::isfinite(decrement) || decrement <= 2e-10) break;

        const double phi0 = barrier(y, t, tau, llt);
        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
          Eigen::VectorXd y1 = y + step * dir.head(m);
          const double t1 = t + step * dir(m);
          Eigen::LLT<Eigen::MatrixXd> trial;
          if (!factor(y1, t1, trial)) continue;
          if (barrier(y1, t1, tau, trial) >= phi0 + 0.25 * step * decrement) {
            y = std::move(y1);
            t = t1;
            llt = std::move(trial);
            moved = true;
            break;
          }
        }
        if (!moved) break;
      }

      record(out, y);
      const double target = std::max(gap_ * 1e-2 * std::abs(out.best_value), 1e-11 * obj_.scale());
      if (out.upper_bound - out.best_value <= target) return out;
      if (nu / tau < 1e-14 * obj_.scale()) return out;
      tau *= 8.0;
    }
  }

 private:
  bool factor(const Eigen::VectorXd& y, double t, Eigen::LLT<Eigen::MatrixXd>& llt) const {
    if (y.squaredNorm() >= 1.0) return false;
    Eigen::MatrixXd s = obj_.eval(y);
    s.diagonal().array() -= t;
    llt.compute(s);
    if (llt.info() != Eigen::Success) return false;
    return (llt.matrixLLT().diagonal().array() > 0.0).all();
  }

  static double barrier(const Eigen::VectorXd& y, double t, double tau, const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return tau * t + logdet + std::log(1.0 - y.squaredNorm());
  }

  // Z = S^{-1} / tr(S^{-1}) is a unit-trace PSD matrix, so
  // max_{|y| <= 1} <Z, M(y)> = |(<Z, M_i>)_i| bounds the optimum.
  static void track_bound(RestartResult& out, const Eigen::VectorXd& traces, double trace_sinv) {
    const double bound = traces.norm() / trace_sinv;
    out.upper_bound = std::min(out.upper_bound, bound);
  }

  void record(RestartResult& out, const Eigen::VectorXd& y) const {
    const double r = y.norm();
    if (r <= 0.0) return;
    const Eigen::VectorXd unit = y / r;
    const double value = obj_.min_eigenvalue(unit);
    if (value > out.best_value) {
      out.best_value = value;
      out.best_y = unit;
    }
  }

  const ReducedObjective& obj_;
  int max_iter_;
  double gap_;
};

}  // namespace

SdpProblem::SdpProblem(FormationSpec spec, InvarianceBasis basis, double rho)
    : spec_(std::move(spec)), basis_(std::move(basis)), rho_(rho) {
  if (rho_ <= 0.0) rho_ = std::sqrt(static_cast<double>(spec_.graph().edge_count()));
  if (!(rho_ > 0.0) || !std::isfinite(rho_)) {
    throw StructuralError("normalization radius must be positive (graph has no edges?)");
  }
  if (basis_.N.rows() != 3 * spec_.size()) throw StructuralError("basis does not match formation size");
}

Eigen::MatrixXd constraint_matrix(const FormationSpec& spec) {
  const SensingGraph& graph = spec.graph();
  const int n = spec.size();
  const Eigen::VectorXd q = spec.aggregate();
  Eigen::MatrixXd targets(3 * n, 3);
  targets.col(0) = q;
  targets.col(1) = rotate90_about_z(q);
  targets.col(2) = project_xy(q);

  const Eigen::Index vars = gain_variable_count(graph);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(9 * n, vars);
  for (Eigen::Index v = 0; v < vars; ++v) {
    const VariableSlot s = slot_of(graph, v);
    const Mat3 e = coefficient_pattern(s.coef);
    for (int col = 0; col < 3; ++col) {
      const Vec3 diff = targets.col(col).segment<3>(3 * s.col) - targets.col(col).segment<3>(3 * s.row);
      c.col(v).segment<3>(3 * n * col + 3 * s.row) = e * diff;
    }
  }
  return c;
}

FeasibleSet affine_feasible_basis(const SdpProblem& p) {
  const Eigen::MatrixXd c = constraint_matrix(p.spec());
  const Eigen::Index vars = c.cols();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? kBasisRankTolerance * sv(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  if (rank == vars) {
    throw InfeasibleStructureError("graph too sparse for this formation: only zero gains satisfy A N = 0");
  }
  FeasibleSet out;
  out.particular = Eigen::VectorXd::Zero(vars);
  out.homogeneous = svd.matrixV().rightCols(vars - rank);
  canonicalize_column_signs(out.homogeneous);
  return out;
}

MinEigen min_eig_and_subgradient(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ContractViolation("matrix must be square and non-empty");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ContractViolation("matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  MinEigen out;
  out.value = es.eigenvalues()(0);
  out.vector = es.eigenvectors().col(0);
  out.supergradient = out.vector * out.vector.transpose();
  return out;
}

Eigen::MatrixXd reduced_operator(const InvarianceBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& a) {
  const Eigen::MatrixXd p = basis.Q.transpose() * a * basis.Q;
  return -0.5 * (p + p.transpose());
}

double stability_margin(const InvarianceBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced_operator(basis, a), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

ObjectiveValue objective_and_supergradient(const SdpProblem& p, const Eigen::Ref<const Eigen::VectorXd>& g) {
  const SensingGraph& graph = p.graph();
  const Eigen::MatrixXd a = assemble_aggregate(graph, g);
  const MinEigen me = min_eig_and_subgradient(reduced_operator(p.basis(), a));
  const Eigen::VectorXd w = p.basis().Q * me.vector;

  ObjectiveValue out{me.value, Eigen::VectorXd(g.size())};
  // d/dg_v of -w^T A(g) w; block (r, c) of A(e_v) is E, block (r, r) is -E.
  for (Eigen::Index v = 0; v < g.size(); ++v) {
    const VariableSlot s = slot_of(graph, v);
    const Vec3 wr = w.segment<3>(3 * s.row);
    const Vec3 wc = w.segment<3>(3 * s.col);
    out.supergradient(v) = -wr.dot(coefficient_pattern(s.coef) * (wc - wr));
  }
  return out;
}

SdpSolution solve(const SdpProblem& p, const SdpOptions& opts) {
  const FeasibleSet feasible = affine_feasible_basis(p);
  const Eigen::MatrixXd& w = feasible.homogeneous;
  const InvarianceBasis& basis = p.basis();
  const int k = static_cast<int>(basis.Q.cols());

  Eigen::MatrixXd terms(k * k, w.cols());
  for (Eigen::Index i = 0; i < w.cols(); ++i) {
    const Eigen::MatrixXd mi = reduced_operator(basis, assemble_aggregate(p.graph(), w.col(i)));
    terms.col(i) = mi.reshaped();
  }
  const ReducedObjective objective(std::move(terms), k);

  SdpSolution sol;
  const int restarts = std::max(1, opts.restarts);
  RestartResult best;
  double bound = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint64_t>(opts.seed), static_cast<std::uint64_t>(r)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    Eigen::VectorXd y0(objective.m());
    for (Eigen::Index i = 0; i < y0.size(); ++i) y0(i) = normal(rng);
    y0 *= 0.5 / y0.norm();
    const double t0 = objective.min_eigenvalue(y0) - 0.1 * objective.scale();

    BarrierPath path(objective, opts.max_iter, opts.gap);
    RestartResult res = path.run(y0, t0);
    sol.iterations += res.iterations;
    sol.hit_iteration_cap = sol.hit_iteration_cap || res.hit_cap;
    sol.restart_objectives.push_back(p.rho() * res.best_value);
    bound = std::min(bound, res.upper_bound);
    if (res.best_y.size() > 0 && res.best_value > best.best_value) best = std::move(res);
  }

  const double tiny = 1e-9 * objective.scale();
  if (best.best_y.size() == 0 || best.best_value <= tiny) {
    const double value = best.best_y.size() == 0 ? 0.0 : p.rho() * best.best_value;
    throw NotStabilizableError("formation not stabilizable with this graph (best margin " +
                                   std::to_string(value) + ")",
                               value);
  }

  sol.gain_vector = p.rho() * (w * best.best_y);
  sol.gains = gains_from_vector(p.graph(), sol.gain_vector);
  const Eigen::MatrixXd a = assemble_aggregate(p.graph(), sol.gain_vector);
  sol.objective = stability_margin(basis, a);
  sol.upper_bound = p.rho() * bound;
  sol.residual = max_abs_AN(a, basis.N);
  const double best_obj = p.rho() * best.best_value;
  for (double v : sol.restart_objectives) {
    if (best_obj - v > opts.gap * std::abs(best_obj)) sol.restarts_agree = false;
  }
  return sol;
}

std::string VerificationReport::summary() const {
  std::ostringstream os;
  os.precision(6);
  os << "residual max|A N| = " << residual << (residual_ok ? " (ok)" : " (FAIL)") << "\n";
  os << "lambda_1 margin = " << (margin == 0.0 ? 0.0 : margin) << (margin_ok ? " > 0 (ok)" : " <= 0 (FAIL)") << "\n";
  os << "kernel dimension = " << kernel_dim << ", rank(N) = " << rank_n << (kernel_ok ? " (ok)" : " (FAIL)")
     << "\n";
  os << "verification " << (passed() ? "PASSED" : "FAILED") << "\n";
  return os.str();
}

VerificationReport verify_gains(const FormationSpec& spec, const InvarianceBasis& basis, const GainSet& gains) {
  VerificationReport rep;
  const Eigen::MatrixXd a = assemble_aggregate(spec, gains);
  rep.residual = max_abs_AN(a, basis.N);
  rep.margin = stability_margin(basis, a);
  rep.rank_n = basis.rank;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  const double cutoff = kKernelTolerance * sv(0);
  int nonzero = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++nonzero;
  rep.kernel_dim = static_cast<int>(a.rows()) - nonzero;

  rep.residual_ok = rep.residual <= kFeasibilityTolerance;
  rep.margin_ok = rep.margin > 0.0;
  rep.kernel_ok = rep.kernel_dim == rep.rank_n;
  return rep;
}

}  // namespace formation

#include "formation/metrics.hpp"

#include <cmath>
#include <complex>
#include <limits>

namespace formation {

namespace {

using cplx = std::complex<double>;

Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

}  // namespace

AlignmentReport formation_error(const std::vector<Vec3>& q, const FormationSpec& spec, AlignmentMode mode) {
  const int n = spec.size();
  if (static_cast<int>(q.size()) != n) throw StructuralError("position count does not match formation");
  for (const auto& p : q)
    if (!p.allFinite()) throw StructuralError("positions must be finite");

  const auto& target = spec.coords();
  const Vec3 cq = centroid(q);
  const Vec3 ct = centroid(target);

  // Horizontal plane as complex numbers: q_xy ~ w * target_xy.
  cplx cross_sum = 0.0;
  double target_xy_sq = 0.0;
  double zz = 0.0;
  double target_z_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 a = q[i] - cq;
    const Vec3 b = target[i] - ct;
    cross_sum += std::conj(cplx(b.x(), b.y())) * cplx(a.x(), a.y());
    target_xy_sq += b.x() * b.x() + b.y() * b.y();
    zz += a.z() * b.z();
    target_z_sq += b.z() * b.z();
  }
  const double extent = std::max(target_xy_sq, target_z_sq);
  const double eps = 1e-24 * std::max(extent, 1.0);

  AlignmentReport rep;
  rep.degenerate = target_xy_sq <= eps;
  cplx w = 0.0;
  double zcoef = 0.0;
  if (mode == AlignmentMode::full_invariance) {
    if (!rep.degenerate) w = cross_sum / target_xy_sq;
    if (target_z_sq > eps) zcoef = zz / target_z_sq;
    rep.scale = std::abs(w);
    rep.phi = rep.degenerate ? 0.0 : std::arg(w);
    rep.z_scale = rep.scale > 0.0 ? zcoef / rep.scale : 0.0;
  } else {
    rep.phi = (rep.degenerate || std::abs(cross_sum) == 0.0) ? 0.0 : std::arg(cross_sum);
    w = std::polar(1.0, rep.phi);
    rep.scale = 1.0;
    rep.z_scale = zz >= 0.0 ? 1.0 : -1.0;
    zcoef = rep.z_scale;
  }

  double sq_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 a = q[i] - cq;
    const Vec3 b = target[i] - ct;
    const cplx fit = w * cplx(b.x(), b.y());
    const Vec3 r(a.x() - fit.real(), a.y() - fit.imag(), a.z() - zcoef * b.z());
    sq_sum += r.squaredNorm();
    rep.max_residual = std::max(rep.max_residual, r.norm());
  }
  rep.error = std::sqrt(sq_sum / n);

  const cplx ct_xy = w * cplx(ct.x(), ct.y());
  rep.translation = Vec3(cq.x() - ct_xy.real(), cq.y() - ct_xy.imag(), cq.z() - zcoef * ct.z());
  return rep;
}

AlignmentReport formation_error(const Eigen::Ref<const Eigen::VectorXd>& q, const FormationSpec& spec,
                                AlignmentMode mode) {
  if (q.size() != 3 * spec.size()) throw StructuralError("aggregate vector length does not match formation");
  std::vector<Vec3> pts(spec.size());
  for (int i = 0; i < spec.size(); ++i) pts[i] = q.segment<3>(3 * i);
  return formation_error(pts, spec, mode);
}

double scale_error(const std::vector<Vec3>& q, const FormationSpec& spec) {
  if (static_cast<int>(q.size()) != spec.size()) throw StructuralError("position count does not match formation");
  double worst = 0.0;
  for (const auto& e : spec.graph().edges()) {
    const double dstar = spec.desired_distance(e.i, e.j);
    worst = std::max(worst, std::abs((q[e.j] - q[e.i]).norm() - dstar) / dstar);
  }
  return worst;
}

double pair_clearance(const Vec3& a, const Vec3& b, const CylinderGeometry& cyl) {
  const Vec3 d = b - a;
  return std::max(d.head<2>().norm() / (2.0 * cyl.radius), std::abs(d.z()) / (2.0 * cyl.half_height));
}

double min_separation(const std::vector<std::vector<Vec3>>& trajectory, const CylinderGeometry& cyl) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& sample : trajectory)
    for (std::size_t i = 0; i < sample.size(); ++i)
      for (std::size_t j = i + 1; j < sample.size(); ++j)
        best = std::min(best, pair_clearance(sample[i], sample[j], cyl));
  return best;
}

}  // namespace formation

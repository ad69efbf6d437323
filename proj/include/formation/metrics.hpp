#ifndef FORMATION_METRICS_HPP
#define FORMATION_METRICS_HPP

#include <Eigen/Dense>

#include <vector>

#include "formation/core_model.hpp"

namespace formation {

enum class AlignmentMode {
  full_invariance,  // translation, z-rotation, overall scale s >= 0, z-scale
  fixed_scale,      // translation, z-rotation, z orientation sign
};

/// Best fit q ~ diag(s, s, s * s_z) R_z(phi) q* + t and its residual.
struct AlignmentReport {
  double error = 0.0;         // RMS over agents of the 3D residual
  double max_residual = 0.0;  // largest per-agent residual norm
  Vec3 translation = Vec3::Zero();
  double phi = 0.0;
  double scale = 1.0;
  double z_scale = 1.0;
  bool degenerate = false;  // q* has no horizontal extent; phi reported as 0
};

/// Closed-form fit: centroids give t, 2D Procrustes on x-y gives phi (and
/// the horizontal scale), least squares on z gives the z-scale.
AlignmentReport formation_error(const std::vector<Vec3>& q, const FormationSpec& spec, AlignmentMode mode);
AlignmentReport formation_error(const Eigen::Ref<const Eigen::VectorXd>& q, const FormationSpec& spec,
                                AlignmentMode mode);

/// max over edges of | |q_j - q_i| - d*_ij | / d*_ij, with d* taken from spec.
double scale_error(const std::vector<Vec3>& q, const FormationSpec& spec);

struct CylinderGeometry {
  double radius;
  double half_height;
};

/// max(horizontal / (2 radius), vertical / (2 half_height)) for one pair.
double pair_clearance(const Vec3& a, const Vec3& b, const CylinderGeometry& cyl);

/// Minimum pair clearance over every sample and pair; >= 1 means no overlap.
double min_separation(const std::vector<std::vector<Vec3>>& trajectory, const CylinderGeometry& cyl);

}  // namespace formation

#endif  // FORMATION_METRICS_HPP

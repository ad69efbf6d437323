#ifndef FORMATION_TEST_HELPERS_HPP
#define FORMATION_TEST_HELPERS_HPP

#include <random>
#include <vector>

#include "formation/core_model.hpp"

namespace testing_util {

using formation::Vec3;

inline std::vector<Vec3> pyramid() {
  return {{0.5, 0.5, 0.0}, {-0.5, 0.5, 0.0}, {-0.5, -0.5, 0.0}, {0.5, -0.5, 0.0}, {0.0, 0.0, 0.7}};
}

inline std::vector<Vec3> random_points(int n, std::mt19937_64& rng, double half = 1.0) {
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return pts;
}

inline Eigen::VectorXd stack(const std::vector<Vec3>& pts) {
  Eigen::VectorXd q(3 * pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) q.segment<3>(3 * i) = pts[i];
  return q;
}

}  // namespace testing_util

#endif
